import math

import numpy as np
import pytest

from sigtrace.forms import (
    BumpForm,
    OneForm,
    approximate_form_by_polynomials,
    bump_form,
    coordinate_form,
    iterated_form_integral,
    line_integral,
    smooth_step,
)
from sigtrace.geometry import GridSpec, RoundedSquare
from sigtrace.signature import path_signature
from sigtrace.stochastic import PiecewisePath, Seed, sample_brownian

GRID = GridSpec(0.1, 0.01)


def test_smooth_step_values():
    assert smooth_step(-1.0) == 0.0
    assert smooth_step(2.0) == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5, abs=1e-15)
    t = np.linspace(-0.5, 1.5, 101)
    v = smooth_step(t)
    assert np.all(np.diff(v) >= 0.0)


def test_bump_plateau_exact():
    phi0 = bump_form(GRID, (0, 0))
    rng = np.random.default_rng(5)
    h_k = phi0.h_k
    pts = rng.uniform(-0.6 * h_k, 0.6 * h_k, size=(1000, 2))
    vals = phi0.eval_f1(pts)
    assert np.array_equal(vals, pts[:, 1])  # exactly x2 on the plateau
    assert np.all(phi0.eval_f2(pts) == 0.0)


def test_bump_translation_and_support():
    z = (2, -1)
    phi = bump_form(GRID, z)
    delta = 0.013
    p_in = np.array([[0.2, -0.1 + delta]])
    assert phi.eval_f1(p_in)[0] == pytest.approx(delta, abs=1e-15)
    outside = np.array([[0.2 + 0.06, -0.1], [0.0, 0.0], [1.0, 1.0]])
    assert np.all(phi.eval_f1(outside) == 0.0)


def test_disjoint_supports():
    phi0 = bump_form(GRID, (0, 0))
    phi1 = bump_form(GRID, (1, 0))
    rng = np.random.default_rng(6)
    pts = rng.uniform(-0.2, 0.3, size=(5000, 2))
    assert np.max(np.abs(phi0.eval_f1(pts) * phi1.eval_f1(pts))) == 0.0


def test_bump_band_gradient_bounded():
    # finite differences across the cutoff band stay of order plateau/bandwidth
    g = GridSpec(0.2, 0.03)
    phi = bump_form(g, (0, 0))
    band = phi.h_z - phi.h_k
    xs = np.linspace(phi.h_k - 2 * band, phi.h_z + 2 * band, 400)
    pts = np.column_stack([xs, np.full_like(xs, 0.01)])
    vals = phi.eval_f1(pts)
    grad = np.abs(np.diff(vals) / np.diff(xs))
    assert np.max(grad) < 20.0 * phi.h_k / band


def test_line_integral_axis_and_outside():
    phi0 = bump_form(GRID, (0, 0))
    axis = PiecewisePath([0, 1], [[-0.2, 0.0], [0.2, 0.0]])
    assert line_integral(axis, phi0) == 0.0
    away = PiecewisePath([0, 1], [[0.3, 0.3], [0.5, 0.5]])
    assert line_integral(away, phi0) == 0.0


def test_line_integral_green_rectangle():
    # CCW rectangle strictly inside the plateau: integral of x2 dx1 = -area
    phi0 = bump_form(GRID, (0, 0))
    w, h = 0.015, 0.02
    rect = PiecewisePath(
        [0, 0.25, 0.5, 0.75, 1],
        [[-w, -h], [w, -h], [w, h], [-w, h], [-w, -h]],
    )
    val = line_integral(rect, phi0)
    assert val == pytest.approx(-(2 * w) * (2 * h), abs=1e-12)


def test_line_integral_linearity_and_additivity():
    phi0 = bump_form(GRID, (0, 0))
    fsum = OneForm(lambda p: 2.0 * phi0.eval_f1(p), lambda p: np.zeros(len(p)), support=phi0.support)
    path = PiecewisePath([0, 0.5, 1], [[-0.03, -0.02], [0.01, 0.03], [0.05, -0.01]])
    assert line_integral(path, fsum) == pytest.approx(2 * line_integral(path, phi0), abs=1e-12)
    first = PiecewisePath([0, 1], path.points[:2])
    second = PiecewisePath([0, 1], path.points[1:])
    total = line_integral(first, phi0) + line_integral(second, phi0)
    assert total == pytest.approx(line_integral(path, phi0), abs=1e-12)


def test_quadrature_refinement_stable():
    # crossing the cutoff band: halving the tolerance barely moves the value
    phi0 = bump_form(GRID, (0, 0))
    path = PiecewisePath([0, 1], [[-0.08, 0.012], [0.08, 0.037]])
    v1 = line_integral(path, phi0, rtol=1e-10)
    v2 = line_integral(path, phi0, rtol=1e-12)
    assert abs(v1 - v2) < 1e-9 * max(1.0, abs(v1))


def test_iterated_reduces_to_line_integral():
    phi0 = bump_form(GRID, (0, 0))
    path = PiecewisePath([0, 0.5, 1], [[-0.03, -0.02], [0.01, 0.03], [0.05, -0.01]])
    assert iterated_form_integral(path, [phi0]) == pytest.approx(line_integral(path, phi0), rel=1e-9)


def test_iterated_wrong_order_is_zero():
    # support of the second form is only visited before the first: integrand vanishes
    phi0 = bump_form(GRID, (0, 0))
    phi1 = bump_form(GRID, (3, 0))
    path = PiecewisePath([0, 0.4, 1], [[0.3, 0.001], [0.0, 0.013], [-0.2, 0.05]])
    assert iterated_form_integral(path, [phi0, phi1]) == 0.0


def test_iterated_matches_signature_coefficients():
    f1, f2 = coordinate_form(1), coordinate_form(2)
    L = PiecewisePath([0, 0.5, 1], [[0, 0], [1, 0], [1, 1]])
    assert iterated_form_integral(L, [f1, f2]) == pytest.approx(1.0, rel=1e-10)
    for i in range(6):
        path = sample_brownian(Seed(61, i), 5)
        sig = path_signature(path, 3)
        val = iterated_form_integral(path, [f1, f2])
        assert abs(val - sig.coeff((1, 2))) <= 1e-8 * max(1.0, abs(sig.coeff((1, 2))))
        val3 = iterated_form_integral(path, [f2, f1, f2])
        assert abs(val3 - sig.coeff((2, 1, 2))) <= 1e-8 * max(1.0, abs(sig.coeff((2, 1, 2))))


def test_iterated_same_form_square_identity():
    # for any single form, the twice-iterated integral is half the square
    phi0 = bump_form(GRID, (0, 0))
    raw = sample_brownian(Seed(3, 1), 6)
    path = PiecewisePath(raw.times, 0.04 * raw.points)
    v1 = line_integral(path, phi0)
    v2 = iterated_form_integral(path, [phi0, phi0])
    assert v2 == pytest.approx(v1 * v1 / 2.0, rel=1e-8, abs=1e-18)


def test_iterated_trajectory_emission():
    f1, f2 = coordinate_form(1), coordinate_form(2)
    L = PiecewisePath([0, 0.5, 1], [[0, 0], [1, 0], [1, 1]])
    val, traj = iterated_form_integral(L, [f1, f2], emit_trajectory=True)
    assert val == pytest.approx(traj["levels"][-1, 1], rel=1e-12)
    assert traj["times"][0] == 0.0 and traj["times"][-1] == 1.0
    assert np.all(np.diff(traj["times"]) >= 0)
    with pytest.raises(ValueError):
        iterated_form_integral(L, [])


def test_polynomial_fit_of_polynomial_form():
    lin = OneForm(lambda p: p[:, 1], lambda p: np.zeros(len(p)))
    window = RoundedSquare((0.0, 0.0), 0.5, 0.0)
    _, err = approximate_form_by_polynomials(lin, 2, window)
    assert err < 1e-10


def test_polynomial_fit_degree_comparison():
    g = GridSpec(0.24, 0.23)
    phi = bump_form(g, (0, 0))
    window = RoundedSquare((0.0, 0.0), 1.05 * phi.h_z, 0.0)
    p4, e4 = approximate_form_by_polynomials(phi, 4, window)
    p12, e12 = approximate_form_by_polynomials(phi, 12, window)
    assert e12 < e4
    assert not p12.fit_report["ill_conditioned"]
    with pytest.raises(ValueError):
        approximate_form_by_polynomials(phi, 31, window)


def test_polynomial_approximants_integral_convergence():
    # fixed seeds: the line integral under the fit approaches the true value
    g = GridSpec(0.24, 0.23)
    phi = bump_form(g, (0, 0))
    h_z = phi.h_z
    window = RoundedSquare((0.0, 0.0), 1.6 * h_z, 0.0)
    degrees = (2, 18)
    fits = {d: approximate_form_by_polynomials(phi, d, window)[0] for d in degrees}
    errs = {d: [] for d in degrees}
    for i in range(6):
        raw = sample_brownian(Seed(11, i), 7)
        pts = raw.points * (1.3 * h_z / max(1e-9, float(np.abs(raw.points).max())))
        path = PiecewisePath(raw.times, pts)
        true = line_integral(path, phi)
        for d in degrees:
            errs[d].append(abs(line_integral(path, fits[d]) - true))
    assert np.mean(errs[18]) < np.mean(errs[2])


def test_bump_descriptor():
    phi = bump_form(GRID, (1, -2))
    d = phi.descriptor
    assert d["kind"] == "bump" and d["z"] == [1, -2]
    assert d["epsilon"] == GRID.epsilon and d["phi"] == GRID.phi
    rebuilt = bump_form(GridSpec(d["epsilon"], d["phi"], d["beta"]), d["z"])
    pts = np.array([[0.1, -0.19], [0.1, -0.21]])
    assert np.array_equal(rebuilt.eval_f1(pts), phi.eval_f1(pts))
