import math

import numpy as np
import pytest

from sigtrace.geometry import RoundedSquare, boxes_for, GridSpec
from sigtrace.stochastic import (
    PiecewisePath,
    Seed,
    area_at,
    first_hit,
    refine,
    sample_brownian,
    simulate_area_diffusion,
    subpath,
)

BASE = Seed(909, 0)


def test_level_zero_shape():
    p = sample_brownian(BASE, 0)
    assert p.points.shape == (2, 2)
    assert np.all(p.points[0] == 0.0)
    assert p.times[0] == 0.0 and p.times[-1] == 1.0


def test_determinism_and_level_guard():
    a = sample_brownian(Seed(5, 3), 6)
    b = sample_brownian(Seed(5, 3), 6)
    assert np.array_equal(a.points, b.points)
    c = sample_brownian(Seed(5, 4), 6)
    assert not np.array_equal(a.points, c.points)
    with pytest.raises(ValueError):
        sample_brownian(BASE, 25)
    with pytest.raises(ValueError):
        sample_brownian(BASE, -1)


def test_terminal_second_moment():
    # E|W_1|^2 = 2; SE of the mean over 10^4 trials is 2/100
    vals = []
    for i in range(10_000):
        p = sample_brownian(Seed(909, i), 0)
        vals.append(float(np.sum(p.points[-1] ** 2)))
    mean = np.mean(vals)
    assert abs(mean - 2.0) < 3 * 0.02


def test_refine_restricts_exactly():
    p4 = sample_brownian(Seed(31, 2), 4)
    p7 = refine(p4, Seed(31, 2), 7)
    assert np.array_equal(p7.points[::8], p4.points)
    assert np.array_equal(p7.times[::8], p4.times)
    with pytest.raises(ValueError):
        refine(p4, Seed(31, 3), 7)  # wrong seed cannot restrict
    with pytest.raises(ValueError):
        refine(p4, Seed(31, 2), 4)


def test_midpoint_insertion_statistics():
    # inserted midpoints deviate from the neighbour average with variance 2^-n/4
    n = 4
    devs = []
    for i in range(2_500):
        coarse = sample_brownian(Seed(777, i), n)
        fine = refine(coarse, Seed(777, i), n + 1)
        mids = fine.points[1::2]
        avg = 0.5 * (coarse.points[:-1] + coarse.points[1:])
        devs.append(mids - avg)
    devs = np.concatenate(devs)          # (2500 * 2^n, 2) samples per coordinate
    var = devs.ravel().var()
    expect = 2.0 ** (-n) / 4.0
    se = expect * math.sqrt(2.0 / devs.size)
    assert abs(var - expect) < 4 * se
    assert abs(devs.ravel().mean()) < 4 * math.sqrt(expect / devs.size)


def test_scaling_law_variance():
    # c-rescaled unit-horizon paths match the increment variance of horizon c^2
    c = 0.5
    level = 6
    ratios = []
    for i in range(1_000):
        p = sample_brownian(Seed(55, i), level)
        inc = np.diff(c * p.points, axis=0)
        ratios.append(inc.var() / (c * c * 2.0 ** (-level)))
    mean = np.mean(ratios)
    assert abs(mean - 1.0) < 0.02


def test_area_diffusion_examples():
    diag = PiecewisePath([0, 1], [[0, 0], [1, 1]])
    assert simulate_area_diffusion(diag).points[-1, 2] == pytest.approx(0.5, abs=1e-15)
    right_up = PiecewisePath([0, 0.5, 1], [[0, 0], [1, 0], [1, 1]])
    up_right = PiecewisePath([0, 0.5, 1], [[0, 0], [0, 1], [1, 1]])
    assert simulate_area_diffusion(right_up).points[-1, 2] == pytest.approx(0.0, abs=1e-15)
    assert simulate_area_diffusion(up_right).points[-1, 2] == pytest.approx(1.0, abs=1e-15)


def test_area_diffusion_loops_green():
    # closed loops: the area coordinate equals minus the enclosed signed area
    rng = np.random.default_rng(3)
    for _ in range(20):
        k = rng.integers(3, 8)
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        pts = np.column_stack([np.cos(ang), np.sin(ang)]) * rng.uniform(0.5, 2.0)
        pts = np.vstack([pts, pts[:1]])
        times = np.linspace(0.0, 1.0, len(pts))
        path = PiecewisePath(times, pts)
        signed_area = 0.5 * float(np.sum(pts[:-1, 0] * pts[1:, 1] - pts[1:, 0] * pts[:-1, 1]))
        x3 = simulate_area_diffusion(path).points[-1, 2]
        assert abs(x3 + signed_area) < 1e-10


def test_area_at_mid_segment():
    path = PiecewisePath([0, 1], [[0, 0], [1, 1]])
    a3 = simulate_area_diffusion(path)
    # running integral of t dt is t^2/2
    for t in (0.25, 0.5, 0.9):
        assert area_at(a3, t) == pytest.approx(t * t / 2.0, abs=1e-15)


def test_first_hit_analytic_and_none():
    g = GridSpec(0.1, 0.01)
    H1 = boxes_for(g, (1, 0))[0]
    path = PiecewisePath([0, 1], [[0, 0], [0.2, 0.0]])
    hit = first_hit(path, H1)
    assert hit is not None and abs(hit[0] - 0.275) < 1e-12
    # already past the box with no return
    gone = PiecewisePath([0, 1], [[0.3, 0.0], [0.5, 0.0]])
    assert first_hit(gone, H1) is None
    # from_time after the crossing means the exit is found instead
    h2 = first_hit(path, H1, from_time=0.3)
    assert h2 is not None and abs(h2[1][0] - 0.145) < 1e-12


def test_first_hit_refinement_stability():
    # refinement moves hit times very little typically, with a heavy tail when
    # a finer level reveals an earlier crossing; the tail fraction is reported
    g = GridSpec(0.2)
    box = boxes_for(g, (1, 0))[0]
    diffs = []
    for i in range(150):
        p8 = sample_brownian(Seed(2024, i), 8)
        p10 = refine(p8, Seed(2024, i), 10)
        h8 = first_hit(p8, box)
        h10 = first_hit(p10, box)
        if h8 is not None and h10 is not None:
            diffs.append(abs(h8[0] - h10[0]))
    diffs = np.array(diffs)
    assert len(diffs) > 50
    print(f"hit-time refinement: median {np.median(diffs):.2e}, "
          f"frac within 2^-4: {np.mean(diffs < 2.0 ** -4):.3f}")
    assert np.median(diffs) < 2.0 ** (-8)
    assert np.mean(diffs < 2.0 ** (-4)) >= 0.9


def test_subpath_and_validation():
    p = sample_brownian(Seed(1, 1), 5)
    s = subpath(p, 0.25, 0.75)
    assert s.times[0] == 0.0 and s.times[-1] == pytest.approx(0.5)
    assert np.allclose(s.points[0], p.points[8])  # 0.25 is a grid time at level 5
    with pytest.raises(ValueError):
        subpath(p, 0.9, 0.2)
    with pytest.raises(ValueError):
        PiecewisePath([0.1, 1.0], [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        PiecewisePath([0.0, 0.0], [[0, 0], [1, 1]])


def test_path_serialization_roundtrip():
    p = sample_brownian(Seed(12, 7), 4)
    q = PiecewisePath.from_json(p.to_json())
    assert np.array_equal(p.points, q.points)
    assert q.meta["level"] == 4 and tuple(q.meta["seed"]) == (12, 7)
