import math

import numpy as np
import pytest

from sigtrace.geometry import (
    GridSpec,
    RoundedSquare,
    boxes_for,
    contains,
    gauge,
    gauge_many,
    membership_defect,
    segment_box_intervals,
    segment_first_hit,
)

UNIT_G = RoundedSquare((0.0, 0.0), 0.5, 0.01)


def test_contains_center_and_edges():
    assert contains(UNIT_G, (0.0, 0.0))
    assert not contains(UNIT_G, (0.5, 0.5))  # corner cut off by rounding
    assert contains(UNIT_G, (0.5, 0.0))      # closed set: edge midpoint counts


def test_contains_monotone_under_scaling():
    p = (0.31, 0.4)
    assert not contains(UNIT_G, (0.6, 0.0))
    for factor in (1.0, 1.5, 2.0):
        if contains(UNIT_G.scaled(factor), p):
            assert contains(UNIT_G.scaled(factor * 1.2), p)


def test_invalid_box_rejected():
    with pytest.raises(ValueError):
        RoundedSquare((0, 0), 0.5, 0.5)
    with pytest.raises(ValueError):
        RoundedSquare((0, 0), -1.0, 0.0)


def test_gauge_edge_and_origin():
    assert abs(gauge((0.25, 0.0), UNIT_G) - 0.5) < 1e-11
    assert gauge((0.0, 0.0), UNIT_G) == 0.0


def test_gauge_diagonal_against_closed_form():
    # independent oracle: on the diagonal the boundary point solves
    # sqrt(2) * 0.45 * (1 - lam) = 0.05 * lam for the corner arc
    sq = RoundedSquare((0.0, 0.0), 0.5, 0.05)
    lam_closed = (0.45 * math.sqrt(2.0)) / (0.05 + 0.45 * math.sqrt(2.0))
    lam = gauge((0.45, 0.45), sq)
    assert abs(lam - lam_closed) < 1e-10
    assert abs(lam - 0.92718) < 5e-5
    # cross-check: the diagonal boundary point sits at this distance from 0
    assert abs(math.hypot(0.45, 0.45) / lam - 0.68640) < 5e-5


def test_gauge_homogeneity():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.6, 0.6, size=(200, 2))
    sq = RoundedSquare((0.0, 0.0), 0.5, 0.03)
    g1 = gauge_many(pts, sq.half_width, sq.corner_radius)
    for c in (0.5, 2.0, 3.7):
        gc = gauge_many(c * pts, sq.half_width, sq.corner_radius)
        assert np.max(np.abs(gc - c * g1)) < 1e-10


def test_gauge_membership_consistency():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-0.7, 0.7, size=(500, 2))
    sq = RoundedSquare((0.0, 0.0), 0.5, 0.05)
    lam = gauge_many(pts, sq.half_width, sq.corner_radius)
    inside = np.array([contains(sq, p) for p in pts])
    assert np.all((lam <= 1.0 + 1e-9) == inside)


def test_boxes_for_half_widths():
    g = GridSpec(0.1, 0.01)
    H, K, Z, V = boxes_for(g, (0, 0))
    assert abs(H.half_width - 0.045) < 1e-15
    assert abs(K.half_width - 0.045025) < 1e-15
    assert abs(Z.half_width - 0.04505) < 1e-15
    assert abs(V.half_width - 0.05) < 1e-15
    # translation moves centers only
    H1, K1, Z1, V1 = boxes_for(g, (1, 0))
    for b in (H1, K1, Z1, V1):
        assert b.center == (0.1, 0.0)
    assert H.half_width < K.half_width < Z.half_width < V.half_width


def test_gap_magnitudes():
    for eps, phi in [(0.1, 0.01), (0.2, 0.004), (0.25, 0.0625)]:
        g = GridSpec(eps, phi)
        h_h, h_k, h_z, h_v = g.half_widths()
        assert abs((h_v - h_z) - eps * eps * (1 - phi) / 2) < 1e-15
        assert abs((h_k - h_h) - eps * eps * phi / 4) < 1e-16


def test_nesting_on_sample_grid():
    g = GridSpec(0.1, 0.01)
    H, K, Z, V = boxes_for(g, (0, 0))
    xs = np.linspace(-0.06, 0.06, 100)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    flags = []
    for b in (H, K, Z, V):
        flags.append(membership_defect(pts[:, 0], pts[:, 1], b.half_width, b.corner_radius) <= 0)
    in_h, in_k, in_z, in_v = flags
    assert np.all(~in_h | in_k), "H subset of K"
    assert np.all(~in_k | in_z), "K subset of Z"
    assert np.all(~in_z | in_v), "Z subset of V"


def test_segment_first_hit_analytic():
    g = GridSpec(0.1, 0.01)
    H1 = boxes_for(g, (1, 0))[0]
    hit = segment_first_hit((0.0, 0.0), (0.2, 0.0), H1, "enter")
    assert hit is not None
    t, p = hit
    assert abs(t - 0.275) < 1e-12
    assert abs(p[0] - 0.055) < 1e-12 and abs(p[1]) < 1e-15


def test_segment_first_hit_conventions():
    g = GridSpec(0.1, 0.01)
    H1 = boxes_for(g, (1, 0))[0]
    # fully outside
    assert segment_first_hit((0.4, 0.4), (0.5, 0.5), H1, "enter") is None
    # starting inside, enter mode yields none
    assert segment_first_hit((0.1, 0.0), (0.3, 0.0), H1, "enter") is None
    # exit from inside
    hit = segment_first_hit((0.1, 0.0), (0.3, 0.0), H1, "exit")
    assert hit is not None and abs(hit[1][0] - 0.145) < 1e-12
    # still inside at the end: no exit
    assert segment_first_hit((0.1, 0.0), (0.12, 0.0), H1, "exit") is None
    with pytest.raises(ValueError):
        segment_first_hit((0.1, 0.0), (0.1, 0.0), H1, "enter")


def test_segment_hits_against_dense_sampling():
    """Oracle: dense membership sampling along 1000 random segments."""
    rng = np.random.default_rng(42)
    sq = RoundedSquare((0.0, 0.0), 0.1, 0.004)
    n_seg, n_samp = 1000, 100_000
    a = rng.uniform(-0.3, 0.3, size=(n_seg, 2))
    b = rng.uniform(-0.3, 0.3, size=(n_seg, 2))
    ts = np.linspace(0.0, 1.0, n_samp)
    t_in, t_out = segment_box_intervals(a, b, sq.half_width, sq.corner_radius)
    for i in range(n_seg):
        px = a[i, 0] + ts * (b[i, 0] - a[i, 0])
        py = a[i, 1] + ts * (b[i, 1] - a[i, 1])
        inside = membership_defect(px, py, sq.half_width, sq.corner_radius) <= 0
        if not inside.any():
            # sampling can only miss intervals shorter than the sample spacing
            assert not np.isfinite(t_in[i]) or (t_out[i] - t_in[i]) < 2.5 / n_samp
            continue
        first, last = np.argmax(inside), n_samp - 1 - np.argmax(inside[::-1])
        assert np.isfinite(t_in[i])
        assert abs(ts[first] - t_in[i]) < 2.0 / n_samp
        assert abs(ts[last] - t_out[i]) < 2.0 / n_samp


def test_grid_spec_validation_and_regime():
    with pytest.raises(ValueError):
        GridSpec(0.6)
    with pytest.raises(ValueError):
        GridSpec(0.1, 0.2)  # phi must stay below epsilon
    g = GridSpec(0.1)
    assert g.phi == pytest.approx(0.01)
    assert g.regime() == "relaxed"
    tight = GridSpec(0.1, 1e-12, beta=11.0, alpha_note=10.0)
    assert tight.regime() == "tight"


def test_box_serialization_roundtrip():
    sq = RoundedSquare((0.3, -0.2), 0.05, 0.001)
    assert RoundedSquare.from_json(sq.to_json()) == sq
