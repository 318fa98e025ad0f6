import numpy as np
import pytest

from sigtrace.geometry import GridSpec, boxes_for, contains
from sigtrace.stochastic import PiecewisePath, Seed, refine, sample_brownian
from sigtrace.tracer import LatticeWord, box_visits, coincidence, polygon, trace

GRID = GridSpec(0.1, 0.01)
STRAIGHT = PiecewisePath([0, 1], [[0, 0], [0.3, 0.0]])


def test_straight_path_word_and_times():
    t_h = trace(STRAIGHT, GRID, "H")
    assert t_h.word.entries == ((0, 0), (1, 0), (2, 0), (3, 0))
    assert t_h.M == 3
    # hit x-coordinates are the left edges of the boxes
    xs = 0.3 * t_h.times
    assert np.allclose(xs, [0.055, 0.155, 0.255], atol=1e-12)


def test_stay_inside_is_trivial_trace():
    quiet = PiecewisePath([0, 1], [[0, 0], [0.01, 0.01]])
    t = trace(quiet, GRID, "H")
    assert t.M == 0 and t.word.entries == ((0, 0),)
    assert polygon(t).points.tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_trace_requires_origin_start():
    bad = PiecewisePath([0, 1], [[0.3, 0.3], [0.5, 0.5]])
    with pytest.raises(ValueError):
        trace(bad, GRID, "H")


def test_word_admissibility_and_nesting():
    for i in range(5):
        path = sample_brownian(Seed(404, i), 11)
        t_h = trace(path, GRID, "H")
        t_z = trace(path, GRID, "Z")
        assert t_h.word.admissible and t_z.word.admissible
        assert t_h.M <= t_z.M
        m = min(t_h.M, t_z.M)
        # the larger box is always hit no later, pairwise
        assert np.all(t_z.times[:m] <= t_h.times[:m] + 1e-15)


def test_grazing_breaks_coincidence():
    # spike that enters the Z shell of cell (1,1) without reaching its H box
    h_h, _ = GRID.family_geometry("H")
    h_k, _ = GRID.family_geometry("K")
    h_z, _ = GRID.family_geometry("Z")
    y_star = 0.1 - (h_z + h_k) / 2.0  # inside Z_(1,1), outside K and H
    H11, K11, Z11, _ = boxes_for(GRID, (1, 1))
    assert contains(Z11, (0.1, y_star))
    assert not contains(K11, (0.1, y_star)) and not contains(H11, (0.1, y_star))
    spike = PiecewisePath(
        [0, 0.3, 0.6, 0.8, 1.0],
        [[0, 0], [0.1, 0.0], [0.1, y_star], [0.1, 0.0], [0.0, 0.0]],
    )
    t_h = trace(spike, GRID, "H")
    t_z = trace(spike, GRID, "Z")
    assert t_h.word.entries == ((0, 0), (1, 0), (0, 0))
    assert t_z.word.entries == ((0, 0), (1, 0), (1, 1), (1, 0), (0, 0))
    assert not coincidence(t_h, t_z)


def test_coincidence_identical_and_provenance():
    t1 = trace(STRAIGHT, GRID, "H")
    t2 = trace(STRAIGHT, GRID, "Z")
    assert coincidence(t1, t2)
    other = trace(PiecewisePath([0, 1], [[0, 0], [0.31, 0.0]]), GRID, "Z")
    with pytest.raises(ValueError):
        coincidence(t1, other)


def test_polygon_straight_line():
    t_h = trace(STRAIGHT, GRID, "H")
    poly = polygon(t_h)
    assert np.allclose(poly.points, [[0, 0], [0.1, 0], [0.2, 0], [0.3, 0], [0.3, 0]], atol=1e-12)
    assert poly.times[-1] == 1.0
    # vertices on the lattice
    assert np.allclose(poly.points / GRID.epsilon, np.round(poly.points / GRID.epsilon), atol=1e-9)


def test_polygon_two_cell_word():
    tr = trace(PiecewisePath([0, 1], [[0, 0], [0.13, 0.0]]), GRID, "H")
    assert tr.word.entries == ((0, 0), (1, 0))
    poly = polygon(tr)
    assert np.allclose(poly.points[:2], [[0, 0], [0.1, 0]], atol=1e-12)


def test_box_visits_collapse_to_trace_word():
    path = sample_brownian(Seed(5, 2), 12)
    bv = box_visits(path, GRID, "Z")
    t_z = trace(path, GRID, "Z")
    collapsed = [tuple(bv.cells[0])]
    for c in map(tuple, bv.cells[1:]):
        if c != collapsed[-1]:
            collapsed.append(c)
    assert tuple(collapsed) == t_z.word.entries
    # visits are disjoint and time ordered
    assert np.all(bv.t_start[1:] >= bv.t_end[:-1] - 1e-15)
    assert np.all(bv.t_end > bv.t_start - 1e-15)


def test_trace_refinement_stability_reported():
    g = GridSpec(0.2)
    same = 0
    n = 30
    for i in range(n):
        p10 = sample_brownian(Seed(606, i), 10)
        p12 = refine(p10, Seed(606, i), 12)
        w10 = trace(p10, g, "H").word.entries
        w12 = trace(p12, g, "H").word.entries
        same += w10 == w12
    print(f"trace refinement stability: {same}/{n} words unchanged from level 10 to 12")
    # refining reveals extra crossings; most words change at coarse levels,
    # which is exactly why the instability fraction is reported, not asserted
    assert same >= 0


def test_lattice_word_admissibility_flag():
    assert LatticeWord(((0, 0), (1, 0), (0, 0))).admissible
    assert not LatticeWord(((0, 0), (0, 0))).admissible
    assert LatticeWord(((0, 0),)).to_json() == [[0, 0]]


def test_trace_serialization():
    t_h = trace(STRAIGHT, GRID, "H")
    blob = t_h.to_json()
    assert blob["family"] == "H" and blob["M"] == 3
    assert blob["word"][0] == [0, 0] and blob["epsilon"] == 0.1
