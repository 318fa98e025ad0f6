"""Hitting-time traces of a polyline through the lattice box families.

A trace walks the path and records, segment-exactly, each first entry into a
family box H_z (or Z_z) with an index different from the current one.  The
engine enumerates candidate (segment, cell) pairs from bounding boxes, computes
the exact in-box parameter interval of every pair, and replays the resulting
enter events through a tiny state machine.  Merged per-box visit intervals
feed the signature-table quadrature downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GridSpec, boxes_for, contains, membership_defect, segment_box_intervals
from .stochastic import PiecewisePath

__all__ = [
    "LatticeWord",
    "HittingTrace",
    "trace",
    "polygon",
    "coincidence",
    "family_intervals",
    "box_visits",
]

_CHUNK = 1 << 18


@dataclass(frozen=True)
class LatticeWord:
    """Ordered sequence of lattice cells; admissible when neighbours differ."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((int(z[0]), int(z[1])) for z in self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def admissible(self) -> bool:
        return all(a != b for a, b in zip(self.entries, self.entries[1:]))

    def to_json(self) -> list:
        return [[z[0], z[1]] for z in self.entries]


@dataclass
class HittingTrace:
    """Hit times and visited cells of one family; M is the completed-hit count."""

    family: str
    grid: GridSpec
    times: np.ndarray
    word: LatticeWord
    provenance: tuple = ()

    @property
    def M(self) -> int:
        return len(self.word) - 1

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "epsilon": self.grid.epsilon,
            "times": self.times.tolist(),
            "word": self.word.to_json(),
            "M": self.M,
        }


def _path_fingerprint(path: PiecewisePath) -> tuple:
    pts = path.points
    return (len(path.times), float(path.times[-1]), float(pts[-1, 0]), float(pts[-1, 1]), float(pts[len(pts) // 2, 0]))


def _segment_cell_pairs(points: np.ndarray, eps: float, reach: float):
    """Candidate (segment, cell) pairs whose box could meet the segment."""
    a = points[:-1]
    b = points[1:]
    lox = np.ceil((np.minimum(a[:, 0], b[:, 0]) - reach) / eps).astype(np.int64)
    hix = np.floor((np.maximum(a[:, 0], b[:, 0]) + reach) / eps).astype(np.int64)
    loy = np.ceil((np.minimum(a[:, 1], b[:, 1]) - reach) / eps).astype(np.int64)
    hiy = np.floor((np.maximum(a[:, 1], b[:, 1]) + reach) / eps).astype(np.int64)
    nx = np.maximum(hix - lox + 1, 0)
    ny = np.maximum(hiy - loy + 1, 0)
    counts = nx * ny
    total = int(counts.sum())
    seg = np.repeat(np.arange(len(a)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(total) - np.repeat(starts, counts)
    zx = lox[seg] + k // np.maximum(ny[seg], 1)
    zy = loy[seg] + k % np.maximum(ny[seg], 1)
    return seg, zx, zy


def family_intervals(path: PiecewisePath, g: GridSpec, family: str):
    """Exact in-box parameter intervals of every (segment, cell) encounter.

    Returns a dict of parallel arrays: seg, z (n,2), u_in, u_out (segment
    parameters), t_in, t_out (global times), sorted by entry time.
    """
    h, r = g.family_geometry(family)
    pts = path.points[:, :2]
    seg, zx, zy = _segment_cell_pairs(pts, g.epsilon, h)

    u_in = np.empty(len(seg))
    u_out = np.empty(len(seg))
    for lo in range(0, len(seg), _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, len(seg)))
        A = pts[seg[sl]].copy()
        A[:, 0] -= g.epsilon * zx[sl]
        A[:, 1] -= g.epsilon * zy[sl]
        B = pts[seg[sl] + 1].copy()
        B[:, 0] -= g.epsilon * zx[sl]
        B[:, 1] -= g.epsilon * zy[sl]
        u_in[sl], u_out[sl] = segment_box_intervals(A, B, h, r)

    keep = np.isfinite(u_in) & (u_out > u_in)
    seg, zx, zy, u_in, u_out = seg[keep], zx[keep], zy[keep], u_in[keep], u_out[keep]
    t0 = path.times[seg]
    dt = path.times[seg + 1] - t0
    t_in = t0 + u_in * dt
    t_out = t0 + u_out * dt
    order = np.argsort(t_in, kind="stable")
    return {
        "seg": seg[order],
        "z": np.column_stack([zx[order], zy[order]]),
        "u_in": u_in[order],
        "u_out": u_out[order],
        "t_in": t_in[order],
        "t_out": t_out[order],
    }


def family_enter_events(intervals: dict):
    """Enter events (interval opens strictly inside a segment) in time order."""
    opens = intervals["u_in"] > 0.0
    return intervals["t_in"][opens], intervals["z"][opens]


def trace(path: PiecewisePath, g: GridSpec, family: str) -> HittingTrace:
    """Hitting trace through one family: first entries into boxes with new index.

    The path must start inside the (0,0) box of the family; the initial cell
    produces no time-0 event.  A hit exactly at the horizon still counts.
    """
    box0 = boxes_for(g, (0, 0))["HKZV".index(family)]
    if not contains(box0, path.points[0, :2]):
        raise ValueError("path must start inside the (0,0) box of the family")
    intervals = family_intervals(path, g, family)
    times, cells = family_enter_events(intervals)
    cur = (0, 0)
    hit_t = []
    word = [cur]
    for t, z in zip(times, cells):
        z = (int(z[0]), int(z[1]))
        if z != cur:
            cur = z
            hit_t.append(float(t))
            word.append(z)
    return HittingTrace(family, g, np.array(hit_t), LatticeWord(tuple(word)), _path_fingerprint(path))


def polygon(tr: HittingTrace) -> PiecewisePath:
    """The lattice polygon: vertex eps*n_k at time tau_k, constant after the last hit."""
    eps = tr.grid.epsilon
    verts = [(eps * z[0], eps * z[1]) for z in tr.word]
    times = np.concatenate([[0.0], tr.times])
    if times[-1] < 1.0:
        times = np.concatenate([times, [1.0]])
        verts = verts + [verts[-1]]
    return PiecewisePath(times, np.array(verts), {"kind": "trace-polygon", "family": tr.family, "epsilon": eps})


def coincidence(t_h: HittingTrace, t_z: HittingTrace) -> bool:
    """True iff both traces hit the same count of boxes in the same order."""
    if t_h.provenance != t_z.provenance or t_h.grid != t_z.grid:
        raise ValueError("traces come from different paths or grids")
    return t_h.M == t_z.M and t_h.word.entries == t_z.word.entries


@dataclass
class BoxVisits:
    """Merged in-box intervals of one family along a path, in time order.

    Parallel arrays over visits: cells (m,2), start/end times, and slices into
    the interval arrays (seg/u_in/u_out) that make up each visit.
    """

    grid: GridSpec
    family: str
    cells: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    seg: np.ndarray
    u_in: np.ndarray
    u_out: np.ndarray
    visit_lo: np.ndarray
    visit_hi: np.ndarray


def box_visits(path: PiecewisePath, g: GridSpec, family: str = "Z") -> BoxVisits:
    """Group the per-segment intervals into maximal visits of each box.

    Two consecutive intervals of the same cell merge when the path carries the
    box across a segment boundary (previous interval closes at parameter 1,
    next opens at 0 on the following segment).
    """
    iv = family_intervals(path, g, family)
    seg, z, u_in, u_out = iv["seg"], iv["z"], iv["u_in"], iv["u_out"]
    t_in, t_out = iv["t_in"], iv["t_out"]
    n = len(seg)
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return BoxVisits(g, family, np.empty((0, 2), dtype=np.int64), np.empty(0), np.empty(0),
                         empty, np.empty(0), np.empty(0), empty, empty)
    same_cell = np.all(z[1:] == z[:-1], axis=1)
    joined = same_cell & (seg[1:] == seg[:-1] + 1) & (u_out[:-1] >= 1.0) & (u_in[1:] <= 0.0)
    starts = np.concatenate([[True], ~joined])
    visit_lo = np.nonzero(starts)[0]
    visit_hi = np.concatenate([visit_lo[1:], [n]])
    return BoxVisits(
        grid=g,
        family=family,
        cells=z[visit_lo],
        t_start=t_in[visit_lo],
        t_end=t_out[visit_hi - 1],
        seg=seg,
        u_in=u_in,
        u_out=u_out,
        visit_lo=visit_lo,
        visit_hi=visit_hi,
    )
