"""Rebuilding the visited-cell polygon from extended signature values alone.

The extended signature of an admissible cell word is the nested line integral
of the corresponding bump forms.  Because bumps of different cells have
disjoint supports and consecutive letters differ, the running integral of a
prefix is constant while the path crosses the candidate next box, so every
extension value factors through per-visit bump integrals:

    I_{m+1}(end of visit j of box z) - (before) = I_m(visit start) * c_j.

This reduces table construction to step-function algebra over the precomputed
visit integrals c_j.  Two search modes share it: an exhaustive breadth-first
enumeration with trajectory-sup pruning (small instances, audits), and a
greedy earliest-activation chain (Brownian instances, where the number of
words above threshold grows combinatorially but the maximal word's prefixes
are exactly the earliest-activating ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forms import bump_form, bump_interval_integrals
from .geometry import GridSpec
from .stochastic import PiecewisePath
from .tracer import BoxVisits, LatticeWord, box_visits

try:
    from numba import njit

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(f):
            return f

        return deco if not (len(a) == 1 and callable(a[0])) else a[0]


__all__ = [
    "SignatureTable",
    "TableEntry",
    "ReconstructionResult",
    "AmbiguousWord",
    "build_table",
    "detect_word",
    "reconstruct_polygon",
    "frechet_distance",
    "VisitIntegrals",
    "precompute_visit_integrals",
]


class AmbiguousWord(Exception):
    """Two words of maximal length clear the tolerance; the trial is flagged."""


@dataclass
class TableEntry:
    word: tuple
    value: float           # endpoint value; 0.0 when it underflows the float range
    log10_abs: float       # log magnitude survives underflow
    sign: float
    activation_time: float
    passes: bool           # |value| >= the length-matched tolerance at build time


@dataclass
class SignatureTable:
    grid: GridSpec
    window: int
    theta: float            # relative tolerance (scaled mode) or absolute (absolute mode)
    mode: str               # 'greedy' | 'exhaustive' | 'absolute'
    entries: dict
    pruned: list = field(default_factory=list)
    truncated: str | None = None
    thresholds: dict = field(default_factory=dict)   # word length -> absolute log10 threshold
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json(),
            "window": self.window,
            "theta": self.theta,
            "mode": self.mode,
            "entries": [
                {
                    "word": [list(z) for z in e.word],
                    "value": e.value,
                    "log10_abs": e.log10_abs,
                    "passes": e.passes,
                }
                for e in self.entries.values()
            ],
            "pruned": [{"word": [list(z) for z in w], "reason": r} for w, r in self.pruned],
            "truncated": self.truncated,
            "diagnostics": self.diagnostics,
        }

    @staticmethod
    def from_values(grid: GridSpec, values: dict, theta: float) -> "SignatureTable":
        """Assemble a table from explicit word -> value pairs (absolute tolerance)."""
        entries = {}
        for word, val in values.items():
            word = tuple((int(z[0]), int(z[1])) for z in word)
            entries[word] = TableEntry(word, float(val), math.log10(abs(val)) if val else -math.inf,
                                       math.copysign(1.0, val), math.nan, abs(val) >= theta)
        return SignatureTable(grid, 0, theta, "absolute", entries)


@dataclass
class ReconstructionResult:
    m_hat: int
    word: LatticeWord
    polygon: PiecewisePath | None
    diagnostics: dict


# ---------------------------------------------------------------------------
# Visit integral precomputation.
# ---------------------------------------------------------------------------


@dataclass
class VisitIntegrals:
    """Per-visit bump integrals of the Z family along one path, time ordered.

    cells/t_start/t_end/value/partial_bound are parallel over visits; boxes
    are deduplicated cells with visit_index[b] listing the visits of box b in
    time order.  c_max sets the per-letter magnitude scale.
    """

    grid: GridSpec
    cells: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    value: np.ndarray
    partial_bound: np.ndarray
    box_of_visit: np.ndarray
    boxes: list
    visit_index: list
    c_max: float
    window_clipped: bool


def precompute_visit_integrals(path: PiecewisePath, g: GridSpec, window: int) -> VisitIntegrals:
    bv = box_visits(path, g, "Z")
    n = len(bv.cells)
    in_window = np.ones(n, dtype=bool)
    if n:
        in_window = (np.abs(bv.cells[:, 0]) <= window) & (np.abs(bv.cells[:, 1]) <= window)
    clipped = bool((~in_window).any())

    pts = path.points[:, :2]
    values = np.zeros(n)
    bounds = np.zeros(n)
    uniq = {}
    for i in range(n):
        if in_window[i]:
            uniq.setdefault((int(bv.cells[i, 0]), int(bv.cells[i, 1])), []).append(i)
    for cell, idxs in uniq.items():
        form = bump_form(g, cell)
        rows = np.concatenate([np.arange(bv.visit_lo[i], bv.visit_hi[i]) for i in idxs])
        vals, pbs = bump_interval_integrals(form, pts, bv.seg[rows], bv.u_in[rows], bv.u_out[rows])
        pos = 0
        for i in idxs:
            cnt = bv.visit_hi[i] - bv.visit_lo[i]
            values[i] = np.sum(vals[pos : pos + cnt])
            bounds[i] = np.sum(pbs[pos : pos + cnt])
            pos += cnt

    keep = in_window
    cells = bv.cells[keep]
    boxes = sorted(set(map(tuple, cells.tolist())))
    box_ids = {b: k for k, b in enumerate(boxes)}
    box_of_visit = np.array([box_ids[(int(c[0]), int(c[1]))] for c in cells], dtype=np.int64)
    visit_index = [np.nonzero(box_of_visit == k)[0] for k in range(len(boxes))]
    vals = values[keep]
    c_max = float(np.max(np.abs(vals))) if len(vals) else 0.0
    return VisitIntegrals(g, cells, bv.t_start[keep], bv.t_end[keep], vals, bounds[keep],
                          box_of_visit, boxes, visit_index, c_max, clipped)


class _StepFn:
    """Right-continuous step function given by visit end times and cum values."""

    __slots__ = ("t_ends", "cum")

    def __init__(self, t_ends, cum):
        self.t_ends = t_ends
        self.cum = cum

    def eval(self, t):
        idx = np.searchsorted(self.t_ends, t, side="right")
        out = np.where(idx > 0, self.cum[np.maximum(idx - 1, 0)], 0.0)
        return out

    def endpoint(self):
        return float(self.cum[-1]) if len(self.cum) else 0.0

    def sup(self):
        return float(np.max(np.abs(self.cum))) if len(self.cum) else 0.0


def _extend(vi: VisitIntegrals, step: _StepFn, box_id: int):
    """Step function of the prefix extended by one letter.

    Returns (step_fn, sup_bound, max_term): the running extension values at
    visit ends, an upper bound on the trajectory sup, and the largest single
    contribution |I_m(start) * c| (the scale against which 'nonzero' is
    judged; visits before the prefix activates contribute exact zeros).
    """
    rows = vi.visit_index[box_id]
    v_at = step.eval(vi.t_start[rows]) if step is not None else np.ones(len(rows))
    contrib = v_at * vi.value[rows]
    cum = np.cumsum(contrib)
    sup_bound = 0.0
    max_term = 0.0
    if len(cum):
        prev = np.concatenate([[0.0], np.abs(cum[:-1])])
        intra = prev + np.abs(v_at) * vi.partial_bound[rows]
        sup_bound = float(max(np.max(np.abs(cum)), np.max(intra)))
        max_term = float(np.max(np.abs(contrib)))
    return _StepFn(vi.t_end[rows], cum), sup_bound, max_term


def _log10(x: float) -> float:
    return math.log10(x) if x > 0.0 else -math.inf


# ---------------------------------------------------------------------------
# Table construction.
# ---------------------------------------------------------------------------


def build_table(path: PiecewisePath, g: GridSpec, window: int, max_len: int = 4096,
                theta_rel: float = 1e-8, strategy: str = "auto",
                max_live: int = 4096, max_entries: int = 200_000,
                visit_integrals: VisitIntegrals | None = None) -> SignatureTable:
    """Extended-signature table of the path, rooted at the known start cell (0,0).

    theta_rel is the per-letter relative tolerance: a word of length m+1 must
    reach magnitude theta_rel * c_max * (running scale of its prefix) to count
    as nonzero.  strategy 'exhaustive' enumerates every surviving word
    breadth-first with trajectory-sup pruning; 'greedy' follows the unique
    earliest-activating chain, which is the maximal word's prefix sequence;
    'auto' picks exhaustive only for small instances.  A precomputed
    visit_integrals (matching path/grid/window) skips the quadrature pass.
    """
    vi = visit_integrals if visit_integrals is not None else precompute_visit_integrals(path, g, window)
    if strategy == "auto":
        strategy = "exhaustive" if (len(vi.boxes) <= 12 and len(vi.cells) <= 40 and max_len <= 12) else "greedy"
    table = SignatureTable(g, window, theta_rel, strategy, {},
                           diagnostics={"n_visits": len(vi.cells), "n_boxes": len(vi.boxes),
                                        "c_max": vi.c_max, "window_clipped": vi.window_clipped,
                                        "margins": []})
    if vi.c_max == 0.0:
        return table
    root = (0, 0)
    if root not in {tuple(b) for b in vi.boxes}:
        return table
    root_id = vi.boxes.index(root)

    if strategy == "greedy":
        _greedy_chain(vi, table, root_id, max_len, theta_rel)
    elif strategy == "exhaustive":
        _exhaustive_bfs(vi, table, root_id, max_len, theta_rel, max_live, max_entries)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return table


def _record(table, word, raw_endpoint, max_term, prefix_log_scale, t_act, theta_rel):
    """Store a word given its endpoint in prefix-normalized units.

    The unnormalized value is raw_endpoint * 10**prefix_log_scale; recording in
    log space survives word values far below the float underflow threshold.
    A word passes when its endpoint is nonzero relative to the largest single
    contribution (cancellation below theta_rel counts as zero).
    """
    log_abs = prefix_log_scale + _log10(abs(raw_endpoint))
    value = math.copysign(10.0**log_abs, raw_endpoint) if log_abs > -300.0 else 0.0
    passes = abs(raw_endpoint) >= theta_rel * max_term and max_term > 0.0
    table.thresholds[len(word)] = prefix_log_scale + _log10(theta_rel * max_term)
    table.entries[word] = TableEntry(word, value, log_abs, math.copysign(1.0, raw_endpoint or 1.0), t_act, passes)


def _greedy_chain(vi: VisitIntegrals, table: SignatureTable, root_id: int, max_len: int, theta_rel: float):
    n_visits = len(vi.cells)
    raw, _, max_term = _extend(vi, None, root_id)
    norm = raw.sup()
    if norm <= 0.0:
        return
    word = (tuple(vi.boxes[root_id]),)
    log_scale = 0.0  # scale of the normalized prefix relative to true units
    _record(table, word, raw.endpoint(), max_term, log_scale,
            float(vi.t_end[vi.visit_index[root_id][0]]), theta_rel)
    log_scale = _log10(norm)
    step = _StepFn(raw.t_ends, raw.cum / norm)
    last_id = root_id

    order = np.argsort(vi.box_of_visit, kind="stable")  # visits grouped by box, time order within
    group_starts = np.searchsorted(vi.box_of_visit[order], np.arange(len(vi.boxes)))
    BIG = n_visits + 1

    while True:
        # one sweep: a candidate activates at its first strictly nonzero
        # contribution (zero before the prefix is live, zero off support)
        v_at = step.eval(vi.t_start)
        contrib = (v_at * vi.value)[order]
        pos = np.where(contrib != 0.0, np.arange(n_visits), BIG)
        first = np.minimum.reduceat(pos, group_starts)
        first[last_id] = BIG  # admissibility: consecutive letters differ
        live = first < BIG
        if not live.any():
            break
        if len(word) >= max_len:
            table.truncated = "max_len reached with live extensions"
            break
        act_visit = order[np.where(live, np.minimum(first, n_visits - 1), 0)]
        t_act = np.where(live, vi.t_end[act_visit], np.inf)
        winner = int(np.argmin(t_act))
        t_win = float(t_act[winner])
        runner_up = float(np.partition(t_act, 1)[1]) if int(live.sum()) > 1 else math.inf
        raw, _, max_term = _extend(vi, step, winner)
        norm = raw.sup()
        if norm <= 0.0:
            break
        table.diagnostics["margins"].append({
            "length": len(word) + 1,
            "t_activation": t_win,
            "t_runner_up": runner_up,
            "endpoint_over_scale": abs(raw.endpoint()) / max_term if max_term else 0.0,
        })
        word = word + (tuple(vi.boxes[winner]),)
        _record(table, word, raw.endpoint(), max_term, log_scale, t_win, theta_rel)
        log_scale += _log10(norm)
        step = _StepFn(raw.t_ends, raw.cum / norm)
        last_id = winner


def _exhaustive_bfs(vi, table, root_id, max_len, theta_rel, max_live, max_entries):
    raw, _, max_term = _extend(vi, None, root_id)
    norm = raw.sup()
    root_word = (tuple(vi.boxes[root_id]),)
    if norm <= 0.0 or max_term == 0.0:
        table.pruned.append((root_word, "trajectory identically zero"))
        return
    if raw.sup() < theta_rel * max_term:
        table.pruned.append((root_word, "trajectory-sup below tolerance"))
        return
    _record(table, root_word, raw.endpoint(), max_term, 0.0,
            float(vi.t_end[vi.visit_index[root_id][0]]), theta_rel)
    root_step = _StepFn(raw.t_ends, raw.cum / norm)
    frontier = [(root_word, root_step, _log10(norm), root_id)]

    while frontier:
        if len(table.entries) >= max_entries:
            table.truncated = "entry budget exhausted with live prefixes"
            return
        new_frontier = []
        for word, stp, lsc, last_id in frontier:
            if len(word) >= max_len:
                table.truncated = "max_len reached with live prefixes"
                continue
            for cand in range(len(vi.boxes)):
                if cand == last_id:
                    continue
                raw, sup_bound, max_term = _extend(vi, stp, cand)
                cw = word + (tuple(vi.boxes[cand]),)
                if max_term == 0.0:
                    table.pruned.append((cw, "support never visited while the prefix is live"))
                    continue
                if sup_bound < theta_rel * max_term:
                    table.pruned.append((cw, "trajectory-sup below tolerance"))
                    continue
                rows = vi.visit_index[cand]
                hot = raw.cum != 0.0
                t_act = float(vi.t_end[rows[np.argmax(hot)]]) if hot.any() else math.inf
                _record(table, cw, raw.endpoint(), max_term, lsc, t_act, theta_rel)
                norm = raw.sup()
                if norm > 0.0:
                    new_frontier.append((cw, _StepFn(raw.t_ends, raw.cum / norm), lsc + _log10(norm), cand))
        if len(new_frontier) > max_live:
            table.truncated = "frontier budget exhausted"
            new_frontier = new_frontier[:max_live]
        frontier = new_frontier


def evaluate_word(vi: VisitIntegrals, word) -> tuple[float, float]:
    """Direct extended-signature value of one admissible word.

    Returns (value, log10_abs); a word touching a box the path never visits
    (or visits only out of order) evaluates to exactly zero.
    """
    word = [(int(z[0]), int(z[1])) for z in word]
    if any(a == b for a, b in zip(word, word[1:])):
        raise ValueError("word must be admissible (consecutive cells differ)")
    ids = {tuple(b): k for k, b in enumerate(vi.boxes)}
    step = None
    log_scale = 0.0
    for letter in word:
        if letter not in ids:
            return 0.0, -math.inf
        raw, _, _ = _extend(vi, step, ids[letter])
        norm = raw.sup()
        if norm <= 0.0:
            return 0.0, -math.inf
        endpoint = raw.endpoint()
        log_scale_next = log_scale + _log10(norm)
        step = _StepFn(raw.t_ends, raw.cum / norm)
        last_log = log_scale + _log10(abs(endpoint))
        log_scale = log_scale_next
    value = math.copysign(10.0**last_log, endpoint) if last_log > -300.0 else 0.0
    return value, last_log


# ---------------------------------------------------------------------------
# Detection and polygon reconstruction.
# ---------------------------------------------------------------------------


def detect_word(table: SignatureTable) -> ReconstructionResult:
    """Maximal nonzero word of the table, with runner-up margin diagnostics.

    An empty table yields m_hat = 0 at the known start cell; two surviving
    words of maximal length raise AmbiguousWord (trial flagged, not resolved).
    """
    passing = [e for e in table.entries.values() if e.passes]
    diagnostics = dict(table.diagnostics)
    if not passing:
        word = LatticeWord(((0, 0),))
        return ReconstructionResult(0, word, None, {**diagnostics, "empty_table": True})
    top_len = max(len(e.word) for e in passing)
    winners = [e for e in passing if len(e.word) == top_len]
    if len(winners) > 1:
        raise AmbiguousWord(f"{len(winners)} words of length {top_len} above tolerance")
    entry = winners[0]
    runner = max((e.log10_abs for e in passing if len(e.word) == top_len and e is not entry), default=-math.inf)
    diagnostics.update({
        "value_log10": entry.log10_abs,
        "threshold_log10": table.thresholds.get(top_len, -math.inf),
        "runner_up_log10": runner,
    })
    return ReconstructionResult(top_len - 1, LatticeWord(entry.word), None, diagnostics)


def reconstruct_polygon(result: ReconstructionResult, g: GridSpec) -> PiecewisePath:
    """Lattice polygon through eps * word, parametrized by vertex index.

    Hit times are path functionals, not signature functionals, so the polygon
    is laid out on a uniform vertex-index clock over [0, 1].
    """
    eps = g.epsilon
    verts = np.array([[eps * z[0], eps * z[1]] for z in result.word], dtype=float)
    if len(verts) == 1:
        verts = np.vstack([verts, verts])
        times = np.array([0.0, 1.0])
    else:
        times = np.linspace(0.0, 1.0, len(verts))
    return PiecewisePath(times, verts, {"kind": "reconstructed-polygon", "epsilon": eps})


@njit(cache=True)
def _dfd_kernel(P, Q):  # pragma: no cover - exercised through frechet_distance
    n, m = P.shape[0], Q.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for j in range(m):
        dx = P[0, 0] - Q[j, 0]
        dy = P[0, 1] - Q[j, 1]
        d = math.sqrt(dx * dx + dy * dy)
        prev[j] = d if j == 0 else max(prev[j - 1], d)
    for i in range(1, n):
        for j in range(m):
            dx = P[i, 0] - Q[j, 0]
            dy = P[i, 1] - Q[j, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if j == 0:
                best = prev[0]
            else:
                best = min(prev[j], cur[j - 1], prev[j - 1])
            cur[j] = max(best, d)
        prev, cur = cur, prev
    return prev[m - 1]


def _dfd_python(P, Q):
    n, m = len(P), len(Q)
    prev = [0.0] * m
    for j in range(m):
        d = math.sqrt((P[0][0] - Q[j][0]) ** 2 + (P[0][1] - Q[j][1]) ** 2)
        prev[j] = d if j == 0 else max(prev[j - 1], d)
    for i in range(1, n):
        cur = [0.0] * m
        for j in range(m):
            d = math.sqrt((P[i][0] - Q[j][0]) ** 2 + (P[i][1] - Q[j][1]) ** 2)
            best = prev[0] if j == 0 else min(prev[j], cur[j - 1], prev[j - 1])
            cur[j] = max(best, d)
        prev = cur
    return prev[m - 1]


def frechet_distance(p: PiecewisePath, q: PiecewisePath) -> float:
    """Discrete Frechet distance between the two vertex sequences."""
    P = np.ascontiguousarray(p.points[:, :2], dtype=float)
    Q = np.ascontiguousarray(q.points[:, :2], dtype=float)
    if _HAVE_NUMBA:
        return float(_dfd_kernel(P, Q))
    return float(_dfd_python(P.tolist(), Q.tolist()))
