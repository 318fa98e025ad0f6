"""Monte Carlo experiments, identity suites, and deterministic reports.

Every experiment is a pure function of its ExperimentConfig: trials draw from
per-trial counter streams, aggregation is an indexed reduction, and the JSON
report (timing stripped) is byte-reproducible.  Bounds asserted by a report
always carry the parameter regime: 'tight' when the declared gap and
corner exponents actually hold at the configured scales, 'relaxed' when the
desk-scale surrogate replaces them, in which case the tight-regime value is
printed alongside as not desk-checkable.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .forms import bump_form, bump_interval_integrals, approximate_form_by_polynomials, line_integral
from .geometry import GridSpec, RoundedSquare, boxes_for, membership_defect, segment_box_intervals
from .reconstruct import (
    AmbiguousWord,
    build_table,
    detect_word,
    frechet_distance,
    reconstruct_polygon,
)
from .signature import (
    chen_concat,
    coordinate_iterated_integral,
    path_signature,
    shuffle,
    verify_polynomial_identity,
)
from .stochastic import PiecewisePath, Seed, normals_for_stream, sample_brownian
from .tracer import box_visits, coincidence, polygon, trace

__all__ = [
    "ExperimentConfig",
    "Report",
    "GeometryRefusal",
    "wilson_interval",
    "wilson_upper",
    "exp_exit_probability",
    "exp_excursion_bound",
    "exp_coincidence",
    "exp_eta_nonzero",
    "exp_area_density",
    "exp_identities",
    "exp_reconstruction",
    "run_experiment",
    "EXPERIMENTS",
]


class GeometryRefusal(ValueError):
    """The configured geometry cannot be resolved at the configured step size."""


# ---------------------------------------------------------------------------
# Config and report plumbing.
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment run."""

    experiment: str = ""
    seed_base: int = 20240608
    trials: int = 1000
    level: int = 12
    epsilon: float = 0.1
    phi: float | None = None
    beta: float = 3.0
    alpha_note: float = 10.0
    truncation: int = 6
    theta_rel: float = 1e-8
    delta_decades: int = 6
    eps_sweep: tuple = ()
    window_margin: int = 2
    mode: str = ""
    max_blocks: int = 512
    out_dir: str | None = None

    def grid(self) -> GridSpec:
        return GridSpec(self.epsilon, self.phi, self.beta, self.alpha_note)

    def to_json(self) -> dict:
        d = asdict(self)
        d["eps_sweep"] = list(self.eps_sweep)
        return d

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "eps_sweep" in obj:
            obj["eps_sweep"] = tuple(obj["eps_sweep"])
        return ExperimentConfig(**obj)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    return x


_BOUND_KEYS = {"name", "statement", "regime", "bound", "estimate", "passed"}


@dataclass
class Report:
    experiment: str
    config: dict
    status: str = "pass"          # pass | fail | inconclusive
    bounds: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    per_trial: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def add_bound(self, name, statement, regime, bound, estimate, passed, **extra):
        entry = {"name": name, "statement": statement, "regime": regime,
                 "bound": bound, "estimate": estimate, "passed": bool(passed)}
        entry.update(extra)
        self.bounds.append(entry)
        if not passed:
            self.status = "fail"

    def validate_schema(self):
        for b in self.bounds:
            missing = _BOUND_KEYS - set(b)
            if missing:
                raise ValueError(f"bound entry missing keys {missing}")
            if b["regime"] not in ("tight", "relaxed", "exact"):
                raise ValueError(f"unknown regime {b['regime']!r}")

    def canonical_json(self) -> str:
        body = {
            "experiment": self.experiment,
            "config": _jsonable(self.config),
            "status": self.status,
            "bounds": _jsonable(self.bounds),
            "aggregates": _jsonable(self.aggregates),
        }
        return json.dumps(body, sort_keys=True, indent=2)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / self.experiment.replace("/", "-")
        payload = json.loads(self.canonical_json())
        payload["timing"] = _jsonable(self.timing)
        (stem.with_suffix(".json")).write_text(json.dumps(payload, sort_keys=True, indent=2))
        if self.per_trial:
            cols = sorted({k for rec in self.per_trial for k in rec})
            with open(stem.with_suffix(".csv"), "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                for rec in self.per_trial:
                    w.writerow({k: _jsonable(rec.get(k, "")) for k in cols})
        return stem.with_suffix(".json")


def wilson_interval(successes: int, n: int, confidence: float = 0.95):
    """Two-sided Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    z = {0.95: 1.959963984540054, 0.99: 2.5758293035489004}[confidence]
    p = successes / n
    denom = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, mid - half), min(1.0, mid + half)


def wilson_upper(successes: int, n: int, confidence: float = 0.99) -> float:
    """One-sided Wilson upper confidence limit."""
    if n == 0:
        return 1.0
    z = {0.95: 1.6448536269514722, 0.99: 2.3263478740408408}[confidence]
    p = successes / n
    denom = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return min(1.0, mid + half)


def _proportion_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else float("inf")


# ---------------------------------------------------------------------------
# Batched increment walker.
#
# Draw layout: the double at flat counter index ((block*B + trial)*K + j)*2 + c
# is step j, coordinate c of `trial` during `block`, with B the global trial
# count and K the block length.  A block's draws for any contiguous trial
# range form one contiguous counter range, so chunked generation, active-set
# narrowing, and full runs all read identical numbers.
# ---------------------------------------------------------------------------


class BlockWalker:
    def __init__(self, seed: Seed, n_trials: int, block_steps: int = 128):
        self.seed = seed
        self.B = n_trials
        self.K = block_steps

    def block_range(self, block: int, t0: int, t1: int) -> np.ndarray:
        """Normals of shape (t1-t0, K, 2) for one block of a trial range."""
        start = ((block * self.B + t0) * self.K) * 2
        count = (t1 - t0) * self.K * 2
        flat = normals_for_stream(self.seed, start, count)
        return flat.reshape(t1 - t0, self.K, 2)

    def block_single(self, block: int, trial: int) -> np.ndarray:
        return self.block_range(block, trial, trial + 1)[0]


def _segment_cells(a: np.ndarray, b: np.ndarray, eps: float, reach: float):
    lox = np.ceil((np.minimum(a[:, 0], b[:, 0]) - reach) / eps).astype(np.int64)
    hix = np.floor((np.maximum(a[:, 0], b[:, 0]) + reach) / eps).astype(np.int64)
    loy = np.ceil((np.minimum(a[:, 1], b[:, 1]) - reach) / eps).astype(np.int64)
    hiy = np.floor((np.maximum(a[:, 1], b[:, 1]) + reach) / eps).astype(np.int64)
    nx = np.maximum(hix - lox + 1, 0)
    ny = np.maximum(hiy - loy + 1, 0)
    counts = nx * ny
    total = int(counts.sum())
    row = np.repeat(np.arange(len(a)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(total) - np.repeat(starts, counts)
    zx = lox[row] + k // np.maximum(ny[row], 1)
    zy = loy[row] + k % np.maximum(ny[row], 1)
    return row, zx, zy


# ---------------------------------------------------------------------------
# Exit probability (annulus surrogate, plus an explicit box walk).
# ---------------------------------------------------------------------------


def _annulus_radii(g: GridSpec):
    eps = g.epsilon
    r1 = eps * (1.0 - eps)
    rho = r1 + eps * g.phi
    r2 = eps
    return r1, rho, r2


def annulus_harmonic_value(g: GridSpec) -> float:
    """P{outer before inner} for the radial surrogate, in closed form.

    Radii follow the comparison function (start radius inner + eps*phi); this
    deliberately over-estimates the true box start gap (which is eps^2*phi/...)
    and so dominates the box value by roughly a factor 1/eps.
    """
    r1, rho, r2 = _annulus_radii(g)
    return math.log(rho / r1) / math.log(r2 / r1)


def box_harmonic_value(g: GridSpec) -> float:
    """Radial harmonic value with radii matched to the actual box scales."""
    return math.log(g.scale_z / g.scale_h) / math.log(g.scale_v / g.scale_h)


def exp_exit_probability(cfg: ExperimentConfig) -> Report:
    """Escape probability from the inner box, measured between nested barriers.

    Disk mode walks the log-radial coordinate (which barrier is hit first is
    invariant under the radial time change) with exact Brownian-bridge
    first-passage corrections per step, so arbitrarily thin gaps are resolved.
    Box mode steps the planar walk between the rounded squares themselves and
    refuses when the gap is below the step resolution.
    """
    g = cfg.grid()
    report = Report("exit-probability", cfg.to_json())
    u_true = annulus_harmonic_value(g)
    mode = cfg.mode or "disk"
    n = cfg.trials

    if mode == "disk":
        r1, rho, r2 = _annulus_radii(g)
        L1, L2, x0 = math.log(r1), math.log(r2), math.log(rho)
        sigma = (L2 - L1) / 8.0
        dt = sigma * sigma
        outer, unresolved = _disk_walk(cfg, n, x0, L1, L2, sigma, dt)
    elif mode == "box":
        outer, unresolved = _box_exit_walk(cfg, g, n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if unresolved > 0.01 * n:
        raise GeometryRefusal(
            f"{unresolved}/{n} walks unresolved within max_blocks={cfg.max_blocks}; "
            "raise max_blocks for this geometry/level")

    p_hat = outer / n
    se = _proportion_se(p_hat, n)
    lo95, hi95 = wilson_interval(outer, n, 0.95)
    lo99, hi99 = wilson_interval(outer, n, 0.99)
    target = u_true if mode == "disk" else box_harmonic_value(g)
    report.aggregates = {
        "mode": mode,
        "p_hat": p_hat,
        "se": se,
        "wilson95": [lo95, hi95],
        "wilson99": [lo99, hi99],
        "harmonic_value": u_true,
        "box_harmonic_value": box_harmonic_value(g),
        "phi_over_eps_ratio": p_hat * g.epsilon / g.phi,
        "tight_regime_note": f"target epsilon^10 = {g.epsilon**10:.3e} is below MC "
                                     f"resolution at {n} trials: not desk-checkable",
    }
    within = abs(p_hat - target) <= 3.0 * se if se > 0 else p_hat == target
    report.add_bound(
        name="annulus-exit-matches-harmonic",
        statement="MC escape probability matches the matching closed-form radial value within 3 SE",
        regime="relaxed" if g.regime() == "relaxed" else "tight",
        bound=target,
        estimate=p_hat,
        passed=within,
        z_score=(p_hat - target) / se if se > 0 else 0.0,
    )
    report.validate_schema()
    return report


def _disk_walk(cfg, n, x0, L1, L2, sigma, dt):
    walker = BlockWalker(Seed(cfg.seed_base, 1), n, block_steps=64)
    x = np.full(n, x0)
    alive = np.arange(n)
    outer = 0
    for block in range(cfg.max_blocks):
        if len(alive) == 0:
            break
        draws = _gather_blocks(walker, block, alive)
        steps = draws[:, :, 0] * sigma
        unif = ndtr(draws[:, :, 1])
        cur = x[alive]
        for j in range(walker.K):
            nxt = cur + steps[:, j]
            d0_in, d1_in = cur - L1, nxt - L1
            d0_out, d1_out = L2 - cur, L2 - nxt
            hit_in = d1_in <= 0.0
            hit_out = d1_out <= 0.0
            both_up = (~hit_in) & (~hit_out)
            with np.errstate(over="ignore"):
                p_in = np.where(both_up, np.exp(-2.0 * np.maximum(d0_in, 0) * np.maximum(d1_in, 0) / dt), 0.0)
                p_out = np.where(both_up, np.exp(-2.0 * np.maximum(d0_out, 0) * np.maximum(d1_out, 0) / dt), 0.0)
            bridge_in = both_up & (unif[:, j] < p_in)
            bridge_out = both_up & ~bridge_in & (unif[:, j] < p_out)
            done = hit_in | hit_out | bridge_in | bridge_out
            outer += int(np.sum((hit_out | bridge_out) & ~hit_in & ~bridge_in))
            cur = np.where(done, np.nan, nxt)
            if np.isnan(cur).all():
                break
        keep = ~np.isnan(cur)
        x[alive[keep]] = cur[keep]
        alive = alive[keep]
    return outer, len(alive)


def _gather_blocks(walker: BlockWalker, block: int, trials: np.ndarray) -> np.ndarray:
    """Draws of one block for an arbitrary trial subset, contiguous when possible."""
    if len(trials) == 0:
        return np.empty((0, walker.K, 2))
    t0, t1 = int(trials[0]), int(trials[-1]) + 1
    if t1 - t0 == len(trials):
        return walker.block_range(block, t0, t1)
    if len(trials) > 0.2 * (t1 - t0):
        full = walker.block_range(block, t0, t1)
        return full[trials - t0]
    return np.stack([walker.block_single(block, int(t)) for t in trials])


def _boundary_distance_outside(qx, qy, h, r):
    """Distance to the box boundary for points outside the box."""
    dx = np.maximum((np.abs(qx) - h) + r, 0.0)
    dy = np.maximum((np.abs(qy) - h) + r, 0.0)
    return np.sqrt(dx * dx + dy * dy) - r


def _boundary_distance_inside(qx, qy, h, r):
    """Distance to the box boundary for points inside the box."""
    ax, ay = np.abs(qx), np.abs(qy)
    core = h - r
    corner = (ax > core) & (ay > core)
    flat = h - np.maximum(ax, ay)
    arc = r - np.hypot(np.maximum(ax - core, 0.0), np.maximum(ay - core, 0.0))
    return np.where(corner, arc, flat)


def _box_exit_walk(cfg, g: GridSpec, n) -> int:
    h_H, r_H = g.family_geometry("H")
    h_Z, r_Z = g.family_geometry("Z")
    h_V, r_V = g.family_geometry("V")
    gap = h_Z - h_H
    dt = 2.0 ** (-cfg.level)
    if math.sqrt(dt) > gap / 6.0:
        raise GeometryRefusal(
            f"phi={g.phi} gives inner gap {gap:.3e} but step sigma {math.sqrt(dt):.3e}; "
            f"raise level above {math.ceil(2 * math.log2(6.0 / gap))} or fatten phi")
    walker = BlockWalker(Seed(cfg.seed_base, 2), n, block_steps=64)
    # start points spread over the Z boundary by gauge-scaling lattice directions
    angles = 2.0 * math.pi * (np.arange(n) + 0.5) / n
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    from .geometry import gauge_many

    lam = gauge_many(dirs, h_Z, r_Z)
    pos = dirs / lam[:, None]
    alive = np.arange(n)
    outer = 0
    for block in range(cfg.max_blocks):
        if len(alive) == 0:
            break
        draws = _gather_blocks(walker, block, alive)
        steps = draws * math.sqrt(dt)
        unif = ndtr(normals_for_stream(Seed(cfg.seed_base, 3),
                                       block * n * walker.K, len(alive) * walker.K)).reshape(len(alive), walker.K)
        cur = pos[alive]
        done_mask = np.zeros(len(alive), dtype=bool)
        for j in range(walker.K):
            nxt = cur + steps[:, j]
            def_H = membership_defect(nxt[:, 0], nxt[:, 1], h_H, r_H) <= 0.0
            def_V = membership_defect(nxt[:, 0], nxt[:, 1], h_V, r_V) > 0.0
            d0_in = _boundary_distance_outside(cur[:, 0], cur[:, 1], h_H, r_H)
            d1_in = _boundary_distance_outside(nxt[:, 0], nxt[:, 1], h_H, r_H)
            d0_out = _boundary_distance_inside(cur[:, 0], cur[:, 1], h_V, r_V)
            d1_out = _boundary_distance_inside(nxt[:, 0], nxt[:, 1], h_V, r_V)
            open_both = ~def_H & ~def_V & ~done_mask
            with np.errstate(over="ignore"):
                p_in = np.where(open_both, np.exp(-2.0 * np.maximum(d0_in, 0) * np.maximum(d1_in, 0) / dt), 0.0)
                p_out = np.where(open_both, np.exp(-2.0 * np.maximum(d0_out, 0) * np.maximum(d1_out, 0) / dt), 0.0)
            bridge_in = open_both & (unif[:, j] < p_in)
            bridge_out = open_both & ~bridge_in & (unif[:, j] < p_out)
            newly = ~done_mask & (def_H | def_V | bridge_in | bridge_out)
            outer += int(np.sum(newly & (def_V | bridge_out) & ~def_H & ~bridge_in))
            done_mask |= newly
            cur = nxt
            if done_mask.all():
                break
        pos[alive[~done_mask]] = cur[~done_mask]
        alive = alive[~done_mask]
    return outer, len(alive)


# ---------------------------------------------------------------------------
# Excursion tail bound.
# ---------------------------------------------------------------------------


def excursion_tail_bound(eps: float) -> float:
    return (1.0 / 3.0) ** int(math.floor(1.0 / (2.0 * eps)))


def exp_excursion_bound(cfg: ExperimentConfig) -> Report:
    """Tail of the running maximum before the walk reaches a new inner box.

    From the center of the start box, measures P{sup |W| > 3 sqrt(2) eps up to
    the first entry into any other H box} against the corridor-threading bound
    (1/3)^floor(1/(2 eps)).
    """
    g = cfg.grid()
    eps = g.epsilon
    h_H, r_H = g.family_geometry("H")
    dt = 2.0 ** (-cfg.level)
    threshold = 3.0 * math.sqrt(2.0) * eps
    n = cfg.trials
    walker = BlockWalker(Seed(cfg.seed_base, 11), n, block_steps=128)

    chunk = max(1, min(n, 20_000))
    exceed = 0
    unresolved = 0
    taus = np.full(n, np.nan)
    sups = np.zeros(n)
    for c0 in range(0, n, chunk):
        c1 = min(c0 + chunk, n)
        idx = np.arange(c0, c1)
        pos = np.zeros((c1 - c0, 2))
        run_sup = np.zeros(c1 - c0)
        alive = np.ones(c1 - c0, dtype=bool)
        for block in range(cfg.max_blocks):
            act = np.nonzero(alive)[0]
            if len(act) == 0:
                break
            draws = _gather_blocks(walker, block, idx[act]) * math.sqrt(dt)
            A = len(act)
            K = walker.K
            pts = np.empty((A, K + 1, 2))
            pts[:, 0] = pos[act]
            np.cumsum(draws, axis=1, out=draws)
            pts[:, 1:] = pos[act, None, :] + draws
            segs_a = pts[:, :-1].reshape(-1, 2)
            segs_b = pts[:, 1:].reshape(-1, 2)
            row, zx, zy = _segment_cells(segs_a, segs_b, eps, h_H)
            keep = ~((zx == 0) & (zy == 0))
            row, zx, zy = row[keep], zx[keep], zy[keep]
            if len(row):
                A_rel = segs_a[row] - eps * np.column_stack([zx, zy])
                B_rel = segs_b[row] - eps * np.column_stack([zx, zy])
                t_in, t_out = segment_box_intervals(A_rel, B_rel, h_H, r_H)
                hit = np.isfinite(t_in) & (t_in > 0.0)
            else:
                hit = np.zeros(0, dtype=bool)
            # earliest event per active trial: fractional step index within block
            event_time = np.full(A, np.inf)
            if hit.any():
                rows_h = row[hit]
                within = (rows_h % K) + t_in[hit]
                np.minimum.at(event_time, rows_h // K, within)
            norms = np.hypot(pts[:, :, 0], pts[:, :, 1])
            prefix = np.maximum.accumulate(norms, axis=1)
            evt = np.isfinite(event_time)
            if evt.any():
                rows = np.nonzero(evt)[0]
                s = event_time[rows].astype(int)
                u = event_time[rows] - s
                hp = pts[rows, s] + u[:, None] * (pts[rows, s + 1] - pts[rows, s])
                sup_t = np.maximum(run_sup[act[rows]], np.maximum(prefix[rows, s], np.hypot(hp[:, 0], hp[:, 1])))
                gidx = idx[act[rows]]
                taus[gidx] = (block * K + event_time[rows]) * dt
                sups[gidx] = sup_t
                exceed += int(np.sum(sup_t > threshold))
                alive[act[rows]] = False
            cont = np.nonzero(~evt)[0]
            run_sup[act[cont]] = np.maximum(run_sup[act[cont]], prefix[cont, -1])
            pos[act] = pts[:, -1]
        rest = np.nonzero(alive)[0]
        for t in rest:
            unresolved += 1
            exceed += 1  # conservative: unresolved trials count as exceedances
            sups[idx[t]] = run_sup[t]

    p_hat = exceed / n
    bound = excursion_tail_bound(eps)
    upper99 = wilson_upper(exceed, n, 0.99)
    report = Report("excursion-bound", cfg.to_json())
    report.aggregates = {
        "p_hat": p_hat,
        "wilson99_upper": upper99,
        "bound": bound,
        "threshold": threshold,
        "unresolved_counted_as_exceed": unresolved,
        "mean_tau": float(np.nanmean(taus)),
    }
    report.per_trial = [
        {"trial": i, "tau": taus[i], "sup": sups[i], "exceeded": bool(sups[i] > threshold)}
        for i in range(min(n, 10000))
    ]
    report.add_bound(
        name="excursion-tail",
        statement="99% upper confidence limit of P{sup |W| before next-box entry > 3*sqrt(2)*eps} "
                  "is below (1/3)^floor(1/(2 eps))",
        regime="tight",
        bound=bound,
        estimate=upper99,
        passed=upper99 <= bound,
        exceed_count=exceed,
    )
    report.validate_schema()
    return report


# ---------------------------------------------------------------------------
# Coincidence of the two families' traces.
# ---------------------------------------------------------------------------


def tight_coincidence_bound(eps: float) -> float:
    return 1.0 - 2.0 * eps**4 - math.exp(-1.0 / (2.0 * eps * eps))


def exp_coincidence(cfg: ExperimentConfig) -> Report:
    """Frequency of {M_H = M_Z and equal words} vs the proof-skeleton bound.

    Per Z-crossing, failure means the inner box was not reached before the
    next crossing; the recomputed relaxed bound plugs the measured failure
    rate into E[(1 - p)^{M_Z}], exactly the argument that gives the tight
    bound 1 - 2 eps^4 - exp(-1/(2 eps^2)) when the gap exponents hold.
    """
    g = cfg.grid()
    n = cfg.trials
    coincident = 0
    crossings = 0
    failures = 0
    mzs = np.zeros(n, dtype=int)
    mhs = np.zeros(n, dtype=int)
    fail_per_trial = np.zeros(n, dtype=int)
    for i in range(n):
        path = sample_brownian(Seed(cfg.seed_base, i), cfg.level)
        t_h = trace(path, g, "H")
        t_z = trace(path, g, "Z")
        co = coincidence(t_h, t_z)
        coincident += co
        mzs[i], mhs[i] = t_z.M, t_h.M
        f = _crossing_failures(path, g, t_z)
        fail_per_trial[i] = f
        failures += f
        crossings += t_z.M
    p_fail = failures / crossings if crossings else 0.0
    beta_prime = float(np.mean((1.0 - p_fail) ** mzs.astype(float)))
    freq = coincident / n
    se = _proportion_se(freq, n)
    beta_tight = tight_coincidence_bound(g.epsilon)

    report = Report("coincidence", cfg.to_json())
    report.aggregates = {
        "coincidence_freq": freq,
        "se": se,
        "wilson95": list(wilson_interval(coincident, n, 0.95)),
        "per_crossing_failure_rate": p_fail,
        "beta_prime_recomputed": beta_prime,
        "beta_tight_regime": beta_tight,
        "beta_tight_note": "tight-regime value; requires phi << eps^alpha with alpha >= 10, "
                           "not desk-checkable at the configured phi",
        "mean_M_Z": float(np.mean(mzs)),
        "mean_M_H": float(np.mean(mhs)),
    }
    report.per_trial = [
        {"trial": i, "M_H": int(mhs[i]), "M_Z": int(mzs[i]), "failures": int(fail_per_trial[i]),
         "coincident": bool(mhs[i] == mzs[i] and fail_per_trial[i] == 0)}
        for i in range(n)
    ]
    report.add_bound(
        name="coincidence-frequency",
        statement="empirical coincidence frequency >= recomputed skeleton bound minus 3 SE",
        regime="relaxed" if g.regime() == "relaxed" else "tight",
        bound=beta_prime,
        estimate=freq,
        passed=freq >= beta_prime - 3.0 * se,
        tight_regime_value=beta_tight,
    )
    report.validate_schema()
    return report


def _crossing_failures(path: PiecewisePath, g: GridSpec, t_z) -> int:
    """Count Z-crossings whose box was not confirmed by an H visit in time."""
    visits_h = box_visits(path, g, "H")
    starts_by_box: dict = {}
    for c, t in zip(map(tuple, visits_h.cells), visits_h.t_start):
        starts_by_box.setdefault(c, []).append(float(t))
    z_times = np.concatenate([t_z.times, [path.horizon]])
    word = t_z.word.entries
    fails = 0
    for k in range(1, len(word)):
        lo, hi = z_times[k - 1], z_times[k]
        ts = starts_by_box.get(word[k])
        if ts is None:
            fails += 1
            continue
        j = np.searchsorted(ts, lo, side="left")
        if j >= len(ts) or ts[j] > hi:
            fails += 1
    return fails


# ---------------------------------------------------------------------------
# Eta no-atom check.
# ---------------------------------------------------------------------------


class _EventIndex:
    """Per-trial sorted event lookup within one walker block."""

    def __init__(self, trials: np.ndarray, times: np.ndarray, payload: np.ndarray | None = None):
        order = np.lexsort((times, trials))
        self.trials = trials[order]
        self.times = times[order]
        self.payload = payload[order] if payload is not None else None
        self.prefix = np.concatenate([[0.0], np.cumsum(self.payload)]) if payload is not None else None

    def slice_of(self, trial: int):
        lo = np.searchsorted(self.trials, trial, side="left")
        hi = np.searchsorted(self.trials, trial, side="right")
        return lo, hi

    def first_after(self, trial: int, t: float) -> float:
        lo, hi = self.slice_of(trial)
        j = lo + np.searchsorted(self.times[lo:hi], t, side="right")
        return float(self.times[j]) if j < hi else math.inf

    def sum_until(self, trial: int, t: float) -> float:
        lo, hi = self.slice_of(trial)
        j = lo + np.searchsorted(self.times[lo:hi], t, side="right")
        return float(self.prefix[j] - self.prefix[lo])


def _single_box_events(pts3, box_center, h, r, want="enter"):
    """(trial, frac_step_time) of enter or exit crossings for one box."""
    A, K1, _ = pts3.shape
    K = K1 - 1
    a = pts3[:, :-1].reshape(-1, 2)
    b = pts3[:, 1:].reshape(-1, 2)
    lox = np.minimum(a[:, 0], b[:, 0]) - box_center[0]
    hix = np.maximum(a[:, 0], b[:, 0]) - box_center[0]
    loy = np.minimum(a[:, 1], b[:, 1]) - box_center[1]
    hiy = np.maximum(a[:, 1], b[:, 1]) - box_center[1]
    near = ~((lox > h) | (hix < -h) | (loy > h) | (hiy < -h))
    rows = np.nonzero(near)[0]
    if len(rows) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), (np.empty(0, dtype=np.int64), np.empty(0), np.empty(0))
    t_in, t_out = segment_box_intervals(a[rows] - box_center, b[rows] - box_center, h, r)
    if want == "enter":
        sel = np.isfinite(t_in) & (t_in > 0.0)
        u = t_in[sel]
    else:
        sel = np.isfinite(t_out) & (t_out < 1.0)
        u = t_out[sel]
    rsel = rows[sel]
    frac = (rsel % K) + u
    ivals_rows = rows[np.isfinite(t_in)]
    ival_uin = t_in[np.isfinite(t_in)]
    ival_uout = t_out[np.isfinite(t_in)]
    return rsel // K, frac, (ivals_rows, ival_uin, ival_uout)


def exp_eta_nonzero(cfg: ExperimentConfig) -> Report:
    """Distribution of the bump integral between nested stopping times.

    Start on the inner boundary; S0 exits the support box, S1 returns to the
    inner box before the far box is reached (the conditioning event), S2 exits
    the plateau box, T is the next far-box entry.  eta integrates the bump
    over [S0, T]; the conditional fraction with |eta| < delta must keep
    falling as delta shrinks (no atom at zero).
    """
    g = cfg.grid()
    h_H, r_H = g.family_geometry("H")
    h_K, r_K = g.family_geometry("K")
    h_Z, r_Z = g.family_geometry("Z")
    u_box = boxes_for(g, (2, 0))[3]
    form = bump_form(g, (0, 0))
    dt = 2.0 ** (-cfg.level)
    sdt = math.sqrt(dt)
    n = cfg.trials
    walker = BlockWalker(Seed(cfg.seed_base, 21), n, block_steps=256)
    K = walker.K

    start = np.array([h_H, 0.0])
    pos = np.tile(start, (n, 1))
    phase = np.zeros(n, dtype=np.int64)     # 0: await S0, 1: await S1/U, 2: await S2, 3: await T, 4/5: done
    cursor = np.zeros(n)                    # time of the last transition, in steps
    r_total = np.zeros(n)                   # running bump integral from t=0
    r_s0 = np.zeros(n)
    eta = np.full(n, np.nan)
    conditioned = np.zeros(n, dtype=bool)
    done = np.zeros(n, dtype=bool)

    for block in range(cfg.max_blocks):
        act = np.nonzero(~done)[0]
        if len(act) == 0:
            break
        draws = _gather_blocks(walker, block, act) * sdt
        A = len(act)
        pts = np.empty((A, K + 1, 2))
        pts[:, 0] = pos[act]
        np.cumsum(draws, axis=1, out=draws)
        pts[:, 1:] = pos[act, None, :] + draws

        tz, fz, z_ivals = _single_box_events(pts, (0.0, 0.0), h_Z, r_Z, want="exit")
        th, fh, _ = _single_box_events(pts, (0.0, 0.0), h_H, r_H, want="enter")
        tk, fk, _ = _single_box_events(pts, (0.0, 0.0), h_K, r_K, want="exit")
        tu, fu, _ = _single_box_events(pts, u_box.center, u_box.half_width, u_box.corner_radius, want="enter")
        ev = {0: _EventIndex(tz, fz), 1: _EventIndex(th, fh), 2: _EventIndex(tu, fu), 3: _EventIndex(tk, fk)}

        # bump contributions of the in-support intervals of this block
        zi_rows, zi_uin, zi_uout = z_ivals
        if len(zi_rows):
            a_rows = pts[:, :-1].reshape(-1, 2)[zi_rows]
            d_rows = pts[:, 1:].reshape(-1, 2)[zi_rows] - a_rows
            vals = _bump_rows(form, a_rows, d_rows, zi_uin, zi_uout)
            contrib_idx = _EventIndex(zi_rows // K, (zi_rows % K) + zi_uout, vals)
        else:
            contrib_idx = _EventIndex(np.empty(0, dtype=np.int64), np.empty(0), np.empty(0))

        # vectorized first-relevant-event prefilter, then per-trial transitions
        for t_local in range(A):
            gi = act[t_local]
            cur = cursor[gi]
            while True:
                ph = phase[gi]
                if ph == 0:
                    nxt = ev[0].first_after(t_local, cur)
                    if not math.isfinite(nxt):
                        break
                    r_s0[gi] = r_total[gi] + contrib_idx.sum_until(t_local, nxt)
                    phase[gi] = 1
                    cur = nxt
                elif ph == 1:
                    nxt_h = ev[1].first_after(t_local, cur)
                    nxt_u = ev[2].first_after(t_local, cur)
                    if not math.isfinite(min(nxt_h, nxt_u)):
                        break
                    if nxt_u < nxt_h:
                        done[gi] = True
                        phase[gi] = 5
                        break
                    conditioned[gi] = True  # inner boundary reached before the far box
                    phase[gi] = 2
                    cur = nxt_h
                elif ph == 2:
                    nxt = ev[3].first_after(t_local, cur)
                    if not math.isfinite(nxt):
                        break
                    phase[gi] = 3
                    cur = nxt
                elif ph == 3:
                    nxt = ev[2].first_after(t_local, cur)
                    if not math.isfinite(nxt):
                        break
                    eta[gi] = r_total[gi] + contrib_idx.sum_until(t_local, nxt) - r_s0[gi]
                    done[gi] = True
                    phase[gi] = 4
                    break
                else:
                    break
            if not done[gi]:
                cursor[gi] = 0.0  # next block restarts fractional step time
            r_total[gi] += contrib_idx.sum_until(t_local, math.inf)
        pos[act] = pts[:, -1]

    pending = int(np.sum(conditioned & ~done))
    resolved_idx = np.nonzero(conditioned & done & np.isfinite(eta))[0]
    etas = eta[resolved_idx]
    n_cond = len(etas)
    report = Report("eta-nonzero", cfg.to_json())
    if n_cond < 200:
        report.status = "inconclusive"
        report.aggregates = {"conditioning_events": n_cond, "pending_excluded": pending,
                             "note": "too few conditioning events for the decay check"}
        return report

    # The decay test targets the atom at zero, so it runs where delta is small
    # against the bulk scale (the conditional law is continuous but steeper
    # than linear near zero, and the first decade below the median only
    # measures shape).  A genuine atom pins the fractions and fails the test.
    scale = float(np.median(np.abs(etas)))
    deltas = [scale * 10.0 ** (-k) for k in range(cfg.delta_decades + 1)]
    fracs = [float(np.mean(np.abs(etas) < d)) for d in deltas]
    counts = [int(np.sum(np.abs(etas) < d)) for d in deltas]
    decays = []
    all_ok = True
    for k in range(len(deltas) - 1):
        resolvable = counts[k] >= 50 and deltas[k] <= scale / 30.0
        ratio = fracs[k] / fracs[k + 1] if fracs[k + 1] > 0 else math.inf
        ok = (not resolvable) or ratio >= 5.0
        all_ok &= ok
        decays.append({"delta": deltas[k], "fraction": fracs[k], "count": counts[k],
                       "ratio_to_next": ratio, "resolvable": resolvable, "ok": ok})
    if not any(d["resolvable"] for d in decays):
        report.status = "inconclusive"
    report.aggregates = {
        "conditioning_events": n_cond,
        "conditioning_rate": n_cond / n,
        "pending_excluded": pending,
        "eta_scale_median": scale,
        "decay_table": decays,
    }
    report.per_trial = [{"trial": int(i), "eta": float(eta[i]), "conditioned": True} for i in resolved_idx[:10000]]
    report.add_bound(
        name="eta-no-atom",
        statement="conditional fraction(|eta| < delta) falls at least 5x per delta decade "
                  "over the resolvable small-delta range",
        regime="relaxed" if g.regime() == "relaxed" else "tight",
        bound=5.0,
        estimate=min((d["ratio_to_next"] for d in decays if d["resolvable"]), default=math.inf),
        passed=all_ok,
    )
    report.validate_schema()
    return report


def _bump_rows(form, a_rows, d_rows, u_in, u_out):
    """bump_interval_integrals against explicit segment rows (not a path)."""
    nn = len(a_rows)
    inter = np.empty((2 * nn, 2))  # vertex layout with segment i = rows (2i, 2i+1)
    inter[0::2] = a_rows
    inter[1::2] = a_rows + d_rows
    vals, _ = bump_interval_integrals(form, inter, 2 * np.arange(nn), u_in, u_out)
    return vals


# ---------------------------------------------------------------------------
# Exit-position-conditioned area density diagnostics.
# ---------------------------------------------------------------------------


def exp_area_density(cfg: ExperimentConfig) -> Report:
    """Atom test and smoothness diagnostics for the stopped area integral.

    From the inner boundary to the first exit of the plateau box, the area
    integral (third diffusion component) is binned by exit position; within
    bins the mass near zero must vanish as delta shrinks and the histogram
    must have bounded adjacent-bin ratios.  Statistical evidence only.
    """
    g = cfg.grid()
    h_H, _ = g.family_geometry("H")
    h_K, r_K = g.family_geometry("K")
    dt = 2.0 ** (-cfg.level)
    sdt = math.sqrt(dt)
    n = cfg.trials
    walker = BlockWalker(Seed(cfg.seed_base, 31), n, block_steps=128)
    K = walker.K

    pos = np.tile([h_H, 0.0], (n, 1))
    z3 = np.zeros(n)
    xi = np.full(n, np.nan)
    exit_angle = np.full(n, np.nan)
    done = np.zeros(n, dtype=bool)

    for block in range(cfg.max_blocks):
        act = np.nonzero(~done)[0]
        if len(act) == 0:
            break
        draws = _gather_blocks(walker, block, act) * sdt
        A = len(act)
        pts = np.empty((A, K + 1, 2))
        pts[:, 0] = pos[act]
        np.cumsum(draws, axis=1, out=draws)
        pts[:, 1:] = pos[act, None, :] + draws
        a = pts[:, :-1].reshape(-1, 2)
        b = pts[:, 1:].reshape(-1, 2)
        t_in, t_out = segment_box_intervals(a, b, h_K, r_K)
        ev = np.isfinite(t_out) & (t_out < 1.0) & (t_in <= 0.0)
        event_time = np.full(A, np.inf)
        if ev.any():
            rows = np.nonzero(ev)[0]
            np.minimum.at(event_time, rows // K, (rows % K) + t_out[ev])
        seg_dz = 0.5 * (pts[:, :-1, 1] + pts[:, 1:, 1]) * np.diff(pts[:, :, 0], axis=1)
        prefix = np.concatenate([np.zeros((A, 1)), np.cumsum(seg_dz, axis=1)], axis=1)
        evt = np.isfinite(event_time)
        if evt.any():
            rows = np.nonzero(evt)[0]
            s = event_time[rows].astype(int)
            u = event_time[rows] - s
            p0 = pts[rows, s]
            p1 = pts[rows, s + 1]
            dx = p1[:, 0] - p0[:, 0]
            dy = p1[:, 1] - p0[:, 1]
            partial = dx * (p0[:, 1] * u + dy * u * u / 2.0)
            gidx = act[rows]
            xi[gidx] = z3[gidx] + prefix[rows, s] + partial
            hp = p0 + u[:, None] * (p1 - p0)
            exit_angle[gidx] = np.arctan2(hp[:, 1], hp[:, 0])
            done[gidx] = True
        cont = np.nonzero(~evt)[0]
        z3[act[cont]] += prefix[cont, -1]
        pos[act] = pts[:, -1]

    resolved = np.nonzero(done)[0]
    excluded = int(n - len(resolved))
    xv = xi[resolved]
    ang = exit_angle[resolved]
    n_bins = 12
    bins = np.floor((ang + math.pi) / (2 * math.pi) * n_bins).astype(int) % n_bins
    deltas = [10.0 ** (-k) * float(np.median(np.abs(xv))) for k in range(4)]
    bin_stats = []
    thin = 0
    for bi in range(n_bins):
        vals = xv[bins == bi]
        if len(vals) < 100:
            thin += 1
            bin_stats.append({"bin": bi, "count": int(len(vals)), "thin": True})
            continue
        fr = [float(np.mean(np.abs(vals) < d)) for d in deltas]
        hist, _ = np.histogram(vals, bins=16)
        busy = hist[hist >= 10]
        ratio = float(np.max(busy[1:] / np.maximum(busy[:-1], 1))) if len(busy) > 1 else 1.0
        bin_stats.append({"bin": bi, "count": int(len(vals)), "thin": False,
                          "atom_fractions": fr, "max_adjacent_hist_ratio": ratio})
    sign_balance = float(np.mean(np.sign(xv)))
    sym_se = 1.0 / math.sqrt(len(xv)) if len(xv) else math.inf

    report = Report("area-density", cfg.to_json())
    report.aggregates = {
        "resolved": int(len(resolved)),
        "excluded_unresolved": excluded,
        "thin_bins_flagged": thin,
        "sign_balance": sign_balance,
        "sign_balance_se": sym_se,
        "bin_stats": bin_stats,
        "deltas": deltas,
    }
    decay_ok = all(
        (b["atom_fractions"][0] > b["atom_fractions"][-1]) or b["atom_fractions"][0] < 0.02
        for b in bin_stats if not b.get("thin")
    )
    report.add_bound(
        name="area-atom-decay",
        statement="within every populated exit bin the mass of {|area| < delta} decreases as delta shrinks",
        regime="relaxed" if g.regime() == "relaxed" else "tight",
        bound=1.0,
        estimate=1.0 if decay_ok else 0.0,
        passed=decay_ok,
    )
    report.add_bound(
        name="area-symmetry",
        statement="axis-symmetric start makes the stopped area integral sign-symmetric within 3 SE",
        regime="exact",
        bound=3.0,
        estimate=abs(sign_balance) / sym_se if sym_se > 0 else 0.0,
        passed=abs(sign_balance) <= 3.0 * sym_se,
    )
    report.validate_schema()
    return report


# ---------------------------------------------------------------------------
# Identity suites.
# ---------------------------------------------------------------------------


def _relative(residual: float, scale: float) -> float:
    return residual / max(1.0, abs(scale))


def exp_identities(cfg: ExperimentConfig) -> Report:
    """Algebraic identity suites over a seeded path corpus, all-pass report.

    Covers the permutation-sum product identity, Chen multiplicativity,
    shuffle products, reversal inverses, agreement of the direct nested
    integral with the tensor coefficients, and convergence of integrals under
    polynomial approximants of the bump form.
    """
    import itertools

    from .forms import coordinate_form, iterated_form_integral
    from .signature import identity_series, segment_signature

    n_paths = max(10, cfg.trials)
    level = cfg.level
    base = cfg.seed_base
    report = Report("identities", cfg.to_json())

    # permutation-sum identity, indices up to length 4
    max_poly = 0.0
    for i in range(n_paths):
        path = sample_brownian(Seed(base, i), level)
        sig = path_signature(path, 4)
        disp = path.points[-1] - path.points[0]
        for m in range(1, 5):
            for idx in itertools.product((1, 2), repeat=m):
                total = 0.0
                for perm in itertools.permutations(range(m)):
                    total += sig.coeff(tuple(idx[p] for p in perm))
                prod = 1.0
                for j in idx:
                    prod *= disp[j - 1]
                max_poly = max(max_poly, _relative(abs(prod - total), prod))
    report.aggregates["poly_identity_max_rel_residual"] = max_poly
    report.add_bound("poly-identity", "max relative residual of the permutation-sum identity < 1e-9",
                     "exact", 1e-9, max_poly, max_poly < 1e-9)

    # Chen multiplicativity across a split
    max_chen = 0.0
    for i in range(10):
        path = sample_brownian(Seed(base, 1000 + i), 7)
        mid = len(path.times) // 2
        first = PiecewisePath(path.times[: mid + 1], path.points[: mid + 1])
        second = PiecewisePath(path.times[mid:] - path.times[mid], path.points[mid:])
        whole = path_signature(path, cfg.truncation)
        glued = chen_concat(path_signature(first, cfg.truncation), path_signature(second, cfg.truncation))
        max_chen = max(max_chen, float(np.max(np.abs(whole.coeffs - glued.coeffs))))
    report.aggregates["chen_max_abs_residual"] = max_chen
    report.add_bound("chen-multiplicativity", "signature of a concatenation equals the tensor product",
                     "exact", 1e-12, max_chen, max_chen < 1e-12)

    # shuffle identity over all word pairs with |u|+|v| <= 6
    max_shuffle = 0.0
    words = [w for m in range(1, 6) for w in itertools.product((1, 2), repeat=m)]
    for i in range(5):
        path = sample_brownian(Seed(base, 2000 + i), 7)
        sig = path_signature(path, 6)
        for u in words:
            for v in words:
                if len(u) + len(v) > 6:
                    continue
                lhs = sig.coeff(u) * sig.coeff(v)
                rhs = sum(sig.coeff(w) for w in shuffle(u, v))
                max_shuffle = max(max_shuffle, _relative(abs(lhs - rhs), lhs))
    report.aggregates["shuffle_max_rel_residual"] = max_shuffle
    report.add_bound("shuffle-identity", "coefficient products expand over shuffles of the index words",
                     "exact", 1e-10, max_shuffle, max_shuffle < 1e-10)

    # reversal gives the concatenation inverse
    max_rev = 0.0
    for i in range(10):
        path = sample_brownian(Seed(base, 3000 + i), 7)
        rev = PiecewisePath(path.times, path.points[::-1].copy())
        prod = chen_concat(path_signature(path, cfg.truncation), path_signature(rev, cfg.truncation))
        ident = identity_series(2, cfg.truncation)
        max_rev = max(max_rev, float(np.max(np.abs(prod.coeffs - ident.coeffs))))
    report.aggregates["reversal_max_abs_residual"] = max_rev
    report.add_bound("reversal-inverse", "reversed-path signature is the concatenation inverse",
                     "exact", 1e-10, max_rev, max_rev < 1e-10)

    # direct nested integral equals the tensor coefficient
    rng_words = [(1,), (2,), (1, 2), (2, 1), (1, 1, 2), (2, 1, 2), (1, 2, 2, 1)]
    max_dual = 0.0
    for i in range(15):
        path = sample_brownian(Seed(base, 4000 + i), 7)
        sig = path_signature(path, 4)
        for w in rng_words:
            direct = coordinate_iterated_integral(path, w)
            max_dual = max(max_dual, _relative(abs(direct - sig.coeff(w)), sig.coeff(w)))
    report.aggregates["dual_route_max_rel_residual"] = max_dual
    report.add_bound("dual-computation", "nested running integral equals the tensor coefficient",
                     "exact", 1e-10, max_dual, max_dual < 1e-10)

    # polynomial approximants drive the iterated integrals to the true values
    g = GridSpec(0.24, 0.23)
    form = bump_form(g, (0, 0))
    h_z, _ = g.family_geometry("Z")
    window = RoundedSquare((0.0, 0.0), 1.6 * h_z, 0.0)
    degrees = (2, 10, 18)
    errs = {d: [] for d in degrees}
    fits = {d: approximate_form_by_polynomials(form, d, window)[0] for d in degrees}
    for i in range(10):
        raw = sample_brownian(Seed(base, 5000 + i), 7)
        pts = raw.points * (1.3 * h_z / max(1e-9, float(np.abs(raw.points).max())))
        path = PiecewisePath(raw.times, pts)
        true_val = line_integral(path, form)
        for d in degrees:
            errs[d].append(abs(line_integral(path, fits[d]) - true_val))
    mean_errs = {d: float(np.mean(errs[d])) for d in degrees}
    report.aggregates["poly_approx_mean_errors"] = {str(d): mean_errs[d] for d in degrees}
    improved = mean_errs[degrees[-1]] < mean_errs[degrees[0]]
    report.add_bound("poly-approximation-convergence",
                     "integrals under polynomial approximants approach the true integral as degree grows",
                     "relaxed", mean_errs[degrees[0]], mean_errs[degrees[-1]], improved)
    report.validate_schema()
    return report


# ---------------------------------------------------------------------------
# End-to-end reconstruction.
# ---------------------------------------------------------------------------


def exp_reconstruction(cfg: ExperimentConfig) -> Report:
    """Trace/table/detect round trip with word-match rates and a scale sweep.

    A trial is clean when the two trace families coincide and detection is
    unambiguous; on clean trials the detected word must reproduce the tighter
    family's word.  The Frechet distance between the reconstructed polygon
    and the driving path is tracked across the scale sweep.
    """
    from .reconstruct import precompute_visit_integrals

    sweep = tuple(cfg.eps_sweep) or (cfg.epsilon,)
    report = Report("reconstruction", cfg.to_json())
    sweep_stats = []
    for eps in sweep:
        g = GridSpec(eps, None if cfg.phi is None else cfg.phi, cfg.beta, cfg.alpha_note)
        n = cfg.trials
        clean_match = 0
        clean_total = 0
        z_match = 0
        unambiguous = 0
        coincident_n = 0
        ambiguous_n = 0
        frech_hat = []
        frech_trace = []
        theta_robust = 0
        theta_checked = 0
        for i in range(n):
            path = sample_brownian(Seed(cfg.seed_base, i), cfg.level)
            t_h = trace(path, g, "H")
            t_z = trace(path, g, "Z")
            co = coincidence(t_h, t_z)
            coincident_n += co
            window = int(np.ceil(np.abs(path.points).max() / eps)) + cfg.window_margin
            vi = precompute_visit_integrals(path, g, window)
            table = build_table(path, g, window, max_len=8 * (t_z.M + 2), theta_rel=cfg.theta_rel,
                                strategy="greedy", visit_integrals=vi)
            rec = {"trial": i, "eps": eps, "M_H": t_h.M, "M_Z": t_z.M, "coincident": bool(co)}
            try:
                result = detect_word(table)
                unambiguous += 1
                matches_h = result.word.entries == t_h.word.entries
                matches_z = result.word.entries == t_z.word.entries
                z_match += matches_z
                if co:
                    clean_total += 1
                    clean_match += matches_h
                poly_hat = reconstruct_polygon(result, g)
                fh = frechet_distance(poly_hat, path)
                ft = frechet_distance(polygon(t_h), path)
                frech_hat.append(fh)
                frech_trace.append(ft)
                rec.update({"m_hat": result.m_hat, "match_h": bool(matches_h),
                            "match_z": bool(matches_z), "frechet_hat": fh, "frechet_trace": ft})
                if i < 20:
                    theta_checked += 1
                    words = set()
                    for scale in (0.1, 1.0, 10.0):
                        tb = build_table(path, g, window, max_len=8 * (t_z.M + 2),
                                         theta_rel=cfg.theta_rel * scale, strategy="greedy",
                                         visit_integrals=vi)
                        try:
                            words.add(detect_word(tb).word.entries)
                        except AmbiguousWord:
                            words.add(("ambiguous",))
                    theta_robust += len(words) == 1
            except AmbiguousWord as err:
                ambiguous_n += 1
                rec.update({"flagged": "ambiguous", "detail": str(err)})
            report.per_trial.append(rec)
        frech_hat = np.array(frech_hat)
        stats = {
            "eps": eps,
            "trials": n,
            "coincidence_rate": coincident_n / n,
            "ambiguous": ambiguous_n,
            "clean_trials": clean_total,
            "word_match_rate_clean": clean_match / clean_total if clean_total else None,
            "tight_family_match_rate": z_match / unambiguous if unambiguous else None,
            "frechet_hat_median": float(np.median(frech_hat)) if len(frech_hat) else None,
            "frechet_hat_quartiles": [float(np.percentile(frech_hat, q)) for q in (25, 75)] if len(frech_hat) else None,
            "frechet_trace_median": float(np.median(frech_trace)) if frech_trace else None,
            "theta_robust_fraction": theta_robust / theta_checked if theta_checked else None,
        }
        sweep_stats.append(stats)
    report.aggregates["sweep"] = sweep_stats

    primary = sweep_stats[-1] if len(sweep) > 1 else sweep_stats[0]
    # choose the configured epsilon's row when present
    for s in sweep_stats:
        if s["eps"] == cfg.epsilon:
            primary = s
    rate = primary["word_match_rate_clean"]
    report.add_bound(
        name="clean-word-match",
        statement="on trials with coincident traces and unambiguous detection, the detected word "
                  "equals the inner-family trace word for >= 95%",
        regime="relaxed",
        bound=0.95,
        estimate=rate if rate is not None else "vacuous (no clean trials)",
        passed=(rate is None) or rate >= 0.95,
        clean_trials=primary["clean_trials"],
        tight_family_match_rate=primary["tight_family_match_rate"],
    )
    if len(sweep_stats) > 1:
        medians = [s["frechet_hat_median"] for s in sweep_stats]
        eps_order = [s["eps"] for s in sweep_stats]
        order = np.argsort(eps_order)[::-1]
        med_sorted = [medians[i] for i in order]
        decreasing = all(a > b for a, b in zip(med_sorted, med_sorted[1:]))
        report.add_bound(
            name="frechet-sweep-decreasing",
            statement="median Frechet distance between the reconstructed polygon and the path "
                      "decreases as the grid scale shrinks",
            regime="relaxed",
            bound="monotone",
            estimate=med_sorted,
            passed=decreasing,
        )
    report.validate_schema()
    return report


# ---------------------------------------------------------------------------
# Dispatch.
# ---------------------------------------------------------------------------


EXPERIMENTS = {
    "exit-probability": exp_exit_probability,
    "excursion-bound": exp_excursion_bound,
    "coincidence": exp_coincidence,
    "eta-nonzero": exp_eta_nonzero,
    "area-density": exp_area_density,
    "identities": exp_identities,
    "reconstruction": exp_reconstruction,
}

DEFAULT_CONFIGS = {
    "exit-probability": dict(trials=100_000, epsilon=0.1, phi=0.001, mode="disk"),
    "excursion-bound": dict(trials=20_000, epsilon=0.25, level=12),
    "coincidence": dict(trials=2_000, epsilon=0.2, level=12),
    "eta-nonzero": dict(trials=16_000, epsilon=0.25, level=12),
    "area-density": dict(trials=4_000, epsilon=0.25, level=12),
    "identities": dict(trials=30, level=8),
    "reconstruction": dict(trials=50, epsilon=0.1, level=14, eps_sweep=(0.4, 0.2, 0.1)),
}


def run_experiment(name: str, cfg: ExperimentConfig | None = None) -> Report:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    if cfg is None:
        cfg = ExperimentConfig(experiment=name, **DEFAULT_CONFIGS[name])
    cfg.experiment = name
    t0 = time.perf_counter()
    report = EXPERIMENTS[name](cfg)
    report.timing = {"wall_clock_s": time.perf_counter() - t0}
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report
