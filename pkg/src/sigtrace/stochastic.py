"""Seedable planar Brownian motion by dyadic midpoint refinement.

Gaussian draws are counter-based: every draw is addressed by (base, stream,
index) through a Philox generator plus inverse-CDF transform, so trials are
order-independent and refining a path re-reads exactly the draws it needs.
The unit-horizon path at dyadic level n places independent N(0, 2^-n)
increments on the grid j * 2^-n; refining to a deeper level inserts Brownian
bridge midpoints and restricts bit-identically to the coarse path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

from .geometry import RoundedSquare, segment_box_intervals

__all__ = [
    "Seed",
    "PiecewisePath",
    "sample_brownian",
    "refine",
    "simulate_area_diffusion",
    "area_at",
    "first_hit",
    "subpath",
    "normals_for_stream",
]

MAX_LEVEL = 24
_U64 = np.uint64
_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    """Reproducibility handle: base selects the experiment, stream the trial."""

    base: int
    stream: int = 0

    def with_stream(self, stream: int) -> "Seed":
        return Seed(self.base, stream)


def _uniforms(base: int, stream: int, start: int, count: int) -> np.ndarray:
    """Uniforms at flat counter indices [start, start+count), order-independent."""
    if count <= 0:
        return np.empty(0)
    b0 = start // 4
    n_blocks = (start + count + 3) // 4 - b0
    key = np.array([base & _MASK, stream & _MASK], dtype=_U64)
    counter = np.array([b0, 0, 0, 0], dtype=_U64)
    u = Generator(Philox(key=key, counter=counter)).random(n_blocks * 4)
    off = start - 4 * b0
    return u[off : off + count]


def normals_for_stream(seed: Seed, start_index: int, count: int) -> np.ndarray:
    """Standard normals at draw indices [start_index, start_index+count).

    Each draw consumes exactly one uniform (inverse CDF), which keeps the
    counter addressing stable across block boundaries.
    """
    u = _uniforms(seed.base, seed.stream, start_index, count)
    return ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))


@dataclass
class PiecewisePath:
    """Timestamped polyline: strictly increasing times from 0, points in R^2 or R^3."""

    times: np.ndarray
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.times.ndim != 1 or self.points.ndim != 2:
            raise ValueError("times must be 1-d and points 2-d")
        if len(self.times) != len(self.points) or len(self.times) < 2:
            raise ValueError("need matching times/points with at least two samples")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must start at 0 and increase strictly")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def increments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    def to_json(self) -> dict:
        out = {"times": self.times.tolist(), "points": self.points.tolist()}
        if "level" in self.meta:
            out["level"] = self.meta["level"]
        if "seed" in self.meta:
            out["seed"] = list(self.meta["seed"])
        return out

    @staticmethod
    def from_json(obj: dict) -> "PiecewisePath":
        meta = {}
        if "level" in obj:
            meta["level"] = obj["level"]
        if "seed" in obj:
            meta["seed"] = tuple(obj["seed"])
        return PiecewisePath(np.array(obj["times"]), np.array(obj["points"]), meta)


# Dyadic draw layout: draw index 0 is the terminal value W(1); the midpoint at
# (2j+1)/2^L uses draw index 2^(L-1) + j.  Coordinate c of draw k sits at flat
# counter index 2k + c, so deeper levels extend rather than reshuffle draws.


def _dyadic_normals(seed: Seed, level: int) -> np.ndarray:
    n = 1 << level
    return normals_for_stream(seed, 0, 2 * n).reshape(n, 2)


def sample_brownian(seed: Seed, level: int, dims: int = 2) -> PiecewisePath:
    """Planar Brownian path on [0, 1] sampled at dyadic level `level`.

    dims may be 2 or 3 for interface symmetry with the area diffusion, but the
    sampled path is always planar (three-component paths only arise from
    simulate_area_diffusion).
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must lie in [0, {MAX_LEVEL}]")
    if dims not in (2, 3):
        raise ValueError("dims must be 2 or 3")
    n = 1 << level
    g = _dyadic_normals(seed, level)
    w = np.zeros((n + 1, 2))
    w[n] = g[0]
    for lev in range(1, level + 1):
        half = 1 << (lev - 1)
        step = n >> lev
        mid = step + 2 * step * np.arange(half)
        sigma = 2.0 ** (-(lev + 1) / 2.0)
        w[mid] = 0.5 * (w[mid - step] + w[mid + step]) + sigma * g[half : 2 * half]
    times = np.arange(n + 1) / n
    return PiecewisePath(times, w, {"level": level, "seed": (seed.base, seed.stream), "kind": "brownian"})


def refine(path: PiecewisePath, seed: Seed, to_level: int) -> PiecewisePath:
    """Brownian-bridge refinement; restriction to the coarse grid is bit-identical."""
    cur = path.meta.get("level")
    if cur is None or path.meta.get("kind") != "brownian":
        raise ValueError("refine expects a dyadic Brownian sample")
    if to_level <= cur:
        raise ValueError("to_level must exceed the current level")
    fine = sample_brownian(seed, to_level)
    stride = 1 << (to_level - cur)
    if not np.array_equal(fine.points[::stride], path.points):
        raise ValueError("path does not restrict from this seed (wrong seed or tampered path)")
    return fine


def simulate_area_diffusion(driver: PiecewisePath) -> PiecewisePath:
    """Lift a planar driver to (x1, x2, area): the third component accrues
    the exact piecewise-linear value of int x2 dx1 (midpoint rule per segment)."""
    if driver.dim != 2:
        raise ValueError("driver must be planar")
    x, y = driver.points[:, 0], driver.points[:, 1]
    dz = 0.5 * (y[:-1] + y[1:]) * np.diff(x)
    z = np.concatenate([[0.0], np.cumsum(dz)])
    pts = np.column_stack([x, y, z])
    meta = dict(driver.meta)
    meta["kind"] = "area-diffusion"
    return PiecewisePath(driver.times.copy(), pts, meta)


def area_at(path3: PiecewisePath, t: float) -> float:
    """Exact value of the third (area) component at an arbitrary time.

    Within a segment the running integral of x2 dx1 is quadratic in the
    segment parameter, so mid-segment stopping times are evaluated exactly.
    """
    if path3.dim != 3:
        raise ValueError("expects an area-diffusion path")
    times = path3.times
    if not times[0] <= t <= times[-1]:
        raise ValueError("t outside the path horizon")
    i = int(np.searchsorted(times, t, side="right")) - 1
    i = min(max(i, 0), len(times) - 2)
    dt = times[i + 1] - times[i]
    s = (t - times[i]) / dt
    x0, y0, z0 = path3.points[i]
    x1, y1, _ = path3.points[i + 1]
    return float(z0 + (x1 - x0) * (y0 * s + (y1 - y0) * s * s / 2.0))


def first_hit(path: PiecewisePath, sq: RoundedSquare, from_time: float = 0.0):
    """Earliest boundary crossing (either direction) strictly after from_time.

    Segment-exact against the rounded square; returns (time, point) or None.
    """
    times, pts = path.times, path.points
    if not times[0] <= from_time < times[-1]:
        raise ValueError("from_time outside the path horizon")
    i0 = min(max(int(np.searchsorted(times, from_time, side="right")) - 1, 0), len(times) - 2)
    c = np.asarray(sq.center)
    A = pts[i0:-1, :2] - c
    B = pts[i0 + 1 :, :2] - c
    t_in, t_out = segment_box_intervals(A, B, sq.half_width, sq.corner_radius)
    dts = np.diff(times[i0:])
    u_floor = np.zeros(len(A))
    u_floor[0] = (from_time - times[i0]) / dts[0]

    enter_ok = (t_in > u_floor) & np.isfinite(t_in) & (t_in > 0.0)
    exit_ok = (t_out > u_floor) & np.isfinite(t_out) & (t_out < 1.0)
    first_u = np.where(enter_ok, t_in, np.inf)
    first_u = np.minimum(first_u, np.where(exit_ok, t_out, np.inf))
    hit_rows = np.nonzero(np.isfinite(first_u))[0]
    if len(hit_rows) == 0:
        return None
    row = int(hit_rows[0])
    u = float(first_u[row])
    t_hit = times[i0 + row] + u * dts[row]
    p_hit = pts[i0 + row, :2] + u * (pts[i0 + row + 1, :2] - pts[i0 + row, :2])
    return t_hit, tuple(p_hit)


def subpath(path: PiecewisePath, t0: float, t1: float) -> PiecewisePath:
    """Restriction to [t0, t1] with interpolated endpoints; times shift to start at 0."""
    if not (path.times[0] <= t0 < t1 <= path.times[-1]):
        raise ValueError("need times[0] <= t0 < t1 <= horizon")
    times, pts = path.times, path.points

    def interp(t):
        i = min(max(int(np.searchsorted(times, t, side="right")) - 1, 0), len(times) - 2)
        s = (t - times[i]) / (times[i + 1] - times[i])
        return pts[i] + s * (pts[i + 1] - pts[i])

    inner = (times > t0) & (times < t1)
    t_mid = times[inner]
    p_mid = pts[inner]
    new_t = np.concatenate([[t0], t_mid, [t1]]) - t0
    new_p = np.vstack([interp(t0), p_mid, interp(t1)])
    keep = np.concatenate([[True], np.diff(new_t) > 0.0])
    return PiecewisePath(new_t[keep], new_p[keep], {"kind": "subpath", "of": path.meta.get("kind")})
