"""Rounded squares, nested grid box families, and segment/boundary intersections.

Everything here is pure 2-d geometry: axis-aligned squares whose corners are
replaced by quarter-circle arcs, the four concentric box families H < K < Z < V
attached to each lattice cell, Minkowski gauges, and exact first-crossing
parameters of line segments against box boundaries.  All predicates treat the
boxes as closed sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RoundedSquare",
    "GridSpec",
    "contains",
    "gauge",
    "gauge_many",
    "boxes_for",
    "segment_first_hit",
    "segment_box_intervals",
    "membership_defect",
]


@dataclass(frozen=True)
class RoundedSquare:
    """Axis-aligned square with corners replaced by quarter-circle arcs.

    The set is { p : dist(p - center, core) <= corner_radius } where core is
    the square of half-width (half_width - corner_radius).  corner_radius = 0
    gives the plain square; corner_radius must stay strictly below half_width.
    """

    center: tuple[float, float]
    half_width: float
    corner_radius: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0.0:
            raise ValueError("half_width must be positive")
        if not 0.0 <= self.corner_radius < self.half_width:
            raise ValueError("corner_radius must lie in [0, half_width)")

    def scaled(self, factor: float) -> "RoundedSquare":
        """Concentric similarity scaling (corner radius scales with the box)."""
        return RoundedSquare(self.center, factor * self.half_width, factor * self.corner_radius)

    def to_json(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "half_width": self.half_width,
            "corner_radius": self.corner_radius,
        }

    @staticmethod
    def from_json(obj: dict) -> "RoundedSquare":
        return RoundedSquare(tuple(obj["center"]), obj["half_width"], obj["corner_radius"])


def membership_defect(qx, qy, half_width, corner_radius):
    """Signed membership test relative to the box center, vectorized.

    Returns dist(q, core)^2 - corner_radius^2 where core is the inner square;
    <= 0 means the point lies in the closed rounded square.  The distances are
    associated as (|q| - half_width) + corner_radius so that points exactly on
    an edge evaluate to zero without rounding.
    """
    dx = np.maximum((np.abs(qx) - half_width) + corner_radius, 0.0)
    dy = np.maximum((np.abs(qy) - half_width) + corner_radius, 0.0)
    return dx * dx + dy * dy - corner_radius * corner_radius


def contains(sq: RoundedSquare, p) -> bool:
    """True iff p lies in the closed rounded square."""
    qx = p[0] - sq.center[0]
    qy = p[1] - sq.center[1]
    return bool(membership_defect(qx, qy, sq.half_width, sq.corner_radius) <= 0.0)


def gauge(p, sq: RoundedSquare) -> float:
    """Minkowski gauge inf{lam > 0 : p/lam in sq} for a box centered at the origin.

    Scaling acts as a similarity (the corner radius scales with the box).
    Resolved by bisection on membership to 1e-12 absolute in lam.
    """
    if sq.center != (0.0, 0.0) and tuple(sq.center) != (0.0, 0.0):
        raise ValueError("gauge requires a box centered at the origin")
    out = gauge_many(np.asarray([[p[0], p[1]]], dtype=float), sq.half_width, sq.corner_radius)
    return float(out[0])


def gauge_many(points: np.ndarray, half_width: float, corner_radius: float, tol: float = 1e-12) -> np.ndarray:
    """Vectorized gauge of points relative to an origin-centered rounded square.

    Bisection on the membership predicate; the bracket comes from the nested
    squares of half-widths half_width and (half_width - corner_radius).
    """
    pts = np.asarray(points, dtype=float)
    m = np.max(np.abs(pts), axis=-1)
    h, r = half_width, corner_radius
    if r == 0.0:
        return m / h
    lo = m / h              # p in lam*sq implies sup-norm <= lam*h
    hi = m / (h - r)        # sup-norm <= lam*(h-r) implies p in lam*sq
    width = np.max(hi - lo) if lo.size else 0.0
    n_iter = max(1, int(math.ceil(math.log2(max(width, tol) / tol))) + 2)
    qx, qy = pts[..., 0], pts[..., 1]
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        lam = np.where(mid > 0.0, mid, 1.0)
        inside = membership_defect(qx / lam, qy / lam, h, r) <= 0.0
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out = 0.5 * (lo + hi)
    return np.where(m == 0.0, 0.0, out)


@dataclass(frozen=True)
class GridSpec:
    """Scale parameters of the nested box families on the epsilon-lattice.

    epsilon is the lattice pitch, phi the gap value (0 < phi < epsilon), beta
    the corner exponent (the unit box carries corner radius epsilon**beta),
    and alpha_note records the declared gap exponent for report metadata.
    The tight regime phi << epsilon**alpha with alpha >= 10 is expressible but
    numerically invisible at desk scale; defaults are phi = epsilon**2 and
    beta = 3.
    """

    epsilon: float
    phi: float | None = None
    beta: float = 3.0
    alpha_note: float = 10.0

    def __post_init__(self):
        # the tight-regime analysis asks for epsilon < 1/4, but every structural
        # invariant (nesting, positive gaps) holds up to 1/2, and the coarse end
        # of the scale sweep uses epsilon = 0.4
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.phi is None:
            object.__setattr__(self, "phi", self.epsilon**2)
        if not 0.0 < self.phi < self.epsilon:
            raise ValueError("phi must lie in (0, epsilon)")
        if self.epsilon**self.beta >= 0.5:
            raise ValueError("corner radius epsilon**beta must stay below 1/2")

    # Similarity scales of the four families; each box is eps*z + a*G with G
    # the unit rounded square of half-width 1/2 and corner radius eps**beta.
    @property
    def scale_h(self) -> float:
        return self.epsilon * (1.0 - self.epsilon)

    @property
    def scale_k(self) -> float:
        return self.epsilon * (1.0 - self.epsilon + self.epsilon * self.phi / 2.0)

    @property
    def scale_z(self) -> float:
        return self.epsilon * (1.0 - self.epsilon + self.epsilon * self.phi)

    @property
    def scale_v(self) -> float:
        return self.epsilon

    def half_widths(self) -> tuple[float, float, float, float]:
        return (self.scale_h / 2, self.scale_k / 2, self.scale_z / 2, self.scale_v / 2)

    def family_geometry(self, family: str) -> tuple[float, float]:
        """(half_width, corner_radius) of one family's box."""
        scale = {"H": self.scale_h, "K": self.scale_k, "Z": self.scale_z, "V": self.scale_v}[family]
        return scale / 2.0, scale * self.epsilon**self.beta

    def regime(self) -> str:
        """'tight' when the declared exponent regime actually holds."""
        tight = self.alpha_note >= 10 and self.phi <= self.epsilon**self.alpha_note and self.beta >= 10
        return "tight" if tight else "relaxed"

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "phi": self.phi, "beta": self.beta, "alpha_note": self.alpha_note}


def boxes_for(g: GridSpec, z) -> tuple[RoundedSquare, RoundedSquare, RoundedSquare, RoundedSquare]:
    """The concentric boxes (H, K, Z, V) of lattice cell z, centers epsilon*z."""
    cx, cy = g.epsilon * z[0], g.epsilon * z[1]
    out = []
    for fam in "HKZV":
        h, r = g.family_geometry(fam)
        out.append(RoundedSquare((cx, cy), h, r))
    return tuple(out)


# ---------------------------------------------------------------------------
# Segment / boundary intersection.
#
# For a segment p(t) = A + t*(B - A) in box-centered coordinates, the set
# {t : p(t) in box} is a single interval because the box is convex.  Its
# endpoints are roots of the boundary equations: four edge lines and four
# corner circles give at most 12 candidate parameters; midpoint membership
# between consecutive candidates classifies the interval robustly, so spurious
# candidates are harmless.
# ---------------------------------------------------------------------------


def segment_box_intervals(A: np.ndarray, B: np.ndarray, half_width: float, corner_radius: float):
    """Entry/exit parameters of segments against one origin-centered box.

    A, B: arrays of shape (n, 2), segment endpoints relative to the box
    center.  Returns (t_in, t_out) of shape (n,); t_in = inf marks segments
    that never meet the box.  A segment starting inside has t_in = 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    D = B - A
    h, r = half_width, corner_radius
    hc = h - r

    cand = np.full((n, 14), 1.0)
    cand[:, 0] = 0.0
    col = 1

    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in (0, 1):
            d = D[:, axis]
            a = A[:, axis]
            for side in (-h, h):
                t = (side - a) / d
                cand[:, col] = np.where(np.isfinite(t), t, 1.0)
                col += 1
        # corner circles centered at (sx*hc, sy*hc)
        dd = np.einsum("ij,ij->i", D, D)
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                ex = A[:, 0] - sx * hc
                ey = A[:, 1] - sy * hc
                b = D[:, 0] * ex + D[:, 1] * ey
                c0 = ex * ex + ey * ey - r * r
                disc = b * b - dd * c0
                sq = np.sqrt(np.maximum(disc, 0.0))
                ok = (disc >= 0.0) & (dd > 0.0)
                t1 = np.where(ok, (-b - sq) / dd, 1.0)
                t2 = np.where(ok, (-b + sq) / dd, 1.0)
                cand[:, col] = np.where(np.isfinite(t1), t1, 1.0)
                cand[:, col + 1] = np.where(np.isfinite(t2), t2, 1.0)
                col += 2

    np.clip(cand, 0.0, 1.0, out=cand)
    cand.sort(axis=1)
    mids = 0.5 * (cand[:, :-1] + cand[:, 1:])
    px = A[:, 0, None] + mids * D[:, 0, None]
    py = A[:, 1, None] + mids * D[:, 1, None]
    inside = membership_defect(px, py, h, r) <= 0.0
    # the interval also reaches t = 1 when the endpoint itself is inside
    end_inside = membership_defect(B[:, 0], B[:, 1], h, r) <= 0.0

    any_in = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    last = inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1)
    rows = np.arange(n)
    t_in = np.where(any_in, cand[rows, first], np.inf)
    t_out = np.where(any_in, np.where(end_inside, 1.0, cand[rows, np.minimum(last + 1, 13)]), np.inf)
    return t_in, t_out


def segment_first_hit(a, b, sq: RoundedSquare, mode: str = "enter"):
    """First boundary crossing of segment a->b in the requested direction.

    mode='enter' requires the start point strictly outside (a segment already
    inside yields None); mode='exit' symmetrically requires it inside.  Returns
    (t_star, hit_point) or None.  Tangential touches do not count as crossings.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("segment endpoints must differ")
    c = np.asarray(sq.center, dtype=float)
    A = (a - c)[None, :]
    B = (b - c)[None, :]
    t_in, t_out = segment_box_intervals(A, B, sq.half_width, sq.corner_radius)
    t_in, t_out = float(t_in[0]), float(t_out[0])
    start_inside = membership_defect(A[0, 0], A[0, 1], sq.half_width, sq.corner_radius) <= 0.0

    if mode == "enter":
        if start_inside or not np.isfinite(t_in) or t_in <= 0.0:
            return None
        t = t_in
    elif mode == "exit":
        if not start_inside or not np.isfinite(t_out) or t_out >= 1.0:
            return None
        t = t_out
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return t, tuple(a + t * (b - a))
