"""Compactly supported 1-forms and their (iterated) line integrals.

The workhorse is the bump form attached to a lattice cell: f(x) dx1 with
f(x) = x2 - center exactly on the K box, smoothly cut off to zero across the
K -> Z band, and identically zero outside Z.  Different cells give disjoint
supports.  Line integrals along polylines split each segment into plateau
spans (integrated in closed form), band spans (Gauss-Legendre panels), and
zero spans; iterated integrals of general form tuples use spectral collocation
on the same panels.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .geometry import (
    GridSpec,
    RoundedSquare,
    gauge_many,
    membership_defect,
    segment_box_intervals,
)
from .stochastic import PiecewisePath

__all__ = [
    "OneForm",
    "BumpForm",
    "smooth_step",
    "bump_form",
    "line_integral",
    "iterated_form_integral",
    "approximate_form_by_polynomials",
    "coordinate_form",
]


def smooth_step(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1.

    Built from sigma(t) = exp(-1/t) as sigma(t) / (sigma(t) + sigma(1-t)).
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty_like(t)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    tm = t[mid]
    with np.errstate(over="ignore"):
        s1 = np.exp(-1.0 / tm)
        s2 = np.exp(-1.0 / (1.0 - tm))
    out[mid] = s1 / (s1 + s2)
    return float(out[0]) if scalar else out


class OneForm:
    """A 1-form f1 dx1 + f2 dx2 with vectorized coefficient fields.

    f1, f2 map an (n, 2) array of points to an (n,) array.  `support`, when
    given, is a rounded square outside which both fields vanish; integrators
    use it to skip segments wholesale.
    """

    def __init__(self, f1, f2, support: RoundedSquare | None = None, descriptor: dict | None = None):
        self._f1 = f1
        self._f2 = f2
        self.support = support
        self.descriptor = descriptor

    def eval_f1(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self._f1(pts), dtype=float)

    def eval_f2(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self._f2(pts), dtype=float)

    def segment_breakpoints(self, a, b) -> list[float]:
        """Parameters in (0,1) where the integrand changes character."""
        return []


def coordinate_form(axis: int) -> OneForm:
    """The global coordinate form dx1 (axis=1) or dx2 (axis=2)."""
    if axis == 1:
        return OneForm(lambda p: np.ones(len(p)), lambda p: np.zeros(len(p)), descriptor={"kind": "dx1"})
    if axis == 2:
        return OneForm(lambda p: np.zeros(len(p)), lambda p: np.ones(len(p)), descriptor={"kind": "dx2"})
    raise ValueError("axis must be 1 or 2")


class BumpForm(OneForm):
    """f(x) dx1 with plateau f = x2 - eps*z2 on K_z, cut off across K->Z."""

    def __init__(self, grid: GridSpec, z):
        self.grid = grid
        self.z = (int(z[0]), int(z[1]))
        self.center = (grid.epsilon * self.z[0], grid.epsilon * self.z[1])
        self.h_k, self.r_k = grid.family_geometry("K")
        self.h_z, self.r_z = grid.family_geometry("Z")
        support = RoundedSquare(self.center, self.h_z, self.r_z)
        desc = {"kind": "bump", "epsilon": grid.epsilon, "phi": grid.phi, "beta": grid.beta, "z": list(self.z)}
        super().__init__(self._field, lambda p: np.zeros(len(p)), support=support, descriptor=desc)

    def _field(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        qx = pts[:, 0] - self.center[0]
        qy = pts[:, 1] - self.center[1]
        out = np.zeros(len(pts))
        in_z = membership_defect(qx, qy, self.h_z, self.r_z) <= 0.0
        if not in_z.any():
            return out
        qs = np.column_stack([qx[in_z], qy[in_z]])
        plateau = membership_defect(qs[:, 0], qs[:, 1], self.h_k, self.r_k) <= 0.0
        vals = np.where(plateau, qs[:, 1], 0.0)
        band = ~plateau
        if band.any():
            lam = gauge_many(qs[band], self.h_z, self.r_z)
            u = (1.0 - lam) * self.h_z / (self.h_z - self.h_k)
            vals[band] = qs[band][:, 1] * smooth_step(u)
        out[in_z] = vals
        return out

    def segment_breakpoints(self, a, b) -> list[float]:
        pts = []
        for h, r in ((self.h_z, self.r_z), (self.h_k, self.r_k)):
            A = np.asarray([[a[0] - self.center[0], a[1] - self.center[1]]])
            B = np.asarray([[b[0] - self.center[0], b[1] - self.center[1]]])
            t_in, t_out = segment_box_intervals(A, B, h, r)
            for t in (float(t_in[0]), float(t_out[0])):
                if np.isfinite(t) and 0.0 < t < 1.0:
                    pts.append(t)
        return sorted(pts)


def bump_form(g: GridSpec, z) -> BumpForm:
    """The translated bump form of lattice cell z (disjoint supports across z)."""
    return BumpForm(g, z)


# ---------------------------------------------------------------------------
# Quadrature machinery.
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _gl_unit(order: int):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gl_integration_matrix(order: int):
    """S[i, j] = integral_0^{x_i} of Lagrange basis j on the unit GL nodes."""
    x, _ = _gl_unit(order)
    V = np.vander(x, order, increasing=True)
    S = np.empty((order, order))
    for j in range(order):
        e = np.zeros(order)
        e[j] = 1.0
        c = np.linalg.solve(V, e)
        anti = np.concatenate([[0.0], c / np.arange(1, order + 1)])
        S[:, j] = np.polynomial.polynomial.polyval(x, anti)
    return S


def _panel_nodes(order: int, n_sub: int):
    """Nodes/weights of n_sub stacked GL panels on [0, 1]."""
    x, w = _gl_unit(order)
    starts = np.arange(n_sub) / n_sub
    nodes = (starts[:, None] + x[None, :] / n_sub).ravel()
    weights = np.tile(w / n_sub, n_sub)
    return nodes, weights


def _bump_band_values(form: BumpForm, pts: np.ndarray) -> np.ndarray:
    return form.eval_f1(pts)


def bump_span_integrals(form: BumpForm, a: np.ndarray, d: np.ndarray, u0: np.ndarray, u1: np.ndarray,
                        n_panels: int = 8, order: int = 8) -> np.ndarray:
    """Vectorized integral of f dx1 over sub-segment spans in the cutoff band.

    a, d: segment starts and direction vectors, one row per span; [u0, u1] the
    parameter spans.  Fixed stacked GL panels; the caller checks convergence by
    doubling n_panels.
    """
    if len(a) == 0:
        return np.zeros(0)
    nodes, weights = _panel_nodes(order, n_panels)
    u = u0[:, None] + (u1 - u0)[:, None] * nodes[None, :]
    pts = a[:, None, :] + u[..., None] * d[:, None, :]
    vals = _bump_band_values(form, pts.reshape(-1, 2)).reshape(u.shape)
    return (u1 - u0) * d[:, 0] * (vals @ weights)


def _plateau_exact(center_y: float, a: np.ndarray, d: np.ndarray, u0: np.ndarray, u1: np.ndarray):
    """Closed-form integral of (x2 - center_y) dx1 over parameter spans."""
    ay = a[:, 1] - center_y
    return d[:, 0] * (ay * (u1 - u0) + d[:, 1] * (u1 * u1 - u0 * u0) / 2.0)


def _plateau_running_max(center_y, a, d, u0, u1):
    """Max |running integral| of the plateau field over each span."""
    ay = a[:, 1] - center_y
    end = np.abs(_plateau_exact(center_y, a, d, u0, u1))
    # critical point where the integrand vanishes
    with np.errstate(divide="ignore", invalid="ignore"):
        u_star = -ay / d[:, 1]
    valid = np.isfinite(u_star) & (u_star > u0) & (u_star < u1)
    u_c = np.where(valid, u_star, u1)
    mid = np.abs(_plateau_exact(center_y, a, d, u0, u_c))
    return np.maximum(end, np.where(valid, mid, 0.0))


def bump_interval_integrals(form: BumpForm, points: np.ndarray, seg: np.ndarray,
                            u_in: np.ndarray, u_out: np.ndarray, rtol: float = 1e-10):
    """Integrals of the bump over in-support sub-segment intervals.

    points: path vertices; seg/u_in/u_out: one in-Z interval per row.  Returns
    (values, partial_bounds): the exact-or-quadrature integral per interval and
    an upper bound on the running |partial integral| inside it.
    """
    n = len(seg)
    if n == 0:
        return np.zeros(0), np.zeros(0)
    a = points[seg]
    d = points[seg + 1] - a
    cx, cy = form.center
    rel_a = a - [cx, cy]
    rel_b = rel_a + d
    k_in, k_out = segment_box_intervals(rel_a, rel_b, form.h_k, form.r_k)
    has_k = np.isfinite(k_in)
    k0 = np.where(has_k, np.clip(k_in, u_in, u_out), u_out)
    k1 = np.where(has_k, np.clip(k_out, u_in, u_out), u_out)

    plateau = np.where(k1 > k0, _plateau_exact(cy, a, d, k0, k1), 0.0)
    p_max = np.where(k1 > k0, _plateau_running_max(cy, a, d, k0, k1), 0.0)

    band_vals = np.zeros((2, n))
    for which, (b0, b1) in enumerate(((u_in, k0), (k1, u_out))):
        live = b1 > b0
        if live.any():
            v8 = bump_span_integrals(form, a[live], d[live], b0[live], b1[live], n_panels=8)
            v16 = bump_span_integrals(form, a[live], d[live], b0[live], b1[live], n_panels=16)
            bad = np.abs(v16 - v8) > rtol * np.maximum(np.abs(v16), 1e-30) + 1e-300
            if bad.any():
                idx = np.nonzero(live)[0][bad]
                v16[bad] = bump_span_integrals(form, a[idx], d[idx], b0[idx], b1[idx], n_panels=64)
            band_vals[which, live] = v16
    values = band_vals[0] + plateau + band_vals[1]
    partial_bound = np.abs(band_vals[0]) + p_max + np.abs(band_vals[1])
    return values, partial_bound


def _support_reject(form: OneForm, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mask of segments that certainly avoid the form's support."""
    if form.support is None:
        return np.zeros(len(a), dtype=bool)
    sq = form.support
    lox = np.minimum(a[:, 0], b[:, 0]) - sq.center[0]
    hix = np.maximum(a[:, 0], b[:, 0]) - sq.center[0]
    loy = np.minimum(a[:, 1], b[:, 1]) - sq.center[1]
    hiy = np.maximum(a[:, 1], b[:, 1]) - sq.center[1]
    h = sq.half_width
    return (lox > h) | (hix < -h) | (loy > h) | (hiy < -h)


def line_integral(path: PiecewisePath, form: OneForm, rtol: float = 1e-10) -> float:
    """Integral of f1 dx1 + f2 dx2 along the polyline.

    Bump forms get the split treatment (exact plateau, GL band panels); other
    forms use adaptive Gauss-Legendre per segment.
    """
    pts = path.points[:, :2]
    a = pts[:-1]
    b = pts[1:]
    if isinstance(form, BumpForm):
        rel_a = a - np.asarray(form.center)
        rel_b = b - np.asarray(form.center)
        skip = _support_reject(form, a, b)
        t_in = np.full(len(a), np.inf)
        t_out = np.full(len(a), np.inf)
        if (~skip).any():
            ti, to = segment_box_intervals(rel_a[~skip], rel_b[~skip], form.h_z, form.r_z)
            t_in[~skip], t_out[~skip] = ti, to
        rows = np.nonzero(np.isfinite(t_in) & (t_out > t_in))[0]
        vals, _ = bump_interval_integrals(form, pts, rows, t_in[rows], t_out[rows], rtol=rtol)
        return float(np.sum(vals))

    total = 0.0
    nodes16, w16 = _panel_nodes(8, 2)
    for i in range(len(a)):
        if _support_reject(form, a[i : i + 1], b[i : i + 1])[0]:
            continue
        seg_a, seg_d = a[i], b[i] - a[i]
        breaks = [0.0] + form.segment_breakpoints(a[i], b[i]) + [1.0]
        for u0, u1 in zip(breaks[:-1], breaks[1:]):
            if u1 <= u0:
                continue
            total += _adaptive_segment_integral(form, seg_a, seg_d, u0, u1, rtol)
    return float(total)


def _gl_value(form, seg_a, seg_d, u0, u1, nodes, weights):
    u = u0 + (u1 - u0) * nodes
    p = seg_a[None, :] + u[:, None] * seg_d[None, :]
    g = form.eval_f1(p) * seg_d[0] + form.eval_f2(p) * seg_d[1]
    return (u1 - u0) * float(g @ weights)


def _adaptive_segment_integral(form, seg_a, seg_d, u0, u1, rtol, depth: int = 0) -> float:
    nodes, weights = _gl_unit(8)
    coarse = _gl_value(form, seg_a, seg_d, u0, u1, nodes, weights)
    um = 0.5 * (u0 + u1)
    fine = _gl_value(form, seg_a, seg_d, u0, um, nodes, weights) + _gl_value(form, seg_a, seg_d, um, u1, nodes, weights)
    if abs(fine - coarse) <= rtol * max(1e-30, abs(fine)) + 1e-300 or depth >= 12:
        return fine
    return (
        _adaptive_segment_integral(form, seg_a, seg_d, u0, um, rtol, depth + 1)
        + _adaptive_segment_integral(form, seg_a, seg_d, um, u1, rtol, depth + 1)
    )


MAX_NESTING = 16


def iterated_form_integral(path: PiecewisePath, forms, emit_trajectory: bool = False, rtol: float = 1e-10):
    """Nested integral I_k(1) of the form sequence along the polyline.

    Solves I_0 = 1, dI_j = I_{j-1} * alpha_j(velocity) dt by spectral
    collocation on Gauss-Legendre panels, with panel splits at every form's
    support crossings and adaptive halving.  With emit_trajectory=True also
    returns the running values of every nesting level at panel boundaries.
    """
    forms = list(forms)
    k = len(forms)
    if not 1 <= k <= MAX_NESTING:
        raise ValueError(f"need 1..{MAX_NESTING} forms")
    pts = path.points[:, :2]
    times = path.times
    order = 8
    S = _gl_integration_matrix(order)
    nodes, weights = _gl_unit(order)

    I = np.zeros(k + 1)
    I[0] = 1.0
    traj_t = [0.0]
    traj_v = [I[1:].copy()]

    def panel_step(seg_a, seg_d, u0, u1, I_in):
        """Advance the level stack across one panel; returns I_out."""
        u = u0 + (u1 - u0) * nodes
        p = seg_a[None, :] + u[:, None] * seg_d[None, :]
        g = np.empty((k, order))
        for j, fm in enumerate(forms):
            g[j] = fm.eval_f1(p) * seg_d[0] + fm.eval_f2(p) * seg_d[1]
        I_out = I_in.copy()
        lev_nodes = np.ones(order)
        for j in range(1, k + 1):
            h = lev_nodes * g[j - 1]
            lev_nodes = I_in[j] + (u1 - u0) * (S @ h)
            I_out[j] = I_in[j] + (u1 - u0) * float(weights @ h)
        return I_out

    def advance(seg_a, seg_d, u0, u1, I_in, depth=0):
        one = panel_step(seg_a, seg_d, u0, u1, I_in)
        um = 0.5 * (u0 + u1)
        half = panel_step(seg_a, seg_d, um, u1, panel_step(seg_a, seg_d, u0, um, I_in))
        scale = np.maximum(np.abs(half), 1.0)
        if np.all(np.abs(half - one) <= rtol * scale) or depth >= 10:
            return half
        mid = advance(seg_a, seg_d, u0, um, I_in, depth + 1)
        return advance(seg_a, seg_d, um, u1, mid, depth + 1)

    for i in range(len(pts) - 1):
        seg_a = pts[i]
        seg_d = pts[i + 1] - pts[i]
        if all(_support_reject(fm, pts[i : i + 1], pts[i + 1 : i + 2])[0] for fm in forms):
            if emit_trajectory:
                traj_t.append(float(times[i + 1]))
                traj_v.append(I[1:].copy())
            continue
        breaks = {0.0, 1.0}
        for fm in forms:
            breaks.update(fm.segment_breakpoints(pts[i], pts[i + 1]))
        cuts = sorted(breaks)
        for u0, u1 in zip(cuts[:-1], cuts[1:]):
            if u1 <= u0:
                continue
            I = advance(seg_a, seg_d, u0, u1, I)
            if emit_trajectory:
                traj_t.append(float(times[i] + u1 * (times[i + 1] - times[i])))
                traj_v.append(I[1:].copy())

    value = float(I[k])
    if emit_trajectory:
        return value, {"times": np.array(traj_t), "levels": np.array(traj_v)}
    return value


def approximate_form_by_polynomials(form: OneForm, degree: int, window: RoundedSquare):
    """Least-squares tensor-Chebyshev fit of the form's fields over a window.

    Returns (polynomial form, sup_error on a finer validation grid).  The fit
    report (condition number, residuals) rides on the returned form as
    `fit_report`; a large condition number flags an untrustworthy fit.
    """
    if degree > 30:
        raise ValueError("degree must be <= 30")
    cx, cy = window.center
    h = window.half_width

    def scaled(x, y):
        return (x - cx) / h, (y - cy) / h

    n_fit = 2 * degree + 8
    grid = np.cos(np.pi * (np.arange(n_fit) + 0.5) / n_fit)  # Chebyshev points: keeps the LSQ well conditioned
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    pts = np.column_stack([cx + h * gx.ravel(), cy + h * gy.ravel()])
    V = np.polynomial.chebyshev.chebvander2d(gx.ravel(), gy.ravel(), [degree, degree])
    targets = np.column_stack([form.eval_f1(pts), form.eval_f2(pts)])
    coef, res, rank, sv = np.linalg.lstsq(V, targets, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    c1 = coef[:, 0].reshape(degree + 1, degree + 1)
    c2 = coef[:, 1].reshape(degree + 1, degree + 1)

    def make_eval(c):
        def f(p):
            p = np.atleast_2d(p)
            sx, sy = scaled(p[:, 0], p[:, 1])
            return np.polynomial.chebyshev.chebval2d(sx, sy, c)

        return f

    poly = OneForm(make_eval(c1), make_eval(c2), support=None,
                   descriptor={"kind": "poly", "degree": degree, "window": window.to_json()})

    n_val = 3 * degree + 17
    vgrid = np.linspace(-1.0, 1.0, n_val)
    vx, vy = np.meshgrid(vgrid, vgrid, indexing="ij")
    vpts = np.column_stack([cx + h * vx.ravel(), cy + h * vy.ravel()])
    err1 = np.max(np.abs(poly.eval_f1(vpts) - form.eval_f1(vpts)))
    err2 = np.max(np.abs(poly.eval_f2(vpts) - form.eval_f2(vpts)))
    sup_error = float(max(err1, err2))
    poly.fit_report = {"condition": cond, "rank": int(rank), "sup_error": sup_error,
                       "ill_conditioned": bool(cond > 1e12)}
    return poly, sup_error
