"""The bump 1-forms and their iterated line integrals.

Each lattice cell carries the form f dx1 with f = x2 - center on the plateau
box K, smoothly cut off across the K -> Z band; different cells have disjoint
supports.  Iterated integrals of these forms along a path are the extended
signature values the reconstructor consumes.

Run: python demos/demo_bump_forms.py
"""

import numpy as np

from sigtrace import (
    GridSpec,
    PiecewisePath,
    RoundedSquare,
    Seed,
    approximate_form_by_polynomials,
    bump_form,
    iterated_form_integral,
    line_integral,
    sample_brownian,
    smooth_step,
)

g = GridSpec(0.1, 0.01)
phi0 = bump_form(g, (0, 0))
print("plateau is exact:", phi0.eval_f1(np.array([[0.01, 0.02]]))[0], "== 0.02")
print("support is compact:", phi0.eval_f1(np.array([[0.08, 0.0]]))[0], "== 0.0")
print("smooth step at 0.5:", smooth_step(0.5))

# Green's theorem: a closed loop inside the plateau integrates to -area
w, h = 0.015, 0.02
rect = PiecewisePath([0, 0.25, 0.5, 0.75, 1],
                     [[-w, -h], [w, -h], [w, h], [-w, h], [-w, -h]])
print(f"\nCCW rectangle of area {4*w*h:.4f} inside K: integral = "
      f"{line_integral(rect, phi0):.6f}")

# iterated integrals only see supports visited in the right order
phi3 = bump_form(g, (3, 0))
forward = PiecewisePath([0, 0.4, 1], [[-0.2, 0.05], [0.0, 0.013], [0.3, 0.001]])
backward = PiecewisePath([0, 0.4, 1], [[0.3, 0.001], [0.0, 0.013], [-0.2, 0.05]])
print("\nvisit (0,0) then (3,0):", iterated_form_integral(forward, [phi0, phi3]))
print("visit (3,0) then (0,0):", iterated_form_integral(backward, [phi0, phi3]),
      "(wrong order: identically zero)")

# polynomial approximation drives the integrals to the true values
g_fat = GridSpec(0.24, 0.23)  # a fat cutoff band so the fit can resolve it
bump = bump_form(g_fat, (0, 0))
window = RoundedSquare((0.0, 0.0), 1.6 * bump.h_z, 0.0)
raw = sample_brownian(Seed(11, 0), 7)
pts = raw.points * (1.3 * bump.h_z / np.abs(raw.points).max())
path = PiecewisePath(raw.times, pts)
true_val = line_integral(path, bump)
print(f"\ntrue bump integral along a confined path: {true_val:+.6f}")
for deg in (2, 6, 10, 14, 18):
    fit, sup_err = approximate_form_by_polynomials(bump, deg, window)
    approx = line_integral(path, fit)
    print(f"  degree {deg:2d}: integral {approx:+.6f} "
          f"(error {abs(approx-true_val):.2e}, sup-norm fit error {sup_err:.3f})")
