"""Tour of the tensor-algebra layer: segment exponentials, Chen concatenation,
shuffles, and the permutation-sum identity that writes coordinate products as
signature sums.

Run: python demos/demo_signature_algebra.py
"""

import itertools

import numpy as np

from sigtrace import (
    PiecewisePath,
    Seed,
    chen_concat,
    coordinate_iterated_integral,
    path_signature,
    sample_brownian,
    segment_signature,
    shuffle,
    verify_polynomial_identity,
)

# --- a single straight segment has the tensor exponential as signature ------
seg = segment_signature([1.0, 0.0], 3)
print("segment (1,0): [1] =", seg.coeff((1,)), " [11] =", seg.coeff((1, 1)),
      " [111] =", seg.coeff((1, 1, 1)))

# --- an L-shaped path: the classic hand computation --------------------------
L = PiecewisePath([0, 0.5, 1], [[0, 0], [1, 0], [1, 1]])
sig = path_signature(L, 2)
print("\nL path: [12] =", sig.coeff((1, 2)), " [21] =", sig.coeff((2, 1)),
      " (area-ordering asymmetry)")

# --- Chen: concatenation multiplies signatures -------------------------------
w = sample_brownian(Seed(1, 0), 8)
mid = len(w.times) // 2
first = PiecewisePath(w.times[: mid + 1], w.points[: mid + 1])
second = PiecewisePath(w.times[mid:] - w.times[mid], w.points[mid:])
glued = chen_concat(path_signature(first, 4), path_signature(second, 4))
whole = path_signature(w, 4)
print("\nChen residual over a Brownian split:",
      float(np.max(np.abs(glued.coeffs - whole.coeffs))))

# --- shuffles: products of coefficients expand over interleavings ------------
u, v = (1, 2), (2,)
sig3 = path_signature(L, 3)
lhs = sig3.coeff(u) * sig3.coeff(v)
rhs = sum(sig3.coeff(x) for x in shuffle(u, v))
print(f"\nshuffle identity on the L path: {lhs:.6f} = {rhs:.6f} "
      f"over {len(shuffle(u, v))} interleavings")

# --- coordinate products are permutation sums of signatures ------------------
print("\npermutation-sum identity residuals on a Brownian path:")
for idx in [(1, 1), (1, 2), (2, 1, 2), (1, 1, 2, 2)]:
    res = verify_polynomial_identity(w, idx)
    print(f"  indices {idx}: residual {res:.3e}")

# --- the dual route: direct nested integration agrees ------------------------
word = (2, 1, 2)
print("\nnested running integral vs tensor coefficient for", word, ":",
      coordinate_iterated_integral(w, word), "vs", path_signature(w, 3).coeff(word))

# --- Wong-Zakai flavor: dyadic refinement converges --------------------------
print("\n[12] along dyadic refinements of one Brownian draw:")
for lev in range(4, 12, 2):
    p = sample_brownian(Seed(99, 0), lev)
    print(f"  level {lev:2d}: {path_signature(p, 2).coeff((1, 2)):+.6f}")
