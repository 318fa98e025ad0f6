"""Truncated tensor-algebra signatures of piecewise-linear paths.

A signature is stored densely: one flat coefficient array indexed by all words
over the alphabet {1..d} up to the truncation level, empty word included.  The
building blocks are the segment exponential (the signature of one straight
segment), Chen concatenation (truncated tensor product), shuffles of index
words, and a direct nested-integral evaluator used as an independent route to
single coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .stochastic import PiecewisePath

__all__ = [
    "TensorSeries",
    "identity_series",
    "segment_signature",
    "chen_concat",
    "path_signature",
    "shuffle",
    "coordinate_iterated_integral",
    "verify_polynomial_identity",
]


def _level_offsets(dims: int, level: int) -> np.ndarray:
    """offsets[k] = index of the first word of length k in the flat layout."""
    sizes = dims ** np.arange(level + 1)
    return np.concatenate([[0], np.cumsum(sizes)])


@dataclass
class TensorSeries:
    """Dense truncated series: coeffs[word] for every word of length <= level.

    Words use letters 1..dims; the flat index of (i1..ik) is
    offset(k) + sum (i_j - 1) * dims^(k-j).  Group-like path signatures carry
    coefficient 1 on the empty word.
    """

    dims: int
    level: int
    coeffs: np.ndarray

    def __post_init__(self):
        want = int(_level_offsets(self.dims, self.level)[-1])
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (want,):
            raise ValueError(f"expected {want} coefficients for d={self.dims}, N={self.level}")

    # -- word addressing ----------------------------------------------------
    def _offsets(self) -> np.ndarray:
        return _level_offsets(self.dims, self.level)

    def word_index(self, word) -> int:
        k = len(word)
        if k > self.level:
            raise KeyError(f"word longer than truncation level {self.level}")
        idx = 0
        for letter in word:
            if not 1 <= letter <= self.dims:
                raise KeyError(f"letter {letter} outside alphabet 1..{self.dims}")
            idx = idx * self.dims + (letter - 1)
        return int(self._offsets()[k]) + idx

    def coeff(self, word) -> float:
        return float(self.coeffs[self.word_index(word)])

    def level_slice(self, k: int) -> np.ndarray:
        off = self._offsets()
        return self.coeffs[int(off[k]) : int(off[k + 1])]

    def words(self):
        for k in range(self.level + 1):
            yield from itertools.product(range(1, self.dims + 1), repeat=k)

    def to_json(self) -> dict:
        coeffs = {"".join(map(str, w)): self.coeff(w) for w in self.words()}
        return {"dims": self.dims, "level": self.level, "coeffs": coeffs}

    @staticmethod
    def from_json(obj: dict) -> "TensorSeries":
        out = identity_series(obj["dims"], obj["level"])
        out.coeffs[:] = 0.0
        for key, val in obj["coeffs"].items():
            word = tuple(int(ch) for ch in key)
            out.coeffs[out.word_index(word)] = val
        return out


def identity_series(dims: int, level: int) -> TensorSeries:
    """Signature of the empty path: 1 on the empty word, 0 elsewhere."""
    size = int(_level_offsets(dims, level)[-1])
    coeffs = np.zeros(size)
    coeffs[0] = 1.0
    return TensorSeries(dims, level, coeffs)


def segment_signature(increment, level: int) -> TensorSeries:
    """Tensor exponential of a straight segment: coeff(i1..ik) = prod(delta_i)/k!."""
    delta = np.asarray(increment, dtype=float)
    if delta.ndim != 1 or len(delta) < 1:
        raise ValueError("increment must be a flat vector")
    if level < 0:
        raise ValueError("level must be nonnegative")
    dims = len(delta)
    out = identity_series(dims, level)
    off = _level_offsets(dims, level)
    block = np.array([1.0])
    for k in range(1, level + 1):
        block = np.kron(block, delta) / k
        out.coeffs[int(off[k]) : int(off[k + 1])] = block
    return out


def chen_concat(sa: TensorSeries, sb: TensorSeries) -> TensorSeries:
    """Truncated tensor product: coeff(w) = sum over splits w = uv of sa(u)*sb(v)."""
    if sa.dims != sb.dims or sa.level != sb.level:
        raise ValueError("series must share alphabet size and truncation level")
    d, N = sa.dims, sa.level
    out = identity_series(d, N)
    off = _level_offsets(d, N)
    a_lv = [sa.level_slice(k) for k in range(N + 1)]
    b_lv = [sb.level_slice(k) for k in range(N + 1)]
    for k in range(N + 1):
        acc = np.zeros(d**k)
        for i in range(k + 1):
            acc += np.multiply.outer(a_lv[i], b_lv[k - i]).ravel()
        out.coeffs[int(off[k]) : int(off[k + 1])] = acc
    return out


def _fold_increments(increments: np.ndarray, level: int) -> TensorSeries:
    """Left fold of segment exponentials, organised level-by-level in place."""
    d = increments.shape[1]
    sig = identity_series(d, level)
    levels = [sig.level_slice(k) for k in range(level + 1)]
    inv_fact = [1.0 / math.factorial(k) for k in range(level + 1)]
    for delta in increments:
        powers = [np.array([1.0])]
        for k in range(1, level + 1):
            powers.append(np.kron(powers[-1], delta))
        for k in range(level, 0, -1):
            acc = levels[k].copy()
            for j in range(1, k + 1):
                acc += inv_fact[j] * np.multiply.outer(levels[k - j], powers[j]).ravel()
            levels[k][:] = acc
    return sig


def path_signature(path: PiecewisePath, level: int) -> TensorSeries:
    """Signature of the polyline: fold of chen_concat over segment exponentials."""
    inc = path.increments()
    return _fold_increments(inc, level)


def shuffle(u, v) -> list[tuple]:
    """All interleavings of u and v preserving internal order (a multiset)."""
    u = tuple(u)
    v = tuple(v)

    def rec(a, b):
        if not a:
            yield b
            return
        if not b:
            yield a
            return
        for rest in rec(a[1:], b):
            yield (a[0],) + rest
        for rest in rec(a, b[1:]):
            yield (b[0],) + rest

    return list(rec(u, v))


MAX_WORD_LEN = 12


def coordinate_iterated_integral(path: PiecewisePath, word) -> float:
    """Nested running integral of the coordinate word along the polyline.

    Per segment the update is the exact polynomial (Chen) prefix expansion, so
    the result agrees with the matching path_signature coefficient to rounding.
    """
    word = tuple(word)
    k = len(word)
    if k == 0 or k > MAX_WORD_LEN:
        raise ValueError(f"word length must lie in 1..{MAX_WORD_LEN}")
    d = path.dim
    if any(not 1 <= w <= d for w in word):
        raise ValueError("word letters outside path alphabet")
    fact = [math.factorial(j) for j in range(k + 1)]
    I = np.zeros(k + 1)
    I[0] = 1.0
    for delta in path.increments():
        T = np.eye(k + 1)
        for lo in range(k):
            running = 1.0
            for j in range(lo + 1, k + 1):
                running *= delta[word[j - 1] - 1]
                T[lo, j] = running / fact[j - lo]
        I = I @ T
    return float(I[k])


MAX_IDENTITY_LEN = 6


def verify_polynomial_identity(path: PiecewisePath, indices) -> float:
    """Residual of: product of terminal coordinates = sum of permuted words.

    For indices (j1..jn) returns |prod_k W1^{j_k} - sum over permutations pi of
    coeff(j_pi(1)..j_pi(n))|; exact algebra for polylines, so the residual is
    rounding noise.
    """
    indices = tuple(indices)
    n = len(indices)
    if n == 0 or n > MAX_IDENTITY_LEN:
        raise ValueError(f"need 1..{MAX_IDENTITY_LEN} indices")
    sig = path_signature(path, n)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        total += sig.coeff(tuple(indices[p] for p in perm))
    disp = path.points[-1] - path.points[0]
    prod = 1.0
    for j in indices:
        prod *= disp[j - 1]
    return abs(prod - total)
