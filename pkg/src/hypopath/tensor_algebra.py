"""Truncated tensor algebra T^(l) over R^d.

An element is stored densely, one array per degree.  Degree k holds the
d**k coefficients of words of length k, indexed most-significant-letter
first with 0-based letters, so that the coefficient array of a
concatenation ``w1 w2`` is ``outer(a_w1, b_w2).ravel()``.  Every level may
carry leading batch dimensions, which broadcast through all operations.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

DEFAULT_TOL = 1e-12


class AlgebraError(ValueError):
    """Raised on mismatched shapes or elements outside an operation's domain."""


def word_index(word: Sequence[int], d: int) -> int:
    """Flat index of a word with letters in 1..d inside its level array."""
    idx = 0
    for letter in word:
        if not 1 <= letter <= d:
            raise AlgebraError(f"letter {letter} outside 1..{d}")
        idx = idx * d + (letter - 1)
    return idx


def index_word(idx: int, k: int, d: int) -> tuple[int, ...]:
    """Inverse of :func:`word_index` for a word of length k."""
    letters = []
    for _ in range(k):
        idx, r = divmod(idx, d)
        letters.append(r + 1)
    return tuple(reversed(letters))


@dataclass(frozen=True, eq=False)
class TruncatedTensor:
    d: int
    l: int
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.levels) != self.l + 1:
            raise AlgebraError(f"expected {self.l + 1} levels, got {len(self.levels)}")
        for k, arr in enumerate(self.levels):
            if arr.shape[-1] != self.d**k:
                raise AlgebraError(f"level {k} has width {arr.shape[-1]}, expected {self.d**k}")

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, d: int, l: int, batch: tuple[int, ...] = ()) -> "TruncatedTensor":
        return cls(d, l, tuple(np.zeros(batch + (d**k,)) for k in range(l + 1)))

    @classmethod
    def unit(cls, d: int, l: int, batch: tuple[int, ...] = ()) -> "TruncatedTensor":
        t = cls.zeros(d, l, batch)
        t.levels[0][...] = 1.0
        return t

    @classmethod
    def from_words(cls, d: int, l: int, coeffs: dict) -> "TruncatedTensor":
        """Build from a mapping word -> coefficient (the empty tuple is the scalar)."""
        t = cls.zeros(d, l)
        for word, c in coeffs.items():
            word = tuple(word)
            if len(word) > l:
                raise AlgebraError(f"word {word} longer than level {l}")
            t.levels[len(word)][word_index(word, d)] += c
        return t

    @classmethod
    def from_vector(cls, v, l: int) -> "TruncatedTensor":
        """Pure degree-one element with coefficients v (batch-aware)."""
        v = np.asarray(v, dtype=float)
        d = v.shape[-1]
        t = cls.zeros(d, l, v.shape[:-1])
        if l >= 1:
            t.levels[1][...] = v
        return t

    @classmethod
    def from_flat(cls, flat, d: int, l: int) -> "TruncatedTensor":
        flat = np.asarray(flat, dtype=float)
        sizes = [d**k for k in range(l + 1)]
        if flat.shape[-1] != sum(sizes):
            raise AlgebraError("flat vector has wrong length")
        cuts = np.cumsum(sizes)[:-1]
        return cls(d, l, tuple(np.split(flat, cuts, axis=-1)))

    # accessors ----------------------------------------------------------
    @property
    def batch_shape(self) -> tuple[int, ...]:
        return np.broadcast_shapes(*(a.shape[:-1] for a in self.levels))

    def coeff(self, word: Sequence[int]):
        word = tuple(word)
        return self.levels[len(word)][..., word_index(word, self.d)]

    def level(self, k: int) -> "TruncatedTensor":
        """Projection onto the degree-k component."""
        out = [np.zeros_like(a) for a in self.levels]
        out[k] = self.levels[k].copy()
        return TruncatedTensor(self.d, self.l, tuple(out))

    def flat(self) -> np.ndarray:
        shape = self.batch_shape
        return np.concatenate([np.broadcast_to(a, shape + a.shape[-1:]) for a in self.levels], axis=-1)

    def scalar(self):
        return self.levels[0][..., 0]

    def __getitem__(self, idx) -> "TruncatedTensor":
        shape = self.batch_shape
        return TruncatedTensor(
            self.d, self.l, tuple(np.broadcast_to(a, shape + a.shape[-1:])[idx] for a in self.levels)
        )

    # linear structure ---------------------------------------------------
    def _check(self, other: "TruncatedTensor"):
        if not isinstance(other, TruncatedTensor):
            raise AlgebraError("operand is not a TruncatedTensor")
        if (self.d, self.l) != (other.d, other.l):
            raise AlgebraError(f"dimension/level mismatch: {(self.d, self.l)} vs {(other.d, other.l)}")

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check(other)
        return TruncatedTensor(self.d, self.l, tuple(a + b for a, b in zip(self.levels, other.levels)))

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check(other)
        return TruncatedTensor(self.d, self.l, tuple(a - b for a, b in zip(self.levels, other.levels)))

    def __neg__(self) -> "TruncatedTensor":
        return TruncatedTensor(self.d, self.l, tuple(-a for a in self.levels))

    def __mul__(self, c) -> "TruncatedTensor":
        c = np.asarray(c, dtype=float)[..., None]
        return TruncatedTensor(self.d, self.l, tuple(a * c for a in self.levels))

    __rmul__ = __mul__

    def __matmul__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return tensor_mul(self, other)

    # serialization ------------------------------------------------------
    def to_json(self) -> dict:
        if self.batch_shape != ():
            raise AlgebraError("only unbatched tensors serialize to JSON")
        return {"d": self.d, "l": self.l, "levels": [a.tolist() for a in self.levels]}

    @classmethod
    def from_json(cls, obj: dict) -> "TruncatedTensor":
        d, l = int(obj["d"]), int(obj["l"])
        return cls(d, l, tuple(np.asarray(a, dtype=float) for a in obj["levels"]))


def _mul_levels(a, b, d: int, l: int, a_from: int = 0, b_from: int = 0):
    """Truncated product on raw level lists; degrees below a_from/b_from are taken as zero."""
    batch = np.broadcast_shapes(*(x.shape[:-1] for x in a), *(x.shape[:-1] for x in b))
    out = []
    for n in range(l + 1):
        acc = np.zeros(batch + (d**n,))
        for i in range(a_from, n + 1 - b_from):
            j = n - i
            prod = a[i][..., :, None] * b[j][..., None, :]
            acc += prod.reshape(prod.shape[:-2] + (d**n,))
        out.append(acc)
    return out


def tensor_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Truncated tensor product: level n is sum_k a^{n-k} (x) b^k."""
    a._check(b)
    return TruncatedTensor(a.d, a.l, tuple(_mul_levels(a.levels, b.levels, a.d, a.l)))


def _require_scalar(g: TruncatedTensor, value: float, tol: float, what: str):
    s = np.asarray(g.scalar())
    if np.any(np.abs(s - value) > tol):
        raise AlgebraError(f"{what}: scalar part must equal {value}")


def _nilpotent_powers(x: TruncatedTensor):
    """Yield x^k for k = 1..l, for x with zero scalar part."""
    d, l = x.d, x.l
    p = list(x.levels)
    yield p
    for _ in range(2, l + 1):
        p = _mul_levels(p, x.levels, d, l, a_from=1, b_from=1)
        yield p


def tensor_exp(u: TruncatedTensor, tol: float = DEFAULT_TOL) -> TruncatedTensor:
    """Truncated exponential sum_{k<=l} u^k / k!."""
    _require_scalar(u, 0.0, tol, "tensor_exp")
    out = [np.zeros(u.batch_shape + (u.d**k,)) for k in range(u.l + 1)]
    out[0][...] = 1.0
    for k, p in enumerate(_nilpotent_powers(u), start=1):
        c = 1.0 / factorial(k)
        for n in range(k, u.l + 1):
            out[n] += c * p[n]
    return TruncatedTensor(u.d, u.l, tuple(out))


def tensor_log(g: TruncatedTensor, tol: float = DEFAULT_TOL) -> TruncatedTensor:
    """Truncated logarithm sum_k (-1)^{k+1} (g-1)^k / k."""
    _require_scalar(g, 1.0, tol, "tensor_log")
    x = TruncatedTensor(g.d, g.l, (np.zeros_like(g.levels[0]),) + tuple(g.levels[1:]))
    out = [np.zeros(g.batch_shape + (g.d**k,)) for k in range(g.l + 1)]
    for k, p in enumerate(_nilpotent_powers(x), start=1):
        c = (-1.0) ** (k + 1) / k
        for n in range(k, g.l + 1):
            out[n] += c * p[n]
    return TruncatedTensor(g.d, g.l, tuple(out))


def group_inverse(g: TruncatedTensor, tol: float = DEFAULT_TOL) -> TruncatedTensor:
    """Inverse sum_k (-(g-1))^k of an element with unit scalar part."""
    _require_scalar(g, 1.0, tol, "group_inverse")
    x = TruncatedTensor(g.d, g.l, (np.zeros_like(g.levels[0]),) + tuple(-a for a in g.levels[1:]))
    out = [np.zeros(g.batch_shape + (g.d**k,)) for k in range(g.l + 1)]
    out[0][...] = 1.0
    for k, p in enumerate(_nilpotent_powers(x), start=1):
        for n in range(k, g.l + 1):
            out[n] += p[n]
    return TruncatedTensor(g.d, g.l, tuple(out))


def dilate(g: TruncatedTensor, lam) -> TruncatedTensor:
    """Grading automorphism: degree-k part multiplied by lam**k (lam may be batched)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise AlgebraError("dilation factor must be positive")
    lam = lam[..., None]
    return TruncatedTensor(g.d, g.l, tuple(a * lam**k for k, a in enumerate(g.levels)))


def hs_norm(g: TruncatedTensor):
    """Euclidean norm of all coefficients, scalar part included."""
    return np.sqrt(sum(np.sum(a * a, axis=-1) for a in g.levels))


def exp_derivative(u: TruncatedTensor, du: TruncatedTensor) -> TruncatedTensor:
    """Directional derivative of tensor_exp at u along du (both with zero scalar part)."""
    u._check(du)
    d, l = u.d, u.l
    # p = u^k, q = d/de (u + e du)^k, using q_k = q_{k-1} u + u^{k-1} du
    p = [np.zeros_like(a) for a in u.levels]
    p[0] = np.ones_like(u.levels[0])
    q = [np.zeros_like(a) for a in du.levels]
    batch = np.broadcast_shapes(u.batch_shape, du.batch_shape)
    out = [np.zeros(batch + (d**k,)) for k in range(l + 1)]
    for k in range(1, l + 1):
        q = [a + b for a, b in zip(_mul_levels(q, u.levels, d, l, a_from=k - 1, b_from=1),
                                   _mul_levels(p, du.levels, d, l, a_from=k - 1, b_from=1))]
        p = _mul_levels(p, u.levels, d, l, a_from=k - 1, b_from=1)
        c = 1.0 / factorial(k)
        for n in range(k, l + 1):
            out[n] += c * q[n]
    return TruncatedTensor(d, l, tuple(out))
