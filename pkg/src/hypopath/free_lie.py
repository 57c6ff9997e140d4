"""Free nilpotent Lie algebra g^(l) in the Lyndon bracket basis."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sympy import divisors, mobius

from .tensor_algebra import (
    AlgebraError,
    TruncatedTensor,
    tensor_exp,
    tensor_log,
    tensor_mul,
    word_index,
)

MEMBERSHIP_TOL = 1e-8
MAX_BASIS_DIM = 20000


class NotLieError(AlgebraError):
    pass


def lyndon_words(d: int, l: int) -> list[tuple[int, ...]]:
    """All Lyndon words of length <= l over 1..d in lexicographic order (Duval)."""
    out = []
    w = [0]
    while w:
        out.append(tuple(c + 1 for c in w))
        m = len(w)
        while len(w) < l:
            w.append(w[len(w) - m])
        while w and w[-1] == d - 1:
            w.pop()
        if w:
            w[-1] += 1
    return out


def is_lyndon(w: tuple[int, ...]) -> bool:
    return len(w) > 0 and all(w < w[i:] for i in range(1, len(w)))


def standard_factorization(w: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split w = uv with v the longest proper Lyndon suffix."""
    for i in range(1, len(w)):
        if is_lyndon(w[i:]):
            return w[:i], w[i:]
    raise AlgebraError(f"word {w} has no standard factorization")


def witt_dimension(d: int, k: int) -> int:
    """Dimension of the degree-k part of the free Lie algebra on d generators."""
    return sum(int(mobius(j)) * d ** (k // j) for j in divisors(k)) // k


@dataclass(frozen=True, eq=False)
class LyndonBasis:
    d: int
    l: int
    words: tuple[tuple[tuple[int, ...], ...], ...]
    brackets: tuple[tuple[str, ...], ...]
    expanded: tuple[np.ndarray, ...]
    _pinv: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def dims(self) -> list[int]:
        return [len(ws) for ws in self.words]

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def degrees(self) -> np.ndarray:
        """Degree of each coordinate."""
        return np.concatenate([np.full(n, k + 1) for k, n in enumerate(self.dims)]).astype(int)

    @property
    def nu(self) -> int:
        """Homogeneous dimension sum_k k dim L_k."""
        return int(sum((k + 1) * n for k, n in enumerate(self.dims)))

    @property
    def flat_words(self) -> list[tuple[int, ...]]:
        return [w for ws in self.words for w in ws]

    def gram(self) -> np.ndarray:
        """Hilbert-Schmidt inner products of the expanded basis tensors."""
        return _gram(self)

    def block(self, coords, k: int):
        """Degree-k coordinates (k >= 1)."""
        o = self.offsets
        return np.asarray(coords)[..., o[k - 1]:o[k]]

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "l": self.l,
            "dims": self.dims,
            "words": [list(map(list, ws)) for ws in self.words],
            "bracketings": [list(bs) for bs in self.brackets],
        }


@lru_cache(maxsize=None)
def _gram(basis: LyndonBasis) -> np.ndarray:
    blocks = [B @ B.T for B in basis.expanded]
    D = basis.dim
    G = np.zeros((D, D))
    o = basis.offsets
    for k, b in enumerate(blocks):
        G[o[k]:o[k + 1], o[k]:o[k + 1]] = b
    G.setflags(write=False)
    return G


@lru_cache(maxsize=None)
def build_basis(d: int, l: int, max_dim: int = MAX_BASIS_DIM) -> LyndonBasis:
    """Lyndon basis of g^(l) over d letters, with expanded bracket tensors per degree."""
    if d < 1 or l < 1:
        raise AlgebraError("need d >= 1 and l >= 1")
    if sum(witt_dimension(d, k) for k in range(1, l + 1)) > max_dim:
        raise AlgebraError(f"basis dimension exceeds cap {max_dim}")
    by_level: list[list[tuple[int, ...]]] = [[] for _ in range(l)]
    for w in lyndon_words(d, l):
        by_level[len(w) - 1].append(w)

    tensors: dict[tuple[int, ...], np.ndarray] = {}
    labels: dict[tuple[int, ...], str] = {}
    for k, ws in enumerate(by_level, start=1):
        for w in ws:
            if k == 1:
                t = np.zeros(d)
                t[w[0] - 1] = 1.0
                labels[w] = str(w[0])
            else:
                u, v = standard_factorization(w)
                tu, tv = tensors[u], tensors[v]
                t = np.outer(tu, tv).ravel() - np.outer(tv, tu).ravel()
                labels[w] = f"[{labels[u]},{labels[v]}]"
            tensors[w] = t

    expanded, pinv = [], []
    for k, ws in enumerate(by_level, start=1):
        B = np.array([tensors[w] for w in ws]).reshape(len(ws), d**k)
        B.setflags(write=False)
        expanded.append(B)
        P = np.linalg.pinv(B) if len(ws) else np.zeros((d**k, 0))
        P.setflags(write=False)
        pinv.append(P)
    return LyndonBasis(
        d=d,
        l=l,
        words=tuple(tuple(ws) for ws in by_level),
        brackets=tuple(tuple(labels[w] for w in ws) for ws in by_level),
        expanded=tuple(expanded),
        _pinv=tuple(pinv),
    )


@dataclass(frozen=True, eq=False)
class LieElement:
    basis: LyndonBasis
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape[-1] != self.basis.dim:
            raise AlgebraError(f"coords length {c.shape[-1]} != basis dim {self.basis.dim}")
        object.__setattr__(self, "coords", c)

    @classmethod
    def zero(cls, basis: LyndonBasis, batch: tuple[int, ...] = ()) -> "LieElement":
        return cls(basis, np.zeros(batch + (basis.dim,)))

    @classmethod
    def generator(cls, basis: LyndonBasis, word) -> "LieElement":
        """Basis element for a Lyndon word (1-based letters)."""
        c = np.zeros(basis.dim)
        c[basis.flat_words.index(tuple(word))] = 1.0
        return cls(basis, c)

    @classmethod
    def from_vector(cls, basis: LyndonBasis, v) -> "LieElement":
        v = np.asarray(v, dtype=float)
        c = np.zeros(v.shape[:-1] + (basis.dim,))
        c[..., : basis.d] = v
        return cls(basis, c)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coords.shape[:-1]

    def __getitem__(self, idx) -> "LieElement":
        return LieElement(self.basis, self.coords[idx])

    def _check(self, other: "LieElement"):
        if not isinstance(other, LieElement) or (other.basis.d, other.basis.l) != (self.basis.d, self.basis.l):
            raise AlgebraError("basis mismatch")

    def __add__(self, other: "LieElement") -> "LieElement":
        self._check(other)
        return LieElement(self.basis, self.coords + other.coords)

    def __sub__(self, other: "LieElement") -> "LieElement":
        self._check(other)
        return LieElement(self.basis, self.coords - other.coords)

    def __neg__(self) -> "LieElement":
        return LieElement(self.basis, -self.coords)

    def __mul__(self, c) -> "LieElement":
        return LieElement(self.basis, self.coords * np.asarray(c, dtype=float)[..., None])

    __rmul__ = __mul__

    def dilate(self, lam) -> "LieElement":
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise AlgebraError("dilation factor must be positive")
        return LieElement(self.basis, self.coords * lam[..., None] ** self.basis.degrees)

    def norm(self):
        """Hilbert-Schmidt norm of the tensor expansion."""
        G = self.basis.gram()
        return np.sqrt(np.einsum("...i,ij,...j->...", self.coords, G, self.coords))

    def to_tensor(self) -> TruncatedTensor:
        return to_tensor(self)

    def to_json(self) -> dict:
        return {"d": self.basis.d, "l": self.basis.l, "coords": self.coords.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "LieElement":
        return cls(build_basis(int(obj["d"]), int(obj["l"])), np.asarray(obj["coords"], dtype=float))


def to_tensor(u: LieElement) -> TruncatedTensor:
    b = u.basis
    levels = [np.zeros(u.batch_shape + (1,))]
    for k in range(1, b.l + 1):
        levels.append(b.block(u.coords, k) @ b.expanded[k - 1])
    return TruncatedTensor(b.d, b.l, tuple(levels))


def from_tensor(t: TruncatedTensor, basis: LyndonBasis | None = None, tol: float = MEMBERSHIP_TOL) -> LieElement:
    """Coordinates of a Lie element given in tensor form.

    Raises NotLieError when the least-squares residual exceeds tol (relative
    to max(1, |t|) per degree).
    """
    if basis is None:
        basis = build_basis(t.d, t.l)
    if (basis.d, basis.l) != (t.d, t.l):
        raise AlgebraError("basis mismatch")
    if np.any(np.abs(t.levels[0]) > tol):
        raise NotLieError("not a Lie element: nonzero scalar part")
    parts = []
    for k in range(1, t.l + 1):
        tk = t.levels[k]
        ck = tk @ basis._pinv[k - 1]
        resid = np.linalg.norm(tk - ck @ basis.expanded[k - 1], axis=-1)
        scale = np.maximum(1.0, np.linalg.norm(tk, axis=-1))
        if np.any(resid > tol * scale):
            raise NotLieError(f"not a Lie element: degree-{k} residual {float(np.max(resid)):.3g}")
        parts.append(ck)
    return LieElement(basis, np.concatenate(parts, axis=-1))


def lie_bracket(u: LieElement, v: LieElement) -> LieElement:
    """Commutator u v - v u, truncated at the basis level."""
    u._check(v)
    tu, tv = to_tensor(u), to_tensor(v)
    return from_tensor(tensor_mul(tu, tv) - tensor_mul(tv, tu), u.basis)


def bch(u: LieElement, v: LieElement) -> LieElement:
    """log(exp(u) (x) exp(v)) in coordinates."""
    u._check(v)
    g = tensor_mul(tensor_exp(to_tensor(u)), tensor_exp(to_tensor(v)))
    return from_tensor(tensor_log(g), u.basis)


def group_product(u: LieElement, v: LieElement) -> LieElement:
    """Alias with the reversed convention v x u = log(exp(v) (x) exp(u))."""
    return bch(v, u)


def homogeneous_dimension(d: int, l: int) -> int:
    return sum(k * witt_dimension(d, k) for k in range(1, l + 1))


def tensor_generator(d: int, l: int, word) -> TruncatedTensor:
    """The bracket tensor e_[word] for an arbitrary (not necessarily Lyndon) word."""
    word = tuple(word)
    if len(word) == 1:
        t = np.zeros(d)
        t[word_index(word, d)] = 1.0
    else:
        # right-nested bracket [w1,[w2,[...,wk]]]
        t = tensor_generator(d, len(word), word[-1:]).levels[1]
        for letter in reversed(word[:-1]):
            e = np.zeros(d)
            e[letter - 1] = 1.0
            t = np.outer(e, t).ravel() - np.outer(t, e).ravel()
    levels = [np.zeros(d**k) for k in range(l + 1)]
    levels[len(word)] = t
    return TruncatedTensor(d, l, tuple(levels))
