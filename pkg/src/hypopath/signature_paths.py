"""Signatures of piecewise-linear paths and the inverse problem: a smooth
path whose truncated log-signature is a prescribed Lie element."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .free_lie import LieElement, LyndonBasis, build_basis, from_tensor, to_tensor
from .tensor_algebra import (
    AlgebraError,
    TruncatedTensor,
    group_inverse,
    hs_norm,
    tensor_exp,
    tensor_log,
    tensor_mul,
)

RECON_TOL = 1e-8
ZERO_COEFF_REL = 1e-11
SUPPORT = (1.0 / 3.0, 2.0 / 3.0)


class ReconstructionError(AlgebraError):
    pass


@dataclass(frozen=True)
class SmoothBump:
    """Quintic smoothstep: phi(0)=0, phi(1)=1, phi' and phi'' vanish at both ends.

    With ``window=(a, b)`` the rise is confined to [a, b] and the profile is
    constant outside.
    """

    window: tuple[float, float] = (0.0, 1.0)
    name: str = "quintic"

    def _s(self, t):
        a, b = self.window
        return np.clip((np.asarray(t, dtype=float) - a) / (b - a), 0.0, 1.0)

    def __call__(self, t):
        s = self._s(t)
        return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)

    def derivative(self, t):
        a, b = self.window
        s = self._s(t)
        return 30.0 * s**2 * (1.0 - s) ** 2 / (b - a)

    def second_derivative(self, t):
        a, b = self.window
        s = self._s(t)
        return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (b - a) ** 2

    @property
    def max_second_derivative(self) -> float:
        a, b = self.window
        return 10.0 / np.sqrt(3.0) / (b - a) ** 2


_UNIT_BUMP = SmoothBump()


@dataclass(frozen=True, eq=False)
class GridPath:
    """Path through ``values`` at ``times``.

    Segment i runs from node i to node i+1 and is either traversed at
    constant speed ("linear") or along the quintic smoothstep ("smooth"),
    which has zero velocity and acceleration at both nodes.  The trace is
    always the straight chord, so the signature does not depend on the kind.
    """

    times: np.ndarray
    values: np.ndarray
    kinds: tuple[str, ...] = field(default=())
    profile: str = "quintic"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.values, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or len(t) != len(x) or len(t) < 1:
            raise ValueError("times and values must have matching length >= 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("values must be finite")
        kinds = tuple(self.kinds) if self.kinds else ("linear",) * (len(t) - 1)
        if len(kinds) != len(t) - 1 or any(k not in ("linear", "smooth") for k in kinds):
            raise ValueError("one segment kind ('linear' or 'smooth') per segment required")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", x)
        object.__setattr__(self, "kinds", kinds)

    # basic data ---------------------------------------------------------
    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def n_segments(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def one_variation(self) -> float:
        return float(np.sum(np.linalg.norm(self.increments, axis=1)))

    @classmethod
    def constant(cls, d: int, T: float = 1.0, x0=None) -> "GridPath":
        x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
        return cls(np.array([0.0, T]), np.array([x0, x0]))

    @classmethod
    def from_increments(cls, incs, times=None, x0=None, kinds=None) -> "GridPath":
        incs = np.asarray(incs, dtype=float).reshape(-1, np.shape(incs)[-1])
        d = incs.shape[1]
        x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
        values = np.vstack([x0, x0 + np.cumsum(incs, axis=0)])
        if times is None:
            times = np.linspace(0.0, 1.0, len(values))
        return cls(np.asarray(times, dtype=float), values, tuple(kinds) if kinds else ())

    # evaluation ---------------------------------------------------------
    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, max(self.n_segments - 1, 0))
        t0, t1 = self.times[i], self.times[np.minimum(i + 1, len(self.times) - 1)]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        s = np.clip((t - t0) / span, 0.0, 1.0)
        smooth = np.array([k == "smooth" for k in self.kinds] or [False])[i]
        return i, s, span, smooth

    def __call__(self, t) -> np.ndarray:
        """Evaluate the path at time(s) t; returns shape t.shape + (d,)."""
        if self.n_segments == 0:
            return np.broadcast_to(self.values[0], np.shape(t) + (self.d,)).copy()
        i, s, _, smooth = self._locate(t)
        w = np.where(smooth, _UNIT_BUMP(s), s)
        x0 = self.values[i]
        x1 = self.values[np.minimum(i + 1, len(self.values) - 1)]
        return x0 + w[..., None] * (x1 - x0)

    def derivative(self, t) -> np.ndarray:
        if self.n_segments == 0:
            return np.zeros(np.shape(t) + (self.d,))
        i, s, span, smooth = self._locate(t)
        w = np.where(smooth, _UNIT_BUMP.derivative(s), 1.0) / span
        return w[..., None] * self.increments[i]

    def second_derivative_bound(self) -> float:
        """sup |path''| over smooth pieces (linear pieces contribute 0 inside cells)."""
        best = 0.0
        dt = np.diff(self.times)
        for k, inc, tau in zip(self.kinds, self.increments, dt):
            if k == "smooth":
                best = max(best, float(np.linalg.norm(inc)) * _UNIT_BUMP.max_second_derivative / tau**2)
        return best

    def derivative_support(self, tol: float = 0.0) -> tuple[float, float] | None:
        """Smallest interval containing all segments with nonzero increment."""
        moving = np.linalg.norm(self.increments, axis=1) > tol
        if not np.any(moving):
            return None
        idx = np.flatnonzero(moving)
        return float(self.times[idx[0]]), float(self.times[idx[-1] + 1])

    # transformations ----------------------------------------------------
    def scaled(self, lam: float) -> "GridPath":
        """Spatial scaling x -> lam * x (about the starting point)."""
        x0 = self.values[0]
        return GridPath(self.times, x0 + lam * (self.values - x0), self.kinds, self.profile)

    def retimed(self, T: float, t0: float = 0.0) -> "GridPath":
        """Affine reparametrization onto [t0, t0 + T]."""
        s = (self.times - self.times[0]) / self.T
        return GridPath(t0 + T * s, self.values, self.kinds, self.profile)

    def reversed(self) -> "GridPath":
        t = self.times[-1] + self.times[0] - self.times[::-1]
        return GridPath(t, self.values[::-1], self.kinds[::-1], self.profile)

    def concat(self, other: "GridPath") -> "GridPath":
        """Concatenate, translating other so it starts where self ends."""
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        t = other.times[1:] - other.times[0] + self.times[-1]
        x = other.values[1:] - other.values[0] + self.values[-1]
        return GridPath(
            np.concatenate([self.times, t]), np.vstack([self.values, x]), self.kinds + other.kinds, self.profile
        )

    # io -------------------------------------------------------------------
    def to_csv(self, path, meta: dict | None = None):
        with open(path, "w", newline="") as fh:
            meta = dict(meta or {})
            meta["segment_kinds"] = list(self.kinds)
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(self.d)])
            for t, x in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])

    @classmethod
    def from_csv(cls, path) -> "GridPath":
        kinds = ()
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    meta = json.loads(line[1:])
                    kinds = tuple(meta.get("segment_kinds", ()))
                    continue
                rows.append(line)
        data = list(csv.reader(rows))
        if not data or data[0][0] != "t":
            raise ValueError("path CSV must have header t,x_1,...")
        arr = np.array([[float(v) for v in r] for r in data[1:] if r], dtype=float)
        return cls(arr[:, 0], arr[:, 1:], kinds)


# signatures ----------------------------------------------------------------
def _take(t: TruncatedTensor, sl) -> TruncatedTensor:
    return TruncatedTensor(t.d, t.l, tuple(a[..., sl, :] for a in t.levels))


def signature_of_increments(incs, l: int) -> TruncatedTensor:
    """Chen product of exp(increment) over the second-to-last axis (batched)."""
    incs = np.asarray(incs, dtype=float)
    if incs.ndim < 2:
        raise ValueError("increments need shape (..., n_segments, d)")
    d = incs.shape[-1]
    if incs.shape[-2] == 0:
        return TruncatedTensor.unit(d, l, incs.shape[:-2])
    t = tensor_exp(TruncatedTensor.from_vector(incs, l))
    while t.levels[0].shape[-2] > 1:
        n = t.levels[0].shape[-2]
        m = n // 2
        prod = tensor_mul(_take(t, slice(0, 2 * m, 2)), _take(t, slice(1, 2 * m, 2)))
        if n % 2:
            prod = TruncatedTensor(
                d, l, tuple(np.concatenate([p, a[..., n - 1:, :]], axis=-2) for p, a in zip(prod.levels, t.levels))
            )
        t = prod
    return _take(t, 0)


def signature(path: GridPath, l: int) -> TruncatedTensor:
    """Truncated signature of the path over its whole time interval."""
    return signature_of_increments(path.increments, l)


def log_signature(path: GridPath, l: int, basis: LyndonBasis | None = None) -> LieElement:
    basis = basis or build_basis(path.d, l)
    return from_tensor(tensor_log(signature(path, l)), basis)


def log_signature_of_increments(incs, l: int, basis: LyndonBasis | None = None) -> LieElement:
    incs = np.asarray(incs, dtype=float)
    basis = basis or build_basis(incs.shape[-1], l)
    return from_tensor(tensor_log(signature_of_increments(incs, l)), basis)


# generator loops -------------------------------------------------------------
@lru_cache(maxsize=None)
def _generator_loop(d: int, word: tuple[int, ...]) -> np.ndarray:
    """Increments of a loop whose signature is exp(e_[word] + higher order).

    Letters are unit segments; a bracket [u, v] becomes the group commutator
    loop(u) loop(v) loop(u)^-1 loop(v)^-1.
    """
    from .free_lie import standard_factorization

    if len(word) == 1:
        e = np.zeros((1, d))
        e[0, word[0] - 1] = 1.0
        return e
    u, v = standard_factorization(word)
    a, b = _generator_loop(d, u), _generator_loop(d, v)
    out = np.vstack([a, b, -a[::-1], -b[::-1]])
    out.setflags(write=False)
    return out


def generator_loop(basis: LyndonBasis, index: int) -> np.ndarray:
    return _generator_loop(basis.d, basis.flat_words[index])


def _homogeneous_size(u: LieElement) -> float:
    b = u.basis
    return max(float(np.linalg.norm(b.block(u.coords, k))) ** (1.0 / k) for k in range(1, b.l + 1))


def lift_increments(u: LieElement) -> np.ndarray:
    """Piecewise-linear increments whose truncated log-signature is u.

    Degree by degree: after matching degrees < k, the remaining defect
    S(alpha)^-1 exp(u) starts at degree k; each nonzero coordinate lambda_i
    of its degree-k part is realized by the generator loop dilated by
    |lambda_i|^(1/k), reversed when lambda_i < 0.
    """
    b = u.basis
    if u.batch_shape != ():
        raise ValueError("lift_increments takes a single Lie element")
    d, l = b.d, b.l
    scale = _homogeneous_size(u)
    if scale == 0.0:
        return np.zeros((0, d))
    target = tensor_exp(to_tensor(u))
    v1 = b.block(u.coords, 1)
    pieces = [v1[None, :]] if np.linalg.norm(v1) > ZERO_COEFF_REL * scale else []
    o = b.offsets
    for k in range(2, l + 1):
        incs = np.vstack(pieces) if pieces else np.zeros((0, d))
        defect = tensor_mul(group_inverse(signature_of_increments(incs, l)), target)
        lam = b.block(from_tensor(tensor_log(defect), b).coords, k)
        for i, c in enumerate(lam):
            if abs(c) <= ZERO_COEFF_REL * scale**k:
                continue
            loop = generator_loop(b, o[k - 1] + i)
            if c < 0:
                loop = -loop[::-1]
            pieces.append(abs(c) ** (1.0 / k) * loop)
    return np.vstack(pieces) if pieces else np.zeros((0, d))


def layout_smooth(incs, T: float = 1.0, support=SUPPORT) -> GridPath:
    """Place increments inside support*T, each traversed along the smoothstep.

    Durations are proportional to segment length; the path is constant on
    [0, a T] and [b T, T].
    """
    incs = np.asarray(incs, dtype=float)
    d = incs.shape[1]
    lens = np.linalg.norm(incs, axis=1)
    keep = lens > 0
    incs, lens = incs[keep], lens[keep]
    if len(incs) == 0:
        return GridPath.constant(d, T)
    a, b = support
    inner = a + (b - a) * np.concatenate([[0.0], np.cumsum(lens) / lens.sum()])
    inner[-1] = b
    times = T * np.concatenate([[0.0], inner, [1.0]])
    full = np.vstack([np.zeros((1, d)), incs, np.zeros((1, d))])
    kinds = ("linear",) + ("smooth",) * len(incs) + ("linear",)
    return GridPath.from_increments(full, times=times, kinds=kinds)


def _gauss_newton_increments(incs, u: LieElement, iters: int = 20, tol: float = 1e-13):
    """Refine increments so that the log-signature matches u (minimum-norm steps)."""
    b = u.basis
    l = b.l
    x = np.array(incs, dtype=float)
    n, d = x.shape
    h = 1e-6 * max(1.0, float(np.abs(x).max()))

    def resid(y):
        return log_signature_of_increments(y, l, b).coords - u.coords

    r = resid(x)
    for _ in range(iters):
        if np.linalg.norm(r) <= tol:
            break
        flat = x.ravel()
        pert = np.repeat(flat[None, :], 2 * flat.size, axis=0)
        idx = np.arange(flat.size)
        pert[2 * idx, idx] += h
        pert[2 * idx + 1, idx] -= h
        vals = log_signature_of_increments(pert.reshape(-1, n, d), l, b).coords
        J = ((vals[0::2] - vals[1::2]) / (2 * h)).T
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = (flat + step).reshape(n, d)
        r = resid(x)
    return x, float(np.linalg.norm(r))


def path_from_group_element(u: LieElement, correct: bool = True, tol: float = RECON_TOL) -> GridPath:
    """Smooth path on [0, 1] with log S_l = u and velocity supported in [1/3, 2/3]."""
    b = u.basis
    incs = lift_increments(u)
    if len(incs) == 0:
        return GridPath.constant(b.d)
    scale = max(1.0, float(u.norm()))
    resid = float(np.linalg.norm(log_signature_of_increments(incs, b.l, b).coords - u.coords))
    if correct and resid > 1e-12 * scale:
        incs, resid = _gauss_newton_increments(incs, u)
    if resid > tol * scale:
        raise ReconstructionError(f"correction diverged: residual {resid:.3g}")
    return layout_smooth(incs)


def cc_len(u: LieElement) -> float:
    """1-variation of the reconstructed path: an upper bound on the CC norm of u."""
    return float(np.sum(np.linalg.norm(lift_increments(u), axis=1)))


def random_lie_elements(basis: LyndonBasis, n: int, rng, max_norm: float = 1.0) -> LieElement:
    """Random elements with HS norm at most max_norm (uniform radius, Gaussian direction)."""
    c = rng.normal(size=(n, basis.dim))
    u = LieElement(basis, c)
    r = max_norm * rng.uniform(0.05, 1.0, size=n) / u.norm()
    return u * r


def ball_box_report(samples: int, seed: int, d: int = 2, l: int = 2) -> dict:
    """Empirical sup of cc_len(u) / |exp(u) - 1|_HS^(1/l) over |exp(u) - 1|_HS <= 1."""
    basis = build_basis(d, l)
    rng = np.random.default_rng(seed)
    kept, ratios = 0, []
    while kept < samples:
        batch = random_lie_elements(basis, 2 * samples, rng, max_norm=1.0).dilate(
            rng.uniform(0.05, 1.0, size=2 * samples)
        )
        t = tensor_exp(to_tensor(batch))
        dist = hs_norm(t - TruncatedTensor.unit(d, l))
        ok = (dist <= 1.0) & (dist > 0)
        for i in np.flatnonzero(ok)[: samples - kept]:
            ratios.append(cc_len(batch[i]) / dist[i] ** (1.0 / l))
        kept = len(ratios)
    ratios = np.array(ratios)
    return {
        "samples": int(samples),
        "max_ratio": float(ratios.max()),
        "mean_ratio": float(ratios.mean()),
        "finite": bool(np.all(np.isfinite(ratios))),
    }
