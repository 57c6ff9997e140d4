"""Vector-field systems dx = sum_i V_i(x) dh^i: flows, iterated
compositions V_(alpha), brackets V_[alpha], the Taylor map F_l and its
Jacobian."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .free_lie import LieElement, LyndonBasis, build_basis, tensor_generator, to_tensor
from .signature_paths import GridPath
from .tensor_algebra import TruncatedTensor, exp_derivative, index_word, tensor_exp

FD_REL_STEP = 1e-5
HYPO_THRESHOLD = 1e-8
RANK_THRESHOLD = 1e-12
BLOWUP_BOUND = 1e8


class FlowError(RuntimeError):
    pass


class HypoellipticityError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


@dataclass(eq=False)
class VectorFieldSystem:
    """d vector fields on R^N.

    ``fields(x)`` maps (..., N) to (..., N, d) with column i equal to V_i(x);
    ``jac(x)`` maps (..., N) to (..., N, N, d) with entry [a, b, i] equal to
    dV_i^a / dx_b.  Compositions V_(alpha) are analytic when the system was
    built from expressions and finite-difference otherwise.
    """

    N: int
    d: int
    fields: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    exprs: tuple | None = None
    _comp_cache: dict = field(default_factory=dict, repr=False)

    # construction -------------------------------------------------------
    @classmethod
    def from_expressions(cls, exprs: Sequence[Sequence], symbols: Sequence[sp.Symbol], name: str = "custom"):
        """exprs[i][a] is the a-th component of V_i as a sympy expression."""
        symbols = tuple(symbols)
        N, d = len(symbols), len(exprs)
        cols = [sp.Matrix([sp.sympify(e) for e in col]) for col in exprs]
        if any(c.shape[0] != N for c in cols):
            raise ValueError("each field needs N components")
        V = sp.Matrix.hstack(*cols)
        J = [c.jacobian(sp.Matrix(symbols)) for c in cols]
        f_fields = _lambdify_array(symbols, list(V), (N, d))
        f_jac = _lambdify_array(symbols, [J[i][a, b] for a in range(N) for b in range(N) for i in range(d)], (N, N, d))
        sys = cls(N, d, f_fields, f_jac, name=name, exprs=(symbols, tuple(cols)))
        return sys

    @classmethod
    def from_callables(cls, N: int, d: int, fields: Callable, name: str = "custom"):
        """Black-box fields; Jacobians and compositions by central differences."""

        def jac(x):
            x = np.asarray(x, dtype=float)
            h = FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))[..., None]
            cols = []
            for b in range(N):
                e = np.zeros(N)
                e[b] = 1.0
                cols.append((fields(x + h * e) - fields(x - h * e)) / (2 * h[..., None]))
            return np.stack(cols, axis=-2)

        return cls(N, d, fields, jac, name=name)

    # compositions -------------------------------------------------------
    def compositions(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        """Evaluator x -> (..., N, d**k) of V_(alpha) over words of length k."""
        if k not in self._comp_cache:
            self._comp_cache[k] = self._build_compositions(k)
        return self._comp_cache[k]

    def _build_compositions(self, k: int):
        d, N = self.d, self.N
        if self.exprs is not None:
            symbols, cols = self.exprs
            X = sp.Matrix(symbols)
            exprs = _symbolic_compositions(cols, X, k)
            flat = [exprs[w][a] for a in range(N) for w in range(d**k)]
            return _lambdify_array(symbols, flat, (N, d**k))
        if k == 1:
            return self.fields
        inner = self.compositions(k - 1)

        def comp(x):
            # V_(i beta) = D V_(beta) . V_i by central differences along V_i
            x = np.asarray(x, dtype=float)
            V = self.fields(x)
            h = FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))[..., None]
            out = []
            for i in range(d):
                step = h * V[..., i]
                out.append((inner(x + step) - inner(x - step)) / (2 * h[..., None]))
            return np.concatenate(out, axis=-1)

        return comp

    def brackets(self, k: int, words: Sequence[tuple[int, ...]] | None = None) -> Callable:
        """Evaluator x -> (..., N, m) of right-nested brackets V_[alpha].

        Defaults to all words of length k in index order.
        """
        d = self.d
        if words is None:
            words = [index_word(j, k, d) for j in range(d**k)]
        C = np.array([tensor_generator(d, k, w).levels[k] for w in words]).reshape(len(words), d**k)
        comp = self.compositions(k)
        return lambda x: comp(x) @ C.T

    def lie_images(self, basis: LyndonBasis) -> Callable:
        """Evaluator x -> (..., N, dim g) of the fields attached to the Lyndon basis."""
        comps = [self.compositions(k) for k in range(1, basis.l + 1)]

        def ev(x):
            return np.concatenate([c(x) @ B.T for c, B in zip(comps, basis.expanded)], axis=-1)

        return ev


def _symbolic_compositions(cols, X, k):
    """V_(alpha) for all words of length k, indexed like tensor levels."""
    d = len(cols)
    level = list(cols)
    for _ in range(k - 1):
        # words (i, beta): index i * d^{len beta} + index(beta)
        level = [sp.expand(level[b].jacobian(X) * cols[i]) for i in range(d) for b in range(len(level))]
    return level


def _lambdify_array(symbols, flat_exprs, shape):
    fn = sp.lambdify(symbols, flat_exprs, modules="numpy")

    def ev(x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        res = fn(*[x[..., a] for a in range(x.shape[-1])])
        arr = np.stack([np.broadcast_to(np.asarray(r, dtype=float), batch) for r in res], axis=-1)
        return arr.reshape(batch + tuple(shape))

    return ev


# built-in systems --------------------------------------------------------------
_ALLOWED = re.compile(r"^(\s|\d|\.|[eE][+-]?\d|x\d+|sin|cos|exp|tanh|pi|\*\*|[-+*/^()])*$")


def _parse_expr(text: str, symbols: dict) -> sp.Expr:
    text = str(text)
    if not _ALLOWED.match(text):
        raise ValueError(f"unsupported token in field expression {text!r}")
    ns = dict(symbols, sin=sp.sin, cos=sp.cos, exp=sp.exp, tanh=sp.tanh, pi=sp.pi)
    return sp.sympify(text.replace("^", "**"), locals=ns)


def system_from_spec(spec: dict) -> VectorFieldSystem:
    """Build from {"N": int, "fields": [[expr, ...], ...]} with variables x1..xN.

    Expressions are polynomials combined with sin, cos, exp and tanh (the
    latter serves as a bounded smooth cutoff).
    """
    N = int(spec["N"])
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(N)))
    xs = xs if isinstance(xs, tuple) else (xs,)
    names = {f"x{i + 1}": s for i, s in enumerate(xs)}
    cols = [[_parse_expr(e, names) for e in col] for col in spec["fields"]]
    return VectorFieldSystem.from_expressions(cols, xs, name=spec.get("name", "user"))


BUILTIN_SPECS = {
    "elliptic-identity": {"N": 2, "fields": [["1", "0"], ["0", "1"]]},
    "heisenberg": {"N": 3, "fields": [["1", "0", "0"], ["0", "1", "x1"]]},
    "grushin-like": {"N": 2, "fields": [["1", "0"], ["0", "x1"]]},
    "heisenberg-sine": {"N": 3, "fields": [["1", "0", "0"], ["0", "1", "sin(x1)"]]},
}


def builtin_system(name: str) -> VectorFieldSystem:
    if name not in BUILTIN_SPECS:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(BUILTIN_SPECS)}")
    return system_from_spec(dict(BUILTIN_SPECS[name], name=name))


def identity_system(n: int) -> VectorFieldSystem:
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)))
    xs = xs if isinstance(xs, tuple) else (xs,)
    cols = [[sp.Integer(int(a == i)) for a in range(n)] for i in range(n)]
    return VectorFieldSystem.from_expressions(cols, xs, name=f"elliptic-identity-{n}")


# flows ------------------------------------------------------------------------
def _rk4_segment(sys: VectorFieldSystem, x, J, inc, m: int, bound: float):
    """Integrate dx/ds = V(x) inc over s in [0, 1] with m RK4 steps."""
    h = 1.0 / m

    def rhs(x, J):
        dx = np.einsum("...ni,...i->...n", sys.fields(x), inc)
        if J is None:
            return dx, None
        A = np.einsum("...abi,...i->...ab", sys.jac(x), inc)
        return dx, A @ J

    for _ in range(m):
        k1, j1 = rhs(x, J)
        k2, j2 = rhs(x + 0.5 * h * k1, None if J is None else J + 0.5 * h * j1)
        k3, j3 = rhs(x + 0.5 * h * k2, None if J is None else J + 0.5 * h * j2)
        k4, j4 = rhs(x + h * k3, None if J is None else J + h * j3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if J is not None:
            J = J + h / 6.0 * (j1 + 2 * j2 + 2 * j3 + j4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > bound:
            raise FlowError("flow blow-up: state left the configured bound")
    return x, J


@dataclass
class FlowResult:
    endpoint: np.ndarray
    trajectory: np.ndarray | None = None
    jacobian: np.ndarray | None = None


def flow(
    sys: VectorFieldSystem,
    x0,
    h,
    max_step: float = 0.01,
    trajectory: bool = False,
    jacobian: bool = False,
    bound: float = BLOWUP_BOUND,
):
    """Solve dx = V(x) dh along a piecewise-linear control.

    ``h`` is a GridPath or an increments array of shape (..., n_segments, d)
    broadcasting against x0 of shape (..., N).  Each segment is integrated
    with classical RK4 using ceil(|increment| / max_step) substeps; the
    result does not depend on how the segment is parametrized in time.
    Returns the endpoint array, or a FlowResult when trajectory or jacobian
    output is requested.
    """
    incs = h.increments if isinstance(h, GridPath) else np.asarray(h, dtype=float)
    x = np.asarray(x0, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], incs.shape[:-2])
    x = np.broadcast_to(x, batch + (sys.N,)).copy()
    J = np.broadcast_to(np.eye(sys.N), batch + (sys.N, sys.N)).copy() if jacobian else None
    traj = [x.copy()] if trajectory else None
    nseg = incs.shape[-2]
    lens = np.linalg.norm(incs, axis=-1).reshape(-1, nseg).max(axis=0) if nseg else np.zeros(0)
    for j in range(nseg):
        inc = incs[..., j, :]
        if lens[j] == 0.0:
            if trajectory:
                traj.append(x.copy())
            continue
        m = max(1, int(np.ceil(lens[j] / max_step)))
        x, J = _rk4_segment(sys, x, J, inc, m, bound)
        if trajectory:
            traj.append(x.copy())
    if not (trajectory or jacobian):
        return x
    return FlowResult(x, None if traj is None else np.stack(traj, axis=-2), J)


def flow_velocity(sys: VectorFieldSystem, x0, hdot: Callable, T: float = 1.0, n_steps: int = 2000):
    """RK4 for dx/dt = V(x) hdot(t) on [0, T] with a callable control velocity."""
    x = np.asarray(x0, dtype=float).copy()
    dt = T / n_steps

    def rhs(t, x):
        return sys.fields(x) @ np.asarray(hdot(t), dtype=float)

    for k in range(n_steps):
        t = k * dt
        k1 = rhs(t, x)
        k2 = rhs(t + dt / 2, x + dt / 2 * k1)
        k3 = rhs(t + dt / 2, x + dt / 2 * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# Taylor map ---------------------------------------------------------------------
def taylor_F(sys: VectorFieldSystem, u: LieElement, x, l: int | None = None) -> np.ndarray:
    """F_l(u, x) = sum over words alpha of V_(alpha)(x) (exp u)^alpha (batched)."""
    l = u.basis.l if l is None else l
    if l != u.basis.l:
        raise ValueError("level must match the basis of u")
    g = tensor_exp(to_tensor(u))
    x = np.asarray(x, dtype=float)
    out = 0.0
    for k in range(1, l + 1):
        out = out + np.einsum("...nw,...w->...n", sys.compositions(k)(x), g.levels[k])
    batch = np.broadcast_shapes(x.shape[:-1], u.batch_shape)
    return np.broadcast_to(out, batch + (sys.N,)).copy()


def jacobian_JF(sys: VectorFieldSystem, u: LieElement, x, l: int | None = None) -> np.ndarray:
    """Matrix (..., N, dim g) of dF_l/du in Lyndon coordinates."""
    basis = u.basis
    l = basis.l if l is None else l
    ut = to_tensor(u[..., None, :])
    E = to_tensor(LieElement(basis, np.eye(basis.dim)))
    D = exp_derivative(ut, E)
    x = np.asarray(x, dtype=float)
    out = 0.0
    for k in range(1, l + 1):
        out = out + np.einsum("...nw,...jw->...nj", sys.compositions(k)(x), D.levels[k])
    return out


def jacobian_JF_fd(sys: VectorFieldSystem, u: LieElement, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of taylor_F in u (single point)."""
    D = u.basis.dim
    E = np.eye(D) * h
    up = LieElement(u.basis, u.coords + E)
    um = LieElement(u.basis, u.coords - E)
    return ((taylor_F(sys, up, x) - taylor_F(sys, um, x)) / (2 * h)).T


def metric_inverse(basis: LyndonBasis, metric: str = "hs") -> np.ndarray:
    """Inverse Gram matrix of the chosen inner product on g^(l) in Lyndon coordinates."""
    if metric == "hs":
        return np.linalg.inv(basis.gram())
    if metric == "coords":
        return np.eye(basis.dim)
    raise ValueError("metric must be 'hs' or 'coords'")


def jj_star(sys: VectorFieldSystem, u: LieElement, x, metric: str = "hs") -> np.ndarray:
    """JF JF^* with the adjoint taken for the chosen metric on g^(l)."""
    A = jacobian_JF(sys, u, x)
    Ginv = metric_inverse(u.basis, metric)
    return A @ Ginv @ np.swapaxes(A, -1, -2)


def kernel_K(sys: VectorFieldSystem, u: LieElement, x, metric: str = "hs"):
    """det(JF JF^*)^(-1/2); raises RankDeficientError where det <= 1e-12."""
    det = np.linalg.det(jj_star(sys, u, x, metric))
    if np.any(det <= RANK_THRESHOLD):
        raise RankDeficientError("rank deficient: Taylor map is not a submersion here")
    return det ** -0.5


@dataclass
class HypoReport:
    probes: np.ndarray
    l0: int
    lambda_min: np.ndarray
    lambda_min_jf: np.ndarray
    by_level: dict

    def to_json(self) -> dict:
        return {
            "l0": self.l0,
            "lambda_min": self.lambda_min.tolist(),
            "lambda_min_jf": self.lambda_min_jf.tolist(),
            "by_level": {str(k): v for k, v in self.by_level.items()},
        }


def bracket_gram(sys: VectorFieldSystem, x, l: int) -> np.ndarray:
    """sum over all words |alpha| <= l of V_[alpha](x) V_[alpha](x)^T."""
    x = np.asarray(x, dtype=float)
    M = 0.0
    for k in range(1, l + 1):
        B = sys.brackets(k)(x)
        M = M + B @ np.swapaxes(B, -1, -2)
    return M


def hypo_check(sys: VectorFieldSystem, l_max: int, probes, threshold: float = HYPO_THRESHOLD) -> HypoReport:
    """Smallest l <= l_max at which the brackets span R^N at every probe."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("probe set must be nonempty")
    by_level = {}
    for l in range(1, l_max + 1):
        lam = np.linalg.eigvalsh(bracket_gram(sys, probes, l))[..., 0]
        by_level[l] = float(lam.min())
        if lam.min() > threshold:
            basis = build_basis(sys.d, l)
            zero = LieElement.zero(basis, (probes.shape[0],))
            lam_jf = np.linalg.eigvalsh(jj_star(sys, zero, probes))[..., 0]
            return HypoReport(probes, l, lam, lam_jf, by_level)
    raise HypoellipticityError(f"not hypoelliptic up to l_max={l_max}")
