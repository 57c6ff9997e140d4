"""Riemann-Liouville fractional calculus on uniform grids, the Volterra
operator K of the fractional Brownian motion and Cameron-Martin norms.

Conventions: grids are uniform, t_j = j * dt, j = 0..n, and sampled
functions have the grid along axis 0 (extra trailing axes are components).
The normalizing constant of K is taken to be 1, so K^{-1} carries no
constant either.  Quadratures integrate the singular kernels exactly
against the piecewise-linear interpolant of the data.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.signal import convolve
from scipy.special import gamma

HOLDER_EPS = 0.05


class RegularityWarning(UserWarning):
    pass


class RangeError(ValueError):
    pass


def _conv_head(f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """out[n] = sum_{k=0}^{n} w[k] f[n-k] along axis 0."""
    n = f.shape[0]
    w = w.reshape((-1,) + (1,) * (f.ndim - 1))
    return convolve(f, w, mode="full")[:n]


def frac_integral(f, alpha: float, dt: float, side: str = "left") -> np.ndarray:
    """I^alpha f at the grid nodes, f taken piecewise linear between nodes."""
    if alpha <= 0:
        raise RangeError("alpha must be positive")
    f = np.asarray(f, dtype=float)
    if side == "right":
        return frac_integral(f[::-1], alpha, dt, "left")[::-1]
    if side != "left":
        raise ValueError("side must be 'left' or 'right'")
    n = f.shape[0] - 1
    k = np.arange(n + 1, dtype=float)
    a1 = alpha + 1.0
    c = np.empty(n + 1)
    c[0] = 1.0
    c[1:] = (k[1:] + 1) ** a1 - 2 * k[1:] ** a1 + (k[1:] - 1) ** a1
    # nodes j >= 1 contribute c[n-j]; node 0 has its own end weight
    out = _conv_head(np.concatenate([np.zeros_like(f[:1]), f[1:]]), c)
    end = np.zeros(n + 1)
    end[1:] = (k[1:] - 1) ** a1 - (k[1:] - 1 - alpha) * k[1:] ** alpha
    out = out + end.reshape((-1,) + (1,) * (f.ndim - 1)) * f[:1]
    out[0] = 0.0
    return out * dt**alpha / gamma(alpha + 2)


def _check_holder(f: np.ndarray, alpha: float, dt: float):
    if f.shape[0] < 9:
        return
    fine = np.abs(np.diff(f, axis=0)).max() / dt ** (alpha + HOLDER_EPS)
    coarse = np.abs(np.diff(f[::2], axis=0)).max() / (2 * dt) ** (alpha + HOLDER_EPS)
    scale = np.abs(f).max()
    if scale > 0 and fine > 4.0 * coarse + 1e-300:
        warnings.warn("insufficient regularity for the fractional derivative", RegularityWarning, stacklevel=3)


def frac_deriv(f, alpha: float, dt: float, side: str = "left") -> np.ndarray:
    """Marchaud derivative D^alpha f, 0 < alpha < 1, exact on piecewise-linear f.

    At t = 0 the derivative is 0 when f(0) = 0 and singular otherwise; in
    the singular case node 0 copies node 1 so that outputs stay finite.
    Data behaving like t^alpha at the origin (e.g. I^alpha of a function
    with f(0) != 0) is resolved only at rate n^{-1/2} by the
    piecewise-linear rule; split such a head off in closed form.
    """
    if not 0 < alpha < 1:
        raise RangeError("alpha must lie in (0, 1)")
    f = np.asarray(f, dtype=float)
    if side == "right":
        return frac_deriv(f[::-1], alpha, dt, "left")[::-1]
    if side != "left":
        raise ValueError("side must be 'left' or 'right'")
    _check_holder(f, alpha, dt)
    n = f.shape[0] - 1
    if n < 1:
        return np.zeros_like(f)
    k = np.arange(n + 1, dtype=float)
    P = np.zeros(n + 1)
    P[1:] = k[1:] ** -alpha - (k[1:] + 1) ** -alpha
    Q = alpha * ((k + 1) ** (1 - alpha) - k ** (1 - alpha)) / (1 - alpha)
    Q[1:] -= k[1:] * P[1:]
    # D_n dt^alpha Gamma(1-alpha) = f_n - sum_{k=1}^{n-1} P_k f_{n-k} + sum_m df_m Q_{n-1-m}
    sP = _conv_head(f, P)
    df = np.diff(f, axis=0)
    sQ = np.zeros_like(f)
    sQ[1:] = _conv_head(df, Q[:n])
    # _conv_head(f, P) includes k = n (f_0 P_n); drop it
    shape = (-1,) + (1,) * (f.ndim - 1)
    sP = sP - P.reshape(shape) * f[:1]
    out = (f - sP + sQ) * dt**-alpha / gamma(1 - alpha)
    out[0] = np.where(f[0] == 0, 0.0, out[1])
    return out


def _power_moments(t0, t1, p):
    return (t1 ** (p + 1) - t0 ** (p + 1)) / (p + 1)


def weighted_linear_integral(R, dt: float, p: float):
    """Exact integral of t^p R(t) over [0, T] for piecewise-linear R, p > -1."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0] - 1
    t = np.arange(n + 1) * dt
    M0 = _power_moments(t[:-1], t[1:], p)
    M1 = _power_moments(t[:-1], t[1:], p + 1)
    wl = (t[1:] * M0 - M1) / dt
    wr = (M1 - t[:-1] * M0) / dt
    shape = (-1,) + (1,) * (R.ndim - 1)
    return np.sum(wl.reshape(shape) * R[:-1] + wr.reshape(shape) * R[1:], axis=0)


def linear_l2_sq(R, dt: float):
    """Exact integral of |R|^2 for piecewise-linear R (summed over components)."""
    R = np.asarray(R, dtype=float)
    a, b = R[:-1], R[1:]
    return float(np.sum(dt / 3.0 * (a * a + a * b + b * b)))


@dataclass(frozen=True, eq=False)
class CMFunction:
    """Candidate Cameron-Martin path on a uniform grid of [0, T].

    ``deriv`` optionally carries exact nodal derivatives; otherwise they are
    obtained by second-order finite differences.
    """

    T: float
    values: np.ndarray
    H: float
    deriv: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 3:
            raise ValueError("need at least 3 grid nodes")
        if not 0 < self.H < 1:
            raise RangeError("Hurst parameter must lie in (0, 1)")
        if np.any(np.abs(v[0]) > 1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("Cameron-Martin paths start at the origin")
        object.__setattr__(self, "values", v)
        if self.deriv is not None:
            dv = np.asarray(self.deriv, dtype=float).reshape(v.shape)
            object.__setattr__(self, "deriv", dv)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def velocity(self) -> np.ndarray:
        if self.deriv is not None:
            return self.deriv
        return np.gradient(self.values, self.dt, axis=0, edge_order=2)

    @classmethod
    def from_callable(cls, h: Callable, T: float, n: int, H: float, dh: Callable | None = None) -> "CMFunction":
        t = np.linspace(0.0, T, n + 1)
        vals = np.asarray(h(t), dtype=float)
        der = None if dh is None else np.asarray(dh(t), dtype=float)
        return cls(T, vals, H, der)

    @classmethod
    def from_path(cls, path, H: float, n: int) -> "CMFunction":
        """Sample a GridPath (shifted to start at 0) with exact derivatives."""
        t = np.linspace(path.times[0], path.times[-1], n + 1)
        return cls(path.T, path(t) - path.values[0], H, path.derivative(t))

    def rescaled(self, T_new: float) -> "CMFunction":
        """t -> h(T t / T_new) on [0, T_new] with the same node count."""
        c = self.T / T_new
        der = None if self.deriv is None else self.deriv * c
        return CMFunction(T_new, self.values, self.H, der)


def k_apply(phi, H: float, T: float = 1.0) -> CMFunction:
    """K phi on the grid of phi (uniform on [0, T])."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    n = phi.shape[0] - 1
    dt = T / n
    t = np.linspace(0.0, T, n + 1)[:, None]
    if abs(H - 0.5) < 1e-15:
        return CMFunction(T, frac_integral(phi, 1.0, dt), H, phi.copy())
    if not 0 < H < 1:
        raise RangeError("Hurst parameter must lie in (0, 1)")
    # both branches read I^o(t^a I^a(s^{-a} phi)) with a = |H - 1/2|
    a = abs(H - 0.5)
    p = -a
    phi0 = phi[:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rem = np.where(t > 0, t**p * (phi - phi0), 0.0)
    inner_rem = frac_integral(rem, a, dt)
    c0 = gamma(p + 1) / gamma(p + a + 1)
    # outer integrand t^a (c0 phi0 + inner_rem); the phi(0) part again in closed form
    q = a
    outer_order = 1.0 if H > 0.5 else 2 * H
    g = t**q * inner_rem
    head = c0 * phi0 * gamma(q + p + a + 1) / gamma(q + p + a + 1 + outer_order) * t ** (q + p + a + outer_order)
    h = head + frac_integral(g, outer_order, dt)
    deriv = None
    if H > 0.5:
        deriv = c0 * phi0 * t ** (q + p + a) + g
    return CMFunction(T, h, H, deriv)


def k_inverse(h: CMFunction) -> np.ndarray:
    """K^{-1} h = t^{H-1/2} D^{H-1/2}(s^{1/2-H} h')(t) for H in [1/2, 1)."""
    H = h.H
    hd = h.velocity()
    if abs(H - 0.5) < 1e-15:
        return hd.copy()
    if H < 0.5:
        raise RangeError("K^{-1} is only provided for H >= 1/2")
    A, R = _k_inverse_parts(h)
    t = h.grid[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        sing = np.where(t > 0, t ** -(H - 0.5), np.inf)
        out = A * sing + R
    out[0] = np.where(A[0] == 0, R[0], out[1])
    return out


def _k_inverse_parts(h: CMFunction):
    """Split K^{-1} h = A t^{-alpha} + R(t), alpha = H - 1/2, with R(0) = 0."""
    a = h.H - 0.5
    hd = h.velocity()
    dt = h.dt
    t = h.grid[:, None]
    hd0 = hd[:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rem = np.where(t > 0, t**-a * (hd - hd0), 0.0)
    A = hd0 * gamma(1 - a) / gamma(1 - 2 * a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegularityWarning)
        R = t**a * frac_deriv(rem, a, dt)
    R[0] = 0.0
    return A, R


class CMNorm(NamedTuple):
    value: float
    mode: str
    flagged: bool


def cm_norm(h: CMFunction, mode: str = "auto") -> CMNorm:
    """Cameron-Martin norm |K^{-1} h|_{L^2[0,T]}, root-sum-squared over components.

    mode "exact" needs H >= 1/2; "surrogate" returns |h'|_{L^2}, which bounds
    the norm from above up to an unspecified constant and is flagged.
    """
    if mode == "auto":
        mode = "exact" if h.H >= 0.5 else "surrogate"
    hd = h.velocity()
    if mode == "surrogate":
        return CMNorm(float(np.sqrt(linear_l2_sq(hd, h.dt))), "surrogate", True)
    if mode != "exact":
        raise ValueError("mode must be exact, surrogate or auto")
    if h.H < 0.5:
        raise RangeError("exact Cameron-Martin norm requires H >= 1/2")
    if abs(h.H - 0.5) < 1e-15:
        return CMNorm(float(np.sqrt(linear_l2_sq(hd, h.dt))), "exact", False)
    a = h.H - 0.5
    A, R = _k_inverse_parts(h)
    T = h.T
    sq = float(np.sum(A * A)) * T ** (1 - 2 * a) / (1 - 2 * a)
    sq += 2.0 * float(np.sum(A[0] * weighted_linear_integral(R, h.dt, -a)))
    sq += linear_l2_sq(R, h.dt)
    return CMNorm(float(np.sqrt(max(sq, 0.0))), "exact", False)


def pairing(f, h: CMFunction) -> np.ndarray:
    """Midpoint Stieltjes sum for the integral of f against dh.

    f is a callable of time or an array of nodal values.
    """
    t = h.grid
    mid = 0.5 * (t[:-1] + t[1:])
    if callable(f):
        fm = np.asarray(f(mid), dtype=float)
    else:
        fv = np.asarray(f, dtype=float)
        fm = 0.5 * (fv[:-1] + fv[1:])
    dh = np.diff(h.values, axis=0)
    if fm.ndim == 1:
        fm = fm[:, None]
    return np.sum(fm * dh, axis=0)
