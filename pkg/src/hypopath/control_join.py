"""Smooth controls joining two points of a hypoelliptic system and upper
bounds on the fractional control distance they certify."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fractional_cm import CMFunction, cm_norm
from .free_lie import LieElement, build_basis
from .parallel import thread_count
from .signature_paths import GridPath, cc_len, log_signature, path_from_group_element
from .vf_flow import (
    RANK_THRESHOLD,
    RankDeficientError,
    VectorFieldSystem,
    flow,
    flow_velocity,
    jacobian_JF,
    metric_inverse,
    taylor_F,
)

PSI_TOL = 1e-10
PSI_MAX_ITER = 50
CONTRACTION_LIMIT = 0.95
CONTRACTION_PATIENCE = 3
ELLIPTIC_THRESHOLD = 1e-8


class JoinError(RuntimeError):
    pass


# Psi ----------------------------------------------------------------------------
@dataclass
class PsiResult:
    v: LieElement
    iterations: int
    residual: float
    ratio: float


def psi(
    sys: VectorFieldSystem,
    u: LieElement,
    x,
    eta,
    tol: float = PSI_TOL,
    max_iter: int = PSI_MAX_ITER,
    metric: str = "hs",
) -> PsiResult:
    """v near u with F_l(v, x) = F_l(u, x) + eta, by minimum-norm Gauss-Newton.

    Steps are v <- v + G^-1 J^T (J G^-1 J^T)^-1 r, the least-norm correction
    for the inner product G on g^(l).  ``ratio`` is |v - u| / |eta|.
    """
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta):
        return PsiResult(u, 0, 0.0, 0.0)
    Ginv = metric_inverse(u.basis, metric)
    target = taylor_F(sys, u, x) + eta
    v = u
    r = target - taylor_F(sys, v, x)
    it = 0
    while np.linalg.norm(r) > tol:
        if it >= max_iter:
            raise JoinError(f"Newton diverged: residual {np.linalg.norm(r):.3g} after {max_iter} iterations")
        J = jacobian_JF(sys, v, x)
        M = J @ Ginv @ J.T
        if np.linalg.det(M) <= RANK_THRESHOLD:
            raise RankDeficientError("rank deficient: Taylor map is not a submersion here")
        step = Ginv @ J.T @ np.linalg.solve(M, r)
        v = LieElement(u.basis, v.coords + step)
        r = target - taylor_F(sys, v, x)
        it += 1
    dist = float((v - u).norm())
    return PsiResult(v, it, float(np.linalg.norm(r)), dist / float(np.linalg.norm(eta)))


# joining --------------------------------------------------------------------------
@dataclass
class JoinResult:
    path: GridPath
    intervals: list[float]
    residuals: list[float]
    logsig_residuals: list[float]
    iterations: int
    status: str
    endpoint: np.ndarray
    H: float
    psi_iterations: list[int] = field(default_factory=list)

    @property
    def total_length(self) -> float:
        return float(sum(self.intervals))

    @property
    def rescaled(self) -> GridPath:
        """The joining control reparametrized onto [0, 1]."""
        return self.path.retimed(1.0)

    @property
    def contraction_ratios(self) -> list[float]:
        r = self.residuals
        return [r[i + 1] / r[i] for i in range(len(r) - 1) if r[i] > 0]

    def cm_norm(self, n_grid: int = 4096, mode: str = "auto", on_unit: bool = True):
        """Cameron-Martin norm of the control on [0, 1] or on [0, |I|]."""
        p = self.rescaled if on_unit else self.path
        return cm_norm(CMFunction.from_path(p, self.H, n_grid), mode)

    def d_upper(self, n_grid: int = 4096, mode: str = "auto"):
        """|I|^H |h~|_{[0,|I|]}, equal by the scaling law to |h~ rescaled|_{[0,1]}."""
        if not self.intervals:
            return _zero_norm(self.H, mode)
        return self.cm_norm(n_grid, mode, on_unit=True)

    def to_csv(self, path, meta: dict | None = None):
        import json

        with open(path, "w", newline="") as fh:
            if meta is not None:
                fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["iteration", "residual", "interval_length"])
            for m, r in enumerate(self.residuals):
                L = self.intervals[m] if m < len(self.intervals) else 0.0
                w.writerow([m, repr(float(r)), repr(float(L))])


def _zero_norm(H: float, mode: str):
    from .fractional_cm import CMNorm

    m = "exact" if (mode == "exact" or (mode == "auto" and H >= 0.5)) else "surrogate"
    return CMNorm(0.0, m, m == "surrogate")


def join_points(
    sys: VectorFieldSystem,
    x,
    y,
    l: int,
    H: float,
    eps_stop: float = 1e-6,
    m_max: int = 60,
    max_step: float = 0.005,
) -> JoinResult:
    """Iteratively build a smooth control steering x to y.

    Each round solves the Taylor equation x_m + F_l(u_m, x_m) = y with Psi,
    realizes u_m by a smooth path of length |I_m| = cc_len(u_m) and flows
    along it.  The controls are concatenated on consecutive intervals of
    lengths |I_m|.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    basis = build_basis(sys.d, l)
    zero = LieElement.zero(basis)
    xm = x.copy()
    residuals = [float(np.linalg.norm(y - xm))]
    intervals, lsr, psi_its = [], [], []
    pieces: list[GridPath] = []
    status = "converged"
    bad = 0
    m = 0
    while residuals[-1] > eps_stop:
        if m >= m_max:
            status = "max_iterations"
            break
        res = psi(sys, zero, xm, y - xm)
        um = res.v
        L = cc_len(um)
        bar = path_from_group_element(um.dilate(1.0 / L))
        hm = bar.scaled(L)
        lsr.append(float(np.linalg.norm(log_signature(hm, l, basis).coords - um.coords)))
        xm = flow(sys, xm, hm, max_step=max_step)
        intervals.append(L)
        psi_its.append(res.iterations)
        pieces.append(hm.retimed(L))
        residuals.append(float(np.linalg.norm(y - xm)))
        m += 1
        if residuals[-1] > CONTRACTION_LIMIT * residuals[-2]:
            bad += 1
            if bad >= CONTRACTION_PATIENCE:
                raise JoinError("no contraction: target likely outside the locality radius")
        else:
            bad = 0
    if pieces:
        path = pieces[0]
        for p in pieces[1:]:
            path = path.concat(p)
        path = GridPath(path.times, path.values - path.values[0], path.kinds)
    else:
        path = GridPath.constant(sys.d, 1.0)
    return JoinResult(path, intervals, residuals, lsr, m, status, xm, H, psi_its)


# elliptic case ------------------------------------------------------------------
@dataclass
class EllipticJoin:
    h: CMFunction
    residual: float


def _segment_min_eig(sys: VectorFieldSystem, x, y, n: int = 257) -> float:
    s = np.linspace(0.0, 1.0, n)[:, None]
    V = sys.fields((1 - s) * x + s * y)
    return float(np.linalg.eigvalsh(V @ np.swapaxes(V, -1, -2))[..., 0].min())


def is_elliptic_on_segment(sys: VectorFieldSystem, x, y, threshold: float = ELLIPTIC_THRESHOLD) -> bool:
    return _segment_min_eig(sys, np.asarray(x, float), np.asarray(y, float)) > threshold


def elliptic_join(sys: VectorFieldSystem, x, y, H: float = 0.5, n: int = 4096, verify_steps: int = 256) -> EllipticJoin:
    """h_t = int_0^t V^T (V V^T)^-1 (z_s) (y - x) ds along z_s = (1 - s) x + s y."""
    from scipy.integrate import cumulative_simpson

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if _segment_min_eig(sys, x, y) <= ELLIPTIC_THRESHOLD:
        raise JoinError("not elliptic on segment")

    def velocity(s):
        s = np.asarray(s, dtype=float)
        z = x + s[..., None] * (y - x)
        V = sys.fields(z)
        w = np.linalg.solve(V @ np.swapaxes(V, -1, -2), np.broadcast_to(y - x, z.shape)[..., None])
        return (np.swapaxes(V, -1, -2) @ w)[..., 0]

    t = np.linspace(0.0, 1.0, n + 1)
    g = velocity(t)
    h = cumulative_simpson(g, x=t, axis=0, initial=0.0)
    end = flow_velocity(sys, x, lambda s: velocity(np.array(s)), 1.0, verify_steps)
    return EllipticJoin(CMFunction(1.0, h, H, g), float(np.linalg.norm(end - y)))


# distance estimates -------------------------------------------------------------
@dataclass
class DistanceEstimate:
    value: float
    mode: str
    flagged: bool
    method: str
    join: JoinResult | None = None


def distance_upper(
    sys: VectorFieldSystem,
    x,
    y,
    l: int,
    H: float,
    method: str = "auto",
    n_grid: int = 4096,
    mode: str = "auto",
    eps_stop: float = 1e-6,
) -> DistanceEstimate:
    """Upper bound on d_H(x, y): the Cameron-Martin norm of a joining control on [0, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        z = _zero_norm(H, mode)
        return DistanceEstimate(0.0, z.mode, z.flagged, "trivial")
    if method == "auto":
        method = "elliptic" if is_elliptic_on_segment(sys, x, y) else "join"
    if method == "elliptic":
        ej = elliptic_join(sys, x, y, H, n_grid)
        if ej.residual > 1e-8:
            raise JoinError(f"elliptic join residual {ej.residual:.3g} above 1e-8")
        nm = cm_norm(ej.h, mode)
        return DistanceEstimate(nm.value, nm.mode, nm.flagged, "elliptic")
    if method != "join":
        raise ValueError("method must be auto, elliptic or join")
    jr = join_points(sys, x, y, l, H, eps_stop=eps_stop)
    if jr.status != "converged":
        raise JoinError(f"join did not converge ({jr.status})")
    nm = jr.d_upper(n_grid, mode)
    return DistanceEstimate(nm.value, nm.mode, nm.flagged, "join", jr)


def loglog_slope(r, v) -> float:
    r, v = np.asarray(r, float), np.asarray(v, float)
    ok = (r > 0) & (v > 0) & np.isfinite(v)
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def distance_scan(sys: VectorFieldSystem, x, direction, radii, l: int, H, method: str = "auto", n_grid: int = 4096) -> dict:
    """distance_upper along y = x + r * direction for each r and Hurst value.

    With two Hurst values the ratio d_{H1} / d_{H2} and its spread
    max/min over the radii are also reported.
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    Hs = [H] if np.isscalar(H) else list(H)
    radii = [float(r) for r in radii]

    def one(args):
        r, h = args
        try:
            est = distance_upper(sys, x, x + r * direction, l, h, method=method, n_grid=n_grid)
            return {"r": r, "H": h, "d_upper": est.value, "mode": est.mode, "method": est.method, "ok": True}
        except (JoinError, RankDeficientError) as exc:
            return {"r": r, "H": h, "d_upper": float("nan"), "mode": "", "method": method, "ok": False, "error": str(exc)}

    jobs = [(r, h) for h in Hs for r in radii]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(one, jobs))
    out = {"rows": rows, "slopes": {}}
    for h in Hs:
        sel = [row for row in rows if row["H"] == h and row["ok"]]
        out["slopes"][str(h)] = loglog_slope([s["r"] for s in sel], [s["d_upper"] for s in sel]) if len(sel) > 1 else float("nan")
    if len(Hs) == 2:
        a = np.array([row["d_upper"] for row in rows if row["H"] == Hs[0]])
        b = np.array([row["d_upper"] for row in rows if row["H"] == Hs[1]])
        ratio = a / b
        out["ratio"] = ratio.tolist()
        out["ratio_spread"] = float(np.nanmax(ratio) / np.nanmin(ratio))
    return out
