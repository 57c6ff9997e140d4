"""Monte Carlo density studies for log-signatures of fBm and for the Taylor
process x + F_l(U_t, x), plus a numerical check of the disintegration
(coarea) formula for submersions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

from .control_join import JoinError, distance_upper
from .fbm_sampler import sample_fbm, sample_log_signature
from .free_lie import LieElement, build_basis
from .signature_paths import cc_len, log_signature_of_increments
from .vf_flow import RankDeficientError, VectorFieldSystem, flow, kernel_K, taylor_F

KDE_CHUNK = 4096


# kernel density estimation -------------------------------------------------------
@dataclass
class KdeEstimate:
    points: np.ndarray
    bandwidth: np.ndarray
    values: np.ndarray
    se: np.ndarray
    n: int


def scott_bandwidth(samples: np.ndarray) -> np.ndarray:
    n, m = samples.shape
    return samples.std(axis=0, ddof=1) * n ** (-1.0 / (m + 4))


def kde_rho(samples, points, bandwidth=None) -> KdeEstimate:
    """Gaussian product-kernel density estimate with per-point standard errors.

    Samples are accumulated in fixed chunks in a fixed order, so results do
    not depend on threading.
    """
    if isinstance(samples, LieElement):
        samples = samples.coords
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    points = np.asarray(points, dtype=float).reshape(-1, samples.shape[1])
    n, m = samples.shape
    h = scott_bandwidth(samples) if bandwidth is None else np.broadcast_to(np.asarray(bandwidth, float), (m,)).copy()
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    if len(points) == 0:
        return KdeEstimate(points, h, np.zeros(0), np.zeros(0), n)
    norm = 1.0 / (np.prod(h) * (2 * np.pi) ** (m / 2))
    s1 = np.zeros(len(points))
    s2 = np.zeros(len(points))
    for a in range(0, n, KDE_CHUNK):
        z = (points[:, None, :] - samples[None, a : a + KDE_CHUNK, :]) / h
        k = np.exp(-0.5 * np.einsum("pnm,pnm->pn", z, z)) * norm
        s1 += k.sum(axis=1)
        s2 += (k * k).sum(axis=1)
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0) * n / max(n - 1, 1)
    return KdeEstimate(points, h, mean, np.sqrt(var / n), n)


def kde_mass(samples, lo, hi, n_grid: int = 41, bandwidth=None) -> float:
    """Integral of the KDE over the box [lo, hi] by a tensor trapezoid rule."""
    samples = samples.coords if isinstance(samples, LieElement) else np.asarray(samples, float)
    m = samples.shape[1]
    axes = [np.linspace(a, b, n_grid) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    vals = kde_rho(samples, pts, bandwidth).values.reshape((n_grid,) * m)
    for ax in reversed(axes):
        vals = np.trapezoid(vals, ax, axis=-1)
    return float(vals)


# scaling and positivity ---------------------------------------------------------
def _u_samples(H, t, l, n, seed, d, grid, stream):
    batch = sample_fbm(H, grid, d, n, seed, T=t, stream=stream)
    return sample_log_signature(batch, t, l)


def default_probes(basis, scale: np.ndarray) -> np.ndarray:
    """Five probe points (in units of the per-coordinate scale) away from the origin."""
    D = basis.dim
    rng = np.random.default_rng(2024)
    base = np.zeros((5, D))
    base[0, 0] = 0.5
    if D > 1:
        base[1, 1] = -0.5
    base[2, -1] = 0.4
    base[3] = 0.3
    base[4] = rng.uniform(-0.5, 0.5, D)
    return base * scale


def scaling_check_rho(
    H: float,
    t: float,
    l: int,
    points=None,
    n: int = 200_000,
    seed: int = 0,
    d: int = 2,
    grid: int = 128,
    band_sigmas: float = 3.0,
    tol0: float = 0.15,
) -> dict:
    """Compare rho_t(u) with t^{-H nu} rho_1(delta_{t^-H} u).

    rho_1 and rho_t are estimated from independent samples; the rho_t
    bandwidth is the dilation of the rho_1 bandwidth so that smoothing bias
    cancels in the ratio.  Points are given in rho_1 (unit-time)
    coordinates z and evaluated at u = delta_{t^H} z; the origin is always
    included first.
    """
    basis = build_basis(d, l)
    nu = basis.nu
    U1 = _u_samples(H, 1.0, l, n, seed, d, grid, 0)
    Ut = U1 if t == 1.0 else _u_samples(H, t, l, n, seed, d, grid, 1)
    scale = U1.coords.std(axis=0)
    z = default_probes(basis, scale) if points is None else np.asarray(points, float).reshape(-1, basis.dim)
    z = np.vstack([np.zeros(basis.dim), z])
    lamk = (t**H) ** basis.degrees
    h1 = scott_bandwidth(U1.coords)
    e1 = kde_rho(U1.coords, z, h1)
    et = kde_rho(Ut.coords, z * lamk, h1 * lamk)
    lhs, lhs_se = et.values, et.se
    rhs, rhs_se = t ** (-H * nu) * e1.values, t ** (-H * nu) * e1.se
    ratio = lhs / rhs
    sig = ratio * np.sqrt((lhs_se / lhs) ** 2 + (rhs_se / rhs) ** 2)
    ok = np.abs(ratio - 1) <= band_sigmas * sig
    ok[0] = abs(ratio[0] - 1) <= tol0 + band_sigmas * sig[0]
    return {
        "H": H, "t": t, "l": l, "n": n, "nu": nu,
        "points": z.tolist(),
        "ratio": ratio.tolist(),
        "sigma": sig.tolist(),
        "pass_each": ok.tolist(),
        "pass": bool(np.all(ok)),
    }


def homogeneous_norm(basis, coords) -> np.ndarray:
    """max_k |u_k|^{1/k} with |.| Euclidean on degree-k coordinates."""
    coords = np.asarray(coords, float)
    return np.max(
        np.stack([np.linalg.norm(basis.block(coords, k), axis=-1) ** (1.0 / k) for k in range(1, basis.l + 1)]),
        axis=0,
    )


def positivity_report(
    H: float,
    t: float,
    l: int,
    M: float = 1.0,
    n: int = 200_000,
    seed: int = 0,
    d: int = 2,
    grid: int = 128,
    per_axis: int = 7,
    box: str = "scaled",
    norm: str = "cc",
) -> dict:
    """Minimum of the KDE of rho_t over a compact region, with its standard error.

    The region is {z : |z| <= M} where |.| is cc_len (norm "cc", an upper
    bound on the CC norm, so the region lies inside the CC ball of radius
    M), the Hilbert-Schmidt norm (norm "hs") or the homogeneous norm
    max_k |z_k|^(1/k) (norm "homogeneous").  With box
    "scaled" it is mapped to time t by delta_{t^H}, which is where rho_t
    carries the mass that rho_1 has on the unit region; with box "raw" it
    is used as is.  Evaluation points are a tensor grid of the bounding box
    filtered to the region.
    """
    basis = build_basis(d, l)
    Ut = _u_samples(H, t, l, n, seed, d, grid, 0)
    if norm == "cc":
        # cc_len(c e_j) = c^(1/k) cc_len(e_j) for c > 0, so the axis extents are explicit
        gens = [cc_len(LieElement(basis, np.eye(basis.dim)[j])) for j in range(basis.dim)]
        ext = [(M / g) ** k for g, k in zip(gens, basis.degrees)]
    else:
        ext = [M**k for k in basis.degrees]
    axes = [np.linspace(-e, e, per_axis) for e in ext]
    z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, basis.dim)
    if norm == "cc":
        size = np.array([cc_len(LieElement(basis, zi)) for zi in z])
    elif norm == "hs":
        size = LieElement(basis, z).norm()
    elif norm == "homogeneous":
        size = homogeneous_norm(basis, z)
    else:
        raise ValueError("norm must be 'cc', 'hs' or 'homogeneous'")
    z = z[size <= M * (1 + 1e-12)]
    if box == "scaled":
        u = z * (t**H) ** basis.degrees
    elif box == "raw":
        u = z
    else:
        raise ValueError("box must be 'scaled' or 'raw'")
    est = kde_rho(Ut.coords, u)
    i = int(np.argmin(est.values))
    vmin, se = float(est.values[i]), float(est.se[i])
    return {
        "H": H, "t": t, "l": l, "n": n, "box": box, "norm": norm, "M": M,
        "n_points": int(len(u)),
        "min_density": vmin,
        "min_se": se,
        "argmin": u[i].tolist(),
        "positive": bool(vmin - 3 * se > 0),
        "inconclusive": bool(n < 1000 or vmin <= 3 * se),
    }


# Taylor error order ----------------------------------------------------------------
def taylor_error_order(
    sys: VectorFieldSystem,
    x,
    H: float,
    l: int,
    t_list,
    n: int = 10_000,
    seed: int = 0,
    grid: int = 32,
    max_step: float = 0.01,
    floor: float = 1e-12,
) -> dict:
    """Fit the log-log slope of E|X_t - x - F_l(U_t, x)| against t.

    X_t is the flow along the piecewise-linear interpolation of a sampled
    fBm path on [0, t] and U_t its truncated log-signature, so the two
    sides see the same driving path.
    """
    x = np.asarray(x, dtype=float)
    t_list = np.asarray(t_list, dtype=float)
    if np.log10(t_list.max() / t_list.min()) < 1.0 - 1e-12:
        raise ValueError("t_list should span at least a decade")
    basis = build_basis(sys.d, l)
    errs, ses = [], []
    for j, t in enumerate(t_list):
        batch = sample_fbm(H, grid, sys.d, n, seed, T=float(t), stream=j)

        def one(blk):
            incs = np.diff(blk, axis=1)
            X = flow(sys, x, incs, max_step=max_step)
            U = log_signature_of_increments(incs, l, basis)
            return np.linalg.norm(X - x - taylor_F(sys, U, x), axis=-1)

        e = np.concatenate(batch.map_blocks(one))
        errs.append(float(e.mean()))
        ses.append(float(e.std(ddof=1) / np.sqrt(n)))
    errs = np.array(errs)
    at_floor = bool(np.all(errs <= floor))
    slope = float("nan") if at_floor else float(np.polyfit(np.log(t_list), np.log(errs), 1)[0])
    return {
        "H": H, "l": l, "t": t_list.tolist(), "mean_error": errs.tolist(), "se": ses,
        "slope": slope, "noise_floor": at_floor,
    }


# density lower bound proxy -------------------------------------------------------
def cutoff_radius(sys: VectorFieldSystem, x, l: int, factor: float = 10.0, r_max: float = 4.0, probes: int = 64, seed: int = 0) -> float:
    """Largest r (on a geometric ladder up to r_max) with K(u, x) <= factor K(0, x) for |u|_HS = r."""
    basis = build_basis(sys.d, l)
    rng = np.random.default_rng(seed)
    dirs = LieElement(basis, rng.normal(size=(probes, basis.dim)))
    dirs = dirs * (1.0 / dirs.norm())
    k0 = float(kernel_K(sys, LieElement.zero(basis), x))
    best = 0.0
    for r in r_max * 2.0 ** -np.arange(12)[::-1]:
        try:
            k = kernel_K(sys, dirs * r, np.broadcast_to(x, (probes, len(x))))
        except RankDeficientError:
            break
        if np.max(k) > factor * k0:
            break
        best = float(r)
    return best


def _axis_extent(sys, x, l, H, radius, axis, sign, n_grid, iters: int = 40) -> float:
    """rho with distance_upper(x, x + sign rho e_axis) = radius, by log-space bisection."""
    e = np.zeros(len(x))
    e[axis] = sign

    def dist(rho):
        return distance_upper(sys, x, x + rho * e, l, H, n_grid=n_grid).value

    lo, hi = 1e-8, 1e-2
    while dist(hi) < radius:
        lo, hi = hi, hi * 4
        if hi > 1e3:
            return float("inf")
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        if dist(mid) < radius:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-3:
            break
    return float(np.sqrt(lo * hi))


def ball_volume(sys, x, l, H, radius, n_points: int = 400, seed: int = 0, n_grid: int = 1024, extents=None) -> dict:
    """Monte Carlo volume of {y : distance_upper(x, y) <= radius}."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    if extents is None:
        extents = np.array([max(_axis_extent(sys, x, l, H, radius, a, s, n_grid) for s in (1, -1)) for a in range(N)])
    half = 1.5 * np.asarray(extents)
    rng = np.random.default_rng(seed)
    pts = x + rng.uniform(-1, 1, size=(n_points, N)) * half
    inside = np.zeros(n_points, dtype=bool)
    near_edge = 0
    for i, y in enumerate(pts):
        try:
            inside[i] = distance_upper(sys, x, y, l, H, n_grid=n_grid).value <= radius
        except (JoinError, RankDeficientError):
            inside[i] = False
        if inside[i] and np.any(np.abs(y - x) > 0.95 * half):
            near_edge += 1
    box_vol = float(np.prod(2 * half))
    p = inside.mean()
    return {
        "volume": box_vol * p,
        "se": box_vol * np.sqrt(p * (1 - p) / n_points),
        "extents": np.asarray(extents).tolist(),
        "boundary_flag": bool(near_edge > 0),
    }


def taylor_density_lower(
    sys: VectorFieldSystem,
    x,
    H: float,
    l: int,
    t: float,
    n: int = 100_000,
    seed: int = 0,
    grid: int = 64,
    cell_frac: float = 0.25,
    vol_points: int = 400,
    n_grid: int = 1024,
    min_count: int = 30,
    stream: int = 0,
) -> dict:
    """Density of x + F_l(U_t, x) near x (cutoff |U_t| < r/2) times the ball volume |B(x, t^H)|."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    basis = build_basis(sys.d, l)
    r = cutoff_radius(sys, x, l)
    U = _u_samples(H, t, l, n, seed, sys.d, grid, stream)
    keep = U.norm() < r / 2
    X = x + taylor_F(sys, U[keep], x)
    radius = t**H
    vol = ball_volume(sys, x, l, H, radius, vol_points, seed, n_grid)
    ext = np.array(vol["extents"])
    half = cell_frac * ext
    widened = False
    while True:
        count = int(np.sum(np.all(np.abs(X - x) <= half, axis=1)))
        if count >= min_count or np.any(half > 4 * ext):
            break
        half = 2 * half
        widened = True
    cell = float(np.prod(2 * half))
    dens = count / (n * cell)
    dens_se = np.sqrt(count) / (n * cell)
    out = {
        "t": t, "H": H, "l": l, "n": n, "cutoff_r": r, "kept_fraction": float(keep.mean()),
        "cell_half_widths": half.tolist(), "cell_count": count, "density": dens, "density_se": dens_se,
        "volume": vol["volume"], "volume_se": vol["se"], "extents": vol["extents"],
        "product": dens * vol["volume"], "widened_cell": widened, "boundary_flag": vol["boundary_flag"],
    }
    V0 = sys.fields(x)
    constant_identity = N == sys.d and np.allclose(V0, np.eye(N)) and not any(
        np.any(sys.compositions(k)(x)) for k in range(2, l + 1)
    )
    if constant_identity:
        # X = x + B_t exactly, so the cell probability is a product of erf terms
        sigma = t**H
        p = np.prod((erf(half / (np.sqrt(2) * sigma)) - erf(-half / (np.sqrt(2) * sigma))) / 2)
        out["exact_density"] = float(p / cell)
    return out


# disintegration (coarea) check ----------------------------------------------------
@dataclass
class Submersion:
    """A smooth map F: R^m -> R^n with m = n + 1 and its Jacobian."""

    F: Callable[[np.ndarray], np.ndarray]
    DF: Callable[[np.ndarray], np.ndarray]
    m: int
    n: int


def _null_vector(DF: np.ndarray, ref: np.ndarray | None) -> np.ndarray:
    _, _, vh = np.linalg.svd(DF)
    v = vh[..., -1, :]
    if ref is not None:
        v = v * np.where(np.sum(v * ref, axis=-1, keepdims=True) < 0, -1.0, 1.0)
    return v


def _project(sub: Submersion, x, y, iters: int = 3):
    """Minimum-norm Newton steps onto the fiber F = y."""
    for _ in range(iters):
        J = sub.DF(x)
        r = sub.F(x) - y
        x = x - np.einsum("...ji,...j->...i", J, np.linalg.solve(J @ np.swapaxes(J, -1, -2), r[..., None])[..., 0])
    return x


def _track(sub: Submersion, x0, y, ds, steps: int, v0):
    """RK4 in arclength along unit null vectors; returns (steps+1, F, m) points."""
    xs = [x0]
    x, ref = x0, v0
    for _ in range(steps):
        k1 = _null_vector(sub.DF(x), ref)
        k2 = _null_vector(sub.DF(x + 0.5 * ds[:, None] * k1), k1)
        k3 = _null_vector(sub.DF(x + 0.5 * ds[:, None] * k2), k1)
        k4 = _null_vector(sub.DF(x + ds[:, None] * k3), k1)
        x = x + ds[:, None] / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x = _project(sub, x, y, 1)
        ref = k4
        xs.append(x)
    return np.stack(xs)


def _weight(sub: Submersion, phi, x):
    J = sub.DF(x)
    return phi(x) / np.sqrt(np.linalg.det(J @ np.swapaxes(J, -1, -2)))


def fiber_integral_open(sub: Submersion, phi, y, seeds, half_length: float, steps: int) -> np.ndarray:
    """Integral of phi / |F^* vol| over open fibers through seeds, arclength in [-L, L]."""
    x0 = _project(sub, seeds, y, 8)
    v0 = _null_vector(sub.DF(x0), None)
    ds = np.full(len(x0), half_length / steps)
    fwd = _track(sub, x0, y, ds, steps, v0)
    bwd = _track(sub, x0, y, ds, steps, -v0)
    pts = np.concatenate([bwd[::-1], fwd[1:]])
    w = _weight(sub, phi, pts)
    return ds * (w.sum(axis=0) - 0.5 * (w[0] + w[-1]))


def fiber_integral_closed(sub: Submersion, phi, y, seeds, steps: int = 256, probe_ds: float = 0.02, max_probe: int = 20000):
    """Integral over closed fibers: measure the loop length, then a periodic trapezoid rule."""
    x0 = _project(sub, seeds, y, 8)
    v0 = _null_vector(sub.DF(x0), None)
    nF = len(x0)
    lengths = np.full(nF, np.nan)
    x, ref = x0.copy(), v0
    s = 0.0
    prev = np.zeros(nF)
    ds = np.full(nF, probe_ds)
    for k in range(max_probe):
        xn = _track(sub, x, y, ds, 1, ref)[-1]
        s_new = s + probe_ds
        proj = np.sum((xn - x0) * v0, axis=-1)
        crossing = (prev < 0) & (proj >= 0) & np.isnan(lengths) & (k > 2)
        if np.any(crossing):
            frac = -prev[crossing] / (proj[crossing] - prev[crossing])
            lengths[crossing] = s + frac * probe_ds
        ref = _null_vector(sub.DF(xn), ref)
        x, s, prev = xn, s_new, proj
        if not np.any(np.isnan(lengths)):
            break
    if np.any(np.isnan(lengths)):
        raise RuntimeError("fiber tracking failure: loop did not close")
    # refine each length by a secant step on the closure defect
    for _ in range(3):
        pts = _track(sub, x0, y, lengths / steps, steps, v0)
        defect = np.sum((pts[-1] - x0) * v0, axis=-1)
        lengths = lengths - defect
    pts = _track(sub, x0, y, lengths / steps, steps, v0)
    w = _weight(sub, phi, pts[:-1])
    return lengths / steps * w.sum(axis=0)


@dataclass
class DisintegrationResult:
    name: str
    lhs: float
    rhs: float
    oracle: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def rel_error(self) -> float:
        return abs(self.rhs - self.lhs) / abs(self.lhs)

    def to_json(self) -> dict:
        d = {"case": self.name, "lhs": self.lhs, "rhs": self.rhs, "rel_error": self.rel_error}
        if self.oracle is not None:
            d["oracle"] = self.oracle
            d["oracle_rel_error"] = abs(self.rhs - self.oracle) / abs(self.oracle)
        d.update(self.extra)
        return d


def _grid_integral(phi, lo, hi, n: int) -> float:
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = phi(pts)
    for ax in reversed(axes):
        vals = np.trapezoid(vals, ax, axis=-1)
    return float(vals)


def _gauss_legendre_box(lo, hi, q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    nodes, weights = [], []
    for a, b in zip(lo, hi):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    Y = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    W = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), axis=-1).reshape(-1, len(lo)), axis=1)
    return Y, W


def _check_submersion(sub: Submersion, lo, hi, n: int = 9, tol: float = 1e-8):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, sub.m)
    s = np.linalg.svd(sub.DF(pts), compute_uv=False)[..., -1]
    return float(s.min())


def _gaussian(center, scales):
    center, scales = np.asarray(center, float), np.asarray(scales, float)

    def phi(x):
        z = (x - center) / scales
        return np.exp(-0.5 * np.sum(z * z, axis=-1))

    return phi


def disintegration_check(case: str, q_outer: int = 48, steps: int = 400) -> DisintegrationResult:
    """Both sides of the disintegration formula for one of three test cases.

    "projection": F(x) = x_1 on R^2 with a Gaussian test function;
    "radial": F(x) = |x|^2 on R^2 with a smooth bump supported in 1 < |x| < 2;
    "linear3to2": F(x) = A x on R^3 with non-orthonormal rows and a Gaussian.
    """
    if case == "projection":
        sub = Submersion(lambda x: x[..., :1], lambda x: np.broadcast_to(np.array([[1.0, 0.0]]), x.shape[:-1] + (1, 2)), 2, 1)
        phi = _gaussian([0.3, -0.2], [0.7, 1.1])
        R = 9.0
        lhs = _grid_integral(phi, [-R, -R], [R, R], 1201)
        Y, W = _gauss_legendre_box([0.3 - 0.7 * R], [0.3 + 0.7 * R], q_outer)
        seeds = np.hstack([Y, np.zeros((len(Y), 1))])
        inner = fiber_integral_open(sub, phi, Y, seeds, R * 1.2, steps)
        rhs = float(np.sum(W * inner))
        return DisintegrationResult(case, lhs, rhs, oracle=2 * np.pi * 0.7 * 1.1)
    if case == "radial":
        def F(x):
            return np.sum(x * x, axis=-1, keepdims=True)

        def DF(x):
            return 2 * x[..., None, :]

        sub = Submersion(F, DF, 2, 1)

        def bump(r):
            out = np.zeros_like(r)
            ok = (r > 1) & (r < 2)
            out[ok] = np.exp(-1.0 / ((r[ok] - 1) * (2 - r[ok])))
            return out

        def phi(x):
            return bump(np.linalg.norm(x, axis=-1))

        from scipy.integrate import quad

        oracle = 2 * np.pi * quad(lambda r: float(bump(np.array([r]))[0]) * r, 1, 2, epsabs=0, epsrel=1e-13, limit=200)[0]
        lhs = _grid_integral(phi, [-2.05, -2.05], [2.05, 2.05], 1601)
        Y, W = _gauss_legendre_box([1.0], [4.0], q_outer * 2)
        seeds = np.hstack([np.sqrt(Y), np.zeros((len(Y), 1))])
        inner = fiber_integral_closed(sub, phi, Y, seeds, steps=steps // 2)
        rhs = float(np.sum(W * inner))
        return DisintegrationResult(case, lhs, rhs, oracle=oracle)
    if case == "linear3to2":
        A = np.array([[1.0, 0.5, 0.2], [0.3, 1.2, -0.4]])
        sub = Submersion(lambda x: x @ A.T, lambda x: np.broadcast_to(A, x.shape[:-1] + A.shape), 3, 2)
        phi = _gaussian([0.1, 0.0, -0.2], [0.8, 0.6, 1.0])
        R = 8.5
        lhs = _grid_integral(phi, [0.1 - 0.8 * R, -0.6 * R, -0.2 - R], [0.1 + 0.8 * R, 0.6 * R, -0.2 + R], 121)
        # image of the effective support
        c = A @ np.array([0.1, 0.0, -0.2])
        ext = R * np.sqrt((A**2) @ np.array([0.64, 0.36, 1.0]))
        Y, W = _gauss_legendre_box(c - ext, c + ext, q_outer)
        seeds = np.zeros((len(Y), 3))
        inner = fiber_integral_open(sub, phi, Y, seeds, 2.5 * R, steps)
        rhs = float(np.sum(W * inner))
        return DisintegrationResult(case, lhs, rhs, oracle=(2 * np.pi) ** 1.5 * 0.8 * 0.6 * 1.0,
                                    extra={"sqrt_det_AAt": float(np.sqrt(np.linalg.det(A @ A.T)))})
    raise ValueError(f"unknown case {case!r}")


def disintegration_battery() -> list[DisintegrationResult]:
    return [disintegration_check(c) for c in ("projection", "radial", "linear3to2")]
