"""Fractional Brownian motion by exact covariance factorization, and Monte
Carlo of truncated log-signatures of its piecewise-linear interpolation."""
from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import cholesky

from .parallel import thread_count
from .free_lie import LieElement, build_basis, from_tensor
from .signature_paths import signature_of_increments
from .tensor_algebra import tensor_log

BLOCK = 1024
MAX_GRID = 2**12
MAGIC = b"HYPOPATH-BATCH\x00\x01"


class FactorizationError(RuntimeError):
    pass


def fbm_covariance(H: float, s, t):
    s, t = np.asarray(s, float), np.asarray(t, float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def _as_grid(grid, T: float = 1.0) -> np.ndarray:
    if np.isscalar(grid):
        return np.linspace(0.0, T, int(grid) + 1)
    g = np.asarray(grid, dtype=float)
    if g[0] != 0.0 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    return g


def _factor(H: float, times: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of the covariance at times[1:], with jitter retries."""
    t = times[1:]
    C = fbm_covariance(H, t[:, None], t[None, :])
    jitter = 0.0
    scale = float(np.max(np.diag(C)))
    for _ in range(6):
        try:
            return cholesky(C + jitter * scale * np.eye(len(t)), lower=True)
        except np.linalg.LinAlgError:
            jitter = 1e-14 if jitter == 0.0 else jitter * 100
    raise FactorizationError("covariance factorization failed after jitter retries")


@dataclass(eq=False)
class FbmBatch:
    """n_samples paths of d independent fBm components on ``times``.

    Paths are generated lazily in blocks of BLOCK samples; block b uses the
    generator seeded by SeedSequence(seed, spawn_key=(stream, b)), so every
    sample is a deterministic function of (seed, stream, index).
    """

    H: float
    times: np.ndarray
    d: int
    n_samples: int
    seed: int
    stream: int = 0
    factor: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise ValueError("Hurst parameter must lie in (0, 1)")
        if len(self.times) - 1 > MAX_GRID:
            raise ValueError(f"grid size above the dense factorization limit {MAX_GRID}")
        if self.factor is None:
            self.factor = _factor(self.H, self.times)

    @property
    def n_blocks(self) -> int:
        return -(-self.n_samples // BLOCK)

    def block(self, b: int) -> np.ndarray:
        """Samples of block b as an array (m, n_times, d), starting at 0."""
        m = min(BLOCK, self.n_samples - b * BLOCK)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream, b)))
        z = rng.standard_normal((BLOCK, self.d, len(self.times) - 1))[:m]
        paths = z @ self.factor.T
        out = np.zeros((m, len(self.times), self.d))
        out[:, 1:, :] = np.swapaxes(paths, 1, 2)
        return out

    def iter_blocks(self) -> Iterator[np.ndarray]:
        for b in range(self.n_blocks):
            yield self.block(b)

    def map_blocks(self, fn) -> list:
        """Apply fn to every block (in parallel) and return results in block order."""
        with ThreadPoolExecutor(max_workers=thread_count()) as pool:
            return list(pool.map(lambda b: fn(self.block(b)), range(self.n_blocks)))

    def values_at(self, t: float) -> np.ndarray:
        i = grid_index(self.times, t)
        return np.concatenate(self.map_blocks(lambda blk: blk[:, i, :]))


def grid_index(times: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError(f"t = {t} is not a grid point")
    return i


def sample_fbm(H: float, grid, d: int, n_samples: int, seed: int, T: float = 1.0, stream: int = 0) -> FbmBatch:
    return FbmBatch(H, _as_grid(grid, T), d, int(n_samples), int(seed), stream)


def sample_log_signature(batch: FbmBatch, t: float, l: int) -> LieElement:
    """log S_l of each sample path restricted to [0, t], in Lyndon coordinates."""
    basis = build_basis(batch.d, l)
    i = grid_index(batch.times, t)

    def one(blk):
        incs = np.diff(blk[:, : i + 1, :], axis=1)
        return from_tensor(tensor_log(signature_of_increments(incs, l)), basis).coords

    return LieElement(basis, np.concatenate(batch.map_blocks(one)))


def empirical_covariance(batch: FbmBatch, s: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-component estimate of E[B_s B_t] and its standard error."""
    i, j = grid_index(batch.times, s), grid_index(batch.times, t)
    prods = np.concatenate(batch.map_blocks(lambda blk: blk[:, i, :] * blk[:, j, :]))
    return prods.mean(axis=0), prods.std(axis=0, ddof=1) / np.sqrt(len(prods))


# moment battery ----------------------------------------------------------------
def moment_functions(basis) -> list[tuple[str, callable]]:
    """Means and second moments per coordinate plus one cross moment per level."""
    out = []
    for j, w in enumerate(basis.flat_words):
        lab = "".join(map(str, w))
        out.append((f"mean[{lab}]", lambda c, j=j: c[:, j]))
        out.append((f"second[{lab}]", lambda c, j=j: c[:, j] ** 2))
    if basis.d >= 2:
        out.append(("cross[1*2]", lambda c: c[:, 0] * c[:, 1]))
        o = basis.offsets
        for k in range(2, basis.l + 1):
            if basis.dims[k - 1]:
                j = o[k - 1]
                lab = "".join(map(str, basis.flat_words[j]))
                out.append((f"cross[{lab}*1*2]", lambda c, j=j: c[:, j] * c[:, 0] * c[:, 1]))
    return out


def compare_moments(a: np.ndarray, b: np.ndarray, basis, limit: float = 4.0) -> dict:
    """Standardized differences of the moment battery between two sample sets."""
    rows = []
    for name, fn in moment_functions(basis):
        fa, fb = fn(a), fn(b)
        se = np.sqrt(fa.var(ddof=1) / len(fa) + fb.var(ddof=1) / len(fb))
        diff = float(fa.mean() - fb.mean())
        z = 0.0 if se == 0 and diff == 0 else diff / se
        rows.append({"moment": name, "a": float(fa.mean()), "b": float(fb.mean()), "z": float(z)})
    zmax = max(abs(r["z"]) for r in rows)
    return {"rows": rows, "max_abs_z": zmax, "pass": bool(zmax <= limit)}


def scaling_check_U(
    H: float,
    t: float,
    l: int,
    n: int,
    seed: int,
    d: int = 2,
    grid: int = 256,
    design: str = "matched",
) -> dict:
    """Compare the law of delta_{t^H} U_1 with that of U_t through a moment battery.

    design "matched" samples [0, 1] and [0, t] independently on grids with
    the same number of cells, for which the two laws coincide exactly;
    "restrict" reads U_t off the [0, 1] sample on the sub-grid up to t.
    """
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    basis = build_basis(d, l)
    b1 = sample_fbm(H, grid, d, n, seed, T=1.0, stream=0)
    U1 = sample_log_signature(b1, 1.0, l)
    if t == 1.0:
        Ut = U1
    elif design == "matched":
        bt = sample_fbm(H, grid, d, n, seed, T=t, stream=1)
        Ut = sample_log_signature(bt, t, l)
    elif design == "restrict":
        b2 = sample_fbm(H, grid, d, n, seed, T=1.0, stream=1)
        tg = b2.times[np.argmin(np.abs(b2.times - t))]
        Ut = sample_log_signature(b2, tg, l)
    else:
        raise ValueError("design must be 'matched' or 'restrict'")
    scaled = U1.dilate(t**H)
    rep = compare_moments(scaled.coords, Ut.coords, basis)
    rep.update({"H": H, "t": t, "l": l, "n": n, "design": design})
    return rep


def refinement_diagnostic(H: float, l: int, n: int, seed: int, d: int = 2, grid: int = 1024) -> dict:
    """Level-2+ moments of U_1 from the same paths on grid and 2 * grid cells.

    Differences are reported in units of the Monte Carlo standard error of
    the moment itself.
    """
    basis = build_basis(d, l)
    b = sample_fbm(H, 2 * grid, d, n, seed)

    def both(blk):
        fine = np.diff(blk, axis=1)
        coarse = np.diff(blk[:, ::2, :], axis=1)
        f = from_tensor(tensor_log(signature_of_increments(fine, l)), basis).coords
        c = from_tensor(tensor_log(signature_of_increments(coarse, l)), basis).coords
        return f, c

    res = b.map_blocks(both)
    fine = np.concatenate([r[0] for r in res])
    coarse = np.concatenate([r[1] for r in res])
    rows = []
    for name, fn in moment_functions(basis):
        ff, fc = fn(fine), fn(coarse)
        se = ff.std(ddof=1) / np.sqrt(len(ff))
        rows.append({"moment": name, "shift_in_se": float(abs(ff.mean() - fc.mean()) / se) if se > 0 else 0.0})
    return {"rows": rows, "max_shift_in_se": max(r["shift_in_se"] for r in rows)}


# binary batch format -----------------------------------------------------------
def write_samples(path, header: dict, coords: np.ndarray):
    coords = np.ascontiguousarray(coords, dtype="<f8")
    head = dict(header, shape=list(coords.shape))
    blob = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(coords.tobytes())


def read_samples(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a sample batch file")
        (m,) = struct.unpack("<Q", fh.read(8))
        head = json.loads(fh.read(m))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(head["shape"])
    return head, data
