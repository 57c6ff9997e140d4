"""Fast invariant suite used by ``hypopath selftest``."""
from __future__ import annotations

import time

import numpy as np

from .control_join import join_points
from .fractional_cm import CMFunction, cm_norm, frac_integral
from .free_lie import LieElement, bch, build_basis, from_tensor, witt_dimension, lyndon_words
from .signature_paths import cc_len, log_signature, path_from_group_element, signature_of_increments
from .tensor_algebra import TruncatedTensor, dilate, group_inverse, tensor_exp, tensor_log, tensor_mul
from .vf_flow import builtin_system, hypo_check


def _rand_group(rng, d, l, n=None):
    shape = () if n is None else (n,)
    incs = rng.normal(size=shape + (4, d)) * 0.5
    return signature_of_increments(incs, l)


def _max_abs(t: TruncatedTensor) -> float:
    return max(float(np.max(np.abs(a))) for a in t.levels)


def check_chen(rng) -> float:
    incs = rng.normal(size=(20, 7, 3)) * 0.5
    whole = signature_of_increments(incs, 4)
    a = signature_of_increments(incs[:, :3], 4)
    b = signature_of_increments(incs[:, 3:], 4)
    return _max_abs(whole - a @ b)


def check_exp_log(rng) -> float:
    g = _rand_group(rng, 3, 4, 20)
    return _max_abs(tensor_exp(tensor_log(g)) - g)


def check_inverse(rng) -> float:
    g = _rand_group(rng, 2, 5, 20)
    return _max_abs(tensor_mul(g, group_inverse(g)) - TruncatedTensor.unit(2, 5, (20,)))


def check_bch_assoc(rng) -> float:
    b = build_basis(2, 4)
    u, v, w = (LieElement(b, rng.normal(size=(20, b.dim)) * 0.3) for _ in range(3))
    return float(np.max(np.abs(bch(bch(u, v), w).coords - bch(u, bch(v, w)).coords)))


def check_dilation(rng) -> float:
    g, h = _rand_group(rng, 2, 4, 20), _rand_group(rng, 2, 4, 20)
    lam = 0.7
    return _max_abs(dilate(g @ h, lam) - dilate(g, lam) @ dilate(h, lam))


def check_witt(_rng) -> float:
    bad = 0
    for d in range(1, 5):
        words = lyndon_words(d, 6)
        for k in range(1, 7):
            bad += sum(len(w) == k for w in words) != witt_dimension(d, k)
    return float(bad)


def check_reconstruction(rng) -> float:
    b = build_basis(2, 4)
    worst = 0.0
    for _ in range(5):
        u = LieElement(b, rng.normal(size=b.dim))
        u = u * (0.8 / float(u.norm()))
        p = path_from_group_element(u)
        worst = max(worst, float((log_signature(p, 4, b) - u).norm()))
    return worst


def check_cc_homogeneity(rng) -> float:
    b = build_basis(2, 3)
    u = LieElement(b, rng.normal(size=b.dim) * 0.5)
    return abs(cc_len(u.dilate(2.0)) - 2.0 * cc_len(u))


def check_log_membership(rng) -> float:
    b = build_basis(2, 4)
    g = _rand_group(rng, 2, 4)
    u = from_tensor(tensor_log(g), b)
    return _max_abs(u.to_tensor() - tensor_log(g))


def check_frac_integral(_rng) -> float:
    t = np.linspace(0, 1, 513)
    out = frac_integral(np.ones_like(t), 1.0, t[1])
    return float(np.max(np.abs(out - t)))


def check_cm_unit(_rng) -> float:
    h = CMFunction.from_callable(lambda s: s, 1.0, 512, 0.5, lambda s: np.ones_like(s))
    return abs(cm_norm(h).value - 1.0)


def check_heisenberg(_rng) -> float:
    rep = hypo_check(builtin_system("heisenberg"), 3, np.zeros((1, 3)))
    return float(rep.l0 != 2)


def check_join(_rng) -> float:
    jr = join_points(builtin_system("heisenberg"), np.zeros(3), np.array([0.0, 0.0, 0.05]), 2, 0.7)
    return jr.residuals[-1]


CHECKS = [
    ("chen_identity", check_chen, 1e-11),
    ("exp_log_round_trip", check_exp_log, 1e-11),
    ("group_inverse", check_inverse, 1e-11),
    ("bch_associativity", check_bch_assoc, 1e-11),
    ("dilation_homomorphism", check_dilation, 1e-11),
    ("witt_dimensions", check_witt, 0.0),
    ("log_is_lie", check_log_membership, 1e-11),
    ("path_reconstruction", check_reconstruction, 1e-8),
    ("cc_len_homogeneity", check_cc_homogeneity, 1e-10),
    ("fractional_integral_of_one", check_frac_integral, 1e-12),
    ("cm_norm_unit_speed", check_cm_unit, 1e-10),
    ("heisenberg_l0", check_heisenberg, 0.0),
    ("heisenberg_join", check_join, 1e-6),
]


def run(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    rows = []
    for name, fn, tol in CHECKS:
        t0 = time.perf_counter()
        try:
            val = float(fn(rng))
            ok = val <= tol
            rows.append({"check": name, "value": val, "tol": tol, "pass": bool(ok)})
        except Exception as exc:  # reported, not raised
            rows.append({"check": name, "error": f"{type(exc).__name__}: {exc}", "tol": tol, "pass": False})
        rows[-1]["seconds"] = round(time.perf_counter() - t0, 3)
    return {"checks": rows, "pass": all(r["pass"] for r in rows)}
