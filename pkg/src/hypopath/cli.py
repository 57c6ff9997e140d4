"""Command-line front end.

Every subcommand writes its artifact to --out (or stdout) and embeds the
resolved configuration, the seed and the library version.  Failures exit
nonzero with a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__

STOCHASTIC = {"fbm-sample", "u-scaling", "rho-scaling", "positivity", "taylor-order", "density-lower"}
EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# config ------------------------------------------------------------------------
DEFAULTS = {
    "system": "heisenberg",
    "hurst": 0.5,
    "level": 2,
    "seed": None,
    "samples": 10_000,
    "grid": 128,
    "out": None,
    "dim": 2,
    "from_": None,
    "to": None,
    "direction": None,
    "radii": "1e-3,1e-1,9",
    "t": 0.25,
    "t_list": "0.05,0.1,0.2,0.5",
    "design": "matched",
    "box": "scaled",
    "norm": "cc",
    "M": 1.0,
    "case": "all",
    "path": None,
    "element": None,
    "method": "auto",
    "n_grid": 4096,
    "eps_stop": 1e-6,
    "logsig": False,
}


def _floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return np.array([float(v) for v in str(text).split(",") if v.strip()], dtype=float)


def _radii(spec) -> np.ndarray:
    """'lo,hi,n' gives a geometric ladder; any other list is taken literally."""
    v = _floats(spec)
    if len(v) == 3 and float(v[2]).is_integer() and v[2] >= 2 and v[0] < v[1]:
        return np.geomspace(v[0], v[1], int(v[2]))
    return v


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS) - {"from", "command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "from" in loaded:
            loaded["from_"] = loaded.pop("from")
        loaded.pop("command", None)
        cfg.update(loaded)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    cfg["command"] = args.command
    if isinstance(cfg["hurst"], str):
        hs = [float(v) for v in _floats(cfg["hurst"])]
        cfg["hurst"] = hs[0] if len(hs) == 1 else hs
    validate(cfg)
    return cfg


def validate(cfg: dict):
    H = cfg["hurst"]
    Hs = np.atleast_1d(np.asarray(H, dtype=float))
    if np.any((Hs <= 0.25) | (Hs >= 1.0)):
        raise UsageError(f"hurst must lie in (0.25, 1), got {H}")
    if not 1 <= int(cfg["level"]) <= 6:
        raise UsageError("level must be between 1 and 6")
    if not 1 <= int(cfg["dim"]) <= 4:
        raise UsageError("dim must be between 1 and 4")
    if int(cfg["samples"]) < 1 or int(cfg["grid"]) < 1:
        raise UsageError("samples and grid must be positive")
    if cfg["command"] in STOCHASTIC and cfg["seed"] is None:
        raise UsageError(f"--seed is required for {cfg['command']}")


def _hurst(cfg) -> float:
    return float(np.atleast_1d(cfg["hurst"])[0])


def _system(cfg):
    from .vf_flow import BUILTIN_SPECS, builtin_system, system_from_spec

    name = cfg["system"]
    if name in BUILTIN_SPECS:
        return builtin_system(name)
    p = Path(name)
    if p.is_file():
        with open(p) as fh:
            return system_from_spec(json.load(fh))
    raise UsageError(f"unknown system {name!r}: not a built-in name or a JSON file")


def _point(cfg, key, N) -> np.ndarray:
    if cfg[key] is None:
        return np.zeros(N)
    v = _floats(cfg[key])
    if len(v) != N:
        raise UsageError(f"{key.rstrip('_')} needs {N} coordinates")
    return v


def _meta(cfg) -> dict:
    # the output location is not part of what determines the artifact
    conf = {k: v for k, v in sorted(cfg.items()) if k != "out"}
    return {"config": conf, "seed": cfg["seed"], "version": __version__}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit_json(cfg, payload: dict, stdout):
    doc = dict(_meta(cfg), result=_jsonable(payload))
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        stdout.write(text)


def _summary(stdout, payload: dict):
    stdout.write(json.dumps(_jsonable(payload), sort_keys=True) + "\n")


def _need_out(cfg):
    if not cfg["out"]:
        raise UsageError(f"{cfg['command']} writes a file: pass --out")


# subcommands ---------------------------------------------------------------------
def cmd_signature(cfg, stdout):
    from .signature_paths import GridPath, signature

    if not cfg["path"]:
        raise UsageError("--path is required")
    p = GridPath.from_csv(cfg["path"])
    _emit_json(cfg, signature(p, int(cfg["level"])).to_json(), stdout)


def cmd_logsig(cfg, stdout):
    from .signature_paths import GridPath, log_signature

    if not cfg["path"]:
        raise UsageError("--path is required")
    p = GridPath.from_csv(cfg["path"])
    u = log_signature(p, int(cfg["level"]))
    _emit_json(cfg, dict(u.to_json(), brackets=[b for bs in u.basis.brackets for b in bs]), stdout)


def cmd_reconstruct(cfg, stdout):
    from .free_lie import LieElement
    from .signature_paths import log_signature, path_from_group_element

    if not cfg["element"]:
        raise UsageError("--element is required")
    _need_out(cfg)
    with open(cfg["element"]) as fh:
        obj = json.load(fh)
    u = LieElement.from_json(obj.get("result", obj))
    p = path_from_group_element(u)
    p.to_csv(cfg["out"], _meta(cfg))
    res = float((log_signature(p, u.basis.l, u.basis) - u).norm())
    _summary(stdout, {"segments": p.n_segments, "residual": res, "one_variation": p.one_variation()})


def cmd_join(cfg, stdout):
    from .control_join import join_points

    s = _system(cfg)
    x, y = _point(cfg, "from_", s.N), _point(cfg, "to", s.N)
    jr = join_points(s, x, y, int(cfg["level"]), _hurst(cfg), eps_stop=float(cfg["eps_stop"]))
    if cfg["out"]:
        jr.to_csv(cfg["out"], _meta(cfg))
    d = jr.d_upper(int(cfg["n_grid"]))
    _summary(stdout, {
        "status": jr.status, "iterations": jr.iterations, "final_residual": jr.residuals[-1],
        "contraction_ratios": jr.contraction_ratios, "total_length": jr.total_length,
        "d_upper": d.value, "cm_mode": d.mode, "flagged": d.flagged,
    })
    if jr.status != "converged":
        raise RuntimeError(f"join did not converge ({jr.status})")


def cmd_elliptic_join(cfg, stdout):
    import csv

    from .control_join import elliptic_join
    from .fractional_cm import cm_norm

    s = _system(cfg)
    x, y = _point(cfg, "from_", s.N), _point(cfg, "to", s.N)
    ej = elliptic_join(s, x, y, _hurst(cfg), int(cfg["n_grid"]))
    if cfg["out"]:
        with open(cfg["out"], "w", newline="") as fh:
            fh.write("# " + json.dumps(_jsonable(_meta(cfg)), sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["t"] + [f"h_{i + 1}" for i in range(s.d)])
            for t, h in zip(ej.h.grid, ej.h.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in h])
    nm = cm_norm(ej.h)
    _summary(stdout, {"residual": ej.residual, "cm_norm": nm.value, "cm_mode": nm.mode, "flagged": nm.flagged})


def cmd_distance_scan(cfg, stdout):
    from .control_join import distance_scan

    s = _system(cfg)
    x = _point(cfg, "from_", s.N)
    if cfg["direction"] is None:
        raise UsageError("--direction is required")
    direction = _point(cfg, "direction", s.N)
    Hs = [float(h) for h in np.atleast_1d(cfg["hurst"])]
    res = distance_scan(s, x, direction, _radii(cfg["radii"]), int(cfg["level"]), Hs[0] if len(Hs) == 1 else Hs,
                        method=cfg["method"], n_grid=int(cfg["n_grid"]))
    _emit_json(cfg, res, stdout)


def cmd_fbm_sample(cfg, stdout):
    from .fbm_sampler import sample_fbm, sample_log_signature, write_samples

    _need_out(cfg)
    b = sample_fbm(_hurst(cfg), int(cfg["grid"]), int(cfg["dim"]), int(cfg["samples"]), int(cfg["seed"]))
    if cfg["logsig"]:
        data = sample_log_signature(b, 1.0, int(cfg["level"])).coords
        kind = "log_signature"
    else:
        data = np.concatenate(list(b.iter_blocks()))
        kind = "paths"
    write_samples(cfg["out"], dict(_jsonable(_meta(cfg)), kind=kind), data)
    _summary(stdout, {"kind": kind, "shape": list(data.shape)})


def cmd_u_scaling(cfg, stdout):
    from .fbm_sampler import scaling_check_U

    res = scaling_check_U(_hurst(cfg), float(cfg["t"]), int(cfg["level"]), int(cfg["samples"]), int(cfg["seed"]),
                          d=int(cfg["dim"]), grid=int(cfg["grid"]), design=cfg["design"])
    _emit_json(cfg, res, stdout)
    return res["pass"]


def cmd_rho_scaling(cfg, stdout):
    from .density_lab import scaling_check_rho

    res = scaling_check_rho(_hurst(cfg), float(cfg["t"]), int(cfg["level"]), n=int(cfg["samples"]),
                            seed=int(cfg["seed"]), d=int(cfg["dim"]), grid=int(cfg["grid"]))
    _emit_json(cfg, res, stdout)
    return res["pass"]


def cmd_positivity(cfg, stdout):
    from .density_lab import positivity_report

    res = positivity_report(_hurst(cfg), float(cfg["t"]), int(cfg["level"]), M=float(cfg["M"]),
                            n=int(cfg["samples"]), seed=int(cfg["seed"]), d=int(cfg["dim"]), grid=int(cfg["grid"]),
                            box=cfg["box"], norm=cfg["norm"])
    _emit_json(cfg, res, stdout)


def cmd_taylor_order(cfg, stdout):
    from .density_lab import taylor_error_order

    s = _system(cfg)
    res = taylor_error_order(s, _point(cfg, "from_", s.N), _hurst(cfg), int(cfg["level"]), _floats(cfg["t_list"]),
                             n=int(cfg["samples"]), seed=int(cfg["seed"]), grid=int(cfg["grid"]))
    _emit_json(cfg, res, stdout)


def cmd_density_lower(cfg, stdout):
    from .density_lab import taylor_density_lower

    s = _system(cfg)
    res = taylor_density_lower(s, _point(cfg, "from_", s.N), _hurst(cfg), int(cfg["level"]), float(cfg["t"]),
                               n=int(cfg["samples"]), seed=int(cfg["seed"]), grid=int(cfg["grid"]))
    _emit_json(cfg, res, stdout)


def cmd_disintegration(cfg, stdout):
    from .density_lab import disintegration_check

    cases = ["projection", "radial", "linear3to2"] if cfg["case"] == "all" else [cfg["case"]]
    rows = [disintegration_check(c).to_json() for c in cases]
    tol = {"projection": 1e-6, "linear3to2": 1e-6, "radial": 1e-4}
    for r in rows:
        r["pass"] = r["rel_error"] <= tol[r["case"]]
    _emit_json(cfg, {"cases": rows, "pass": all(r["pass"] for r in rows)}, stdout)
    return all(r["pass"] for r in rows)


def cmd_selftest(cfg, stdout):
    from .selftest import run

    res = run(0 if cfg["seed"] is None else int(cfg["seed"]))
    _emit_json(cfg, res, stdout)
    return res["pass"]


COMMANDS = {
    "signature": (cmd_signature, "signature of a path CSV"),
    "logsig": (cmd_logsig, "log-signature of a path CSV in Lyndon coordinates"),
    "reconstruct": (cmd_reconstruct, "smooth path realizing a Lie element JSON"),
    "join": (cmd_join, "iterative joining control between two points"),
    "elliptic-join": (cmd_elliptic_join, "straight-line control for elliptic systems"),
    "distance-scan": (cmd_distance_scan, "control-distance upper bounds along a ray"),
    "fbm-sample": (cmd_fbm_sample, "sample fBm paths or their log-signatures"),
    "u-scaling": (cmd_u_scaling, "law scaling of log-signatures"),
    "rho-scaling": (cmd_rho_scaling, "density scaling of log-signatures"),
    "positivity": (cmd_positivity, "minimum log-signature density over a CC ball"),
    "taylor-order": (cmd_taylor_order, "order of the stochastic Taylor error"),
    "density-lower": (cmd_density_lower, "density times ball volume near the start point"),
    "disintegration": (cmd_disintegration, "fiber-integration quadrature battery"),
    "selftest": (cmd_selftest, "fast invariant suite"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--system", help="built-in system name or JSON field file")
    common.add_argument("--hurst", help="Hurst parameter (comma list for distance-scan)")
    common.add_argument("--level", type=int, help="truncation level l")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--grid", type=int, help="fBm grid cells")
    common.add_argument("--out", help="output file")
    common.add_argument("--config", help="JSON config; flags override it")
    common.add_argument("--dim", type=int, help="driving dimension d")
    common.add_argument("--from", dest="from_", help="start point, comma separated")
    common.add_argument("--to", help="target point, comma separated")
    common.add_argument("--direction")
    common.add_argument("--radii", help="lo,hi,n geometric ladder or explicit list")
    common.add_argument("--t", type=float, help="time horizon")
    common.add_argument("--t-list", dest="t_list")
    common.add_argument("--design", choices=["matched", "restrict"])
    common.add_argument("--box", choices=["scaled", "raw"])
    common.add_argument("--norm", choices=["cc", "hs", "homogeneous"])
    common.add_argument("--M", type=float)
    common.add_argument("--case", choices=["all", "projection", "radial", "linear3to2"])
    common.add_argument("--path", help="input path CSV")
    common.add_argument("--element", help="input Lie element JSON")
    common.add_argument("--method", choices=["auto", "elliptic", "join"])
    common.add_argument("--n-grid", dest="n_grid", type=int, help="Cameron-Martin quadrature grid")
    common.add_argument("--eps-stop", dest="eps_stop", type=float)
    common.add_argument("--logsig", action="store_true", help="fbm-sample: store log-signatures")

    p = _Parser(prog="hypopath", description="Signatures, control distances and densities for hypoelliptic fBm-driven ODEs.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        ok = COMMANDS[cfg["command"]][0](cfg, stdout)
    except UsageError as exc:
        stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_FAILURE
    return 0 if ok is None or ok else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
