import io
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hypopath import __version__
from hypopath.cli import main
from hypopath.fbm_sampler import read_samples
from hypopath.signature_paths import GridPath

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.mark.parametrize("threads", ["1", "3"])
def test_golden_join_trace_is_bit_exact(tmp_path, threads):
    out = tmp_path / "j.csv"
    env = dict(os.environ, HYPOPATH_THREADS=threads)
    cmd = [sys.executable, "-m", "hypopath", "join", "--system", "heisenberg", "--from", "0,0,0", "--to", "0,0,0.1",
           "--level", "2", "--hurst", "0.7", "--out", str(out)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    golden = (GOLDEN / "heisenberg_join.csv").read_text().splitlines()
    got = out.read_text().splitlines()
    # the header carries the library version; the trace rows must match byte for byte
    assert got[1:] == golden[1:]
    meta = json.loads(got[0][2:])
    assert meta["version"] == __version__ and meta["config"]["hurst"] == 0.7
    assert json.loads(proc.stdout)["status"] == "converged"


@pytest.mark.parametrize("argv", [
    ["join", "--system", "heisenberg", "--hurst", "1.5", "--from", "0,0,0", "--to", "0,0,0.1"],
    ["join", "--system", "heisenberg", "--hurst", "0.2", "--from", "0,0,0", "--to", "0,0,0.1"],
    ["u-scaling", "--hurst", "0.7", "--t", "0.5"],
    ["join", "--bogus"],
    ["signature", "--level", "2"],
    ["join", "--system", "heisenberg", "--level", "9", "--from", "0,0,0", "--to", "0,0,0.1"],
])
def test_usage_errors_exit_two(argv):
    code, _, err = run(*argv)
    assert code == 2
    assert json.loads(err)["error"] == "usage"


def test_runtime_errors_exit_one():
    code, _, err = run("elliptic-join", "--system", "heisenberg", "--from", "0,0,0", "--to", "0,0,0.1", "--hurst", "0.7")
    assert code == 1 and json.loads(err)["error"] == "JoinError"


def test_selftest_passes():
    code, out, _ = run("selftest")
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["pass"] and len(doc["result"]["checks"]) >= 10


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"hurst": 0.6, "level": 2, "system": "elliptic-identity", "from_": "0,0", "to": "0.3,0.4"}))
    code, out, _ = run("elliptic-join", "--config", str(cfg))
    assert code == 0 and json.loads(out)["cm_norm"] == pytest.approx(0.5 * 1.0, rel=0.2)
    code, out, _ = run("elliptic-join", "--config", str(cfg), "--hurst", "0.5")
    assert code == 0 and json.loads(out)["cm_norm"] == pytest.approx(0.5, rel=1e-10)


def test_reconstruct_and_logsig_round_trip(tmp_path):
    elem = tmp_path / "u.json"
    coords = [0.2, -0.1, 0.05, 0.01, -0.02]
    elem.write_text(json.dumps({"d": 2, "l": 3, "coords": coords}))
    path_csv = tmp_path / "p.csv"
    code, out, err = run("reconstruct", "--element", str(elem), "--out", str(path_csv))
    assert code == 0, err
    assert json.loads(out)["residual"] <= 1e-8
    code, out, _ = run("logsig", "--path", str(path_csv), "--level", "3")
    assert code == 0
    res = json.loads(out)["result"]
    assert np.allclose(res["coords"], coords, atol=1e-8)
    assert res["brackets"][2] == "[1,2]"
    assert GridPath.from_csv(path_csv).one_variation() > 0


def test_fbm_sample_writes_batch(tmp_path):
    f = tmp_path / "b.bin"
    code, out, _ = run("fbm-sample", "--hurst", "0.7", "--seed", "3", "--samples", "10", "--grid", "8", "--out", str(f),
                       "--logsig", "--level", "2")
    assert code == 0
    head, data = read_samples(f)
    assert data.shape == (10, 3) and head["kind"] == "log_signature" and head["seed"] == 3


def test_disintegration_command(tmp_path):
    out = tmp_path / "d.json"
    code, _, _ = run("disintegration", "--case", "projection", "--out", str(out))
    doc = json.loads(out.read_text())
    assert code == 0 and doc["result"]["pass"]
    assert "out" not in doc["config"]
