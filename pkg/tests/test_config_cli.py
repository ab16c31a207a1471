import json
import math
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest
import yaml

from homoclinic import cli
from homoclinic.cli import fmt, json_text, main, plot_text, write_outputs
from homoclinic.config import ConfigError, build_config, config_digest, load_config, stream
from homoclinic.experiments import Plot

ROOT = Path(__file__).resolve().parents[1]
SMALL = {"scenarios": {"verify-f0": {"corner_grid": 5, "equivariance_points": 20, "identity_points": 20},
                       "segments": {"orbits": 3, "steps": 2000, "synthetic": 20}}}


def write_cfg(tmp_path, tree, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return str(p)


def test_example_config_loads():
    cfg = load_config(ROOT / "configs" / "surrogate.yaml")
    assert cfg.params.K == 50 and cfg.params.L == 20 and cfg.schedule.T == {2: 40}
    assert cfg.variant == "g" and cfg.seed == 0
    assert cfg.hash == build_config({}).hash  # the example only spells out the defaults


@pytest.mark.parametrize("tree", [
    {"schedule": {"n0": 2, "r": 2, "T": {2: 40}}},  # N_2 = 1
    {"schedule": {"n0": 2, "r": 1, "T": {2: 4000}}},  # Lambda^-(T+1) underflows
    {"variant": "h"},
    {"seed": -1},
    {"colour": 3},
    {"scenarios": {"nope": {}}},
    {"scenarios": {"segments": {"orbitz": 3}}},
    {"params": {"K": 10}},
])
def test_invalid_configs_rejected(tree):
    with pytest.raises(ConfigError):
        build_config(tree)


def test_hash_is_canonical():
    a = build_config({"seed": 3, "scenarios": {"segments": {"steps": 2000, "orbits": 3}}})
    b = build_config({"scenarios": {"segments": {"orbits": 3, "steps": 2000}}, "seed": 3})
    assert a.hash == b.hash == config_digest(a.tree)
    assert a.hash != build_config({"seed": 4}).hash


def test_streams_depend_only_on_seed_and_index():
    a = stream(5, 7).uniform(size=4)
    assert np.array_equal(a, stream(5, 7).uniform(size=4))
    assert not np.array_equal(a, stream(5, 8).uniform(size=4))
    assert not np.array_equal(a, stream(6, 7).uniform(size=4))
    # high indices do not alias the seed
    assert not np.array_equal(stream(0, 1).uniform(size=4), stream(1, 0).uniform(size=4))


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(1.0) == "1"
    assert float(fmt(math.pi)) == math.pi and len(fmt(math.pi).replace(".", "")) == 17
    assert (fmt(math.nan), fmt(math.inf), fmt(-math.inf)) == ("nan", "inf", "-inf")
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3" and fmt(None) == ""


def test_json_text_floats():
    txt = json_text({"a": 0.1, "b": [1.5, math.nan], "c": 2, "d": np.float64(1 / 3)})
    doc = json.loads(txt)
    assert '"a": 0.10000000000000001' in txt and doc["b"] == [1.5, "nan"] and doc["c"] == 2
    assert doc["d"] == 1 / 3


def test_empty_plot_is_header_only():
    assert plot_text(Plot(["n", "log_count"], []), "abc") == "# config_hash=abc\n# n log_count\n"


def test_plot_blocks():
    p = Plot(["L", "tau"], [("", [(10, 1.5), (20, 2.5)]), ("eps=0.1", [(1, 2)])])
    lines = plot_text(p, "h").splitlines()
    assert lines[2:] == ["10 1.5", "20 2.5", "", "# eps=0.1", "1 2"]


def test_bad_config_exits_2_and_writes_nothing(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"schedule": {"n0": 2, "r": 2, "T": {2: 40}}})
    out = tmp_path / "out"
    assert main(["verify-f0", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert "config error" in capsys.readouterr().err
    assert main(["verify-f0", "--config", str(tmp_path / "missing.yaml"), "--out", str(out)]) == 2
    (tmp_path / "broken.yaml").write_text("params: [1,\n")
    assert main(["verify-f0", "--config", str(tmp_path / "broken.yaml"), "--out", str(out)]) == 2
    good = write_cfg(tmp_path, SMALL, "good.yaml")
    assert main(["verify-f0", "--config", good, "--out", str(out), "--workers", "0"]) == 2
    assert not out.exists()


def test_successful_run_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["verify-f0", "--config", cfg, "--out", str(out)]) == 0
    assert "PASS verify-f0/anchor" in capsys.readouterr().out
    names = sorted(p.name for p in out.iterdir())
    assert not any(n.endswith(".partial") for n in names)
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["name"]: f for f in man["files"]}
    assert sorted(listed) == sorted(set(names) - {"manifest.json"})
    h = load_config(cfg).hash
    assert man["config_hash"] == h and man["passed"] is True
    for name, f in listed.items():
        import hashlib
        data = (out / name).read_bytes()
        assert f["sha256"] == hashlib.sha256(data).hexdigest() and f["bytes"] == len(data)
        if name.endswith(".csv"):
            assert data.decode().startswith(f"# config_hash={h}\n")
    assert json.loads((out / "config.json").read_text()) == load_config(cfg).tree


def test_failed_check_exits_1_with_details(tmp_path, capsys):
    # the derivative bound fails at n0 = 2 (see the strict xfail in the perturbation tests)
    cfg = write_cfg(tmp_path, {"scenarios": {"perturbation-check": {"majder_samples": 2000,
                                                                    "extra_schedules": []}}})
    out = tmp_path / "out"
    assert main(["perturbation-check", "--config", cfg, "--out", str(out)]) == 1
    assert "FAIL perturbation-check/derivative_bound_n2" in capsys.readouterr().err
    rows = (out / "checks.csv").read_text().splitlines()
    assert any(r.startswith("perturbation-check,derivative_bound_n2,0,") for r in rows)
    assert (out / "manifest.json").exists()


def test_io_error_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["verify-f0", "--config", cfg, "--out", str(blocker / "sub")]) == 3


def test_interrupted_write_leaves_partials_and_no_manifest(tmp_path, monkeypatch):
    out = tmp_path / "out"
    out.mkdir()
    (out / "manifest.json").write_text("{}")  # from an earlier run
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        os.rename(src, dst)

    monkeypatch.setattr(cli.os, "replace", flaky)
    with pytest.raises(OSError):
        write_outputs(out, {"a.csv": "1\n", "b.csv": "2\n", "c.csv": "3\n"}, {})
    names = sorted(p.name for p in out.iterdir())
    assert "manifest.json" not in names
    assert "a.csv" in names and "b.csv.partial" in names and "c.csv.partial" in names


def test_seed_override_changes_hash(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert load_config(cfg, seed=9).seed == 9
    assert load_config(cfg, seed=9).hash != load_config(cfg).hash


def test_worker_count_does_not_change_data(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        assert main(["segments", "--config", cfg, "--out", str(out), "--workers", str(w)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "manifest.json")
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    r = subprocess.run(["homoclinic", "verify-f0", "--config", cfg, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS verify-f0/affine_corner" in r.stdout
    r = subprocess.run(["homoclinic", "nonsense", "--config", cfg], capture_output=True, text=True)
    assert r.returncode == 2
