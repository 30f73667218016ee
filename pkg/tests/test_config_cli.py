import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from rdlab.cli import load_config, main
from rdlab.config import parse_config, parse_text
from rdlab.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
[model]
n = 8
[run]
seed = 3
T = 0.1
[tests]
battery = validate
"""

SMALL = """
# quick reaction-diffusion run touching every cheap battery
[model]
n = 8
noise = holder_sqrt
K = 4
[run]
T = 0.1
dt = 0.001
paths = 60
seed = 11
stride = 10
[tests]
battery = validate, simulate, uniqueness, regularizer, markov
windows = 0.0, 0.05, 0.05, 0.1
markov_s = 0.05
markov_t = 0.05
uniqueness_deltas = 0, 0.1, 0.01
halvings = 2
regularizer_levels = 3
"""


def violations(text):
    with pytest.raises(ConfigError) as err:
        parse_text(text)
    return err.value.violations


def test_minimal_config():
    cfg = parse_text(MINIMAL)
    assert cfg.model["n"] == 8 and cfg.seed == 3 and cfg.tests["battery"] == ["validate"]
    assert cfg.run["dt"] == 1e-3 and cfg.model["bc"] == "dirichlet"


def test_enum_and_range_violations():
    msgs = violations(MINIMAL.replace("n = 8", "n = 8\nbc = Robin").replace("T = 0.1", "T = 0.1\ndt = 0"))
    assert any("unknown boundary condition" in v for v in msgs)
    assert any("dt must be positive" in v for v in msgs)


def test_all_violations_reported():
    text = """
[model]
n = 1
colour = blue
noise = gaussian
[run]
paths = 0
stride = x
[extra]
a = 1
"""
    msgs = violations(text)
    joined = "\n".join(msgs)
    for needle in ("n must lie", "'colour'", "unknown noise family", "paths must lie", "stride",
                   "missing required key 'seed'", "unknown section [extra]"):
        assert needle in joined
    assert len(msgs) >= 7


def test_cross_field_checks():
    msgs = violations(MINIMAL.replace("T = 0.1", "T = 0.1005\ndt = 0.001"))
    assert any("integer multiple" in v for v in msgs)
    msgs = violations(MINIMAL + "windows = 0.0, 0.5, 0.5\n")
    assert any("windows" in v for v in msgs)
    msgs = violations(MINIMAL.replace("n = 8", "n = 8\nnoise = power\nnoise_exponent = 2"))
    assert any("alpha and beta" in v for v in msgs)
    msgs = violations(MINIMAL.replace("n = 8", "n = 8\nK = 3\nnoise_amplitudes = 1, 2"))
    assert any("K entries" in v for v in msgs)


def test_canonical_digest_ignores_layout():
    a = parse_text(MINIMAL)
    reordered = "[run]\nT = 0.1   # horizon\nseed = 3\n[tests]\nbattery = validate\n[model]\nn = 8\n"
    b = parse_text(reordered)
    assert a.digest() == b.digest()
    assert parse_text(a.canonical()).digest() == a.digest()
    assert parse_text(MINIMAL.replace("seed = 3", "seed = 4")).digest() != a.digest()


def test_overrides():
    cfg = parse_text(MINIMAL).with_overrides(paths=17, seed=9)
    assert cfg.run["paths"] == 17 and cfg.seed == 9
    with pytest.raises(ConfigError):
        parse_text(MINIMAL).with_overrides(paths=0)


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.ini")):
        cfg = parse_config(p)
        assert cfg.seed is not None


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/file.ini")


def test_validate_holder_example_exits_zero(tmp_path):
    assert main(["validate", "--config", str(CONFIGS / "holder.ini"), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "validate.csv").read_text()
    assert text.startswith("check,pass,worst_margin,detail\n")
    assert ",0," not in text


def test_validate_counterexample_exits_one(tmp_path):
    assert main(["validate", "--config", str(CONFIGS / "counterexample.ini"), "--out", str(tmp_path)]) == 1
    rows = [line.split(",") for line in (tmp_path / "validate.csv").read_text().splitlines()[1:]]
    status = {r[0]: r[1] for r in rows}
    assert status["growth"] == "0"


def test_config_error_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nbc = Robin\n[run]\ndt = 0\n")
    assert main(["all", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "unknown boundary condition" in err and "dt must be positive" in err and "seed" in err


def _run_small(tmp_path, name, workers, monkeypatch, extra=()):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    out = tmp_path / name
    monkeypatch.setenv("RDLAB_WORKERS", str(workers))
    code = main(["all", "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def _files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_all_outputs_reproducible(tmp_path, monkeypatch):
    code1, out1 = _run_small(tmp_path, "a", 1, monkeypatch)
    code2, out2 = _run_small(tmp_path, "b", 3, monkeypatch)
    assert code1 == code2
    f1, f2 = _files(out1), _files(out2)
    assert set(f1) >= {"validate.csv", "simulate_paths.csv", "simulate_observables.csv", "uniqueness.csv",
                       "regularizer.csv", "markov.csv", "manifest.json"}
    assert f1 == f2
    manifest = json.loads(f1["manifest.json"])
    assert manifest["seed"] == 11 and len(manifest["config_sha256"]) == 64
    assert set(manifest["versions"]) == {"rdlab", "python", "numpy", "scipy", "numba"}
    assert [b["name"] for b in manifest["batteries"]] == ["validate", "simulate", "uniqueness", "markov",
                                                          "regularizer"]
    # the manifest alone re-runs the experiment
    out3 = tmp_path / "c"
    assert main(["all", "--config", str(out1 / "manifest.json"), "--out", str(out3)]) == code1
    assert _files(out3) == f1


def test_seed_override_changes_outputs(tmp_path, monkeypatch):
    _, out1 = _run_small(tmp_path, "a", 1, monkeypatch)
    _, out2 = _run_small(tmp_path, "b", 1, monkeypatch, ("--seed", "12", "--paths", "40"))
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m2["seed"] == 12 and m2["paths"] == 40
    assert (out1 / "simulate_paths.csv").read_bytes() != (out2 / "simulate_paths.csv").read_bytes()


def test_bad_manifest(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text('{"no_config": 1}')
    with pytest.raises(ConfigError):
        load_config(p)


def test_console_script(tmp_path):
    env = dict(os.environ, RDLAB_WORKERS="2")
    res = subprocess.run([sys.executable, "-m", "rdlab.cli", "regularizer", "--config", str(CONFIGS / "holder.ini"),
                          "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert res.stdout.strip() == "regularizer: pass"
    assert (tmp_path / "regularizer.csv").read_text().startswith("n,a_n,int_check,phi_sup_gap\n")
