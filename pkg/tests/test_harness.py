import json
import subprocess

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsedom.cli import main
from sparsedom.harness import (ConfigError, config_hash, fit_exponent, load_scenario,
                               run_scenario, weighted_operator_norm)
from sparsedom.operators import discrete_hilbert
from sparsedom.space import make_interval_space
from sparsedom.weights import power_weight


@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_power_law(slope, icpt):
    x = np.array([1.0, 2.0, 5.0, 9.0, 20.0])
    s, c, resid = fit_exponent(zip(x, np.exp(icpt) * x**slope))
    assert s == pytest.approx(slope, abs=1e-9)
    assert c == pytest.approx(icpt, abs=1e-9)
    assert resid < 1e-9


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2), (3, 3)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2), (3, 0), (4, 4)])


def test_weighted_norm_exact_for_unweighted_hilbert():
    space = make_interval_space(6)
    H = discrete_hilbert(space)
    w = np.ones(space.n)
    assert weighted_operator_norm(H, 2, w) == pytest.approx(np.linalg.norm(H.matrix(), 2), rel=1e-10)


def test_weighted_norm_monotone_in_trials():
    space = make_interval_space(5)
    H = discrete_hilbert(space)
    w = power_weight(space, 0.5)
    a = weighted_operator_norm(H, 3, w, trials=16)
    b = weighted_operator_norm(H, 3, w, trials=40)
    assert b >= a
    with pytest.raises(ValueError):
        weighted_operator_norm(H, 2, w, trials=8)


def test_config_validation():
    cfg = load_scenario("covering")
    bad = dict(cfg, pipeline="nope")
    with pytest.raises(ConfigError):
        run_scenario(bad)
    with pytest.raises(ConfigError):
        run_scenario(dict(cfg, tolerances={"x": "loose"}))
    with pytest.raises(ConfigError):
        run_scenario({k: v for k, v in cfg.items() if k != "params"})


def test_config_hash_is_git_blob_hash():
    cfg = load_scenario("covering")
    data = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    ref = subprocess.run(["git", "hash-object", "--stdin"], input=data.encode(),
                         capture_output=True, check=True).stdout.decode().strip()
    assert config_hash(cfg) == ref


def test_report_files_written_and_stable(tmp_path):
    cfg = load_scenario("covering")
    rep = run_scenario(cfg, out=tmp_path / "a")
    run_scenario(cfg, out=tmp_path / "b")
    assert rep["pass"]
    for name in ("report.json", "metrics.csv", "trace.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[0]
    assert header == "schema_version,scenario,metric,operation,mode,value"


def test_seed_override_changes_hash():
    cfg = load_scenario("covering")
    assert run_scenario(cfg, seed=3)["config_hash"] != run_scenario(cfg)["config_hash"]


def test_cli(tmp_path, capsys):
    assert main(["covering", "--out", str(tmp_path)]) == 0
    assert "covering: PASS" in capsys.readouterr().out
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    path = tmp_path / "c.json"
    path.write_text(json.dumps(load_scenario("covering")))
    assert main(["run", str(path), "--seed", "5"]) == 0
