"""Acceptance criteria, one test (or a few, where a criterion has separable parts) each.

Every test prints a single ``PASS``/``FAIL`` line with the measured value and
the bound it was held to.  Bounds come from the shipped scenario configs.
"""
import functools
import time

import numpy as np
import pytest

from sparsedom.dyadic import build_anisotropic_system, verify_axioms
from sparsedom.harness import PIPELINES, load_scenario, run_scenario
from sparsedom.space import make_grid_space, make_interval_space


@pytest.fixture
def say(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return emit


@functools.lru_cache(maxsize=None)
def report(name):
    return run_scenario(load_scenario(name))


def checks(rep, prefix=""):
    return {c["name"]: c for c in rep["checks"] if c["name"].startswith(prefix)}


def test_c1_dyadic_axioms(say):
    t0 = time.perf_counter()
    results = [verify_axioms(build_anisotropic_system(make_interval_space(d)))["ok"] for d in range(1, 9)]
    for a in ([1, 1], [1, 2], [2, 1]):
        space = make_grid_space(2, a, n=32)
        results.append(verify_axioms(build_anisotropic_system(space))["ok"])
    elapsed = time.perf_counter() - t0
    ok = all(results) and elapsed < 10
    say("criterion 1 dyadic axioms", ok, f"{sum(results)}/{len(results)} systems, {elapsed:.2f} s (< 10 s)")
    assert ok


def test_c2_covering(say):
    rep = report("covering")
    c = checks(rep)
    ok = rep["pass"]
    say("criterion 2 covering", ok,
        f"partition failures {c['partition_failures']['value']}, "
        f"containment failures {c['containment_failures']['value']} over 100 sets")
    assert ok


def test_c3_sparse_construction(say):
    rep = report("construction")
    c = checks(rep)
    ok = rep["pass"]
    m = {x["name"]: x["value"] for x in rep["metrics"]}
    say("criterion 3 construction", ok,
        f"max ratio {m['hilbert.depth6.max_ratio']:.4g} / {m['hilbert.depth7.max_ratio']:.4g}, "
        f"drift {c['hilbert.drift_6_7']['value']:.3f} (<= {c['hilbert.drift_6_7']['bound']})")
    assert ok


def test_c4_sparse_operator_exponent(say):
    t0 = time.perf_counter()
    rep = run_scenario(load_scenario("weights-sweep"))
    elapsed = time.perf_counter() - t0
    c = checks(rep)
    ok = rep["pass"] and elapsed < 120
    say("criterion 4 sparse exponent", ok,
        f"slope r=1 {c['r1.slope']['value']:.3f}, r=2 {c['r2.slope']['value']:.3f} "
        f"(<= {c['r1.slope']['bound']}), {elapsed:.1f} s")
    assert ok


def test_c5_a2_demo(say):
    rep = report("a2-demo")
    c = checks(rep)
    ok = rep["pass"]
    say("criterion 5 A2 demo", ok,
        f"slope {c['hilbert.slope']['value']:.3f} (<= {c['hilbert.slope']['bound']}), "
        f"pointwise M#/(C ||K|| M) max {c['pointwise.max_ratio']['value']:.3g} (<= 1)")
    assert ok


def test_c6_fractional(say):
    rep = report("fractional-demo")
    c = checks(rep)
    m = {x["name"]: x["value"] for x in rep["metrics"]}
    ratios = [m["riesz.depth6.max_ratio"], m["riesz.depth7.max_ratio"]]
    ok = rep["pass"] and all(np.isfinite(ratios))
    say("criterion 6 fractional", ok,
        f"max ratio {ratios[0]:.4g} / {ratios[1]:.4g}, drift {c['riesz.drift_6_7']['value']:.3f}")
    assert ok


def test_c7_sparse_form(say):
    rep = report("form-demo")
    c = checks(rep)
    ok = rep["pass"]
    say("criterion 7 sparse form", ok,
        f"max lhs/(C rhs) {c['form.scaled_max_ratio']['value']:.3g} (<= 1) over 10 pairs")
    assert ok


def test_c8_envelope_constant_positive(say):
    c = checks(report("rmf-demo"))["envelope.c"]
    say("criterion 8 envelope c > 0", c["pass"], f"c = {c['value']:.4g}")
    assert c["pass"]


def test_c8_envelope_fit_quality(say):
    c = checks(report("rmf-demo"))["envelope.r2"]
    say("criterion 8 envelope R^2", c["pass"], f"R^2 = {c['value']:.4g} (>= {c['bound']})")
    assert c["pass"]


def test_c8_lp_growth(say):
    c = checks(report("rmf-demo"))["lp.slope"]
    say("criterion 8 L^p slope", c["pass"], f"slope {c['value']:.3g} (>= {c['bound']})")
    assert c["pass"]


def test_c8_localized_truncation_vanishes(say):
    c = checks(report("rmf-demo"))["truncation.max"]
    say("criterion 8 truncation", c["pass"], f"max {c['value']} (== 0)")
    assert c["pass"]


def test_c9_determinism(say, tmp_path):
    diffs = []
    for name in PIPELINES:
        for run in ("a", "b"):
            run_scenario(load_scenario(name), out=tmp_path / run / name)
        for f in ("report.json", "metrics.csv", "trace.jsonl"):
            if (tmp_path / "a" / name / f).read_bytes() != (tmp_path / "b" / name / f).read_bytes():
                diffs.append(f"{name}/{f}")
    ok = not diffs
    say("criterion 9 determinism", ok, f"{len(PIPELINES) - len(diffs)}/{len(PIPELINES)} scenarios identical")
    assert ok
