import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramodel import harness
from paramodel.harness import (
    CHECK_WORKERS_ENV,
    CHECKS,
    ConfigError,
    DecayConfig,
    RunConfig,
    balanced_grid,
    break_structure,
    build_suite,
    default_config_path,
    generate_field_suite,
    run_verification,
    suite_size,
    synthetic_chunks,
    worker_count,
)
from paramodel.grading import ScalingVector
from paramodel.lpanalysis import GridSpec, build_partition
from paramodel.models import ModelledField
from paramodel.norms import besov_norm
from paramodel.paraproducts import residual_curve

FAST = ("partition_exactness", "kernel_moments", "paraproduct_oracle")


def small_config(**kw):
    base = dict(grids=(32, 64), n_fields=3, n_pam_fields=2, checks=FAST)
    base.update(kw)
    return RunConfig(**base)


pam_pairs = st.sampled_from([("3/4", "6/5"), ("1/2", "6/5"), ("3/4", "8/5"), ("2/3", "5/4")])


@given(
    pam_pairs,
    st.integers(0, 10**6),
    st.lists(st.sampled_from([8, 16, 32, 64, 128, 256]), min_size=2, max_size=4, unique=True).map(sorted),
    st.dictionaries(st.sampled_from(sorted(harness.DEFAULT_TOLERANCES)), st.floats(1e-16, 100.0), max_size=3),
    st.one_of(st.none(), st.lists(st.sampled_from(sorted(CHECKS)), min_size=1, max_size=3, unique=True)),
    st.integers(1, 8),
)
def test_run_config_round_trips_through_json(pam, seed, grids, tol, checks, workers):
    cfg = RunConfig(alpha_I=Fraction(pam[0]), gamma=Fraction(pam[1]), seed=seed, grids=tuple(grids),
                    tolerances=tol, checks=None if checks is None else tuple(checks), workers=workers)
    again = RunConfig.from_json(json.loads(cfg.dumps()))
    assert again == cfg
    assert again.dumps() == cfg.dumps()


def test_shipped_default_config_matches_the_code_defaults():
    assert RunConfig.load(default_config_path()) == RunConfig()


def test_gamma_in_a_plus_n_is_rejected_with_the_hypothesis_named():
    with pytest.raises(ConfigError, match=r"A \+ N"):
        RunConfig(structure="polynomial", gamma=Fraction(2))
    with pytest.raises(ConfigError, match=r"A \+ N"):
        RunConfig(structure="polynomial", gamma=Fraction(1))


@pytest.mark.parametrize(
    "kw",
    [
        {"grids": (100, 128)},
        {"grids": (256, 128)},
        {"grids": (128,)},
        {"structure": "other"},
        {"tolerances": {"nonsense": 1.0}},
        {"checks": ("no_such_check",)},
        {"holder_gammas": ("1",)},
        {"alpha_I": Fraction(3, 4), "gamma": Fraction(2)},
        {"workers": 0},
    ],
)
def test_invalid_configurations_are_rejected(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_config_loader_reports_bad_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(str(bad))
    bad.write_text(json.dumps({"format": "paramodel-config/1", "colour": "red"}))
    with pytest.raises(ConfigError):
        RunConfig.load(str(bad))
    with pytest.raises(ConfigError):
        DecayConfig.from_json({"unknown": 1})


def test_field_suite_is_deterministic_and_sized():
    cfg = small_config()
    a = generate_field_suite(cfg, 32)
    b = generate_field_suite(cfg, 32)
    assert len(a) == suite_size(cfg) == 3 + 1 + 2 + 2
    for x, y in zip(a, b):
        xs = x.field.samples if isinstance(x, ModelledField) else x.samples
        ys = y.field.samples if isinstance(y, ModelledField) else y.samples
        assert xs.tobytes() == ys.tobytes()


def test_suite_broken_fields_fail_the_structure_condition():
    cfg = RunConfig(n_fields=3, n_pam_fields=2)
    spec = cfg.spec(256)
    P = build_partition(spec)
    suite = build_suite(cfg, 256, P)
    pts = np.random.default_rng(0).integers(0, 256, (8, 2))
    assert [kind for kind, _ in suite.broken] == list(harness.BREAK_KINDS)
    for kind, Fb in suite.broken:
        _, (a, k) = break_structure(suite.pam[0], suite.pam_model, kind)
        c = residual_curve(Fb, suite.pam_model, pts, a, k, P, N_min=P.J_max - 4)
        assert c.claimed and c.exponent <= 0.1


def test_balanced_grid_makes_the_partition_exact_everywhere():
    for s in [(1, 1), (2, 1), (2, 1, 1)]:
        spec = GridSpec(balanced_grid(s, 3), ScalingVector(s))
        P = build_partition(spec)
        assert np.max(np.abs(P.phi.sum(axis=0) - 1.0)) <= 1e-14


def test_synthetic_chunks_respect_their_bound():
    spec = RunConfig().spec(128)
    P = build_partition(spec)
    f, bound = synthetic_chunks(spec, 0.5, 3, "annulus", P)
    assert np.isfinite(besov_norm(f, 0.5, P).value / bound)


def test_report_is_deterministic_apart_from_the_timestamp():
    cfg = small_config()
    a = run_verification(cfg, write=False).to_json()
    b = run_verification(cfg, write=False).to_json()
    a.pop("generated_at"), b.pop("generated_at")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert list(a["checks"]) == sorted(FAST)


def test_concurrent_checks_give_the_same_report():
    serial = run_verification(small_config(), write=False).to_json()
    parallel = run_verification(small_config(workers=3), write=False).to_json()
    for doc in (serial, parallel):
        doc.pop("generated_at")
        doc["config"].pop("workers")
    assert serial == parallel


def test_worker_count_environment_override(monkeypatch):
    monkeypatch.setenv(CHECK_WORKERS_ENV, "4")
    assert worker_count(small_config()) == 4
    monkeypatch.setenv(CHECK_WORKERS_ENV, "many")
    with pytest.raises(ConfigError):
        worker_count(small_config())


def test_check_errors_become_failed_checks(monkeypatch):
    def boom(config):
        raise RuntimeError("construction failed")

    monkeypatch.setitem(CHECKS, "kernel_moments", boom)
    report = run_verification(small_config(), write=False)
    c = report.checks["kernel_moments"]
    assert c.status == "error" and not c.passed and "construction failed" in c.message
    assert not report.passed and report.status == "fail"


def test_overall_status_ignores_informational_checks():
    report = run_verification(small_config(), write=False)
    assert report.passed
    report.checks["extra"] = harness.CheckResult("extra", "fail", 1.0, 0.0, mandatory=False)
    assert report.passed
    report.checks["extra"].mandatory = True
    assert not report.passed


def test_tolerance_override_can_fail_a_check():
    report = run_verification(small_config(checks=("paraproduct_oracle",), tolerances={"identity": 0.0}),
                              write=False)
    c = report.checks["paraproduct_oracle"]
    assert c.threshold == 0.0 and c.value > 0.0 and c.status == "fail" and not report.passed


def test_report_and_curves_are_written(tmp_path):
    cfg = small_config(report_path=str(tmp_path / "r.json"), curves_dir=str(tmp_path / "curves"))
    report = run_verification(cfg)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["status"] == report.status and doc["environment"]["seed"] == 0
    assert set(doc["checks"]) == set(FAST)
    for cid, c in doc["checks"].items():
        assert {"status", "value", "threshold", "witness"} <= set(c)
    written = {p.name for p in (tmp_path / "curves").iterdir()} if (tmp_path / "curves").exists() else set()
    expected = {f"{cid}__{name}.csv" for cid, c in report.checks.items() for name in c.curves}
    assert written == expected
