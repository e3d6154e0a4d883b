import json
import math

import numpy as np
import pytest

from ivpcomplexity import cli
from ivpcomplexity.fooling import ConstructionError, build_control, build_thm1
from ivpcomplexity.geometry import ProblemSpec
from ivpcomplexity.harness import (ConfigError, ExperimentConfig, Row, ScalingRun, SweepError,
                                   audit_inequalities, closed_form_integral, fit_exponent, fit_window,
                                   measure_separation, read_csv, run_sweep)
from ivpcomplexity.information import uniform_grid_info


def test_fit_exact_power():
    slope, _, _ = fit_exponent([(2, 1 / 4), (4, 1 / 16), (8, 1 / 64)])
    assert slope == pytest.approx(-2.0, abs=1e-12)


def test_fit_constant_is_flat():
    slope, _, _ = fit_exponent([(n, 3.0) for n in (4, 16, 64)])
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_noisy_power():
    rng = np.random.default_rng(42)
    ns = [16, 32, 64, 128, 256, 512, 1024]
    pts = [(n, n ** -1.5 * (1 + rng.uniform(-0.05, 0.05))) for n in ns]
    slope, stderr, _ = fit_exponent(pts)
    assert abs(slope + 1.5) <= 0.1
    assert stderr < 0.1


def test_fit_recovers_prefactor():
    c = 0.37
    _, _, intercept = fit_exponent([(n, c * n ** -2.0) for n in (10, 100, 1000)])
    assert intercept == pytest.approx(math.log(c), abs=1e-12)


@pytest.mark.parametrize("pts", [[(1, 1.0), (2, 0.0), (4, 1.0)], [(1, 1.0), (2, -1.0), (3, 1.0)],
                                 [(1, 1.0), (2, 0.5)]])
def test_fit_rejects_bad_input(pts):
    with pytest.raises(ValueError):
        fit_exponent(pts)


def test_fit_window():
    assert fit_window(4) == slice(1, 4)
    assert fit_window(8) == slice(4, 8)
    assert fit_window(3) == slice(0, 3)


@pytest.mark.parametrize("kw", [
    {"variant": "nope"},
    {"schedule": [16, 16, 64, 256]},
    {"schedule": [64, 16, 256, 1024]},
    {"schedule": [16, 64, 256]},
    {"atoms": "grid"},
    {"d": 1, "variant": "thm2i"},
    {"variant": "thm2ii"},
    {"delta": 5.0},
    {"fit_fraction": 0.0},
])
def test_config_validation(kw):
    base = {"d": 2, "r": 1, "variant": "thm1", "schedule": [16, 64, 256, 1024]}
    base.update(kw)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(base)


def test_config_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"d": 2, "r": 1, "variant": "thm1", "schedule": [1, 2, 3, 4], "x": 1})


def test_theory_slopes():
    mk = lambda **kw: ExperimentConfig(**{"schedule": [8, 27, 64, 125], **kw})
    assert mk(d=2, r=2, variant="thm1").theory_slope == -1.0
    assert mk(d=3, r=2, variant="thm2i").theory_slope == -1.0
    assert mk(d=1, r=2, variant="d1").theory_slope == -2.0
    assert mk(d=2, r=1, variant="solver-adaptive").theory_slope == -1.0


def _small_cfg(**kw):
    base = {"d": 2, "r": 1, "variant": "thm1", "schedule": [4, 9, 16, 25], "seed": 3}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_csv_roundtrip_and_rerun_identical():
    cfg = _small_cfg()
    run = run_sweep(cfg)
    text = run.to_csv()
    config, rows = read_csv(text)
    assert ExperimentConfig.from_dict(config) == cfg
    assert rows == run.rows
    assert run_sweep(_small_cfg()).to_csv() == text
    assert text.splitlines()[1] == "n,measured,predicted,witness,residual_max,seconds"


def test_csv_rejects_malformed_rows():
    with pytest.raises(ValueError):
        read_csv("n,measured,predicted,witness,residual_max,seconds\n1,2,3\n")


def test_sweep_rows_and_flags():
    run = run_sweep(_small_cfg())
    assert [r.n for r in run.rows] == [4, 9, 16, 25]
    assert all(r.residual_max == 0.0 and r.seconds == 0.0 for r in run.rows)
    assert all(r.measured >= r.predicted for r in run.rows)
    assert set(run.flags) == {"slope", "measured_ge_predicted", "monotone_witness"}


def test_control_sweep():
    cfg = ExperimentConfig.from_dict({"d": 2, "r": 1, "variant": "control", "schedule": [16, 64]})
    run = run_sweep(cfg)
    assert all(r.measured == 0.0 for r in run.rows)
    assert run.verdict == "control"
    assert math.isnan(run.slope)


def test_failing_verdict():
    cfg = ExperimentConfig(2, 1, "thm1", [4, 9, 16, 25])
    run = ScalingRun(cfg, [Row(4, 1.0, 0.5, 0.5, 0.0, 0.0)], flags={"slope": False})
    assert run.verdict == "fail" and not run.passed


def _thm1_pair(n=64):
    spec = ProblemSpec.create(2, 1)
    return build_thm1(spec, uniform_grid_info(spec, n))


def test_audit_passes_on_construction():
    pair = _thm1_pair()
    _, z1, z2, _ = measure_separation(pair)
    report = audit_inequalities(pair, z1, z2)
    assert report.passed
    assert [c.name for c in report.checks] == ["lower_bound_ab", "closed_form", "lower_bound_interval"]


def test_audit_detects_perturbed_closed_form():
    pair = _thm1_pair()
    _, z1, z2, _ = measure_separation(pair)
    report = audit_inequalities(pair, z1, z2, closed_form=1.01 * closed_form_integral(pair))
    assert not report.passed
    assert [c.name for c in report.checks if not c.passed] == ["closed_form"]


def test_audit_on_control():
    pair = build_control(ProblemSpec.create(2, 1), 16)
    _, z1, z2, _ = measure_separation(pair)
    assert audit_inequalities(pair, z1, z2).passed


def _write_cfg(tmp_path, **kw):
    data = {"d": 2, "r": 1, "variant": "thm1", "schedule": [4, 9, 16, 25]}
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_cli_sweep_and_report(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "run.csv"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert cli.main(["report", str(out), "--quiet"]) == 0


def test_cli_failure_exit(tmp_path):
    cfg = _write_cfg(tmp_path, slope_tol=1e-9)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "x.csv"), "--quiet"]) == 1


def test_cli_config_errors(tmp_path):
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["sweep", "--config", str(bad), "--quiet"]) == 2
    assert cli.main(["sweep", "--config", _write_cfg(tmp_path, variant="nope"), "--quiet"]) == 2
    assert cli.main(["sweep", "--quiet"]) == 2


@pytest.mark.parametrize("exc", [ConstructionError("x"), SweepError(0, "x"), ArithmeticError("x")])
def test_cli_internal_errors(tmp_path, monkeypatch, exc):
    def boom(*args, **kwargs):
        raise exc

    monkeypatch.setattr(cli, "run_sweep", boom)
    assert cli.main(["sweep", "--config", _write_cfg(tmp_path), "--quiet"]) == 3


def test_cli_adversary_and_audit(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "pair.json"
    assert cli.main(["adversary", "--config", cfg, "--n", "16", "--out", str(out), "--quiet"]) == 0
    payload = json.loads(out.read_text())
    assert payload["pair"]["variant"] == "thm1"
    assert cli.main(["audit", "--config", cfg, "--n", "16", "--quiet"]) == 0
    assert cli.main(["audit", "--config", cfg, "--variant", "thm2i", "--quiet"]) == 2


def test_cli_verify_bump():
    assert cli.main(["verify-bump", "--quiet"]) == 0


def test_thm1_in_one_dimension_routes_to_interval_construction():
    run = run_sweep(_small_cfg(d=1, schedule=[8, 16, 32, 64]))
    assert all(math.isnan(r.predicted) for r in run.rows)
    assert run.rows[-1].measured < run.rows[0].measured
