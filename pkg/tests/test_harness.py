import copy
import json
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbmpc import cli, harness
from lbmpc.errors import AlignmentError, ConfigError, ParseError, StageError
from lbmpc.log import CSV_COLUMNS, ScenarioLog, export_csv, import_csv, sig6

SMALL = {"days": 3, "training": {"days": 21, "restarts": 1, "max_epochs": 40}, "identification": {"days": 7}}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return harness.run_experiment(copy.deepcopy(SMALL), out), out


def _log(p, mode="learning", zones=("a", "b"), occ=None, t_in=None):
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    return ScenarioLog(zones, mode, datetime(2021, 1, 1), 600.0, np.linspace(0, 1, n),
                       np.full(p.shape, 22.0) if t_in is None else t_in, np.full(p.shape, 22.1), p,
                       np.ones(p.shape, dtype=int) if occ is None else occ, np.zeros(p.shape))


# ---------------------------------------------------------------- report


def test_self_comparison_is_zero_change():
    log = _log(np.array([[100.0, -50.0], [0.0, 20.0]]))
    rep = harness.compute_report(log, log)
    assert rep.cooling_pct_change == 0.0 and rep.heating_pct_change == 0.0
    assert rep.learning == rep.conventional


def test_percentages_from_rounded_averages():
    # cooling 396.28 W -> 235.55 W, heating 2430 W -> 2020 W
    learn = _log(np.array([[-235.55, 2020.0]]))
    conv = _log(np.array([[-396.28, 2430.0]]), mode="conventional")
    rep = harness.compute_report(learn, conv)
    assert rep.cooling_pct_change == pytest.approx(-40.56, abs=0.005)
    assert rep.cooling_pct_reduction == pytest.approx(40.56, abs=0.005)
    assert rep.heating_pct_change == pytest.approx(-16.87, abs=0.005)
    assert rep.heating_pct_change == pytest.approx(-16.73, abs=0.5)


def test_sign_partitioned_averages():
    log = _log(np.array([[100.0, -30.0], [0.0, 300.0], [-10.0, 0.0]]))
    s = harness.summarize(log)
    assert s.avg_heating_power_w == pytest.approx(200.0)
    assert s.avg_cooling_power_w == pytest.approx(20.0)


def test_comfort_counts_occupied_steps_only():
    t_in = np.array([[19.0, 22.0], [26.5, 22.0], [10.0, 22.0]])
    occ = np.array([[1, 1], [2, 0], [0, 0]])
    s = harness.summarize(_log(np.zeros((3, 2)), t_in=t_in, occ=occ))
    # three occupied zone-steps, two outside the band; the 10 degC reading is unoccupied
    assert s.comfort_violation_fraction == pytest.approx(2 / 3)
    assert s.max_excursion_c == pytest.approx(1.5)


def test_misaligned_logs():
    a = _log(np.zeros((3, 2)))
    with pytest.raises(AlignmentError):
        harness.compute_report(a, _log(np.zeros((4, 2))))
    with pytest.raises(AlignmentError):
        harness.compute_report(a, _log(np.zeros((3, 2)), zones=("a", "c")))


# ---------------------------------------------------------------- CSV logs


def test_empty_log_is_header_only(tmp_path):
    export_csv(ScenarioLog.empty(("a",), "learning", 0), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert len(import_csv(tmp_path / "e.csv")) == 0


def test_two_step_four_zone_rows(tmp_path):
    log = ScenarioLog.empty(("z1", "z2", "z3", "z4"), "conventional", 2)
    export_csv(log, tmp_path / "l.csv")
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert len(lines) == 9
    assert lines[1].startswith("2021-01-01T00:00:00,z1,")
    assert lines[8].startswith("2021-01-01T00:10:00,z4,")


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 4), st.integers(0, 2**31))
def test_export_import_export_is_byte_identical(tmp_path_factory, n, nz, seed):
    d = tmp_path_factory.mktemp("csv")
    r = np.random.default_rng(seed)
    log = ScenarioLog(tuple(f"z{k}" for k in range(nz)), "learning", datetime(2021, 3, 1), 600.0,
                      r.uniform(-20, 35, n), r.uniform(15, 30, (n, nz)), r.uniform(15, 30, (n, nz)),
                      r.uniform(-5000, 10000, (n, nz)), r.integers(0, 41, (n, nz)), r.uniform(0, 40, (n, nz)))
    export_csv(log, d / "a.csv")
    back = import_csv(d / "a.csv")
    export_csv(back, d / "b.csv")
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()
    np.testing.assert_array_equal(back.p, sig6(log.p))
    np.testing.assert_array_equal(back.occ_true, log.occ_true)


def test_import_rejects_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n")
    with pytest.raises(ParseError):
        import_csv(tmp_path / "x.csv")


def test_export_surfaces_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        export_csv(ScenarioLog.empty(("a",), "learning", 1), tmp_path / "missing" / "x.csv")


# ---------------------------------------------------------------- pipeline


def test_outputs_written(small_run):
    result, out = small_run
    for name in ("log_learning.csv", "log_conventional.csv", "log_excitation.csv", "report.json",
                 "narx.json", "models.json"):
        assert (out / name).exists()
    assert len(result.log_learning) == 3 * 144
    report = json.loads((out / "report.json").read_text())
    assert report["meta"]["steps"] == 3 * 144


@pytest.mark.invariant
def test_paired_inputs(small_run):
    result, _ = small_run
    a, b = result.log_learning, result.log_conventional
    np.testing.assert_array_equal(a.t_out, b.t_out)
    np.testing.assert_array_equal(a.occ_true, b.occ_true)
    assert a.meta["inputs_sha256"] == b.meta["inputs_sha256"]
    assert a.meta["inputs_sha256"] == harness.inputs_digest(a.t_out, a.occ_true)


@pytest.mark.invariant
def test_energy_accounting_from_csv(small_run):
    result, out = small_run
    rep = harness.compute_report(import_csv(out / "log_learning.csv"), import_csv(out / "log_conventional.csv"))
    mem = result.report
    for mode in ("learning", "conventional"):
        for key in ("avg_cooling_power_w", "avg_heating_power_w"):
            a, b = getattr(getattr(rep, mode), key), getattr(getattr(mem, mode), key)
            assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_logged_power_within_limits(small_run):
    result, _ = small_run
    for log in (result.log_learning, result.log_conventional):
        assert np.all(log.p >= -5000.0) and np.all(log.p <= 10000.0)
        assert np.all(np.isfinite(log.t_in))


def test_conventional_log_reports_average_occupancy(small_run):
    result, _ = small_run
    conv = result.log_conventional
    assert np.all(conv.occ_pred == conv.occ_pred[0])
    assert np.all(result.b_bar > 0)


def test_stage_failure_flushes_partial_log(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = harness.receding_horizon_step

    def flaky(ctrl, *args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 4 * 10:
            raise FloatingPointError("solver exploded")
        return real(ctrl, *args, **kwargs)

    monkeypatch.setattr(harness, "receding_horizon_step", flaky)
    cfg = copy.deepcopy(SMALL)
    cfg["days"] = 1
    with pytest.raises(StageError) as info:
        harness.run_experiment(cfg, tmp_path)
    assert info.value.stage == "control-learning"
    partial = import_csv(tmp_path / "log_learning.csv")
    assert len(partial) == 10


def test_config_validation():
    with pytest.raises(ConfigError):
        harness.load_config({"dayz": 3})
    with pytest.raises(ConfigError):
        harness.load_config({"days": 0})
    ref = harness.reference_config()
    assert ref["days"] == 365 and ref["controller"]["n_horizon"] == 6


# ---------------------------------------------------------------- CLI


def test_cli_report_and_identify(small_run, tmp_path, capsys):
    _, out = small_run
    assert cli.main(["report", "--learn", str(out / "log_learning.csv"),
                     "--conv", str(out / "log_conventional.csv")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "cooling_pct_change" in doc
    assert cli.main(["identify", "--log", str(out / "log_excitation.csv"), "--out", str(tmp_path / "m.json")]) == 0
    models = json.loads((tmp_path / "m.json").read_text())
    assert [m["zone"] for m in models] == ["zone1", "zone2", "zone3", "zone4"]
    assert all(m["rms_c"] <= 0.05 for m in models)


def test_cli_exit_codes(small_run, tmp_path):
    _, out = small_run
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text('{"days": -1}')
    assert cli.main(["simulate", "--config", str(tmp_path / "bad.json"), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["report", "--learn", str(out / "log_learning.csv"),
                     "--conv", str(out / "log_excitation.csv")]) == 3


def test_cli_simulate_and_train(tmp_path, capsys):
    cfg = copy.deepcopy(SMALL)
    cfg["days"] = 1
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert cli.main(["simulate", "--config", str(tmp_path / "c.json"), "--out-dir", str(tmp_path / "o"),
                     "--seed", "3", "--days", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["meta"]["seed"] == 3 and rep["meta"]["steps"] == 144
    assert cli.main(["train-occupancy", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "n.json")]) == 0
    assert json.loads((tmp_path / "n.json").read_text())["hidden_width"] == 10
