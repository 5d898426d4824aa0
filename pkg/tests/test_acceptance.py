"""End-to-end acceptance checks.

Each test stores a one-line verdict before asserting, so the terminal summary
shows every criterion even when some of them fail.
"""
import copy
import json
import re
import subprocess
import sys
import time

import numpy as np
import pytest

from lbmpc import harness
from lbmpc import occupancy as occ
from lbmpc.mpc import MpcConfig, prediction_matrices, solve_mpc
from lbmpc.sysid import RlsEstimator, ThermalModel, batch_least_squares, identify_series
from tests.conftest import ACCEPTANCE_LINES, INVARIANT_OUTCOMES

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RUNTIME_LIMIT_S = 300.0
SHORT = {"days": 2, "training": {"days": 21, "restarts": 1, "max_epochs": 40}, "identification": {"days": 7}}


def verdict(number, ok, text):
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    return ok


@pytest.fixture(scope="session")
def reference(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference")
    t0 = time.perf_counter()
    result = harness.run_experiment(harness.reference_config(), out)
    return result, time.perf_counter() - t0, out


def test_criterion_1_directional_savings(reference):
    result, elapsed, _ = reference
    rep = result.report
    cool, heat = rep.cooling_pct_reduction, rep.heating_pct_reduction
    comfort_ok = rep.learning.comfort_violation_fraction <= rep.conventional.comfort_violation_fraction
    ok = cool >= 10.0 and heat >= 5.0 and comfort_ok and elapsed <= RUNTIME_LIMIT_S
    verdict(1, ok, f"cooling -{cool:.2f}% (need >= 10), heating -{heat:.2f}% (need >= 5), "
                   f"comfort {rep.learning.comfort_violation_fraction:.4f} vs "
                   f"{rep.conventional.comfort_violation_fraction:.4f}, runtime {elapsed:.0f} s")
    assert elapsed <= RUNTIME_LIMIT_S
    assert comfort_ok
    assert cool >= 10.0, f"cooling reduction {cool:.2f}%"
    assert heat >= 5.0, f"heating reduction {heat:.2f}%"


def test_criterion_2_identification_accuracy(reference):
    result, _, _ = reference
    worst = max(result.rms)
    C = 9.3e7
    r = np.random.default_rng(2)
    n = 4320
    t_out = 5.0 + 8.0 * np.sin(np.arange(n) / 40.0) + r.normal(0, 1, n)
    power = r.choice([-3000.0, 0.0, 4000.0, 8000.0], size=n)
    b = r.uniform(0, 0.01, n)
    t_in = np.empty(n)
    t_in[0] = 21.0
    for k in range(n - 1):
        t_in[k + 1] = 0.9995 * (t_in[k] + 600.0 / C * (power[k] - 220.0 * (t_in[k] - t_out[k]))) + b[k]
    _, exact = identify_series(t_in, t_out, power, b, C)
    ok = worst <= 0.05 and exact <= 1e-9
    verdict(2, ok, f"coupled-plant month rms {worst:.4f} C (<= 0.05), model-class log rms {exact:.1e} C (<= 1e-9)")
    assert worst <= 0.05
    assert exact <= 1e-9


def test_criterion_3_rls_matches_batch():
    r = np.random.default_rng(500)
    theta = np.array([0.9995, 0.0645])
    phi = np.column_stack([r.uniform(15, 30, 500), r.uniform(-20, 20, 500)])
    y = phi @ theta
    est = RlsEstimator.start(lam=1.0)
    for p, t in zip(phi, y):
        est.update(p, t)
    gap = float(np.linalg.norm(est.theta - batch_least_squares(phi, y)))
    verdict(3, gap <= 1e-6, f"|theta_rls - theta_batch| = {gap:.2e} after 500 samples (<= 1e-6)")
    assert gap <= 1e-6


def test_criterion_4_occupancy_forecaster(reference):
    result, _, _ = reference
    cfg = harness.reference_config()
    plant = harness.build_plant(cfg)
    _, _, train_weather, train_schedule = harness.prepare_inputs(cfg, plant)
    ds = occ.narx_dataset(train_schedule, train_weather)
    _, _, te = occ.split_indices(len(ds), tuple(cfg["training"]["split"]), cfg["seed"])
    net = result.network
    mse = float(np.mean((net.predict(ds.inputs[te]) - ds.targets[te]) ** 2))
    scale = np.asarray(train_schedule.max_counts, dtype=float)[ds.groups[te]]
    err = np.abs(net.predict(ds.inputs[te]) - ds.targets[te]) * scale
    frac = float(np.mean(err <= 1.0))
    ok = mse <= 0.01 and frac >= 0.99
    verdict(4, ok, f"normalized test mse {mse:.2e} (<= 0.01), {100 * frac:.2f}% of test steps within 1 person (>= 99%)")
    assert mse == pytest.approx(result.training.mse_test, rel=1e-9)
    assert mse <= 0.01
    assert frac >= 0.99


def _grid(model, cfg, t0, p_prev, t_out, b):
    grid = np.arange(cfg.p_min, cfg.p_max + 0.05, 0.1)
    M, v = prediction_matrices(model, t0, [t_out], [b])
    temps = M[0, 0] * grid + v[0]
    cost = (cfg.q * (temps - cfg.t_d) ** 2 + cfg.r * (grid - p_prev) ** 2
            + cfg.soft_weight * (np.maximum(temps - cfg.t_max, 0) ** 2 + np.maximum(cfg.t_min - temps, 0) ** 2))
    k = int(np.argmin(cost))
    return grid[k], cost[k]


def test_criterion_5_solver_oracle():
    r = np.random.default_rng(5)
    worst_p, worst_c, worst_kkt, constrained = 0.0, 0.0, 0.0, 0
    for _ in range(100):
        model = ThermalModel(r.uniform(0.999, 1.0), r.uniform(50, 500), 10 ** r.uniform(6, 8))
        cfg = MpcConfig(n_horizon=1, r=10 ** r.uniform(-9, -5))
        t0, t_out, p_prev = r.uniform(10, 32), r.uniform(-16.6, 31.6), r.uniform(-5000, 10000)
        b = r.uniform(0, 0.05)
        sol = solve_mpc(model, cfg, t0, p_prev, [t_out], [b])
        p_grid, c_grid = _grid(model, cfg, t0, p_prev, t_out, b)
        worst_p = max(worst_p, abs(sol.powers[0] - p_grid))
        worst_c = max(worst_c, (sol.cost - c_grid) / max(c_grid, 1e-12))
        if sol.powers[0] <= cfg.p_min or sol.powers[0] >= cfg.p_max:
            constrained += 1
            worst_kkt = max(worst_kkt, sol.kkt_residual)
    ok = worst_p <= 0.2 and worst_c <= 0.01 and worst_kkt < 1e-4 and constrained > 0
    verdict(5, ok, f"100 instances: max |dP| {worst_p:.3f} W (<= 0.2), max cost excess {100 * worst_c:.3f}% (<= 1), "
                   f"max KKT {worst_kkt:.1e} on {constrained} constrained (< 1e-4)")
    assert constrained > 0
    assert worst_p <= 0.2
    assert worst_c <= 0.01
    assert worst_kkt < 1e-4


def test_criterion_6_constraints_and_stability(reference):
    result, _, _ = reference
    plant = harness.build_plant(harness.reference_config())
    steps, inside, finite = 0, True, True
    for log in (result.log_learning, result.log_conventional):
        steps += len(log)
        inside &= bool(np.all((log.p >= plant.p_min) & (log.p <= plant.p_max)))
        finite &= bool(np.all(np.isfinite(log.t_in)))
    full = all(len(log) == 365 * 144 for log in (result.log_learning, result.log_conventional))
    ok = inside and finite and full
    verdict(6, ok, f"{steps} logged steps over two full years, powers within limits: {inside}, "
                   f"temperatures finite: {finite}")
    assert full and inside and finite


def test_criterion_7_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    harness.run_experiment(copy.deepcopy(SHORT), a)
    (tmp_path / "short.json").write_text(json.dumps(SHORT))
    proc = subprocess.run([sys.executable, "-m", "lbmpc", "simulate", "--config", str(tmp_path / "short.json"),
                           "--out-dir", str(b)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    names = ["log_learning.csv", "log_conventional.csv", "log_excitation.csv", "report.json", "narx.json",
             "models.json"]
    differing = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    verdict(7, not differing, f"two runs in separate processes, {len(names) - len(differing)}/{len(names)} "
                              f"output files byte-identical")
    assert not differing


def test_criterion_8_invariant_suite():
    outcomes = dict(INVARIANT_OUTCOMES)
    if outcomes:
        failed = [k for k, v in outcomes.items() if not v]
        total = len(outcomes)
    else:
        # acceptance selected on its own; run the invariant-marked tests now
        proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "invariant and not acceptance",
                               "-p", "no:cacheprovider"], capture_output=True, text=True)
        tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
        failed = [] if proc.returncode == 0 else [tail]
        total = sum(int(n) for n in re.findall(r"(\d+) (?:passed|failed|error)", tail))
    verdict(8, not failed, f"{total} invariant tests run, {len(failed)} failing")
    assert not failed, failed
