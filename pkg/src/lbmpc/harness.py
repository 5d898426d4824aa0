"""End-to-end experiment: train the occupancy forecaster, identify zone
models, run a year under learning-based and conventional MPC, compare."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

import numpy as np

from . import occupancy as occ
from .errors import AlignmentError, ConfigError, LbmpcError, StageError
from .log import ScenarioLog, export_csv, sig6
from .mpc import MpcConfig, ZoneController, receding_horizon_step
from .plant import DT_SECONDS, WATTS_PER_PERSON, BuildingPlant, load_building, reference_building_doc
from .sysid import identify
from .weather import STEPS_PER_DAY, load_weather_csv, synth_weather

logger = logging.getLogger(__name__)

DEFAULT_EXPERIMENT = {
    "building": None,
    "controller": {},
    "seed": 7,
    "days": 365,
    "start": "2021-01-01T00:00:00",
    "initial_temp_c": 22.5,
    "weather": {"t_min_c": -16.6, "t_max_c": 31.6, "csv": None},
    "training": {"start": "2020-07-01T00:00:00", "days": 184, "restarts": 2, "max_epochs": 300,
                 "split": [0.7, 0.15, 0.15]},
    "identification": {"days": 30, "lambda": 0.99, "f0_scale": 1e6, "prbs_amplitude_w": 2500.0,
                       "prbs_hold_steps": 6, "kp_w_per_k": 3000.0},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path_or_doc=None):
    """Experiment configuration merged over the defaults."""
    if path_or_doc is None:
        doc = {}
    elif isinstance(path_or_doc, (str, Path)):
        try:
            doc = json.loads(Path(path_or_doc).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path_or_doc}: {exc}") from None
    else:
        doc = path_or_doc
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")
    unknown = set(doc) - set(DEFAULT_EXPERIMENT)
    if unknown:
        raise ConfigError(f"unknown experiment fields {sorted(unknown)}")
    cfg = _merge(DEFAULT_EXPERIMENT, doc)
    if cfg["days"] < 1:
        raise ConfigError("days must be >= 1")
    return cfg


def reference_config():
    text = resources.files("lbmpc.data").joinpath("reference_experiment.json").read_text()
    return load_config(json.loads(text))


# --------------------------------------------------------------------------
# report


@dataclass
class ModeSummary:
    avg_cooling_power_w: float
    avg_heating_power_w: float
    comfort_violation_fraction: float
    max_excursion_c: float


@dataclass
class ComparisonReport:
    learning: ModeSummary
    conventional: ModeSummary
    cooling_pct_change: float
    heating_pct_change: float
    cooling_pct_reduction: float
    heating_pct_reduction: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _sign_averages(p):
    p = np.asarray(p, dtype=float).ravel()
    heat = p[p > 0]
    cool = -p[p < 0]
    return (float(cool.sum() / cool.size) if cool.size else 0.0,
            float(heat.sum() / heat.size) if heat.size else 0.0)


def _comfort(log, t_min, t_max):
    occupied = log.occ_true > 0
    if not occupied.any():
        return 0.0, 0.0
    t = log.t_in[occupied]
    excursion = np.maximum(np.maximum(t - t_max, t_min - t), 0.0)
    return float(np.mean(excursion > 0)), float(excursion.max())


def summarize(log, t_min=20.0, t_max=25.0):
    cool, heat = _sign_averages(log.p)
    frac, worst = _comfort(log, t_min, t_max)
    return ModeSummary(cool, heat, frac, worst)


def _pct(learn, conv):
    return 0.0 if conv == 0 else (learn - conv) / conv * 100.0


def compute_report(log_learn, log_conv, t_min=20.0, t_max=25.0):
    """Table-style comparison of two aligned logs.

    Cooling and heating averages are taken over steps with ``P < 0`` (as
    ``|P|``) and ``P > 0`` respectively, pooled over zones. ``*_pct_change``
    is ``(learn - conv) / conv * 100`` (negative = saving) and
    ``*_pct_reduction`` its negation. Comfort statistics cover occupied
    zone-steps only.
    """
    if len(log_learn) != len(log_conv) or log_learn.zones != log_conv.zones:
        raise AlignmentError("logs differ in length or zones")
    if log_learn.start != log_conv.start or log_learn.dt != log_conv.dt:
        raise AlignmentError("logs start at different times or use different steps")
    learn = summarize(log_learn, t_min, t_max)
    conv = summarize(log_conv, t_min, t_max)
    dc = _pct(learn.avg_cooling_power_w, conv.avg_cooling_power_w)
    dh = _pct(learn.avg_heating_power_w, conv.avg_heating_power_w)
    return ComparisonReport(learn, conv, dc, dh, -dc, -dh)


# --------------------------------------------------------------------------
# pipeline pieces


def inputs_digest(weather_temps, occupancy_counts):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(weather_temps, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(occupancy_counts, dtype=np.int64).tobytes())
    return h.hexdigest()


def excitation_run(plant, weather, schedule, n_steps, seed, amplitude=2500.0, hold=6, kp=3000.0,
                   t_set=22.5, t0=22.5):
    """Open-loop-rich data: proportional law around ``t_set`` plus a PRBS.

    The PRBS switches sign with probability 1/2 every ``hold`` steps,
    independently per zone.
    """
    rng = np.random.default_rng(seed)
    nz = plant.n_zones
    n_blocks = n_steps // hold + 1
    prbs = np.where(rng.random((n_blocks, nz)) < 0.5, -amplitude, amplitude)
    log = ScenarioLog.empty(tuple(z.name for z in plant.zones), "excitation", n_steps,
                            weather.start, plant.dt)
    state = plant.initial_state(t0)
    for t in range(n_steps):
        temps = state.zone_temps
        p = sig6(np.clip(kp * (t_set - temps) + prbs[t // hold], plant.p_min, plant.p_max))
        counts = schedule.counts[t]
        log.t_out[t] = weather.temps[t]
        log.t_in[t] = temps
        log.t_in_pred[t] = temps
        log.p[t] = p
        log.occ_true[t] = counts
        log.occ_pred[t] = counts
        state = plant.step(state, p, weather.temps[t], counts * WATTS_PER_PERSON)
    return log


def closed_loop_run(plant, models, mpc_cfg, weather, schedule, n_steps, mode, *, net=None,
                    b_bar=None, t0=22.5):
    """Simulate ``n_steps`` under per-zone MPC in the given mode.

    ``weather`` and ``schedule`` must extend ``n_horizon - 1`` steps past
    ``n_steps`` to give full previews (shorter previews truncate).
    """
    nz = plant.n_zones
    cfg = MpcConfig(**{**asdict(mpc_cfg), "mode": mode})
    b_bar = np.zeros(nz) if b_bar is None else np.asarray(b_bar, dtype=float)
    ctrls = [ZoneController(models[z], cfg, b_bar=float(b_bar[z])) for z in range(nz)]
    feats = occ.feature_matrix(weather) if mode == "learning" else None
    if mode == "learning" and net is None:
        raise ValueError("learning mode needs a trained network")
    caps = np.array([z.capacitance for z in plant.zones])
    to_offset = WATTS_PER_PERSON * plant.dt / caps
    n_avail = len(weather)
    log = ScenarioLog.empty(tuple(z.name for z in plant.zones), mode, n_steps, weather.start, plant.dt)
    state = plant.initial_state(t0)
    t_pred = state.zone_temps.copy()
    lag = max(net.d_x, net.d_y) if net is not None else 0
    N = cfg.n_horizon
    t = 0
    try:
        for t in range(n_steps):
            temps = state.zone_temps
            n = max(1, min(N, n_avail - t))
            if mode == "learning":
                if t >= lag:
                    y_hist = schedule.counts[t - net.d_y:t].T
                    counts_hat = occ.predict_horizon(net, (feats[t - net.d_x:t], y_hist), feats[t:t + n - 1], n)
                else:
                    # delay buffers not yet filled: assume an empty building
                    counts_hat = np.zeros((nz, n))
                occ_pred = counts_hat[:, 0]
            else:
                counts_hat = None
                occ_pred = b_bar / to_offset
            p = np.empty(nz)
            for z, ctrl in enumerate(ctrls):
                # whole persons enter the thermal model; the rollout itself stays continuous
                b = np.rint(counts_hat[z]) * to_offset[z] if counts_hat is not None else None
                receding_horizon_step(ctrl, temps[z], weather.temps[t:t + n], b)
                # the applied input is the logged one, so CSV averages match memory exactly
                p[z] = ctrl.p_prev = sig6(ctrl.p_prev)
            counts = schedule.counts[t]
            log.t_out[t] = weather.temps[t]
            log.t_in[t] = temps
            log.t_in_pred[t] = t_pred
            log.p[t] = p
            log.occ_true[t] = counts
            log.occ_pred[t] = occ_pred
            t_pred = np.array([c.last_solution.predicted_temps[0] for c in ctrls])
            state = plant.step(state, p, weather.temps[t], counts * WATTS_PER_PERSON)
    except Exception as exc:
        exc.partial_log = log.truncated(t)
        raise
    return log


@dataclass
class ExperimentResult:
    report: ComparisonReport
    log_learning: ScenarioLog
    log_conventional: ScenarioLog
    log_excitation: ScenarioLog
    network: occ.NarxNetwork
    training: occ.TrainingReport
    models: list
    rms: list
    b_bar: np.ndarray


def _stage(name, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except (StageError, ConfigError):
        raise
    except Exception as exc:  # any failure is reported against its stage
        raise StageError(name, exc) from exc
    logger.info("stage %s done in %.1f s", name, time.perf_counter() - t0)
    return out


def build_plant(cfg):
    doc = cfg["building"] if cfg["building"] is not None else reference_building_doc()
    return load_building(doc)


def _controller_config(cfg, plant):
    ctrl = dict(cfg["controller"])
    ctrl.setdefault("p_min_w", float(plant.p_min.min()))
    ctrl.setdefault("p_max_w", float(plant.p_max.max()))
    ctrl.pop("mode", None)
    return MpcConfig.from_dict(ctrl)


def prepare_inputs(cfg, plant):
    """Weather and occupancy for the control year and the training window."""
    seed = int(cfg["seed"])
    w = cfg["weather"]
    start = datetime.fromisoformat(cfg["start"])
    pad_days = cfg["days"] + 1
    if w.get("csv"):
        weather = load_weather_csv(w["csv"])
        if weather.step != plant.dt:
            raise ConfigError(f"weather step {weather.step} s does not match plant step {plant.dt} s")
    else:
        weather = synth_weather(pad_days, w["t_min_c"], w["t_max_c"], seed, start=start)
    schedule = occ.synth_occupancy(plant.zones, pad_days, seed + 1, start=weather.start)
    tr = cfg["training"]
    t_start = datetime.fromisoformat(tr["start"])
    train_weather = synth_weather(tr["days"], w["t_min_c"], w["t_max_c"], seed + 2, start=t_start)
    train_schedule = occ.synth_occupancy(plant.zones, tr["days"], seed + 3, start=t_start)
    return weather, schedule, train_weather, train_schedule


def train_occupancy(cfg, weather, schedule):
    """Fit the forecaster on the training window; returns ``(net, report)``."""
    tr = cfg["training"]
    ds = occ.narx_dataset(schedule, weather)
    return occ.fit_narx(ds, restarts=int(tr["restarts"]), seed=int(cfg["seed"]), split=tuple(tr["split"]),
                        max_epochs=int(tr["max_epochs"]), target_max=float(max(schedule.max_counts)))


def identify_zones(cfg, plant, mpc_cfg, weather, schedule):
    """Excite the plant for the configured number of days and fit every zone."""
    idc = cfg["identification"]
    n_id = int(idc["days"]) * STEPS_PER_DAY
    excite = excitation_run(plant, weather, schedule, n_id, int(cfg["seed"]) + 4, idc["prbs_amplitude_w"],
                            int(idc["prbs_hold_steps"]), idc["kp_w_per_k"], mpc_cfg.t_d,
                            float(cfg["initial_temp_c"]))
    fitted = [identify(excite, z, plant.zones[z].capacitance, idc["lambda"], idc["f0_scale"])
              for z in range(plant.n_zones)]
    return excite, [m for m, _ in fitted], [r for _, r in fitted]


def run_experiment(cfg=None, out_dir=None, *, seed=None, days=None):
    """Full pipeline; writes logs and the report when ``out_dir`` is given."""
    cfg = load_config(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    if days is not None:
        cfg["days"] = int(days)
    plant = _stage("config", build_plant, cfg)
    mpc_cfg = _stage("config", _controller_config, cfg, plant)
    weather, schedule, train_weather, train_schedule = _stage("inputs", prepare_inputs, cfg, plant)
    n_steps = int(cfg["days"]) * STEPS_PER_DAY
    if len(weather) < n_steps:
        raise StageError("inputs", f"weather covers {len(weather)} steps, need {n_steps}")

    net, training = _stage("train-occupancy", train_occupancy, cfg, train_weather, train_schedule)
    caps = np.array([z.capacitance for z in plant.zones])
    b_bar = train_schedule.counts.mean(axis=0) * WATTS_PER_PERSON * plant.dt / caps
    excite, models, rms = _stage("identify", identify_zones, cfg, plant, mpc_cfg, train_weather, train_schedule)
    idc = cfg["identification"]
    digest = inputs_digest(weather.temps[:n_steps], schedule.counts[:n_steps])
    t0 = float(cfg["initial_temp_c"])
    runs = {}
    for mode, extra in (("learning", {"net": net}), ("conventional", {"b_bar": b_bar})):
        try:
            runs[mode] = _stage(f"control-{mode}", closed_loop_run, plant, models, mpc_cfg, weather, schedule,
                                n_steps, mode, t0=t0, **extra)
        except StageError as exc:
            partial = getattr(exc.cause, "partial_log", None)
            if out_dir is not None and partial is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                export_csv(partial, Path(out_dir) / f"log_{mode}.csv")
            raise
    log_l, log_c = runs["learning"], runs["conventional"]
    for log in (log_l, log_c):
        log.meta["inputs_sha256"] = digest
    report = _stage("report", compute_report, log_l, log_c, mpc_cfg.t_min, mpc_cfg.t_max)
    report.meta = {
        "inputs_sha256": digest,
        "steps": n_steps,
        "seed": int(cfg["seed"]),
        "narx": {"mse_train": training.mse_train, "mse_val": training.mse_val, "mse_test": training.mse_test,
                 "regression_r": training.regression_r, "epochs_run": training.epochs_run,
                 "stop_reason": training.stop_reason},
        "identification": [m.to_dict(plant.zones[z].name, rms[z], idc["lambda"]) for z, m in enumerate(models)],
        "b_bar_c": [float(b) for b in b_bar],
    }
    result = ExperimentResult(report, log_l, log_c, excite, net, training, models, rms, b_bar)
    if out_dir is not None:
        _stage("write", write_outputs, result, out_dir)
    return result


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(result.log_learning, out / "log_learning.csv")
    export_csv(result.log_conventional, out / "log_conventional.csv")
    export_csv(result.log_excitation, out / "log_excitation.csv")
    occ.save_narx(result.network, out / "narx.json")
    (out / "models.json").write_text(json.dumps(result.report.meta["identification"], indent=1))
    (out / "report.json").write_text(result.report.to_json() + "\n")
