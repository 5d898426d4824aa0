"""Occupancy ground truth and the NARX occupancy forecaster.

The network maps ``d_x`` delayed exogenous feature vectors and ``d_y`` delayed
outputs to the next output through one tanh hidden layer::

    y(t) = W2 tanh(W1 [x(t-1) .. x(t-d_x), y(t-1) .. y(t-d_y)] + b1) + b2

Training is series-parallel (teacher forced, the delayed outputs are the
measured occupancy) with Levenberg-Marquardt on the sum of squared errors.
Forecasting is parallel: predictions are fed back as delayed outputs.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ParameterError, ParseError, SchemaError, StructuralError, TrainingError
from .plant import DT_SECONDS, WATTS_PER_PERSON
from .weather import DEFAULT_START, WeatherSeries

TOUT_RANGE = (-20.0, 40.0)
N_FEATURES = 6
FEATURE_NAMES = ("tod_sin", "tod_cos", "doy_sin", "doy_cos", "weekday", "tout")
LUNCH_DIP = 0.2
PLATEAU_JITTER = 0.10

MU_INIT = 1e-3
MU_DEC = 0.1
MU_INC = 10.0
MU_MAX = 1e10
MIN_GRAD = 1e-7
VAL_PATIENCE = 6


class TrainingWarning(UserWarning):
    """Training ran on a dataset that cannot teach the network anything."""


# --------------------------------------------------------------------------
# ground-truth schedules


@dataclass(frozen=True)
class OccupancySchedule:
    """Head counts per step (rows) and zone (columns)."""

    counts: np.ndarray
    step: int = 600
    start: datetime = DEFAULT_START
    zones: tuple = ()
    max_counts: tuple = ()

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim == 1:
            counts = counts[:, None]
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise SchemaError("occupancy counts must be whole persons")
            counts = counts.astype(np.int64)
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise SchemaError("occupancy counts must be nonnegative")
        zones = tuple(self.zones) or tuple(f"zone{k + 1}" for k in range(counts.shape[1]))
        if len(zones) != counts.shape[1]:
            raise SchemaError("zone names do not match the count columns")
        maxes = tuple(int(m) for m in self.max_counts) or tuple(int(c) for c in counts.max(axis=0, initial=0))
        if len(maxes) != counts.shape[1] or np.any(counts > np.array(maxes)):
            raise SchemaError("occupancy exceeds the zone maximum")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "zones", zones)
        object.__setattr__(self, "max_counts", maxes)

    def __len__(self):
        return self.counts.shape[0]

    def timestamp(self, i):
        return self.start + timedelta(seconds=self.step * int(i))

    def window(self, first, count):
        return OccupancySchedule(self.counts[first:first + count], self.step,
                                 self.timestamp(first), self.zones, self.max_counts)


def _ramp(u):
    """Smooth 0 -> 1 transition on u in [0, 1]."""
    return 0.5 * (1.0 - np.cos(math.pi * np.clip(u, 0.0, 1.0)))


def weekday_profile(hours, level, dip=LUNCH_DIP):
    """Fraction of the zone maximum present at the given hours of a working day."""
    h = np.asarray(hours, dtype=float)
    level = np.broadcast_to(np.asarray(level, dtype=float), h.shape)
    shape = np.zeros_like(h)
    up = (h >= 7) & (h < 9)
    shape[up] = _ramp((h[up] - 7) / 2)
    shape[(h >= 9) & (h < 17)] = 1.0
    leave = (h >= 11) & (h < 12)
    shape[leave] = 1 - dip * _ramp(h[leave] - 11)
    shape[(h >= 12) & (h < 13)] = 1 - dip
    back = (h >= 13) & (h < 14)
    shape[back] = 1 - dip * (1 - _ramp(h[back] - 13))
    down = (h >= 17) & (h < 19)
    shape[down] = 1 - _ramp((h[down] - 17) / 2)
    return level * shape


def synth_occupancy(zones, days, seed, *, start=DEFAULT_START, step=600):
    """Office schedule for each zone.

    Weekdays ramp up 07:00-09:00, hold a plateau, dip over lunch, and ramp
    down 17:00-19:00; nights and weekends are empty. The plateau level is
    drawn per zone and day within ±10 % of the zone maximum (0.1 persons/m²)
    and capped at that maximum.
    """
    if days < 1:
        raise ParameterError(f"days must be >= 1, got {days}")
    zones = list(zones)
    rng = np.random.default_rng(seed)
    n = int(days * 86400 // step)
    n_days = int(math.ceil(n * step / 86400)) + 1
    probe = WeatherSeries(start, step, np.zeros(1))
    idx = np.arange(n)
    hours = probe.seconds_of_day(idx) / 3600.0
    day = probe.day_index(idx)
    workday = probe.weekday(idx) < 5
    counts = np.zeros((n, len(zones)), dtype=np.int64)
    for k, zone in enumerate(zones):
        levels = np.minimum(1.0 + rng.uniform(-PLATEAU_JITTER, PLATEAU_JITTER, size=n_days), 1.0)
        frac = weekday_profile(hours, levels[day]) * workday
        counts[:, k] = np.rint(frac * zone.max_occupants).astype(np.int64)
    return OccupancySchedule(counts, step, start, tuple(z.name for z in zones),
                             tuple(z.max_occupants for z in zones))


def write_occupancy_csv(schedule, path):
    with open(path, "w", newline="") as fh:
        fh.write("timestamp_iso8601,zone,persons\n")
        for i in range(len(schedule)):
            stamp = schedule.timestamp(i).isoformat()
            for z, name in enumerate(schedule.zones):
                fh.write(f"{stamp},{name},{schedule.counts[i, z]}\n")


def load_occupancy_csv(path, max_counts=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["timestamp_iso8601", "zone", "persons"]:
        raise ParseError("header must be timestamp_iso8601,zone,persons", line=1)
    stamps, zones, data = [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            stamp = datetime.fromisoformat(row[0])
            persons = int(row[2])
        except (ValueError, IndexError):
            raise ParseError(f"malformed record {row!r}", line=lineno) from None
        if not stamps or stamps[-1] != stamp:
            stamps.append(stamp)
        if row[1] not in zones:
            zones.append(row[1])
        data[(len(stamps) - 1, row[1])] = persons
    if not stamps:
        raise SchemaError("occupancy file has no records")
    step = int((stamps[1] - stamps[0]).total_seconds()) if len(stamps) > 1 else 600
    counts = np.zeros((len(stamps), len(zones)), dtype=np.int64)
    for (i, name), persons in data.items():
        counts[i, zones.index(name)] = persons
    return OccupancySchedule(counts, step, stamps[0], tuple(zones), tuple(max_counts or ()))


def occupancy_to_temp_offset(count, zone, dt=DT_SECONDS):
    """Per-step indoor temperature increment (°C) caused by ``count`` occupants."""
    count = np.asarray(count, dtype=float)
    if np.any(count < 0):
        raise ParameterError("occupant count must be nonnegative")
    out = count * WATTS_PER_PERSON * dt / zone.capacitance
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# features


def _scale(value, lo, hi):
    return 2.0 * (value - lo) / (hi - lo) - 1.0


def feature_matrix(weather, tout_range=TOUT_RANGE):
    """Exogenous features for every step of ``weather``, shape (n, 6).

    Columns: sin/cos of time of day, sin/cos of day of year, weekday flag
    (+1 Mon-Fri, -1 weekend) and outdoor temperature mapped affinely from
    ``tout_range`` onto [-1, 1].
    """
    tod = 2 * math.pi * weather.seconds_of_day() / 86400.0
    doy = 2 * math.pi * weather.day_of_year() / 365.0
    weekday = np.where(weather.weekday() < 5, 1.0, -1.0)
    return np.column_stack([
        np.sin(tod), np.cos(tod), np.sin(doy), np.cos(doy), weekday,
        _scale(weather.temps, *tout_range),
    ])


def build_features(schedule, weather, t, d_x=2, d_y=2, tout_range=TOUT_RANGE):
    """Feature vector x(t); ``t`` must leave room for the delay buffers."""
    if t < max(d_x, d_y) or t >= len(weather) or t >= len(schedule):
        raise IndexError(f"step {t} outside [{max(d_x, d_y)}, {min(len(weather), len(schedule))})")
    return feature_matrix(weather.window(t, 1), tout_range)[0]


# --------------------------------------------------------------------------
# network


@dataclass
class NarxNetwork:
    d_x: int
    d_y: int
    hidden_width: int
    input_dim: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    normalization: dict = field(default_factory=lambda: {
        "feature_ranges": {"tout": list(TOUT_RANGE)}, "target_max": 1.0})

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float).reshape(self.hidden_width, -1)
        self.b1 = np.asarray(self.b1, dtype=float).reshape(self.hidden_width)
        self.W2 = np.asarray(self.W2, dtype=float).reshape(1, self.hidden_width)
        self.b2 = np.asarray(self.b2, dtype=float).reshape(1)
        if self.W1.shape[1] != self.n_inputs:
            raise StructuralError(f"W1 has {self.W1.shape[1]} columns, expected {self.n_inputs}")
        if not all(np.all(np.isfinite(a)) for a in (self.W1, self.b1, self.W2, self.b2)):
            raise StructuralError("network weights must be finite")

    @property
    def n_inputs(self):
        return self.input_dim * self.d_x + self.d_y

    @property
    def n_params(self):
        return self.hidden_width * (self.n_inputs + 2) + 1

    @property
    def target_max(self):
        return float(self.normalization.get("target_max", 1.0))

    def get_params(self):
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params(self, theta):
        h, n = self.hidden_width, self.n_inputs
        theta = np.asarray(theta, dtype=float)
        self.W1 = theta[:h * n].reshape(h, n).copy()
        self.b1 = theta[h * n:h * n + h].copy()
        self.W2 = theta[h * n + h:h * n + 2 * h].reshape(1, h).copy()
        self.b2 = theta[-1:].copy()

    def predict(self, Z):
        """Batch forward pass on regressor rows ``Z`` (n_samples, n_inputs)."""
        hidden = np.tanh(Z @ self.W1.T + self.b1)
        return hidden @ self.W2[0] + self.b2[0]

    def to_dict(self):
        return {
            "d_x": self.d_x, "d_y": self.d_y, "hidden_width": self.hidden_width,
            "input_dim": self.input_dim,
            "W1": self.W1.ravel().tolist(), "b1": self.b1.tolist(),
            "W2": self.W2.ravel().tolist(), "b2": self.b2.tolist(),
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(int(doc["d_x"]), int(doc["d_y"]), int(doc["hidden_width"]), int(doc["input_dim"]),
                       doc["W1"], doc["b1"], doc["W2"], doc["b2"], doc.get("normalization", {}))
        except (KeyError, ValueError) as exc:
            raise StructuralError(f"bad network document: {exc}") from None


def init_narx(input_dim=N_FEATURES, d_x=2, d_y=2, hidden_width=10, seed=0, target_max=1.0):
    rng = np.random.default_rng(seed)
    n_in = input_dim * d_x + d_y
    return NarxNetwork(
        d_x, d_y, hidden_width, input_dim,
        rng.uniform(-0.5, 0.5, (hidden_width, n_in)),
        rng.uniform(-0.5, 0.5, hidden_width),
        rng.uniform(-0.5, 0.5, (1, hidden_width)),
        rng.uniform(-0.5, 0.5, 1),
        {"feature_ranges": {"tout": list(TOUT_RANGE)}, "target_max": float(target_max)},
    )


def save_narx(net, path):
    Path(path).write_text(json.dumps(net.to_dict(), indent=1))


def load_narx(path):
    return NarxNetwork.from_dict(json.loads(Path(path).read_text()))


def _regressor(net, x_delays, y_delays):
    x_delays = np.asarray(x_delays, dtype=float)
    y_delays = np.asarray(y_delays, dtype=float)
    if x_delays.shape != (net.d_x, net.input_dim):
        raise StructuralError(f"x delays have shape {x_delays.shape}, expected {(net.d_x, net.input_dim)}")
    if y_delays.shape != (net.d_y,):
        raise StructuralError(f"y delays have shape {y_delays.shape}, expected {(net.d_y,)}")
    return np.concatenate([x_delays.ravel(), y_delays])


def narx_forward(net, x_delays, y_delays):
    """One network evaluation.

    ``x_delays`` rows are ``x(t-1), ..., x(t-d_x)`` and ``y_delays`` is
    ``y(t-1), ..., y(t-d_y)``, both most-recent first.
    """
    z = _regressor(net, x_delays, y_delays)
    return float(net.W2[0] @ np.tanh(net.W1 @ z + net.b1) + net.b2[0])


# --------------------------------------------------------------------------
# datasets and training


@dataclass
class NarxDataset:
    """Teacher-forced regressor rows with the series each row came from."""

    inputs: np.ndarray
    targets: np.ndarray
    groups: np.ndarray

    def __len__(self):
        return self.targets.size


def delay_embed(features, targets, d_x=2, d_y=2):
    """Rows ``[x(t-1)..x(t-d_x), y(t-1)..y(t-d_y)]`` with target ``y(t)``."""
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    start = max(d_x, d_y)
    n = targets.size
    cols = [features[start - k:n - k] for k in range(1, d_x + 1)]
    cols += [targets[start - k:n - k, None] for k in range(1, d_y + 1)]
    return np.hstack(cols), targets[start:]


def narx_dataset(schedule, weather, d_x=2, d_y=2, zones=None):
    """Stack per-zone delay embeddings; targets are count / zone maximum.

    ``groups`` records the zone each row came from.
    """
    n = min(len(schedule), len(weather))
    feats = feature_matrix(weather.window(0, n))
    zones = range(schedule.counts.shape[1]) if zones is None else zones
    blocks, ys, gs = [], [], []
    for z in zones:
        target = schedule.counts[:n, z] / max(schedule.max_counts[z], 1)
        Z, y = delay_embed(feats, target, d_x, d_y)
        blocks.append(Z)
        ys.append(y)
        gs.append(np.full(y.size, z))
    return NarxDataset(np.vstack(blocks), np.concatenate(ys), np.concatenate(gs))


@dataclass
class TrainingReport:
    mse_train: float
    mse_val: float
    mse_test: float
    regression_r: dict
    epochs_run: int
    stop_reason: str
    mse_history: list = field(default_factory=list)
    degenerate: bool = False


def regression_value(outputs, targets):
    """Pearson correlation between outputs and targets."""
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    so, st = outputs.std(), targets.std()
    if so == 0 or st == 0:
        return 1.0 if np.allclose(outputs, targets) else 0.0
    r = np.mean((outputs - outputs.mean()) * (targets - targets.mean())) / (so * st)
    return float(np.clip(r, -1.0, 1.0))


def split_indices(n, fractions, seed=0):
    """Seeded random train/val/test division of ``n`` teacher-forced rows.

    Rows are independent once the delays are embedded, so samples are drawn
    at random rather than as contiguous blocks.
    """
    f = np.asarray(fractions, dtype=float)
    if f.shape != (3,) or np.any(f <= 0) or not math.isclose(f.sum(), 1.0, abs_tol=1e-9):
        raise ParameterError(f"split fractions must be three positive numbers summing to 1, got {fractions}")
    idx = np.random.default_rng(seed).permutation(n)
    a = int(round(f[0] * n))
    b = a + int(round(f[1] * n))
    return np.sort(idx[:a]), np.sort(idx[a:b]), np.sort(idx[b:])


def narx_jacobian(net, Z):
    """Exact d(output)/d(params) for every row of ``Z``; also returns outputs."""
    hidden = np.tanh(Z @ net.W1.T + net.b1)
    out = hidden @ net.W2[0] + net.b2[0]
    back = (1.0 - hidden ** 2) * net.W2[0]
    J = np.empty((Z.shape[0], net.n_params))
    h, n = net.hidden_width, net.n_inputs
    J[:, :h * n] = (back[:, :, None] * Z[:, None, :]).reshape(Z.shape[0], h * n)
    J[:, h * n:h * n + h] = back
    J[:, h * n + h:h * n + 2 * h] = hidden
    J[:, -1] = 1.0
    return J, out


def train_narx(net, dataset, split=(0.7, 0.15, 0.15), max_epochs=500, split_seed=0):
    """Levenberg-Marquardt fit of ``net`` in place (series-parallel form).

    Stops when validation MSE fails to improve on six consecutive epochs
    (weights roll back to the best validation point), when the MSE gradient
    norm drops below 1e-7 or damping saturates, or after ``max_epochs``.
    """
    Z = np.asarray(dataset.inputs, dtype=float)
    y = np.asarray(dataset.targets, dtype=float)
    if Z.shape[1] != net.n_inputs:
        raise StructuralError(f"dataset rows have {Z.shape[1]} inputs, network expects {net.n_inputs}")
    if y.size < 10 * net.n_params:
        raise TrainingError(f"{y.size} samples is fewer than 10x the {net.n_params} parameters")
    tr, va, te = split_indices(y.size, split, split_seed)
    degenerate = bool(np.ptp(y[tr]) == 0)
    if degenerate:
        warnings.warn("training target is constant; the network cannot learn any structure",
                      TrainingWarning, stacklevel=2)

    Ztr, ytr = Z[tr], y[tr]

    def sse(theta):
        net.set_params(theta)
        return float(np.sum((ytr - net.predict(Ztr)) ** 2))

    def val_mse():
        return float(np.mean((y[va] - net.predict(Z[va])) ** 2))

    theta = net.get_params()
    mu = MU_INIT
    err = sse(theta)
    history = [err / ytr.size]
    best_val, best_theta, fails = val_mse(), theta.copy(), 0
    stop, epoch = "max_epochs", 0
    eye = np.eye(theta.size)
    while epoch < max_epochs:
        net.set_params(theta)
        J, out = narx_jacobian(net, Ztr)
        e = ytr - out
        Jte = J.T @ e
        if np.linalg.norm(2.0 * Jte / ytr.size) < MIN_GRAD:
            stop = "gradient_small"
            break
        JtJ = J.T @ J
        epoch += 1
        accepted = False
        while mu <= MU_MAX:
            try:
                step = np.linalg.solve(JtJ + mu * eye, Jte)
            except np.linalg.LinAlgError:
                mu *= MU_INC
                continue
            candidate = theta + step
            new_err = sse(candidate)
            if new_err < err:
                theta, err, mu = candidate, new_err, mu * MU_DEC
                accepted = True
                break
            mu *= MU_INC
        net.set_params(theta)
        if not accepted:
            stop = "gradient_small"
            break
        history.append(err / ytr.size)
        v = val_mse()
        if v < best_val:
            best_val, best_theta, fails = v, theta.copy(), 0
        else:
            fails += 1
            if fails >= VAL_PATIENCE:
                stop = "validation_worsened"
                break
    if stop == "validation_worsened" or val_mse() > best_val:
        theta = best_theta
    net.set_params(theta)

    def mse(idx):
        return float(np.mean((y[idx] - net.predict(Z[idx])) ** 2)) if idx.size else 0.0

    r = {name: regression_value(net.predict(Z[idx]), y[idx]) if idx.size else 1.0
         for name, idx in (("train", tr), ("val", va), ("test", te))}
    return TrainingReport(mse(tr), mse(va), mse(te), r, epoch, stop, history, degenerate)


# --------------------------------------------------------------------------
# forecasting


def predict_horizon(net, history, x_future, N):
    """Parallel (closed-loop) N-step occupancy forecast in persons.

    Parameters
    ----------
    history : tuple (x_past, y_past)
        ``x_past`` holds at least ``d_x`` feature rows ending at ``t-1``
        (oldest first); ``y_past`` holds at least ``d_y`` observed head counts
        ending at ``t-1``. ``y_past`` may be 2-D (zones, steps) to forecast
        several zones sharing the same features.
    x_future : array (>= N-1, input_dim)
        Feature rows for ``t, t+1, ...``; the forecast of ``y(t+k)`` uses
        ``x(t+k-1)``.
    N : int
        Horizon length.

    Returns
    -------
    ndarray
        Forecast counts for ``t .. t+N-1``, clipped to ``[0, target_max]``,
        shape (N,) or (zones, N).
    """
    if N < 1:
        raise ParameterError(f"horizon must be >= 1, got {N}")
    x_past, y_past = history
    x_past = np.asarray(x_past, dtype=float)
    y_past = np.asarray(y_past, dtype=float)
    squeeze = y_past.ndim == 1
    y_past = np.atleast_2d(y_past)
    if x_past.shape[0] < net.d_x or y_past.shape[1] < net.d_y:
        raise StructuralError("history is shorter than the delay buffers")
    x_future = np.asarray(x_future, dtype=float).reshape(-1, net.input_dim)
    if x_future.shape[0] < N - 1:
        raise StructuralError(f"need {N - 1} future feature rows, got {x_future.shape[0]}")
    scale = net.target_max
    xs = np.vstack([x_past[-net.d_x:], x_future[:max(N - 1, 0)]])
    # newest first along the last axis
    y_buf = y_past[:, ::-1][:, :net.d_y] / scale
    out = np.empty((y_past.shape[0], N))
    for k in range(N):
        x_del = xs[net.d_x - 1 + k::-1][:net.d_x].ravel()
        Z = np.hstack([np.broadcast_to(x_del, (y_buf.shape[0], x_del.size)), y_buf])
        y_hat = np.clip(net.predict(Z), 0.0, 1.0)
        out[:, k] = y_hat
        y_buf = np.hstack([y_hat[:, None], y_buf[:, :-1]])
    out = out * scale
    return out[0] if squeeze else out


def fit_narx(dataset, *, restarts=5, seed=0, split=(0.7, 0.15, 0.15), max_epochs=500,
             hidden_width=10, d_x=2, d_y=2, input_dim=N_FEATURES, target_max=1.0):
    """Train ``restarts`` seeded networks and keep the best on validation MSE."""
    best = None
    for k in range(restarts):
        net = init_narx(input_dim, d_x, d_y, hidden_width, seed=seed + k, target_max=target_max)
        report = train_narx(net, dataset, split, max_epochs, split_seed=seed)
        if best is None or report.mse_val < best[1].mse_val:
            best = (net, report)
    return best
