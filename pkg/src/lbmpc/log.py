"""Per-step, per-zone record of a closed-loop run and its CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError
from .plant import DT_SECONDS, WATTS_PER_PERSON
from .weather import DEFAULT_START

CSV_COLUMNS = ("timestamp", "zone", "tout_c", "tin_c", "tin_pred_c", "p_w", "occ_true", "occ_pred", "mode")


def sig6(x):
    """Round to the 6 significant digits kept in exported logs."""
    return np.vectorize(lambda v: float(f"{v:.6g}"), otypes=[float])(x) if np.ndim(x) else float(f"{x:.6g}")


@dataclass
class ScenarioLog:
    """Column arrays; rows are steps, second axis is zone."""

    zones: tuple
    mode: str
    start: datetime = DEFAULT_START
    dt: float = DT_SECONDS
    t_out: np.ndarray = None
    t_in: np.ndarray = None
    t_in_pred: np.ndarray = None
    p: np.ndarray = None
    occ_true: np.ndarray = None
    occ_pred: np.ndarray = None
    watts_per_person: float = WATTS_PER_PERSON
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        nz = len(self.zones)
        if self.t_out is None:
            self.t_out = np.zeros(0)
        n = len(self.t_out)
        self.t_out = np.asarray(self.t_out, dtype=float)
        for name in ("t_in", "t_in_pred", "p", "occ_pred"):
            value = getattr(self, name)
            setattr(self, name, np.zeros((n, nz)) if value is None else np.asarray(value, dtype=float).reshape(n, nz))
        occ = np.zeros((n, nz)) if self.occ_true is None else np.asarray(self.occ_true)
        self.occ_true = occ.astype(np.int64).reshape(n, nz)

    @classmethod
    def empty(cls, zones, mode, n_steps, start=DEFAULT_START, dt=DT_SECONDS):
        nz = len(zones)
        return cls(tuple(zones), mode, start, dt, np.zeros(n_steps), np.zeros((n_steps, nz)),
                   np.zeros((n_steps, nz)), np.zeros((n_steps, nz)), np.zeros((n_steps, nz), dtype=np.int64),
                   np.zeros((n_steps, nz)))

    def __len__(self):
        return self.t_out.size

    def zone_index(self, zone):
        if isinstance(zone, (int, np.integer)):
            return int(zone)
        return self.zones.index(zone)

    def timestamp(self, i):
        return self.start + timedelta(seconds=self.dt * int(i))

    def truncated(self, n):
        return ScenarioLog(self.zones, self.mode, self.start, self.dt, self.t_out[:n], self.t_in[:n],
                           self.t_in_pred[:n], self.p[:n], self.occ_true[:n], self.occ_pred[:n],
                           self.watts_per_person, dict(self.meta))


def export_csv(log, path):
    """Write one row per zone per step; floats keep 6 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(log)):
                stamp = log.timestamp(i).isoformat()
                tout = f"{log.t_out[i]:.6g}"
                for z, name in enumerate(log.zones):
                    fh.write(
                        f"{stamp},{name},{tout},{log.t_in[i, z]:.6g},{log.t_in_pred[i, z]:.6g},"
                        f"{log.p[i, z]:.6g},{log.occ_true[i, z]},{log.occ_pred[i, z]:.6g},{log.mode}\n"
                    )
    except OSError as exc:
        raise OSError(f"cannot write log {path}: {exc}") from exc


def import_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ParseError(f"header must be {','.join(CSV_COLUMNS)}", line=1)
        rows = [r for r in reader if r]
    zones = []
    for r in rows:
        if r[1] in zones:
            break
        zones.append(r[1])
    if not rows:
        return ScenarioLog((), "", DEFAULT_START, DT_SECONDS)
    nz = len(zones)
    if len(rows) % nz:
        raise SchemaError("log rows do not cover every zone at every step")
    n = len(rows) // nz
    try:
        data = np.array([[float(v) for v in r[2:8]] for r in rows]).reshape(n, nz, 6)
        stamps = [datetime.fromisoformat(rows[i * nz][0]) for i in range(n)]
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    for i in range(n):
        if [rows[i * nz + z][1] for z in range(nz)] != zones:
            raise SchemaError(f"zone order changes at step {i}")
    dt = (stamps[1] - stamps[0]).total_seconds() if n > 1 else DT_SECONDS
    return ScenarioLog(tuple(zones), rows[0][8], stamps[0], dt, data[:, 0, 0], data[:, :, 1],
                       data[:, :, 2], data[:, :, 3], np.rint(data[:, :, 4]).astype(np.int64), data[:, :, 5])
