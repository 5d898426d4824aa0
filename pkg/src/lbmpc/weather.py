"""Outdoor dry-bulb temperature series: CSV ingestion and a seeded synthesizer."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ParameterError, ParseError, SchemaError

STEPS_PER_DAY = 144
CSV_HEADER = ("timestamp_iso8601", "tout_c")
T_LIMITS = (-60.0, 60.0)
DEFAULT_START = datetime(2021, 1, 1)
# day of year (0-based, fractional) of the coldest point of the annual cycle
COLDEST_DAY = 15.0


def _fmt(x):
    return f"{x:.10g}"


@dataclass(frozen=True)
class WeatherSeries:
    start: datetime
    step: int
    temps: np.ndarray

    def __post_init__(self):
        temps = np.array(self.temps, dtype=float)
        if temps.ndim != 1 or temps.size == 0:
            raise SchemaError("weather series must be a nonempty 1-D sequence")
        if not self.step > 0:
            raise SchemaError(f"step must be positive, got {self.step}")
        lo, hi = T_LIMITS
        if not np.all(np.isfinite(temps)) or temps.min() < lo or temps.max() > hi:
            raise SchemaError(f"temperatures must lie in [{lo}, {hi}] °C")
        temps.setflags(write=False)
        object.__setattr__(self, "temps", temps)
        object.__setattr__(self, "step", int(self.step))

    def __len__(self):
        return self.temps.size

    def timestamp(self, i):
        return self.start + timedelta(seconds=self.step * int(i))

    def seconds_of_day(self, idx=None):
        """Seconds since local midnight for each index (vectorized)."""
        idx = np.arange(len(self)) if idx is None else np.asarray(idx)
        offset = self.start.hour * 3600 + self.start.minute * 60 + self.start.second
        return (offset + idx * self.step) % 86400

    def day_index(self, idx=None):
        """Whole days elapsed since the start's midnight."""
        idx = np.arange(len(self)) if idx is None else np.asarray(idx)
        offset = self.start.hour * 3600 + self.start.minute * 60 + self.start.second
        return (offset + idx * self.step) // 86400

    def day_of_year(self, idx=None):
        """Fractional 0-based day of year."""
        start_doy = self.start.timetuple().tm_yday - 1
        return (start_doy + self.day_index(idx) + self.seconds_of_day(idx) / 86400.0)

    def weekday(self, idx=None):
        """Monday=0 ... Sunday=6."""
        return (self.start.weekday() + self.day_index(idx)) % 7

    def window(self, first, count):
        """Sub-series of ``count`` steps starting at index ``first``."""
        if first < 0 or count < 1 or first + count > len(self):
            raise ParameterError(f"window [{first}, {first + count}) outside series of {len(self)}")
        return WeatherSeries(self.timestamp(first), self.step, self.temps[first:first + count])

    def to_csv_text(self):
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for i, t in enumerate(self.temps):
            buf.write(f"{self.timestamp(i).isoformat()},{_fmt(t)}\n")
        return buf.getvalue()


def write_weather_csv(series, path):
    Path(path).write_text(series.to_csv_text())


def load_weather_csv(path):
    """Read a ``timestamp_iso8601,tout_c`` file.

    Raises :class:`ParseError` (with the 1-based line number) on a malformed
    line and :class:`SchemaError` when the spacing between records changes.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise ParseError(f"header must be {','.join(CSV_HEADER)}", line=1)
    stamps, temps = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            stamps.append(datetime.fromisoformat(row[0].strip()))
        except ValueError:
            raise ParseError(f"bad timestamp {row[0]!r}", line=lineno) from None
        try:
            temps.append(float(row[1]))
        except ValueError:
            raise ParseError(f"bad temperature {row[1]!r}", line=lineno) from None
    if not stamps:
        raise SchemaError("weather file has no records")
    step = 600
    if len(stamps) > 1:
        step = (stamps[1] - stamps[0]).total_seconds()
        for k in range(2, len(stamps)):
            if (stamps[k] - stamps[k - 1]).total_seconds() != step:
                raise SchemaError(f"non-uniform step at line {k + 2}")
        if step != int(step):
            raise SchemaError(f"step {step} s is not a whole number of seconds")
    return WeatherSeries(stamps[0], int(step), np.array(temps))


def synth_weather(days, t_min, t_max, seed, *, start=DEFAULT_START, step=600,
                  diurnal_amplitude=5.0, noise_std=1.0):
    """Annual + diurnal sinusoids plus Gaussian noise, clipped to ``[t_min, t_max]``.

    The annual cycle has amplitude ``(t_max - t_min)/2 - diurnal_amplitude`` so
    that the noiseless daily extremes just reach the bounds; with the diurnal
    term switched off it spans the full range. The minimum falls on
    15 January and the daily minimum at 05:00.
    """
    if days < 1:
        raise ParameterError(f"days must be >= 1, got {days}")
    if not t_min < t_max:
        raise ParameterError(f"t_min ({t_min}) must be below t_max ({t_max})")
    n = int(days * 86400 // step)
    rng = np.random.default_rng(seed)
    proto = WeatherSeries(start, step, np.zeros(1))
    idx = np.arange(n)
    doy = proto.day_of_year(idx)
    hours = proto.seconds_of_day(idx) / 3600.0
    mean = 0.5 * (t_min + t_max)
    annual_amp = max(0.5 * (t_max - t_min) - diurnal_amplitude, 0.0)
    temps = (
        mean
        - annual_amp * np.cos(2 * math.pi * (doy - COLDEST_DAY) / 365.0)
        - diurnal_amplitude * np.cos(2 * math.pi * (hours - 5.0) / 24.0)
        + noise_std * rng.standard_normal(n)
    )
    return WeatherSeries(start, step, np.clip(temps, t_min, t_max))
