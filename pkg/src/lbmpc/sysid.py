"""Recursive least-squares identification of the single-zone thermal model.

The controller's prediction model is::

    T(t) = a * [T(t-1) + dt/C * (P(t-1) - U * (T(t-1) - T_out(t-1)))] + b(t)

With ``C`` known from the envelope lumping, it is linear in
``theta = [a, a*U*dt/C]`` for the regressor
``phi = [T(t-1) + dt/C * P(t-1), -(T(t-1) - T_out(t-1))]`` and output
``y = T(t) - b(t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IdentificationError, NumericalBreakdownError, ParameterError
from .plant import DT_SECONDS

A_BAND = (0.0, 1.05)
DEFAULT_LAMBDA = 0.99
DEFAULT_F0 = 1e6


@dataclass(frozen=True)
class ThermalModel:
    a: float
    U: float
    C: float
    dt: float = DT_SECONDS

    def __post_init__(self):
        lo, hi = A_BAND
        if not (lo < self.a <= hi):
            raise ParameterError(f"a={self.a} outside ({lo}, {hi}]")
        if not (self.U > 0 and math.isfinite(self.U)):
            raise ParameterError(f"U={self.U} must be positive")
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ParameterError(f"C={self.C} must be positive")

    @property
    def theta(self):
        return params_to_theta(self.a, self.U, self.C, self.dt)

    def to_dict(self, zone="", rms=float("nan"), lam=DEFAULT_LAMBDA):
        return {"zone": zone, "a": self.a, "U_w_per_k": self.U, "C_j_per_k": self.C,
                "dt_s": self.dt, "rms_c": rms, "lambda": lam}

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["a"]), float(doc["U_w_per_k"]), float(doc["C_j_per_k"]), float(doc["dt_s"]))


def regressor(t_in, t_in_prev, t_out_prev, p_prev, b, C, dt=DT_SECONDS):
    """Linear-in-parameters form ``(phi, y)``; broadcasts over arrays.

    For array inputs ``phi`` has shape (n, 2).
    """
    t_in_prev = np.asarray(t_in_prev, dtype=float)
    phi = np.stack([t_in_prev + dt / C * np.asarray(p_prev, dtype=float),
                    -(t_in_prev - np.asarray(t_out_prev, dtype=float))], axis=-1)
    y = np.asarray(t_in, dtype=float) - np.asarray(b, dtype=float)
    return phi, y


def params_to_theta(a, U, C, dt=DT_SECONDS):
    return np.array([a, a * U * dt / C])


def theta_to_params(theta, C, dt=DT_SECONDS):
    """Recover ``(a, U)``; fails when ``a`` is numerically zero."""
    a, g = float(theta[0]), float(theta[1])
    if abs(a) < 1e-12:
        raise IdentificationError("degenerate identification: a is zero", theta=np.array(theta))
    return a, g * C / (dt * a)


@dataclass
class RlsEstimator:
    theta: np.ndarray
    F: np.ndarray
    lam: float = DEFAULT_LAMBDA
    phi: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        self.F = np.asarray(self.F, dtype=float).copy()
        if not (0.9 < self.lam <= 1.0):
            raise ParameterError(f"forgetting factor {self.lam} outside (0.9, 1]")
        if self.F.shape != (self.theta.size, self.theta.size):
            raise ParameterError("gain matrix shape does not match the parameter vector")

    @classmethod
    def start(cls, n_params=2, lam=DEFAULT_LAMBDA, f0_scale=DEFAULT_F0, theta0=None):
        theta0 = np.zeros(n_params) if theta0 is None else theta0
        return cls(theta0, f0_scale * np.eye(n_params), lam)

    def update(self, phi, y):
        """In-place form of :func:`rls_update`; returns the a-priori error."""
        phi = np.asarray(phi, dtype=float)
        Fphi = self.F @ phi
        denom = self.lam + phi @ Fphi
        if not denom > 0:
            raise NumericalBreakdownError(f"RLS denominator {denom} is not positive")
        F_new = (self.F - np.outer(Fphi, Fphi) / denom) / self.lam
        F_new = 0.5 * (F_new + F_new.T)
        err = float(y - self.theta @ phi)
        # F_new @ phi == Fphi / denom exactly; the right side avoids the
        # cancellation inside F_new and keeps the estimate accurate to ~1e-10
        self.theta = self.theta + Fphi * (err / denom)
        self.F = F_new
        self.phi = phi
        return err


def rls_update(est, phi, y):
    """One RLS step with forgetting, returning a new estimator.

    ``F' = (F - F phi phi^T F / (lam + phi^T F phi)) / lam``,
    ``e = y - theta^T phi``, ``theta' = theta + F' phi e``.
    """
    new = RlsEstimator(est.theta, est.F, est.lam, est.phi)
    new.update(phi, y)
    return new


def batch_least_squares(Phi, y):
    """Ordinary least squares via an orthogonal factorization."""
    return np.linalg.lstsq(np.asarray(Phi, dtype=float), np.asarray(y, dtype=float), rcond=None)[0]


def identify_series(t_in, t_out, power, b, C, dt=DT_SECONDS, lam=DEFAULT_LAMBDA, f0_scale=DEFAULT_F0):
    """Stream RLS over one zone's record.

    ``t_in[k]``, ``t_out[k]`` and ``power[k]`` are sampled at step ``k``;
    ``b[k]`` is the occupancy offset acting over step ``k -> k+1``.

    Returns the identified model and the one-step-ahead RMS error of the final
    parameters over the whole record.
    """
    t_in = np.asarray(t_in, dtype=float)
    if t_in.size < 100:
        raise ParameterError(f"identification needs >= 100 steps, got {t_in.size}")
    Phi, y = regressor(t_in[1:], t_in[:-1], np.asarray(t_out)[:-1], np.asarray(power)[:-1],
                       np.asarray(b)[:-1], C, dt)
    est = RlsEstimator.start(2, lam, f0_scale)
    for phi_k, y_k in zip(Phi, y):
        est.update(phi_k, y_k)
    theta = est.theta
    a, U = theta_to_params(theta, C, dt)
    lo, hi = A_BAND
    if not (lo < a <= hi) or not U > 0 or not math.isfinite(U):
        raise IdentificationError(f"identified a={a:.6g}, U={U:.6g} outside sanity bands", theta=theta)
    rms = float(np.sqrt(np.mean((y - Phi @ theta) ** 2)))
    return ThermalModel(a, U, C, dt), rms


def identify(log, zone, C, lam=DEFAULT_LAMBDA, f0_scale=DEFAULT_F0):
    """Identify one zone of a :class:`~lbmpc.log.ScenarioLog`.

    ``zone`` is a zone index or name; occupancy offsets use 100 W/person.
    """
    z = log.zone_index(zone)
    b = log.occ_true[:, z] * log.watts_per_person * log.dt / C
    return identify_series(log.t_in[:, z], log.t_out, log.p[:, z], b, C, log.dt, lam, f0_scale)


def save_models(entries, path):
    """Write identified models; ``entries`` is a list of ``to_dict`` documents."""
    doc = entries[0] if len(entries) == 1 else entries
    Path(path).write_text(json.dumps(doc, indent=1))
