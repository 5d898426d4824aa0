"""Receding-horizon temperature controller for one zone.

The plan ``P(0..N-1)`` minimizes::

    sum_k Q (T(k) - T_d)^2 + sum_k R (P(k) - P(k-1))^2
        + W_s sum_k [(T(k) - T_max)_+^2 + (T_min - T(k))_+^2]

over the power box ``[P_min, P_max]``, with ``P(-1)`` the last applied input
and ``T(1..N)`` rolled out by the identified single-zone model. The
prediction is affine in the plan, ``T = M P + v``, so the problem is a convex
piecewise-quadratic program on a box. It is solved by projected gradient
with an exact line search along the feasible steepest-descent direction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ConfigError, ParameterError

MODES = ("learning", "conventional")
STATUS = ("optimal", "max_iter", "infeasible_softened")
PG_TOL = 1e-6
PG_MAX_ITER = 5000


@dataclass(frozen=True)
class MpcConfig:
    n_horizon: int = 6
    q: float = 1.0
    r: float = 1e-7
    t_d: float = 22.5
    t_min: float = 20.0
    t_max: float = 25.0
    p_min: float = -5000.0
    p_max: float = 10000.0
    soft_weight: float = None
    mode: str = "learning"

    def __post_init__(self):
        if self.soft_weight is None:
            object.__setattr__(self, "soft_weight", 100.0 * self.q)
        if int(self.n_horizon) != self.n_horizon or self.n_horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.n_horizon}")
        if not self.q > 0:
            raise ConfigError("q must be positive")
        if not self.r >= 0:
            raise ConfigError("r must be nonnegative")
        if not self.soft_weight >= 0:
            raise ConfigError("soft_weight must be nonnegative")
        if not (self.t_min < self.t_d < self.t_max):
            raise ConfigError(f"need t_min < t_d < t_max, got {self.t_min}, {self.t_d}, {self.t_max}")
        if not self.p_min < self.p_max:
            raise ConfigError(f"need p_min < p_max, got {self.p_min}, {self.p_max}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    _KEYS = {"n_horizon": "n_horizon", "q": "q", "r": "r", "t_d_c": "t_d", "t_min_c": "t_min",
             "t_max_c": "t_max", "p_min_w": "p_min", "p_max_w": "p_max", "soft_weight": "soft_weight",
             "mode": "mode"}

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown controller fields {sorted(unknown)}")
        try:
            kwargs = {cls._KEYS[k]: v for k, v in doc.items()}
            if "n_horizon" in kwargs:
                kwargs["n_horizon"] = int(kwargs["n_horizon"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        mine = asdict(self)
        return {k: mine[v] for k, v in self._KEYS.items()}


@dataclass
class MpcSolution:
    powers: np.ndarray
    predicted_temps: np.ndarray
    cost: float
    solver_status: str
    iterations: int = 0
    kkt_residual: float = 0.0
    objective_trace: np.ndarray = None


def _recursion_coeffs(model):
    """T(k) = alpha T(k-1) + beta P(k-1) + gamma T_out(k-1) + b(k)."""
    c = model.dt / model.C
    return model.a * (1.0 - c * model.U), model.a * c, model.a * c * model.U


def predict_trajectory(model, t_in0, powers, t_out_future, b_future):
    """Roll the single-zone model forward; returns ``T(1..N)``."""
    powers = np.asarray(powers, dtype=float)
    t_out_future = np.asarray(t_out_future, dtype=float)
    b_future = np.asarray(b_future, dtype=float)
    if not (powers.shape == t_out_future.shape == b_future.shape) or powers.ndim != 1:
        raise ParameterError("powers, T_out and b previews must be equal-length vectors")
    k_rate = model.dt / model.C
    out = np.empty(powers.size)
    t = float(t_in0)
    for k in range(powers.size):
        t = model.a * (t + k_rate * (powers[k] - model.U * (t - t_out_future[k]))) + b_future[k]
        out[k] = t
    return out


def prediction_matrices(model, t_in0, t_out_future, b_future):
    """``M`` and ``v`` with ``predict_trajectory(...) == M @ P + v``."""
    alpha, beta, gamma = _recursion_coeffs(model)
    t_out_future = np.asarray(t_out_future, dtype=float)
    b_future = np.asarray(b_future, dtype=float)
    n = t_out_future.size
    powers_of_alpha = alpha ** np.arange(n)
    M = np.zeros((n, n))
    for k in range(n):
        M[k, :k + 1] = beta * powers_of_alpha[k::-1]
    v = np.empty(n)
    t = float(t_in0)
    for k in range(n):
        t = alpha * t + gamma * t_out_future[k] + b_future[k]
        v[k] = t
    return M, v


def mpc_cost(predicted_temps, powers, p_prev, cfg):
    """Tracking plus move-suppression cost (no comfort penalty)."""
    predicted_temps = np.asarray(predicted_temps, dtype=float)
    powers = np.asarray(powers, dtype=float)
    dp = np.diff(np.concatenate([[p_prev], powers]))
    return float(cfg.q * np.sum((predicted_temps - cfg.t_d) ** 2) + cfg.r * np.sum(dp ** 2))


def comfort_penalty(predicted_temps, cfg):
    t = np.asarray(predicted_temps, dtype=float)
    over = np.maximum(t - cfg.t_max, 0.0)
    under = np.maximum(cfg.t_min - t, 0.0)
    return float(cfg.soft_weight * np.sum(over ** 2 + under ** 2))


def objective(predicted_temps, powers, p_prev, cfg):
    """Full objective minimized by :func:`solve_mpc`."""
    return mpc_cost(predicted_temps, powers, p_prev, cfg) + comfort_penalty(predicted_temps, cfg)


# --------------------------------------------------------------------------
# projected-gradient kernel, in scaled units u = P / scale


@numba.njit(cache=True)
def _eval(u, Mu, v, q, rs, ws, t_d, t_lo, t_hi, u_prev, T, g):
    n = u.size
    for k in range(n):
        acc = v[k]
        for j in range(k + 1):
            acc += Mu[k, j] * u[j]
        T[k] = acc
    f = 0.0
    # dT part of the gradient: w_k = dJ/dT_k
    w = np.empty(n)
    for k in range(n):
        e = T[k] - t_d
        f += q * e * e
        w[k] = 2.0 * q * e
        if T[k] > t_hi:
            s = T[k] - t_hi
            f += ws * s * s
            w[k] += 2.0 * ws * s
        elif T[k] < t_lo:
            s = t_lo - T[k]
            f += ws * s * s
            w[k] -= 2.0 * ws * s
    for j in range(n):
        acc = 0.0
        for k in range(j, n):
            acc += Mu[k, j] * w[k]
        g[j] = acc
    prev = u_prev
    for j in range(n):
        du = u[j] - prev
        f += rs * du * du
        g[j] += 2.0 * rs * du
        if j > 0:
            g[j - 1] -= 2.0 * rs * du
        prev = u[j]
    return f


@numba.njit(cache=True)
def _dphi(alpha, T, m, dd, r0, q, rs, ws, t_d, t_lo, t_hi):
    """Directional derivative of the objective at u + alpha d."""
    n = T.size
    s = 0.0
    for k in range(n):
        tk = T[k] + alpha * m[k]
        s += 2.0 * q * (tk - t_d) * m[k]
        if tk > t_hi:
            s += 2.0 * ws * (tk - t_hi) * m[k]
        elif tk < t_lo:
            s -= 2.0 * ws * (t_lo - tk) * m[k]
        s += 2.0 * rs * (r0[k] + alpha * dd[k]) * dd[k]
    return s


@numba.njit(cache=True)
def _pg_solve(Mu, v, q, rs, ws, t_d, t_lo, t_hi, u_prev, lo, hi, u0, tol, max_iter, trace):
    n = u0.size
    u = u0.copy()
    for j in range(n):
        u[j] = min(max(u[j], lo), hi)
    T = np.empty(n)
    g = np.empty(n)
    d = np.empty(n)
    m = np.empty(n)
    dd = np.empty(n)
    r0 = np.empty(n)
    bps = np.empty(2 * n + 1)
    f = _eval(u, Mu, v, q, rs, ws, t_d, t_lo, t_hi, u_prev, T, g)
    it = 0
    if trace.size > 0:
        trace[0] = f
    res = 0.0
    while True:
        res = 0.0
        for j in range(n):
            pj = u[j] - min(max(u[j] - g[j], lo), hi)
            res += pj * pj
        res = math.sqrt(res)
        if res < tol or it >= max_iter:
            break
        it += 1
        # feasible steepest-descent direction
        a_max = np.inf
        nonzero = False
        for j in range(n):
            dj = -g[j]
            if (u[j] <= lo and dj < 0.0) or (u[j] >= hi and dj > 0.0):
                dj = 0.0
            d[j] = dj
            if dj > 0.0:
                a_max = min(a_max, (hi - u[j]) / dj)
                nonzero = True
            elif dj < 0.0:
                a_max = min(a_max, (lo - u[j]) / dj)
                nonzero = True
        if not nonzero:
            break
        for k in range(n):
            acc = 0.0
            for j in range(k + 1):
                acc += Mu[k, j] * d[j]
            m[k] = acc
        prev_u = u_prev
        prev_d = 0.0
        for k in range(n):
            r0[k] = u[k] - prev_u
            dd[k] = d[k] - prev_d
            prev_u = u[k]
            prev_d = d[k]
        # breakpoints of the piecewise-quadratic line function
        nb = 0
        for k in range(n):
            if m[k] != 0.0:
                for bound in (t_lo, t_hi):
                    a = (bound - T[k]) / m[k]
                    if a > 0.0 and a < a_max:
                        bps[nb] = a
                        nb += 1
        bps[nb] = a_max
        nb += 1
        bps[:nb].sort()
        a_lo = 0.0
        s_lo = _dphi(0.0, T, m, dd, r0, q, rs, ws, t_d, t_lo, t_hi)
        step = a_max
        for i in range(nb):
            a_hi = bps[i]
            if not np.isfinite(a_hi):
                # unbounded ray: the objective is quadratic beyond the last breakpoint
                s_far = _dphi(a_lo + 1.0, T, m, dd, r0, q, rs, ws, t_d, t_lo, t_hi)
                slope = s_far - s_lo
                step = a_lo - s_lo / slope if slope > 0.0 else a_lo
                break
            s_hi = _dphi(a_hi, T, m, dd, r0, q, rs, ws, t_d, t_lo, t_hi)
            if s_hi >= 0.0:
                if s_hi - s_lo > 0.0:
                    step = a_lo - s_lo * (a_hi - a_lo) / (s_hi - s_lo)
                else:
                    step = a_lo
                break
            a_lo = a_hi
            s_lo = s_hi
        if step <= 0.0:
            break
        for j in range(n):
            uj = u[j] + step * d[j]
            if step >= a_max and d[j] != 0.0:
                # land exactly on the bound that limited the step
                if abs(uj - hi) < 1e-12:
                    uj = hi
                elif abs(uj - lo) < 1e-12:
                    uj = lo
            u[j] = min(max(uj, lo), hi)
        f = _eval(u, Mu, v, q, rs, ws, t_d, t_lo, t_hi, u_prev, T, g)
        if trace.size > it:
            trace[it] = f
    return u, f, it, res


def solve_mpc(model, cfg, t_in0, p_prev, t_out_future, b_future, warm_start=None,
              tol=PG_TOL, max_iter=PG_MAX_ITER, record_trace=False):
    """Optimal power plan over the preview horizon.

    The previews set the horizon length. ``tol`` bounds the norm of the
    projected gradient with respect to the plan scaled by
    ``max(|P_min|, |P_max|)``. With ``record_trace`` the objective after
    every iteration (scaled units) is kept in ``objective_trace``.
    """
    for name in ("a", "U", "C", "dt"):
        if not math.isfinite(getattr(model, name)):
            raise ParameterError(f"model parameter {name} is not finite")
    t_out_future = np.asarray(t_out_future, dtype=float)
    b_future = np.asarray(b_future, dtype=float)
    n = t_out_future.size
    if n < 1 or b_future.size != n:
        raise ParameterError("previews must be nonempty and of equal length")
    M, v = prediction_matrices(model, t_in0, t_out_future, b_future)
    trace = np.full(max_iter + 1, np.nan) if record_trace else np.empty(0)
    scale = max(abs(cfg.p_min), abs(cfg.p_max))
    if warm_start is None:
        u0 = np.full(n, float(p_prev) / scale)
    else:
        u0 = np.asarray(warm_start, dtype=float) / scale
    u, _, iters, res = _pg_solve(M * scale, v, cfg.q, cfg.r * scale * scale, cfg.soft_weight, cfg.t_d,
                                 cfg.t_min, cfg.t_max, float(p_prev) / scale, cfg.p_min / scale,
                                 cfg.p_max / scale, u0, tol, max_iter, trace)
    powers = np.clip(u * scale, cfg.p_min, cfg.p_max)
    temps = M @ powers + v
    cost = objective(temps, powers, p_prev, cfg)
    if res >= tol:
        status = "max_iter"
    elif np.any(temps > cfg.t_max + 1e-9) or np.any(temps < cfg.t_min - 1e-9):
        status = "infeasible_softened"
    else:
        status = "optimal"
    return MpcSolution(powers, temps, cost, status, int(iters), float(res),
                       trace[:iters + 1].copy() if record_trace else None)


# --------------------------------------------------------------------------
# receding horizon


@dataclass
class ZoneController:
    """State carried between steps by one zone's controller.

    ``b_bar`` is the constant occupancy offset used in conventional mode.
    """

    model: object
    cfg: MpcConfig
    b_bar: float = 0.0
    p_prev: float = 0.0
    last_plan: np.ndarray = field(default=None)
    last_solution: MpcSolution = field(default=None)

    def warm_start(self, n):
        if self.last_plan is None:
            return None
        plan = np.concatenate([self.last_plan[1:], self.last_plan[-1:]])
        if plan.size >= n:
            return plan[:n]
        return np.concatenate([plan, np.full(n - plan.size, plan[-1])])


def receding_horizon_step(ctrl, t_in, t_out_future, b_forecast=None):
    """Solve at the current state and return the first planned input.

    In learning mode ``b_forecast`` (per-step temperature offsets from the
    occupancy forecast) is required; conventional mode uses ``ctrl.b_bar``
    at every step. Short previews truncate the horizon (minimum one step).
    """
    t_out_future = np.asarray(t_out_future, dtype=float)
    n = min(ctrl.cfg.n_horizon, t_out_future.size)
    if n < 1:
        raise ParameterError("no weather preview available")
    if ctrl.cfg.mode == "learning":
        if b_forecast is None:
            raise ParameterError("learning mode needs an occupancy forecast")
        b = np.asarray(b_forecast, dtype=float)[:n]
        n = min(n, b.size)
        if n < 1:
            raise ParameterError("empty occupancy forecast")
    else:
        b = np.full(n, ctrl.b_bar)
    sol = solve_mpc(ctrl.model, ctrl.cfg, t_in, ctrl.p_prev, t_out_future[:n], b[:n],
                    warm_start=ctrl.warm_start(n))
    ctrl.last_plan = sol.powers
    ctrl.last_solution = sol
    ctrl.p_prev = float(sol.powers[0])
    return ctrl.p_prev
