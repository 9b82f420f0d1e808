"""Fixed-step RK4 integration of plant, reference and critic weights."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .critic import BasisSpec, CriticState, weight_derivative
from .dynamics import PlantModel, ReferenceModel
from .performance import ConstraintViolation, CostSpec, PenaltySpec, constraint_margin, utility

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e8


class DivergenceError(FloatingPointError):
    def __init__(self, t: float, what: str):
        self.t = t
        super().__init__(f"non-finite or exploding {what} at t={t:.6g}")


class EpisodeAborted(RuntimeError):
    """Raised by :func:`run_scenario`; ``log`` holds every row written so far."""

    def __init__(self, cause: Exception, log: "TrajectoryLog"):
        self.cause = cause
        self.log = log
        super().__init__(f"episode aborted: {cause}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 80.0
    record_dt: float = 0.01
    buffer_dt: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        for name in ("record_dt", "buffer_dt"):
            v = getattr(self, name)
            k = round(v / self.dt)
            if k < 1 or abs(k * self.dt - v) > 1e-9 * max(1.0, v):
                raise ValueError(f"{name}={v} must be a positive integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.t_end / self.dt + 1e-9))

    @property
    def record_every(self) -> int:
        return round(self.record_dt / self.dt)

    @property
    def buffer_every(self) -> int:
        return round(self.buffer_dt / self.dt)


@dataclass(frozen=True)
class Models:
    plant: PlantModel
    reference: ReferenceModel


@dataclass
class ClosedLoopState:
    t: float
    x: np.ndarray
    x_r: np.ndarray
    critic: CriticState

    @property
    def W_hat(self) -> np.ndarray:
        return self.critic.W_hat

    @property
    def buffer(self):
        return self.critic.buffer


@dataclass
class StageEval:
    """Everything evaluated at one (t, x, x_r, W) point."""

    x_dot: np.ndarray
    x_r_dot: np.ndarray
    W_dot: np.ndarray
    e: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    Y: np.ndarray
    theta: float


def evaluate(t, x, x_r, W, models: Models, cost: CostSpec, spec: BasisSpec,
             critic: CriticState) -> StageEval:
    plant, ref = models.plant, models.reference
    e = x - x_r
    eta = np.concatenate((e, x_r))
    y = ref.flow(x_r)
    nu = plant.g_pinv(x_r) @ (y - plant.drift_and_input(x_r)[0])
    f_x, g_x = plant.drift_and_input(x)
    dphi = spec.grad(eta)
    dV = dphi.T @ W
    # G = [g(x); 0] so G^T dV only sees the error block
    mu = -0.5 * cost.R_inv @ (g_x.T @ dV[: plant.n])
    x_dot = f_x + g_x @ (mu + nu)
    Y = dphi @ np.concatenate((x_dot - y, y))
    theta = utility(cost, e, x_r, mu, t)
    W_dot = weight_derivative(critic, Y, theta, W=W)
    return StageEval(x_dot, y, W_dot, e, mu, nu, Y, theta)


def coupled_derivative(state: ClosedLoopState, models: Models, cost: CostSpec,
                       spec: BasisSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time derivatives of ``(x, x_r, W)`` with the buffer held fixed."""
    ev = evaluate(state.t, state.x, state.x_r, state.W_hat, models, cost, spec, state.critic)
    return ev.x_dot, ev.x_r_dot, ev.W_dot


def rk4_step(state: ClosedLoopState, models: Models, cost: CostSpec, spec: BasisSpec,
             dt: float) -> ClosedLoopState:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    t, x, xr, W, c = state.t, state.x, state.x_r, state.W_hat, state.critic

    def f(tt, xx, rr, ww):
        ev = evaluate(tt, xx, rr, ww, models, cost, spec, c)
        return ev.x_dot, ev.x_r_dot, ev.W_dot

    h2 = 0.5 * dt
    a1, b1, c1 = f(t, x, xr, W)
    a2, b2, c2 = f(t + h2, x + h2 * a1, xr + h2 * b1, W + h2 * c1)
    a3, b3, c3 = f(t + h2, x + h2 * a2, xr + h2 * b2, W + h2 * c2)
    a4, b4, c4 = f(t + dt, x + dt * a3, xr + dt * b3, W + dt * c3)
    s = dt / 6.0
    x_new = x + s * (a1 + 2 * a2 + 2 * a3 + a4)
    xr_new = xr + s * (b1 + 2 * b2 + 2 * b3 + b4)
    W_new = W + s * (c1 + 2 * c2 + 2 * c3 + c4)
    t_new = t + dt
    for what, v in (("plant state", x_new), ("reference", xr_new), ("critic weights", W_new)):
        if not np.all(np.isfinite(v)) or np.max(np.abs(v), initial=0.0) > DIVERGENCE_LIMIT:
            raise DivergenceError(t_new, what)
    return ClosedLoopState(t_new, x_new, xr_new, c.with_weights(W_new))


class TrajectoryLog:
    """Row-major record of a closed-loop episode.

    Columns: ``t, x_1..x_n, xr_1..xr_n, e_1..e_n, u_1..u_m, mu_1..mu_m,
    nu_1..nu_m, W_1..W_N, margin_1..margin_n, utility, min_sv``.
    """

    def __init__(self, n: int, m: int, N: int):
        self.n, self.m, self.N = n, m, N
        self.columns = self.column_names(n, m, N)
        self._rows: list[np.ndarray] = []
        self._data: np.ndarray | None = None

    @staticmethod
    def column_names(n, m, N) -> list[str]:
        def block(p, k):
            return [f"{p}_{i}" for i in range(1, k + 1)]

        return (["t"] + block("x", n) + block("xr", n) + block("e", n) + block("u", m)
                + block("mu", m) + block("nu", m) + block("W", N) + block("margin", n)
                + ["utility", "min_sv"])

    @classmethod
    def from_array(cls, n, m, N, data) -> "TrajectoryLog":
        out = cls(n, m, N)
        data = np.asarray(data, dtype=float).reshape(-1, len(out.columns))
        out._rows = list(data)
        return out

    def append(self, row: np.ndarray):
        row = np.asarray(row, dtype=float)
        if row.shape != (len(self.columns),):
            raise ValueError(f"row width {row.shape} != {len(self.columns)}")
        if self._rows and not row[0] > self._rows[-1][0]:
            raise ValueError("log times must be strictly increasing")
        self._rows.append(row)
        self._data = None

    def __len__(self):
        return len(self._rows)

    @property
    def data(self) -> np.ndarray:
        if self._data is None:
            self._data = (np.array(self._rows) if self._rows
                          else np.zeros((0, len(self.columns))))
        return self._data

    def _slice(self, prefix, k):
        i = self.columns.index(f"{prefix}_1")
        return self.data[:, i:i + k]

    @property
    def t(self):
        return self.data[:, 0]

    @property
    def x(self):
        return self._slice("x", self.n)

    @property
    def x_r(self):
        return self._slice("xr", self.n)

    @property
    def e(self):
        return self._slice("e", self.n)

    @property
    def u(self):
        return self._slice("u", self.m)

    @property
    def mu(self):
        return self._slice("mu", self.m)

    @property
    def W(self):
        return self._slice("W", self.N)

    @property
    def margins(self):
        return self._slice("margin", self.n)

    @property
    def utility(self):
        return self.data[:, -2]

    @property
    def min_sv(self):
        return self.data[:, -1]


def _row(state: ClosedLoopState, ev: StageEval, monitor: PenaltySpec | None) -> np.ndarray:
    if monitor is not None:
        margins = constraint_margin(monitor, ev.e, state.t)
    else:
        margins = np.full(ev.e.size, np.nan)
    return np.concatenate((
        [state.t], state.x, state.x_r, ev.e, ev.mu + ev.nu, ev.mu, ev.nu, state.W_hat,
        margins, [ev.theta, state.buffer.min_sv],
    ))


def run_scenario(config: SimConfig, models: Models, cost: CostSpec, spec: BasisSpec,
                 x0, critic: CriticState, monitor: PenaltySpec | None = None) -> TrajectoryLog:
    """Integrate one episode from ``x0`` and ``critic.W_hat``.

    The critic (weights and buffer) is updated in place as the episode runs.
    Buffer candidates are offered every ``buffer_dt`` and rows logged every
    ``record_dt``, both at step boundaries. ``monitor`` supplies the
    envelopes for the margin columns; it defaults to the risk-sensitive
    penalty when the cost has one.

    Raises
    ------
    EpisodeAborted
        On a barrier violation or divergence; carries the partial log.
    """
    if monitor is None and cost.risk_sensitive:
        monitor = cost.variant.penalty
    plant = models.plant
    trajectory = TrajectoryLog(plant.n, plant.m, spec.N)
    state = ClosedLoopState(0.0, np.asarray(x0, dtype=float).copy(),
                            np.asarray(models.reference.x_r0, dtype=float).copy(), critic)
    if cost.risk_sensitive:
        margins = constraint_margin(cost.variant.penalty, state.x - state.x_r, 0.0)
        if np.any(margins >= 1.0):
            raise ValueError(f"infeasible initial error, margins={margins}")
    rec, buf_every = config.record_every, config.buffer_every
    k = 0
    try:
        while True:
            state.t = k * config.dt
            if k % rec == 0 or k % buf_every == 0:
                ev = evaluate(state.t, state.x, state.x_r, state.W_hat, models, cost, spec,
                              state.critic)
                if k % buf_every == 0:
                    state.buffer.record(ev.Y, ev.theta)
                if k % rec == 0:
                    trajectory.append(_row(state, ev, monitor))
            if k >= config.n_steps:
                break
            state = rk4_step(state, models, cost, spec, config.dt)
            k += 1
    except (ConstraintViolation, DivergenceError) as exc:
        log.warning("episode aborted at t=%.4f: %s", state.t, exc)
        critic.W_hat = state.W_hat
        raise EpisodeAborted(exc, trajectory) from exc
    critic.W_hat = state.W_hat
    return trajectory
