"""Prescribed performance envelopes, the log-barrier state penalty and the
stage cost used by the critic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence, Union

import numpy as np


class ConstraintViolation(ArithmeticError):
    """An error or reference component left the interior of its barrier.

    Attributes
    ----------
    kind : {"error", "reference"}
    index : int
        Offending component (0-based).
    margin : float
        Normalised magnitude ``|z| / bound``; ``>= 1`` means outside.
    t : float
    """

    def __init__(self, kind: str, index: int, margin: float, t: float):
        self.kind = kind
        self.index = index
        self.margin = margin
        self.t = t
        super().__init__(
            f"{kind} component {index} outside barrier at t={t:.6g} (margin={margin:.6g})"
        )


@dataclass(frozen=True)
class PpfSpec:
    """Exponential envelope ``rho(t) = (rho0 - rho_inf) exp(-l t) + rho_inf``."""

    rho0: float
    rho_inf: float
    l: float
    alpha: float

    def __post_init__(self):
        if not (self.rho0 > self.rho_inf > 0):
            raise ValueError("PPF requires rho0 > rho_inf > 0")
        if not self.l > 0:
            raise ValueError("PPF decay rate l must be > 0")
        if not self.alpha > 0:
            raise ValueError("PPF scale alpha must be > 0")


def ppf_eval(spec: PpfSpec, t: float) -> float:
    if t < 0:
        raise ValueError(f"PPF evaluated at negative time {t}")
    return (spec.rho0 - spec.rho_inf) * np.exp(-spec.l * t) + spec.rho_inf


@dataclass(frozen=True)
class PenaltySpec:
    """Per-component barrier weights.

    ``ref_normalization="unscaled"`` uses ``delta_i = x_r,i``; ``"ppf-scaled"``
    divides by ``rho_i(t)`` like the error terms do.
    """

    k: tuple[float, ...]
    ppf: tuple[PpfSpec, ...]
    h: tuple[float, ...]
    beta: tuple[float, ...]
    ref_normalization: Literal["unscaled", "ppf-scaled"] = "unscaled"

    def __post_init__(self):
        n = len(self.k)
        if not (len(self.ppf) == len(self.h) == len(self.beta) == n):
            raise ValueError("penalty spec fields must all have the same length")
        if any(v < 0 for v in self.k) or any(v < 0 for v in self.h):
            raise ValueError("risk weights k, h must be >= 0")
        if any(not v > 0 for v in self.beta):
            raise ValueError("reference bounds beta must be > 0")
        if self.ref_normalization not in ("unscaled", "ppf-scaled"):
            raise ValueError(f"unknown ref_normalization {self.ref_normalization!r}")
        arrays = {
            "_rho0": [p.rho0 for p in self.ppf],
            "_rho_inf": [p.rho_inf for p in self.ppf],
            "_l": [p.l for p in self.ppf],
            "_alpha": [p.alpha for p in self.ppf],
            "_k": self.k,
            "_h": self.h,
            "_beta": self.beta,
        }
        for name, v in arrays.items():
            object.__setattr__(self, name, np.array(v, dtype=float))

    @property
    def n(self) -> int:
        return len(self.k)

    def rho(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"PPF evaluated at negative time {t}")
        return (self._rho0 - self._rho_inf) * np.exp(-self._l * t) + self._rho_inf

    @property
    def alpha(self) -> np.ndarray:
        return self._alpha


def _log_barrier(z, bound, weight, kind, t):
    margin = np.abs(z) / bound
    if not np.all(margin < 1.0):
        i = int(np.flatnonzero(~(margin < 1.0))[0])
        raise ConstraintViolation(kind, i, float(margin[i]), t)
    # log(b^2 / (b^2 - z^2)) = -log1p(-(z/b)^2)
    return -np.dot(weight, np.log1p(-(margin**2)))


def penalty(spec: PenaltySpec, e, x_r, t: float) -> float:
    rho = spec.rho(t)
    e = np.asarray(e, dtype=float)
    x_r = np.asarray(x_r, dtype=float)
    p = _log_barrier(e / rho, spec._alpha, spec._k, "error", t)
    delta = x_r / rho if spec.ref_normalization == "ppf-scaled" else x_r
    p += _log_barrier(delta, spec._beta, spec._h, "reference", t)
    return float(p)


def constraint_margin(spec: PenaltySpec, e, t: float) -> np.ndarray:
    """``|e_i| / (alpha_i rho_i(t))``; values below 1 satisfy the envelope."""
    return np.abs(np.asarray(e, dtype=float)) / (spec.alpha * spec.rho(t))


@dataclass(frozen=True, eq=False)
class Quadratic:
    Q: np.ndarray


@dataclass(frozen=True)
class RiskSensitive:
    penalty: PenaltySpec


def _as_matrix(a, name) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(a, a.T):
        raise ValueError(f"{name} must be symmetric")
    return a


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Stage cost ``state_cost + mu^T R mu``."""

    variant: Union[Quadratic, RiskSensitive]
    R: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        R = _as_matrix(self.R, "R")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "R_inv", np.linalg.inv(R))
        if isinstance(self.variant, Quadratic):
            Q = _as_matrix(self.variant.Q, "Q")
            if np.linalg.eigvalsh(Q).min() < -1e-12:
                raise ValueError("Q must be positive semidefinite")
            object.__setattr__(self, "variant", Quadratic(Q))

    @property
    def risk_sensitive(self) -> bool:
        return isinstance(self.variant, RiskSensitive)

    def state_cost(self, e, x_r, t: float) -> float:
        if isinstance(self.variant, Quadratic):
            e = np.asarray(e, dtype=float)
            return float(e @ self.variant.Q @ e)
        return penalty(self.variant.penalty, e, x_r, t)


def utility(cost: CostSpec, e, x_r, mu, t: float) -> float:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return cost.state_cost(e, x_r, t) + float(mu @ cost.R @ mu)


def diag_ppf(rho0: float, rho_inf: float, l: float, alphas: Sequence[float]) -> tuple[PpfSpec, ...]:
    return tuple(PpfSpec(rho0, rho_inf, l, a) for a in alphas)
