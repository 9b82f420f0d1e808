"""Control-affine plants, the 2-DoF Euler-Lagrange manipulator and the
autonomous reference generator.

All vectors are 1-D numpy arrays of shape ``[n,]``; matrices are 2-D.
The manipulator state is ``x = [q1, q2, dq1, dq2]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Vector = np.ndarray
Matrix = np.ndarray


class InvalidParameters(ValueError):
    """Raised when model parameters make the plant ill-posed."""


@dataclass(frozen=True)
class PlantModel:
    """Control-affine system ``dx/dt = f(x) + g(x) u``.

    Attributes
    ----------
    n, m : int
        State and input dimensions.
    f : callable
        Drift, ``[n,] -> [n,]``. Must satisfy ``f(0) = 0``.
    g : callable
        Input map, ``[n,] -> [n, m]``.
    g_pinv : callable
        Left pseudo-inverse of ``g``, ``[n,] -> [m, n]``.
    """

    n: int
    m: int
    f: Callable[[Vector], Vector]
    g: Callable[[Vector], Matrix]
    g_pinv: Callable[[Vector], Matrix]
    f_and_g: Callable[[Vector], tuple[Vector, Matrix]] | None = None

    def rhs(self, x: Vector, u: Vector) -> Vector:
        return self.f(x) + self.g(x) @ u

    def drift_and_input(self, x: Vector) -> tuple[Vector, Matrix]:
        """``(f(x), g(x))``, sharing work when the plant supports it."""
        if self.f_and_g is not None:
            return self.f_and_g(x)
        return self.f(x), self.g(x)


@dataclass(frozen=True)
class ManipulatorParams:
    """Inertia (``p1..p3``), static (``fs``) and viscous (``fd``) friction
    coefficients. Numeric values come from the scenario presets."""

    p1: float
    p2: float
    p3: float
    fs1: float
    fs2: float
    fd1: float
    fd2: float

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "fs1", "fs2", "fd1", "fd2"):
            if not getattr(self, name) > 0:
                raise InvalidParameters(f"manipulator parameter {name} must be > 0")
        # det M = p2*(p1 - p2) - p3^2 cos^2 q2 must stay positive for every q2
        if self.p2 * (self.p1 - self.p2) - self.p3**2 <= 0:
            raise InvalidParameters("mass matrix is not positive definite for all q2")


def mass_matrix(params: ManipulatorParams, q: Vector) -> Matrix:
    c2 = np.cos(q[1])
    m12 = params.p2 + params.p3 * c2
    return np.array([[params.p1 + 2.0 * params.p3 * c2, m12], [m12, params.p2]])


def coriolis_matrix(params: ManipulatorParams, q: Vector, qdot: Vector) -> Matrix:
    s2 = params.p3 * np.sin(q[1])
    return np.array(
        [[-s2 * qdot[1], -s2 * (qdot[0] + qdot[1])], [s2 * qdot[0], 0.0]]
    )


def friction_torque(params: ManipulatorParams, qdot: Vector) -> Vector:
    """Viscous plus smoothed Coulomb friction, ``F_d qdot + F_s(qdot)``."""
    return np.array(
        [
            params.fd1 * qdot[0] + params.fs1 * np.tanh(qdot[0]),
            params.fd2 * qdot[1] + params.fs2 * np.tanh(qdot[1]),
        ]
    )


def _inv2(a: Matrix) -> Matrix:
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if not abs(det) > 1e-12:
        raise InvalidParameters(f"singular mass matrix (det={det:g})")
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det


def manipulator_f(params: ManipulatorParams, x: Vector) -> Vector:
    """Drift of the manipulator: ``[dq, M^-1 (-C dq - F_d dq - F_s)]``.

    Static friction enters before the inverse inertia, consistent with
    ``M ddq + C dq + F_d dq + F_s = tau``.
    """
    q, qd = x[:2], x[2:]
    rhs = -coriolis_matrix(params, q, qd) @ qd - friction_torque(params, qd)
    return np.concatenate((qd, _inv2(mass_matrix(params, q)) @ rhs))


def manipulator_g(params: ManipulatorParams, x: Vector) -> Matrix:
    out = np.zeros((4, 2))
    out[2:, :] = _inv2(mass_matrix(params, x[:2]))
    return out


def manipulator_g_pinv(params: ManipulatorParams, x: Vector) -> Matrix:
    # (g^T g)^-1 g^T collapses to [0 | M] because the lower block of g is M^-1
    c2 = math.cos(float(x[1]))
    m12 = params.p2 + params.p3 * c2
    return np.array([[0.0, 0.0, params.p1 + 2.0 * params.p3 * c2, m12],
                     [0.0, 0.0, m12, params.p2]])


def _manipulator_f_and_g(params: ManipulatorParams, x: Vector) -> tuple[Vector, Matrix]:
    # scalar arithmetic: this sits in the innermost integration loop
    q2, qd1, qd2 = float(x[1]), float(x[2]), float(x[3])
    c2, s2 = math.cos(q2), params.p3 * math.sin(q2)
    m11 = params.p1 + 2.0 * params.p3 * c2
    m12 = params.p2 + params.p3 * c2
    m22 = params.p2
    det = m11 * m22 - m12 * m12
    if not det > 1e-12:
        raise InvalidParameters(f"singular mass matrix (det={det:g})")
    i11, i12, i22 = m22 / det, -m12 / det, m11 / det
    r1 = s2 * qd2 * qd1 + s2 * (qd1 + qd2) * qd2 - params.fd1 * qd1 - params.fs1 * math.tanh(qd1)
    r2 = -s2 * qd1 * qd1 - params.fd2 * qd2 - params.fs2 * math.tanh(qd2)
    f = np.array([qd1, qd2, i11 * r1 + i12 * r2, i12 * r1 + i22 * r2])
    g = np.array([[0.0, 0.0], [0.0, 0.0], [i11, i12], [i12, i22]])
    return f, g


def manipulator_plant(params: ManipulatorParams) -> PlantModel:
    return PlantModel(
        n=4,
        m=2,
        f=lambda x: manipulator_f(params, x),
        g=lambda x: manipulator_g(params, x),
        g_pinv=lambda x: manipulator_g_pinv(params, x),
        f_and_g=lambda x: _manipulator_f_and_g(params, x),
    )


def reference_flow(x_r: Vector) -> Vector:
    """Autonomous oscillator whose orbit from ``[0.5, 1, 0, 0]`` is
    ``[0.5 cos 2t, cos t, -sin 2t, -sin t]``."""
    return np.array([x_r[2], x_r[3], -4.0 * x_r[0], -x_r[1]])


def reference_closed_form(t: float) -> Vector:
    """Orbit of :func:`reference_flow` through ``[0.5, 1, 0, 0]`` at ``t = 0``."""
    return np.array([0.5 * np.cos(2 * t), np.cos(t), -np.sin(2 * t), -np.sin(t)])


@dataclass(frozen=True)
class ReferenceModel:
    x_r0: Vector
    flow: Callable[[Vector], Vector]

    @property
    def n(self) -> int:
        return len(self.x_r0)


def oscillator_reference(x_r0) -> ReferenceModel:
    return ReferenceModel(x_r0=np.asarray(x_r0, dtype=float), flow=reference_flow)
