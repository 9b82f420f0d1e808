"""Polynomial critic, experience replay and the off-policy weight update.

The value estimate is ``V(eta) = W . phi(eta)``. Each data point pairs a
regressor ``Y = dphi/deta . deta/dt`` with the stage cost ``Theta`` observed
under the applied control, so that the Bellman error under weights ``W`` is
``Theta + W . Y``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .augmentation import aug_drift, aug_input, split
from .dynamics import PlantModel, ReferenceModel
from .performance import CostSpec, utility


class BasisSpec:
    """Monomial basis over the augmented state.

    Parameters
    ----------
    terms : sequence of (coefficient, [(component, exponent), ...])
        Components are 0-based indices into ``eta``.
    dim : int
        Length of ``eta``.
    """

    def __init__(self, terms: Sequence[tuple[float, Sequence[tuple[int, int]]]], dim: int):
        self.dim = int(dim)
        self.terms = [(float(c), tuple((int(i), int(p)) for i, p in mono)) for c, mono in terms]
        self.coef = np.array([c for c, _ in self.terms])
        self.exponents = np.zeros((len(self.terms), self.dim), dtype=int)
        for k, (_, mono) in enumerate(self.terms):
            for i, p in mono:
                if not 0 <= i < self.dim:
                    raise ValueError(f"term {k}: component {i} outside eta of length {self.dim}")
                self.exponents[k, i] += p
        degree = self.exponents.sum(axis=1)
        if np.any(degree < 2):
            raise ValueError("every basis term must have total degree >= 2")
        # Sparse derivative table: entry r is coef * eta[idx[r]] ** pow[r] (product
        # over its row), landing at jacobian position (rows[r], cols[r]).
        # Index ``dim`` points at a padded constant 1.
        entries = []
        for k in range(self.N):
            nz = np.flatnonzero(self.exponents[k])
            for j in nz:
                p = self.exponents[k, j]
                factors = [(j, p - 1)] if p > 1 else []
                factors += [(i, self.exponents[k, i]) for i in nz if i != j]
                entries.append((k, j, self.coef[k] * p, factors))
        width = max(len(f) for *_, f in entries) if entries else 1
        width = max(width, 1)
        self._rows = np.array([k for k, *_ in entries], dtype=int)
        self._cols = np.array([j for _, j, *_ in entries], dtype=int)
        self._dcoef = np.array([c for _, _, c, _ in entries])
        self._idx = np.full((len(entries), width), self.dim, dtype=int)
        self._pow = np.zeros((len(entries), width), dtype=int)
        for r, (*_, factors) in enumerate(entries):
            for w, (i, p) in enumerate(factors):
                self._idx[r, w], self._pow[r, w] = i, p

    @property
    def N(self) -> int:
        return len(self.terms)

    def _check(self, eta):
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.dim,):
            raise ValueError(f"expected eta of shape ({self.dim},), got {eta.shape}")
        return eta

    def eval(self, eta) -> np.ndarray:
        eta = self._check(eta)
        return self.coef * np.prod(eta**self.exponents, axis=1)

    def grad(self, eta) -> np.ndarray:
        """Jacobian ``d phi / d eta`` of shape ``[N, dim]``."""
        eta = self._check(eta)
        padded = np.append(eta, 1.0)
        vals = self._dcoef * np.prod(padded[self._idx] ** self._pow, axis=1)
        out = np.zeros((self.N, self.dim))
        out[self._rows, self._cols] = vals
        return out


def basis_eval(spec: BasisSpec, eta) -> np.ndarray:
    return spec.eval(eta)


def basis_grad(spec: BasisSpec, eta) -> np.ndarray:
    return spec.grad(eta)


def manipulator_basis() -> BasisSpec:
    """23-term basis for the 2-DoF tracking problem (``eta`` of length 8).

    ``1/2 [e1^2, e2^2, 2 e1 e3, 2 e1 e4, 2 e2 e3, 2 e2 e4, e1^2 e2^2,
    e_i^2 x_r,j^2 for i in 1..4, j in 1..4]``.
    """
    terms = [
        (0.5, [(0, 2)]),
        (0.5, [(1, 2)]),
        (1.0, [(0, 1), (2, 1)]),
        (1.0, [(0, 1), (3, 1)]),
        (1.0, [(1, 1), (2, 1)]),
        (1.0, [(1, 1), (3, 1)]),
        (0.5, [(0, 2), (1, 2)]),
    ]
    terms += [(0.5, [(i, 2), (j, 2)]) for i in range(4) for j in range(4, 8)]
    return BasisSpec(terms, dim=8)


def numerical_rank(sv: np.ndarray, rtol: float) -> int:
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > rtol * sv[0]))


class ExperienceBuffer:
    """Fixed-capacity store of ``(Y_l, Theta_l)`` pairs.

    Targets are stored raw; Bellman errors are always recomputed against the
    current weights. ``min_sv`` is the ``N``-th singular value of the stacked
    ``[N, len]`` regressor matrix (zero until it has full row rank).

    Parameters
    ----------
    capacity : int
    N : int
        Regressor length.
    rank_tol : float
        Singular values below ``rank_tol * max_sv`` count as zero.
    improve_factor : float
        A full-rank candidate must raise ``min_sv`` by at least this factor.
    """

    def __init__(self, capacity: int, N: int, rank_tol: float = 1e-8, improve_factor: float = 1.05):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = int(capacity)
        self.N = int(N)
        self.rank_tol = rank_tol
        self.improve_factor = improve_factor
        self.Y = np.zeros((self.N, 0))
        self.theta = np.zeros(0)
        self.min_sv = 0.0
        self.rank = 0

    def __len__(self) -> int:
        return self.theta.size

    @property
    def full(self) -> bool:
        return len(self) >= self.capacity

    def copy(self) -> "ExperienceBuffer":
        out = ExperienceBuffer(self.capacity, self.N, self.rank_tol, self.improve_factor)
        out.Y, out.theta = self.Y.copy(), self.theta.copy()
        out.min_sv, out.rank = self.min_sv, self.rank
        return out

    def _score(self, Y: np.ndarray) -> tuple[int, float]:
        sv = np.linalg.svd(Y, compute_uv=False)
        rank = numerical_rank(sv, self.rank_tol)
        return rank, float(sv[rank - 1]) if rank else 0.0

    def _is_duplicate(self, y: np.ndarray) -> bool:
        if not len(self):
            return False
        norms = np.linalg.norm(self.Y, axis=0) * np.linalg.norm(y)
        cos = np.abs(y @ self.Y) / np.where(norms > 0, norms, 1.0)
        return bool(np.any(cos > 1.0 - 1e-12))

    def _commit(self, Y: np.ndarray, theta: np.ndarray):
        self.Y, self.theta = Y, theta
        sv = np.linalg.svd(Y, compute_uv=False)
        self.rank = numerical_rank(sv, self.rank_tol)
        self.min_sv = float(sv[self.N - 1]) if self.rank >= self.N else 0.0

    def load(self, Y, theta):
        """Replace the contents with given columns, bypassing selection."""
        Y = np.asarray(Y, dtype=float).reshape(self.N, -1)
        theta = np.asarray(theta, dtype=float).ravel()
        if Y.shape[1] != theta.size or theta.size > self.capacity:
            raise ValueError(f"need matching Y/theta with at most {self.capacity} columns")
        self._commit(Y.copy(), theta.copy())

    def record(self, y, theta: float) -> bool:
        """Offer a candidate; returns whether it was stored."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.N,):
            raise ValueError(f"regressor must have shape ({self.N},)")
        if not np.any(y) or not np.all(np.isfinite(y)) or self._is_duplicate(y):
            return False
        current = self._score(self.Y) if len(self) else (0, 0.0)
        if not self.full:
            Y_new = np.column_stack((self.Y, y))
            rank, sigma = self._score(Y_new)
            accept = rank > current[0] or (
                rank == self.N and sigma > self.improve_factor * current[1]
            )
            if accept:
                self._commit(Y_new, np.append(self.theta, theta))
            return accept
        best, best_score = None, current
        for l in range(len(self)):
            Y_new = self.Y.copy()
            Y_new[:, l] = y
            score = self._score(Y_new)
            if score[0] > best_score[0] or (
                score[0] == best_score[0] and score[1] > best_score[1]
            ):
                best, best_score = l, score
        if best is None or (
            best_score[0] == current[0] and best_score[1] <= self.improve_factor * current[1]
        ):
            return False
        Y_new = self.Y.copy()
        Y_new[:, best] = y
        theta_new = self.theta.copy()
        theta_new[best] = theta
        self._commit(Y_new, theta_new)
        return True

    def lambda_min(self) -> float:
        """Smallest eigenvalue of ``sum_l Y_l Y_l^T``."""
        if not len(self):
            return 0.0
        return float(np.linalg.eigvalsh(self.Y @ self.Y.T)[0])


def buffer_record(buffer: ExperienceBuffer, Y, theta: float) -> bool:
    return buffer.record(Y, theta)


@dataclass
class CriticState:
    """Weights, update gains and replay buffer of the critic.

    ``normalize`` divides each term of the update by ``(1 + Y.Y)^2``.
    """

    W_hat: np.ndarray
    Gamma: np.ndarray
    k_c: float
    k_e: float
    buffer: ExperienceBuffer
    normalize: bool = False

    def __post_init__(self):
        self.W_hat = np.asarray(self.W_hat, dtype=float)
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        N = self.W_hat.size
        if self.Gamma.shape != (N, N):
            raise ValueError(f"Gamma must be {N}x{N}")
        if not np.allclose(self.Gamma, self.Gamma.T) or np.linalg.eigvalsh(self.Gamma)[0] <= 0:
            raise ValueError("Gamma must be symmetric positive definite")
        if self.k_c < 0 or self.k_e < 0:
            raise ValueError("k_c and k_e must be >= 0")
        self._gamma_is_identity = np.array_equal(self.Gamma, np.eye(N))

    def with_weights(self, W) -> "CriticState":
        out = CriticState.__new__(CriticState)
        out.__dict__.update(self.__dict__)
        out.W_hat = np.asarray(W, dtype=float)
        return out


def value_estimate(critic: CriticState, spec: BasisSpec, eta) -> float:
    return float(critic.W_hat @ spec.eval(eta))


def value_grad(critic: CriticState, spec: BasisSpec, eta) -> np.ndarray:
    return spec.grad(eta).T @ critic.W_hat


def regression_point(plant: PlantModel, ref: ReferenceModel, cost: CostSpec,
                     spec: BasisSpec, eta, mu_applied, t: float) -> tuple[np.ndarray, float]:
    """Regressor and target for the control that was actually applied."""
    mu = np.atleast_1d(np.asarray(mu_applied, dtype=float))
    eta_dot = aug_drift(plant, ref, eta) + aug_input(plant, eta) @ mu
    e, x_r = split(eta)
    return spec.grad(eta) @ eta_dot, utility(cost, e, x_r, mu, t)


def bellman_error(critic: CriticState, Y, theta: float) -> float:
    return float(theta + critic.W_hat @ Y)


def weight_derivative(critic: CriticState, Y_now, theta_now: float, W=None) -> np.ndarray:
    """Gradient term on the current sample plus replay over the buffer.

    ``W`` overrides ``critic.W_hat`` (used inside integrator stages).
    """
    W = critic.W_hat if W is None else W
    Y_now = np.asarray(Y_now, dtype=float)
    buf = critic.buffer
    err_now = theta_now + W @ Y_now
    err_buf = buf.theta + W @ buf.Y
    if critic.normalize:
        err_now = err_now / (1.0 + Y_now @ Y_now) ** 2
        err_buf = err_buf / (1.0 + np.einsum("ij,ij->j", buf.Y, buf.Y)) ** 2
    step = critic.k_c * err_now * Y_now + buf.Y @ (critic.k_e * err_buf)
    if critic._gamma_is_identity:
        return -step
    return -critic.Gamma @ step


def approx_control(critic: CriticState, spec: BasisSpec, plant: PlantModel,
                   eta, R_inv: np.ndarray) -> np.ndarray:
    """``mu = -1/2 R^-1 G^T dphi^T W``."""
    return -0.5 * R_inv @ (aug_input(plant, eta).T @ value_grad(critic, spec, eta))


def hamiltonian_residual(critic: CriticState, spec: BasisSpec, plant: PlantModel,
                         ref: ReferenceModel, cost: CostSpec, eta, t: float) -> float:
    """HJB residual under the current weights; zero at the optimum."""
    dV = value_grad(critic, spec, eta)
    Gt_dV = aug_input(plant, eta).T @ dV
    e, x_r = split(eta)
    return float(
        dV @ aug_drift(plant, ref, eta)
        + cost.state_cost(e, x_r, t)
        - 0.25 * Gt_dV @ cost.R_inv @ Gt_dV
    )
