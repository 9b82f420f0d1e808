"""Tracking-to-regulation transform.

The concatenated state ``eta = [e; x_r]`` with ``e = x - x_r`` evolves as
``deta/dt = F(eta) + G(eta) mu`` where ``mu = u - nu`` and ``nu`` is the
feedforward that keeps the plant on the reference.
"""
from __future__ import annotations

import numpy as np

from .dynamics import PlantModel, ReferenceModel


def augment(x, x_r) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x_r = np.asarray(x_r, dtype=float)
    if x.shape != x_r.shape or x.ndim != 1:
        raise ValueError(f"state/reference shape mismatch: {x.shape} vs {x_r.shape}")
    return np.concatenate((x - x_r, x_r))


def split(eta) -> tuple[np.ndarray, np.ndarray]:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1 or eta.size % 2:
        raise ValueError(f"augmented state must have even length, got shape {eta.shape}")
    n = eta.size // 2
    return eta[:n], eta[n:]


def steady_state_control(plant: PlantModel, ref: ReferenceModel, x_r) -> np.ndarray:
    """Feedforward ``nu = g+(x_r) (y(x_r) - f(x_r))``."""
    return plant.g_pinv(x_r) @ (ref.flow(x_r) - plant.f(x_r))


def aug_drift(plant: PlantModel, ref: ReferenceModel, eta) -> np.ndarray:
    e, x_r = split(eta)
    x = e + x_r
    y = ref.flow(x_r)
    nu = steady_state_control(plant, ref, x_r)
    return np.concatenate((plant.f(x) - y + plant.g(x) @ nu, y))


def aug_input(plant: PlantModel, eta) -> np.ndarray:
    e, x_r = split(eta)
    return np.vstack((plant.g(e + x_r), np.zeros((plant.n, plant.m))))


def total_control(mu, nu) -> np.ndarray:
    return np.asarray(mu, dtype=float) + np.asarray(nu, dtype=float)
