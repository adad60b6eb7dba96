"""Shared builders and the finite-difference gradient oracle."""

import numpy as np

from cswa import FactorPair, LocalObservations, masked_loss


def random_observations(seed: int, num_subareas: int = 6, window: int = 4,
                        fill: float = 0.5, participant_id: int = 1,
                        scale: float = 2.0) -> LocalObservations:
    """A random masked observation set with at least one covered cell."""
    rng = np.random.default_rng(seed)
    mask = (rng.random((num_subareas, window)) < fill).astype(float)
    if not mask.any():
        mask[0, 0] = 1.0
    values = mask * rng.random((num_subareas, window)) * scale
    return LocalObservations(participant_id, values, mask)


def random_factors(seed: int, num_subareas: int = 6, window: int = 4,
                   latent: int = 2, scale: float = 1.0) -> FactorPair:
    rng = np.random.default_rng(seed)
    return FactorPair(scale * rng.random((num_subareas, latent)),
                      scale * rng.random((latent, window)))


def finite_difference_grads(obs: LocalObservations, factors: FactorPair,
                            reg_p: float, reg_q: float,
                            step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of masked_loss w.r.t. every factor entry.

    Independent of the analytic gradient path: only the loss is evaluated.
    """
    def loss_at(p, q):
        return masked_loss(obs, FactorPair(p, q), reg_p, reg_q)

    fd_p = np.zeros_like(factors.p)
    base_p = factors.p.copy()
    for idx in np.ndindex(*base_p.shape):
        plus = base_p.copy()
        minus = base_p.copy()
        plus[idx] += step
        minus[idx] -= step
        fd_p[idx] = (loss_at(plus, factors.q) - loss_at(minus, factors.q)) / (2 * step)

    fd_q = np.zeros_like(factors.q)
    base_q = factors.q.copy()
    for idx in np.ndindex(*base_q.shape):
        plus = base_q.copy()
        minus = base_q.copy()
        plus[idx] += step
        minus[idx] -= step
        fd_q[idx] = (loss_at(factors.p, plus) - loss_at(factors.p, minus)) / (2 * step)
    return fd_p, fd_q
