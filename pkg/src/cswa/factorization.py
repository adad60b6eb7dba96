"""The numerical core: masked regularized squared loss, its gradients, one
SGD step with non-negativity truncation, and a full-batch centralized solver
used both as a baseline and as the oracle for decentralized-vs-centralized
comparison.

For one participant's observations (readings R, 0/1 filter F) and factors
(P, Q), the objective is

    loss(P, Q) = ||F o (R - PQ)||_F^2 + reg_p ||P||_F^2 + reg_q ||Q||_F^2

where ``o`` is element-wise multiplication. The quantities

    g_p = (F o (R - PQ)) Q^T - reg_p P
    g_q = P^T (F o (R - PQ)) - reg_q Q

equal -1/2 of the analytic gradient of the loss, so the descent update is
P <- Truncate(P + step * g_p) (the factor 2 is absorbed into the step size).
``literal_update=True`` flips the sign to P <- Truncate(P - step * g_p),
which moves *away* from the data-fit optimum; it exists only for
side-by-side study of the two sign conventions and is off everywhere by
default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .model import FactorPair, Hyperparams, LocalObservations


@dataclass(frozen=True)
class GradPair:
    """The pair (g_p, g_q) produced by one gradient evaluation."""

    g_p: np.ndarray
    g_q: np.ndarray

    def max_abs(self) -> float:
        """Perturbation magnitude: the largest absolute entry across both
        matrices. This is the chain convergence statistic."""
        return float(max(np.abs(self.g_p).max(), np.abs(self.g_q).max()))


def _masked_residual(obs: LocalObservations, factors: FactorPair) -> np.ndarray:
    """F o (R - PQ), with dimension agreement checked."""
    if factors.p.shape[0] != obs.num_subareas or factors.q.shape[1] != obs.window:
        raise ShapeError(
            f"factors ({factors.p.shape} x {factors.q.shape}) do not match "
            f"observations ({obs.num_subareas}x{obs.window})")
    return obs.f_mask * (obs.r_local - factors.p @ factors.q)


def masked_loss(obs: LocalObservations, factors: FactorPair,
                reg_p: float, reg_q: float) -> float:
    """Single-participant objective value; always non-negative."""
    residual = _masked_residual(obs, factors)
    return float(
        (residual ** 2).sum()
        + reg_p * (factors.p ** 2).sum()
        + reg_q * (factors.q ** 2).sum()
    )


def gradients(obs: LocalObservations, factors: FactorPair,
              reg_p: float, reg_q: float) -> GradPair:
    """Evaluate (g_p, g_q); equals -1/2 the analytic gradient of
    :func:`masked_loss` (see module docstring)."""
    residual = _masked_residual(obs, factors)
    g_p = residual @ factors.q.T - reg_p * factors.p
    g_q = factors.p.T @ residual - reg_q * factors.q
    return GradPair(g_p, g_q)


def truncate(factors: FactorPair) -> FactorPair:
    """Element-wise projection of both factors onto the non-negative
    orthant (negatives set to zero). Idempotent."""
    return FactorPair(np.maximum(factors.p, 0.0), np.maximum(factors.q, 0.0))


def sgd_step(obs: LocalObservations, factors: FactorPair, step_size: float,
             reg_p: float, reg_q: float, *,
             literal_update: bool = False) -> tuple[FactorPair, GradPair]:
    """One local update: move along (g_p, g_q), truncate negatives to zero,
    and return the new factors together with the gradients used.

    The default direction descends the loss; ``literal_update`` flips it
    (see module docstring). Raises :class:`NumericError` when the update
    produces non-finite entries, which indicates a step size too large for
    the data scale.
    """
    if not step_size > 0:
        raise ParameterError(f"step_size must be positive, got {step_size!r}")
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness checked below
        grads = gradients(obs, factors, reg_p, reg_q)
        sign = -1.0 if literal_update else 1.0
        new_p = np.maximum(factors.p + sign * step_size * grads.g_p, 0.0)
        new_q = np.maximum(factors.q + sign * step_size * grads.g_q, 0.0)
    if not (np.isfinite(new_p).all() and np.isfinite(new_q).all()):
        raise NumericError(
            "factor update produced non-finite entries; reduce step_size")
    return FactorPair(new_p, new_q), grads


def init_factors(num_subareas: int, window: int, latent: int, scale: float,
                 rng: np.random.Generator) -> FactorPair:
    """Draw a Gaussian starting pair with entries |N(0,1)| * sqrt(scale / latent).

    ``scale`` should be the typical magnitude of the data (a local observed
    mean), so the initial product PQ starts at the data's order of magnitude
    instead of half-negative and immediately truncated.
    """
    if not 1 <= latent <= min(num_subareas, window):
        raise ParameterError(
            f"latent {latent} must lie in 1..min({num_subareas}, {window})")
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale!r}")
    magnitude = np.sqrt(scale / latent)
    p = magnitude * np.abs(rng.standard_normal((num_subareas, latent)))
    q = magnitude * np.abs(rng.standard_normal((latent, window)))
    return FactorPair(p, q)


def solve_centralized(aggregated: LocalObservations, params: Hyperparams,
                      rng: np.random.Generator) -> tuple[FactorPair, int]:
    """Full-batch masked NMF on organizer-aggregated observations.

    Runs :func:`sgd_step` from a Gaussian-initialized pair until
    max(|g_p|_inf, |g_q|_inf) <= grad_tol or the iteration budget is spent;
    returns the final factors and the iterations used. This is the
    centralized counterpart the decentralized protocol is measured against.
    """
    if aggregated.window != params.window:
        raise ShapeError(
            f"aggregated window ({aggregated.window}) does not match "
            f"params.window ({params.window})")
    params.check_against(aggregated.num_subareas)
    mean = aggregated.observed_mean()
    # quarter of the data scale: starting below the data magnitude avoids
    # long stalls near rank-1 saddle points on full-batch instances
    scale = (mean if mean > 0 else 1.0) / 4.0
    factors = init_factors(aggregated.num_subareas, params.window,
                           params.latent, scale, rng)
    iterations = 0
    for i in range(1, params.max_iters + 1):
        try:
            factors, grads = sgd_step(aggregated, factors, params.step_size,
                                      params.reg_p, params.reg_q)
        except NumericError as err:
            err.iteration = i
            raise
        iterations = i
        if grads.max_abs() <= params.grad_tol:
            break
    return factors, iterations
