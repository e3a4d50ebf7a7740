"""Diagonal Gaussian meta-distributions over flat network parameters.

This is the meta-model: one (mu, sigma) pair per parameter coordinate for
the actor and one for the critic. Sampling is keyed by compact seeds so a
coordinator can regenerate any worker's perturbations without shipping
parameter vectors. The score-function gradient estimators below drive the
four plain-SGD meta-updates; no adaptive-moment optimizer is offered.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from esmeta import seeding
from esmeta.errors import NumericFailure
from esmeta.nn import FlatParams, NetLayout, xavier_init

SIGMA_MIN_DEFAULT = 1e-4
SIGMA_MAX_DEFAULT = 1.0

SHAPING_MODES = ("none", "centered_rank")


@dataclass(frozen=True)
class GaussianParamDist:
    mu: np.ndarray
    sigma: np.ndarray
    layout: NetLayout
    sigma_min: float = SIGMA_MIN_DEFAULT
    sigma_max: float = SIGMA_MAX_DEFAULT

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        n = self.layout.total_params
        if mu.shape != (n,) or sigma.shape != (n,):
            raise ValueError(f"mu/sigma must have length {n}")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise ValueError("mu/sigma must be finite")
        if not (sigma > 0.0).all():
            raise ValueError("sigma must be strictly positive")
        if (sigma < self.sigma_min).any() or (sigma > self.sigma_max).any():
            raise ValueError("sigma outside [sigma_min, sigma_max]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class PerturbationSeed:
    """Uniquely identifies one sampled parameter vector."""

    worker_index: int
    member_index: int
    master_seed: int


@dataclass(frozen=True)
class MetaGradients:
    grad_mu: np.ndarray
    grad_sigma: np.ndarray


def initial_dist(
    layout: NetLayout,
    rng: np.random.Generator,
    sigma_init: float = 0.05,
    sigma_min: float = SIGMA_MIN_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
) -> GaussianParamDist:
    """Xavier-initialized mean, one scalar sigma broadcast to all coordinates."""
    mu = xavier_init(layout, rng).values
    sigma = np.full(layout.total_params, float(sigma_init))
    return GaussianParamDist(mu=mu, sigma=sigma, layout=layout, sigma_min=sigma_min, sigma_max=sigma_max)


def sample(dist: GaussianParamDist, seed: PerturbationSeed) -> FlatParams:
    """mu + sigma * eps with eps from the counter-based stream keyed by seed."""
    rng = seeding.generator(seed.master_seed, seed.worker_index, seed.member_index)
    eps = rng.standard_normal(dist.layout.total_params)
    return FlatParams(dist.layout, dist.mu + dist.sigma * eps)


def sample_k_and_mean(
    dist: GaussianParamDist, seeds: list[PerturbationSeed]
) -> tuple[list[FlatParams], FlatParams]:
    """K samples plus their coordinatewise mean (distributed N(mu, sigma^2/K))."""
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("perturbation seeds must be distinct")
    samples = [sample(dist, s) for s in seeds]
    mean = np.mean([s.values for s in samples], axis=0)
    return samples, FlatParams(dist.layout, mean)


def nes_gradient_actor(
    worker_samples: list[list[FlatParams]],
    fitness: np.ndarray,
    dist: GaussianParamDist,
) -> MetaGradients:
    """Score-function estimate of the fitness gradient w.r.t. (mu, sigma).

    grad_mu    = (1/M) sum_i F_i sum_j (theta_ij - mu) / sigma^2
    grad_sigma = (1/M) sum_i F_i sum_j ((theta_ij - mu)^2 - sigma^2) / sigma^3
    """
    fitness = np.asarray(fitness, dtype=np.float64)
    m = len(worker_samples)
    if m < 1:
        raise ValueError("need at least one worker")
    if fitness.shape != (m,):
        raise ValueError("fitness length must match worker count")
    mu, sigma = dist.mu, dist.sigma
    var = sigma * sigma
    acc_mu = np.zeros_like(mu)
    acc_sigma = np.zeros_like(mu)
    for f_i, samples_i in zip(fitness, worker_samples):
        if len(samples_i) == 0:
            raise ValueError("each worker needs at least one sample")
        sum_d = np.zeros_like(mu)
        sum_d2 = np.zeros_like(mu)
        for theta in samples_i:
            if theta.layout != dist.layout:
                raise ValueError("sample layout does not match the distribution")
            d = theta.values - mu
            sum_d += d
            sum_d2 += d * d - var
        acc_mu += f_i * sum_d
        acc_sigma += f_i * sum_d2
    grad_mu = acc_mu / (m * var)
    grad_sigma = acc_sigma / (m * var * sigma)
    return MetaGradients(grad_mu=grad_mu, grad_sigma=grad_sigma)


def nes_gradient_critic(
    phi_samples: list[FlatParams],
    fitness: np.ndarray,
    dist: GaussianParamDist,
) -> MetaGradients:
    """Single-sample-per-worker case of the actor estimator."""
    return nes_gradient_actor([[phi] for phi in phi_samples], fitness, dist)


def shape_fitness(raw: np.ndarray, mode: str = "centered_rank") -> np.ndarray:
    """Map raw fitness to update weights.

    centered_rank spreads ranks evenly over [-0.5, 0.5] (ties averaged),
    making the update invariant to monotone transforms of the raw scores.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.shape[0] < 1:
        raise ValueError("fitness must be a non-empty 1-D array")
    if mode == "none":
        return raw.copy()
    if mode != "centered_rank":
        raise ValueError(f"unknown shaping mode {mode!r}")
    m = raw.shape[0]
    if m == 1:
        return np.zeros(1)
    ranks = rankdata(raw, method="average") - 1.0
    return ranks / (m - 1.0) - 0.5


def sgd_step(
    dist: GaussianParamDist,
    grads: MetaGradients,
    lr_mu: float,
    lr_sigma: float,
) -> GaussianParamDist:
    """One ascent step on fitness; sigma clamped into its configured band."""
    if lr_mu < 0.0 or lr_sigma < 0.0:
        raise ValueError("learning rates must be >= 0")
    if not (np.isfinite(grads.grad_mu).all() and np.isfinite(grads.grad_sigma).all()):
        raise NumericFailure("non-finite meta-gradients; iteration rejected")
    mu = dist.mu + lr_mu * grads.grad_mu
    if not np.isfinite(mu).all():
        raise NumericFailure("meta-update overflowed; iteration rejected")
    sigma = np.clip(dist.sigma + lr_sigma * grads.grad_sigma, dist.sigma_min, dist.sigma_max)
    return replace(dist, mu=mu, sigma=sigma)
