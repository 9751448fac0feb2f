"""From a fitted discrepancy surrogate to an approximate state posterior.

The surrogate's predictive mean is descended to find the acceptance
threshold, the synthetic likelihood maps (mean, variance, threshold) to a
Gaussian-CDF acceptance probability, and the posterior is realized by
importance-weighted resampling of prior draws.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

logger = logging.getLogger(__name__)

THRESHOLD_ITERATIONS = 100
THRESHOLD_LEARNING_RATE = 1e-4
MIN_PROPOSALS = 10_000
PROPOSALS_PER_SAMPLE = 20


@dataclass(frozen=True)
class Threshold:
    """Acceptance threshold and the point where the surrogate mean attains it."""

    epsilon: float
    location: np.ndarray


@dataclass(frozen=True)
class PosteriorSampleSet:
    """Resampled draws approximating one time-step's state posterior."""

    samples: np.ndarray  # (I, m)
    t: int
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", np.atleast_2d(np.asarray(self.samples, float)))

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)


def select_threshold(
    surrogate,
    objective,
    bounds: np.ndarray,
    start: np.ndarray | None = None,
    iterations: int = THRESHOLD_ITERATIONS,
    learning_rate: float = THRESHOLD_LEARNING_RATE,
) -> Threshold:
    """Descend the surrogate mean from the best simulated point.

    Adam steps on bounds-normalized inputs, projected back into the box
    each iteration; the threshold is the mean value at the final point.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    shift = 0.5 * (bounds[:, 0] + bounds[:, 1])
    scale = 0.5 * (bounds[:, 1] - bounds[:, 0])
    scale[scale == 0.0] = 1.0

    if start is None:
        start = surrogate.best_training_input(objective)
    x = np.asarray(start, dtype=float).copy()

    z = (x - shift) / scale
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for k in range(1, iterations + 1):
        grad = surrogate.mean_gradient(shift + scale * z, objective) * scale
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1**k)
        v_hat = v / (1 - beta2**k)
        z = z - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        z = np.clip(z, -1.0, 1.0)

    location = np.clip(shift + scale * z, bounds[:, 0], bounds[:, 1])
    mu, _ = surrogate.predict(location[None, :], objective)
    return Threshold(float(mu[0]), location)


def synthetic_likelihood(mu, nu, noise_variance, epsilon):
    """Gaussian-CDF acceptance probability Phi((eps - mu)/sqrt(nu + sigma^2)).

    Vectorized over ``mu``/``nu``; ``epsilon`` may be a Threshold or float.
    """
    eps_value = epsilon.epsilon if isinstance(epsilon, Threshold) else float(epsilon)
    nu = np.asarray(nu, dtype=float)
    total_var = nu + noise_variance
    if np.any(total_var <= 0.0):
        raise ValueError("nu + noise variance must be positive")
    out = ndtr((eps_value - np.asarray(mu, dtype=float)) / np.sqrt(total_var))
    return float(out) if np.ndim(out) == 0 else out


def resample(values: np.ndarray, weights: np.ndarray, size: int,
             rng: np.random.Generator) -> np.ndarray:
    """Multinomial resampling of rows proportional to the given weights."""
    values = np.atleast_2d(values)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise ValueError("weights must sum to a positive finite value")
    idx = rng.choice(values.shape[0], size=size, replace=True, p=weights / total)
    return values[idx]


def extract_posterior(
    surrogate,
    objective,
    bounds: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
    threshold: Threshold | None = None,
    n_proposals: int | None = None,
    t: int = 0,
) -> PosteriorSampleSet:
    """Importance-weighted resampling of uniform prior proposals.

    Draws ``max(20 * n_samples, 10^4)`` proposals, weights each by the
    synthetic likelihood under the surrogate, and resamples ``n_samples``
    of them with replacement. If every weight underflows to zero the
    resampling falls back to uniform weights with a logged warning.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if threshold is None:
        threshold = select_threshold(surrogate, objective, bounds)
    if n_proposals is None:
        n_proposals = max(PROPOSALS_PER_SAMPLE * n_samples, MIN_PROPOSALS)

    proposals = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n_proposals, bounds.shape[0]))
    mu, nu = surrogate.predict(proposals, objective)
    weights = synthetic_likelihood(mu, nu, surrogate.noise_variance, threshold)

    if not np.any(weights > 0.0):
        logger.warning(
            "all synthetic-likelihood weights are zero at t=%s; "
            "falling back to uniform weights", t,
        )
        weights = np.ones(n_proposals)

    samples = resample(proposals, weights, n_samples, rng)
    return PosteriorSampleSet(samples=samples, t=t, weights=None)


def jensen_lower_bound_check(mu_samples, nu, noise_variance, epsilon) -> bool:
    """Check mean(Phi(z_i)) >= Phi(mean(z_i)) on the convex branch.

    The standardized arguments z_i = (eps - mu_i)/sqrt(nu + sigma^2) must
    all be <= 0, where the Gaussian CDF is convex.
    """
    eps_value = epsilon.epsilon if isinstance(epsilon, Threshold) else float(epsilon)
    mu_samples = np.asarray(mu_samples, dtype=float)
    total_var = float(nu) + float(noise_variance)
    if total_var <= 0.0:
        raise ValueError("nu + noise variance must be positive")
    args = (eps_value - mu_samples) / np.sqrt(total_var)
    if np.any(args > 0.0):
        raise ValueError("all standardized arguments must be <= 0")
    return bool(np.mean(ndtr(args)) >= ndtr(np.mean(args)))
