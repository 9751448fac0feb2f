"""Choosing where to run the next simulations.

Two acquisition rules: minimizing the lower confidence bound of the GP
baseline's discrepancy surrogate, and sampling the transition model's
predictive distribution from the newest state posterior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LCB_EXPLORATION_DELTA = 0.1
LCB_RESTARTS = 20
LCB_STEPS = 200
LCB_STEP_SIZE = 0.02


@dataclass(frozen=True)
class AcquisitionBatch:
    """Simulator inputs chosen by one acquisition round."""

    proposals: np.ndarray  # (B, m), inside the prior box
    source: str  # lcbsc | transition-bnn | transition-blr | prior

    def __post_init__(self):
        object.__setattr__(
            self, "proposals", np.atleast_2d(np.asarray(self.proposals, dtype=float))
        )


def lcbsc_beta(t: int, d: int, delta: float = LCB_EXPLORATION_DELTA) -> float:
    """Confidence coefficient 2*log(t^(2d+2) * pi^2 / (3*delta))."""
    if t < 1:
        raise ValueError("acquisition counter must be >= 1")
    return 2.0 * math.log(t ** (2 * d + 2) * math.pi**2 / (3.0 * delta))


def lcbsc_next(
    surrogate,
    t: int,
    d: int,
    bounds: np.ndarray,
    rng: np.random.Generator | None = None,
    n_restarts: int = LCB_RESTARTS,
    n_steps: int = LCB_STEPS,
    step_size: float = LCB_STEP_SIZE,
    delta: float = LCB_EXPLORATION_DELTA,
    full_output: bool = False,
):
    """Approximately minimize LCB(x) = mu(x) - sqrt(beta_t) * sigma(x).

    Multi-start Adam descent in the bounds-normalized box; sigma includes
    the surrogate's noise variance. Returns the restart end-point with the
    lowest LCB value (and, with ``full_output``, all end-points and their
    LCB values).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    shift = 0.5 * (bounds[:, 0] + bounds[:, 1])
    scale = 0.5 * (bounds[:, 1] - bounds[:, 0])
    scale[scale == 0.0] = 1.0
    root_beta = math.sqrt(lcbsc_beta(t, d, delta))
    noise = surrogate.noise_variance

    z = rng.uniform(-1.0, 1.0, size=(n_restarts, bounds.shape[0]))
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for k in range(1, n_steps + 1):
        x = shift + scale * z
        _, var, dmu, dvar = surrogate.predict_with_gradients(x)
        sigma = np.sqrt(var + noise)
        grad = (dmu - root_beta * dvar / (2.0 * sigma[:, None])) * scale
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        z = z - step_size * (m / (1 - beta1**k)) / (np.sqrt(v / (1 - beta2**k)) + eps)
        z = np.clip(z, -1.0, 1.0)

    endpoints = shift + scale * z
    mu, var = surrogate.predict(endpoints)
    lcb = mu - root_beta * np.sqrt(var + noise)
    best = endpoints[int(np.argmin(lcb))]
    if full_output:
        return best, endpoints, lcb
    return best


def transition_proposals(
    model,
    current_posterior,
    n_proposals: int,
    bounds: np.ndarray,
    rng: np.random.Generator,
) -> AcquisitionBatch:
    """Propose simulator inputs by pushing posterior draws through the model.

    Each proposal draws one state from the current posterior's sample set,
    then one predictive sample from the transition model, clipped into the
    prior box. Falls back to uniform prior draws when no trained model is
    available.
    """
    if n_proposals < 1:
        raise ValueError("n_proposals must be >= 1")
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if model is None or not getattr(model, "is_trained", False):
        proposals = rng.uniform(bounds[:, 0], bounds[:, 1],
                                size=(n_proposals, bounds.shape[0]))
        return AcquisitionBatch(proposals, "prior")

    samples = np.atleast_2d(np.asarray(
        getattr(current_posterior, "samples", current_posterior), dtype=float
    ))
    starts = samples[rng.integers(samples.shape[0], size=n_proposals)]
    raw = model.predict_samples_batch(starts, rng)
    proposals = np.clip(raw, bounds[:, 0], bounds[:, 1])
    source = "transition-blr" if hasattr(model, "coef") else "transition-bnn"
    return AcquisitionBatch(proposals, source)
