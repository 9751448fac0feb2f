"""Brute-force reference methods used to validate the surrogate pipeline.

Rejection sampling against a retention quantile of the discrepancy, and a
Gaussian-KDE mode estimate with Scott-rule bandwidths for turning an
accepted sample cloud into a point estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import StateSpaceModel, SummaryStats, discrepancy_batch, summarize_batch

KDE_ASCENT_STEPS = 1000
KDE_STARTS = 5


@dataclass(frozen=True)
class ABCResult:
    """Accepted parameters, the realized threshold, and the proposal count."""

    accepted: np.ndarray  # (k, m)
    threshold: float  # largest retained discrepancy
    n_proposals: int


def rejection_abc(
    model: StateSpaceModel,
    observed: SummaryStats,
    n_proposals: int,
    retain: float,
    rng: np.random.Generator,
) -> ABCResult:
    """Keep the ceil(retain * N) prior draws with the lowest discrepancy."""
    if n_proposals < 1:
        raise ValueError("n_proposals must be >= 1")
    if not 0.0 < retain <= 1.0:
        raise ValueError("retain must be in (0, 1]")
    thetas = model.sample_prior(rng, n_proposals)
    sims = model.observe_batch(thetas, rng)
    means, stds = summarize_batch(sims)
    deltas = discrepancy_batch(observed, means, stds)
    n_keep = math.ceil(retain * n_proposals)
    order = np.argsort(deltas, kind="stable")[:n_keep]
    return ABCResult(
        accepted=thetas[order],
        threshold=float(deltas[order[-1]]),
        n_proposals=n_proposals,
    )


def scott_bandwidth(n: int, dim: int) -> float:
    """Scott's rule n^(-1/(d+4)) on standardized data."""
    return float(n) ** (-1.0 / (dim + 4))


def _kde_log_density(points: np.ndarray, samples: np.ndarray, bandwidth: float,
                     chunk: int = 2000) -> np.ndarray:
    """Log of the Gaussian-kernel density (up to the shared constant)."""
    points = np.atleast_2d(points)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        sq = ((block[:, None, :] - samples[None, :, :]) ** 2).sum(axis=2)
        # log-sum-exp over kernels
        z = -0.5 * sq / bandwidth**2
        zmax = z.max(axis=1, keepdims=True)
        out[start:start + chunk] = (zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1)))
    return out


def kde_map_estimate(samples: np.ndarray) -> np.ndarray:
    """Mode of a Gaussian KDE over the samples.

    Samples are standardized per dimension, the bandwidth follows Scott's
    rule, and the mode is located by density ascent (mean-shift steps,
    each of which moves along the KDE gradient) started from the
    highest-density sample points.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, dim = samples.shape
    if n < 2:
        raise ValueError("kde_map_estimate needs at least 2 samples")

    shift = samples.mean(axis=0)
    scale = samples.std(axis=0)
    scale[scale == 0.0] = 1.0
    std = (samples - shift) / scale
    bandwidth = scott_bandwidth(n, dim)

    density_at_samples = _kde_log_density(std, std, bandwidth)
    starts = std[np.argsort(density_at_samples)[::-1][:KDE_STARTS]]

    best_point, best_density = None, -np.inf
    for point in starts:
        x = point.copy()
        for _ in range(KDE_ASCENT_STEPS):
            sq = ((x - std) ** 2).sum(axis=1)
            w = np.exp(-0.5 * (sq - sq.min()) / bandwidth**2)
            new = (w[:, None] * std).sum(axis=0) / w.sum()
            if np.max(np.abs(new - x)) < 1e-10:
                x = new
                break
            x = new
        density = float(_kde_log_density(x[None, :], std, bandwidth)[0])
        if density > best_density:
            best_point, best_density = x, density
    return best_point * scale + shift
