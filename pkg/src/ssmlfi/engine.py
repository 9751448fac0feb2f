"""Run orchestration: the moving-window method and the per-step baseline.

Both methods share one growing simulation store seeded with ``n_init``
prior simulations; each loop iteration adds exactly ``n_step`` simulator
calls, so after a run the call counter equals
``n_init + n_step * (T - window)``.

Time steps are 1-indexed against the observation array (step t reads row
t-1). A window is the inclusive index range [t0, t] holding
``t - t0 + 1`` objectives; it starts at [1, window] and advances one step
per iteration while t < T. Consequently a run with T == window performs
no iterations, and the last time index never enters a window.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import transition_proposals, lcbsc_next
from .gp import gp_fit
from .lmc import LMCConfig, WindowedDiscrepancySet, lmc_fit
from .models import StateSpaceModel, SummaryStats, discrepancy_batch, summarize_batch
from .posterior import PosteriorSampleSet, extract_posterior, select_threshold
from .transitions import (BLRModel, BNNConfig, BNNModel, blr_fit,
                          box_normalization, build_training_pairs)

METHODS = ("lmc-bnn", "lmc-blr", "bolfi")


class SimulationStore:
    """Append-only record of (theta, observation set) simulator calls."""

    def __init__(self, dim: int, n_obs_points: int):
        self.thetas = np.empty((0, dim))
        self.observations = np.empty((0, n_obs_points))

    def add(self, thetas: np.ndarray, observations: np.ndarray):
        thetas = np.atleast_2d(thetas)
        observations = np.atleast_2d(observations)
        if thetas.shape[0] != observations.shape[0]:
            raise ValueError("thetas and observations must have matching rows")
        self.thetas = np.vstack([self.thetas, thetas])
        self.observations = np.vstack([self.observations, observations])

    @property
    def counter(self) -> int:
        return self.thetas.shape[0]


@dataclass
class RunConfig:
    """Settings for one inference run.

    The first block mirrors the method's own knobs; the second holds
    surrogate training budgets sized for a single-core desk run.
    """

    window: int = 2  # L, moving-window size
    n_init: int = 20  # B0, prior simulations before the loop
    n_step: int = 2  # B_sim, simulations acquired per iteration
    n_posterior: int = 1000  # I, resampled draws per state posterior
    n_pairs: int = 10_000  # K, transition-model training pairs per update
    seed: int = 0
    method: str = "lmc-bnn"

    lmc_epochs: int = 500
    lmc_inducing: int = 50
    lmc_latents: int | None = None  # default: one per window objective
    bnn_update_epochs: int = 1  # warm-started epochs per window move

    def validate(self, horizon: int):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 1 <= self.window <= horizon:
            raise ValueError(
                f"window must satisfy 1 <= window <= horizon, got "
                f"window={self.window}, horizon={horizon}"
            )
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.n_step < 0:
            raise ValueError("n_step must be >= 0")
        if self.n_posterior < 1:
            raise ValueError("n_posterior must be >= 1")


class PosteriorStore:
    """Per-time-index posterior sample sets with window-refresh tracking."""

    def __init__(self):
        self._entries: dict[int, PosteriorSampleSet] = {}
        self.latest_window: tuple[int, int] | None = None
        self.fresh: frozenset[int] = frozenset()

    def begin_window(self, window: tuple[int, int]):
        self.latest_window = window
        self.fresh = frozenset()

    def replace(self, t: int, samples: PosteriorSampleSet):
        self._entries[t] = samples
        self.fresh = self.fresh | {t}

    @property
    def indices(self) -> list[int]:
        return sorted(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, t: int) -> bool:
        return t in self._entries

    def __getitem__(self, t: int) -> PosteriorSampleSet:
        return self._entries[t]

    def items(self):
        return ((t, self._entries[t]) for t in self.indices)

    def as_mapping(self) -> dict[int, PosteriorSampleSet]:
        return dict(self._entries)

    def mean(self, t: int) -> np.ndarray:
        return self._entries[t].mean()


@dataclass
class RunResult:
    """Outputs of one run: posteriors, transition model, simulation record."""

    posteriors: PosteriorStore
    transition_model: BNNModel | BLRModel | None
    store: SimulationStore
    method: str
    iterations: list[dict] = field(default_factory=list)


def recompute_discrepancies(
    store: SimulationStore,
    window_observations: np.ndarray,
    window: tuple[int, int],
) -> WindowedDiscrepancySet:
    """Discrepancy targets for every stored simulation against each window
    objective. Touches only stored data; performs zero simulator calls."""
    if store.counter == 0:
        raise ValueError("simulation store is empty")
    window_observations = np.atleast_2d(window_observations)
    t0, t = window
    if window_observations.shape[0] != t - t0 + 1:
        raise ValueError("window observations do not match the window size")
    sim_means, sim_stds = summarize_batch(store.observations)
    columns = []
    for row in window_observations:
        observed = SummaryStats(float(row.mean()), float(row.std()))
        columns.append(discrepancy_batch(observed, sim_means, sim_stds))
    targets = np.column_stack(columns)
    return WindowedDiscrepancySet(inputs=store.thetas.copy(), targets=targets,
                                  window=window)


def _observation_matrix(observations) -> np.ndarray:
    if hasattr(observations, "observations"):
        observations = observations.observations
    return np.atleast_2d(np.asarray(observations, dtype=float))


def _write_log(stream, record: dict):
    if stream is not None:
        stream.write(json.dumps(record) + "\n")


def run_lmc_method(
    model: StateSpaceModel,
    observations,
    config: RunConfig,
    log_stream=None,
) -> RunResult:
    """Moving-window multi-objective inference with transition proposals.

    Per iteration: recompute window discrepancies from the shared store,
    fit the coregionalized surrogate, refresh the window's posteriors,
    retrain the transition model on freshly paired posterior draws, then
    acquire and simulate ``n_step`` proposals from its predictive
    distribution.
    """
    obs = _observation_matrix(observations)
    horizon = obs.shape[0]
    config.validate(horizon)
    if config.method not in ("lmc-bnn", "lmc-blr"):
        raise ValueError("run_lmc_method expects an lmc-* method")

    seed_seq = np.random.SeedSequence(config.seed)
    init_seq, sim_seq, loop_seq, bnn_seq = seed_seq.spawn(4)
    init_rng = np.random.default_rng(init_seq)
    sim_rng = np.random.default_rng(sim_seq)
    loop_root = np.random.default_rng(loop_seq)
    bnn_seed = int(bnn_seq.generate_state(1)[0])

    store = SimulationStore(model.dim, model.n_obs_points)
    init_thetas = model.sample_prior(init_rng, config.n_init)
    store.add(init_thetas, model.observe_batch(init_thetas, sim_rng))

    posteriors = PosteriorStore()
    transition = None
    bounds = model.bounds
    result = RunResult(posteriors, None, store, config.method)

    t0, t = 1, config.window
    iteration = 0
    while t < horizon:
        iteration += 1
        started = time.perf_counter()
        iter_rng = np.random.default_rng(loop_root.integers(2**63))
        lmc_seed = int(loop_root.integers(2**31))

        window = (t0, t)
        train = recompute_discrepancies(store, obs[t0 - 1:t], window)
        surrogate = lmc_fit(train, LMCConfig(
            n_latents=config.lmc_latents,
            n_inducing=config.lmc_inducing,
            epochs=config.lmc_epochs,
            seed=lmc_seed,
            bounds=bounds,
        ))

        posteriors.begin_window(window)
        epsilons = {}
        for w in range(t0, t + 1):
            threshold = select_threshold(surrogate, w, bounds)
            epsilons[str(w)] = threshold.epsilon
            posteriors.replace(w, extract_posterior(
                surrogate, w, bounds, config.n_posterior, iter_rng,
                threshold=threshold, t=w,
            ))

        proposal_source = "prior"
        if len(posteriors) >= 2:
            pairs = build_training_pairs(
                posteriors.as_mapping(), config.n_pairs, iter_rng
            )
            if config.method == "lmc-bnn":
                if transition is None:
                    transition = BNNModel(
                        model.dim, BNNConfig(seed=bnn_seed),
                        normalization=box_normalization(bounds),
                    )
                transition.train(pairs, epochs=config.bnn_update_epochs)
            else:
                transition = blr_fit(pairs)

        if config.n_step > 0:
            batch = transition_proposals(
                transition, posteriors[t], config.n_step, bounds, iter_rng
            )
            proposal_source = batch.source
            store.add(batch.proposals,
                      model.observe_batch(batch.proposals, sim_rng))

        record = {
            "iteration": iteration, "t0": t0, "t": t, "epsilon": epsilons,
            "proposal_source": proposal_source,
            "simulator_calls": store.counter,
            "wall_s": time.perf_counter() - started,
        }
        result.iterations.append(record)
        _write_log(log_stream, record)
        t0 += 1
        t += 1

    expected = config.n_init + config.n_step * iteration
    if store.counter != expected:
        raise RuntimeError(
            f"budget accounting violated: {store.counter} calls, expected {expected}"
        )
    result.transition_model = transition
    return result


def run_bolfi_baseline(
    model: StateSpaceModel,
    observations,
    config: RunConfig,
    log_stream=None,
) -> RunResult:
    """Per-step independent GP surrogates at the same simulation budget.

    The loop mirrors the moving-window schedule: the first iteration fits
    every step of the first window from the shared initial simulations,
    later iterations fit only the newest step; each iteration then
    acquires ``n_step`` points by LCB minimization on the newest step's
    surrogate. Posteriors are extracted once per step and kept.
    """
    obs = _observation_matrix(observations)
    horizon = obs.shape[0]
    config.validate(horizon)

    seed_seq = np.random.SeedSequence(config.seed)
    init_rng, sim_rng, loop_root = (np.random.default_rng(s) for s in seed_seq.spawn(3))

    store = SimulationStore(model.dim, model.n_obs_points)
    init_thetas = model.sample_prior(init_rng, config.n_init)
    store.add(init_thetas, model.observe_batch(init_thetas, sim_rng))

    posteriors = PosteriorStore()
    bounds = model.bounds
    result = RunResult(posteriors, None, store, "bolfi")
    acq_counter = 0

    t0, t = 1, config.window
    iteration = 0
    while t < horizon:
        iteration += 1
        started = time.perf_counter()
        iter_rng = np.random.default_rng(loop_root.integers(2**63))

        steps = range(t0, t + 1) if iteration == 1 else [t]
        posteriors.begin_window((t0, t))
        epsilons = {}
        surrogate = None
        for step in steps:
            observed = obs[step - 1]
            sim_means, sim_stds = summarize_batch(store.observations)
            deltas = discrepancy_batch(
                SummaryStats(float(observed.mean()), float(observed.std())),
                sim_means, sim_stds,
            )
            surrogate = gp_fit(store.thetas, deltas, bounds, rng=iter_rng)
            threshold = select_threshold(surrogate, None, bounds)
            epsilons[str(step)] = threshold.epsilon
            posteriors.replace(step, extract_posterior(
                surrogate, None, bounds, config.n_posterior, iter_rng,
                threshold=threshold, t=step,
            ))

        for _ in range(config.n_step):
            acq_counter += 1
            proposal = lcbsc_next(surrogate, acq_counter, model.dim, bounds,
                                  rng=iter_rng)
            store.add(proposal[None, :],
                      model.observe_batch(proposal[None, :], sim_rng))

        record = {
            "iteration": iteration, "t0": t0, "t": t, "epsilon": epsilons,
            "proposal_source": "lcbsc",
            "simulator_calls": store.counter,
            "wall_s": time.perf_counter() - started,
        }
        result.iterations.append(record)
        _write_log(log_stream, record)
        t0 += 1
        t += 1

    expected = config.n_init + config.n_step * iteration
    if store.counter != expected:
        raise RuntimeError(
            f"budget accounting violated: {store.counter} calls, expected {expected}"
        )
    return result


def run_method(model, observations, config: RunConfig, log_stream=None) -> RunResult:
    """Dispatch on ``config.method``."""
    if config.method == "bolfi":
        return run_bolfi_baseline(model, observations, config, log_stream)
    return run_lmc_method(model, observations, config, log_stream)
