"""Benchmark state-space models: priors, dynamics, observation simulators.

Three tractable models are provided, addressable by name through
``MODEL_REGISTRY``:

``lg``
    Linear Gaussian: ``theta_t = 0.95 * theta_{t-1} + v_t`` with
    ``v ~ N(0, 1)``, observed as ``x = theta + w`` with ``w ~ N(0, 10^2)``.
``nn``
    Non-linear non-Gaussian (the classic 1-d benchmark with the
    ``25*theta/(theta^2+1)`` term and a bimodal ``x = theta^2/20``
    observation map).
``sv``
    Stochastic volatility with a compound-Poisson driven variance process;
    the state is ``(mu, beta, v)`` and only the volatility ``v`` evolves.

Each observation is a set of 10 i.i.d. points; inference works on the
(mean, population std) summary of such a set and the log-Euclidean
distance between summaries.

True dynamics are used only for ground-truth generation and evaluation;
inference methods never see them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Log-distance floor: the log-Euclidean discrepancy is -inf at an exact
# summary match, which would poison surrogate training.
DISCREPANCY_FLOOR = 1e-12

N_OBS_POINTS = 10


@dataclass(frozen=True)
class ParameterVector:
    """A state point with its per-dimension prior box."""

    values: np.ndarray
    bounds: np.ndarray  # shape (m, 2), columns (low, high)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if values.shape[0] != bounds.shape[0]:
            raise ValueError(
                f"value dimension {values.shape[0]} does not match "
                f"bounds dimension {bounds.shape[0]}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def clipped(self) -> "ParameterVector":
        return ParameterVector(
            np.clip(self.values, self.bounds[:, 0], self.bounds[:, 1]),
            self.bounds,
        )


@dataclass(frozen=True)
class ObservationSet:
    """One time-step's dataset of scalar observation points."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.asarray(self.points, dtype=float).reshape(-1)
        )


@dataclass(frozen=True)
class SummaryStats:
    """Mean and population standard deviation of an observation set."""

    mean: float
    std: float


@dataclass(frozen=True)
class GroundTruthRun:
    """A sampled trajectory plus its observations, for evaluation only."""

    states: np.ndarray  # (T, m)
    observations: np.ndarray  # (T, n_points)
    seed: int

    def __post_init__(self):
        if len(self.states) != len(self.observations):
            raise ValueError("states and observations must have equal length")

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


class StateSpaceModel:
    """Base class: prior box, transition step, observation simulator."""

    name: str = ""
    dim: int = 1
    n_obs_points: int = N_OBS_POINTS

    # subclasses set these
    theta0: np.ndarray
    bounds: np.ndarray  # (m, 2)

    def sample_prior(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform draw(s) inside the prior box; (m,) or (n, m)."""
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        size = (self.dim,) if n is None else (n, self.dim)
        return rng.uniform(low, high, size=size)

    def init_aux(self, theta: np.ndarray):
        """Auxiliary dynamics state threaded through rollouts (None if unused)."""
        return None

    def step(self, theta, t, rng, noise=True, aux=None):
        """One transition; returns (theta_next, aux_next), both unclipped."""
        raise NotImplementedError

    def observe(self, theta, rng, noise=True) -> np.ndarray:
        """One observation set (n_obs_points,) at the given state."""
        raise NotImplementedError

    def observe_batch(self, thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Observation sets for a (n, m) batch of states; (n, n_obs_points)."""
        thetas = np.atleast_2d(thetas)
        return np.stack([self.observe(th, rng) for th in thetas])

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.bounds[:, 0], self.bounds[:, 1])


class LinearGaussianModel(StateSpaceModel):
    """1-d linear dynamics with heavy observation noise."""

    name = "lg"
    dim = 1
    transition_coef = 0.95
    process_std = 1.0
    obs_std = 10.0

    def __init__(self):
        self.theta0 = np.array([100.0])
        self.bounds = np.array([[0.0, 15.0]])

    def step(self, theta, t, rng, noise=True, aux=None):
        v = rng.normal(0.0, self.process_std) if noise else 0.0
        return np.array([self.transition_coef * theta[0] + v]), None

    def observe(self, theta, rng, noise=True):
        w = (rng.normal(0.0, self.obs_std, size=self.n_obs_points)
             if noise else np.zeros(self.n_obs_points))
        return theta[0] + w

    def observe_batch(self, thetas, rng):
        thetas = np.atleast_2d(thetas)
        w = rng.normal(0.0, self.obs_std, size=(thetas.shape[0], self.n_obs_points))
        return thetas[:, 0:1] + w


class NonlinearModel(StateSpaceModel):
    """The bimodal non-linear benchmark; both noises have variance 10."""

    name = "nn"
    dim = 1
    process_std = math.sqrt(10.0)
    obs_std = math.sqrt(10.0)

    def __init__(self):
        self.theta0 = np.array([0.0])
        self.bounds = np.array([[-30.0, 30.0]])

    def step(self, theta, t, rng, noise=True, aux=None):
        v = rng.normal(0.0, self.process_std) if noise else 0.0
        x = theta[0]
        nxt = x / 2.0 + 25.0 * x / (x * x + 1.0) + 8.0 * math.cos(1.2 * t) + v
        return np.array([nxt]), None

    def observe(self, theta, rng, noise=True):
        w = (rng.normal(0.0, self.obs_std, size=self.n_obs_points)
             if noise else np.zeros(self.n_obs_points))
        return theta[0] ** 2 / 20.0 + w

    def observe_batch(self, thetas, rng):
        thetas = np.atleast_2d(thetas)
        w = rng.normal(0.0, self.obs_std, size=(thetas.shape[0], self.n_obs_points))
        return thetas[:, 0:1] ** 2 / 20.0 + w


class StochasticVolatilityModel(StateSpaceModel):
    """Compound-Poisson stochastic volatility; state is (mu, beta, v).

    The auxiliary variable z is the decaying variance process behind the
    volatility updates:

        v_{t+1} = z_t - z_{t+1} + sum_j e_j
        z_{t+1} = exp(-lam) * z_t + sum_j exp(-lam * (t + 1 - c_j)) * e_j

    with jump count k ~ Poisson(0.5 * lam^2 / 0.25^2), jump times
    c_j ~ Unif(t, t+1) and sizes e_j ~ Exponential(rate 0.5 / 0.25^2).
    mu and beta never move. z is initialised as v / (1 - exp(-lam)) so the
    jump-free update leaves the volatility continuous.
    """

    name = "sv"
    dim = 3
    decay = 0.01  # lam
    jump_rate = 0.5 * 0.01**2 / 0.25**2  # Poisson intensity
    jump_scale = 0.25**2 / 0.5  # Exponential mean (rate 0.5/0.25^2)

    def __init__(self):
        self.theta0 = np.array([0.0, 0.0, 1.0])  # (mu, beta, v0)
        self.bounds = np.array([[-2.0, 2.0], [-5.0, 5.0], [0.0, 3.0]])

    def init_aux(self, theta):
        return float(theta[2]) / (1.0 - math.exp(-self.decay))

    def step(self, theta, t, rng, noise=True, aux=None):
        z = self.init_aux(theta) if aux is None else float(aux)
        k = int(rng.poisson(self.jump_rate)) if noise else 0
        if k > 0:
            c = rng.uniform(t, t + 1.0, size=k)
            e = rng.exponential(self.jump_scale, size=k)
            jump_total = float(e.sum())
            jump_decayed = float(np.sum(np.exp(-self.decay * (t + 1.0 - c)) * e))
        else:
            jump_total = jump_decayed = 0.0
        z_next = math.exp(-self.decay) * z + jump_decayed
        v_next = z - z_next + jump_total
        return np.array([theta[0], theta[1], v_next]), z_next

    def observe(self, theta, rng, noise=True):
        mu, beta, v = theta
        eps = (rng.normal(0.0, 1.0, size=self.n_obs_points)
               if noise else np.zeros(self.n_obs_points))
        return mu + beta * v + (math.sqrt(max(v, 0.0)) + 1e-5) * eps

    def observe_batch(self, thetas, rng):
        thetas = np.atleast_2d(thetas)
        mu, beta, v = thetas[:, 0:1], thetas[:, 1:2], thetas[:, 2:3]
        eps = rng.normal(0.0, 1.0, size=(thetas.shape[0], self.n_obs_points))
        return mu + beta * v + (np.sqrt(np.maximum(v, 0.0)) + 1e-5) * eps


MODEL_REGISTRY: dict[str, type[StateSpaceModel]] = {
    "lg": LinearGaussianModel,
    "nn": NonlinearModel,
    "sv": StochasticVolatilityModel,
}


def get_model(name: str) -> StateSpaceModel:
    try:
        return MODEL_REGISTRY[name.lower()]()
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {sorted(MODEL_REGISTRY)}"
        ) from None


# ----------------------------------------------------------------------
# Operations


def sample_prior(model: StateSpaceModel, rng: np.random.Generator) -> ParameterVector:
    """One uniform draw from the model's prior box."""
    return ParameterVector(model.sample_prior(rng), model.bounds)


def step_dynamics(
    model: StateSpaceModel,
    theta: np.ndarray | ParameterVector,
    t: int,
    rng: np.random.Generator,
    noise: bool = True,
    aux=None,
) -> np.ndarray:
    """One raw transition (unclipped). For evaluation paths only."""
    if t < 0:
        raise ValueError("time index must be >= 0")
    values = theta.values if isinstance(theta, ParameterVector) else np.asarray(theta, float)
    nxt, _ = model.step(values, t, rng, noise=noise, aux=aux)
    return nxt


def simulate_observation(
    model: StateSpaceModel,
    theta: np.ndarray | ParameterVector,
    rng: np.random.Generator,
    noise: bool = True,
) -> ObservationSet:
    values = theta.values if isinstance(theta, ParameterVector) else np.asarray(theta, float)
    return ObservationSet(model.observe(values, rng, noise=noise))


def summarize(obs: ObservationSet | np.ndarray) -> SummaryStats:
    """Arithmetic mean and population (divide-by-n) standard deviation."""
    points = obs.points if isinstance(obs, ObservationSet) else np.asarray(obs, float)
    if points.size == 0:
        raise ValueError("cannot summarize an empty observation set")
    return SummaryStats(float(points.mean()), float(points.std()))


def summarize_batch(obs_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(means, stds) over the rows of an (n, n_points) observation matrix."""
    obs_matrix = np.atleast_2d(obs_matrix)
    return obs_matrix.mean(axis=1), obs_matrix.std(axis=1)


def discrepancy(observed: SummaryStats, synthetic: SummaryStats) -> float:
    """Log of the Euclidean distance between two summary vectors.

    Floored at log(DISCREPANCY_FLOOR) so an exact match stays finite.
    """
    parts = (observed.mean, observed.std, synthetic.mean, synthetic.std)
    if not all(math.isfinite(p) for p in parts):
        raise ValueError("discrepancy requires finite summary statistics")
    dist = math.hypot(observed.mean - synthetic.mean, observed.std - synthetic.std)
    return math.log(max(dist, DISCREPANCY_FLOOR))


def discrepancy_batch(
    observed: SummaryStats, means: np.ndarray, stds: np.ndarray
) -> np.ndarray:
    """Vectorized discrepancy of one observed summary against many."""
    dist = np.hypot(observed.mean - means, observed.std - stds)
    return np.log(np.maximum(dist, DISCREPANCY_FLOOR))


def generate_ground_truth(
    model: StateSpaceModel, horizon: int, seed: int
) -> GroundTruthRun:
    """Sample one trajectory of states and observations.

    States are clipped to the prior box at every step: the observation
    simulator is only defined inside the prior support, and estimates are
    evaluated against these clipped states.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    theta = model.theta0.copy()
    aux = model.init_aux(theta)
    states = np.empty((horizon, model.dim))
    observations = np.empty((horizon, model.n_obs_points))
    for t in range(1, horizon + 1):
        theta, aux = model.step(theta, t, rng, noise=True, aux=aux)
        theta = model.clip(theta)
        states[t - 1] = theta
        observations[t - 1] = model.observe(theta, rng, noise=True)
    return GroundTruthRun(states=states, observations=observations, seed=seed)
