"""Multi-output discrepancy surrogate: linear model of coregionalization.

Each of the L window objectives is modelled as a fixed linear mixture of Q
sparse variational GP latents plus a per-output linear trend:

    f_l(x) = k_l . x + b_l + sum_q A[l, q] * u_q(x)

The latents are zero-mean GPs with RBF kernels (per-dimension
lengthscales, log-parameterized and started at 0), M inducing points
initialized uniformly inside the input box, and a whitened variational
Gaussian over the inducing values. Everything, mixing matrix, inducing
locations, variational parameters, kernel and trend hyperparameters, and
a shared Gaussian noise variance, is trained jointly by full-batch Adam
on the exact Gaussian-likelihood evidence lower bound.

Refreshing the moving window only recomputes discrepancy targets from
stored simulations; fitting never touches the simulator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .gp import GPPrediction

_DTYPE = torch.float64


@dataclass(frozen=True)
class WindowedDiscrepancySet:
    """Training set for the L objectives of one moving-window position."""

    inputs: np.ndarray  # (n, m), shared across objectives
    targets: np.ndarray  # (n, L), column w - t0 holds delta_w
    window: tuple[int, int]  # inclusive (t0, t); L = t - t0 + 1

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        t0, t = self.window
        width = t - t0 + 1
        if width < 1:
            raise ValueError("window must contain at least one objective")
        if targets.shape[1] != width:
            raise ValueError(
                f"targets have {targets.shape[1]} columns but window "
                f"({t0}, {t}) holds {width} objectives"
            )
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets must have matching rows")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n_objectives(self) -> int:
        return self.targets.shape[1]

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class LMCConfig:
    n_latents: int | None = None  # Q; defaults to the number of objectives
    n_inducing: int = 50
    learning_rate: float = 0.1
    epochs: int = 1000
    noise_init_fraction: float = 0.01
    jitter: float = 1e-6
    seed: int = 0
    bounds: np.ndarray | None = None  # input box; data-derived when absent


class LMCModel:
    """Fitted coregionalized surrogate; immutable after training."""

    def __init__(self, train: WindowedDiscrepancySet, config: LMCConfig):
        self.config = config
        self.window = train.window
        self.n_objectives = train.n_objectives
        self.n_latents = config.n_latents or train.n_objectives
        self.x_raw = train.inputs
        self.y_raw = train.targets
        self.elbo_history: list[float] = []

        if config.bounds is not None:
            box = np.asarray(config.bounds, dtype=float).reshape(-1, 2)
        else:
            lo, hi = train.inputs.min(axis=0), train.inputs.max(axis=0)
            box = np.column_stack([lo, hi])
        shift = 0.5 * (box[:, 0] + box[:, 1])
        scale = 0.5 * (box[:, 1] - box[:, 0])
        scale[scale == 0.0] = 1.0
        self.shift = shift
        self.scale = scale

        q, m = self.n_latents, train.inputs.shape[1]
        n_ind = config.n_inducing
        gen = torch.Generator().manual_seed(config.seed)
        self._inducing = (
            torch.rand(q, n_ind, m, generator=gen, dtype=_DTYPE) * 2.0 - 1.0
        ).requires_grad_(True)
        self._log_lengthscales = torch.zeros(q, m, dtype=_DTYPE, requires_grad=True)
        self._log_signal = torch.zeros(q, dtype=_DTYPE, requires_grad=True)
        self._q_mean = torch.zeros(q, n_ind, dtype=_DTYPE, requires_grad=True)
        self._q_lower = torch.zeros(q, n_ind, n_ind, dtype=_DTYPE, requires_grad=True)
        self._q_logdiag = torch.zeros(q, n_ind, dtype=_DTYPE, requires_grad=True)

        l = train.n_objectives
        mix = np.full((l, q), 0.1)
        for i in range(l):
            mix[i, i % q] = 1.0
        self._mixing = torch.tensor(mix, dtype=_DTYPE, requires_grad=True)
        self._trend_slope = torch.zeros(l, m, dtype=_DTYPE, requires_grad=True)
        self._trend_bias = torch.zeros(l, dtype=_DTYPE, requires_grad=True)

        var_y = max(float(np.var(train.targets)), 1e-8)
        self._log_noise = torch.tensor(
            math.log(config.noise_init_fraction * var_y), dtype=_DTYPE,
            requires_grad=True,
        )

        self._x_train = torch.tensor(
            (train.inputs - shift) / scale, dtype=_DTYPE
        )
        self._y_train = torch.tensor(train.targets, dtype=_DTYPE)

    # -- internals -------------------------------------------------------

    def _parameters(self) -> list[torch.Tensor]:
        return [
            self._inducing, self._log_lengthscales, self._log_signal,
            self._q_mean, self._q_lower, self._q_logdiag,
            self._mixing, self._trend_slope, self._trend_bias, self._log_noise,
        ]

    def _kernel(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        # a: (Q, n, m), b: (Q, k, m) -> (Q, n, k)
        ls = torch.exp(self._log_lengthscales).unsqueeze(1)
        diff = a.unsqueeze(2) - b.unsqueeze(1)
        sq = (diff / ls.unsqueeze(1)).pow(2).sum(-1)
        return torch.exp(self._log_signal).view(-1, 1, 1) * torch.exp(-0.5 * sq)

    def _variational_sqrt(self) -> torch.Tensor:
        lower = torch.tril(self._q_lower, diagonal=-1)
        return lower + torch.diag_embed(torch.exp(self._q_logdiag))

    def _latent_moments(self, x_norm: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior mean/variance of each latent at (n, m) normalized rows."""
        q = self.n_latents
        n_ind = self.config.n_inducing
        xq = x_norm.unsqueeze(0).expand(q, *x_norm.shape)
        signal = torch.exp(self._log_signal)
        k_mm = self._kernel(self._inducing, self._inducing)
        k_mm = k_mm + (self.config.jitter * signal).view(-1, 1, 1) * torch.eye(
            n_ind, dtype=_DTYPE
        )
        chol = torch.linalg.cholesky(k_mm)
        k_mn = self._kernel(self._inducing, xq)  # (Q, M, n)
        white = torch.linalg.solve_triangular(chol, k_mn, upper=False)  # (Q, M, n)
        mean = torch.einsum("qmn,qm->qn", white, self._q_mean)
        s_sqrt = self._variational_sqrt()
        proj = torch.einsum("qij,qin->qjn", s_sqrt, white)
        var = signal.view(-1, 1) - white.pow(2).sum(1) + proj.pow(2).sum(1)
        return mean, torch.clamp(var, min=0.0)

    def _output_moments(self, x_norm: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        latent_mean, latent_var = self._latent_moments(x_norm)
        trend = x_norm @ self._trend_slope.T + self._trend_bias
        mean = trend + torch.einsum("lq,qn->nl", self._mixing, latent_mean)
        var = torch.einsum("lq,qn->nl", self._mixing.pow(2), latent_var)
        return mean, var

    def _elbo(self) -> torch.Tensor:
        mean, var = self._output_moments(self._x_train)
        noise = torch.exp(self._log_noise)
        resid = self._y_train - mean
        log_lik = (
            -0.5 * (resid.pow(2) + var) / noise
            - 0.5 * math.log(2 * math.pi)
            - 0.5 * self._log_noise
        ).sum()
        s_sqrt = self._variational_sqrt()
        kl = 0.5 * (
            self._q_mean.pow(2).sum()
            + s_sqrt.pow(2).sum()
            - self.n_latents * self.config.n_inducing
            - 2.0 * self._q_logdiag.sum()
        )
        return log_lik - kl

    def _fit(self):
        # cosine decay from the configured rate keeps late epochs from
        # oscillating out of a good basin (the mixing/latent scale symmetry
        # otherwise lets full-rate Adam drift into a collapsed solution)
        opt = torch.optim.Adam(self._parameters(), lr=self.config.learning_rate)
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            opt, T_max=max(self.config.epochs, 1),
            eta_min=self.config.learning_rate / 100.0,
        )
        for _ in range(self.config.epochs):
            opt.zero_grad()
            loss = -self._elbo()
            if not torch.isfinite(loss):
                raise RuntimeError("LMC training diverged to a non-finite ELBO")
            loss.backward()
            opt.step()
            scheduler.step()
            self.elbo_history.append(-loss.item())
        for p in self._parameters():
            p.requires_grad_(False)

    # -- public surface ----------------------------------------------------

    def _column(self, objective: int) -> int:
        t0, t = self.window
        if not t0 <= objective <= t:
            raise ValueError(
                f"objective {objective} outside the window [{t0}, {t}]"
            )
        return objective - t0

    def _normalize(self, x: np.ndarray) -> torch.Tensor:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return torch.tensor((x - self.shift) / self.scale, dtype=_DTYPE)

    def predict(self, x: np.ndarray, objective: int) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean/variance of one window objective at raw rows."""
        col = self._column(objective)
        with torch.no_grad():
            mean, var = self._output_moments(self._normalize(x))
        return mean[:, col].numpy(), var[:, col].numpy()

    def predict_latents(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean/variance of every latent; both (Q, n)."""
        with torch.no_grad():
            mean, var = self._latent_moments(self._normalize(x))
        return mean.numpy(), var.numpy()

    def trend_values(self, x: np.ndarray) -> np.ndarray:
        """Per-output linear trend at raw rows; (n, L)."""
        with torch.no_grad():
            xn = self._normalize(x)
            return (xn @ self._trend_slope.T + self._trend_bias).numpy()

    def mean_gradient(self, x: np.ndarray, objective: int) -> np.ndarray:
        col = self._column(objective)
        xt = torch.tensor(np.asarray(x, dtype=float).reshape(1, -1), requires_grad=True)
        xn = (xt - torch.tensor(self.shift)) / torch.tensor(self.scale)
        mean, _ = self._output_moments(xn)
        mean[0, col].backward()
        return xt.grad.numpy().reshape(-1)

    @property
    def noise_variance(self) -> float:
        return float(torch.exp(self._log_noise))

    @property
    def mixing_matrix(self) -> np.ndarray:
        return self._mixing.detach().numpy().copy()

    def best_training_input(self, objective: int) -> np.ndarray:
        col = self._column(objective)
        return self.x_raw[int(np.argmin(self.y_raw[:, col]))]


def lmc_fit(train: WindowedDiscrepancySet, config: LMCConfig | None = None) -> LMCModel:
    """Train the coregionalized surrogate on one window's discrepancies."""
    if train.size < 2:
        raise ValueError("lmc_fit needs at least 2 training points")
    model = LMCModel(train, config or LMCConfig())
    model._fit()
    return model


def lmc_predict(model: LMCModel, theta: np.ndarray, objective: int) -> GPPrediction:
    """Predictive mean and variance of one objective at a single point."""
    mu, var = model.predict(np.atleast_2d(theta), objective)
    return GPPrediction(float(mu[0]), float(var[0]))
