"""Surrogates for the unknown Markovian transition step.

Training data are pairs of samples drawn from posteriors at consecutive
time indices. Two interchangeable models are provided:

* a variational Bayesian neural network (two 256-unit hidden layers,
  factorized Gaussian weights with softplus spreads, trained by momentum
  SGD on the evidence-lower-bound loss estimated from 10 weight draws per
  batch and 100 batches per epoch), and
* a Bayesian linear regression fitted in closed form by least squares,
  with a spherical Gaussian residual.

Both expose predictive sampling: draw a parameter realization, push the
current state through it, add noise where the model carries noise. A
fitted model can be serialized to a JSON-compatible record and restored.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as tfunc

RECORD_FORMAT = "ssmlfi-transition-v1"


@dataclass(frozen=True)
class TrainingPairs:
    """(theta_j, theta_{j+1}) rows with the time indices that produced them."""

    inputs: np.ndarray  # (K, m)
    targets: np.ndarray  # (K, m)
    time_indices: np.ndarray  # (K, 2) of (j, j+1)

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(
            self, "time_indices", np.asarray(self.time_indices, dtype=int).reshape(-1, 2)
        )

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def build_training_pairs(posteriors, count: int, rng: np.random.Generator) -> TrainingPairs:
    """Pair random draws from posteriors at consecutive time indices.

    For each of ``count`` pairs a consecutive index pair (j, j+1) is chosen
    uniformly among those available, then one sample is drawn independently
    (with replacement) from each of the two posteriors' sample sets.
    ``posteriors`` maps time index to a sample array or an object with a
    ``samples`` attribute.
    """
    def samples_of(entry) -> np.ndarray:
        arr = getattr(entry, "samples", entry)
        return np.atleast_2d(np.asarray(arr, dtype=float))

    indices = sorted(posteriors.keys())
    adjacent = [(j, j + 1) for j in indices if j + 1 in posteriors]
    if not adjacent:
        raise ValueError(
            "need posteriors at two or more consecutive time indices to form pairs"
        )
    if count == 0:
        dim = samples_of(posteriors[indices[0]]).shape[1]
        return TrainingPairs(
            np.empty((0, dim)), np.empty((0, dim)), np.empty((0, 2), dtype=int)
        )

    choice = rng.integers(len(adjacent), size=count)
    dim = samples_of(posteriors[indices[0]]).shape[1]
    inputs = np.empty((count, dim))
    targets = np.empty((count, dim))
    times = np.empty((count, 2), dtype=int)
    for pair_idx, (j, j_next) in enumerate(adjacent):
        rows = np.flatnonzero(choice == pair_idx)
        if rows.size == 0:
            continue
        left = samples_of(posteriors[j])
        right = samples_of(posteriors[j_next])
        inputs[rows] = left[rng.integers(left.shape[0], size=rows.size)]
        targets[rows] = right[rng.integers(right.shape[0], size=rows.size)]
        times[rows] = (j, j_next)
    return TrainingPairs(inputs, targets, times)


# ----------------------------------------------------------------------
# Bayesian neural network


@dataclass
class BNNConfig:
    hidden_units: int = 256
    n_hidden_layers: int = 2
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    batches_per_epoch: int = 100
    weight_draws: int = 10
    init_rho: float = -5.0
    seed: int = 0


class BNNModel:
    """Variational BNN over the transition map, with frozen normalization.

    Weight w has posterior N(mean, softplus(rho)^2) against a standard
    normal prior on the normalized scale; the spread stays positive for
    any rho. Input/output standardization is fixed by the first training
    call so warm restarts keep optimizing the same parameterization.
    """

    def __init__(self, dim: int, config: BNNConfig | None = None,
                 normalization: dict[str, np.ndarray] | None = None):
        self.config = config or BNNConfig()
        self.dim = dim
        self.is_trained = False
        self.loss_history: list[float] = []
        # normalization is frozen once set: warm restarts must keep
        # optimizing the same parameterization. Callers that retrain on a
        # drifting data stream should pass a fixed state-space box here.
        self._norm = normalization
        self._gen = torch.Generator().manual_seed(self.config.seed)

        sizes = [dim] + [self.config.hidden_units] * self.config.n_hidden_layers + [dim]
        self._layers: list[dict[str, torch.Tensor]] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w_mean = (torch.rand(fan_in, fan_out, generator=self._gen) * 2 - 1) * limit
            self._layers.append({
                "w_mean": w_mean.requires_grad_(True),
                "w_rho": torch.full((fan_in, fan_out), self.config.init_rho,
                                    requires_grad=True),
                "b_mean": torch.zeros(fan_out, requires_grad=True),
                "b_rho": torch.full((fan_out,), self.config.init_rho,
                                    requires_grad=True),
            })
        self._opt = torch.optim.SGD(
            self.parameters(), lr=self.config.learning_rate,
            momentum=self.config.momentum,
        )

    def parameters(self) -> list[torch.Tensor]:
        return [t for layer in self._layers for t in layer.values()]

    def _forward(self, x: torch.Tensor, n_draws: int) -> torch.Tensor:
        """x: (B, dim) normalized -> (n_draws, B, dim) normalized outputs."""
        out = x.unsqueeze(0).expand(n_draws, *x.shape)
        last = len(self._layers) - 1
        for i, layer in enumerate(self._layers):
            w = layer["w_mean"] + tfunc.softplus(layer["w_rho"]) * torch.randn(
                n_draws, *layer["w_mean"].shape, generator=self._gen
            )
            b = layer["b_mean"] + tfunc.softplus(layer["b_rho"]) * torch.randn(
                n_draws, 1, layer["b_mean"].shape[0], generator=self._gen
            )
            out = torch.bmm(out, w) + b
            if i != last:
                out = torch.relu(out)
        return out

    def _kl(self) -> torch.Tensor:
        total = torch.zeros(())
        for layer in self._layers:
            for mean_key, rho_key in (("w_mean", "w_rho"), ("b_mean", "b_rho")):
                std = tfunc.softplus(layer[rho_key])
                mean = layer[mean_key]
                total = total + (
                    0.5 * (std.pow(2) + mean.pow(2) - 1.0) - torch.log(std)
                ).sum()
        return total

    def _set_normalization(self, pairs: TrainingPairs):
        if self._norm is not None:
            return
        x_scale = np.maximum(pairs.inputs.std(axis=0), 1e-8)
        y_scale = np.maximum(pairs.targets.std(axis=0), 1e-8)
        self._norm = {
            "x_shift": pairs.inputs.mean(axis=0), "x_scale": x_scale,
            "y_shift": pairs.targets.mean(axis=0), "y_scale": y_scale,
        }

    def train(self, pairs: TrainingPairs, epochs: int | None = None) -> "BNNModel":
        """Run (more) momentum-SGD epochs of the ELBO loss on these pairs."""
        if pairs.count < 1:
            raise ValueError("training needs at least one pair")
        if not (np.all(np.isfinite(pairs.inputs)) and np.all(np.isfinite(pairs.targets))):
            raise ValueError("training pairs must be finite")
        self._set_normalization(pairs)
        norm = self._norm
        x = torch.tensor((pairs.inputs - norm["x_shift"]) / norm["x_scale"],
                         dtype=torch.float32)
        y = torch.tensor((pairs.targets - norm["y_shift"]) / norm["y_scale"],
                         dtype=torch.float32)

        n_batches = min(self.config.batches_per_epoch, pairs.count)
        n_epochs = self.config.epochs if epochs is None else epochs
        draws = self.config.weight_draws
        for _ in range(n_epochs):
            perm = torch.randperm(pairs.count, generator=self._gen)
            epoch_loss = 0.0
            for chunk in torch.tensor_split(perm, n_batches):
                self._opt.zero_grad()
                out = self._forward(x[chunk], draws)
                nll = 0.5 * (out - y[chunk]).pow(2).sum(dim=(1, 2)).mean()
                loss = nll + self._kl() / n_batches
                loss.backward()
                self._opt.step()
                epoch_loss += loss.item()
            self.loss_history.append(epoch_loss)
        self.is_trained = True
        return self

    def predict_samples(self, theta: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
        """n predictive draws at one state; each uses its own weight draw."""
        return self.predict_samples_batch(
            np.tile(np.asarray(theta, dtype=float), (n, 1)), rng
        )

    def predict_samples_batch(self, thetas: np.ndarray,
                              rng: np.random.Generator,
                              chunk: int = 512) -> np.ndarray:
        """One predictive draw per input row, independent weights per row.

        Rows are processed in chunks: each row carries its own realization
        of every weight matrix, which is memory-heavy for wide layers.
        """
        if self._norm is None:
            raise RuntimeError("model is untrained")
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        norm = self._norm
        x = torch.tensor((thetas - norm["x_shift"]) / norm["x_scale"],
                         dtype=torch.float32)
        gen = torch.Generator().manual_seed(int(rng.integers(2**63)))
        saved, self._gen = self._gen, gen
        try:
            with torch.no_grad():
                pieces = [self._forward_rows(x[i:i + chunk])
                          for i in range(0, x.shape[0], chunk)]
                out = torch.cat(pieces) if len(pieces) > 1 else pieces[0]
        finally:
            self._gen = saved
        return out.numpy().astype(float) * norm["y_scale"] + norm["y_shift"]

    def _forward_rows(self, x: torch.Tensor) -> torch.Tensor:
        # one weight realization per row: treat rows as the draw axis
        n = x.shape[0]
        out = x.unsqueeze(1)  # (n, 1, dim)
        last = len(self._layers) - 1
        for i, layer in enumerate(self._layers):
            w = layer["w_mean"] + tfunc.softplus(layer["w_rho"]) * torch.randn(
                n, *layer["w_mean"].shape, generator=self._gen
            )
            b = layer["b_mean"] + tfunc.softplus(layer["b_rho"]) * torch.randn(
                n, 1, layer["b_mean"].shape[0], generator=self._gen
            )
            out = torch.bmm(out, w) + b
            if i != last:
                out = torch.relu(out)
        return out.squeeze(1)

    def to_record(self) -> dict:
        if self._norm is None:
            raise RuntimeError("cannot serialize an untrained model")
        return {
            "format": RECORD_FORMAT,
            "kind": "bnn",
            "dim": self.dim,
            "hidden_units": self.config.hidden_units,
            "n_hidden_layers": self.config.n_hidden_layers,
            "layers": [
                {k: t.detach().numpy().tolist() for k, t in layer.items()}
                for layer in self._layers
            ],
            "normalization": {k: v.tolist() for k, v in self._norm.items()},
        }

    @classmethod
    def from_record(cls, record: dict) -> "BNNModel":
        if record.get("format") != RECORD_FORMAT or record.get("kind") != "bnn":
            raise ValueError("not a serialized BNN record")
        config = BNNConfig(hidden_units=record["hidden_units"],
                           n_hidden_layers=record["n_hidden_layers"])
        model = cls(record["dim"], config)
        for layer, stored in zip(model._layers, record["layers"]):
            for key in layer:
                layer[key] = torch.tensor(stored[key], dtype=torch.float32)
        model._norm = {k: np.asarray(v, dtype=float)
                       for k, v in record["normalization"].items()}
        model.is_trained = True
        return model


def box_normalization(bounds: np.ndarray) -> dict[str, np.ndarray]:
    """Normalization record mapping a state box to [-1, 1] on both sides."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    mid = 0.5 * (bounds[:, 0] + bounds[:, 1])
    half = 0.5 * (bounds[:, 1] - bounds[:, 0])
    half[half == 0.0] = 1.0
    return {"x_shift": mid, "x_scale": half,
            "y_shift": mid.copy(), "y_scale": half.copy()}


def bnn_train(pairs: TrainingPairs, config: BNNConfig | None = None) -> BNNModel:
    """Train a fresh BNN on the pairs with the given (or default) settings."""
    model = BNNModel(pairs.dim, config)
    return model.train(pairs)


def bnn_predict_samples(model: BNNModel, theta: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.predict_samples(theta, n, rng)


# ----------------------------------------------------------------------
# Bayesian linear regression


@dataclass
class BLRModel:
    """theta_next = theta @ coef + eps, eps ~ N(0, noise_std^2 I)."""

    coef: np.ndarray  # (m, m)
    noise_std: float
    is_trained: bool = True

    def predict_samples(self, theta: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        mean = theta @ self.coef
        noise = rng.normal(0.0, self.noise_std, size=(n, mean.shape[0]))
        return mean + noise

    def predict_samples_batch(self, thetas: np.ndarray,
                              rng: np.random.Generator) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        mean = thetas @ self.coef
        return mean + rng.normal(0.0, self.noise_std, size=mean.shape)

    def to_record(self) -> dict:
        return {
            "format": RECORD_FORMAT,
            "kind": "blr",
            "coef": self.coef.tolist(),
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_record(cls, record: dict) -> "BLRModel":
        if record.get("format") != RECORD_FORMAT or record.get("kind") != "blr":
            raise ValueError("not a serialized BLR record")
        return cls(np.asarray(record["coef"], dtype=float), float(record["noise_std"]))


def blr_fit(pairs: TrainingPairs) -> BLRModel:
    """Least-squares fit of the linear transition map.

    Raises if there are fewer than dim+1 pairs or the design matrix is
    rank deficient, naming the first deficient input dimension.
    """
    if pairs.count < pairs.dim + 1:
        raise ValueError(
            f"need at least {pairs.dim + 1} pairs for a {pairs.dim}-dimensional fit"
        )
    x, y = pairs.inputs, pairs.targets
    _, singular, vt = np.linalg.svd(x, full_matrices=False)
    tol = singular[0] * max(x.shape) * np.finfo(float).eps if singular[0] > 0 else 0.0
    if singular[0] == 0.0 or singular[-1] <= tol:
        deficient = int(np.argmax(np.abs(vt[-1])))
        raise ValueError(f"design matrix is rank deficient in dimension {deficient}")
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    noise_var = float(np.mean(resid**2))
    return BLRModel(coef=coef, noise_std=math.sqrt(noise_var))


def blr_predict_samples(model: BLRModel, theta: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.predict_samples(theta, n, rng)


# ----------------------------------------------------------------------
# Serialization helpers

_KINDS = {"bnn": BNNModel, "blr": BLRModel}


def save_transition_model(model, path: str | Path):
    Path(path).write_text(json.dumps(model.to_record()))


def load_transition_model(path: str | Path):
    record = json.loads(Path(path).read_text())
    kind = record.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown transition-model kind {kind!r}")
    return _KINDS[kind].from_record(record)
