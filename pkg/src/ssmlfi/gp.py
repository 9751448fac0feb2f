"""Single-output Gaussian-process regression for the per-step baseline.

RBF kernel with per-dimension lengthscales plus a constant bias component
and Gaussian observation noise. Hyperparameters are set by maximizing the
log marginal likelihood plus Gamma log-priors, in log space, with L-BFGS-B
capped at 50 iterations and a small number of restarts.

Inputs are mapped to [-1, 1] per dimension using the prior box; targets
are centred. Both transforms are undone transparently at prediction time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

MAX_FIT_ITERATIONS = 50
N_RESTARTS = 3
JITTER_START = 1e-8
JITTER_MAX = 1e-4


class GPFitError(RuntimeError):
    pass


@dataclass
class KernelHyperparams:
    """RBF + bias + noise hyperparameters (normalized input space)."""

    lengthscales: np.ndarray
    signal_variance: float
    bias_variance: float
    noise_variance: float

    def to_log_vector(self, include_noise: bool = True) -> np.ndarray:
        parts = [np.log(self.lengthscales), [np.log(self.signal_variance)],
                 [np.log(self.bias_variance)]]
        if include_noise:
            parts.append([np.log(self.noise_variance)])
        return np.concatenate(parts)

    @classmethod
    def from_log_vector(cls, phi: np.ndarray, dim: int,
                        fixed_noise: float | None = None) -> "KernelHyperparams":
        phi = np.asarray(phi, dtype=float)
        ls = np.exp(phi[:dim])
        sk2 = float(np.exp(phi[dim]))
        sb2 = float(np.exp(phi[dim + 1]))
        s2 = fixed_noise if fixed_noise is not None else float(np.exp(phi[dim + 2]))
        return cls(ls, sk2, sb2, s2)


@dataclass(frozen=True)
class GPPrediction:
    mean: float
    variance: float


@dataclass
class PriorShapes:
    """Gamma(shape, 1) shapes for lengthscales and the two variances."""

    lengthscale: np.ndarray
    signal: float
    bias: float


def default_prior_shapes(dim: int, y: np.ndarray) -> PriorShapes:
    # lengthscale shape = (input range)/3 in the space the GP sees,
    # which is [-1, 1] after normalization; variance shapes from the
    # largest raw target magnitude.
    peak = max(float(np.max(np.abs(y))) ** 2, 1e-2)
    return PriorShapes(
        lengthscale=np.full(dim, 2.0 / 3.0),
        signal=max(peak / 9.0, 1e-2),
        bias=max(peak / 36.0, 1e-2),
    )


def _normalizer(bounds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    shift = 0.5 * (bounds[:, 0] + bounds[:, 1])
    scale = 0.5 * (bounds[:, 1] - bounds[:, 0])
    scale[scale == 0.0] = 1.0
    return shift, scale


def _rbf_matrix(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    d = (a[:, None, :] - b[None, :, :]) / lengthscales
    return np.exp(-0.5 * np.sum(d * d, axis=2))


def _build_kernel(x: np.ndarray, hyper: KernelHyperparams) -> np.ndarray:
    k = hyper.signal_variance * _rbf_matrix(x, x, hyper.lengthscales)
    k += hyper.bias_variance
    k[np.diag_indices_from(k)] += hyper.noise_variance
    return k


def _chol_with_jitter(k: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    jitter = 0.0
    level = JITTER_START * signal_variance
    while True:
        try:
            return linalg.cholesky(k + jitter * np.eye(k.shape[0]), lower=True), jitter
        except linalg.LinAlgError:
            if level > JITTER_MAX * signal_variance:
                raise GPFitError(
                    "kernel matrix singular even at maximum jitter "
                    f"{JITTER_MAX * signal_variance:.3e}"
                ) from None
            jitter = level
            level *= 10.0


def training_objective(
    phi: np.ndarray,
    x_norm: np.ndarray,
    y_centred: np.ndarray,
    prior_shapes: PriorShapes,
    fixed_noise: float | None = None,
) -> tuple[float, np.ndarray]:
    """Negative (log marginal likelihood + log priors) and its gradient.

    ``phi`` holds log lengthscales, log signal variance, log bias variance
    and, unless the noise is fixed, log noise variance. Priors are Gamma
    densities on the log-parameterized values, so the prior term for a
    parameter v with shape a is ``a*log(v) - v`` up to a constant.
    """
    n, dim = x_norm.shape
    hyper = KernelHyperparams.from_log_vector(phi, dim, fixed_noise)

    diffs = x_norm[:, None, :] - x_norm[None, :, :]  # (n, n, d)
    scaled_sq = (diffs / hyper.lengthscales) ** 2
    k_rbf = hyper.signal_variance * np.exp(-0.5 * scaled_sq.sum(axis=2))
    k = k_rbf + hyper.bias_variance
    k[np.diag_indices_from(k)] += hyper.noise_variance

    chol, _ = _chol_with_jitter(k, hyper.signal_variance)
    alpha = linalg.cho_solve((chol, True), y_centred)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    lml = -0.5 * float(y_centred @ alpha) - 0.5 * log_det - 0.5 * n * math.log(2 * math.pi)

    k_inv = linalg.cho_solve((chol, True), np.eye(n))
    inner = np.outer(alpha, alpha) - k_inv  # d(lml)/dK = inner / 2

    grads = np.empty_like(np.asarray(phi, dtype=float))
    for d in range(dim):
        dk = k_rbf * scaled_sq[:, :, d]
        grads[d] = 0.5 * np.sum(inner * dk)
    grads[dim] = 0.5 * np.sum(inner * k_rbf)
    grads[dim + 1] = 0.5 * np.sum(inner) * hyper.bias_variance
    if fixed_noise is None:
        grads[dim + 2] = 0.5 * np.trace(inner) * hyper.noise_variance

    log_prior = 0.0
    shapes = np.concatenate([
        prior_shapes.lengthscale, [prior_shapes.signal], [prior_shapes.bias]
    ])
    for j, a in enumerate(shapes):
        v = math.exp(phi[j])
        log_prior += a * phi[j] - v
        grads[j] += a - v

    return -(lml + log_prior), -grads


@dataclass
class TrainedGP:
    """Immutable fitted GP with a cached Cholesky factor."""

    x_norm: np.ndarray
    y_centred: np.ndarray
    y_mean: float
    hyper: KernelHyperparams
    shift: np.ndarray
    scale: np.ndarray
    bounds: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    x_raw: np.ndarray
    y_raw: np.ndarray
    objective_history: list = field(default_factory=list)

    n_objectives: int = 1

    @classmethod
    def from_hyperparams(
        cls,
        x: np.ndarray,
        y: np.ndarray,
        bounds: np.ndarray,
        hyper: KernelHyperparams,
    ) -> "TrainedGP":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        shift, scale = _normalizer(bounds)
        x_norm = (x - shift) / scale
        y_mean = float(y.mean())
        y_centred = y - y_mean
        k = _build_kernel(x_norm, hyper)
        chol, _ = _chol_with_jitter(k, hyper.signal_variance)
        alpha = linalg.cho_solve((chol, True), y_centred)
        return cls(
            x_norm=x_norm, y_centred=y_centred, y_mean=y_mean, hyper=hyper,
            shift=shift, scale=scale, bounds=np.asarray(bounds, float).reshape(-1, 2),
            chol=chol, alpha=alpha, x_raw=x, y_raw=y,
        )

    # -- prediction ----------------------------------------------------

    def _cross_cov(self, x_norm_query: np.ndarray) -> np.ndarray:
        k = self.hyper.signal_variance * _rbf_matrix(
            x_norm_query, self.x_norm, self.hyper.lengthscales
        )
        return k + self.hyper.bias_variance

    def predict(self, x: np.ndarray, objective: int | None = None):
        """Posterior mean and latent variance at raw-space query rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xq = (x - self.shift) / self.scale
        kxn = self._cross_cov(xq)
        mu = kxn @ self.alpha + self.y_mean
        v = linalg.solve_triangular(self.chol, kxn.T, lower=True)
        prior_var = self.hyper.signal_variance + self.hyper.bias_variance
        var = np.maximum(prior_var - np.sum(v * v, axis=0), 0.0)
        return mu, var

    def predict_with_gradients(self, x: np.ndarray):
        """(mu, var, dmu/dx, dvar/dx) at raw-space query rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xq = (x - self.shift) / self.scale
        k_rbf = self.hyper.signal_variance * _rbf_matrix(
            xq, self.x_norm, self.hyper.lengthscales
        )
        kxn = k_rbf + self.hyper.bias_variance
        mu = kxn @ self.alpha + self.y_mean
        w = linalg.cho_solve((self.chol, True), kxn.T)  # (n_train, n_query)
        prior_var = self.hyper.signal_variance + self.hyper.bias_variance
        var = np.maximum(prior_var - np.sum(kxn.T * w, axis=0), 0.0)

        # dk_rbf/dx_norm[q, i, d] = k_rbf[q, i] * (x_i - x_q)_d / l_d^2
        diff = (self.x_norm[None, :, :] - xq[:, None, :]) / self.hyper.lengthscales**2
        dk = k_rbf[:, :, None] * diff  # (n_query, n_train, d)
        dmu = np.einsum("qid,i->qd", dk, self.alpha) / self.scale
        dvar = -2.0 * np.einsum("qid,iq->qd", dk, w) / self.scale
        return mu, var, dmu, dvar

    def mean_gradient(self, x: np.ndarray, objective: int | None = None) -> np.ndarray:
        _, _, dmu, _ = self.predict_with_gradients(np.atleast_2d(x))
        return dmu[0]

    @property
    def noise_variance(self) -> float:
        return self.hyper.noise_variance

    def best_training_input(self, objective: int | None = None) -> np.ndarray:
        return self.x_raw[int(np.argmin(self.y_raw))]


def gp_fit(
    x: np.ndarray,
    y: np.ndarray,
    bounds: np.ndarray,
    fixed_noise: float | None = None,
    n_restarts: int = N_RESTARTS,
    max_iterations: int = MAX_FIT_ITERATIONS,
    rng: np.random.Generator | None = None,
) -> TrainedGP:
    """Fit hyperparameters by MAP with multi-restart L-BFGS-B.

    The first start sits at the prior means; remaining starts are drawn
    from the Gamma priors. Pass ``fixed_noise`` to pin the noise variance
    instead of optimizing it.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have matching lengths")
    if x.shape[0] < 2:
        raise ValueError("gp_fit needs at least 2 training points")
    if rng is None:
        rng = np.random.default_rng(0)

    dim = x.shape[1]
    shift, scale = _normalizer(bounds)
    x_norm = (x - shift) / scale
    y_mean = float(y.mean())
    y_centred = y - y_mean
    shapes = default_prior_shapes(dim, y)

    var_y = max(float(np.var(y)), 1e-12)
    noise_lo, noise_hi = 1e-8 * var_y, 10.0 * var_y

    box = [(math.log(1e-3), math.log(1e3))] * dim
    box += [(math.log(1e-10), math.log(1e8))] * 2
    if fixed_noise is None:
        box += [(math.log(noise_lo), math.log(noise_hi))]

    def start_vector(k: int) -> np.ndarray:
        if k == 0:
            ls = shapes.lengthscale.copy()
            sk2, sb2 = shapes.signal, shapes.bias
            s2 = 0.05 * var_y
        else:
            ls = np.maximum(rng.gamma(shapes.lengthscale, 1.0), 1e-2)
            sk2 = max(rng.gamma(shapes.signal, 1.0), 1e-4)
            sb2 = max(rng.gamma(shapes.bias, 1.0), 1e-4)
            s2 = 0.05 * var_y * 10.0 ** rng.uniform(-1.0, 1.0)
        s2 = min(max(s2, noise_lo), noise_hi)
        phi = np.concatenate([np.log(ls), [math.log(sk2)], [math.log(sb2)]])
        if fixed_noise is None:
            phi = np.concatenate([phi, [math.log(s2)]])
        return phi

    best = None
    best_history: list[float] = []
    for k in range(n_restarts):
        history: list[float] = []

        def record(phi, _history=history):
            val, _ = training_objective(phi, x_norm, y_centred, shapes, fixed_noise)
            _history.append(-val)

        try:
            res = optimize.minimize(
                training_objective,
                start_vector(k),
                args=(x_norm, y_centred, shapes, fixed_noise),
                jac=True,
                method="L-BFGS-B",
                bounds=box,
                callback=record,
                options={"maxiter": max_iterations},
            )
        except GPFitError:
            continue
        if best is None or res.fun < best.fun:
            best = res
            best_history = history
    if best is None:
        raise GPFitError("all GP fit restarts failed")

    hyper = KernelHyperparams.from_log_vector(best.x, dim, fixed_noise)
    fitted = TrainedGP.from_hyperparams(x, y, bounds, hyper)
    fitted.objective_history = best_history
    return fitted


def gp_predict(gp: TrainedGP, theta: np.ndarray) -> GPPrediction:
    """Posterior mean and latent variance at a single point."""
    mu, var = gp.predict(np.atleast_2d(theta))
    return GPPrediction(float(mu[0]), float(var[0]))
