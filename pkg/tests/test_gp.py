"""Tests for the single-output GP surrogate."""
import numpy as np
import pytest
from scipy import linalg

from ssmlfi.gp import (
    KernelHyperparams,
    TrainedGP,
    default_prior_shapes,
    gp_fit,
    gp_predict,
    training_objective,
)

BOUNDS_1D = np.array([[0.0, 10.0]])


def direct_solve_prediction(gp: TrainedGP, x_query: np.ndarray):
    """Independent posterior computation straight from the kernel matrices."""
    h = gp.hyper
    xq = (np.atleast_2d(x_query) - gp.shift) / gp.scale
    xn = gp.x_norm

    def rbf(a, b):
        d = (a[:, None, :] - b[None, :, :]) / h.lengthscales
        return h.signal_variance * np.exp(-0.5 * np.sum(d * d, axis=2))

    k_train = rbf(xn, xn) + h.bias_variance + h.noise_variance * np.eye(len(xn))
    k_cross = rbf(xq, xn) + h.bias_variance
    solve = linalg.solve(k_train, gp.y_centred, assume_a="pos")
    mu = k_cross @ solve + gp.y_mean
    cov_solve = linalg.solve(k_train, k_cross.T, assume_a="pos")
    var = (h.signal_variance + h.bias_variance) - np.sum(k_cross.T * cov_solve, axis=0)
    return mu, var


class TestFit:
    def test_interpolates_quadratic(self):
        x = np.array([[0.0], [1.0], [2.0]])
        y = x[:, 0] ** 2
        gp = gp_fit(x, y, BOUNDS_1D, fixed_noise=1e-8)
        pred = gp_predict(gp, np.array([1.0]))
        assert pred.mean == pytest.approx(1.0, abs=0.05)

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 10, size=(12, 1))
        y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=12)
        gp = gp_fit(x, y, BOUNDS_1D, rng=rng)
        queries = rng.uniform(0, 10, size=(7, 1))
        mu, var = gp.predict(queries)
        mu_ref, var_ref = direct_solve_prediction(gp, queries)
        np.testing.assert_allclose(mu, mu_ref, atol=1e-8)
        np.testing.assert_allclose(var, np.maximum(var_ref, 0.0), atol=1e-8)

    def test_training_point_recovered_with_tiny_noise(self):
        x = np.array([[1.0], [4.0], [7.0]])
        y = np.array([2.0, -1.0, 0.5])
        gp = gp_fit(x, y, BOUNDS_1D, fixed_noise=1e-10)
        mu, var = gp.predict(x)
        np.testing.assert_allclose(mu, y, atol=1e-3)
        assert np.all(var < 1e-3)

    def test_degenerate_targets(self):
        x = np.linspace(0, 10, 8)[:, None]
        y = np.full(8, 3.3)
        gp = gp_fit(x, y, BOUNDS_1D)
        assert gp.hyper.signal_variance < 0.1
        mu, _ = gp.predict(np.array([[5.0]]))
        assert mu[0] == pytest.approx(3.3, abs=0.05)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            gp_fit(np.array([[1.0]]), np.array([2.0]), BOUNDS_1D)

    def test_objective_history_nondecreasing(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 10, size=(15, 1))
        y = np.cos(x[:, 0])
        gp = gp_fit(x, y, BOUNDS_1D, rng=rng)
        history = np.asarray(gp.objective_history)
        assert history.size >= 1
        assert np.all(np.diff(history) >= -1e-9)

    def test_affine_rescaling_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 10, size=(10, 1))
        y = np.sin(x[:, 0])
        queries = rng.uniform(0, 10, size=(5, 1))

        gp_a = gp_fit(x, y, BOUNDS_1D, rng=np.random.default_rng(9))
        mu_a, var_a = gp_a.predict(queries)

        scale, shift = 37.0, -4.0
        bounds_b = BOUNDS_1D * scale + shift
        gp_b = gp_fit(x * scale + shift, y, bounds_b, rng=np.random.default_rng(9))
        mu_b, var_b = gp_b.predict(queries * scale + shift)

        np.testing.assert_allclose(mu_a, mu_b, atol=1e-6)
        np.testing.assert_allclose(var_a, var_b, atol=1e-6)


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 10, size=(9, 2))
        y = np.sin(x[:, 0]) + 0.3 * x[:, 1]
        bounds = np.array([[0.0, 10.0], [0.0, 10.0]])
        shift = 0.5 * (bounds[:, 0] + bounds[:, 1])
        scale = 0.5 * (bounds[:, 1] - bounds[:, 0])
        x_norm = (x - shift) / scale
        y_centred = y - y.mean()
        shapes = default_prior_shapes(2, y)

        step = 1e-5
        for _ in range(10):
            phi = rng.uniform(-1.5, 1.5, size=5)
            _, grad = training_objective(phi, x_norm, y_centred, shapes)
            fd = np.empty_like(grad)
            for j in range(phi.size):
                up, down = phi.copy(), phi.copy()
                up[j] += step
                down[j] -= step
                f_up, _ = training_objective(up, x_norm, y_centred, shapes)
                f_down, _ = training_objective(down, x_norm, y_centred, shapes)
                fd[j] = (f_up - f_down) / (2 * step)
            rel = np.abs(fd - grad) / np.maximum(
                np.maximum(np.abs(fd), np.abs(grad)), 1e-8
            )
            assert rel.max() < 1e-4


class TestPredict:
    def make_gp(self):
        x = np.array([[2.0], [3.0], [4.0]])
        y = np.array([1.0, 0.0, 1.5])
        hyper = KernelHyperparams(
            lengthscales=np.array([0.05]),  # normalized units
            signal_variance=1.0,
            bias_variance=0.02,
            noise_variance=1e-4,
        )
        return TrainedGP.from_hyperparams(x, y, BOUNDS_1D, hyper)

    def test_far_asymptote(self):
        gp = self.make_gp()
        # > 20 lengthscales from every training point
        mu, var = gp.predict(np.array([[10.0]]))
        prior_var = gp.hyper.signal_variance + gp.hyper.bias_variance
        assert mu[0] == pytest.approx(gp.y_mean, abs=0.05)
        assert var[0] == pytest.approx(prior_var, rel=0.1)

    def test_variance_smallest_near_data(self):
        gp = self.make_gp()
        _, var_at = gp.predict(np.array([[3.0]]))
        _, var_far = gp.predict(np.array([[8.0]]))
        assert var_at[0] <= var_far[0]

    def test_variance_nonnegative_everywhere(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 10, size=(20, 1))
        y = np.sin(2 * x[:, 0])
        gp = gp_fit(x, y, BOUNDS_1D, rng=rng)
        _, var = gp.predict(rng.uniform(0, 10, size=(1000, 1)))
        assert np.all(var >= 0.0)

    def test_duplicate_training_point_changes_nothing(self):
        x = np.array([[1.0], [5.0], [9.0]])
        y = np.array([0.3, -0.2, 0.8])
        hyper = KernelHyperparams(np.array([0.3]), 1.0, 0.1, 1e-8)
        base = TrainedGP.from_hyperparams(x, y, BOUNDS_1D, hyper)
        # duplicating the point whose target equals the sample mean keeps
        # the centering unchanged, so the extra row is fully redundant
        assert y[0] == pytest.approx(y.mean())
        dup = TrainedGP.from_hyperparams(
            np.vstack([x, x[0:1]]), np.append(y, y[0]), BOUNDS_1D, hyper
        )
        queries = np.linspace(0, 10, 9)[:, None]
        mu_a, var_a = base.predict(queries)
        mu_b, var_b = dup.predict(queries)
        np.testing.assert_allclose(mu_a, mu_b, atol=1e-6)
        np.testing.assert_allclose(var_a, var_b, atol=1e-6)

    def test_prediction_gradients_match_finite_differences(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0, 10, size=(8, 1))
        y = np.sin(x[:, 0])
        gp = gp_fit(x, y, BOUNDS_1D, rng=rng)
        for q in (2.3, 6.7):
            _, _, dmu, dvar = gp.predict_with_gradients(np.array([[q]]))
            h = 1e-6
            mu_hi, var_hi = gp.predict(np.array([[q + h]]))
            mu_lo, var_lo = gp.predict(np.array([[q - h]]))
            assert dmu[0, 0] == pytest.approx((mu_hi[0] - mu_lo[0]) / (2 * h), abs=1e-4)
            assert dvar[0, 0] == pytest.approx((var_hi[0] - var_lo[0]) / (2 * h), abs=1e-4)

    def test_best_training_input(self):
        gp = self.make_gp()
        assert gp.best_training_input()[0] == 3.0
