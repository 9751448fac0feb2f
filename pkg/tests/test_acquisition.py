"""Tests for the acquisition rules."""
import math

import numpy as np
import pytest

from ssmlfi.acquisition import (
    AcquisitionBatch,
    lcbsc_beta,
    lcbsc_next,
    transition_proposals,
)
from ssmlfi.gp import gp_fit
from ssmlfi.posterior import PosteriorSampleSet
from ssmlfi.transitions import BLRModel

BOUNDS = np.array([[0.0, 10.0]])


class QuadraticMeanSurrogate:
    """mu(x) = (x - center)^2 with configurable flat variance."""

    def __init__(self, center, variance=0.0, noise_variance=1e-6):
        self.center = center
        self.variance = variance
        self.noise_variance = noise_variance

    def predict(self, x, objective=None):
        x = np.atleast_2d(x)
        return (x[:, 0] - self.center) ** 2, np.full(x.shape[0], self.variance)

    def predict_with_gradients(self, x):
        x = np.atleast_2d(x)
        mu, var = self.predict(x)
        dmu = 2.0 * (x - self.center)
        dvar = np.zeros_like(x)
        return mu, var, dmu, dvar


class TestBeta:
    def test_reference_value(self):
        assert lcbsc_beta(1, 1) == pytest.approx(6.987, abs=1e-3)
        assert lcbsc_beta(1, 1) == pytest.approx(
            2.0 * math.log(math.pi**2 / 0.3), rel=1e-12
        )

    def test_grows_with_counter_and_dimension(self):
        assert lcbsc_beta(2, 1) > lcbsc_beta(1, 1)
        assert lcbsc_beta(5, 3) > lcbsc_beta(5, 1)

    def test_counter_must_be_positive(self):
        with pytest.raises(ValueError):
            lcbsc_beta(0, 1)

    def test_lcb_decreases_as_beta_grows(self):
        # for a fixed point, mu - sqrt(beta)*sigma is monotone in beta
        mu, sigma = 1.0, 0.5
        values = [mu - math.sqrt(lcbsc_beta(t, 1)) * sigma for t in (1, 2, 5, 20)]
        assert np.all(np.diff(values) < 0)


class TestLcbscNext:
    def test_zero_variance_reduces_to_mean_minimization(self):
        surrogate = QuadraticMeanSurrogate(6.0, variance=0.0)
        best = lcbsc_next(surrogate, 1, 1, BOUNDS, rng=np.random.default_rng(0))
        assert best[0] == pytest.approx(6.0, abs=0.05)

    def test_returns_restart_minimum(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 10, size=(15, 1))
        y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=15)
        gp = gp_fit(x, y, BOUNDS, rng=rng)
        best, endpoints, lcb = lcbsc_next(
            gp, 3, 1, BOUNDS, rng=np.random.default_rng(2), full_output=True
        )
        np.testing.assert_array_equal(best, endpoints[np.argmin(lcb)])

    def test_stays_inside_bounds(self):
        surrogate = QuadraticMeanSurrogate(20.0)  # minimum far outside
        best = lcbsc_next(surrogate, 1, 1, BOUNDS, rng=np.random.default_rng(3))
        assert 0.0 <= best[0] <= 10.0
        assert best[0] == pytest.approx(10.0, abs=1e-6)

    def test_deterministic_under_seed(self):
        rng_a = np.random.default_rng(7)
        rng_b = np.random.default_rng(7)
        surrogate = QuadraticMeanSurrogate(4.0, variance=0.0)
        a = lcbsc_next(surrogate, 2, 1, BOUNDS, rng=rng_a)
        b = lcbsc_next(surrogate, 2, 1, BOUNDS, rng=rng_b)
        np.testing.assert_array_equal(a, b)


class TestTransitionProposals:
    def test_dirac_posterior_identity_model(self):
        model = BLRModel(coef=np.eye(1), noise_std=0.0)
        posterior = PosteriorSampleSet(np.array([[4.2]]), t=3)
        batch = transition_proposals(model, posterior, 5, BOUNDS,
                                     np.random.default_rng(0))
        np.testing.assert_allclose(batch.proposals, 4.2)
        assert batch.source == "transition-blr"

    def test_proposals_clipped_into_bounds(self):
        model = BLRModel(coef=np.array([[100.0]]), noise_std=0.0)
        posterior = PosteriorSampleSet(np.array([[4.0]]), t=1)
        batch = transition_proposals(model, posterior, 8, BOUNDS,
                                     np.random.default_rng(1))
        np.testing.assert_allclose(batch.proposals, 10.0)

    def test_untrained_model_falls_back_to_prior(self):
        posterior = PosteriorSampleSet(np.array([[4.0]]), t=1)
        batch = transition_proposals(None, posterior, 100, BOUNDS,
                                     np.random.default_rng(2))
        assert batch.source == "prior"
        assert np.all(batch.proposals >= 0.0) and np.all(batch.proposals <= 10.0)
        assert batch.proposals.std() > 1.0  # actually spread over the box

    def test_blr_proposal_mean_matches_closed_form(self):
        model = BLRModel(coef=np.array([[0.95]]), noise_std=1.0)
        rng = np.random.default_rng(3)
        samples = rng.uniform(4.0, 8.0, size=(500, 1))
        posterior = PosteriorSampleSet(samples, t=10)
        batch = transition_proposals(model, posterior, 1000, BOUNDS, rng)
        expected = 0.95 * samples.mean()
        assert abs(batch.proposals.mean() - expected) < 1.0

    def test_deterministic_under_seed(self):
        model = BLRModel(coef=np.array([[0.9]]), noise_std=0.5)
        posterior = PosteriorSampleSet(np.array([[2.0], [3.0], [4.0]]), t=2)
        a = transition_proposals(model, posterior, 6, BOUNDS,
                                 np.random.default_rng(5))
        b = transition_proposals(model, posterior, 6, BOUNDS,
                                 np.random.default_rng(5))
        np.testing.assert_array_equal(a.proposals, b.proposals)

    def test_batch_count_validation(self):
        with pytest.raises(ValueError):
            transition_proposals(None, PosteriorSampleSet(np.zeros((1, 1)), t=0),
                                 0, BOUNDS, np.random.default_rng(0))

    def test_acquisition_batch_shapes(self):
        batch = AcquisitionBatch(np.array([1.0, 2.0]), "prior")
        assert batch.proposals.shape == (1, 2)
