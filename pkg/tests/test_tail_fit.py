"""Tests for tail extraction and Weibull profile-likelihood fitting."""

from __future__ import annotations

import math
import unittest

import numpy as np

from config_schema import GammaGrid
from tail_fit import (
    TailFitError,
    WeibullParams,
    empirical_quantile,
    extract_tail,
    fit_tail,
    fit_weibull_mle,
    kappa_hat,
    profile_loglik,
    weibull_cdf,
    weibull_pdf,
    weibull_survival,
)

from conftest import weibull_sample


class TestEmpiricalQuantile(unittest.TestCase):
    def test_median_of_even_count(self) -> None:
        self.assertEqual(empirical_quantile(np.arange(1, 11), 0.5), 5.5)

    def test_interpolates_between_order_statistics(self) -> None:
        self.assertEqual(empirical_quantile([8, 2, 6, 4], 0.25), 3.5)

    def test_singleton_raises(self) -> None:
        with self.assertRaises(TailFitError):
            empirical_quantile([1.0], 0.1)

    def test_eps_outside_unit_interval_raises(self) -> None:
        with self.assertRaises(TailFitError):
            empirical_quantile([1.0, 2.0], 1.0)


class TestExtractTail(unittest.TestCase):
    def test_mirrors_values_below_threshold(self) -> None:
        np.testing.assert_allclose(extract_tail([7.0, 8.0, 12.0, 10.0], 10.0), [3.0, 2.0])

    def test_216_samples_give_22_tail_points(self) -> None:
        for seed in range(5):
            samples = np.random.default_rng(seed).normal(50.0, 10.0, 216)
            x = extract_tail(samples, empirical_quantile(samples, 0.1))
            self.assertEqual(x.size, 22)
            self.assertTrue(np.all(x > 0))

    def test_constant_data_has_no_tail(self) -> None:
        with self.assertRaises(TailFitError):
            extract_tail([5.0] * 10, empirical_quantile([5.0] * 10, 0.1))

    def test_ties_at_threshold_are_excluded(self) -> None:
        x = extract_tail([1.0, 2.0, 3.0, 3.0, 3.0], 3.0)
        np.testing.assert_allclose(sorted(x), [1.0, 2.0])


class TestKappaHat(unittest.TestCase):
    def test_closed_form(self) -> None:
        self.assertEqual(kappa_hat([1.0, 1.0, 1.0, 1.0], 1.0), 1.0)
        self.assertEqual(kappa_hat([2.0, 2.0], 2.0), 0.25)
        self.assertAlmostEqual(kappa_hat([0.5, 1.5, 2.5], 1.0), 2.0 / 3.0)

    def test_first_order_condition(self) -> None:
        x = np.array([0.3, 1.1, 2.7, 0.9])
        gamma = 1.7
        self.assertAlmostEqual(float(np.sum(kappa_hat(x, gamma) * x**gamma)), x.size)

    def test_nonpositive_value_raises(self) -> None:
        with self.assertRaises(TailFitError):
            kappa_hat([1.0, 0.0], 1.0)


class TestProfileLoglik(unittest.TestCase):
    def test_unit_samples(self) -> None:
        for gamma in (0.5, 1.0, 3.0):
            with self.subTest(gamma=gamma):
                self.assertAlmostEqual(profile_loglik([1.0] * 5, gamma), 5 * (math.log(gamma) - 1))
        self.assertAlmostEqual(profile_loglik([1.0], 1.0), -1.0)

    def test_hand_computed_value(self) -> None:
        self.assertAlmostEqual(profile_loglik([0.5, 2.0], 1.0), -2.4463, places=4)
        self.assertAlmostEqual(profile_loglik([0.5, 2.0], 1.0, as_printed=True), -2.4463, places=4)

    def test_matches_full_loglik_at_kappa_hat(self) -> None:
        x = np.array([0.4, 1.3, 0.8, 2.2, 0.1])
        gamma = 1.3
        kappa = kappa_hat(x, gamma)
        full = float(np.sum(np.log(weibull_pdf(WeibullParams(kappa, gamma), x))))
        self.assertAlmostEqual(profile_loglik(x, gamma), full)

    def test_printed_form_differs_away_from_unit_shape(self) -> None:
        x = [0.5, 2.0, 3.0]
        self.assertNotAlmostEqual(profile_loglik(x, 2.0), profile_loglik(x, 2.0, as_printed=True))

    def test_scaling_shifts_by_a_constant(self) -> None:
        x = np.array([0.4, 1.3, 0.8, 2.2])
        c = 3.0
        shifts = [profile_loglik(c * x, g) - profile_loglik(x, g) for g in (0.5, 1.0, 2.0)]
        # the shift is -n log c for every gamma
        np.testing.assert_allclose(shifts, -x.size * math.log(c))

    def test_nonpositive_gamma_raises(self) -> None:
        with self.assertRaises(TailFitError):
            profile_loglik([1.0, 2.0], 0.0)


class TestFitWeibullMle(unittest.TestCase):
    def test_recovers_parameters_from_large_sample(self) -> None:
        for seed in range(10):
            with self.subTest(seed=seed):
                x = weibull_sample(np.random.default_rng(seed), 2.0, 1.5, 10_000)
                fit = fit_weibull_mle(x)
                self.assertLess(abs(fit.params.kappa / 2.0 - 1), 0.05)
                self.assertLess(abs(fit.params.gamma / 1.5 - 1), 0.05)
                self.assertFalse(fit.at_grid_boundary)
                self.assertEqual(fit.n_tail, 10_000)

    def test_refinement_beats_dense_grid(self) -> None:
        x = weibull_sample(np.random.default_rng(4), 0.7, 0.9265, 500)
        fit = fit_weibull_mle(x)
        dense = np.linspace(0.1, 5.0, 20_001)
        logliks = np.array([profile_loglik(x, g) for g in dense])
        self.assertGreaterEqual(-fit.nll, float(logliks.max()) - 1e-9)
        self.assertAlmostEqual(fit.params.gamma, float(dense[np.argmax(logliks)]), places=3)

    def test_shape_is_scale_invariant(self) -> None:
        x = weibull_sample(np.random.default_rng(5), 1.0, 2.0, 300)
        base = fit_weibull_mle(x)
        scaled = fit_weibull_mle(4.0 * x)
        self.assertAlmostEqual(scaled.params.gamma, base.params.gamma, places=5)
        self.assertAlmostEqual(scaled.params.kappa, base.params.kappa * 4.0 ** (-base.params.gamma), places=5)

    def test_error_shrinks_with_sample_size(self) -> None:
        def mean_error(n: int) -> float:
            errors = []
            for seed in range(20):
                fit = fit_weibull_mle(weibull_sample(np.random.default_rng(100 + seed), 2.0, 1.5, n))
                errors.append(abs(fit.params.gamma / 1.5 - 1) + abs(fit.params.kappa / 2.0 - 1))
            return float(np.mean(errors))

        self.assertLess(mean_error(10_000), mean_error(100))

    def test_constant_data_hits_grid_boundary(self) -> None:
        fit = fit_weibull_mle([1.0, 1.0, 1.0, 1.0])
        self.assertTrue(fit.at_grid_boundary)
        self.assertEqual(fit.params.gamma, GammaGrid().hi)

    def test_too_few_points_raise(self) -> None:
        with self.assertRaises(TailFitError):
            fit_weibull_mle([1.0])

    def test_fit_tail_records_threshold(self) -> None:
        samples = np.random.default_rng(6).normal(80.0, 15.0, 216)
        fit, x = fit_tail(samples, 0.1)
        self.assertEqual(fit.threshold_kw, empirical_quantile(samples, 0.1))
        self.assertEqual(fit.n_tail, 22)
        self.assertEqual(x.size, 22)
        self.assertTrue(math.isfinite(fit.nll))
        self.assertEqual(set(fit.to_dict()), {"threshold_kw", "kappa", "gamma", "n_tail", "nll", "at_grid_boundary"})


class TestWeibullDistribution(unittest.TestCase):
    def test_cdf_values(self) -> None:
        self.assertAlmostEqual(weibull_cdf(WeibullParams(1.0, 1.0), math.log(2)), 0.5)
        self.assertAlmostEqual(weibull_cdf(WeibullParams(0.25, 2.0), 2.0), 1 - math.exp(-1), places=12)

    def test_boundary_and_negative_values(self) -> None:
        params = WeibullParams(1.3, 0.8)
        self.assertEqual(weibull_cdf(params, 0.0), 0.0)
        self.assertEqual(weibull_survival(params, 0.0), 1.0)
        self.assertEqual(weibull_cdf(params, -1.0), 0.0)
        self.assertEqual(weibull_survival(params, -1.0), 0.0)
        self.assertEqual(weibull_pdf(params, -1.0), 0.0)

    def test_survival_complements_cdf(self) -> None:
        params = WeibullParams(0.6, 1.7)
        x = np.linspace(0.0, 5.0, 51)
        np.testing.assert_allclose(weibull_cdf(params, x) + weibull_survival(params, x), 1.0)
        self.assertTrue(np.all(np.diff(weibull_cdf(params, x)) >= 0))

    def test_pdf_value(self) -> None:
        self.assertAlmostEqual(weibull_pdf(WeibullParams(1.0, 1.0), 1.0), math.exp(-1))

    def test_nonpositive_params_raise(self) -> None:
        with self.assertRaises(TailFitError):
            WeibullParams(0.0, 1.0)
        with self.assertRaises(TailFitError):
            WeibullParams(1.0, -2.0)


if __name__ == "__main__":
    unittest.main()
