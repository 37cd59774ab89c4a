"""Unit tests for pipeline configuration parsing and validation."""

from __future__ import annotations

import unittest

from config_schema import (
    ConfigValidationError,
    PipelineConfig,
    SynthFleetConfig,
    check_synth_config,
    parse_key_value_text,
    validate_pipeline_config,
    with_overrides,
)
from solvers import required_sample_size


class TestParseKeyValueText(unittest.TestCase):
    def test_comments_and_blank_lines_are_ignored(self) -> None:
        payload = parse_key_value_text("# fleet\nseed = 3\n\neps=0.2  # looser\n")
        self.assertEqual(payload, {"seed": "3", "eps": "0.2"})

    def test_duplicate_key_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            parse_key_value_text("seed=1\nseed=2\n")

    def test_line_without_equals_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            parse_key_value_text("seed 1\n")

    def test_empty_key_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            parse_key_value_text("=1\n")


class TestValidatePipelineConfig(unittest.TestCase):
    def test_defaults(self) -> None:
        config = validate_pipeline_config({})
        self.assertIsInstance(config, PipelineConfig)
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.eps, 0.1)
        self.assertAlmostEqual(config.alpha, 0.1 / 3)
        self.assertEqual(config.n_runs, 10)
        self.assertEqual(config.in_sample_size, 216)
        self.assertEqual(config.cv_draw_size, 216)
        self.assertEqual(config.cv_reps, 5000)
        self.assertEqual(config.gamma_grid.steps, 200)
        self.assertEqual(config.synth.n_evs, 200)
        self.assertEqual(config.synth.n_days, 366)

    def test_string_values_from_config_file(self) -> None:
        config = validate_pipeline_config(
            parse_key_value_text("seed=3\neps=0.2\nn_runs=4\ncharger_levels_kw=3.7, 11\nalpha_grid=0.2,0.01\n")
        )
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.synth.seed, 3)
        self.assertAlmostEqual(config.alpha, 0.2 / 3)
        self.assertEqual(config.n_runs, 4)
        self.assertEqual(config.synth.charger_levels_kw, (3.7, 11.0))
        self.assertEqual(config.alpha_grid, (0.2, 0.01))

    def test_unknown_key_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"epsilon": "0.1"})

    def test_alpha_above_eps_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"eps": 0.1, "alpha": 0.2})

    def test_bool_seed_raises(self) -> None:
        # bool is a subclass of int; it must not pass as a seed
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"seed": True})

    def test_eps_outside_unit_interval_raises(self) -> None:
        for eps in (0.0, 1.0, -0.1):
            with self.subTest(eps=eps), self.assertRaises(ConfigValidationError):
                validate_pipeline_config({"eps": eps})

    def test_non_numeric_value_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"n_runs": "ten"})

    def test_gamma_grid_bounds_checked(self) -> None:
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"gamma_lo": 5.0, "gamma_hi": 1.0})

    def test_alpha_grid_outside_eps_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            validate_pipeline_config({"alpha_grid": "0.2,0.01"})

    def test_to_dict_leaves_out_output_dir(self) -> None:
        config = validate_pipeline_config({"output_dir": "elsewhere"})
        self.assertNotIn("output_dir", config.to_dict())
        self.assertEqual(config.to_dict(), validate_pipeline_config({}).to_dict())


class TestWithOverrides(unittest.TestCase):
    def test_alpha_follows_eps(self) -> None:
        config = with_overrides(validate_pipeline_config({}), eps=0.2)
        self.assertAlmostEqual(config.alpha, 0.2 / 3)

    def test_explicit_alpha_wins(self) -> None:
        config = with_overrides(validate_pipeline_config({}), eps=0.2, alpha=0.05)
        self.assertEqual(config.alpha, 0.05)

    def test_file_alpha_survives_eps_override(self) -> None:
        payload = parse_key_value_text("alpha = 0.02\n")
        config = with_overrides(validate_pipeline_config(payload), given_keys=payload.keys(), eps=0.1)
        self.assertEqual(config.alpha, 0.02)

    def test_sample_sizes_follow_eps(self) -> None:
        config = with_overrides(validate_pipeline_config({}), eps=0.2)
        expected = required_sample_size(0.2, 0.01, 2)
        self.assertNotEqual(expected, 216)
        self.assertEqual((config.in_sample_size, config.cv_draw_size), (expected, expected))

    def test_file_sample_size_survives_eps_override(self) -> None:
        payload = parse_key_value_text("in_sample_size = 150\n")
        config = with_overrides(validate_pipeline_config(payload), given_keys=payload.keys(), eps=0.2)
        self.assertEqual((config.in_sample_size, config.cv_draw_size), (150, 150))

    def test_lower_eps_trims_alpha_grid(self) -> None:
        config = with_overrides(validate_pipeline_config({}), eps=0.05)
        self.assertEqual(config.alpha_grid, (0.0333, 0.01, 0.005, 0.0005))

    def test_alpha_outside_eps_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            with_overrides(validate_pipeline_config({}), alpha=0.5)

    def test_none_values_are_ignored(self) -> None:
        base = validate_pipeline_config({"seed": 3})
        self.assertEqual(with_overrides(base, seed=None, eps=None), base)

    def test_synth_overrides(self) -> None:
        config = with_overrides(validate_pipeline_config({}), seed=9, n_evs=5, n_days=2)
        self.assertEqual((config.synth.seed, config.synth.n_evs, config.synth.n_days), (9, 5, 2))


class TestCheckSynthConfig(unittest.TestCase):
    def test_default_is_feasible(self) -> None:
        check_synth_config(SynthFleetConfig())

    def test_departure_overlapping_arrival_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            check_synth_config(SynthFleetConfig(departure_mean_min=1000.0))

    def test_arrival_support_beyond_midnight_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            check_synth_config(SynthFleetConfig(arrival_mean_min=1300.0, arrival_spread_min=90.0))

    def test_probability_out_of_range_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            check_synth_config(SynthFleetConfig(plug_in_probability=1.5))

    def test_inverted_battery_range_raises(self) -> None:
        with self.assertRaises(ConfigValidationError):
            check_synth_config(SynthFleetConfig(battery_min_kwh=90.0))

    def test_zero_evs_is_allowed(self) -> None:
        check_synth_config(SynthFleetConfig(n_evs=0))


if __name__ == "__main__":
    unittest.main()
