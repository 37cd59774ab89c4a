"""Tests for artifact manifests and manifest-stamped artifact I/O."""

from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from bid_runner import EvaluationError
from config_schema import validate_pipeline_config, with_overrides
from manifest import (
    MANIFEST_PREFIX,
    ArtifactManifest,
    ManifestError,
    build_manifest,
    check_split_inputs,
    config_hash,
    file_digest,
    read_manifest,
)
from reports import (
    atomic_text_writer,
    plot_tail_fit,
    read_csv,
    read_json,
    read_minute_records,
    read_prices,
    write_csv,
    write_json,
    write_minute_records,
)
from synth_fleet import generate_synthetic_fleet
from tail_fit import WeibullParams

from conftest import small_synth_config


class ArtifactTestCase(unittest.TestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)
        self.config = validate_pipeline_config({})
        self.manifest = build_manifest("bid", self.config, method="scenario")


class TestBuildManifest(ArtifactTestCase):
    def test_same_config_same_manifest(self) -> None:
        again = build_manifest("bid", validate_pipeline_config({}), method="scenario")
        self.assertEqual(self.manifest.to_json(), again.to_json())
        self.assertTrue(self.manifest.config_hash.startswith("sha256:"))
        self.assertEqual(self.manifest.extra, {"method": "scenario"})

    def test_config_changes_change_the_hash(self) -> None:
        self.assertNotEqual(config_hash(self.config), config_hash(with_overrides(self.config, seed=8)))
        # output_dir is not part of the configuration identity
        self.assertEqual(config_hash(self.config), config_hash(with_overrides(self.config, output_dir="elsewhere")))

    def test_inputs_are_digested_by_content(self) -> None:
        first = self.root / "a.csv"
        second = self.root / "b.csv"
        first.write_text("day,hour\n0,0\n", encoding="utf-8")
        second.write_text("day,hour\n0,0\n", encoding="utf-8")
        self.assertEqual(file_digest(first), file_digest(second))
        self.assertEqual(
            build_manifest("sweep", self.config, {"fits": first}).inputs,
            build_manifest("sweep", self.config, {"fits": second}).inputs,
        )

    def test_from_dict_rejects_missing_fields(self) -> None:
        with self.assertRaises(ManifestError):
            ArtifactManifest.from_dict({"command": "bid"})
        self.assertEqual(ArtifactManifest.from_dict(self.manifest.to_dict()), self.manifest)


class TestCheckSplitInputs(ArtifactTestCase):
    def test_matching_config_passes(self) -> None:
        check_split_inputs(self.manifest, with_overrides(self.config, n_runs=3))

    def test_mismatch_names_the_field(self) -> None:
        with self.assertRaisesRegex(ManifestError, "seed"):
            check_split_inputs(self.manifest, with_overrides(self.config, seed=99))
        with self.assertRaisesRegex(ManifestError, "in_sample_size"):
            check_split_inputs(self.manifest, with_overrides(self.config, in_sample_size=100))


class TestCsvAndJsonArtifacts(ArtifactTestCase):
    def test_csv_carries_manifest_and_exact_floats(self) -> None:
        frame = pd.DataFrame({"hour": [0, 1], "b_up_kw": [0.1 + 0.2, 1 / 3], "method": ["scenario", "scenario"]})
        path = write_csv(self.root / "bids_scenario.csv", frame, self.manifest)
        self.assertTrue(path.read_text(encoding="utf-8").startswith(MANIFEST_PREFIX))
        self.assertEqual(read_manifest(path), self.manifest)
        pd.testing.assert_frame_equal(read_csv(path), frame)

    def test_json_carries_manifest_and_nulls_nan(self) -> None:
        path = write_json(self.root / "run_summary.json", {"sd": float("nan"), "n": np.int64(3)}, self.manifest)
        payload = read_json(path)
        self.assertIsNone(payload["sd"])
        self.assertEqual(payload["n"], 3)
        self.assertEqual(read_manifest(path), self.manifest)

    def test_missing_manifest_raises(self) -> None:
        plain = self.root / "plain.csv"
        plain.write_text("a,b\n1,2\n", encoding="utf-8")
        with self.assertRaises(ManifestError):
            read_manifest(plain)
        broken = self.root / "broken.csv"
        broken.write_text(MANIFEST_PREFIX + "{not json\n", encoding="utf-8")
        with self.assertRaises(ManifestError):
            read_manifest(broken)
        bare = self.root / "bare.json"
        bare.write_text("{}", encoding="utf-8")
        with self.assertRaises(ManifestError):
            read_manifest(bare)

    def test_failed_write_leaves_nothing_behind(self) -> None:
        target = self.root / "out" / "hourly.csv"
        with self.assertRaises(RuntimeError):
            with atomic_text_writer(target) as handle:
                handle.write("partial")
                raise RuntimeError("interrupted")
        self.assertFalse(target.exists())
        self.assertEqual(list(target.parent.iterdir()), [])

    def test_overwrite_replaces_content(self) -> None:
        frame = pd.DataFrame({"x": [1.0]})
        path = write_csv(self.root / "x.csv", frame, self.manifest)
        write_csv(path, frame.assign(x=2.0), self.manifest)
        self.assertEqual(read_csv(path)["x"].tolist(), [2.0])


class TestMinuteRecords(ArtifactTestCase):
    def test_streams_compressed_fleet(self) -> None:
        cfg = small_synth_config(n_evs=3, n_days=2)
        path, n_evs = write_minute_records(self.root / "minutes.csv", generate_synthetic_fleet(cfg), self.manifest)
        self.assertEqual(n_evs, 3)
        records = read_minute_records(path)
        self.assertEqual(sorted(records["ev_id"].unique()), ["ev0000", "ev0001", "ev0002"])
        self.assertLess(len(records), 3 * 2 * 1440)
        self.assertEqual(read_manifest(path), self.manifest)

    def test_empty_fleet_writes_header_only(self) -> None:
        path, n_evs = write_minute_records(self.root / "minutes.csv", iter(()), self.manifest)
        self.assertEqual(n_evs, 0)
        self.assertTrue(read_minute_records(path).empty)


class TestReadPrices(ArtifactTestCase):
    def test_renames_price_columns(self) -> None:
        path = self.root / "prices.csv"
        path.write_text("day,hour,pi_up_eur_per_kw,pi_down_eur_per_kw\n0,0,1.5,2.5\n", encoding="utf-8")
        prices = read_prices(path)
        self.assertEqual(list(prices.frame.columns), ["day", "hour", "pi_up", "pi_down"])
        self.assertEqual(prices.frame["pi_down"].tolist(), [2.5])

    def test_missing_column_raises(self) -> None:
        path = self.root / "prices.csv"
        path.write_text("day,hour,pi_up_eur_per_kw\n0,0,1.5\n", encoding="utf-8")
        with self.assertRaises(EvaluationError):
            read_prices(path)


class TestSvgFigures(ArtifactTestCase):
    def test_same_inputs_same_bytes(self) -> None:
        tail = np.array([0.3, 1.2, 0.7, 2.5, 0.1])
        params = WeibullParams(0.8, 1.1)
        manifest = build_manifest("report-test", self.config)
        first = plot_tail_fit(tail, params, self.root / "a.svg", manifest, title="hour 13 down")
        second = plot_tail_fit(tail, params, self.root / "b.svg", manifest, title="hour 13 down")
        data = first.read_bytes()
        self.assertEqual(data, second.read_bytes())
        self.assertIn(b"<svg", data)
        self.assertIn(b"report-test", data)


if __name__ == "__main__":
    unittest.main()
