from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import pytest

from arsent.backend import BackendEndpoint
from arsent.harness import (
    EvalReport,
    StageLatency,
    confusion,
    emit_report,
    evaluate,
    nearest_rank_p95,
    report_from_dict,
)
from arsent.storage import load_manifest

from conftest import oracle_config

SCHEMA = json.loads(
    (Path(__file__).resolve().parents[1] / "schemas" / "eval-report.schema.json").read_text()
)


class TestLoadManifest:
    def test_synth_output_loads_fully(self, ds_small):
        _, manifest = ds_small
        assert len(load_manifest(manifest)) == 30

    def test_empty_file(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        assert load_manifest(p) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_manifest(tmp_path / "nope.jsonl")

    def test_bad_json_cites_line(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("\n{nope\n")  # blank lines are tolerated, numbering is physical
        with pytest.raises(ValueError, match="line 2: invalid JSON"):
            load_manifest(p)

    def test_dimension_mismatch_cites_line(self, ds_small, tmp_path):
        import numpy as np

        from arsent.storage import save_rgb_png

        root, manifest = ds_small
        rec = json.loads(manifest.read_text().splitlines()[0])
        save_rgb_png(np.zeros((24, 32, 3), dtype=np.uint8), tmp_path / "tiny.png")
        rec["ar"] = "tiny.png"
        broken = tmp_path / "m.jsonl"
        broken.write_text(json.dumps(rec) + "\n")
        (tmp_path / "scenes").symlink_to(root / "scenes")
        with pytest.raises(ValueError, match="line 1: raw/ar dimension mismatch"):
            load_manifest(broken)

    def test_missing_field_cites_line(self, ds_small, tmp_path):
        root, manifest = ds_small
        rec = json.loads(manifest.read_text().splitlines()[0])
        del rec["raw"]
        broken = tmp_path / "m.jsonl"
        broken.write_text(json.dumps(rec) + "\n")
        (tmp_path / "scenes").symlink_to(root / "scenes")
        with pytest.raises(ValueError, match="line 1"):
            load_manifest(broken)


class TestConfusion:
    def test_spec_arithmetic_example(self):
        preds = [True, True, False, False]
        truth = [True, False, False, False]
        tp, fp, tn, fn = confusion(zip(preds, truth))
        assert (tp, fp, tn, fn) == (1, 1, 2, 0)
        assert (tp + tn) / 4 == 0.75

    def test_counts_partition_n(self):
        outcomes = [(p, a) for p in (True, False) for a in (True, False)] * 3
        tp, fp, tn, fn = confusion(outcomes)
        assert tp + fp + tn + fn == len(outcomes)


class TestNearestRankP95:
    def test_hundred(self):
        assert nearest_rank_p95(list(range(1, 101))) == 95

    def test_ten(self):
        assert nearest_rank_p95(list(range(1, 11))) == 10

    def test_single(self):
        assert nearest_rank_p95([7]) == 7

    def test_order_independent(self):
        assert nearest_rank_p95([5, 1, 9, 3]) == nearest_rank_p95([9, 5, 3, 1])


class TestEvaluate:
    def test_perfect_oracle_scores_one(self, ds_small):
        root, manifest = ds_small
        report = evaluate(manifest, "obstruction", oracle_config(root))
        assert report.accuracy == 1.0
        assert report.fp == report.fn == 0
        assert report.failed == ()
        assert report.n == 30
        assert report.tp + report.tn == 30

    def test_parallel_matches_sequential(self, ds_small):
        root, manifest = ds_small
        cfg = oracle_config(root)
        seq = evaluate(manifest, "vim", cfg, parallelism=1)
        par = evaluate(manifest, "vim", cfg, parallelism=6)
        assert seq.body_dict() == par.body_dict()

    def test_failed_scenes_bucketed_not_counted(self, ds_small):
        root, manifest = ds_small
        cfg = oracle_config(root)
        broken = dict(cfg.endpoints)
        broken["verdict"] = BackendEndpoint("verdict", "http://127.0.0.1:9", timeout_ms=300)
        cfg = type(cfg)(**{**cfg.__dict__, "endpoints": broken})
        report = evaluate(manifest, "vim", cfg)
        assert report.n == 0
        assert len(report.failed) == 30
        assert all(stage == "verdict" for _, stage in report.failed)
        assert report.accuracy is None
        total_failed = sum(s["failed"] for s in report.per_label.values())
        assert total_failed == 30

    def test_latency_stats_cover_stages(self, ds_small):
        root, manifest = ds_small
        report = evaluate(manifest, "vim", oracle_config(root))
        assert set(report.per_stage_latency) == {"ocr", "local_compute", "verdict"}
        ocr = report.per_stage_latency["ocr"]
        assert ocr.count == 60  # two OCR calls per scene
        assert ocr.mean_ns > 0 and ocr.p95_ns > 0

    def test_requires_ground_truth(self, ds_small, tmp_path):
        root, manifest = ds_small
        pairs = load_manifest(manifest)
        from dataclasses import replace

        bare = [replace(pairs[0], truth=None)]
        with pytest.raises(ValueError, match="without ground truth"):
            evaluate(manifest, "vim", oracle_config(root), pairs=bare)

    def test_unknown_pipeline_rejected(self, ds_small):
        root, manifest = ds_small
        with pytest.raises(ValueError, match="pipeline"):
            evaluate(manifest, "segmentation", oracle_config(root))


def _sample_report(**overrides) -> EvalReport:
    base = dict(
        pipeline="obstruction",
        n=2000,
        tp=1000,
        fp=100,
        tn=843,
        fn=57,
        accuracy=1843 / 2000,
        precision=1000 / 1100,
        recall=1000 / 1057,
        per_label={"none": {"n": 900, "predicted_positive": 100, "correct": 800, "failed": 0}},
        failed=(),
        per_stage_latency={"detect": StageLatency(10, 1.5e6, 2_000_000)},
        fingerprint="obstruction:abc123",
        created_at="2026-08-08T00:00:00+00:00",
    )
    base.update(overrides)
    return EvalReport(**base)


class TestEmitReport:
    def test_json_roundtrip_equality(self):
        report = _sample_report()
        data = json.loads(emit_report(report, "json"))
        assert report_from_dict(data) == report

    def test_json_validates_against_schema(self, ds_small):
        root, manifest = ds_small
        report = evaluate(manifest, "obstruction", oracle_config(root))
        jsonschema.validate(json.loads(emit_report(report, "json")), SCHEMA)
        jsonschema.validate(json.loads(emit_report(_sample_report(), "json")), SCHEMA)

    def test_paper_precision_formatting(self):
        text = emit_report(_sample_report(accuracy=0.9215), "text").decode()
        assert "92.15%" in text

    def test_undefined_metrics_render_na_and_null(self):
        report = _sample_report(
            n=2, tp=0, fp=0, tn=2, fn=0, accuracy=1.0, precision=None, recall=None
        )
        text = emit_report(report, "text").decode()
        assert "precision:   n/a" in text
        assert "recall:      n/a" in text
        data = json.loads(emit_report(report, "json"))
        assert data["precision"] is None and data["recall"] is None

    def test_text_contains_fingerprint(self):
        assert "obstruction:abc123" in emit_report(_sample_report(), "text").decode()

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            emit_report(_sample_report(), "yaml")


def test_body_dict_excludes_timing(ds_small):
    root, manifest = ds_small
    cfg = oracle_config(root)
    a = evaluate(manifest, "obstruction", cfg)
    b = evaluate(manifest, "obstruction", cfg)
    assert a.body_dict() == b.body_dict()
    assert "per_stage_latency" not in a.body_dict()
    assert "created_at" not in a.body_dict()
