from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arsent.backend import BackendPool
from arsent.model import BoundingBox, Label, Mitigation, OcrToken, VimTaxonomy
from arsent.storage import load_manifest
from arsent.vim import (
    PROMPT_TEMPLATE_ID,
    TokenDiff,
    build_prompt,
    classify_taxonomy,
    detect_vim,
    diff_tokens,
    levenshtein,
    scaled_radius,
)

from conftest import oracle_config
from oracles import dp_levenshtein


def tok(text: str, cx: float, cy: float, w: int = 40, h: int = 14) -> OcrToken:
    return OcrToken(text, BoundingBox(int(cx - w / 2), int(cy - h / 2), w, h, 1.0), 1.0)


class TestLevenshtein:
    def test_right_left_is_four(self):
        assert levenshtein("RIGHT", "LEFT") == 4
        assert dp_levenshtein("RIGHT", "LEFT") == 4

    @pytest.mark.parametrize(
        "a,b,d",
        [("", "", 0), ("A", "", 1), ("", "ABC", 3), ("STOP", "STOP", 0), ("STOP", "ST0P", 1)],
    )
    def test_known_values(self, a, b, d):
        assert levenshtein(a, b) == d

    @settings(max_examples=200, deadline=None)
    @given(st.text("ABC→←", max_size=8), st.text("ABC→←", max_size=8))
    def test_matches_independent_dp(self, a, b):
        assert levenshtein(a, b) == dp_levenshtein(a, b)
        assert levenshtein(a, b) == levenshtein(b, a)


class TestDiffTokens:
    def test_identical_sets_empty_diff(self):
        tokens = [tok("STOP", 50, 50), tok("EXIT", 150, 50)]
        diff = diff_tokens(tokens, list(tokens), 24)
        assert diff.empty

    def test_colocated_text_change_is_modification(self):
        diff = diff_tokens([tok("RIGHT", 120, 48)], [tok("LEFT", 120, 48)], 24)
        assert len(diff.modifications) == 1
        mod = diff.modifications[0]
        assert (mod.before.text, mod.after.text, mod.edit_distance) == ("RIGHT", "LEFT", 4)
        assert not diff.additions and not diff.removals

    def test_pure_additions(self):
        diff = diff_tokens([], [tok("FREE", 30, 30), tok("WIFI", 90, 30)], 24)
        assert [t.text for t in diff.additions] == ["FREE", "WIFI"]
        assert not diff.removals and not diff.modifications

    def test_distance_beyond_radius_not_paired(self):
        diff = diff_tokens([tok("STOP", 50, 50)], [tok("STOP", 120, 50)], 24)
        assert [t.text for t in diff.removals] == ["STOP"]
        assert [t.text for t in diff.additions] == ["STOP"]

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            diff_tokens([], [], 0)


def token_lists():
    texts = st.sampled_from(["STOP", "EXIT", "LEFT", "RIGHT", "→", "←", "ER", "WET"])
    boxes = st.builds(
        BoundingBox,
        st.integers(0, 600),
        st.integers(0, 440),
        st.integers(5, 40),
        st.integers(7, 20),
        st.just(1.0),
    )
    tokens = st.builds(OcrToken, texts, boxes, st.just(1.0))
    return st.lists(tokens, max_size=6)


@settings(max_examples=200, deadline=None)
@given(token_lists(), token_lists())
def test_diff_symmetry(raw, ar):
    fwd = diff_tokens(raw, ar, 24)
    bwd = diff_tokens(ar, raw, 24)
    assert fwd.additions == bwd.removals
    assert fwd.removals == bwd.additions
    fwd_pairs = {(m.before, m.after, m.edit_distance) for m in fwd.modifications}
    bwd_pairs = {(m.after, m.before, m.edit_distance) for m in bwd.modifications}
    assert fwd_pairs == bwd_pairs


@settings(max_examples=200, deadline=None)
@given(token_lists(), token_lists())
def test_diff_partitions_tokens(raw, ar):
    diff = diff_tokens(raw, ar, 24)
    # every ar token lands in exactly one of: addition, modification-after,
    # matched-identical (dropped); same for raw with removal/before
    ar_used = Counter(diff.additions) + Counter(m.after for m in diff.modifications)
    raw_used = Counter(diff.removals) + Counter(m.before for m in diff.modifications)
    assert ar_used <= Counter(ar)
    assert raw_used <= Counter(raw)
    dropped_ar = len(ar) - sum(ar_used.values())
    dropped_raw = len(raw) - sum(raw_used.values())
    assert dropped_ar == dropped_raw >= 0


class TestBuildPrompt:
    def test_modification_renders_text_and_location(self):
        diff = diff_tokens([tok("RIGHT", 120, 48)], [tok("LEFT", 120, 48)], 24)
        prompt = build_prompt(diff)
        assert '"RIGHT"' in prompt and '"LEFT"' in prompt
        assert "(120, 48)" in prompt

    def test_empty_diff_has_image_only_instruction(self):
        prompt = build_prompt(TokenDiff((), (), ()))
        assert "No text differences were extracted" in prompt
        assert "assess the two images directly" in prompt

    def test_three_entries_three_lines(self):
        diff = diff_tokens(
            [tok("RIGHT", 120, 48), tok("OLD", 300, 48)],
            [tok("LEFT", 120, 48), tok("NEW", 500, 200)],
            24,
        )
        prompt = build_prompt(diff)
        numbered = [l for l in prompt.splitlines() if l[:2] in ("1.", "2.", "3.", "4.")]
        assert len(numbered) == 3  # one modification, one addition, one removal

    def test_deterministic(self):
        diff = diff_tokens([tok("A", 10, 10)], [tok("B", 10, 10)], 24)
        assert build_prompt(diff) == build_prompt(diff)

    def test_context_included(self):
        assert "Context: hospital corridor" in build_prompt(
            TokenDiff((), (), ()), scene_context="hospital corridor"
        )


class TestClassifyTaxonomy:
    def test_text_modification(self):
        diff = diff_tokens([tok("RIGHT", 0, 0)], [tok("LEFT", 0, 0)], 24)
        t = classify_taxonomy(diff)
        assert t == VimTaxonomy("text_alteration", "misinformation")

    def test_symbol_flip(self):
        diff = diff_tokens([tok("→", 0, 0, w=10)], [tok("←", 0, 0, w=10)], 24)
        assert classify_taxonomy(diff).format == "symbol_replacement"

    def test_additions_only(self):
        diff = diff_tokens([], [tok("FREE", 0, 0)], 24)
        assert classify_taxonomy(diff).format == "text_addition"

    def test_empty_diff_manipulated(self):
        assert classify_taxonomy(TokenDiff((), (), ())).format == "misleading_graphic"

    def test_hint_passthrough_and_purpose_default(self):
        hint = VimTaxonomy("text_addition", "distraction")
        assert classify_taxonomy(TokenDiff((), (), ()), truth_hint=hint) == hint
        assert classify_taxonomy(TokenDiff((), (), ()), default_purpose="misdirection").purpose == "misdirection"


def test_scaled_radius_follows_diagonal():
    from arsent.config import PipelineConfig

    cfg = PipelineConfig()
    assert scaled_radius(cfg, 640, 480) == pytest.approx(24.0)
    assert scaled_radius(cfg, 1280, 960) == pytest.approx(48.0)


class TestDetectVim:
    def test_perfect_oracle_matches_truth(self, ds_small):
        root, manifest = ds_small
        cfg = oracle_config(root)
        pool = BackendPool(cfg.endpoints)
        for pair in load_manifest(manifest):
            report = detect_vim(pair, cfg, pool)
            expected = pair.truth.label == Label.VIM
            assert report.verdict.attacked == expected, pair.id
            assert report.verdict.kind == (Label.VIM if expected else Label.NONE)
            if expected:
                assert report.verdict.mitigation == Mitigation.MAKE_TRANSLUCENT
                assert report.taxonomy is not None
            assert report.template_id == PROMPT_TEMPLATE_ID

    def test_arrow_flip_scene_detected(self, ds_small):
        # at least one synthesized VIM scene flips an arrow; its diff is a
        # single symbol modification and the verdict is positive
        root, manifest = ds_small
        cfg = oracle_config(root)
        pool = BackendPool(cfg.endpoints)
        flips = [
            p for p in load_manifest(manifest)
            if p.truth.label == Label.VIM and p.truth.vim_format == "symbol_replacement"
        ]
        if not flips:
            pytest.skip("seed produced no arrow flips in this corpus")
        for pair in flips:
            report = detect_vim(pair, cfg, pool)
            assert report.verdict.attacked
            (mod,) = report.diff.modifications
            assert {mod.before.text, mod.after.text} == {"→", "←"}
            assert report.taxonomy.format == "symbol_replacement"

    def test_latency_covers_all_calls(self, ds_small):
        root, manifest = ds_small
        cfg = oracle_config(root)
        report = detect_vim(load_manifest(manifest)[0], cfg)
        stages = [s.stage for s in report.latency.spans]
        assert stages == ["ocr", "ocr", "local_compute", "verdict"]
        assert sum(s.elapsed_ns for s in report.latency.spans) <= report.latency.wall_ns

    def test_prompt_contains_recorded_change(self, ds_small):
        root, manifest = ds_small
        cfg = oracle_config(root)
        pool = BackendPool(cfg.endpoints)
        pairs = [
            p for p in load_manifest(manifest)
            if p.truth.label == Label.VIM and p.truth.text_before
        ]
        for pair in pairs:
            report = detect_vim(pair, cfg, pool)
            assert f'"{pair.truth.text_before}"' in report.prompt
            assert f'"{pair.truth.text_after}"' in report.prompt
