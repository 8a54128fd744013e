from __future__ import annotations

import pytest

from arsent.backend import BackendEndpoint, open_backend
from arsent.errors import ConfigError, ProtocolError
from arsent.maskops import RasterMask
from arsent.model import ImageRef, Label
from arsent.oracle import NoiseProfile, OracleBackend, parse_locator
from arsent.storage import load_manifest


@pytest.fixture(scope="module")
def dataset(ds_small):
    out, manifest = ds_small
    return out, load_manifest(manifest)


def _oracle(root, **noise) -> OracleBackend:
    return OracleBackend(root, NoiseProfile(**noise))


class TestPerfectOracle:
    def test_key_objects_echo_truth(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        for pair in pairs:
            names = oracle.call_keyobjects(pair.raw)
            assert names == [o.name for o in pair.truth.key_objects]

    def test_detect_returns_truth_box_with_full_score(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        for pair in pairs:
            for obj in pair.truth.key_objects:
                boxes = oracle.call_detect(pair.raw, obj.name)
                assert boxes == [obj.box]
                assert boxes[0].score == 1.0

    def test_detect_unknown_query_empty(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        assert oracle.call_detect(pairs[0].raw, "unicorn") == []

    def test_segment_returns_truth_masks(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        for pair in pairs:
            objs = pair.truth.key_objects
            if not objs:
                continue
            masks = oracle.call_segment(pair.raw, [o.box for o in objs])
            assert masks == [o.mask for o in objs]

    def test_ocr_echoes_sidecar_per_view(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        for pair in pairs:
            assert tuple(oracle.call_ocr(pair.raw)) == pair.truth.ocr_raw
            assert tuple(oracle.call_ocr(pair.ar)) == pair.truth.ocr_ar

    def test_verdict_keyed_to_label(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        for pair in pairs:
            v = oracle.call_verdict("whatever", [pair.raw, pair.ar])
            assert v.manipulated == (pair.truth.label == Label.VIM)
            assert v.confidence == 1.0

    def test_no_noise_events_logged(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root)
        oracle.call_keyobjects(pairs[0].raw)
        oracle.call_verdict("p", [pairs[0].raw])
        assert oracle.noise_events == []


class TestLookup:
    def test_unknown_image_is_protocol_error(self, dataset):
        root, _ = dataset
        oracle = _oracle(root)
        stranger = ImageRef("x", 4, 4, pixels=bytes(48))
        with pytest.raises(ProtocolError, match="does not match any indexed scene"):
            oracle.call_keyobjects(stranger)

    def test_lookup_by_content_not_id(self, dataset):
        # an image arriving with a foreign id but identical pixels still
        # resolves; this is what makes the oracle usable behind HTTP
        root, pairs = dataset
        oracle = _oracle(root)
        pair = pairs[0]
        renamed = ImageRef("req-123/raw", pair.raw.width, pair.raw.height, path=pair.raw.path)
        assert oracle.call_keyobjects(renamed) == [o.name for o in pair.truth.key_objects]

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="no scenes"):
            OracleBackend(tmp_path)


class TestNoise:
    def test_drop_prob_one_drops_everything(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root, drop_object_prob=1.0)
        target = next(p for p in pairs if p.truth.key_objects)
        assert oracle.call_keyobjects(target.raw) == []
        assert all(e["event"] == "drop" for e in oracle.noise_events)

    def test_drop_subset_is_seed_deterministic(self, dataset):
        root, pairs = dataset
        a = _oracle(root, seed=7, drop_object_prob=0.5)
        b = _oracle(root, seed=7, drop_object_prob=0.5)
        c = _oracle(root, seed=8, drop_object_prob=0.5)
        outs_a = [a.call_keyobjects(p.raw) for p in pairs]
        outs_b = [b.call_keyobjects(p.raw) for p in pairs]
        outs_c = [c.call_keyobjects(p.raw) for p in pairs]
        assert outs_a == outs_b
        assert outs_a != outs_c  # 20 scenes make a collision effectively impossible
        assert a.noise_events == b.noise_events

    def test_jitter_stays_within_bounds_and_reproduces(self, dataset):
        root, pairs = dataset
        j = 4
        a = _oracle(root, seed=11, box_jitter_px=j)
        b = _oracle(root, seed=11, box_jitter_px=j)
        for pair in pairs:
            for obj in pair.truth.key_objects:
                (box_a,) = a.call_detect(pair.raw, obj.name)
                (box_b,) = b.call_detect(pair.raw, obj.name)
                assert box_a == box_b
                assert box_a.valid_for(pair.raw.width, pair.raw.height)
                assert abs(box_a.x - obj.box.x) <= j
                assert abs(box_a.y - obj.box.y) <= j
                assert abs((box_a.x + box_a.w) - (obj.box.x + obj.box.w)) <= j
                assert abs((box_a.y + box_a.h) - (obj.box.y + obj.box.h)) <= j

    def test_jittered_segment_is_truth_mask_clipped_to_box(self, dataset):
        root, pairs = dataset
        oracle = _oracle(root, seed=11, box_jitter_px=4)
        for pair in pairs:
            for obj in pair.truth.key_objects:
                (box,) = oracle.call_detect(pair.raw, obj.name)
                (mask,) = oracle.call_segment(pair.raw, [box])
                rect = RasterMask.from_rect(pair.raw.width, pair.raw.height, box.x, box.y, box.w, box.h)
                assert mask == obj.mask.intersect(rect)

    def test_char_errors_use_confusion_alphabet_and_reproduce(self, dataset):
        from arsent.glyphs import CONFUSABLE

        root, pairs = dataset
        a = _oracle(root, seed=3, char_error_rate=0.5)
        b = _oracle(root, seed=3, char_error_rate=0.5)
        changed_any = False
        for pair in pairs:
            ta = a.call_ocr(pair.raw)
            tb = b.call_ocr(pair.raw)
            assert ta == tb
            for tok, orig in zip(ta, pair.truth.ocr_raw):
                assert len(tok.text) == len(orig.text)
                for ch, och in zip(tok.text, orig.text):
                    if ch != och:
                        changed_any = True
                        assert CONFUSABLE[och] == ch
        assert changed_any

    def test_verdict_flips_are_logged_and_deterministic(self, dataset):
        root, pairs = dataset
        a = _oracle(root, seed=5, verdict_flip_prob=0.5)
        b = _oracle(root, seed=5, verdict_flip_prob=0.5)
        va = [a.call_verdict("p", [p.raw]).manipulated for p in pairs]
        vb = [b.call_verdict("p", [p.raw]).manipulated for p in pairs]
        assert va == vb
        flips = a.events(op="verdict")
        truth = [p.truth.label == Label.VIM for p in pairs]
        assert sum(x != t for x, t in zip(va, truth)) == len(flips) > 0


class TestLocator:
    def test_parse_full(self, tmp_path):
        root, noise, delays = parse_locator(
            f"oracle:{tmp_path}?seed=9&verdict_flip_prob=0.1&box_jitter_px=2&delay_verdict_ms=50"
        )
        assert str(root) == str(tmp_path)
        assert noise == NoiseProfile(seed=9, verdict_flip_prob=0.1, box_jitter_px=2)
        assert delays == {"verdict": 50.0}

    def test_unknown_param_rejected(self):
        with pytest.raises(ConfigError, match="unknown oracle parameter"):
            parse_locator("oracle:/tmp/x?bogus=1")

    def test_noise_range_validated(self):
        with pytest.raises(ConfigError):
            parse_locator("oracle:/tmp/x?verdict_flip_prob=1.5")

    def test_registry_shares_instances(self, dataset):
        root, _ = dataset
        ep1 = BackendEndpoint("ocr", f"oracle:{root}?seed=1")
        ep2 = BackendEndpoint("verdict", f"oracle:{root}?seed=1")
        ep3 = BackendEndpoint("verdict", f"oracle:{root}?seed=2")
        assert open_backend(ep1) is open_backend(ep2)
        assert open_backend(ep1) is not open_backend(ep3)
