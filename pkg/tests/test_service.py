from __future__ import annotations

import threading
import time

import pytest
import requests

from arsent.backend import BackendEndpoint, KINDS
from arsent.config import PipelineConfig, ServiceConfig
from arsent.errors import ConfigError
from arsent.maskops import rle_encode
from arsent.model import Label, ScenePair
from arsent.service import AnalysisService
from arsent.storage import load_manifest, ref_to_png_base64

from conftest import oracle_config


def scene_request(pair: ScenePair) -> dict:
    return {
        "raw": {"png_base64": ref_to_png_base64(pair.raw)},
        "ar": {"png_base64": ref_to_png_base64(pair.ar)},
        "content_mask": {"rle": rle_encode(pair.content_mask)},
    }


@pytest.fixture(scope="module")
def corpus(ds_small):
    root, manifest = ds_small
    pairs = load_manifest(manifest)
    by_label = {label: [p for p in pairs if p.truth.label == label] for label in Label}
    return root, by_label


@pytest.fixture(scope="module")
def service(corpus):
    root, _ = corpus
    cfg = ServiceConfig(listen="127.0.0.1:0", pipeline=oracle_config(root), max_concurrent=8)
    svc = AnalysisService(cfg)
    svc.start()
    yield svc
    svc.stop()


def test_health(service):
    r = requests.get(service.address + "/v1/health", timeout=5)
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_unknown_path_404(service):
    assert requests.get(service.address + "/v1/nope", timeout=5).status_code == 404
    assert requests.post(service.address + "/v1/nope", json={}, timeout=5).status_code == 404


def test_config_endpoint_redacts_tokens(corpus):
    root, _ = corpus
    pipeline = oracle_config(root)
    endpoints = {
        k: BackendEndpoint(k, ep.locator, ep.timeout_ms, ep.tier, token="hunter2")
        for k, ep in pipeline.endpoints.items()
    }
    pipeline = type(pipeline)(**{**pipeline.__dict__, "endpoints": endpoints})
    svc = AnalysisService(ServiceConfig(listen="127.0.0.1:0", pipeline=pipeline))
    svc.start()
    try:
        body = requests.get(svc.address + "/v1/config", timeout=5).json()
    finally:
        svc.stop()
    assert "hunter2" not in str(body)
    assert body["pipeline"]["endpoints"]["ocr"]["token"] == "***"


def test_analyze_obstruction_end_to_end(service, corpus):
    _, by_label = corpus
    pair = by_label[Label.OBSTRUCTION][0]
    r = requests.post(
        service.address + "/v1/analyze/obstruction", json=scene_request(pair), timeout=30
    )
    assert r.status_code == 200
    body = r.json()
    assert body["verdict"]["attacked"] is True
    assert body["verdict"]["kind"] == "obstruction"
    assert body["verdict"]["mitigation"] == "make_translucent"
    assert body["fail_policy"] == "fail_closed"
    assert body["scene_id"].startswith("req-")
    assert any(o["measure"] and o["measure"]["flagged"] for o in body["per_object"])


def test_analyze_vim_end_to_end(service, corpus):
    _, by_label = corpus
    vim_pair = by_label[Label.VIM][0]
    none_pair = by_label[Label.NONE][0]
    r1 = requests.post(service.address + "/v1/analyze/vim", json=scene_request(vim_pair), timeout=30)
    r2 = requests.post(service.address + "/v1/analyze/vim", json=scene_request(none_pair), timeout=30)
    assert r1.json()["verdict"]["attacked"] is True
    assert r1.json()["verdict"]["kind"] == "vim"
    assert r2.json()["verdict"]["attacked"] is False


def test_identical_requests_identical_reports_modulo_timing(service, corpus):
    _, by_label = corpus
    pair = by_label[Label.OBSTRUCTION][0]
    payload = scene_request(pair)
    a = requests.post(service.address + "/v1/analyze/obstruction", json=payload, timeout=30).json()
    b = requests.post(service.address + "/v1/analyze/obstruction", json=payload, timeout=30).json()
    a.pop("latency"), b.pop("latency")
    assert a == b
    assert a["scene_id"] == b["scene_id"]  # id derives from the body hash


def test_bad_requests_rejected(service, corpus):
    _, by_label = corpus
    addr = service.address + "/v1/analyze/obstruction"
    assert requests.post(addr, data=b"{nope", timeout=5).status_code == 400

    body = scene_request(by_label[Label.NONE][0])
    del body["ar"]
    assert requests.post(addr, json=body, timeout=5).status_code == 400

    body = scene_request(by_label[Label.NONE][0])
    body["content_mask"]["rle"] = "4 4\n1,2"
    assert requests.post(addr, json=body, timeout=5).status_code == 400

    body = scene_request(by_label[Label.NONE][0])
    body["content_mask"]["rle"] = "4 4\n16"  # valid RLE, wrong dimensions
    r = requests.post(addr, json=body, timeout=5)
    assert r.status_code == 400
    assert any("content_mask dimension mismatch" in v for v in r.json()["violations"])


@pytest.mark.parametrize("policy,expect_attacked", [("fail_closed", True), ("fail_open", False)])
def test_backend_down_fail_policies(corpus, policy, expect_attacked):
    root, by_label = corpus
    endpoints = {k: BackendEndpoint(k, "http://127.0.0.1:9", timeout_ms=500) for k in KINDS}
    pipeline = PipelineConfig(endpoints=endpoints)
    svc = AnalysisService(
        ServiceConfig(listen="127.0.0.1:0", pipeline=pipeline, fail_policy=policy)
    )
    svc.start()
    try:
        r = requests.post(
            svc.address + "/v1/analyze/obstruction",
            json=scene_request(by_label[Label.OBSTRUCTION][0]),
            timeout=30,
        )
    finally:
        svc.stop()
    assert r.status_code == 200
    body = r.json()
    assert body["verdict"]["attacked"] is expect_attacked
    assert body["fail_policy"] == policy
    assert body["failure"]["stage"] == "keyobjects"
    if policy == "fail_closed":
        assert "undetermined-treat-as-attacked" in body["verdict"]["rationale"]
        assert body["verdict"]["mitigation"] == "make_translucent"
    else:
        assert body["verdict"]["mitigation"] == "none"


def test_over_capacity_yields_backpressure_status(corpus):
    root, by_label = corpus
    pipeline = oracle_config(root, delay_verdict_ms=700)
    svc = AnalysisService(
        ServiceConfig(listen="127.0.0.1:0", pipeline=pipeline, max_concurrent=1)
    )
    svc.start()
    payload = scene_request(by_label[Label.VIM][0])
    results = {}

    def slow_call():
        results["slow"] = requests.post(
            svc.address + "/v1/analyze/vim", json=payload, timeout=30
        ).status_code

    try:
        t = threading.Thread(target=slow_call)
        t.start()
        time.sleep(0.3)  # let the slow request occupy the only slot
        fast = requests.post(svc.address + "/v1/analyze/vim", json=payload, timeout=30)
        t.join()
    finally:
        svc.stop()
    assert fast.status_code == 429
    assert fast.json() == {"error": "over capacity"}
    assert results["slow"] == 200


def test_graceful_shutdown_finishes_in_flight(corpus):
    root, by_label = corpus
    pipeline = oracle_config(root, delay_verdict_ms=500)
    svc = AnalysisService(ServiceConfig(listen="127.0.0.1:0", pipeline=pipeline))
    svc.start()
    payload = scene_request(by_label[Label.VIM][0])
    results = {}

    def call():
        results["status"] = requests.post(
            svc.address + "/v1/analyze/vim", json=payload, timeout=30
        ).status_code

    t = threading.Thread(target=call)
    t.start()
    time.sleep(0.2)  # request is now in flight
    svc.stop()  # must drain, not kill
    t.join()
    assert results["status"] == 200


def test_service_config_validation(corpus):
    root, _ = corpus
    pipeline = oracle_config(root)
    with pytest.raises(ConfigError, match="max_concurrent"):
        ServiceConfig(pipeline=pipeline, max_concurrent=0).validate()
    with pytest.raises(ConfigError, match="request_timeout_ms"):
        ServiceConfig(pipeline=pipeline, request_timeout_ms=5).validate()
    with pytest.raises(ConfigError, match="fail_policy"):
        ServiceConfig(pipeline=pipeline, fail_policy="explode").validate()
