import http.client
import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from cxrtriage import dicom
from cxrtriage.gateway import GatewayApp, GatewayConfig, load_config
from cxrtriage.multipart import build_related
from cxrtriage.nn import preprocess
from cxrtriage.gate import gate as run_gate
from cxrtriage.pipeline import classify_grid
from cxrtriage.rng import Xorshift64Star

from conftest import blank_image, chest_image, noise_image

# Threshold chosen between the demo gate scores of the blank fixture
# (rejected) and the chest/noise fixtures (accepted); asserted below.
SCENARIO_THRESHOLD = 0.51


def seeded_uid(seed):
    rng = Xorshift64Star(seed)
    return lambda: dicom.new_uid(lambda bits: rng.next_u64() << 64 | rng.next_u64())


def dicom_bytes(grid, seed):
    obj = dicom.image_to_object(grid, uid_source=seeded_uid(seed))
    return dicom.serialize_part10(obj), obj.sop_instance_uid(), obj.study_instance_uid()


def request(gw, method, path, body=None, headers=None):
    conn = http.client.HTTPConnection("127.0.0.1", gw.port, timeout=10)
    conn.request(method, path, body=body, headers=headers or {})
    resp = conn.getresponse()
    data = resp.read()
    conn.close()
    return resp.status, dict(resp.getheaders()), data


def stow(gw, payloads, token=None):
    content_type, body = build_related(payloads)
    headers = {"Content-Type": content_type}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    status, _, data = request(gw, "POST", "/studies", body=body, headers=headers)
    return status, json.loads(data) if data else None


def test_scenario_threshold_separates_fixtures(cxr_model, ood_model):
    """The premise behind SCENARIO_THRESHOLD, asserted so drift is loud."""
    probs = {
        name: run_gate(preprocess(img), ood_model, 0.5).in_dist_prob
        for name, img in (("chest", chest_image()), ("noise", noise_image()),
                          ("blank", blank_image()))
    }
    assert probs["blank"] < SCENARIO_THRESHOLD < min(probs["chest"], probs["noise"])


class TestStow:
    def test_accepted_upload_matches_offline_pipeline_bit_exactly(
            self, gateway_factory, cxr_model, ood_model):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        grid = chest_image()
        body, sop, _ = dicom_bytes(grid, seed=101)
        status, out = stow(gw, [body])
        assert status == 200
        assert [e["sop"] for e in out["accepted"]] == [sop]
        assert out["rejected"] == [] and out["failed"] == []
        offline = classify_grid(grid, cxr_model, ood_model, SCENARIO_THRESHOLD)
        entry = out["accepted"][0]
        assert entry["prediction"]["probabilities"] == dict(
            zip(offline.prediction.class_labels, offline.prediction.probabilities))
        assert entry["prediction"]["argmax_label"] == offline.prediction.argmax_label
        assert entry["sr_sop"]

    def test_wrong_media_type_415(self, gateway_factory):
        gw = gateway_factory()
        status, _, data = request(gw, "POST", "/studies", body=b"{}",
                                  headers={"Content-Type": "application/json"})
        assert status == 415

    def test_mixed_valid_and_truncated_parts(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        body, sop, _ = dicom_bytes(chest_image(), seed=102)
        status, out = stow(gw, [body, body[:200]])
        assert status == 200
        assert [e["sop"] for e in out["accepted"]] == [sop]
        assert len(out["failed"]) == 1
        assert out["failed"][0]["index"] == 1
        assert "TruncatedElement" in out["failed"][0]["error"]

    def test_malformed_multipart_400(self, gateway_factory):
        gw = gateway_factory()
        headers = {"Content-Type":
                   'multipart/related; type="application/dicom"; boundary=zzz'}
        status, _, data = request(gw, "POST", "/studies", body=b"not multipart",
                                  headers=headers)
        assert status == 400
        assert "multipart" in json.loads(data)["error"]

    def test_oversize_request_413(self, gateway_factory):
        gw = gateway_factory(max_request_bytes=1000)
        body, _, _ = dicom_bytes(chest_image(), seed=103)
        status, out = stow(gw, [body])
        assert status == 413

    def test_non_dicom_part_content_type_fails_that_part(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        good, sop, _ = dicom_bytes(chest_image(), seed=104)
        content_type, body = build_related([good])
        # Append a second part with a JSON content type inside the envelope.
        boundary = "cxrtriage-boundary"
        insert_at = body.rfind(b"--" + boundary.encode() + b"--")
        extra = (b"--" + boundary.encode() + b"\r\nContent-Type: application/json"
                 + b"\r\n\r\n{}\r\n")
        body = body[:insert_at] + extra + body[insert_at:]
        status, _, data = request(gw, "POST", "/studies", body=body,
                                  headers={"Content-Type": content_type})
        out = json.loads(data)
        assert status == 200
        assert len(out["accepted"]) == 1
        assert out["failed"][0]["index"] == 1

    def test_duplicate_upload_is_idempotent(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        body, sop, _ = dicom_bytes(chest_image(), seed=105)
        _, first = stow(gw, [body])
        record_before = gw.app.store.get(sop)
        _, second = stow(gw, [body])
        record_after = gw.app.store.get(sop)
        assert second["accepted"][0]["sop"] == sop
        assert second["accepted"][0]["sr_sop"] == first["accepted"][0]["sr_sop"]
        assert record_before.received_at == record_after.received_at  # no re-run
        assert len(gw.app.store) == 1

    def test_concurrent_distinct_uploads_all_recorded(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        bodies = [dicom_bytes(chest_image(), seed=200 + i)[0] for i in range(8)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda b: stow(gw, [b]), bodies))
        assert all(status == 200 for status, _ in results)
        assert all(len(out["accepted"]) == 1 for _, out in results)
        assert len(gw.app.store) == 8


class TestWado:
    def test_sr_retrieval_roundtrip(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        body, sop, study = dicom_bytes(chest_image(), seed=110)
        _, out = stow(gw, [body])
        sr_sop = out["accepted"][0]["sr_sop"]
        status, headers, data = request(gw, "GET", f"/studies/{study}/instances/{sr_sop}")
        assert status == 200
        assert headers["Content-Type"] == "application/dicom"
        sr = dicom.parse_part10(data)
        assert sr.require(dicom.MODALITY).text() == "SR"
        assert sop in sr.require(dicom.REFERENCED_IMAGE_SEQ).value.decode("latin-1")

    def test_original_bytes_identical(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        body, sop, study = dicom_bytes(chest_image(), seed=111)
        stow(gw, [body])
        status, _, data = request(gw, "GET", f"/studies/{study}/instances/{sop}")
        assert status == 200
        assert data == body

    def test_unknown_uid_404(self, gateway_factory):
        gw = gateway_factory()
        status, _, _ = request(gw, "GET", "/studies/2.25.1/instances/2.25.2")
        assert status == 404


def seeded_scenario(gw):
    """Two accepted (chest, noise) and one OOD-rejected (blank) upload."""
    uploads = [
        ("chest", chest_image(), 120),
        ("noise", noise_image(), 121),
        ("blank", blank_image(), 122),
    ]
    sops = {}
    for name, grid, seed in uploads:
        body, sop, study = dicom_bytes(grid, seed)
        status, out = stow(gw, [body])
        assert status == 200
        sops[name] = (sop, study, out)
    return sops


class TestPredictionsApi:
    def test_empty_store_empty_list(self, gateway_factory):
        gw = gateway_factory()
        status, _, data = request(gw, "GET", "/predictions")
        out = json.loads(data)
        assert status == 200
        assert out == {"total": 0, "records": []}

    def test_seeded_scenario_counts_and_status_filter(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        sops = seeded_scenario(gw)
        assert sops["blank"][2]["rejected"], "blank fixture should be gate-rejected"
        status, _, data = request(gw, "GET", "/predictions?status=rejected_ood")
        out = json.loads(data)
        assert out["total"] == 1
        assert out["records"][0]["sop_instance_uid"] == sops["blank"][0]
        assert out["records"][0]["status"] == "rejected_ood"
        assert out["records"][0]["sr_sop_uid"] is None
        assert out["records"][0]["prediction"] is None
        status, _, data = request(gw, "GET", "/predictions?status=accepted")
        assert json.loads(data)["total"] == 2

    def test_pagination_arithmetic(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        seeded_scenario(gw)
        status, _, data = request(gw, "GET", "/predictions?limit=1")
        out = json.loads(data)
        assert out["total"] == 3
        assert len(out["records"]) == 1

    def test_newest_first(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        sops = seeded_scenario(gw)
        _, _, data = request(gw, "GET", "/predictions")
        order = [r["sop_instance_uid"] for r in json.loads(data)["records"]]
        assert order == [sops["blank"][0], sops["noise"][0], sops["chest"][0]]

    def test_detail_and_unknown_sop(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        sops = seeded_scenario(gw)
        status, _, data = request(gw, "GET", f"/predictions/{sops['chest'][0]}")
        record = json.loads(data)
        assert status == 200
        assert record["status"] == "accepted"
        assert record["gate"]["accepted"] is True
        status, _, _ = request(gw, "GET", "/predictions/2.25.404404")
        assert status == 404

    def test_bad_status_filter_400(self, gateway_factory):
        gw = gateway_factory()
        status, _, _ = request(gw, "GET", "/predictions?status=bogus")
        assert status == 400


class TestReview:
    def test_review_roundtrip(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        sops = seeded_scenario(gw)
        sop = sops["chest"][0]
        payload = json.dumps({"action": "overridden", "note": "radiologist disagrees"})
        status, _, data = request(gw, "POST", f"/predictions/{sop}/review",
                                  body=payload.encode(),
                                  headers={"Content-Type": "application/json"})
        assert status == 200
        assert json.loads(data)["review"] == {
            "action": "overridden", "note": "radiologist disagrees"}
        _, _, data = request(gw, "GET", f"/predictions/{sop}")
        assert json.loads(data)["review"]["action"] == "overridden"

    def test_bad_action_400(self, gateway_factory):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        sops = seeded_scenario(gw)
        status, _, _ = request(
            gw, "POST", f"/predictions/{sops['chest'][0]}/review",
            body=b'{"action": "delete"}', headers={"Content-Type": "application/json"})
        assert status == 400

    def test_unknown_sop_404(self, gateway_factory):
        gw = gateway_factory()
        status, _, _ = request(gw, "POST", "/predictions/2.25.9/review",
                               body=b'{"action": "confirmed"}')
        assert status == 404


class TestOperational:
    def test_healthz(self, gateway_factory, cxr_model, ood_model):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD)
        status, _, data = request(gw, "GET", "/healthz")
        out = json.loads(data)
        assert status == 200
        assert out["status"] == "ok"
        assert out["classifier_version"] == cxr_model.model_version()
        assert out["ood_version"] == ood_model.model_version()
        assert out["ood_threshold"] == SCENARIO_THRESHOLD
        assert out["record_count"] == 0

    def test_auth_token_hook(self, gateway_factory):
        gw = gateway_factory(auth_token="sesame")
        status, _, _ = request(gw, "GET", "/predictions")
        assert status == 401
        status, _, _ = request(gw, "GET", "/predictions",
                               headers={"Authorization": "Bearer sesame"})
        assert status == 200

    def test_restart_replays_identical_queue(self, gateway_factory, tmp_path,
                                             cxr_model, ood_model):
        gw = gateway_factory(threshold=SCENARIO_THRESHOLD, storage_name="replay")
        sops = seeded_scenario(gw)
        before, page_before = gw.app.store.list_records()
        config = GatewayConfig(listen="127.0.0.1:0",
                               ood_threshold=SCENARIO_THRESHOLD,
                               storage_dir=str(tmp_path / "replay"))
        reopened = GatewayApp(config, classifier=cxr_model, ood_model=ood_model)
        after, page_after = reopened.store.list_records()
        assert before == after == 3
        assert page_before == page_after


class TestConfig:
    def test_precedence_flags_over_env_over_file(self, tmp_path):
        config_file = tmp_path / "gw.conf"
        config_file.write_text(
            "# gateway config\n"
            "listen=127.0.0.1:9001\n"
            "ood.threshold=0.25\n"
            "storage.dir=fromfile\n"
        )
        env = {"CXRGW_OOD_THRESHOLD": "0.75", "CXRGW_STORAGE_DIR": "fromenv"}
        config = load_config(config_file, env=env,
                             overrides={"storage.dir": "fromflag"})
        assert config.listen == "127.0.0.1:9001"
        assert config.ood_threshold == 0.75
        assert config.storage_dir == "fromflag"

    def test_unknown_key_rejected(self, tmp_path):
        config_file = tmp_path / "gw.conf"
        config_file.write_text("no.such.key=1\n")
        with pytest.raises(Exception, match="bad config line"):
            load_config(config_file, env={})

    def test_threshold_validated(self):
        with pytest.raises(Exception, match="threshold"):
            load_config(None, env={"CXRGW_OOD_THRESHOLD": "1.5"})
