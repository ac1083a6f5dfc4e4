"""DICOMweb-style HTTP gateway: STOW-RS ingestion, WADO-RS retrieval, queue API.

Endpoints:
  POST /studies                              store one or more DICOM parts
  GET  /studies/{study}/instances/{sop}      exact stored bytes (image or SR)
  GET  /predictions?status=&limit=&offset=   record listing, newest first
  GET  /predictions/{sop}                    one record
  POST /predictions/{sop}/review             reviewer action {action, note}
  GET  /healthz                              model versions + storage status

Per-part failures never abort sibling parts: mixed outcomes return 200 with
``accepted`` / ``rejected`` / ``failed`` lists; 400 is reserved for an
unreadable envelope. Inference runs synchronously in the request cycle.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from . import dicom
from .modelfile import ModelFile, load_model
from .multipart import MultipartError, parse_content_type, parse_related
from .pipeline import classify_grid
from .store import StudyRecord, StudyStore

logger = logging.getLogger(__name__)

ENV_PREFIX = "CXRGW_"
CONFIG_KEYS = (
    "listen",
    "model.classifier",
    "model.ood",
    "ood.threshold",
    "storage.dir",
    "limits.max_request_bytes",
    "auth.token",
)


class ConfigError(Exception):
    pass


@dataclass
class GatewayConfig:
    listen: str = "127.0.0.1:8008"
    classifier_model: str = ""
    ood_model: str = ""
    ood_threshold: float = 0.5
    storage_dir: str = "store"
    max_request_bytes: int = 64 * 1024 * 1024
    auth_token: str = ""  # static-token hook; empty disables the check

    def validate(self) -> None:
        if not (0.0 <= self.ood_threshold <= 1.0):
            raise ConfigError(f"ood.threshold {self.ood_threshold} outside [0, 1]")
        if self.max_request_bytes < 1:
            raise ConfigError("limits.max_request_bytes must be positive")
        host, _, port = self.listen.partition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen must be host:port, got {self.listen!r}")


_KEY_TO_FIELD = {
    "listen": ("listen", str),
    "model.classifier": ("classifier_model", str),
    "model.ood": ("ood_model", str),
    "ood.threshold": ("ood_threshold", float),
    "storage.dir": ("storage_dir", str),
    "limits.max_request_bytes": ("max_request_bytes", int),
    "auth.token": ("auth_token", str),
}


def load_config(path: Optional[Path] = None, env: Optional[dict] = None,
                overrides: Optional[dict] = None) -> GatewayConfig:
    """Flat key=value file, env vars (CXRGW_*), then explicit overrides."""
    values: dict[str, str] = {}
    if path is not None:
        for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{line_no}: bad config line {line!r}")
            values[key] = val.strip()
    env = os.environ if env is None else env
    for key in CONFIG_KEYS:
        env_name = ENV_PREFIX + key.upper().replace(".", "_")
        if env_name in env:
            values[key] = env[env_name]
    for key, val in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = str(val)
    config = GatewayConfig()
    for key, raw in values.items():
        field_name, cast = _KEY_TO_FIELD[key]
        try:
            setattr(config, field_name, cast(raw))
        except ValueError:
            raise ConfigError(f"config key {key} has non-{cast.__name__} value {raw!r}") from None
    config.validate()
    return config


class GatewayApp:
    """Loaded models, storage, and the per-part ingestion pipeline."""

    def __init__(self, config: GatewayConfig,
                 classifier: Optional[ModelFile] = None,
                 ood_model: Optional[ModelFile] = None):
        config.validate()
        self.config = config
        self.classifier = classifier or load_model(Path(config.classifier_model).read_bytes())
        self.ood_model = ood_model or load_model(Path(config.ood_model).read_bytes())
        if len(self.ood_model.class_labels) != 2:
            raise ConfigError("ood model must have exactly 2 class labels")
        self.store = StudyStore(Path(config.storage_dir))
        self._pipeline_lock = threading.Lock()

    # -- ingestion ---------------------------------------------------------

    def _now(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="microseconds")

    def ingest_part(self, body: bytes) -> StudyRecord:
        """Parse, gate, classify, and persist one DICOM part.

        Raises DicomError subclasses for inputs that never reach a record
        (unparseable bytes). Always returns the stored record otherwise,
        including the idempotent duplicate-upload case.
        """
        obj = dicom.parse_part10(body)
        sop_uid = obj.sop_instance_uid()
        study_uid = obj.study_instance_uid() or sop_uid
        with self._pipeline_lock:
            existing = self.store.get(sop_uid)
            if existing is not None:
                return existing
            try:
                grid = dicom.extract_pixels(obj)
                result = classify_grid(
                    grid, self.classifier, self.ood_model, self.config.ood_threshold
                )
            except dicom.DicomError as exc:
                record = StudyRecord(
                    study_uid=study_uid,
                    sop_instance_uid=sop_uid,
                    received_at=self._now(),
                    status="failed",
                    gate=None,
                    prediction=None,
                    sr_sop_uid=None,
                    source_bytes_path="",
                    error=f"{type(exc).__name__}: {exc}",
                )
                return self.store.put(record, body)
            sr_bytes = None
            sr_sop_uid = None
            if result.prediction is not None:
                doc = dicom.SRDocument(
                    source_sop_instance_uid=sop_uid,
                    class_labels=result.prediction.class_labels,
                    probabilities=result.prediction.probabilities,
                    gate_accepted=True,
                    model_version=result.prediction.model_version,
                    source_study_uid=study_uid,
                )
                sr_obj = dicom.build_sr(doc)
                sr_sop_uid = sr_obj.sop_instance_uid()
                sr_bytes = dicom.serialize_part10(sr_obj)
            record = StudyRecord(
                study_uid=study_uid,
                sop_instance_uid=sop_uid,
                received_at=self._now(),
                status="accepted" if result.prediction is not None else "rejected_ood",
                gate=result.gate,
                prediction=result.prediction,
                sr_sop_uid=sr_sop_uid,
                source_bytes_path="",
                error=None,
            )
            return self.store.put(record, body, sr_bytes)

    def stow(self, parts) -> dict:
        accepted, rejected, failed = [], [], []
        for index, part in enumerate(parts):
            if part.content_type != "application/dicom":
                failed.append({
                    "index": index,
                    "error": f"part content-type {part.content_type!r} is not application/dicom",
                })
                continue
            try:
                record = self.ingest_part(part.body)
            except dicom.DicomError as exc:
                failed.append({"index": index, "error": f"{type(exc).__name__}: {exc}"})
                continue
            if record.status == "accepted":
                accepted.append({
                    "sop": record.sop_instance_uid,
                    "prediction": record.prediction.as_dict(),
                    "sr_sop": record.sr_sop_uid,
                })
            elif record.status == "rejected_ood":
                rejected.append({
                    "sop": record.sop_instance_uid,
                    "reason": (
                        f"out-of-distribution: in_dist_prob={record.gate.in_dist_prob:.4f}"
                        f" < threshold={record.gate.threshold:.4f}"
                    ),
                })
            else:
                failed.append({"index": index, "error": record.error or "stored failure"})
        return {"accepted": accepted, "rejected": rejected, "failed": failed}

    def healthz(self) -> dict:
        return {
            "status": "ok",
            "classifier_version": self.classifier.model_version(),
            "ood_version": self.ood_model.model_version(),
            "ood_threshold": self.config.ood_threshold,
            "storage_dir": str(self.store.root),
            "record_count": len(self.store),
        }


class GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "cxrtriage-gateway/0.1"

    @property
    def app(self) -> GatewayApp:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        logger.info("%s %s", self.address_string(), fmt % args)

    # -- plumbing ----------------------------------------------------------

    def _send(self, code: int, payload: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")
        self.end_headers()
        self.wfile.write(payload)

    def _json(self, code: int, obj) -> None:
        self._send(code, json.dumps(obj).encode("utf-8"), "application/json")

    def _error(self, code: int, message: str) -> None:
        self._json(code, {"error": message})

    def _authorized(self) -> bool:
        token = self.app.config.auth_token
        if not token:
            return True
        return self.headers.get("Authorization", "") == f"Bearer {token}"

    def _read_body(self) -> Optional[bytes]:
        length = self.headers.get("Content-Length")
        if length is None or not length.isdigit():
            self._error(411, "Content-Length required")
            return None
        n = int(length)
        if n > self.app.config.max_request_bytes:
            self._error(413, f"request exceeds {self.app.config.max_request_bytes} bytes")
            return None
        return self.rfile.read(n)

    # -- methods -----------------------------------------------------------

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    def do_GET(self):
        url = urlparse(self.path)
        segments = [s for s in url.path.split("/") if s]
        if not self._authorized():
            return self._error(401, "missing or invalid token")
        if url.path == "/healthz":
            return self._json(200, self.app.healthz())
        if len(segments) == 4 and segments[0] == "studies" and segments[2] == "instances":
            data = self.app.store.instance_bytes(segments[1], segments[3])
            if data is None:
                return self._error(404, "unknown study or instance UID")
            return self._send(200, data, "application/dicom")
        if segments[:1] == ["predictions"] and len(segments) == 1:
            return self._predictions_list(url)
        if segments[:1] == ["predictions"] and len(segments) == 2:
            record = self.app.store.get(segments[1])
            if record is None:
                return self._error(404, f"no record for SOP {segments[1]}")
            return self._json(200, record.as_dict())
        return self._error(404, f"no route for {url.path}")

    def _predictions_list(self, url):
        query = parse_qs(url.query)
        status = query.get("status", [None])[0]
        if status is not None and status not in ("accepted", "rejected_ood", "failed"):
            return self._error(400, f"unknown status filter {status!r}")
        try:
            limit = int(query.get("limit", ["50"])[0])
            offset = int(query.get("offset", ["0"])[0])
        except ValueError:
            return self._error(400, "limit/offset must be integers")
        if limit < 0 or offset < 0:
            return self._error(400, "limit/offset must be non-negative")
        total, page = self.app.store.list_records(status=status, limit=limit, offset=offset)
        return self._json(200, {
            "total": total,
            "records": [r.as_dict() for r in page],
        })

    def do_POST(self):
        url = urlparse(self.path)
        segments = [s for s in url.path.split("/") if s]
        if not self._authorized():
            return self._error(401, "missing or invalid token")
        if url.path == "/studies":
            return self._stow()
        if len(segments) == 3 and segments[0] == "predictions" and segments[2] == "review":
            return self._review(segments[1])
        return self._error(404, f"no route for {url.path}")

    def _stow(self):
        content_type = parse_content_type(self.headers.get("Content-Type", ""))
        if (content_type.media_type != "multipart/related"
                or content_type.params.get("type") != "application/dicom"):
            return self._error(
                415, 'expected multipart/related; type="application/dicom"'
            )
        body = self._read_body()
        if body is None:
            return
        try:
            parts = parse_related(content_type.params.get("boundary", ""), body)
        except MultipartError as exc:
            return self._error(400, f"malformed multipart body: {exc}")
        return self._json(200, self.app.stow(parts))

    def _review(self, sop_uid: str):
        body = self._read_body()
        if body is None:
            return
        try:
            payload = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return self._error(400, "review body must be JSON")
        action = payload.get("action")
        if action not in ("confirmed", "overridden", "none"):
            return self._error(400, f"action must be confirmed/overridden/none, got {action!r}")
        try:
            record = self.app.store.set_review(sop_uid, action, str(payload.get("note", "")))
        except KeyError:
            return self._error(404, f"no record for SOP {sop_uid}")
        return self._json(200, record.as_dict())


def make_server(app: GatewayApp) -> ThreadingHTTPServer:
    host, _, port = app.config.listen.partition(":")
    server = ThreadingHTTPServer((host, int(port)), GatewayHandler)
    server.app = app  # type: ignore[attr-defined]
    return server


def serve(config: GatewayConfig) -> None:
    app = GatewayApp(config)
    server = make_server(app)
    host, port = server.server_address[:2]
    logger.info("gateway listening on %s:%s", host, port)
    print(f"gateway listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
