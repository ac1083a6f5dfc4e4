"""Append-only on-disk persistence for study records.

Layout: ``<root>/<study>/<sop>.dcm`` (original bytes), ``<sop>.sr.dcm``
(generated report), ``<sop>.record.json``. Writes go through a
write-then-rename protocol, so a crash mid-store never leaves a partial
record, and restart rebuilds an identical queue by scanning the directory.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .gate import GateDecision
from .nn import Prediction

STATUSES = ("accepted", "rejected_ood", "failed")

_UID_RE = re.compile(r"^[0-9][0-9.]{0,63}$")


class StoreError(Exception):
    pass


def _safe_uid(uid: str) -> str:
    if not _UID_RE.match(uid):
        raise StoreError(f"refusing to use {uid!r} as a path component")
    return uid


@dataclass
class StudyRecord:
    study_uid: str
    sop_instance_uid: str
    received_at: str  # UTC ISO 8601
    status: str
    gate: Optional[GateDecision]
    prediction: Optional[Prediction]
    sr_sop_uid: Optional[str]
    source_bytes_path: str
    error: Optional[str] = None
    review_action: str = "none"  # none | confirmed | overridden
    review_note: str = ""

    def validate(self) -> None:
        if self.status not in STATUSES:
            raise StoreError(f"unknown status {self.status!r}")
        gate_rejected = self.gate is not None and not self.gate.accepted
        if (self.status == "rejected_ood") != gate_rejected:
            raise StoreError("status rejected_ood inconsistent with gate decision")
        if (self.prediction is not None) != (self.status == "accepted"):
            raise StoreError("prediction present iff status is accepted")
        if self.status == "rejected_ood" and self.sr_sop_uid is not None:
            raise StoreError("rejected studies must not carry an SR")
        if self.review_action not in ("none", "confirmed", "overridden"):
            raise StoreError(f"unknown review action {self.review_action!r}")

    def as_dict(self) -> dict:
        return {
            "study_uid": self.study_uid,
            "sop_instance_uid": self.sop_instance_uid,
            "received_at": self.received_at,
            "status": self.status,
            "gate": self.gate.as_dict() if self.gate else None,
            "prediction": self.prediction.as_dict() if self.prediction else None,
            "sr_sop_uid": self.sr_sop_uid,
            "source_bytes_path": self.source_bytes_path,
            "error": self.error,
            "review": {"action": self.review_action, "note": self.review_note},
        }

    @staticmethod
    def from_dict(data: dict) -> "StudyRecord":
        gate = None
        if data.get("gate"):
            g = data["gate"]
            gate = GateDecision(
                in_dist_prob=g["in_dist_prob"], threshold=g["threshold"],
                accepted=g["accepted"], ood_model_version=g["ood_model_version"],
            )
        pred = None
        if data.get("prediction"):
            p = data["prediction"]
            labels = tuple(p["probabilities"].keys())
            pred = Prediction(
                class_labels=labels,
                probabilities=tuple(p["probabilities"].values()),
                argmax_label=p["argmax_label"],
                model_version=p["model_version"],
            )
        review = data.get("review") or {}
        record = StudyRecord(
            study_uid=data["study_uid"],
            sop_instance_uid=data["sop_instance_uid"],
            received_at=data["received_at"],
            status=data["status"],
            gate=gate,
            prediction=pred,
            sr_sop_uid=data.get("sr_sop_uid"),
            source_bytes_path=data["source_bytes_path"],
            error=data.get("error"),
            review_action=review.get("action", "none"),
            review_note=review.get("note", ""),
        )
        record.validate()
        return record


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class StudyStore:
    """Single-writer, multi-reader record index backed by the storage dir."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[str, StudyRecord] = {}
        self._sr_index: dict[str, str] = {}  # sr_sop_uid -> source sop uid
        self._scan()

    def _scan(self) -> None:
        for record_file in sorted(self.root.glob("*/*.record.json")):
            record = StudyRecord.from_dict(json.loads(record_file.read_text()))
            self._records[record.sop_instance_uid] = record
            if record.sr_sop_uid:
                self._sr_index[record.sr_sop_uid] = record.sop_instance_uid

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def has(self, sop_uid: str) -> bool:
        with self._lock:
            return sop_uid in self._records

    def get(self, sop_uid: str) -> Optional[StudyRecord]:
        with self._lock:
            return self._records.get(sop_uid)

    def list_records(self, status: Optional[str] = None, limit: int = 50,
                     offset: int = 0) -> tuple[int, list[StudyRecord]]:
        """Newest first; returns (total matching, page)."""
        with self._lock:
            records = sorted(
                self._records.values(),
                key=lambda r: (r.received_at, r.sop_instance_uid),
                reverse=True,
            )
        if status is not None:
            records = [r for r in records if r.status == status]
        return len(records), records[offset : offset + limit]

    def _study_dir(self, study_uid: str) -> Path:
        path = self.root / _safe_uid(study_uid)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def put(self, record: StudyRecord, source_bytes: bytes,
            sr_bytes: Optional[bytes] = None) -> StudyRecord:
        record.validate()
        if (sr_bytes is None) != (record.sr_sop_uid is None):
            raise StoreError("sr bytes and sr_sop_uid must be given together")
        study_dir = self._study_dir(record.study_uid)
        sop = _safe_uid(record.sop_instance_uid)
        source_path = study_dir / f"{sop}.dcm"
        record.source_bytes_path = str(source_path.relative_to(self.root))
        _atomic_write(source_path, source_bytes)
        if sr_bytes is not None:
            _atomic_write(study_dir / f"{sop}.sr.dcm", sr_bytes)
        _atomic_write(
            study_dir / f"{sop}.record.json",
            json.dumps(record.as_dict(), indent=1).encode("utf-8"),
        )
        with self._lock:
            self._records[record.sop_instance_uid] = record
            if record.sr_sop_uid:
                self._sr_index[record.sr_sop_uid] = record.sop_instance_uid
        return record

    def instance_bytes(self, study_uid: str, sop_uid: str) -> Optional[bytes]:
        """Stored bytes for an original image or a generated SR, by SOP UID."""
        with self._lock:
            record = self._records.get(sop_uid)
            source_sop = self._sr_index.get(sop_uid)
        if record is not None and record.study_uid == study_uid:
            path = self.root / _safe_uid(study_uid) / f"{_safe_uid(sop_uid)}.dcm"
            return path.read_bytes() if path.exists() else None
        if source_sop is not None:
            with self._lock:
                source = self._records.get(source_sop)
            if source is not None and source.study_uid == study_uid:
                path = self.root / _safe_uid(study_uid) / f"{_safe_uid(source_sop)}.sr.dcm"
                return path.read_bytes() if path.exists() else None
        return None

    def set_review(self, sop_uid: str, action: str, note: str) -> StudyRecord:
        if action not in ("confirmed", "overridden", "none"):
            raise StoreError(f"unknown review action {action!r}")
        with self._lock:
            record = self._records.get(sop_uid)
        if record is None:
            raise KeyError(sop_uid)
        record.review_action = action
        record.review_note = note
        study_dir = self._study_dir(record.study_uid)
        _atomic_write(
            study_dir / f"{_safe_uid(sop_uid)}.record.json",
            json.dumps(record.as_dict(), indent=1).encode("utf-8"),
        )
        return record
