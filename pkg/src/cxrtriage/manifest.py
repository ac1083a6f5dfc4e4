"""Dataset manifest rows and the age/quality exclusion filter."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

LABELS = ("COVID-19", "Non-COVID-19", "No Finding")
PROJECTIONS = ("PA", "AP")
MANIFEST_HEADER = ["path", "label", "projection", "age", "quality_ok"]

_TRUTHY = {"1", "true", "yes", "y"}
_FALSY = {"0", "false", "no", "n"}


class ManifestError(Exception):
    pass


@dataclass
class ManifestEntry:
    path: str
    label: str
    projection: str
    age: float
    quality_ok: bool

    def validate(self) -> None:
        if self.label not in LABELS:
            raise ManifestError(f"label {self.label!r} not in {LABELS}")
        if self.projection not in PROJECTIONS:
            raise ManifestError(f"projection {self.projection!r} not in {PROJECTIONS}")
        if self.age < 0:
            raise ManifestError(f"age {self.age} must be >= 0")


def parse_manifest(text: str) -> list[ManifestEntry]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != MANIFEST_HEADER:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    for line_no, row in enumerate(reader, start=2):
        flag = row["quality_ok"].strip().lower()
        if flag not in _TRUTHY | _FALSY:
            raise ManifestError(f"line {line_no}: quality_ok {row['quality_ok']!r} not boolean")
        try:
            age = float(row["age"])
        except ValueError:
            raise ManifestError(f"line {line_no}: age {row['age']!r} not numeric") from None
        entry = ManifestEntry(
            path=row["path"],
            label=row["label"],
            projection=row["projection"],
            age=age,
            quality_ok=flag in _TRUTHY,
        )
        try:
            entry.validate()
        except ManifestError as exc:
            raise ManifestError(f"line {line_no}: {exc}") from None
        entries.append(entry)
    return entries


def dump_manifest(entries: list[ManifestEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        age = int(e.age) if float(e.age).is_integer() else e.age
        writer.writerow([e.path, e.label, e.projection, age,
                         "true" if e.quality_ok else "false"])
    return buf.getvalue()


def filter_manifest(entries: list[ManifestEntry], min_age: float = 15.0,
                    require_quality: bool = False
                    ) -> tuple[list[ManifestEntry], dict[str, tuple[int, int]]]:
    """Drop rows under the age floor (inclusive keep) or failing quality.

    Returns (kept rows, per-label (before, after) counts).
    """
    kept = [
        e for e in entries
        if e.age >= min_age and (e.quality_ok or not require_quality)
    ]
    summary = {
        label: (
            sum(1 for e in entries if e.label == label),
            sum(1 for e in kept if e.label == label),
        )
        for label in LABELS
    }
    return kept, summary
