#!/usr/bin/env python3
"""Regenerate the checked-in golden corpus under testdata/.

Everything here is deterministic (seeded UIDs, fixed timestamps), so a
rerun after a refactor either reproduces the corpus byte-for-byte or makes
a deliberate format change visible in the diff.

Usage: python3 tools/gen_testdata.py [testdata]
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from cxrtriage import dicom
from cxrtriage.modelfile import make_demo_model, save_model
from cxrtriage.nn import forward
from cxrtriage.rng import Xorshift64Star

FIXED_CLOCK = lambda: datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


def seeded_uid_source(seed: int):
    rng = Xorshift64Star(seed)
    return lambda: dicom.new_uid(lambda bits: rng.next_u64() << 64 | rng.next_u64())


def gradient(rows, cols, maxval):
    vals = (np.arange(rows * cols).reshape(rows, cols) * maxval) // max(rows * cols - 1, 1)
    return vals.astype(np.uint16 if maxval > 255 else np.uint8)


def chest_blob(n, maxval):
    y, x = np.mgrid[0:n, 0:n] / max(n - 1, 1)
    img = 0.15 + 0.5 * np.exp(-((x - 0.35) ** 2 + (y - 0.5) ** 2) / 0.02)
    img += 0.5 * np.exp(-((x - 0.65) ** 2 + (y - 0.5) ** 2) / 0.02)
    out = np.clip(img, 0, 1) * maxval
    return out.astype(np.uint16 if maxval > 255 else np.uint8)


def checker(rows, cols, maxval):
    grid = (np.indices((rows, cols)).sum(axis=0) % 2) * maxval
    return grid.astype(np.uint16 if maxval > 255 else np.uint8)


def write_valid(out_dir: Path, name: str, data: bytes) -> None:
    (out_dir / f"{name}.dcm").write_bytes(data)
    listing = dicom.object_listing(dicom.parse_part10(data))
    (out_dir / f"{name}.json").write_text(json.dumps(listing, indent=1))


def write_error(out_dir: Path, name: str, data: bytes, error: str) -> None:
    (out_dir / f"{name}.dcm").write_bytes(data)
    (out_dir / f"{name}.json").write_text(json.dumps({"error": error}, indent=1))


def raw_element(group, element, vr, value):
    head = group.to_bytes(2, "little") + element.to_bytes(2, "little") + vr.encode()
    if vr in ("OB", "OW", "SQ", "UT"):
        return head + b"\x00\x00" + len(value).to_bytes(4, "little") + value
    return head + len(value).to_bytes(2, "little") + value


def minimal_file(transfer_syntax: str, extra_meta_ok: bool = True) -> bytes:
    """Hand-assembled minimal file so error cases don't depend on the codec."""
    sop_class = b"1.2.840.10008.5.1.4.1.1.1\x00"
    sop_uid = b"2.25.1111\x00"
    meta_body = raw_element(0x0002, 0x0002, "UI", sop_class)
    meta_body += raw_element(0x0002, 0x0003, "UI", sop_uid)
    meta_body += raw_element(0x0002, 0x0010, "UI", transfer_syntax.encode() +
                             (b"\x00" if len(transfer_syntax) % 2 else b""))
    meta = raw_element(0x0002, 0x0000, "UL", len(meta_body).to_bytes(4, "little")) + meta_body
    dataset = raw_element(0x0008, 0x0016, "UI", sop_class)
    dataset += raw_element(0x0008, 0x0018, "UI", sop_uid)
    return b"\x00" * 128 + b"DICM" + meta + dataset


def build_dicom_corpus(out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    uid = seeded_uid_source(20260115)
    count = 0

    rasters = [
        ("mono2_8bit_4x4", dicom.ImageGrid(4, 4, 8, "MONOCHROME2", gradient(4, 4, 255))),
        ("mono1_8bit_4x4", dicom.ImageGrid(4, 4, 8, "MONOCHROME1", gradient(4, 4, 255))),
        ("mono2_16bit_2x2", dicom.ImageGrid(2, 2, 16, "MONOCHROME2",
                                            np.array([[1, 256], [255, 65280]], dtype=np.uint16))),
        ("mono1_16bit_5x3", dicom.ImageGrid(5, 3, 16, "MONOCHROME1", gradient(5, 3, 65535))),
        ("mono2_8bit_3x3_oddpixels", dicom.ImageGrid(3, 3, 8, "MONOCHROME2", gradient(3, 3, 255))),
        ("mono2_8bit_1x1", dicom.ImageGrid(1, 1, 8, "MONOCHROME2",
                                           np.array([[200]], dtype=np.uint8))),
        ("mono1_8bit_1x5_oddpixels", dicom.ImageGrid(1, 5, 8, "MONOCHROME1",
                                                     gradient(1, 5, 255))),
        ("mono2_16bit_1x8", dicom.ImageGrid(1, 8, 16, "MONOCHROME2", gradient(1, 8, 65535))),
        ("mono2_16bit_full_range", dicom.ImageGrid(2, 4, 16, "MONOCHROME2",
                                                   checker(2, 4, 65535))),
        ("mono1_8bit_checker_6x6", dicom.ImageGrid(6, 6, 8, "MONOCHROME1", checker(6, 6, 255))),
        ("mono2_8bit_gradient_16x16", dicom.ImageGrid(16, 16, 8, "MONOCHROME2",
                                                      gradient(16, 16, 255))),
        ("mono1_16bit_gradient_16x16", dicom.ImageGrid(16, 16, 16, "MONOCHROME1",
                                                       gradient(16, 16, 65535))),
        ("mono2_8bit_chest_32x32", dicom.ImageGrid(32, 32, 8, "MONOCHROME2",
                                                   chest_blob(32, 255))),
        ("mono2_16bit_chest_32x32", dicom.ImageGrid(32, 32, 16, "MONOCHROME2",
                                                    chest_blob(32, 65535))),
    ]
    for name, grid in rasters:
        write_valid(out_dir, name, dicom.serialize_part10(dicom.image_to_object(grid, uid)))
        count += 1

    # Extra tags incl. an odd-length string (pad exercised) and a private tag.
    obj = dicom.image_to_object(dicom.ImageGrid(4, 4, 8, "MONOCHROME2",
                                                gradient(4, 4, 255)), uid)
    extra = [
        dicom.element_text(dicom.Tag(0x0008, 0x0020), "DA", "20260115"),
        dicom.element_text(dicom.Tag(0x0008, 0x0030), "TM", "120000"),
        dicom.element_text(dicom.Tag(0x0010, 0x0010), "PN", "ANON^PATIENT"),
        dicom.element_text(dicom.Tag(0x0010, 0x1010), "IS", "047"),
        dicom.element_text(dicom.Tag(0x0018, 0x0060), "DS", "120.5"),
        dicom.element_text(dicom.Tag(0x0033, 0x0010), "LO", "ODD"),  # private, odd length
        dicom.element_bytes(dicom.Tag(0x0033, 0x1001), "UT", b"free text payload"),
    ]
    obj.dataset = sorted(obj.dataset + extra, key=lambda el: el.tag)
    write_valid(out_dir, "mono2_8bit_rich_tags", dicom.serialize_part10(obj))
    count += 1

    # Structured reports, accepted and rejected.
    for name, accepted, probs in (
        ("sr_accepted", True, (0.9, 0.06, 0.04)),
        ("sr_rejected", False, (0.25, 0.35, 0.4)),
    ):
        doc = dicom.SRDocument(
            source_sop_instance_uid="2.25.424242",
            class_labels=dicom.CLASS_LABELS,
            probabilities=probs,
            gate_accepted=accepted,
            model_version="demo-cxr-3class/1.0",
            source_study_uid="2.25.777",
        )
        sr = dicom.build_sr(doc, uid_source=uid, clock=FIXED_CLOCK)
        write_valid(out_dir, name, dicom.serialize_part10(sr))
        count += 1

    # Error cases.
    write_error(out_dir, "err_short", b"\x00" * 131, "MissingMagic")
    write_error(out_dir, "err_bad_magic",
                b"\x00" * 128 + b"DCIM" + b"\x00" * 32, "MissingMagic")
    write_error(out_dir, "err_jpeg_syntax",
                minimal_file("1.2.840.10008.1.2.4.50"), "UnsupportedTransferSyntax")
    write_error(out_dir, "err_implicit_syntax",
                minimal_file("1.2.840.10008.1.2"), "UnsupportedTransferSyntax")
    good = minimal_file("1.2.840.10008.1.2.1")
    write_error(out_dir, "err_truncated", good[:-6], "TruncatedElement")
    odd = good + raw_element(0x0018, 0x0015, "CS", b"CHT")  # declared length 3
    write_error(out_dir, "err_odd_length", odd, "OddLength")
    swapped = (b"\x00" * 128 + b"DICM"
               + good[132 : len(good) - len(raw_element(0x0008, 0x0016, "UI", b"1.2.840.10008.5.1.4.1.1.1\x00"))
                      - len(raw_element(0x0008, 0x0018, "UI", b"2.25.1111\x00"))]
               + raw_element(0x0008, 0x0018, "UI", b"2.25.1111\x00")
               + raw_element(0x0008, 0x0016, "UI", b"1.2.840.10008.5.1.4.1.1.1\x00"))
    write_error(out_dir, "err_out_of_order", swapped, "OutOfOrderTag")
    count += 7
    return count


def build_model_goldens(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    goldens = {}
    models = {}
    for kind in ("demo-cxr-3class", "demo-ood-2class"):
        model = make_demo_model(kind, seed=42)
        models[kind] = model
        blob = save_model(model)
        (out_dir / f"{kind}.cbmf").write_bytes(blob)
        pred = forward(model, np.zeros((3, 224, 224)))
        goldens[kind] = {
            "file_bytes": len(blob),
            "input": "all-zero 224x224x3",
            "probabilities": [repr(p) for p in pred.probabilities],
            "argmax_label": pred.argmax_label,
            "model_version": pred.model_version,
        }

    # Full-pipeline lock on a corpus image: what `classify` must print.
    from cxrtriage.pipeline import classify_grid

    grid = dicom.ImageGrid(32, 32, 8, "MONOCHROME2", chest_blob(32, 255))
    result = classify_grid(grid, models["demo-cxr-3class"],
                           models["demo-ood-2class"], threshold=0.0)
    goldens["pipeline-chest-32x32"] = {
        "input": "testdata/dicom/mono2_8bit_chest_32x32.dcm",
        "threshold": 0.0,
        "in_dist_prob": repr(result.gate.in_dist_prob),
        "probabilities": [repr(p) for p in result.prediction.probabilities],
        "argmax_label": result.prediction.argmax_label,
    }
    (out_dir / "golden_predictions.json").write_text(json.dumps(goldens, indent=1))


def main(root: str) -> None:
    root_path = Path(root)
    n = build_dicom_corpus(root_path / "dicom")
    build_model_goldens(root_path / "models")
    print(f"wrote {n} dicom corpus files and model goldens under {root_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "testdata")
