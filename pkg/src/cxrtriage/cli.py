"""The ``cxr`` command line: offline mirror of the gateway plus fixture tooling.

Exit codes: 0 success/accepted, 3 gate-rejected input, 1 any error. JSON
results go to stdout; diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dicom
from .augment import AugmentPlan, augment_batch
from .gateway import ConfigError, load_config, serve
from .manifest import ManifestError, dump_manifest, filter_manifest, parse_manifest
from .metrics import (EmptyFold, UnknownLabel, evaluate, load_predictions_csv,
                      pr_curves_csv, render_text, report_csv)
from .modelfile import DEMO_KINDS, SchemaError, load_model, make_demo_model, save_model
from .pgm import decode_pgm
from .pipeline import classify_grid
from .rng import Xorshift64Star

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 3


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _load_model_arg(path: str | None, demo_kind: str):
    if path:
        return load_model(Path(path).read_bytes())
    return make_demo_model(demo_kind)


def _read_image(path: Path) -> tuple[dicom.ImageGrid, str | None]:
    """Returns the raster plus the SOP instance UID when the input is DICOM."""
    data = path.read_bytes()
    if data.startswith(b"P5"):
        return decode_pgm(data), None
    obj = dicom.parse_part10(data)
    return dicom.extract_pixels(obj), obj.sop_instance_uid()


def cmd_classify(args) -> int:
    path = Path(args.input)
    try:
        classifier = _load_model_arg(args.model, "demo-cxr-3class")
        ood_model = _load_model_arg(args.ood, "demo-ood-2class")
        grid, sop_uid = _read_image(path)
    except (OSError, dicom.DicomError, SchemaError, ValueError) as exc:
        return _fail(str(exc))
    result = classify_grid(grid, classifier, ood_model, args.threshold)
    output = {
        "input": str(path),
        "gate": result.gate.as_dict(),
        "prediction": result.prediction.as_dict() if result.prediction else None,
    }
    if sop_uid is not None:
        output["sop_instance_uid"] = sop_uid
    print(json.dumps(output, indent=2))
    return EXIT_OK if result.gate.accepted else EXIT_REJECTED


def cmd_manifest_filter(args) -> int:
    try:
        entries = parse_manifest(Path(args.input).read_text())
    except (OSError, ManifestError) as exc:
        return _fail(str(exc))
    kept, summary = filter_manifest(entries, min_age=args.min_age,
                                    require_quality=args.require_quality)
    text = dump_manifest(kept)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    total_before = len(entries)
    total_after = len(kept)
    for label, (before, after) in summary.items():
        print(f"{label}: kept {after} of {before}", file=sys.stderr)
    print(f"Total: kept {total_after} of {total_before}", file=sys.stderr)
    return EXIT_OK


def cmd_augment(args) -> int:
    plan = AugmentPlan(seed=args.seed, variants_per_image=args.variants)
    try:
        report = augment_batch(Path(args.manifest), Path(args.out), plan)
    except (OSError, KeyError) as exc:
        return _fail(f"manifest unreadable: {exc}")
    for path, message in report.errors:
        print(f"skipped {path}: {message}", file=sys.stderr)
    print(json.dumps({
        "written": report.written,
        "errors": len(report.errors),
        "manifest": str(report.manifest_path),
    }))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        samples, folds = load_predictions_csv(Path(args.predictions).read_text())
        report = evaluate(samples, folds, fold_count=args.folds)
    except (OSError, ValueError, UnknownLabel, EmptyFold) as exc:
        return _fail(str(exc))
    print(render_text(report))
    if args.csv:
        Path(args.csv).write_text(report_csv(report))
    if args.pr:
        Path(args.pr).write_text(pr_curves_csv(samples))
    return EXIT_OK


def cmd_serve(args) -> int:
    overrides = {
        "listen": args.listen,
        "model.classifier": args.classifier,
        "model.ood": args.ood,
        "ood.threshold": args.threshold,
        "storage.dir": args.storage,
        "limits.max_request_bytes": args.max_request_bytes,
        "auth.token": args.token,
    }
    try:
        config = load_config(Path(args.config) if args.config else None,
                             overrides=overrides)
        serve(config)
    except (OSError, ConfigError, SchemaError) as exc:
        return _fail(str(exc))
    return EXIT_OK


def cmd_gen_model(args) -> int:
    try:
        model = make_demo_model(args.kind, seed=args.seed)
    except SchemaError as exc:
        return _fail(str(exc))
    Path(args.out).write_bytes(save_model(model))
    print(json.dumps({"kind": args.kind, "seed": args.seed, "out": args.out}))
    return EXIT_OK


def cmd_make_dicom(args) -> int:
    try:
        grid = decode_pgm(Path(args.input).read_bytes(), photometric=args.photometric)
    except (OSError, ValueError, dicom.DicomError) as exc:
        return _fail(str(exc))
    if args.uid_seed is not None:
        rng = Xorshift64Star(args.uid_seed)
        uid_source = lambda: dicom.new_uid(lambda bits: rng.next_u64() << 64 | rng.next_u64())
    else:
        uid_source = dicom.new_uid
    obj = dicom.image_to_object(grid, uid_source=uid_source, study_uid=args.study_uid)
    Path(args.out).write_bytes(dicom.serialize_part10(obj))
    print(json.dumps({
        "out": args.out,
        "sop_instance_uid": obj.sop_instance_uid(),
        "study_instance_uid": obj.study_instance_uid(),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cxr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="score one DICOM or PGM image")
    p.add_argument("input")
    p.add_argument("--model", help=".cbmf classifier (default: built-in demo)")
    p.add_argument("--ood", help=".cbmf gate model (default: built-in demo)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("manifest", help="dataset manifest tools")
    msub = p.add_subparsers(dest="manifest_command", required=True)
    mf = msub.add_parser("filter", help="apply age/quality exclusions")
    mf.add_argument("input")
    mf.add_argument("--min-age", type=float, default=15.0)
    mf.add_argument("--require-quality", action="store_true")
    mf.add_argument("--out", help="write filtered CSV here instead of stdout")
    mf.set_defaults(func=cmd_manifest_filter)

    p = sub.add_parser("augment", help="expand a training manifest with variants")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--variants", type=int, default=5)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="fold-averaged metrics from a predictions CSV")
    p.add_argument("predictions")
    p.add_argument("--folds", type=int, default=None,
                   help="expected fold count (default: infer from the CSV)")
    p.add_argument("--csv", help="also write the report as CSV")
    p.add_argument("--pr", help="also write pooled PR curves as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the STOW-RS/WADO-RS gateway")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--listen")
    p.add_argument("--classifier", help="overrides model.classifier")
    p.add_argument("--ood", help="overrides model.ood")
    p.add_argument("--threshold", type=float, help="overrides ood.threshold")
    p.add_argument("--storage", help="overrides storage.dir")
    p.add_argument("--max-request-bytes", type=int)
    p.add_argument("--token", help="overrides auth.token")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gen-model", help="write a deterministic demo model")
    p.add_argument("--kind", choices=DEMO_KINDS, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("make-dicom", help="wrap a PGM into a minimal Part 10 object")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--photometric", choices=["MONOCHROME1", "MONOCHROME2"],
                   default="MONOCHROME2")
    p.add_argument("--study-uid", help="reuse an existing study UID")
    p.add_argument("--uid-seed", type=int, help="deterministic UIDs for fixtures")
    p.set_defaults(func=cmd_make_dicom)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
