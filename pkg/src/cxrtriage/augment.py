"""Offline training-set augmentation: six transforms, five variants per image.

Each variant applies exactly one transform with parameters sampled from the
declared ranges. The whole batch is deterministic under its seed: every
(image, variant) pair gets an independent derived stream, so scheduling
order can never change the output bytes. The output manifest records enough
to replay any variant bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dicom import ImageGrid
from .nn import bilinear_resize
from .pgm import read_pgm, write_pgm
from .rng import Xorshift64Star, mix64

OP_KINDS = ("vflip", "rotate", "brightness", "zoom", "saturation", "jpeg_noise")

# Sampling ranges; conservative for chest radiographs.
ROTATE_RANGE = (-15.0, 15.0)
BRIGHTNESS_RANGE = (0.7, 1.3)
ZOOM_RANGE = (1.0, 1.2)
SATURATION_RANGE = (0.5, 1.5)
JPEG_QUALITY_RANGE = (30, 90)


@dataclass
class AugmentOp:
    kind: str
    params: dict[str, float] = field(default_factory=dict)

    def params_text(self) -> str:
        return ";".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))

    @staticmethod
    def from_text(kind: str, params_text: str) -> "AugmentOp":
        params: dict[str, float] = {}
        if params_text:
            for piece in params_text.split(";"):
                key, _, val = piece.partition("=")
                params[key] = float(val) if kind != "jpeg_noise" else int(val)
        return AugmentOp(kind, params)


@dataclass
class AugmentPlan:
    seed: int
    variants_per_image: int = 5


@dataclass
class AugmentReport:
    written: int
    manifest_path: Optional[Path]
    errors: list[tuple[str, str]] = field(default_factory=list)


def _finish(img: ImageGrid, values: np.ndarray) -> ImageGrid:
    """Round, clamp to the bit depth, and rewrap as an ImageGrid."""
    out = np.clip(np.rint(values), 0, img.maxval)
    dtype = np.uint8 if img.bits_allocated == 8 else np.uint16
    return ImageGrid(img.rows, img.cols, img.bits_allocated, img.photometric,
                     out.astype(dtype))


def vflip(img: ImageGrid) -> ImageGrid:
    return ImageGrid(img.rows, img.cols, img.bits_allocated, img.photometric,
                     img.samples[::-1].copy())


def rotate(img: ImageGrid, degrees: float) -> ImageGrid:
    """Rotate about the image center, bilinear, zero fill, shape preserved."""
    if abs(degrees) > 45:
        raise ValueError(f"|degrees| must be <= 45, got {degrees}")
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rows, cols = img.rows, img.cols
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    dy, dx = np.meshgrid(np.arange(rows) - cy, np.arange(cols) - cx, indexing="ij")
    # Inverse mapping: sample the source at the un-rotated coordinate.
    sx = cx + cos_t * dx + sin_t * dy
    sy = cy - sin_t * dx + cos_t * dy
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx, fy = sx - x0, sy - y0
    src = img.samples.astype(np.float64)
    acc = np.zeros((rows, cols))
    for oy, ox, w in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy, xx = y0 + oy, x0 + ox
        valid = (yy >= 0) & (yy < rows) & (xx >= 0) & (xx < cols)
        acc += np.where(valid, src[yy.clip(0, rows - 1), xx.clip(0, cols - 1)], 0.0) * w
    return _finish(img, acc)


def brightness(img: ImageGrid, gain: float) -> ImageGrid:
    return _finish(img, img.samples.astype(np.float64) * gain)


def zoom(img: ImageGrid, scale: float) -> ImageGrid:
    """Center-crop to 1/scale of each dimension, then resize back up."""
    if scale < 1.0:
        raise ValueError(f"zoom scale must be >= 1.0, got {scale}")
    ch = max(1, int(round(img.rows / scale)))
    cw = max(1, int(round(img.cols / scale)))
    r0 = (img.rows - ch) // 2
    c0 = (img.cols - cw) // 2
    crop = img.samples[r0 : r0 + ch, c0 : c0 + cw].astype(np.float64)
    return _finish(img, bilinear_resize(crop, img.rows, img.cols))


def saturation(img: ImageGrid, factor: float) -> ImageGrid:
    """Contrast about the mean; grayscale reinterpretation of saturation."""
    src = img.samples.astype(np.float64)
    mean = src.mean()
    return _finish(img, mean + factor * (src - mean))


# Standard JPEG luminance quantization table (Annex K of the JPEG standard).
_JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix() -> np.ndarray:
    k = np.arange(8)[:, None]
    n = np.arange(8)[None, :]
    mat = np.cos(np.pi * (2 * n + 1) * k / 16.0) * np.sqrt(2.0 / 8.0)
    mat[0, :] = np.sqrt(1.0 / 8.0)
    return mat


_DCT8 = _dct_matrix()


def quantization_table(quality: int) -> np.ndarray:
    """Luminance table scaled by quality per the libjpeg formula."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in 1..100, got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((_JPEG_LUMA_TABLE * scale + 50.0) / 100.0), 1.0, 255.0)


def jpeg_noise(img: ImageGrid, quality: int) -> ImageGrid:
    """JPEG's loss model without entropy coding.

    Per 8x8 block: forward DCT-II, divide by the scaled luminance table,
    round, multiply back, inverse DCT. Samples are mapped to the 8-bit
    luminance domain first, so deeper rasters see proportionally scaled
    quantization error.
    """
    if not 30 <= quality <= 90:
        raise ValueError(f"quality must be in 30..90, got {quality}")
    q = quantization_table(quality)
    level = img.samples.astype(np.float64) * (255.0 / img.maxval) - 128.0
    rows, cols = img.rows, img.cols
    pad_r, pad_c = (-rows) % 8, (-cols) % 8
    level = np.pad(level, ((0, pad_r), (0, pad_c)), mode="edge")
    blocks = level.reshape(level.shape[0] // 8, 8, level.shape[1] // 8, 8)
    blocks = blocks.transpose(0, 2, 1, 3)
    coeff = _DCT8 @ blocks @ _DCT8.T
    coeff = np.rint(coeff / q) * q
    recon = _DCT8.T @ coeff @ _DCT8
    recon = recon.transpose(0, 2, 1, 3).reshape(level.shape)[:rows, :cols]
    return _finish(img, (recon + 128.0) * (img.maxval / 255.0))


def apply_op(img: ImageGrid, op: AugmentOp) -> ImageGrid:
    if op.kind == "vflip":
        return vflip(img)
    if op.kind == "rotate":
        return rotate(img, op.params["degrees"])
    if op.kind == "brightness":
        return brightness(img, op.params["gain"])
    if op.kind == "zoom":
        return zoom(img, op.params["scale"])
    if op.kind == "saturation":
        return saturation(img, op.params["factor"])
    if op.kind == "jpeg_noise":
        return jpeg_noise(img, int(op.params["quality"]))
    raise ValueError(f"unknown augment op {op.kind!r}")


def sample_op(rng: Xorshift64Star) -> AugmentOp:
    kind = rng.choice(OP_KINDS)
    if kind == "vflip":
        return AugmentOp(kind)
    if kind == "rotate":
        return AugmentOp(kind, {"degrees": rng.uniform(*ROTATE_RANGE)})
    if kind == "brightness":
        return AugmentOp(kind, {"gain": rng.uniform(*BRIGHTNESS_RANGE)})
    if kind == "zoom":
        return AugmentOp(kind, {"scale": rng.uniform(*ZOOM_RANGE)})
    if kind == "saturation":
        return AugmentOp(kind, {"factor": rng.uniform(*SATURATION_RANGE)})
    return AugmentOp(kind, {"quality": rng.randint(*JPEG_QUALITY_RANGE)})


def augment_batch(manifest_in: Path, out_dir: Path, plan: AugmentPlan) -> AugmentReport:
    """Expand every manifest image into plan.variants_per_image variants.

    Input manifest: CSV with a header whose first two columns are
    path,label; paths resolve relative to the manifest location. Per-file
    read errors are collected and the batch continues. The output manifest
    (path,label,source,op,params,seed) is written last, in input order.
    """
    manifest_in = Path(manifest_in)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = manifest_in.parent
    report = AugmentReport(written=0, manifest_path=None)
    rows_out: list[dict[str, str]] = []
    with open(manifest_in, newline="") as fh:
        entries = list(csv.DictReader(fh))
    for i, entry in enumerate(entries):
        rel = entry["path"]
        label = entry.get("label", "")
        src_path = base / rel
        try:
            img = read_pgm(src_path)
        except (OSError, ValueError) as exc:
            report.errors.append((rel, str(exc)))
            continue
        for v in range(plan.variants_per_image):
            rng = Xorshift64Star(mix64(plan.seed, i, v))
            op = sample_op(rng)
            out_img = apply_op(img, op)
            name = f"{i:04d}_{Path(rel).stem}_aug{v}.pgm"
            write_pgm(out_img, out_dir / name)
            report.written += 1
            rows_out.append(
                {
                    "path": name,
                    "label": label,
                    "source": rel,
                    "op": op.kind,
                    "params": op.params_text(),
                    "seed": str(plan.seed),
                }
            )
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["path", "label", "source", "op", "params", "seed"])
        writer.writeheader()
        writer.writerows(rows_out)
    report.manifest_path = manifest_path
    return report
