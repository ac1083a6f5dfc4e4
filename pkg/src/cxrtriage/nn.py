"""CNN forward-pass primitives on float64 numpy arrays.

Layout convention is channel-first [C, H, W]. Convolution uses
cross-correlation semantics (no kernel flip) with zero padding. All
arithmetic is 64-bit; results are bit-identical across runs because every
reduction happens in a fixed order (einsum without BLAS dispatch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dicom import ImageGrid
from .modelfile import ModelFile


class ShapeMismatch(Exception):
    """Input/weight shapes disagree; message names the offending layer."""


def _as3d(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"{what} must be [C,H,W], got shape {x.shape}")
    return x


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate [C,H,W] with [O,C,kh,kw] kernels, zero-padded."""
    x = _as3d(x, "conv2d input")
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if kernel.ndim != 4:
        raise ShapeMismatch(f"kernel must be [O,C,kh,kw], got shape {kernel.shape}")
    out_c, in_c, kh, kw = kernel.shape
    if x.shape[0] != in_c:
        raise ShapeMismatch(f"input has {x.shape[0]} channels, kernel expects {in_c}")
    if bias.shape != (out_c,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({out_c},)")
    if stride < 1 or pad < 0:
        raise ShapeMismatch(f"bad stride/pad ({stride}, {pad})")
    _, h, w = x.shape
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("cxyhw,ochw->oxy", windows, kernel)
    return out + bias[:, None, None]


def maxpool2d(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Max over window x window patches of each channel."""
    x = _as3d(x, "maxpool2d input")
    if window < 1 or stride < 1:
        raise ShapeMismatch(f"bad window/stride ({window}, {stride})")
    _, h, w = x.shape
    if h < window or w < window:
        raise ShapeMismatch(f"window {window} larger than input {h}x{w}")
    patches = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    return patches.max(axis=(3, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def flatten(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return _as3d(x, "globalavgpool input").mean(axis=(1, 2))


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """out[i] = sum_j w[i,j] * x[j] + b[i]."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"dense weights {weights.shape} incompatible with input {x.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    return np.einsum("mn,n->m", weights, x) + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable via max subtraction; output sums to 1."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 1:
        raise ShapeMismatch(f"softmax expects a nonempty vector, got shape {z.shape}")
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True)
class Prediction:
    """Per-class probabilities plus the winning label (lowest index on ties)."""

    class_labels: tuple[str, ...]
    probabilities: tuple[float, ...]
    argmax_label: str
    model_version: str

    def validate(self) -> None:
        if len(self.class_labels) != len(self.probabilities):
            raise ValueError("labels and probabilities disagree in length")
        if abs(sum(self.probabilities) - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {sum(self.probabilities)}")
        expect = self.class_labels[int(np.argmax(self.probabilities))]
        if self.argmax_label != expect:
            raise ValueError(f"argmax label {self.argmax_label!r} != {expect!r}")

    def as_dict(self) -> dict:
        return {
            "probabilities": dict(zip(self.class_labels, self.probabilities)),
            "argmax_label": self.argmax_label,
            "model_version": self.model_version,
        }


def _apply_layer(x: np.ndarray, layer) -> np.ndarray:
    kind = layer.kind
    if kind == "conv2d":
        return conv2d(x, layer.weights["kernel"], layer.weights["bias"],
                      stride=layer.params["stride"], pad=layer.params["pad"])
    if kind == "maxpool2d":
        return maxpool2d(x, layer.params["window"], layer.params["stride"])
    if kind == "relu":
        return relu(x)
    if kind == "flatten":
        return flatten(x)
    if kind == "globalavgpool":
        return global_avg_pool(x)
    if kind == "dense":
        return dense(x, layer.weights["weight"], layer.weights["bias"])
    if kind == "softmax":
        return softmax(x)
    raise ShapeMismatch(f"unknown layer kind {kind!r}")


def forward(model: ModelFile, x: np.ndarray) -> Prediction:
    """Run the layer stack; deterministic for identical (model, input)."""
    x = np.asarray(x, dtype=np.float64)
    h, w, c = model.input_shape
    if x.shape != (c, h, w):
        raise ShapeMismatch(f"layer 0: input shape {x.shape} != model input {(c, h, w)}")
    if not np.all(np.isfinite(x)):
        raise ShapeMismatch("layer 0: input contains non-finite values")
    for idx, layer in enumerate(model.layers):
        try:
            x = _apply_layer(x, layer)
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"layer {idx} ({layer.kind}): {exc}") from None
    probs = tuple(float(p) for p in x)
    pred = Prediction(
        class_labels=tuple(model.class_labels),
        probabilities=probs,
        argmax_label=model.class_labels[int(np.argmax(x))],
        model_version=model.model_version(),
    )
    pred.validate()
    return pred


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

INPUT_SIDE = 224


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with align-corners mapping.

    Source coordinate for output index d is d*(S-1)/(D-1), which makes the
    four corners exact; a degenerate output dimension of 1 takes index 0.
    """
    img = np.asarray(img, dtype=np.float64)
    src_h, src_w = img.shape

    def coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if dst == 1:
            pos = np.zeros(1)
        else:
            pos = np.arange(dst) * ((src - 1) / (dst - 1))
        lo = np.minimum(pos.astype(np.int64), src - 1)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    r0, r1, fr = coords(out_h, src_h)
    c0, c1, fc = coords(out_w, src_w)
    rows = img[r0, :] * (1.0 - fr)[:, None] + img[r1, :] * fr[:, None]
    return rows[:, c0] * (1.0 - fc)[None, :] + rows[:, c1] * fc[None, :]


def preprocess(grid: ImageGrid) -> np.ndarray:
    """ImageGrid -> [3, 224, 224] float64 tensor in [0, 1].

    MONOCHROME1 intensities are inverted to the MONOCHROME2 convention, the
    raster is scaled by 2^bits - 1, resized bilinearly, and the single
    channel is replicated three times.
    """
    arr = grid.samples.astype(np.float64)
    if grid.photometric == "MONOCHROME1":
        arr = grid.maxval - arr
    arr /= grid.maxval
    resized = bilinear_resize(arr, INPUT_SIDE, INPUT_SIDE)
    return np.repeat(resized[None, :, :], 3, axis=0)
