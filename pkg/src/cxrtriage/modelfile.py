"""Self-describing binary model files (.cbmf) and the shipped demo models.

Layout: magic ``CBMF``, format version u32, length-prefixed UTF-8 header of
key=value lines describing the layer stack, then per-layer little-endian
IEEE-754 float64 weight blocks in declaration order. The format has no
external parser dependencies and round-trips bit-exactly, which the golden
files under ``testdata/models/`` rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Xorshift64Star

MAGIC = b"CBMF"
FORMAT_VERSION = 1

LAYER_KINDS = ("conv2d", "maxpool2d", "relu", "flatten", "dense", "globalavgpool", "softmax")

# Canonical hyperparameter order per kind; also the header serialization order.
_PARAM_ORDER = {
    "conv2d": ("out_channels", "kernel_h", "kernel_w", "stride", "pad"),
    "maxpool2d": ("window", "stride"),
    "dense": ("out_features",),
    "relu": (),
    "flatten": (),
    "globalavgpool": (),
    "softmax": (),
}

DEMO_KINDS = ("demo-cxr-3class", "demo-ood-2class")
CXR_LABELS = ("COVID-19", "Non-COVID-19", "No Finding")
OOD_LABELS = ("in-distribution", "out-of-distribution")


class SchemaError(Exception):
    """Model file violates the format or a layer-stack invariant."""


@dataclass
class LayerSpec:
    """One layer: kind, integer hyperparameters, optional weight arrays."""

    kind: str
    params: dict[str, int] = field(default_factory=dict)
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def has_weights(self) -> bool:
        return self.kind in ("conv2d", "dense")


@dataclass
class ModelFile:
    """Named, versioned layer stack with class labels and input contract."""

    name: str
    version: str
    input_shape: tuple[int, int, int]  # (H, W, C)
    class_labels: tuple[str, ...]
    layers: list[LayerSpec]

    def model_version(self) -> str:
        return f"{self.name}/{self.version}"

    def validate(self) -> None:
        shapes = propagate_shapes(self)
        if not self.layers or self.layers[-1].kind != "softmax":
            raise SchemaError("final layer must be softmax")
        if shapes[-1] != (len(self.class_labels),):
            raise SchemaError(
                f"output shape {shapes[-1]} != label count {len(self.class_labels)}"
            )
        last_param = next(
            (l for l in reversed(self.layers) if l.has_weights()), None
        )
        if last_param is None or last_param.kind != "dense":
            raise SchemaError("model must end in a dense layer before softmax")
        if last_param.params["out_features"] != len(self.class_labels):
            raise SchemaError(
                f"dense out_features {last_param.params['out_features']} != "
                f"label count {len(self.class_labels)}"
            )


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def expected_weight_shapes(layer: LayerSpec, in_shape: tuple, idx: int) -> dict[str, tuple]:
    """Weight array shapes implied by the hyperparameters and input shape."""
    if layer.kind == "conv2d":
        if len(in_shape) != 3:
            raise SchemaError(f"layer {idx} (conv2d): needs [C,H,W] input, has {in_shape}")
        p = layer.params
        return {
            "kernel": (p["out_channels"], in_shape[0], p["kernel_h"], p["kernel_w"]),
            "bias": (p["out_channels"],),
        }
    if layer.kind == "dense":
        if len(in_shape) != 1:
            raise SchemaError(f"layer {idx} (dense): needs a vector input, has {in_shape}")
        m = layer.params["out_features"]
        return {"weight": (m, in_shape[0]), "bias": (m,)}
    return {}


def propagate_shapes(model: ModelFile) -> list[tuple]:
    """Shape after each layer; raises SchemaError at the offending layer."""
    h, w, c = model.input_shape
    if min(h, w, c) < 1:
        raise SchemaError(f"input_shape must be positive, got {model.input_shape}")
    shape: tuple = (c, h, w)
    out: list[tuple] = []
    for idx, layer in enumerate(model.layers):
        if layer.kind not in LAYER_KINDS:
            raise SchemaError(f"layer {idx}: unknown kind {layer.kind!r}")
        for key in _PARAM_ORDER[layer.kind]:
            if key not in layer.params:
                raise SchemaError(f"layer {idx} ({layer.kind}): missing field {key}")
            if int(layer.params[key]) < (0 if key == "pad" else 1):
                raise SchemaError(f"layer {idx} ({layer.kind}): bad field {key}")
        if layer.kind == "conv2d":
            want = expected_weight_shapes(layer, shape, idx)
            for name, wshape in want.items():
                got = layer.weights.get(name)
                if got is not None and tuple(got.shape) != wshape:
                    raise SchemaError(
                        f"layer {idx} (conv2d): {name} has {got.size} values, "
                        f"expected shape {wshape}"
                    )
            p = layer.params
            oh = _conv_out(shape[1], p["kernel_h"], p["stride"], p["pad"])
            ow = _conv_out(shape[2], p["kernel_w"], p["stride"], p["pad"])
            if oh < 1 or ow < 1:
                raise SchemaError(f"layer {idx} (conv2d): kernel larger than input {shape}")
            shape = (p["out_channels"], oh, ow)
        elif layer.kind == "maxpool2d":
            if len(shape) != 3:
                raise SchemaError(f"layer {idx} (maxpool2d): needs [C,H,W], has {shape}")
            p = layer.params
            oh = (shape[1] - p["window"]) // p["stride"] + 1
            ow = (shape[2] - p["window"]) // p["stride"] + 1
            if shape[1] < p["window"] or shape[2] < p["window"]:
                raise SchemaError(f"layer {idx} (maxpool2d): window exceeds input {shape}")
            shape = (shape[0], oh, ow)
        elif layer.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif layer.kind == "globalavgpool":
            if len(shape) != 3:
                raise SchemaError(f"layer {idx} (globalavgpool): needs [C,H,W], has {shape}")
            shape = (shape[0],)
        elif layer.kind == "dense":
            want = expected_weight_shapes(layer, shape, idx)
            got = layer.weights.get("weight")
            if got is not None and tuple(got.shape) != want["weight"]:
                raise SchemaError(
                    f"layer {idx} (dense): weight has {got.size} values, "
                    f"expected shape {want['weight']}"
                )
            shape = (layer.params["out_features"],)
        elif layer.kind == "softmax":
            if len(shape) != 1:
                raise SchemaError(f"layer {idx} (softmax): needs a vector, has {shape}")
        out.append(shape)
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _layer_line(layer: LayerSpec) -> str:
    params = ",".join(f"{k}={layer.params[k]}" for k in _PARAM_ORDER[layer.kind])
    return f"{layer.kind}:{params}" if params else layer.kind


def save_model(model: ModelFile) -> bytes:
    model.validate()
    lines = [
        f"name={model.name}",
        f"version={model.version}",
        "input_shape=" + ",".join(str(d) for d in model.input_shape),
        "class_labels=" + "|".join(model.class_labels),
        f"layers={len(model.layers)}",
    ]
    lines += [f"layer.{i}={_layer_line(l)}" for i, l in enumerate(model.layers)]
    header = ("\n".join(lines) + "\n").encode("utf-8")
    blob = bytearray(MAGIC)
    blob += FORMAT_VERSION.to_bytes(4, "little")
    blob += len(header).to_bytes(4, "little")
    blob += header
    in_shapes = [(model.input_shape[2], model.input_shape[0], model.input_shape[1])]
    in_shapes += propagate_shapes(model)[:-1]
    for idx, layer in enumerate(model.layers):
        for name in ("kernel", "bias") if layer.kind == "conv2d" else \
                    ("weight", "bias") if layer.kind == "dense" else ():
            arr = layer.weights.get(name)
            want = expected_weight_shapes(layer, in_shapes[idx], idx)[name]
            if arr is None or tuple(arr.shape) != want:
                raise SchemaError(f"layer {idx} ({layer.kind}): {name} missing or misshaped")
            blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return bytes(blob)


def _parse_layer_line(idx: int, text: str) -> LayerSpec:
    kind, _, rest = text.partition(":")
    if kind not in LAYER_KINDS:
        raise SchemaError(f"layer {idx}: unknown kind {kind!r}")
    params: dict[str, int] = {}
    if rest:
        for piece in rest.split(","):
            key, _, val = piece.partition("=")
            if key not in _PARAM_ORDER[kind]:
                raise SchemaError(f"layer {idx} ({kind}): unknown field {key!r}")
            try:
                params[key] = int(val)
            except ValueError:
                raise SchemaError(f"layer {idx} ({kind}): field {key} not an integer") from None
    return LayerSpec(kind, params)


def load_model(data: bytes) -> ModelFile:
    """Parse and fully validate a .cbmf blob."""
    if len(data) < 12 or data[:4] != MAGIC:
        raise SchemaError("not a CBMF model file")
    version = int.from_bytes(data[4:8], "little")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format version {version}")
    header_len = int.from_bytes(data[8:12], "little")
    if 12 + header_len > len(data):
        raise SchemaError("header extends past end of file")
    try:
        header = data[12 : 12 + header_len].decode("utf-8")
    except UnicodeDecodeError:
        raise SchemaError("header is not valid UTF-8") from None
    fields: dict[str, str] = {}
    for line in header.splitlines():
        if not line.strip():
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise SchemaError(f"malformed header line {line!r}")
        fields[key] = val
    for required in ("name", "version", "input_shape", "class_labels", "layers"):
        if required not in fields:
            raise SchemaError(f"header missing field {required}")
    try:
        input_shape = tuple(int(d) for d in fields["input_shape"].split(","))
        n_layers = int(fields["layers"])
    except ValueError:
        raise SchemaError("input_shape/layers fields not integers") from None
    if len(input_shape) != 3:
        raise SchemaError(f"input_shape must have 3 dims, got {fields['input_shape']!r}")
    labels = tuple(fields["class_labels"].split("|"))
    layers = []
    for i in range(n_layers):
        key = f"layer.{i}"
        if key not in fields:
            raise SchemaError(f"header missing {key}")
        layers.append(_parse_layer_line(i, fields[key]))
    model = ModelFile(fields["name"], fields["version"], input_shape, labels, layers)

    # Weight shapes follow from the hyperparameters alone.
    in_shapes = [(input_shape[2], input_shape[0], input_shape[1])]
    in_shapes += propagate_shapes(model)[:-1]
    off = 12 + header_len
    for idx, layer in enumerate(layers):
        for name, shape in expected_weight_shapes(layer, in_shapes[idx], idx).items():
            count = int(np.prod(shape))
            end = off + 8 * count
            if end > len(data):
                raise SchemaError(
                    f"layer {idx} ({layer.kind}): {name} block truncated "
                    f"(expected {count} float64 values)"
                )
            layer.weights[name] = (
                np.frombuffer(data[off:end], dtype="<f8").reshape(shape).copy()
            )
            off = end
    if off != len(data):
        raise SchemaError(f"{len(data) - off} trailing bytes after weight blocks")
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Demo models
# ---------------------------------------------------------------------------


def _demo_stack(kind: str) -> tuple[tuple[str, ...], list[LayerSpec]]:
    if kind == "demo-cxr-3class":
        return CXR_LABELS, [
            LayerSpec("conv2d", {"out_channels": 4, "kernel_h": 3, "kernel_w": 3,
                                 "stride": 2, "pad": 1}),
            LayerSpec("relu"),
            LayerSpec("maxpool2d", {"window": 2, "stride": 2}),
            LayerSpec("conv2d", {"out_channels": 8, "kernel_h": 3, "kernel_w": 3,
                                 "stride": 2, "pad": 1}),
            LayerSpec("relu"),
            LayerSpec("maxpool2d", {"window": 2, "stride": 2}),
            LayerSpec("globalavgpool"),
            LayerSpec("dense", {"out_features": 3}),
            LayerSpec("softmax"),
        ]
    if kind == "demo-ood-2class":
        return OOD_LABELS, [
            LayerSpec("conv2d", {"out_channels": 4, "kernel_h": 5, "kernel_w": 5,
                                 "stride": 4, "pad": 2}),
            LayerSpec("relu"),
            LayerSpec("maxpool2d", {"window": 4, "stride": 4}),
            LayerSpec("globalavgpool"),
            LayerSpec("dense", {"out_features": 2}),
            LayerSpec("softmax"),
        ]
    raise SchemaError(f"unknown demo model kind {kind!r}; choose from {DEMO_KINDS}")


def make_demo_model(kind: str, seed: int = 42) -> ModelFile:
    """Deterministic pseudo-random demo model (xorshift64*, default seed 42)."""
    labels, layers = _demo_stack(kind)
    model = ModelFile(kind, "1.0", (224, 224, 3), labels, layers)
    rng = Xorshift64Star(seed)
    in_shapes = [(3, 224, 224)] + propagate_shapes(model)[:-1]
    for idx, layer in enumerate(layers):
        shapes = expected_weight_shapes(layer, in_shapes[idx], idx)
        if not shapes:
            continue
        main = "kernel" if layer.kind == "conv2d" else "weight"
        fan_in = int(np.prod(shapes[main][1:]))
        scale = fan_in ** -0.5
        for name in (main, "bias"):
            shape = shapes[name]
            amp = scale if name == main else 0.01
            vals = [(2.0 * rng.next_float() - 1.0) * amp for _ in range(int(np.prod(shape)))]
            layer.weights[name] = np.array(vals, dtype=np.float64).reshape(shape)
    model.validate()
    return model
