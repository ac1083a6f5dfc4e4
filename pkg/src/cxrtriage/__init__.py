"""cxrtriage: desk-scale chest X-ray triage pipeline.

A strict DICOM Part 10 codec, a from-scratch CNN forward-pass engine with a
binary model-file format, an out-of-distribution gate, offline augmentation,
a full evaluation-metric suite, and a DICOMweb-style STOW-RS/WADO-RS HTTP
gateway tying them together.
"""

from .dicom import (CLASS_LABELS, DicomObject, ImageGrid, SRDocument, build_sr,
                    extract_pixels, image_to_object, parse_part10, serialize_part10)
from .gate import GateDecision, gate
from .metrics import (ConfusionMatrix, EvalReport, PRCurve, accuracy,
                      average_precision, confusion, evaluate, f1, f1_score,
                      pr_curve, precision, recall)
from .modelfile import LayerSpec, ModelFile, load_model, make_demo_model, save_model
from .nn import (Prediction, bilinear_resize, conv2d, dense, forward, maxpool2d,
                 preprocess, relu, softmax)
from .pipeline import TriageResult, classify_grid

__version__ = "0.1.0"

__all__ = [
    "CLASS_LABELS", "DicomObject", "ImageGrid", "SRDocument", "build_sr",
    "extract_pixels", "image_to_object", "parse_part10", "serialize_part10",
    "GateDecision", "gate",
    "ConfusionMatrix", "EvalReport", "PRCurve", "accuracy", "average_precision",
    "confusion", "evaluate", "f1", "f1_score", "pr_curve", "precision", "recall",
    "LayerSpec", "ModelFile", "load_model", "make_demo_model", "save_model",
    "Prediction", "bilinear_resize", "conv2d", "dense", "forward", "maxpool2d",
    "preprocess", "relu", "softmax",
    "TriageResult", "classify_grid",
    "__version__",
]
