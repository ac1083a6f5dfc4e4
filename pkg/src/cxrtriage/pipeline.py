"""The shared parse -> preprocess -> gate -> classify path.

Both the CLI and the gateway call this module, which is what makes their
outputs bit-identical for identical inputs and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .dicom import ImageGrid
from .gate import GateDecision, gate
from .modelfile import ModelFile
from .nn import Prediction, forward, preprocess


@dataclass(frozen=True)
class TriageResult:
    gate: GateDecision
    prediction: Optional[Prediction]  # present iff the gate accepted


def classify_grid(grid: ImageGrid, classifier: ModelFile, ood_model: ModelFile,
                  threshold: float) -> TriageResult:
    """Gate first; run the classifier only on accepted inputs."""
    tensor = preprocess(grid)
    decision = gate(tensor, ood_model, threshold)
    prediction = forward(classifier, tensor) if decision.accepted else None
    return TriageResult(gate=decision, prediction=prediction)
