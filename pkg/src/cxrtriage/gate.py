"""Out-of-distribution gate: refuse classification of implausible inputs.

The gate scores the already-preprocessed tensor with a 2-class model whose
labels are ordered [in-distribution, out-of-distribution], so the gate and
the classifier see identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modelfile import ModelFile
from .nn import forward


class ModelArityError(Exception):
    """The gate model does not have exactly two class labels."""


@dataclass(frozen=True)
class GateDecision:
    in_dist_prob: float
    threshold: float
    accepted: bool
    ood_model_version: str

    def validate(self) -> None:
        if self.accepted != (self.in_dist_prob >= self.threshold):
            raise ValueError("accepted flag inconsistent with probability/threshold")

    def as_dict(self) -> dict:
        return {
            "in_dist_prob": self.in_dist_prob,
            "threshold": self.threshold,
            "accepted": self.accepted,
            "ood_model_version": self.ood_model_version,
        }


def gate(image: np.ndarray, ood_model: ModelFile, threshold: float) -> GateDecision:
    """Score a [3,224,224] tensor; accept iff in-distribution prob >= threshold."""
    if len(ood_model.class_labels) != 2:
        raise ModelArityError(
            f"gate model has {len(ood_model.class_labels)} labels, needs exactly 2"
        )
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    prob = forward(ood_model, image).probabilities[0]
    return GateDecision(
        in_dist_prob=prob,
        threshold=threshold,
        accepted=prob >= threshold,
        ood_model_version=ood_model.model_version(),
    )
