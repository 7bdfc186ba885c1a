"""The Acc sequence score.

Per frame, a visible target scores the IoU of the predicted box (an empty
prediction scores 0) and an absent target scores 1 for an empty prediction and
0 otherwise. The sequence score is the mean per-frame score minus a failure
penalty ``alpha * (failures / visible_frames) ** beta``, where a failure is a
visible frame whose prediction is empty or has zero overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from antiuav.errors import InvalidInputError
from antiuav.geometry import BoundingBox, iou

__all__ = [
    "ATTRIBUTE_TAGS",
    "EMPTY_SLICE",
    "EmptySlice",
    "EvalConfig",
    "FrameAnnotation",
    "FramePrediction",
    "SequenceResult",
    "attribute_slice",
    "evaluate_dataset",
    "evaluate_scores",
    "evaluate_sequence",
    "failure_flag",
    "frame_score",
]

# Out-of-view, occlusion, fast motion, scale variation, infrared crossover,
# dynamic background clutter, tiny size.
ATTRIBUTE_TAGS = frozenset({"OV", "OC", "FM", "SV", "IC", "DBC", "TS"})


@dataclass(frozen=True, slots=True)
class FrameAnnotation:
    visible: bool
    box: BoundingBox | None = None
    attributes: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.visible:
            if self.box is None or self.box.area <= 0:
                raise InvalidInputError("a visible frame needs a box with positive area")
        elif self.box is not None:
            raise InvalidInputError("an invisible frame must not carry a box")
        attributes = frozenset(self.attributes)
        unknown = attributes - ATTRIBUTE_TAGS
        if unknown:
            raise InvalidInputError(f"unknown attribute tags: {sorted(unknown)}")
        object.__setattr__(self, "attributes", attributes)

    @classmethod
    def absent(cls, attributes: frozenset[str] = frozenset()) -> "FrameAnnotation":
        return cls(False, None, attributes)

    @classmethod
    def present(cls, box: BoundingBox, attributes: frozenset[str] = frozenset()) -> "FrameAnnotation":
        return cls(True, box, attributes)


@dataclass(frozen=True, slots=True)
class FramePrediction:
    box: BoundingBox | None = None

    @property
    def is_empty(self) -> bool:
        return self.box is None


@dataclass(frozen=True, slots=True)
class EvalConfig:
    alpha: float = 0.2
    beta: float = 0.3

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        if not math.isfinite(self.beta) or self.beta <= 0:
            raise InvalidInputError(f"beta must be finite and > 0, got {self.beta!r}")


@dataclass(frozen=True)
class SequenceResult:
    acc: float
    accuracy_term: float
    penalty_term: float
    num_frames: int
    num_visible: int
    per_frame_scores: tuple[float, ...]
    failure_flags: tuple[bool, ...]

    @property
    def num_failures(self) -> int:
        return sum(self.failure_flags)


class EmptySlice:
    """Result of slicing a sequence by an attribute no frame carries."""

    _instance: "EmptySlice | None" = None

    def __new__(cls) -> "EmptySlice":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EMPTY_SLICE"

    def __bool__(self) -> bool:
        return False


EMPTY_SLICE = EmptySlice()


def frame_score(gt: FrameAnnotation, pred: FramePrediction) -> float:
    if gt.visible:
        if pred.box is None:
            return 0.0
        return iou(pred.box, gt.box)
    return 1.0 if pred.box is None else 0.0


def failure_flag(gt: FrameAnnotation, pred: FramePrediction) -> bool:
    if not gt.visible:
        return False
    return pred.box is None or iou(pred.box, gt.box) == 0.0


def evaluate_scores(
    visible: Sequence[bool] | np.ndarray,
    ious: Sequence[float] | np.ndarray,
    predicted: Sequence[bool] | np.ndarray,
    config: EvalConfig = EvalConfig(),
) -> SequenceResult:
    """Score a sequence from per-frame primitives.

    ``ious[t]`` is the IoU of the prediction with the ground truth on visible
    frames (ignored elsewhere); ``predicted[t]`` says whether a box was emitted.
    """
    vis = np.asarray(visible, dtype=bool)
    ov = np.asarray(ious, dtype=float)
    pred = np.asarray(predicted, dtype=bool)
    if not (vis.shape == ov.shape == pred.shape) or vis.ndim != 1:
        raise InvalidInputError("visible, ious and predicted must be 1-D and the same length")
    num_frames = vis.size
    if num_frames == 0:
        raise InvalidInputError("cannot evaluate an empty sequence")
    if np.any(vis & pred & ((ov < 0) | (ov > 1) | ~np.isfinite(ov))):
        raise InvalidInputError("IoU values must lie in [0, 1]")

    hit_iou = np.where(pred, ov, 0.0)
    scores = np.where(vis, hit_iou, np.where(pred, 0.0, 1.0))
    failures = vis & (~pred | (hit_iou == 0.0))

    accuracy = math.fsum(scores.tolist()) / num_frames
    num_visible = int(vis.sum())
    if num_visible == 0:
        penalty = 0.0
    else:
        penalty = config.alpha * (int(failures.sum()) / num_visible) ** config.beta
    return SequenceResult(
        acc=accuracy - penalty,
        accuracy_term=accuracy,
        penalty_term=penalty,
        num_frames=num_frames,
        num_visible=num_visible,
        per_frame_scores=tuple(scores.tolist()),
        failure_flags=tuple(failures.tolist()),
    )


def evaluate_sequence(
    annotations: Sequence[FrameAnnotation],
    predictions: Sequence[FramePrediction],
    config: EvalConfig = EvalConfig(),
) -> SequenceResult:
    if len(annotations) != len(predictions):
        raise InvalidInputError(
            f"length mismatch: {len(annotations)} annotations vs {len(predictions)} predictions"
        )
    if not annotations:
        raise InvalidInputError("cannot evaluate an empty sequence")
    visible = [gt.visible for gt in annotations]
    predicted = [p.box is not None for p in predictions]
    ious = [
        iou(p.box, gt.box) if (gt.visible and p.box is not None) else 0.0
        for gt, p in zip(annotations, predictions)
    ]
    return evaluate_scores(visible, ious, predicted, config)


def evaluate_dataset(per_sequence: Sequence[SequenceResult], frame_weighted: bool = False) -> float:
    """Mean Acc over sequences; ``frame_weighted`` weights each by its frame count."""
    if not per_sequence:
        raise InvalidInputError("no sequences to aggregate")
    if frame_weighted:
        total = sum(r.num_frames for r in per_sequence)
        return math.fsum(r.acc * r.num_frames for r in per_sequence) / total
    return math.fsum(r.acc for r in per_sequence) / len(per_sequence)


def attribute_slice(
    annotations: Sequence[FrameAnnotation],
    predictions: Sequence[FramePrediction],
    tag: str,
    config: EvalConfig = EvalConfig(),
) -> SequenceResult | EmptySlice:
    if tag not in ATTRIBUTE_TAGS:
        raise InvalidInputError(f"unknown attribute tag {tag!r}")
    if len(annotations) != len(predictions):
        raise InvalidInputError(
            f"length mismatch: {len(annotations)} annotations vs {len(predictions)} predictions"
        )
    keep = [i for i, gt in enumerate(annotations) if tag in gt.attributes]
    if not keep:
        return EMPTY_SLICE
    return evaluate_sequence([annotations[i] for i in keep], [predictions[i] for i in keep], config)
