"""Axis-aligned boxes, IoU, and the IoU + L1 box-regression loss.

Boxes are stored as ``(x, y, w, h)`` with a top-left origin. Corner form is
computed on demand and never stored.
"""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from antiuav.errors import InvalidInputError

__all__ = [
    "BoundingBox",
    "LossWeights",
    "LossGradient",
    "iou",
    "box_regression_loss",
    "box_regression_loss_grad",
]


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, numbers.Real) or isinstance(value, bool):
                raise InvalidInputError(f"box field {name!r} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidInputError(f"box field {name!r} is not finite: {value!r}")
            object.__setattr__(self, name, float(value))
        if self.w < 0 or self.h < 0:
            raise InvalidInputError(f"box size must be non-negative, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + 0.5 * self.w, self.y + 0.5 * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True, slots=True)
class LossWeights:
    """Weights of the IoU and L1 terms; defaults are the tracker's training values."""

    lambda_iou: float = 2.0
    lambda_l1: float = 5.0

    def __post_init__(self) -> None:
        for name in ("lambda_iou", "lambda_l1"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {value!r}")


class LossGradient(NamedTuple):
    grad: np.ndarray
    smooth: bool


def _span(a0: float, aw: float, b0: float, bw: float) -> float:
    # (x + w) - x need not round back to w, so shared starts use the extents
    # directly and every overlap is capped at the narrower extent.
    if a0 == b0:
        return min(aw, bw)
    return min(max(0.0, min(a0 + aw, b0 + bw) - max(a0, b0)), aw, bw)


def _overlap(a: BoundingBox, b: BoundingBox) -> tuple[float, float]:
    return _span(a.x, a.w, b.x, b.w), _span(a.y, a.h, b.y, b.h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    iw, ih = _overlap(a, b)
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def _l1_scales(frame_size: tuple[float, float] | None) -> np.ndarray:
    if frame_size is None:
        return np.ones(4)
    fw, fh = frame_size
    if not (fw > 0 and fh > 0):
        raise InvalidInputError(f"frame size must be positive, got {frame_size!r}")
    return np.array([fw, fh, fw, fh], dtype=float)


def box_regression_loss(
    pred: BoundingBox,
    gt: BoundingBox,
    weights: LossWeights = LossWeights(),
    frame_size: tuple[float, float] | None = None,
) -> float:
    """``lambda_iou * (1 - IoU) + lambda_l1 * mean |pred - gt|``.

    With ``frame_size=(W, H)`` the L1 term compares ``x, w`` divided by ``W``
    and ``y, h`` divided by ``H``; otherwise raw pixels are used.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    if gt.area <= 0:
        raise InvalidInputError("ground-truth box must have positive area")
    diff = (np.asarray(pred.as_tuple()) - np.asarray(gt.as_tuple())) / _l1_scales(frame_size)
    l1 = float(np.mean(np.abs(diff)))
    return weights.lambda_iou * (1.0 - iou(pred, gt)) + weights.lambda_l1 * l1


def _edge_rate(pred_edge: float, gt_edge: float, take_min: bool) -> tuple[float, bool]:
    # Derivative of min/max(pred_edge, gt_edge) w.r.t. pred_edge. Ties average
    # the one-sided derivatives, which is a valid Clarke subgradient.
    if pred_edge == gt_edge:
        return 0.5, False
    if take_min:
        return (1.0 if pred_edge < gt_edge else 0.0), True
    return (1.0 if pred_edge > gt_edge else 0.0), True


def box_regression_loss_grad(
    pred: BoundingBox,
    gt: BoundingBox,
    weights: LossWeights = LossWeights(),
    frame_size: tuple[float, float] | None = None,
) -> LossGradient:
    """Analytic gradient of :func:`box_regression_loss` w.r.t. ``(x, y, w, h)`` of ``pred``.

    ``smooth`` is False when the loss is not differentiable at ``pred``
    (coinciding edges, a touching overlap, or a zero L1 residual); ``grad`` is
    then a subgradient.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    if gt.area <= 0:
        raise InvalidInputError("ground-truth box must have positive area")
    smooth = True

    raw_iw = min(pred.x2, gt.x2) - max(pred.x, gt.x)
    raw_ih = min(pred.y2, gt.y2) - max(pred.y, gt.y)
    iw, ih = max(0.0, raw_iw), max(0.0, raw_ih)
    inter = iw * ih
    union = pred.area + gt.area - inter

    d_iou = np.zeros(4)
    if raw_iw == 0.0 or raw_ih == 0.0:
        smooth = False
    if inter > 0.0:
        right, ok_r = _edge_rate(pred.x2, gt.x2, take_min=True)
        left, ok_l = _edge_rate(pred.x, gt.x, take_min=False)
        bottom, ok_b = _edge_rate(pred.y2, gt.y2, take_min=True)
        top, ok_t = _edge_rate(pred.y, gt.y, take_min=False)
        smooth = smooth and ok_r and ok_l and ok_b and ok_t
        # d(iw)/d(x, w) and d(ih)/d(y, h)
        d_iw = np.array([right - left, 0.0, right, 0.0])
        d_ih = np.array([0.0, bottom - top, 0.0, bottom])
        d_inter = ih * d_iw + iw * d_ih
        d_area = np.array([0.0, 0.0, pred.h, pred.w])
        d_union = d_area - d_inter
        d_iou = (d_inter * union - inter * d_union) / (union * union)

    scales = _l1_scales(frame_size)
    diff = np.asarray(pred.as_tuple()) - np.asarray(gt.as_tuple())
    if np.any(diff == 0.0):
        smooth = False
    d_l1 = np.sign(diff) / scales / 4.0

    grad = -weights.lambda_iou * d_iou + weights.lambda_l1 * d_l1
    return LossGradient(grad, smooth)
