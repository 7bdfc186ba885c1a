"""Evidential (Dirichlet) classification math used by the tracking judge.

Evidence ``e >= 0`` parameterises a Dirichlet with ``alpha = e + 1``. The
strength is ``S = sum(alpha)``, so the expected class probability is
``alpha / S`` and the uncertainty mass ``K / S`` lies in ``(0, 1]``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from antiuav.errors import InvalidInputError

__all__ = [
    "TARGET",
    "BACKGROUND",
    "ClassLabel",
    "Decision",
    "DirichletEvidence",
    "edl_loss",
    "edl_loss_grad",
    "evidence_from_logits",
    "judge",
    "predict",
]

TARGET = 0
BACKGROUND = 1


def _frozen(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DirichletEvidence:
    evidence: np.ndarray

    def __post_init__(self) -> None:
        ev = _frozen(self.evidence)
        if ev.ndim != 1 or ev.size < 2:
            raise InvalidInputError(f"evidence must be a vector with K >= 2 entries, got shape {ev.shape}")
        if not np.all(np.isfinite(ev)):
            raise InvalidInputError("evidence must be finite")
        if np.any(ev < 0):
            raise InvalidInputError("evidence must be non-negative")
        object.__setattr__(self, "evidence", ev)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DirichletEvidence):
            return NotImplemented
        return np.array_equal(self.evidence, other.evidence)

    def __hash__(self) -> int:
        return hash(self.evidence.tobytes())

    @property
    def num_classes(self) -> int:
        return self.evidence.size

    @property
    def alpha(self) -> np.ndarray:
        return self.evidence + 1.0

    @property
    def strength(self) -> float:
        return float(np.sum(self.alpha))

    @property
    def probabilities(self) -> np.ndarray:
        return self.alpha / self.strength

    @property
    def uncertainty(self) -> float:
        return self.num_classes / self.strength


@dataclass(frozen=True, eq=False)
class ClassLabel:
    onehot: np.ndarray

    def __post_init__(self) -> None:
        y = _frozen(self.onehot)
        if y.ndim != 1 or y.size < 2:
            raise InvalidInputError("label must be a vector with K >= 2 entries")
        if np.count_nonzero(y == 1.0) != 1 or np.count_nonzero(y) != 1:
            raise InvalidInputError(f"label must be one-hot, got {y.tolist()}")
        object.__setattr__(self, "onehot", y)

    @classmethod
    def of(cls, index: int, num_classes: int) -> "ClassLabel":
        if not 0 <= index < num_classes:
            raise InvalidInputError(f"class index {index} out of range for K={num_classes}")
        y = np.zeros(num_classes)
        y[index] = 1.0
        return cls(y)

    @property
    def index(self) -> int:
        return int(np.argmax(self.onehot))

    @property
    def num_classes(self) -> int:
        return self.onehot.size


class Decision(enum.Enum):
    CONTINUE_TRACKING = "continue"
    SWITCH_TO_DETECTION = "switch"


def evidence_from_logits(logits: Sequence[float] | np.ndarray) -> DirichletEvidence:
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    return DirichletEvidence(np.maximum(z, 0.0))


def predict(ev: DirichletEvidence) -> tuple[np.ndarray, float]:
    """Expected class probabilities and uncertainty mass."""
    strength = ev.strength
    return ev.alpha / strength, ev.num_classes / strength


def _check_pair(ev: DirichletEvidence, label: ClassLabel) -> None:
    if ev.num_classes != label.num_classes:
        raise InvalidInputError(
            f"class count mismatch: evidence has K={ev.num_classes}, label has K={label.num_classes}"
        )


def edl_loss(ev: DirichletEvidence, label: ClassLabel) -> float:
    """Type-II maximum-likelihood loss ``sum_k y_k (log S - log alpha_k)``."""
    _check_pair(ev, label)
    alpha = ev.alpha
    c = label.index
    # log(S / alpha_c) written as log1p(rest / alpha_c) keeps full relative
    # precision when the loss is small.
    rest = float(np.sum(np.delete(alpha, c)))
    return math.log1p(rest / alpha[c])


def edl_loss_grad(ev: DirichletEvidence, label: ClassLabel) -> np.ndarray:
    """Gradient of :func:`edl_loss` w.r.t. evidence: ``1/S - y_k / alpha_k``."""
    _check_pair(ev, label)
    alpha = ev.alpha
    c = label.index
    rest = float(np.sum(np.delete(alpha, c)))
    strength = rest + alpha[c]
    grad = np.full(alpha.size, 1.0 / strength)
    # 1/S - 1/alpha_c without cancellation
    grad[c] = -rest / (strength * alpha[c])
    return grad


def judge(ev: DirichletEvidence, theta_eh: float) -> Decision:
    """Keep tracking only when the target class wins outright with uncertainty below ``theta_eh``.

    Class 0 is the target and class 1 the background. A 0.5/0.5 tie switches
    back to detection.
    """
    if ev.num_classes != 2:
        raise InvalidInputError(f"judge expects K=2 evidence, got K={ev.num_classes}")
    if not 0.0 <= theta_eh <= 1.0:
        raise InvalidInputError(f"theta_eh must lie in [0, 1], got {theta_eh!r}")
    probs, u = predict(ev)
    if probs[TARGET] > probs[BACKGROUND] and u < theta_eh:
        return Decision.CONTINUE_TRACKING
    return Decision.SWITCH_TO_DETECTION
