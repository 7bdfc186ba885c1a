"""Detection/tracking collaboration state machine.

The system starts in global detection. The best detection above
``theta_det`` becomes the tracking template and the system switches to local
tracking. Each tracked frame is judged from the tracker's evidence; a rejected
frame emits no box and sends the system back to global detection for the next
frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Protocol, Sequence

from antiuav.edl import Decision, DirichletEvidence, judge
from antiuav.errors import ContractViolation, InvalidInputError
from antiuav.geometry import BoundingBox
from antiuav.metric import FramePrediction

__all__ = [
    "Detection",
    "DetectorPort",
    "Mode",
    "PipelineState",
    "StepRecord",
    "Template",
    "TrackOutput",
    "TrackerPort",
    "DETECTORS",
    "TRACKERS",
    "initial_state",
    "register_detector",
    "register_tracker",
    "run_detection_only",
    "run_sequence",
    "run_simple_combination",
    "select_detection",
    "step",
    "trace_sequence",
]


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"detection score must lie in [0, 1], got {self.score!r}")


@dataclass(frozen=True)
class TrackOutput:
    box: BoundingBox
    evidence: DirichletEvidence

    def __post_init__(self) -> None:
        if self.evidence.num_classes != 2:
            raise InvalidInputError("tracker evidence must have K=2 (target, background)")


@dataclass(frozen=True, slots=True)
class Template:
    box: BoundingBox
    frame_index: int


class Mode(enum.Enum):
    GLOBAL_DETECTION = "detect"
    LOCAL_TRACKING = "track"


@dataclass(frozen=True)
class PipelineState:
    mode: Mode = Mode.GLOBAL_DETECTION
    template: Template | None = None
    theta_eh: float = 0.2
    theta_det: float = 0.5
    frame_index: int = 0

    def __post_init__(self) -> None:
        if (self.mode is Mode.LOCAL_TRACKING) != (self.template is not None):
            raise InvalidInputError("a template is held exactly when the mode is local tracking")
        if not 0.0 <= self.theta_eh <= 1.0:
            raise InvalidInputError(f"theta_eh must lie in [0, 1], got {self.theta_eh!r}")
        if not 0.0 <= self.theta_det <= 1.0:
            raise InvalidInputError(f"theta_det must lie in [0, 1], got {self.theta_det!r}")


class DetectorPort(Protocol):
    def detect(self, frame: Any) -> Sequence[Detection]: ...


class TrackerPort(Protocol):
    def track(self, template: Template, frame: Any) -> TrackOutput: ...


DETECTORS: dict[str, Callable[..., DetectorPort]] = {}
TRACKERS: dict[str, Callable[..., TrackerPort]] = {}


def register_detector(name: str):
    def wrap(factory):
        DETECTORS[name] = factory
        return factory

    return wrap


def register_tracker(name: str):
    def wrap(factory):
        TRACKERS[name] = factory
        return factory

    return wrap


def initial_state(theta_eh: float = 0.2, theta_det: float = 0.5) -> PipelineState:
    return PipelineState(Mode.GLOBAL_DETECTION, None, theta_eh, theta_det, 0)


def select_detection(detections: Iterable[Detection]) -> Detection | None:
    """Highest score; ties go to the larger box, then to the earlier detection."""
    best = None
    for det in detections:
        if best is None or (det.score, det.box.area) > (best.score, best.box.area):
            best = det
    return best


def _detect(state: PipelineState, frame: Any, detector: DetectorPort) -> tuple[PipelineState, FramePrediction]:
    best = select_detection(detector.detect(frame))
    if best is not None and best.score >= state.theta_det:
        nxt = replace(
            state,
            mode=Mode.LOCAL_TRACKING,
            template=Template(best.box, state.frame_index),
            frame_index=state.frame_index + 1,
        )
        return nxt, FramePrediction(best.box)
    return replace(state, frame_index=state.frame_index + 1), FramePrediction(None)


def step(
    state: PipelineState,
    frame: Any,
    detector: DetectorPort,
    tracker: TrackerPort,
    *,
    use_judge: bool = True,
    redetect_same_frame: bool = False,
) -> tuple[PipelineState, FramePrediction]:
    """Advance the state machine by one frame.

    ``use_judge=False`` never leaves local tracking once entered (the simple
    detector-then-tracker combination). ``redetect_same_frame`` runs the
    detector on the frame where tracking was rejected instead of waiting for
    the next one.
    """
    if state.mode is Mode.GLOBAL_DETECTION:
        return _detect(state, frame, detector)

    if state.template is None:
        raise ContractViolation("tracker invoked without a template")
    out = tracker.track(state.template, frame)
    if not use_judge or judge(out.evidence, state.theta_eh) is Decision.CONTINUE_TRACKING:
        return replace(state, frame_index=state.frame_index + 1), FramePrediction(out.box)

    dropped = replace(state, mode=Mode.GLOBAL_DETECTION, template=None)
    if redetect_same_frame:
        return _detect(dropped, frame, detector)
    return replace(dropped, frame_index=state.frame_index + 1), FramePrediction(None)


@dataclass(frozen=True)
class StepRecord:
    mode: Mode  # mode in which the frame was processed
    prediction: FramePrediction
    state_after: PipelineState


def trace_sequence(
    frames: Sequence[Any],
    detector: DetectorPort,
    tracker: TrackerPort,
    theta_eh: float = 0.2,
    theta_det: float = 0.5,
    *,
    use_judge: bool = True,
    redetect_same_frame: bool = False,
) -> list[StepRecord]:
    if len(frames) == 0:
        raise InvalidInputError("cannot run the pipeline over an empty frame list")
    state = initial_state(theta_eh, theta_det)
    records = []
    for frame in frames:
        mode = state.mode
        state, pred = step(
            state, frame, detector, tracker, use_judge=use_judge, redetect_same_frame=redetect_same_frame
        )
        records.append(StepRecord(mode, pred, state))
    return records


def run_sequence(
    frames: Sequence[Any],
    detector: DetectorPort,
    tracker: TrackerPort,
    theta_eh: float = 0.2,
    theta_det: float = 0.5,
    *,
    redetect_same_frame: bool = False,
) -> list[FramePrediction]:
    """Evidential combination: detection and tracking alternate under the judge."""
    records = trace_sequence(
        frames, detector, tracker, theta_eh, theta_det, redetect_same_frame=redetect_same_frame
    )
    return [r.prediction for r in records]


def run_simple_combination(
    frames: Sequence[Any],
    detector: DetectorPort,
    tracker: TrackerPort,
    theta_det: float = 0.5,
) -> list[FramePrediction]:
    """Detect once, then track to the end of the sequence."""
    records = trace_sequence(frames, detector, tracker, 1.0, theta_det, use_judge=False)
    return [r.prediction for r in records]


def run_detection_only(
    frames: Sequence[Any], detector: DetectorPort, theta_det: float = 0.5
) -> list[FramePrediction]:
    """Run the detector on every frame and report its best box above ``theta_det``."""
    if len(frames) == 0:
        raise InvalidInputError("cannot run the pipeline over an empty frame list")
    preds = []
    for frame in frames:
        best = select_detection(detector.detect(frame))
        preds.append(FramePrediction(best.box if best is not None and best.score >= theta_det else None))
    return preds
