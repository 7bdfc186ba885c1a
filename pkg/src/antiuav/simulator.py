"""Seeded synthetic anti-UAV scenarios and noisy detector/tracker stand-ins.

Frames are geometric states (target and decoy boxes), not images.

Random streams
--------------
Every trial has a 64-bit seed derived from the experiment's base seed with
``SeedSequence(base_seed, spawn_key=(trial,))``. Draws come from Philox
generators keyed by ``(trial_seed, component)``. Per-frame components (the
detector and tracker) put the frame index in the third counter word, so each
(trial, frame, component) triple owns a disjoint stream. Whether a component
runs on a frame never shifts any other component's draws, and each draw
routine consumes a fixed number of variates whatever the outcome.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from antiuav.edl import DirichletEvidence
from antiuav.errors import InvalidInputError, SpecValidationError
from antiuav.geometry import BoundingBox, iou
from antiuav.metric import EvalConfig, FrameAnnotation, FramePrediction, evaluate_sequence
from antiuav.pipeline import (
    Detection,
    Template,
    TrackOutput,
    register_detector,
    register_tracker,
    run_detection_only,
    run_sequence,
    run_simple_combination,
)

__all__ = [
    "Arm",
    "ArmSummary",
    "EvidenceLaw",
    "ExperimentResult",
    "FrameState",
    "LockState",
    "PipelineMode",
    "ScenarioSpec",
    "ScoreLaw",
    "SimDetectorModel",
    "SimTrackerModel",
    "SimulatedDetector",
    "SimulatedTracker",
    "Trajectory",
    "TrialRecord",
    "frame_stream",
    "generate_scenario",
    "run_experiment",
    "run_trial",
    "simulate_detector",
    "simulate_tracker",
    "trial_seed",
]

_MASK64 = (1 << 64) - 1


class Component(enum.IntEnum):
    SCENARIO = 1
    DETECTOR = 2
    TRACKER = 3


def trial_seed(base_seed: int, trial: int) -> int:
    seq = np.random.SeedSequence(base_seed & _MASK64, spawn_key=(trial,))
    return int(seq.generate_state(1, np.uint64)[0])


def frame_stream(seed: int, component: int, frame: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK64, component], dtype=np.uint64)
    counter = np.array([0, 0, frame, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


# --------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class Trajectory:
    """Centre path of the target box.

    Velocity follows a random walk with per-frame standard deviation
    ``accel_sigma``. With probability ``burst_probability`` a frame adds a
    displacement of ``burst_speed`` pixels in a random direction (tagged as
    fast motion). ``bounce`` reflects the box off the frame border; without
    it, leaving the frame is a validation error.
    """

    size: tuple[float, float] = (16.0, 12.0)
    start: tuple[float, float] | None = None  # centre; None draws it uniformly
    velocity: tuple[float, float] = (0.0, 0.0)
    accel_sigma: float = 0.0
    max_speed: float = 8.0
    burst_probability: float = 0.0
    burst_speed: float = 0.0
    bounce: bool = True


@dataclass(frozen=True)
class ScenarioSpec:
    num_frames: int
    presence_intervals: tuple[tuple[int, int], ...]
    trajectory: Trajectory = Trajectory()
    frame_size: tuple[int, int] = (640, 512)
    distractors: int = 0
    distractor_size: tuple[float, float] = (14.0, 11.0)
    distractor_drift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "presence_intervals", tuple((int(a), int(b)) for a, b in self.presence_intervals)
        )
        object.__setattr__(self, "frame_size", tuple(self.frame_size))
        self.validate()

    def validate(self) -> None:
        if self.num_frames < 1:
            raise SpecValidationError("num_frames must be >= 1")
        fw, fh = self.frame_size
        if fw <= 0 or fh <= 0:
            raise SpecValidationError(f"frame_size must be positive, got {self.frame_size}")
        last_end = 0
        for start, end in sorted(self.presence_intervals):
            if not 0 <= start < end <= self.num_frames:
                raise SpecValidationError(
                    f"presence interval [{start}, {end}) must be non-empty and inside [0, {self.num_frames})"
                )
            if start < last_end:
                raise SpecValidationError("presence intervals overlap")
            last_end = end
        tw, th = self.trajectory.size
        if not (0 < tw < fw and 0 < th < fh):
            raise SpecValidationError(f"target size {self.trajectory.size} must be positive and fit the frame")
        if self.trajectory.start is not None:
            cx, cy = self.trajectory.start
            if not (tw / 2 <= cx <= fw - tw / 2 and th / 2 <= cy <= fh - th / 2):
                raise SpecValidationError(f"trajectory start {self.trajectory.start} puts the box outside the frame")
        dw, dh = self.distractor_size
        if self.distractors < 0:
            raise SpecValidationError("distractors must be >= 0")
        if self.distractors and not (0 < dw < fw and 0 < dh < fh):
            raise SpecValidationError("distractor size must be positive and fit the frame")
        for name in ("accel_sigma", "max_speed", "burst_speed"):
            if getattr(self.trajectory, name) < 0:
                raise SpecValidationError(f"trajectory.{name} must be >= 0")
        if not 0.0 <= self.trajectory.burst_probability <= 1.0:
            raise SpecValidationError("trajectory.burst_probability must lie in [0, 1]")
        if self.distractor_drift < 0:
            raise SpecValidationError("distractor_drift must be >= 0")

    def visibility(self) -> list[bool]:
        vis = [False] * self.num_frames
        for start, end in self.presence_intervals:
            for t in range(start, end):
                vis[t] = True
        return vis


@dataclass(frozen=True)
class FrameState:
    index: int
    target: BoundingBox | None
    distractors: tuple[BoundingBox, ...] = ()
    fast_motion: bool = False


def _reflect(c: float, v: float, lo: float, hi: float) -> tuple[float, float]:
    if c < lo:
        return 2 * lo - c, -v
    if c > hi:
        return 2 * hi - c, -v
    return c, v


def _box_at(center: tuple[float, float], size: tuple[float, float]) -> BoundingBox:
    return BoundingBox(center[0] - size[0] / 2, center[1] - size[1] / 2, size[0], size[1])


def generate_scenario(spec: ScenarioSpec) -> tuple[list[FrameState], list[FrameAnnotation]]:
    rng = frame_stream(spec.seed, Component.SCENARIO)
    fw, fh = spec.frame_size
    traj = spec.trajectory
    tw, th = traj.size
    lo_x, hi_x, lo_y, hi_y = tw / 2, fw - tw / 2, th / 2, fh - th / 2

    start = rng.uniform(size=2)
    if traj.start is None:
        cx, cy = lo_x + start[0] * (hi_x - lo_x), lo_y + start[1] * (hi_y - lo_y)
    else:
        cx, cy = traj.start
    vx, vy = traj.velocity

    dw, dh = spec.distractor_size
    decoys = [
        [dw / 2 + u * (fw - dw), dh / 2 + w * (fh - dh)]
        for u, w in rng.uniform(size=(spec.distractors, 2))
    ]

    visible = spec.visibility()
    frames, annotations = [], []
    for t in range(spec.num_frames):
        draws = rng.standard_normal(2 + 2 * spec.distractors)
        burst_u, burst_angle = rng.uniform(size=2)
        fast = False
        if t > 0:
            vx += traj.accel_sigma * draws[0]
            vy += traj.accel_sigma * draws[1]
            speed = math.hypot(vx, vy)
            if speed > traj.max_speed:
                vx, vy = vx * traj.max_speed / speed, vy * traj.max_speed / speed
            cx, cy = cx + vx, cy + vy
            if burst_u < traj.burst_probability:
                fast = True
                cx += traj.burst_speed * math.cos(2 * math.pi * burst_angle)
                cy += traj.burst_speed * math.sin(2 * math.pi * burst_angle)
            if traj.bounce:
                for _ in range(4):
                    cx, vx = _reflect(cx, vx, lo_x, hi_x)
                    cy, vy = _reflect(cy, vy, lo_y, hi_y)
            if not (lo_x <= cx <= hi_x and lo_y <= cy <= hi_y):
                raise SpecValidationError(f"target leaves the frame at frame {t}")
            for i, pos in enumerate(decoys):
                pos[0] = min(max(pos[0] + spec.distractor_drift * draws[2 + 2 * i], dw / 2), fw - dw / 2)
                pos[1] = min(max(pos[1] + spec.distractor_drift * draws[3 + 2 * i], dh / 2), fh - dh / 2)

        decoy_boxes = tuple(_box_at(tuple(p), spec.distractor_size) for p in decoys)
        target = _box_at((cx, cy), traj.size) if visible[t] else None
        frames.append(FrameState(t, target, decoy_boxes, fast and visible[t]))
        tags = set()
        if not visible[t]:
            tags.add("OV")
        else:
            if fast:
                tags.add("FM")
            if math.sqrt(tw * th) < 10:
                tags.add("TS")
            if any(_center_distance(target, d) < 4 * max(tw, th) for d in decoy_boxes):
                tags.add("DBC")
        annotations.append(FrameAnnotation(visible[t], target, frozenset(tags)))
    return frames, annotations


def _center_distance(a: BoundingBox, b: BoundingBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


# --------------------------------------------------------------------------
# Detector


@dataclass(frozen=True)
class ScoreLaw:
    """Uniform score law on ``[low, high]``."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise InvalidInputError(f"score law needs 0 <= low <= high <= 1, got {self.low}, {self.high}")

    def sample(self, u: float) -> float:
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class SimDetectorModel:
    recall: float = 1.0
    false_positive_rate: float = 0.0  # per distractor, per frame
    localization_noise: float = 0.0
    true_score: ScoreLaw = ScoreLaw(0.6, 1.0)
    false_score: ScoreLaw = ScoreLaw(0.3, 0.8)

    def __post_init__(self) -> None:
        for name in ("recall", "false_positive_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if not self.localization_noise >= 0:
            raise InvalidInputError("localization_noise must be >= 0")


def _jitter(box: BoundingBox, sigma: float, z: np.ndarray, frame_size: tuple[int, int] | None) -> BoundingBox:
    if sigma == 0.0:
        return box
    cx, cy = box.center
    cx, cy = cx + sigma * z[0], cy + sigma * z[1]
    w, h = max(1.0, box.w + sigma * z[2]), max(1.0, box.h + sigma * z[3])
    out = _box_at((cx, cy), (w, h))
    return _clip(out, frame_size) if frame_size else out


def _clip(box: BoundingBox, frame_size: tuple[int, int]) -> BoundingBox:
    fw, fh = frame_size
    w, h = min(box.w, fw), min(box.h, fh)
    x = min(max(box.x, 0.0), fw - w)
    y = min(max(box.y, 0.0), fh - h)
    return BoundingBox(x, y, w, h)


def simulate_detector(
    model: SimDetectorModel,
    frame: FrameState,
    rng: np.random.Generator,
    frame_size: tuple[int, int] | None = None,
) -> list[Detection]:
    """Target detection with probability ``recall`` plus independent decoy false positives."""
    detections = []
    u = rng.uniform(size=2)
    z = rng.standard_normal(4)
    if frame.target is not None and u[0] < model.recall:
        box = _jitter(frame.target, model.localization_noise, z, frame_size)
        detections.append(Detection(box, model.true_score.sample(u[1])))
    for decoy in frame.distractors:
        u = rng.uniform(size=2)
        z = rng.standard_normal(4)
        if u[0] < model.false_positive_rate:
            box = _jitter(decoy, model.localization_noise, z, frame_size)
            detections.append(Detection(box, model.false_score.sample(u[1])))
    return detections


@register_detector("sim")
class SimulatedDetector:
    """Detector port drawing each frame from its own (seed, frame) stream."""

    def __init__(self, model: SimDetectorModel, seed: int, frame_size: tuple[int, int] | None = None):
        self.model = model
        self.seed = seed
        self.frame_size = frame_size

    def detect(self, frame: FrameState) -> list[Detection]:
        rng = frame_stream(self.seed, Component.DETECTOR, frame.index)
        return simulate_detector(self.model, frame, rng, self.frame_size)


# --------------------------------------------------------------------------
# Tracker


@dataclass(frozen=True)
class EvidenceLaw:
    """Evidence for (target, background), each ``mean * Gamma(shape) / shape``.

    ``shape=None`` makes the law deterministic at the means.
    """

    target_mean: float
    background_mean: float
    shape: float | None = 4.0

    def __post_init__(self) -> None:
        if self.target_mean < 0 or self.background_mean < 0:
            raise InvalidInputError("evidence means must be >= 0")
        if self.shape is not None and not self.shape > 0:
            raise InvalidInputError("evidence shape must be > 0")

    def sample(self, rng: np.random.Generator) -> DirichletEvidence:
        g = rng.standard_gamma(self.shape if self.shape is not None else 1.0, size=2)
        if self.shape is None:
            return DirichletEvidence([self.target_mean, self.background_mean])
        return DirichletEvidence(np.array([self.target_mean, self.background_mean]) * g / self.shape)


class TruthState(enum.Enum):
    ON_TARGET = "on_target"
    DRIFTED = "drifted"
    ABSENT = "absent"


@dataclass(frozen=True)
class SimTrackerModel:
    drift_sigma: float = 0.0
    lock_loss_probability: float = 0.0
    distractor_capture: float = 0.5  # share of lock losses that latch onto a decoy when one exists
    stale_drift_sigma: float = 1.0
    search_radius: float = 0.0  # a stale lock within this centre distance may re-find the target
    reacquire_probability: float = 0.0
    confusion_rate: float = 0.0
    on_target: EvidenceLaw = EvidenceLaw(1000.0, 0.0, None)
    drifted: EvidenceLaw = EvidenceLaw(0.0, 1000.0, None)
    absent: EvidenceLaw = EvidenceLaw(0.0, 0.0, None)

    def __post_init__(self) -> None:
        for name in ("lock_loss_probability", "distractor_capture", "reacquire_probability", "confusion_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        for name in ("drift_sigma", "stale_drift_sigma", "search_radius"):
            if not getattr(self, name) >= 0:
                raise InvalidInputError(f"{name} must be >= 0")

    def law(self, truth: TruthState, confused: bool) -> EvidenceLaw:
        if confused:
            return self.absent if truth is TruthState.ON_TARGET else self.on_target
        return {
            TruthState.ON_TARGET: self.on_target,
            TruthState.DRIFTED: self.drifted,
            TruthState.ABSENT: self.absent,
        }[truth]


class LockKind(enum.Enum):
    TARGET = "target"
    DISTRACTOR = "distractor"
    BACKGROUND = "background"


@dataclass(frozen=True)
class LockState:
    kind: LockKind
    box: BoundingBox
    distractor: int = -1


def acquire_lock(template: Template, frame: FrameState) -> LockState:
    """Decide what a fresh template latches onto in ``frame``."""
    if frame.target is not None and iou(template.box, frame.target) > 0:
        return LockState(LockKind.TARGET, frame.target)
    overlaps = [iou(template.box, d) for d in frame.distractors]
    if overlaps and max(overlaps) > 0:
        i = int(np.argmax(overlaps))
        return LockState(LockKind.DISTRACTOR, frame.distractors[i], i)
    return LockState(LockKind.BACKGROUND, template.box)


def simulate_tracker(
    model: SimTrackerModel,
    frame: FrameState,
    lock: LockState,
    rng: np.random.Generator,
    frame_size: tuple[int, int] | None = None,
) -> tuple[TrackOutput, LockState]:
    """One tracked frame: move the lock, emit a box and evidence for its truth state."""
    u = rng.uniform(size=4)
    z = rng.standard_normal(4)

    if (
        lock.kind is LockKind.BACKGROUND
        and frame.target is not None
        and _center_distance(lock.box, frame.target) <= model.search_radius
        and u[3] < model.reacquire_probability
    ):
        lock = LockState(LockKind.TARGET, frame.target)
    elif lock.kind is LockKind.TARGET and frame.target is None:
        lock = LockState(LockKind.BACKGROUND, lock.box)
    elif lock.kind is LockKind.TARGET and u[0] < model.lock_loss_probability:
        if frame.distractors and u[1] < model.distractor_capture:
            i = min(range(len(frame.distractors)), key=lambda j: _center_distance(lock.box, frame.distractors[j]))
            lock = LockState(LockKind.DISTRACTOR, frame.distractors[i], i)
        else:
            lock = LockState(LockKind.BACKGROUND, lock.box)

    if lock.kind is LockKind.TARGET:
        box = _jitter(frame.target, model.drift_sigma, z, frame_size)
        lock = LockState(LockKind.TARGET, frame.target)
        truth = TruthState.ON_TARGET
    elif lock.kind is LockKind.DISTRACTOR:
        decoy = frame.distractors[lock.distractor]
        box = _jitter(decoy, model.drift_sigma, z, frame_size)
        lock = LockState(LockKind.DISTRACTOR, decoy, lock.distractor)
        truth = TruthState.DRIFTED
    else:
        box = lock.box.translated(model.stale_drift_sigma * z[0], model.stale_drift_sigma * z[1])
        if frame_size:
            box = _clip(box, frame_size)
        lock = LockState(LockKind.BACKGROUND, box)
        truth = TruthState.DRIFTED if frame.target is not None else TruthState.ABSENT

    confused = bool(u[2] < model.confusion_rate)
    evidence = model.law(truth, confused).sample(rng)
    return TrackOutput(box, evidence), lock


@register_tracker("sim")
class SimulatedTracker:
    """Tracker port holding the lock state; a new template resets the lock."""

    def __init__(self, model: SimTrackerModel, seed: int, frame_size: tuple[int, int] | None = None):
        self.model = model
        self.seed = seed
        self.frame_size = frame_size
        self._template: Template | None = None
        self._lock: LockState | None = None

    def track(self, template: Template, frame: FrameState) -> TrackOutput:
        if template != self._template or self._lock is None:
            self._template = template
            self._lock = acquire_lock(template, frame)
        rng = frame_stream(self.seed, Component.TRACKER, frame.index)
        out, self._lock = simulate_tracker(self.model, frame, self._lock, rng, self.frame_size)
        return out


# --------------------------------------------------------------------------
# Experiments


class PipelineMode(enum.Enum):
    EC = "EC"  # evidential combination
    SC = "SC"  # simple combination
    DET_ONLY = "DetOnly"


@dataclass(frozen=True)
class Arm:
    mode: PipelineMode
    theta_eh: float = 0.2
    theta_det: float = 0.5
    name: str | None = None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.mode is PipelineMode.EC:
            return f"EC@{self.theta_eh:g}"
        return self.mode.value


def run_arm(
    arm: Arm,
    frames: Sequence[FrameState],
    detector: SimulatedDetector,
    tracker: SimulatedTracker,
) -> list[FramePrediction]:
    if arm.mode is PipelineMode.EC:
        return run_sequence(frames, detector, tracker, arm.theta_eh, arm.theta_det)
    if arm.mode is PipelineMode.SC:
        return run_simple_combination(frames, detector, tracker, arm.theta_det)
    return run_detection_only(frames, detector, arm.theta_det)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    arm: str
    acc: float
    accuracy_term: float
    penalty_term: float


@dataclass(frozen=True)
class ArmSummary:
    arm: Arm
    trials: int
    mean: float
    std: float

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.trials)


@dataclass
class ExperimentResult:
    summaries: list[ArmSummary]
    records: list[TrialRecord] = field(default_factory=list)

    def by_label(self) -> dict[str, ArmSummary]:
        return {s.arm.label: s for s in self.summaries}


def run_trial(
    spec: ScenarioSpec,
    detector_model: SimDetectorModel,
    tracker_model: SimTrackerModel,
    arms: Sequence[Arm],
    trial: int,
    base_seed: int,
    eval_config: EvalConfig = EvalConfig(),
) -> list[TrialRecord]:
    seed = trial_seed(base_seed, trial)
    frames, annotations = generate_scenario(replace(spec, seed=seed))
    out = []
    for arm in arms:
        detector = SimulatedDetector(detector_model, seed, spec.frame_size)
        tracker = SimulatedTracker(tracker_model, seed, spec.frame_size)
        result = evaluate_sequence(annotations, run_arm(arm, frames, detector, tracker), eval_config)
        out.append(TrialRecord(trial, seed, arm.label, result.acc, result.accuracy_term, result.penalty_term))
    return out


def _run_trial_args(args: tuple) -> list[TrialRecord]:
    return run_trial(*args)


def run_experiment(
    spec: ScenarioSpec,
    detector_model: SimDetectorModel,
    tracker_model: SimTrackerModel,
    arms: Sequence[Arm],
    trials: int,
    base_seed: int = 0,
    eval_config: EvalConfig = EvalConfig(),
    workers: int = 1,
) -> ExperimentResult:
    """Mean and standard deviation of Acc per arm over ``trials`` seeded scenarios.

    All arms see the same scenarios and the same per-frame detector/tracker
    streams. Results do not depend on ``workers``.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if not arms:
        raise InvalidInputError("at least one arm is required")
    labels = [a.label for a in arms]
    if len(set(labels)) != len(labels):
        raise InvalidInputError(f"arm labels must be unique, got {labels}")

    jobs = [(spec, detector_model, tracker_model, tuple(arms), t, base_seed, eval_config) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(_run_trial_args, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        per_trial = [_run_trial_args(j) for j in jobs]
    records = [r for batch in per_trial for r in batch]

    summaries = []
    for arm in arms:
        values = [r.acc for r in records if r.arm == arm.label]  # trial order
        mean = math.fsum(values) / trials
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (trials - 1)) if trials > 1 else 0.0
        summaries.append(ArmSummary(arm, trials, mean, std))
    return ExperimentResult(summaries, records)
