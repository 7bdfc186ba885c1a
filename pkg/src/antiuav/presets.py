"""Frozen experiment configurations used by the CLI and the acceptance suite."""
from __future__ import annotations

from antiuav.formats import ExperimentConfig
from antiuav.simulator import (
    Arm,
    EvidenceLaw,
    PipelineMode,
    ScenarioSpec,
    ScoreLaw,
    SimDetectorModel,
    SimTrackerModel,
    Trajectory,
)

THETA_SWEEP = (0.05, 0.2, 0.5, 0.8)


def stress_config(trials: int = 200, seed: int = 1) -> ExperimentConfig:
    """Decoys, an opening and a mid-sequence absence, imperfect recall and an imperfect judge."""
    scenario = ScenarioSpec(
        num_frames=250,
        presence_intervals=((20, 110), (150, 250)),
        trajectory=Trajectory(
            size=(16.0, 12.0),
            accel_sigma=0.3,
            max_speed=4.0,
            burst_probability=0.03,
            burst_speed=18.0,
        ),
        distractors=3,
        distractor_drift=0.3,
    )
    detector = SimDetectorModel(
        recall=0.7,
        false_positive_rate=0.03,
        localization_noise=1.5,
        true_score=ScoreLaw(0.5, 1.0),
        false_score=ScoreLaw(0.25, 0.65),
    )
    tracker = SimTrackerModel(
        drift_sigma=1.0,
        lock_loss_probability=0.01,
        distractor_capture=0.6,
        stale_drift_sigma=1.5,
        search_radius=40.0,
        reacquire_probability=0.1,
        confusion_rate=0.05,
        on_target=EvidenceLaw(80.0, 0.5, 8.0),
        drifted=EvidenceLaw(5.0, 1.5, 4.0),
        absent=EvidenceLaw(0.5, 2.0, 2.0),
    )
    return ExperimentConfig(scenario, detector, tracker, trials=trials, seed=seed)


def sweep_arms(thetas=THETA_SWEEP, theta_det: float = 0.5) -> tuple[Arm, ...]:
    return tuple(Arm(PipelineMode.EC, t, theta_det, f"EC@{t:g}") for t in thetas)


def oracle_config(trials: int = 20, seed: int = 1) -> ExperimentConfig:
    """Noise-free detector, tracker and evidence: the evidential combination scores 1 exactly."""
    scenario = ScenarioSpec(
        num_frames=120,
        presence_intervals=((10, 50), (70, 120)),
        trajectory=Trajectory(size=(16.0, 12.0), accel_sigma=0.3, max_speed=4.0),
        distractors=2,
    )
    return ExperimentConfig(scenario, SimDetectorModel(), SimTrackerModel(), trials=trials, seed=seed)


PRESETS = {"stress": stress_config, "oracle": oracle_config}
