from dataclasses import dataclass, field

import pytest
from hypothesis import given
from hypothesis import strategies as st

from antiuav.edl import DirichletEvidence
from antiuav.errors import ContractViolation, InvalidInputError
from antiuav.geometry import BoundingBox
from antiuav.pipeline import (
    DETECTORS,
    TRACKERS,
    Detection,
    Mode,
    PipelineState,
    Template,
    TrackOutput,
    initial_state,
    run_detection_only,
    run_sequence,
    run_simple_combination,
    select_detection,
    step,
    trace_sequence,
)


def box(i):
    return BoundingBox(10.0 * i, 5.0, 8.0, 6.0)


CONFIDENT = DirichletEvidence([19.0, 1.0])
LOST = DirichletEvidence([0.0, 5.0])


@dataclass
class ScriptedDetector:
    fires: set
    score: float = 0.9
    calls: list = field(default_factory=list)

    def detect(self, frame):
        self.calls.append(frame)
        return [Detection(box(frame), self.score)] if frame in self.fires else []


@dataclass
class ScriptedTracker:
    evidence: dict
    default: DirichletEvidence = CONFIDENT
    calls: list = field(default_factory=list)

    def track(self, template, frame):
        self.calls.append((template.frame_index, frame))
        return TrackOutput(box(frame), self.evidence.get(frame, self.default))


# Target present on 0-3, absent on 4-6, back on 7-11.
PRESENT = {0, 1, 2, 3, 7, 8, 9, 10, 11}


def scripted_pair():
    return ScriptedDetector(PRESENT), ScriptedTracker({f: LOST for f in range(12) if f not in PRESENT})


# Hand-executed state machine at theta_eh=0.2, theta_det=0.5:
#   frame  mode   event                          prediction
#   0      GD     detection 0.9 >= 0.5 -> LT     box0
#   1-3    LT     u = 1/11 < 0.2, target wins    box1..box3
#   4      LT     u = 2/7 >= 0.2 -> GD           absent
#   5-6    GD     no detection                   absent
#   7      GD     detection -> LT                box7
#   8-11   LT     confident                      box8..box11
HAND_MODES = ["GD", "LT", "LT", "LT", "LT", "GD", "GD", "GD", "LT", "LT", "LT", "LT"]
HAND_PREDICTIONS = [box(0), box(1), box(2), box(3), None, None, None, box(7), box(8), box(9), box(10), box(11)]


def episodes(modes):
    count, prev = 0, None
    for m in modes:
        if m is Mode.GLOBAL_DETECTION and prev is not Mode.GLOBAL_DETECTION:
            count += 1
        prev = m
    return count


class TestStep:
    def test_no_detection_stays(self):
        state, pred = step(initial_state(), 0, ScriptedDetector(set()), ScriptedTracker({}))
        assert state.mode is Mode.GLOBAL_DETECTION
        assert pred.is_empty

    def test_confident_detection_switches(self):
        state, pred = step(initial_state(), 2, ScriptedDetector({2}), ScriptedTracker({}))
        assert state.mode is Mode.LOCAL_TRACKING
        assert state.template == Template(box(2), 0)
        assert pred.box == box(2)

    def test_weak_detection_ignored(self):
        state, pred = step(initial_state(theta_det=0.95), 2, ScriptedDetector({2}), ScriptedTracker({}))
        assert state.mode is Mode.GLOBAL_DETECTION
        assert pred.is_empty

    def test_confident_tracking_continues(self):
        state = PipelineState(Mode.LOCAL_TRACKING, Template(box(0), 0), 0.2, 0.5, 1)
        nxt, pred = step(state, 1, ScriptedDetector(set()), ScriptedTracker({}))
        assert nxt.mode is Mode.LOCAL_TRACKING
        assert pred.box == box(1)

    def test_rejection_emits_absence_and_waits(self):
        detector = ScriptedDetector({1})
        state = PipelineState(Mode.LOCAL_TRACKING, Template(box(0), 0), 0.2, 0.5, 1)
        nxt, pred = step(state, 1, detector, ScriptedTracker({1: LOST}))
        assert nxt.mode is Mode.GLOBAL_DETECTION and nxt.template is None
        assert pred.is_empty
        assert detector.calls == []

    def test_rejection_can_redetect_same_frame(self):
        state = PipelineState(Mode.LOCAL_TRACKING, Template(box(0), 0), 0.2, 0.5, 1)
        nxt, pred = step(state, 1, ScriptedDetector({1}), ScriptedTracker({1: LOST}), redetect_same_frame=True)
        assert nxt.mode is Mode.LOCAL_TRACKING and nxt.template == Template(box(1), 1)
        assert pred.box == box(1)

    def test_missing_template_is_contract_violation(self):
        with pytest.raises(InvalidInputError):
            PipelineState(Mode.LOCAL_TRACKING, None)
        state = object.__new__(PipelineState)
        for name, value in dict(mode=Mode.LOCAL_TRACKING, template=None, theta_eh=0.2, theta_det=0.5, frame_index=0).items():
            object.__setattr__(state, name, value)
        with pytest.raises(ContractViolation):
            step(state, 0, ScriptedDetector(set()), ScriptedTracker({}))


class TestSelectDetection:
    def test_highest_score(self):
        dets = [Detection(box(1), 0.6), Detection(box(2), 0.8), Detection(box(3), 0.7)]
        assert select_detection(dets).box == box(2)

    def test_tie_prefers_larger_then_earlier(self):
        small, big = BoundingBox(0, 0, 2, 2), BoundingBox(5, 5, 4, 4)
        assert select_detection([Detection(small, 0.7), Detection(big, 0.7)]).box == big
        assert select_detection([Detection(big, 0.7), Detection(big.translated(1, 0), 0.7)]).box == big

    def test_empty(self):
        assert select_detection([]) is None


class TestRunSequence:
    def test_detector_never_fires(self):
        preds = run_sequence(list(range(8)), ScriptedDetector(set()), ScriptedTracker({}))
        assert all(p.is_empty for p in preds)

    def test_single_switch(self):
        preds = run_sequence(list(range(8)), ScriptedDetector({3}), ScriptedTracker({}))
        assert [p.box for p in preds] == [None, None, None] + [box(i) for i in range(3, 8)]

    def test_hand_transition_table(self):
        records = trace_sequence(list(range(12)), *scripted_pair())
        assert [("GD" if r.mode is Mode.GLOBAL_DETECTION else "LT") for r in records] == HAND_MODES
        assert [r.prediction.box for r in records] == HAND_PREDICTIONS
        assert episodes(r.mode for r in records) == 2

    def test_bit_identical_reruns(self):
        first = run_sequence(list(range(12)), *scripted_pair())
        second = run_sequence(list(range(12)), *scripted_pair())
        assert first == second
        assert [p.box.as_tuple() if p.box else None for p in first] == [
            p.box.as_tuple() if p.box else None for p in second
        ]

    def test_empty_sequence(self):
        with pytest.raises(InvalidInputError):
            run_sequence([], ScriptedDetector(set()), ScriptedTracker({}))


class TestSimpleCombination:
    def test_tracks_through_absence(self):
        records = trace_sequence(list(range(12)), *scripted_pair(), use_judge=False)
        assert episodes(r.mode for r in records) == 1
        assert all(r.prediction.box == box(i) for i, r in enumerate(records))

    def test_equals_evidential_when_detector_silent(self):
        frames = list(range(10))
        sc = run_simple_combination(frames, ScriptedDetector(set()), ScriptedTracker({}))
        ec = run_sequence(frames, ScriptedDetector(set()), ScriptedTracker({}))
        assert sc == ec

    def test_agrees_with_evidential_until_first_rejection(self):
        frames = list(range(12))
        sc = run_simple_combination(frames, *scripted_pair())
        ec = run_sequence(frames, *scripted_pair())
        assert sc[:4] == ec[:4]
        assert sc[4] != ec[4]


class TestDetectionOnly:
    def test_reports_every_detection(self):
        preds = run_detection_only(list(range(12)), ScriptedDetector(PRESENT))
        assert [p.box for p in preds] == [box(i) if i in PRESENT else None for i in range(12)]


evidence_pairs = st.tuples(st.floats(0, 1e3), st.floats(0, 1e3))


class TestThresholdBoundaries:
    @given(st.lists(evidence_pairs, min_size=12, max_size=12), st.sets(st.integers(0, 11)))
    def test_zero_threshold_always_switches(self, evidences, fires):
        tracker = ScriptedTracker({i: DirichletEvidence(e) for i, e in enumerate(evidences)})
        records = trace_sequence(list(range(12)), ScriptedDetector(fires), tracker, theta_eh=0.0)
        for prev, cur in zip(records, records[1:]):
            if cur.mode is Mode.LOCAL_TRACKING:
                assert cur.state_after.mode is Mode.GLOBAL_DETECTION
                assert cur.prediction.is_empty

    @given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(1e-3, 1e3)), min_size=12, max_size=12), st.sets(st.integers(0, 11), min_size=1))
    def test_unit_threshold_never_switches_on_target_verdicts(self, evidences, fires):
        tracker = ScriptedTracker({i: DirichletEvidence([bg + m, bg]) for i, (bg, m) in enumerate(evidences)})
        records = trace_sequence(list(range(12)), ScriptedDetector(fires), tracker, theta_eh=1.0)
        first = min(fires)
        assert episodes(r.mode for r in records) == 1
        assert all(r.state_after.mode is Mode.LOCAL_TRACKING for r in records[first:])


def test_registries_hold_simulated_ports():
    import antiuav.simulator  # noqa: F401  registers "sim"

    assert "sim" in DETECTORS and "sim" in TRACKERS
