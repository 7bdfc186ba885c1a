import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from antiuav.errors import InvalidInputError
from antiuav.geometry import BoundingBox
from antiuav.metric import (
    EMPTY_SLICE,
    EvalConfig,
    FrameAnnotation,
    FramePrediction,
    attribute_slice,
    evaluate_dataset,
    evaluate_scores,
    evaluate_sequence,
    failure_flag,
    frame_score,
)

GT = BoundingBox(0, 0, 2, 2)
HALF = BoundingBox(0, 0, 2, 1)  # IoU 0.5 with GT
SEVENTH = BoundingBox(1, 1, 2, 2)  # IoU 1/7 with GT
FAR = BoundingBox(50, 50, 2, 2)
NONE = FramePrediction(None)


def mp_acc(visible, ious, predicted, alpha, beta):
    """Acc in 50-digit arithmetic, straight from the per-frame definition."""
    mpmath.mp.dps = 50
    T = len(visible)
    t_star = sum(visible)
    first = mpmath.fsum(
        (mpmath.mpf(i) if p else 0) if v else (1 if not p else 0) for v, i, p in zip(visible, ious, predicted)
    ) / T
    if t_star == 0:
        return first
    fails = sum(1 for v, i, p in zip(visible, ious, predicted) if v and (not p or i == 0))
    return first - mpmath.mpf(alpha) * (mpmath.mpf(fails) / t_star) ** mpmath.mpf(beta)


def four_frame_case():
    gts = [FrameAnnotation.present(GT), FrameAnnotation.present(GT), FrameAnnotation.absent(), FrameAnnotation.absent()]
    preds = [FramePrediction(HALF), NONE, NONE, FramePrediction(FAR)]
    return gts, preds


class TestFrameScore:
    def test_exact_match(self):
        assert frame_score(FrameAnnotation.present(GT), FramePrediction(GT)) == 1.0

    def test_correct_absence(self):
        assert frame_score(FrameAnnotation.absent(), NONE) == 1.0

    def test_false_alarm(self):
        assert frame_score(FrameAnnotation.absent(), FramePrediction(GT)) == 0.0

    def test_missed_target(self):
        assert frame_score(FrameAnnotation.present(GT), NONE) == 0.0


class TestFailureFlag:
    def test_overlap_is_not_failure(self):
        assert not failure_flag(FrameAnnotation.present(GT), FramePrediction(SEVENTH))

    def test_absent_prediction_is_failure(self):
        assert failure_flag(FrameAnnotation.present(GT), NONE)

    def test_zero_overlap_is_failure(self):
        assert failure_flag(FrameAnnotation.present(GT), FramePrediction(FAR))

    @pytest.mark.parametrize("pred", [NONE, FramePrediction(GT)])
    def test_invisible_frames_never_fail(self, pred):
        assert not failure_flag(FrameAnnotation.absent(), pred)


class TestAnnotation:
    def test_visible_requires_box(self):
        with pytest.raises(InvalidInputError):
            FrameAnnotation(True, None)

    def test_unknown_tag_rejected(self):
        with pytest.raises(InvalidInputError):
            FrameAnnotation.absent(frozenset({"XX"}))


class TestEvaluateSequence:
    def test_perfect_run(self):
        gts = [FrameAnnotation.present(GT)] * 10
        result = evaluate_sequence(gts, [FramePrediction(GT)] * 10)
        assert result.acc == pytest.approx(1.0, abs=1e-9)
        assert result.penalty_term == 0.0

    def test_total_failure_saturates_penalty(self):
        result = evaluate_sequence([FrameAnnotation.present(GT)] * 10, [NONE] * 10)
        assert result.accuracy_term == 0.0
        assert result.penalty_term == pytest.approx(0.2, abs=1e-12)
        assert result.acc == pytest.approx(-0.2, abs=1e-9)

    def test_four_frame_case_against_oracle(self):
        result = evaluate_sequence(*four_frame_case())
        oracle = mp_acc([1, 1, 0, 0], [0.5, 0, 0, 0], [1, 0, 0, 1], 0.2, 0.3)
        assert result.accuracy_term == pytest.approx(0.375, abs=1e-15)
        assert result.num_failures == 1
        assert result.penalty_term == pytest.approx(0.16245047927124710, abs=1e-15)
        assert abs(result.acc - float(oracle)) <= 1e-15
        assert result.acc == pytest.approx(0.21254952072875290, abs=1e-9)

    @pytest.mark.xfail(strict=True, reason="0.2*0.5**0.3 is 0.16245048, so 0.2125355 cannot come from alpha=0.2, beta=0.3")
    def test_four_frame_case_quoted_digits(self):
        assert evaluate_sequence(*four_frame_case()).acc == pytest.approx(0.2125355, abs=1e-9)

    def test_no_visible_frames_has_no_penalty(self):
        result = evaluate_sequence([FrameAnnotation.absent()] * 3, [NONE, NONE, FramePrediction(GT)])
        assert result.penalty_term == 0.0
        assert result.acc == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError, match="length"):
            evaluate_sequence([FrameAnnotation.absent()], [NONE, NONE])

    def test_empty_sequence(self):
        with pytest.raises(InvalidInputError):
            evaluate_sequence([], [])

    @given(st.data())
    def test_bounds_and_oracle(self, data):
        n = data.draw(st.integers(1, 60))
        visible = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        predicted = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        ious = data.draw(st.lists(st.sampled_from([0.0, 0.25, 1 / 3, 0.9, 1.0]), min_size=n, max_size=n))
        result = evaluate_scores(visible, ious, predicted)
        assert -0.2 <= result.acc <= 1.0
        assert abs(result.acc - float(mp_acc(visible, ious, predicted, 0.2, 0.3))) <= 1e-12

    @given(st.integers(0, 9), st.floats(0.01, 1.0))
    def test_fixing_a_failure_never_lowers_acc(self, idx, new_iou):
        rng = np.random.default_rng(idx)
        visible = np.ones(10, bool)
        predicted = rng.random(10) < 0.5
        ious = np.where(predicted, rng.uniform(0.1, 1, 10), 0.0)
        predicted[idx] = False
        before = evaluate_scores(visible, ious, predicted).acc
        predicted[idx] = True
        ious[idx] = new_iou
        assert evaluate_scores(visible, ious, predicted).acc > before


class TestDataset:
    def test_single(self):
        perfect = evaluate_sequence([FrameAnnotation.present(GT)], [FramePrediction(GT)])
        assert evaluate_dataset([perfect]) == 1.0

    def test_arithmetic_mean(self):
        perfect = evaluate_sequence([FrameAnnotation.present(GT)] * 10, [FramePrediction(GT)] * 10)
        failed = evaluate_sequence([FrameAnnotation.present(GT)] * 10, [NONE] * 10)
        assert evaluate_dataset([perfect, failed]) == pytest.approx(0.4, abs=1e-12)

    def test_derived_mean(self):
        perfect = evaluate_sequence([FrameAnnotation.present(GT)] * 10, [FramePrediction(GT)] * 10)
        four = evaluate_sequence(*four_frame_case())
        oracle = (mp_acc([1, 1, 0, 0], [0.5, 0, 0, 0], [1, 0, 0, 1], 0.2, 0.3) + 1) / 2
        assert evaluate_dataset([four, perfect]) == pytest.approx(float(oracle), abs=1e-15)
        assert evaluate_dataset([four, perfect]) == pytest.approx(0.60627476036437645, abs=1e-9)

    def test_frame_weighted(self):
        perfect = evaluate_sequence([FrameAnnotation.present(GT)] * 12, [FramePrediction(GT)] * 12)
        four = evaluate_sequence(*four_frame_case())
        expected = (4 * four.acc + 12 * 1.0) / 16
        assert evaluate_dataset([four, perfect], frame_weighted=True) == pytest.approx(expected)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            evaluate_dataset([])


class TestAttributeSlice:
    def test_all_tagged_equals_full(self):
        gts = [FrameAnnotation.present(GT, frozenset({"FM"}))] * 5
        preds = [FramePrediction(GT)] * 5
        assert attribute_slice(gts, preds, "FM") == evaluate_sequence(gts, preds)

    def test_missing_tag_gives_empty_slice(self):
        gts = [FrameAnnotation.present(GT, frozenset({"FM"}))] * 3
        result = attribute_slice(gts, [NONE] * 3, "OV")
        assert result is EMPTY_SLICE
        assert not result

    def test_half_tagged_equals_filtered(self):
        rng = np.random.default_rng(3)
        gts, preds = [], []
        for i in range(40):
            tags = frozenset({"DBC"}) if i % 2 else frozenset()
            gts.append(FrameAnnotation.present(GT, tags) if rng.random() < 0.7 else FrameAnnotation.absent(tags))
            preds.append(rng.choice([NONE, FramePrediction(GT), FramePrediction(SEVENTH), FramePrediction(FAR)]))
        sliced = attribute_slice(gts, preds, "DBC")
        keep = [i for i in range(40) if i % 2]
        assert sliced == evaluate_sequence([gts[i] for i in keep], [preds[i] for i in keep])

    def test_unknown_tag(self):
        with pytest.raises(InvalidInputError):
            attribute_slice([FrameAnnotation.absent()], [NONE], "XYZ")


def test_config_validation():
    with pytest.raises(InvalidInputError):
        EvalConfig(alpha=-0.1)
