"""Ranking and box metrics, all checked against hand-worked values."""

import numpy as np
import pytest

from cuter.metrics import (
    aggregate,
    ap50,
    average_precision,
    box_iou,
    greedy_box_matches,
    map_cf1_of1,
)


class TestAveragePrecision:
    def test_hand_value(self):
        # Ranking by score: pos, neg, pos, pos, neg.
        # Precision at positive ranks: 1/1, 2/3, 3/4 -> mean = 29/36.
        scores = [0.9, 0.8, 0.7, 0.6, 0.5]
        truths = [1, 0, 1, 1, 0]
        assert average_precision(scores, truths) == pytest.approx(29.0 / 36.0)

    def test_perfect_ranking_is_one(self):
        assert average_precision([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_worst_ranking(self):
        # Positive ranked last of 3: AP = 1/3.
        assert average_precision([0.9, 0.8, 0.1], [0, 0, 1]) == pytest.approx(1 / 3)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.normal(size=12)
            t = rng.integers(0, 2, size=12)
            if not t.any():
                t[0] = 1
            base = average_precision(s, t)
            assert average_precision(3 * s + 7, t) == pytest.approx(base)
            assert average_precision(np.tanh(s), t) == pytest.approx(base)

    def test_no_positives_raises(self):
        with pytest.raises(ValueError):
            average_precision([0.5, 0.4], [0, 0])

    def test_tie_break_is_stable(self):
        # Equal scores keep index order: truth at index 0 ranks first.
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5


class TestMapCf1Of1:
    def test_hand_values(self):
        scores = np.array([[0.9, 0.2], [0.8, 0.6], [0.1, 0.7]])
        truths = np.array([[1, 0], [1, 1], [0, 0]])
        out = map_cf1_of1(scores, truths)
        # Class 0: positives at ranks 1, 2 -> AP 1. Class 1: positive at
        # rank 2 of (0.7, 0.6) ordering -> AP 1/2. mAP = 0.75.
        assert out.map == pytest.approx(0.75)
        # Threshold 0.5: preds class0 = {0,1}, class1 = {1,2}.
        # class0: tp=2 fp=0 fn=0 -> F1 1. class1: tp=1 fp=1 fn=0 -> F1 2/3.
        assert out.cf1 == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)
        # Micro: tp=3, fp=1, fn=0 -> 6/7.
        assert out.of1 == pytest.approx(6.0 / 7.0)
        assert out.scored_classes == 2

    def test_empty_class_skipped_by_map(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.3]])
        truths = np.array([[1, 0], [0, 0]])
        out = map_cf1_of1(scores, truths)
        assert out.scored_classes == 1
        assert out.map == 1.0

    def test_sample_permutation_invariance(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(size=(10, 4))
        t = rng.integers(0, 2, size=(10, 4))
        t[0] = 1
        perm = rng.permutation(10)
        a = map_cf1_of1(s, t)
        b = map_cf1_of1(s[perm], t[perm])
        assert a.map == pytest.approx(b.map)
        assert a.cf1 == pytest.approx(b.cf1)
        assert a.of1 == pytest.approx(b.of1)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            map_cf1_of1(np.zeros(3), np.zeros(3))


class TestBoxIoU:
    def test_identity(self):
        assert box_iou((0, 0, 3, 3), (0, 0, 3, 3)) == 1.0

    def test_half_overlap_hand_count(self):
        # (0,0,1,3) is 2x4=8 cells; (1,0,2,3) is 8 cells; overlap row 1 = 4.
        # IoU = 4 / (8 + 8 - 4) = 1/3.
        assert box_iou((0, 0, 1, 3), (1, 0, 2, 3)) == pytest.approx(1 / 3)

    def test_disjoint_is_zero(self):
        assert box_iou((0, 0, 1, 1), (3, 3, 4, 4)) == 0.0

    def test_symmetric(self):
        a, b = (0, 1, 2, 3), (1, 1, 3, 5)
        assert box_iou(a, b) == box_iou(b, a)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            box_iou((2, 0, 1, 3), (0, 0, 1, 1))


class TestGreedyMatching:
    def test_one_to_one(self):
        preds = [(0, 0, 1, 1), (0, 0, 1, 1)]
        gts = [(0, 0, 1, 1)]
        matches = greedy_box_matches(preds, gts)
        assert len(matches) == 1
        assert matches[0][:2] == (0, 0)  # tie broken by index

    def test_best_pairing_wins(self):
        preds = [(0, 0, 3, 3), (4, 4, 7, 7)]
        gts = [(4, 4, 7, 7), (0, 0, 3, 3)]
        matches = greedy_box_matches(preds, gts)
        assert sorted((i, j) for i, j, _ in matches) == [(0, 1), (1, 0)]

    def test_threshold_excludes_weak_pairs(self):
        preds = [(0, 0, 0, 0)]
        gts = [(0, 0, 3, 3)]  # IoU = 1/16
        assert greedy_box_matches(preds, gts, iou_threshold=0.5) == []


class TestAp50:
    def test_both_empty(self):
        assert ap50([], []) == 1.0

    def test_one_empty(self):
        assert ap50([(0, 0, 1, 1)], []) == 0.0
        assert ap50([], [(0, 0, 1, 1)]) == 0.0

    def test_precision_style(self):
        # Two predictions, one matches -> 0.5.
        preds = [(0, 0, 3, 3), (6, 6, 7, 7)]
        gts = [(0, 0, 3, 3)]
        assert ap50(preds, gts) == 0.5


class TestAggregate:
    def test_single_task_avg_equals_last(self):
        avg, last = aggregate([{"map": 0.5, "cf1": 0.4}])
        assert avg == last == {"map": 0.5, "cf1": 0.4}

    def test_constant_metric(self):
        avg, _ = aggregate([{"map": 0.3}, {"map": 0.3}, {"map": 0.3}])
        assert avg["map"] == pytest.approx(0.3)

    def test_two_task_hand_mean(self):
        avg, last = aggregate([{"map": 0.2}, {"map": 0.6}])
        assert avg["map"] == pytest.approx(0.4)
        assert last["map"] == pytest.approx(0.6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_mismatched_keys_rejected(self):
        with pytest.raises(ValueError):
            aggregate([{"map": 0.1}, {"cf1": 0.1}])
