"""Replay memory tests: selection thresholds, both reservoirs, accounting."""

import numpy as np
import pytest

from cuter.exceptions import OversizeItemError
from cuter.replay import (
    MemoryBuffer,
    MemoryItem,
    SelectionPolicy,
    WholeSampleItem,
    buffer_insert,
    class_histogram,
    sample_replay_batch,
    select_candidates,
    vanilla_reservoir_insert,
)


def make_item(label, h=3, w=3, confidence=0.9):
    return MemoryItem(
        crop=np.zeros((h, w, 2)), label=label, confidence=confidence, area=h * w
    )


def make_crop(h=2, w=2):
    return np.zeros((h, w, 2))


# ---------------------------------------------------------------- items


def test_memory_item_validates_crop_and_area():
    with pytest.raises(ValueError):
        MemoryItem(crop=np.zeros((3, 3)), label=0, confidence=0.9, area=9)
    with pytest.raises(ValueError):
        MemoryItem(crop=np.zeros((3, 3, 2)), label=0, confidence=0.9, area=8)
    with pytest.raises(ValueError):
        MemoryItem(crop=np.zeros((3, 3, 2)), label=0, confidence=0.0, area=9)
    item = make_item(4)
    assert item.class_ids == (4,)


def test_whole_sample_item_labels_subset_of_observed():
    with pytest.raises(ValueError):
        WholeSampleItem(
            crop=np.zeros((4, 4, 2)), labels=(1, 5), observed_classes=(1, 2), area=16
        )
    item = WholeSampleItem(
        crop=np.zeros((4, 4, 2)), labels=(2, 1), observed_classes=(0, 1, 2), area=16
    )
    assert item.class_ids == (2, 1)


def test_selection_policy_validation_and_roundtrip():
    with pytest.raises(ValueError):
        SelectionPolicy(tau1=0.8, tau2=0.6)
    with pytest.raises(ValueError):
        SelectionPolicy(tau1=0.0, tau2=0.8)
    with pytest.raises(ValueError):
        SelectionPolicy(second_max=1.0)
    p = SelectionPolicy(tau1=0.55, tau2=0.85, second_max=0.4)
    assert SelectionPolicy.from_dict(p.to_dict()) == p


# ------------------------------------------------------- select_candidates


def test_single_high_threshold_without_frequencies():
    # No stream statistics -> no per-class relaxation: tau2 for everything.
    policy = SelectionPolicy(tau1=0.6, tau2=0.8)
    crops = [
        (make_crop(), [0.85, 0.1, 0.1]),  # above tau2 -> admitted
        (make_crop(), [0.75, 0.2, 0.1]),  # between the thresholds -> rejected
        (make_crop(), [0.55, 0.1, 0.1]),  # below both -> rejected
    ]
    out = select_candidates(crops, policy)
    assert [it.confidence for it in out] == [0.85]
    assert out[0].label == 0


def test_frequent_class_faces_raised_threshold():
    policy = SelectionPolicy(tau1=0.6, tau2=0.8)
    # class 0 dominates the stream; class 2 sits below half of it
    freq = {0: 100, 1: 60, 2: 10}
    crops = [
        (make_crop(), [0.75, 0.1, 0.1]),  # frequent, under tau2 -> rejected
        (make_crop(), [0.85, 0.1, 0.05]),  # frequent, over tau2 -> admitted
        (make_crop(), [0.1, 0.1, 0.75]),  # rare, over tau1 -> admitted
    ]
    out = select_candidates(crops, policy, stream_freq=freq)
    assert [(it.label, it.confidence) for it in out] == [(0, 0.85), (2, 0.75)]


def test_array_frequencies_match_dict_frequencies():
    policy = SelectionPolicy()
    crops = [(make_crop(), [0.75, 0.05, 0.62]), (make_crop(), [0.05, 0.9, 0.02])]
    as_dict = select_candidates(crops, policy, stream_freq={0: 50, 1: 40, 2: 3})
    as_array = select_candidates(
        crops, policy, stream_freq=np.array([50.0, 40.0, 3.0])
    )
    assert [(i.label, i.confidence) for i in as_dict] == [
        (i.label, i.confidence) for i in as_array
    ]


def test_empty_frequency_table_keeps_strict_threshold():
    # Before any stream statistics exist nothing counts as rare.
    policy = SelectionPolicy(tau1=0.6, tau2=0.8)
    crops = [(make_crop(), [0.7, 0.1])]
    assert select_candidates(crops, policy, stream_freq={}) == []
    assert select_candidates(crops, policy, stream_freq=None) == []
    freq = {0: 2, 1: 100}  # class 0 is rare once counts exist
    assert len(select_candidates(crops, policy, stream_freq=freq)) == 1


def test_second_max_vetoes_ambiguous_crops():
    policy = SelectionPolicy(tau1=0.6, tau2=0.8, second_max=0.5)
    crops = [(make_crop(), [0.9, 0.6, 0.1])]
    assert select_candidates(crops, policy) == []
    crops = [(make_crop(), [0.9, 0.45, 0.1])]
    assert len(select_candidates(crops, policy)) == 1


def test_candidate_carries_argmax_label_and_patch_area():
    out = select_candidates(
        [(np.zeros((2, 5, 3)), [0.1, 0.2, 0.95])], SelectionPolicy()
    )
    assert len(out) == 1
    assert out[0].label == 2
    assert out[0].area == 10


def test_bad_probability_vector_raises():
    with pytest.raises(ValueError):
        select_candidates([(make_crop(), np.zeros((2, 2)))], SelectionPolicy())


# ------------------------------------------------------------ buffer core


def test_buffer_accounting_modes():
    with pytest.raises(ValueError):
        MemoryBuffer(capacity=0)
    with pytest.raises(ValueError):
        MemoryBuffer(accounting="bytes")
    buf = MemoryBuffer(capacity=20, accounting="area")
    rng = np.random.default_rng(0)
    buffer_insert(buf, make_item(0, h=3, w=3), rng)
    assert buf.used == 9
    assert buf.has_room_for(make_item(1, h=3, w=3))
    assert not buf.has_room_for(make_item(1, h=3, w=4))


def test_observe_stream_labels_accumulates():
    buf = MemoryBuffer(capacity=4)
    buf.observe_stream_labels([1, 1, 2])
    buf.observe_stream_labels([2, 3])
    assert buf.stream_class_freq == {1: 2, 2: 2, 3: 1}


def test_snapshot_has_histogram_and_metadata_only():
    buf = MemoryBuffer(capacity=5)
    rng = np.random.default_rng(1)
    for label in (2, 0, 2):
        buffer_insert(buf, make_item(label, confidence=0.75), rng)
    snap = buf.to_snapshot()
    assert snap["size"] == 3
    assert snap["class_histogram"] == {"0": 1, "2": 2}
    assert snap["items"][0] == {"labels": [2], "area": 9, "confidence": 0.75}
    assert "crop" not in snap["items"][0]


# ------------------------------------------------- rebalanced insertion


def test_full_buffer_rejects_items_of_the_largest_class():
    # accept probability is 1 - m/m_max, which is exactly 0 for the largest
    # class, so rejection is deterministic here.
    buf = MemoryBuffer(capacity=3)
    rng = np.random.default_rng(0)
    for _ in range(3):
        assert buffer_insert(buf, make_item(0), rng)
    assert not buffer_insert(buf, make_item(0), rng)
    assert class_histogram(buf) == {0: 3}


def test_full_buffer_always_accepts_unseen_class_and_evicts_top():
    buf = MemoryBuffer(capacity=3)
    rng = np.random.default_rng(0)
    for _ in range(3):
        buffer_insert(buf, make_item(0), rng)
    assert buffer_insert(buf, make_item(1), rng)  # accept_p = 1 - 0/3
    assert class_histogram(buf) == {0: 2, 1: 1}


def test_rebalanced_insert_rejects_multilabel_items():
    whole = WholeSampleItem(
        crop=np.zeros((2, 2, 2)), labels=(0, 1), observed_classes=(0, 1), area=4
    )
    with pytest.raises(TypeError):
        buffer_insert(MemoryBuffer(capacity=4), whole, np.random.default_rng(0))


def test_rebalanced_buffer_flattens_a_long_tailed_stream():
    # Stream marginals 16:4:2:1:1 over five classes; the rebalanced buffer
    # should end close to uniform (max/min well under 2).
    rng = np.random.default_rng(42)
    weights = np.array([16.0, 4.0, 2.0, 1.0, 1.0])
    probs = weights / weights.sum()
    buf = MemoryBuffer(capacity=100)
    for label in rng.choice(5, size=3000, p=probs):
        buffer_insert(buf, make_item(int(label)), rng)
    counts = class_histogram(buf)
    assert set(counts) == {0, 1, 2, 3, 4}
    assert max(counts.values()) / min(counts.values()) <= 2.0


def test_rebalanced_area_mode_respects_capacity():
    rng = np.random.default_rng(3)
    buf = MemoryBuffer(capacity=50, accounting="area")
    for _ in range(400):
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        buffer_insert(buf, make_item(int(rng.integers(4)), h=h, w=w), rng)
        assert buf.used <= 50
    assert len(buf) > 0


def test_rebalanced_area_mode_oversize_item_raises():
    buf = MemoryBuffer(capacity=8, accounting="area")
    with pytest.raises(OversizeItemError):
        buffer_insert(buf, make_item(0, h=3, w=3), np.random.default_rng(0))


# --------------------------------------------------- vanilla reservoir


def test_vanilla_reservoir_count_mode_stays_full():
    rng = np.random.default_rng(0)
    buf = MemoryBuffer(capacity=40)
    for i in range(400):
        vanilla_reservoir_insert(buf, make_item(i % 7), i + 1, rng)
        assert len(buf) == min(i + 1, 40)


def test_vanilla_reservoir_first_half_survival_rate():
    # Survivors from the first half of a 400-item stream into capacity 40:
    # a uniform reservoir keeps 20 in expectation. 50 seeds pin the mean.
    means = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        buf = MemoryBuffer(capacity=40)
        for i in range(400):
            # encode the arrival index in the confidence channel
            conf = (i + 1) / 400.0
            item = MemoryItem(
                crop=np.zeros((2, 2, 2)), label=0, confidence=conf, area=4
            )
            vanilla_reservoir_insert(buf, item, i + 1, rng)
        means.append(sum(1 for it in buf.items if it.confidence <= 0.5))
    assert abs(np.mean(means) - 20.0) < 2.0


def test_vanilla_reservoir_mirrors_stream_imbalance():
    rng = np.random.default_rng(11)
    weights = np.array([16.0, 4.0, 2.0, 1.0, 1.0])
    probs = weights / weights.sum()
    buf = MemoryBuffer(capacity=100)
    for i, label in enumerate(rng.choice(5, size=3000, p=probs)):
        vanilla_reservoir_insert(buf, make_item(int(label)), i + 1, rng)
    counts = class_histogram(buf)
    ratio = max(counts.values()) / max(min(counts.values()), 1)
    assert ratio >= 4.0


def test_vanilla_area_mode_evicts_until_newcomer_fits():
    rng = np.random.default_rng(5)
    buf = MemoryBuffer(capacity=30, accounting="area")
    for i in range(300):
        h = int(rng.integers(1, 4))
        w = int(rng.integers(1, 4))
        vanilla_reservoir_insert(buf, make_item(0, h=h, w=w), i + 1, rng)
        assert buf.used <= 30
    with pytest.raises(OversizeItemError):
        vanilla_reservoir_insert(buf, make_item(0, h=6, w=6), 301, rng)


def test_vanilla_seen_count_must_be_positive():
    with pytest.raises(ValueError):
        vanilla_reservoir_insert(
            MemoryBuffer(capacity=2), make_item(0), 0, np.random.default_rng(0)
        )


# ------------------------------------------------------------- sampling


def test_replay_batch_empty_buffer_returns_empty_list():
    assert sample_replay_batch(MemoryBuffer(capacity=4), 8, np.random.default_rng(0)) == []


def test_replay_batch_without_replacement_when_possible():
    buf = MemoryBuffer(capacity=10)
    rng = np.random.default_rng(0)
    for label in range(10):
        buffer_insert(buf, make_item(label), rng)
    batch = sample_replay_batch(buf, 6, np.random.default_rng(1))
    assert len(batch) == 6
    assert len({id(it) for it in batch}) == 6


def test_replay_batch_with_replacement_when_buffer_small():
    buf = MemoryBuffer(capacity=10)
    rng = np.random.default_rng(0)
    for label in range(3):
        buffer_insert(buf, make_item(label), rng)
    batch = sample_replay_batch(buf, 8, np.random.default_rng(1))
    assert len(batch) == 8


def test_replay_batch_size_must_be_positive():
    with pytest.raises(ValueError):
        sample_replay_batch(MemoryBuffer(capacity=2), 0, np.random.default_rng(0))


def test_class_histogram_counts_multilabel_once_per_class():
    buf = MemoryBuffer(capacity=10)
    whole = WholeSampleItem(
        crop=np.zeros((2, 2, 2)), labels=(3, 1), observed_classes=(1, 3), area=4
    )
    vanilla_reservoir_insert(buf, whole, 1, np.random.default_rng(0))
    vanilla_reservoir_insert(buf, whole, 2, np.random.default_rng(0))
    assert class_histogram(buf) == {1: 2, 3: 2}
