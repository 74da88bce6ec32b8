"""Replay memory: confidence-gated candidate selection and reservoir buffers.

Two insertion disciplines share one buffer type. The class-rebalanced insert
accepts a new item with probability 1 - m/m_max (m = buffer count of the
item's class, m_max = current maximum class count) and evicts a uniformly
random item of the currently most frequent class, which drives per-class
counts toward uniform regardless of how long-tailed the arrival stream is.
The plain reservoir keeps a uniform sample of the stream and therefore
mirrors its imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import OversizeItemError
from .validation import check_rng

ACCOUNTING_MODES = ("count", "area")


@dataclass(frozen=True)
class MemoryItem:
    """A cut-out crop with exactly one (predicted) class label."""

    crop: np.ndarray  # (h, w, dim_in) raw patches
    label: int
    confidence: float
    area: int

    def __post_init__(self):
        crop = np.asarray(self.crop, dtype=np.float64)
        if crop.ndim != 3 or crop.shape[0] < 1 or crop.shape[1] < 1:
            raise ValueError("crop must be a nonempty (h, w, dim) patch grid")
        if not (0.0 < self.confidence <= 1.0):
            raise ValueError("confidence must lie in (0, 1]")
        if self.area != crop.shape[0] * crop.shape[1]:
            raise ValueError("area must equal the crop patch count")
        object.__setattr__(self, "crop", crop)

    @property
    def class_ids(self):
        return (self.label,)


@dataclass(frozen=True)
class WholeSampleItem:
    """A whole stream sample (multi-label), for the no-cutting baseline."""

    crop: np.ndarray
    labels: tuple  # annotated positive classes
    observed_classes: tuple  # classes that were annotated at storage time
    area: int

    def __post_init__(self):
        crop = np.asarray(self.crop, dtype=np.float64)
        if crop.ndim != 3:
            raise ValueError("sample must be an (h, w, dim) patch grid")
        if not set(self.labels) <= set(self.observed_classes):
            raise ValueError("labels must be drawn from the observed classes")
        object.__setattr__(self, "crop", crop)
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))
        object.__setattr__(
            self, "observed_classes", tuple(int(c) for c in self.observed_classes)
        )

    @property
    def class_ids(self):
        return self.labels


@dataclass(frozen=True)
class SelectionPolicy:
    """Dual confidence thresholds for candidate admission.

    An object crop is admitted when its top class probability exceeds the
    threshold (tau1 for rare classes — stream frequency below half of the most
    frequent class — and tau2 otherwise) and the runner-up probability stays
    below ``second_max``: confident about exactly one class.
    """

    tau1: float = 0.6
    tau2: float = 0.8
    second_max: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.tau1 < 1.0 and 0.0 < self.tau2 < 1.0):
            raise ValueError("thresholds must lie in (0, 1)")
        if not self.tau1 < self.tau2:
            raise ValueError("tau1 must be strictly below tau2")
        if not (0.0 < self.second_max < 1.0):
            raise ValueError("second_max must lie in (0, 1)")

    def to_dict(self):
        return {"tau1": self.tau1, "tau2": self.tau2, "second_max": self.second_max}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def select_candidates(crops, policy, stream_freq=None):
    """Filter (crop, class_probs) pairs into MemoryItems.

    ``stream_freq`` maps class id -> observed stream count and activates the
    dual-threshold rule; with None every class faces the single high
    threshold tau2 (the non-rebalanced configuration).
    """
    out = []
    for crop, probs in crops:
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("class probabilities must be a nonempty vector")
        top = int(np.argmax(p))
        top_p = float(p[top])
        second = float(np.partition(p, -2)[-2]) if p.size > 1 else 0.0
        tau = policy.tau2
        if stream_freq is not None:
            freqs = stream_freq if isinstance(stream_freq, np.ndarray) else None
            if freqs is not None:
                top_freq = float(freqs[top]) if top < freqs.size else 0.0
                max_freq = float(freqs.max()) if freqs.size else 0.0
            else:
                top_freq = float(stream_freq.get(top, 0))
                max_freq = float(max(stream_freq.values(), default=0))
            if top_freq < 0.5 * max_freq:
                tau = policy.tau1
        if top_p > tau and second < policy.second_max:
            crop_arr = np.asarray(crop, dtype=np.float64)
            out.append(
                MemoryItem(
                    crop=crop_arr,
                    label=top,
                    confidence=top_p,
                    area=crop_arr.shape[0] * crop_arr.shape[1],
                )
            )
    return out


@dataclass
class MemoryBuffer:
    """Bounded episodic memory with per-class accounting.

    ``capacity`` counts items under "count" accounting and total patch area
    under "area" accounting (the latter honors the smaller footprint of
    crops).
    """

    capacity: int = 200
    accounting: str = "count"
    items: list = field(default_factory=list)
    class_counts: dict = field(default_factory=dict)
    stream_class_freq: dict = field(default_factory=dict)
    inserted: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if self.accounting not in ACCOUNTING_MODES:
            raise ValueError(f"accounting must be one of {ACCOUNTING_MODES}")

    def __len__(self):
        return len(self.items)

    @property
    def used(self):
        if self.accounting == "count":
            return len(self.items)
        return sum(it.area for it in self.items)

    def has_room_for(self, item):
        if self.accounting == "count":
            return len(self.items) < self.capacity
        return self.used + item.area <= self.capacity

    def observe_stream_labels(self, labels):
        """Track the running histogram of observed stream labels."""
        for l in labels:
            self.stream_class_freq[int(l)] = self.stream_class_freq.get(int(l), 0) + 1

    def _count(self, item, delta):
        for c in item.class_ids:
            new = self.class_counts.get(c, 0) + delta
            if new:
                self.class_counts[c] = new
            else:
                self.class_counts.pop(c, None)

    def _append(self, item):
        self.items.append(item)
        self._count(item, +1)
        self.inserted += 1

    def _evict_index(self, idx):
        item = self.items.pop(idx)
        self._count(item, -1)
        return item

    def to_snapshot(self):
        """JSON-ready summary: histogram plus per-item metadata, no payloads."""
        return {
            "schema_version": 1,
            "capacity": self.capacity,
            "accounting": self.accounting,
            "size": len(self.items),
            "used": self.used,
            "inserted": self.inserted,
            "class_histogram": {str(k): self.class_counts[k] for k in sorted(self.class_counts)},
            "items": [
                {
                    "labels": list(it.class_ids),
                    "area": int(it.area),
                    "confidence": round(float(getattr(it, "confidence", 1.0)), 6),
                }
                for it in self.items
            ],
        }


def buffer_insert(buf, item, rng):
    """Class-rebalanced insertion. Returns True if the item was stored."""
    rng = check_rng(rng)
    if len(item.class_ids) != 1:
        raise TypeError("rebalanced insertion requires single-label items")
    if buf.accounting == "area" and item.area > buf.capacity:
        raise OversizeItemError(
            f"item area {item.area} exceeds buffer capacity {buf.capacity}"
        )
    if buf.has_room_for(item):
        buf._append(item)
        return True
    m = buf.class_counts.get(item.class_ids[0], 0)
    m_max = max(buf.class_counts.values()) if buf.class_counts else 0
    accept_p = 1.0 if m_max == 0 else 1.0 - m / m_max
    if rng.random() >= accept_p:
        return False
    while not buf.has_room_for(item):
        top = max(buf.class_counts.values())
        top_classes = sorted(c for c, n in buf.class_counts.items() if n == top)
        victim_class = top_classes[int(rng.integers(len(top_classes)))]
        slots = [i for i, it in enumerate(buf.items) if victim_class in it.class_ids]
        buf._evict_index(slots[int(rng.integers(len(slots)))])
    buf._append(item)
    return True


def vanilla_reservoir_insert(buf, item, seen_count, rng):
    """Classic reservoir sampling; ``seen_count`` includes this item.

    Under count accounting this keeps each of the first ``seen_count`` items
    with equal probability capacity/seen_count. Under area accounting the
    reservoir size is whatever currently fits: acceptance probability is
    occupancy/seen_count and uniformly random items are evicted until the
    newcomer fits, which reduces to the classic scheme when all items have
    equal area.
    """
    rng = check_rng(rng)
    if seen_count < 1:
        raise ValueError("seen_count must count this item (>= 1)")
    if buf.accounting == "area" and item.area > buf.capacity:
        raise OversizeItemError(
            f"item area {item.area} exceeds buffer capacity {buf.capacity}"
        )
    if buf.has_room_for(item):
        buf._append(item)
        return True
    j = int(rng.integers(seen_count))
    if j >= len(buf.items):
        return False
    if buf.accounting == "count":
        buf._evict_index(j)
        buf.items.insert(j, item)
        buf._count(item, +1)
        buf.inserted += 1
        return True
    while not buf.has_room_for(item):
        buf._evict_index(int(rng.integers(len(buf.items))))
    buf._append(item)
    return True


def sample_replay_batch(buf, batch_size, rng):
    """Uniform replay sample; [] signals an empty buffer (replay skipped).

    Draws without replacement when the buffer is large enough, with
    replacement otherwise.
    """
    rng = check_rng(rng)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n = len(buf.items)
    if n == 0:
        return []
    replace = n < batch_size
    idx = rng.choice(n, size=min(batch_size, n) if not replace else batch_size, replace=replace)
    return [buf.items[int(i)] for i in idx]


def class_histogram(buf):
    """Exact per-class item counts (labels of multi-label items each count once)."""
    return dict(sorted(buf.class_counts.items()))
