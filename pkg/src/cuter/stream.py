"""Synthetic multi-label stream with planted rectangular objects.

Each sample is a patch grid: a background prototype plus Gaussian noise, with
k class prototypes planted on disjoint rectangles (>= 1 patch apart). Classes
are drawn from a geometric long-tail; a sample belongs to task t because it
contains at least one task-t object, and only task-t classes appear in its
``observed_labels`` — the full label set and the planted boxes live behind
``oracle_view`` and are reserved for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import ConfigurationError, EndOfTask
from .validation import check_rng, split_seed

# Seed-split tags (master seed -> independent generators).
_SEED_SCHEDULE = 101
_SEED_SAMPLES = 102


@dataclass(frozen=True)
class StreamConfig:
    grid_h: int = 8
    grid_w: int = 8
    dim_in: int = 16
    n_tasks: int = 5
    classes_per_task: int = 4
    samples_per_task: int = 100
    mean_labels_per_image: float = 2.4
    imbalance_ratio: float = 10.0
    cooccur_bias: float = 0.3
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.grid_h, self.grid_w) < 4:
            raise ConfigurationError("grid must be at least 4x4 to host objects")
        if self.dim_in < 2:
            raise ConfigurationError("dim_in must be >= 2")
        if self.n_tasks < 1 or self.classes_per_task < 1:
            raise ConfigurationError("need at least one task and one class per task")
        if self.samples_per_task < 1:
            raise ConfigurationError("samples_per_task must be positive")
        if not (1.0 <= self.mean_labels_per_image <= 4.0):
            raise ConfigurationError("mean_labels_per_image must lie in [1, 4]")
        if self.imbalance_ratio < 1.0:
            raise ConfigurationError("imbalance_ratio must be >= 1")
        if not (0.0 <= self.cooccur_bias < 1.0):
            raise ConfigurationError("cooccur_bias must lie in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ConfigurationError("noise_sigma must be nonnegative")

    @property
    def n_classes(self):
        return self.n_tasks * self.classes_per_task

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d, path="stream"):
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigurationError("unknown field", path=f"{path}.{key}")
        try:
            return cls(**d)
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), path=path)


@dataclass(frozen=True)
class Schedule:
    """Frozen per-run randomness that defines the label space geometry."""

    task_classes: tuple
    class_weights: np.ndarray
    prototypes: np.ndarray  # (n_classes, dim_in), unit norm
    background: np.ndarray  # (dim_in,), unit norm

    @property
    def n_classes(self):
        return int(self.prototypes.shape[0])


@dataclass(frozen=True)
class StreamSample:
    raw: np.ndarray  # (grid_h, grid_w, dim_in)
    observed_labels: tuple
    task_id: int
    # Oracle-only fields; learner code must go through oracle_view.
    _full_labels: tuple
    _gt_boxes: tuple


def oracle_view(sample):
    """Evaluation-side access to the hidden full labels and planted boxes."""
    return sample._full_labels, sample._gt_boxes


def geometric_weights(n_classes, ratio):
    """Per-class sampling weights with head/tail ratio exactly ``ratio``."""
    if n_classes == 1:
        return np.ones(1)
    w = ratio ** (-np.arange(n_classes) / (n_classes - 1))
    return w / w.sum()


def _sample_separated_unit_vectors(count, dim, rng, max_cos=0.3, tries=500):
    vecs = []
    for i in range(count):
        for _ in range(tries):
            v = rng.normal(0.0, 1.0, size=dim)
            v = v / np.linalg.norm(v)
            if all(float(v @ u) <= max_cos for u in vecs):
                vecs.append(v)
                break
        else:
            raise ConfigurationError(
                f"could not draw {count} prototypes with pairwise cosine <= {max_cos} "
                f"in {dim} dimensions; raise dim_in or lower the class count"
            )
    return np.array(vecs)


def generate_schedule(cfg, seed=None):
    """Tasks, class weights, and well-separated prototypes for a config."""
    rng = split_seed(cfg.seed if seed is None else seed, _SEED_SCHEDULE)
    c = cfg.n_classes
    task_classes = tuple(
        tuple(range(t * cfg.classes_per_task, (t + 1) * cfg.classes_per_task))
        for t in range(cfg.n_tasks)
    )
    protos = _sample_separated_unit_vectors(c + 1, cfg.dim_in, rng)
    return Schedule(
        task_classes=task_classes,
        class_weights=geometric_weights(c, cfg.imbalance_ratio),
        prototypes=protos[:c],
        background=protos[c],
    )


def _draw_object_count(cfg, rng, n_classes):
    k = int(np.clip(rng.poisson(cfg.mean_labels_per_image), 1, 4))
    return min(k, n_classes)


def _draw_classes(cfg, schedule, rng, task_id):
    """Distinct object classes for one sample, conditioned on the task."""
    k = _draw_object_count(cfg, rng, schedule.n_classes)
    c = schedule.n_classes
    if task_id is None:
        return list(rng.choice(c, size=k, replace=False, p=schedule.class_weights))
    task_set = set(schedule.task_classes[task_id])
    for _ in range(1000):
        classes = list(
            rng.choice(c, size=k, replace=False, p=schedule.class_weights)
        )
        hit = next((i for i, cl in enumerate(classes) if cl in task_set), None)
        if hit is not None:
            # The task object is placed first so placement failures can never
            # empty the observed label set.
            classes[0], classes[hit] = classes[hit], classes[0]
            return classes
    raise ConfigurationError(
        f"task {task_id} classes have negligible weight; cannot condition samples"
    )


def _apply_cooccur(cfg, schedule, rng, classes):
    """With probability cooccur_bias, a head-class sample also gets a new
    tail class (the head/tail co-occurrence hazard of long-tailed streams)."""
    w = schedule.class_weights
    head = w >= 0.5 * w.max()
    fresh_tail = [c for c in np.nonzero(~head)[0] if c not in classes]
    if (
        fresh_tail
        and len(classes) < 4
        and any(head[c] for c in classes)
        and rng.random() < cfg.cooccur_bias
    ):
        classes = classes + [int(fresh_tail[rng.integers(len(fresh_tail))])]
    return classes


def _place_objects(cfg, rng, classes):
    """Greedy rectangle placement, dropping objects that do not fit.

    Each try proposes a fresh size (uniform sides in [2, grid/2]) and position;
    an object is dropped after 50 rejected proposals. Resampling the size lets
    a crowded grid still admit small rectangles, so drops stay rare. The first
    class is placed on an empty grid and therefore never drops — the caller
    puts the task-defining class there.
    """
    h_grid, w_grid = cfg.grid_h, cfg.grid_w
    max_side = max(2, min(h_grid, w_grid) // 2)
    occupied = np.zeros((h_grid, w_grid), dtype=bool)
    placed = []
    for c in classes:
        for _ in range(50):
            bh = int(rng.integers(2, max_side + 1))
            bw = int(rng.integers(2, max_side + 1))
            top = int(rng.integers(0, h_grid - bh + 1))
            left = int(rng.integers(0, w_grid - bw + 1))
            t0, l0 = max(top - 1, 0), max(left - 1, 0)
            t1, l1 = min(top + bh + 1, h_grid), min(left + bw + 1, w_grid)
            if not occupied[t0:t1, l0:l1].any():
                occupied[top : top + bh, left : left + bw] = True
                placed.append((int(c), (top, left, top + bh - 1, left + bw - 1)))
                break
    return placed


def _make_sample(cfg, schedule, rng, task_id):
    classes = _draw_classes(cfg, schedule, rng, task_id)
    classes = _apply_cooccur(cfg, schedule, rng, classes)
    placed = _place_objects(cfg, rng, classes)
    noise = rng.normal(0.0, cfg.noise_sigma, size=(cfg.grid_h, cfg.grid_w, cfg.dim_in))
    raw = schedule.background + noise
    for c, (h1, w1, h2, w2) in placed:
        raw[h1 : h2 + 1, w1 : w2 + 1] = (
            schedule.prototypes[c] + noise[h1 : h2 + 1, w1 : w2 + 1]
        )
    full = tuple(sorted({c for c, _ in placed}))
    if task_id is None:
        observed = full
        tid = -1
    else:
        task_set = set(schedule.task_classes[task_id])
        observed = tuple(sorted(set(full) & task_set))
        tid = task_id
    return StreamSample(
        raw=raw,
        observed_labels=observed,
        task_id=tid,
        _full_labels=full,
        _gt_boxes=tuple((c, box) for c, box in placed),
    )


@dataclass
class StreamState:
    cfg: StreamConfig
    schedule: Schedule
    rng: np.random.Generator
    task_id: int = 0
    emitted_in_task: int = 0

    @property
    def remaining_in_task(self):
        return self.cfg.samples_per_task - self.emitted_in_task


def open_stream(cfg, seed=None):
    """Start a stream at task 0. ``seed`` overrides cfg.seed for both schedule
    and sample draws (used by the driver to tie everything to one run seed)."""
    master = cfg.seed if seed is None else seed
    return StreamState(
        cfg=cfg,
        schedule=generate_schedule(cfg, seed=master),
        rng=split_seed(master, _SEED_SAMPLES),
    )


def next_batch(state, batch_size):
    """Up to ``batch_size`` samples of the current task; EndOfTask when spent."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if state.remaining_in_task <= 0:
        raise EndOfTask(f"task {state.task_id} exhausted")
    n = min(batch_size, state.remaining_in_task)
    batch = [
        _make_sample(state.cfg, state.schedule, state.rng, state.task_id)
        for _ in range(n)
    ]
    state.emitted_in_task += n
    return batch


def advance_task(state):
    """Move to the next task; False when the schedule is finished."""
    if state.task_id + 1 >= state.cfg.n_tasks:
        return False
    state.task_id += 1
    state.emitted_in_task = 0
    return True


def sample_pool(cfg, schedule, n, rng):
    """Task-unconditioned samples (all classes reachable) for evaluation."""
    rng = check_rng(rng)
    return [_make_sample(cfg, schedule, rng, None) for _ in range(n)]
