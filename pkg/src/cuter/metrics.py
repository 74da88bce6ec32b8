"""Multi-label ranking metrics and box-overlap scoring.

Average precision here is the plain, non-interpolated kind: the mean of
precision-at-rank over the ranks that hold positives, with ties broken by
stable index order so results are reproducible.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class MultiLabelScores(NamedTuple):
    map: float
    cf1: float
    of1: float
    scored_classes: int


def average_precision(scores, truths):
    """Non-interpolated AP of one ranking. Requires at least one positive."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError("scores and truths must be flat arrays of equal length")
    pos_total = int(np.count_nonzero(t))
    if pos_total == 0:
        raise ValueError("average precision undefined without positives")
    order = np.argsort(-s, kind="stable")
    hits = np.asarray(t, dtype=bool)[order]
    ranks = np.nonzero(hits)[0] + 1
    precisions = np.cumsum(hits)[hits.astype(bool)] / ranks
    return float(precisions.mean())


def map_cf1_of1(scores, truths, threshold=0.5):
    """mAP / macro-F1 / micro-F1 of a multi-label score matrix.

    ``scores`` and ``truths`` are (n_samples, n_classes). Classes without any
    positive sample are skipped by mAP (their count is reported via
    ``scored_classes``); they still participate in CF1/OF1, where an empty
    class scores F1 = 0 unless it is also never predicted.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths, dtype=bool)
    if s.shape != t.shape or s.ndim != 2:
        raise ValueError("scores and truths must be (n_samples, n_classes)")
    n, c = s.shape
    aps = [
        average_precision(s[:, k], t[:, k]) for k in range(c) if t[:, k].any()
    ]
    mean_ap = float(np.mean(aps)) if aps else 0.0

    pred = s >= threshold
    tp = (pred & t).sum(axis=0).astype(np.float64)
    fp = (pred & ~t).sum(axis=0).astype(np.float64)
    fn = (~pred & t).sum(axis=0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(2 * tp + fp + fn > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    cf1 = float(f1.mean()) if c else 0.0
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    of1 = float(2 * tp.sum() / denom) if denom > 0 else 0.0
    return MultiLabelScores(mean_ap, cf1, of1, len(aps))


def box_iou(a, b):
    """IoU of two inclusive patch boxes (h1, w1, h2, w2), by cell counting."""
    ah1, aw1, ah2, aw2 = a
    bh1, bw1, bh2, bw2 = b
    if ah2 < ah1 or aw2 < aw1 or bh2 < bh1 or bw2 < bw1:
        raise ValueError("boxes must satisfy h1 <= h2 and w1 <= w2")
    ih = min(ah2, bh2) - max(ah1, bh1) + 1
    iw = min(aw2, bw2) - max(aw1, bw1) + 1
    inter = max(0, ih) * max(0, iw)
    area_a = (ah2 - ah1 + 1) * (aw2 - aw1 + 1)
    area_b = (bh2 - bh1 + 1) * (bw2 - bw1 + 1)
    return inter / (area_a + area_b - inter)


def greedy_box_matches(pred_boxes, gt_boxes, iou_threshold=0.5):
    """Greedy one-to-one matching by descending IoU. Returns matched pairs.

    Pairs below ``iou_threshold`` never match. Ties are broken by (pred
    index, gt index), so the matching is deterministic.
    """
    pairs = []
    for i, p in enumerate(pred_boxes):
        for j, q in enumerate(gt_boxes):
            iou = box_iou(p, q)
            if iou >= iou_threshold:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_p, used_g, matches = set(), set(), []
    for neg_iou, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, -neg_iou))
    return matches


def ap50(pred_boxes, gt_boxes):
    """Class-agnostic precision at IoU 0.5 under greedy matching.

    matches / n_predicted; 1.0 when both sets are empty, 0.0 when exactly one
    is.
    """
    if not pred_boxes and not gt_boxes:
        return 1.0
    if not pred_boxes or not gt_boxes:
        return 0.0
    matches = greedy_box_matches(pred_boxes, gt_boxes, iou_threshold=0.5)
    return len(matches) / len(pred_boxes)


def aggregate(per_task_records):
    """(average-over-tasks, last) of per-task metric dicts, keyed identically."""
    records = list(per_task_records)
    if not records:
        raise ValueError("no per-task records to aggregate")
    keys = records[0].keys()
    for r in records:
        if r.keys() != keys:
            raise ValueError("per-task records must share the same metric keys")
    avg = {k: float(np.mean([r[k] for r in records])) for k in keys}
    last = {k: float(records[-1][k]) for k in keys}
    return avg, last
