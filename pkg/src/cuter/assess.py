"""Model assessment by patch-graph connectivity, plus spectral-bound harnesses.

A feature extractor that separates objects from background produces patch
graphs that are nearly block diagonal, i.e. have small Fiedler values. The
assessor averages the Fiedler value over a probe set of feature maps and
ranks candidate sources (models / layers / checkpoints) by it: lower means
more localizable structure.

The two ``verify_*`` functions are executable checks of the spectral bounds
this rests on: the Cheeger sandwich lambda_2/2 <= h <= sqrt(2*Delta*lambda_2)
and the block-diagonal perturbation bound lambda_2 <= ||eps||_2 + ||eps||_inf.
Both are theorems, so any reported violation indicates an implementation bug.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateFeatureError
from .graph import (
    PatchGraph,
    build_adjacency,
    cheeger_constant_bruteforce,
    fiedler_value,
    max_degree,
)
from .linalg import inf_norm, spectral_norm


@dataclass(frozen=True)
class AssessmentReport:
    source_id: str
    mean_fiedler: float
    per_sample: tuple
    kernel: object
    sample_count: int
    skipped: int = 0

    def to_dict(self):
        return {
            "source_id": self.source_id,
            "mean_fiedler": self.mean_fiedler,
            "per_sample": list(self.per_sample),
            "kernel": self.kernel.to_dict(),
            "sample_count": self.sample_count,
            "skipped": self.skipped,
        }


@dataclass(frozen=True)
class BoundTrialReport:
    """Outcome of a randomized bound check.

    ``max_slack`` is the *tightest* margin observed across trials (the
    smallest distance between the measured quantity and the bound), so small
    positive values mean the bound was nearly active somewhere.
    """

    trials: int
    violations: int
    max_slack: float
    resamples: int = 0

    def to_dict(self):
        return {
            "trials": self.trials,
            "violations": self.violations,
            "max_slack": self.max_slack,
            "resamples": self.resamples,
        }


def average_fiedler(feature_maps, kernel, source_id="", which="unnormalized"):
    """Mean Fiedler value of the patch graphs of a probe set.

    Samples whose features are degenerate under the kernel (zero-norm rows
    with a cosine kernel) are skipped and counted rather than failing the
    whole probe set.
    """
    feature_maps = list(feature_maps)
    if not feature_maps:
        raise ValueError("no feature maps to assess")
    values = []
    skipped = 0
    for fm in feature_maps:
        try:
            g = build_adjacency(fm, kernel)
        except DegenerateFeatureError:
            skipped += 1
            continue
        values.append(fiedler_value(g, which=which))
    if not values:
        raise ValueError("every probe sample was degenerate under this kernel")
    return AssessmentReport(
        source_id=source_id,
        mean_fiedler=float(np.mean(values)),
        per_sample=tuple(values),
        kernel=kernel,
        sample_count=len(values),
        skipped=skipped,
    )


def rank_sources(reports):
    """Sort assessment reports ascending by mean Fiedler value (ties by id)."""
    return sorted(reports, key=lambda r: (r.mean_fiedler, r.source_id))


def _trial_rng(seed, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def random_weighted_graph(n, rng):
    """Complete graph with i.i.d. uniform(0,1) weights, symmetrized, zero diagonal."""
    w = rng.uniform(0.0, 1.0, size=(n, n))
    w = np.triu(w, k=1)
    return PatchGraph(w + w.T)


def verify_lemma1(trials=200, n_max=10, seed=0):
    """Check lambda_2/2 <= h(G) <= sqrt(2 * Delta * lambda_2) on random graphs.

    lambda_2 is the unnormalized Fiedler value, h the exact (brute-force)
    Cheeger constant, Delta the maximum weighted degree.
    """
    violations = 0
    tightest = np.inf
    for t in range(trials):
        rng = _trial_rng(seed, t)
        n = int(rng.integers(2, n_max + 1))
        g = random_weighted_graph(n, rng)
        lam2 = fiedler_value(g, which="unnormalized")
        h = cheeger_constant_bruteforce(g)
        upper = float(np.sqrt(2.0 * max_degree(g) * lam2))
        slack = min(h - lam2 / 2.0, upper - h)
        tightest = min(tightest, slack)
        if slack < 0.0:
            violations += 1
    return BoundTrialReport(trials, violations, float(tightest))


def _block_sizes(n, blocks):
    base = n // blocks
    sizes = [base] * blocks
    for i in range(n - base * blocks):
        sizes[i] += 1
    return sizes


def verify_theorem1(trials=200, blocks=2, n=12, noise_scale=0.05, seed=0):
    """Check lambda_2(L(A* + eps)) <= ||eps||_2 + ||eps||_inf on block graphs.

    A* is block diagonal (within-block weights uniform(0.02, 1)); eps is
    symmetric with zero diagonal, uniform(0, s) across blocks and
    uniform(-s, s) within. Draws that would push A below 0 are resampled and
    counted.
    """
    if blocks < 2:
        raise ValueError("need at least 2 blocks for a vanishing base Fiedler value")
    sizes = _block_sizes(n, blocks)
    if min(sizes) < 2:
        raise ValueError("every block needs at least 2 nodes")
    labels = np.repeat(np.arange(blocks), sizes)
    same_block = labels[:, None] == labels[None, :]
    violations = 0
    resamples = 0
    tightest = np.inf
    for t in range(trials):
        rng = _trial_rng(seed, t)
        base = rng.uniform(0.02, 1.0, size=(n, n))
        base = np.triu(base, k=1)
        base = (base + base.T) * same_block
        np.fill_diagonal(base, 0.0)
        for attempt in range(1000):
            eps = np.where(
                same_block,
                rng.uniform(-noise_scale, noise_scale, size=(n, n)),
                rng.uniform(0.0, noise_scale, size=(n, n)),
            )
            eps = np.triu(eps, k=1)
            eps = eps + eps.T
            a = base + eps
            if a.min() >= 0.0:
                break
            resamples += 1
        else:
            raise RuntimeError("could not draw feasible noise in 1000 attempts")
        g = PatchGraph(a)
        lam2 = fiedler_value(g, which="unnormalized")
        bound = spectral_norm(eps) + inf_norm(eps)
        slack = bound - lam2
        tightest = min(tightest, slack)
        if slack < 0.0:
            violations += 1
    return BoundTrialReport(trials, violations, float(tightest), resamples)


def relaxation_report(trials=100, n_max=10, seed=0, factor=1.2):
    """Spectral bipartition energy vs the exact minimum on random graphs.

    Returns a dict with the fraction of trials where the relaxed cut lands
    within ``factor`` of the brute-force optimum, plus the worst ratio seen.
    """
    from .cut import brute_force_ncut, ncut_bipartition

    within = 0
    worst = 1.0
    ratios = []
    for t in range(trials):
        rng = _trial_rng(seed, t)
        n = int(rng.integers(4, n_max + 1))
        g = random_weighted_graph(n, rng)
        relaxed = ncut_bipartition(g).energy
        exact = brute_force_ncut(g).energy
        ratio = relaxed / exact if exact > 0 else 1.0
        ratios.append(ratio)
        worst = max(worst, ratio)
        if ratio <= factor + 1e-12:
            within += 1
    return {
        "trials": trials,
        "factor": factor,
        "within_factor": within,
        "fraction": within / trials,
        "worst_ratio": float(worst),
        "mean_ratio": float(np.mean(ratios)),
    }
