"""Tests for probe-set assessment and the spectral bound harnesses."""

import numpy as np
import pytest

from cuter.assess import (
    AssessmentReport,
    average_fiedler,
    random_weighted_graph,
    rank_sources,
    relaxation_report,
    verify_lemma1,
    verify_theorem1,
)
from cuter.graph import FeatureMap, KernelSpec


def two_patch_map(distance):
    """1x2 grid whose two feature rows sit `distance` apart."""
    feats = np.zeros((2, 3))
    feats[1, 0] = distance
    return FeatureMap(grid_h=1, grid_w=2, vectors=feats)


class TestAverageFiedler:
    def test_two_node_hand_value(self):
        # Two patches at distance 2 under a gaussian kernel with sigma = 2:
        # w = exp(-4 / 8) = exp(-1/2). The 2-node path has lambda_2 = 2w.
        kernel = KernelSpec(kind="gaussian", sigma=2.0)
        report = average_fiedler([two_patch_map(2.0)], kernel)
        assert report.mean_fiedler == pytest.approx(2.0 * np.exp(-0.5), abs=1e-12)
        assert report.sample_count == 1
        assert report.per_sample == pytest.approx((2.0 * np.exp(-0.5),))

    def test_mean_over_probe_set(self):
        kernel = KernelSpec(kind="gaussian", sigma=1.0)
        fms = [two_patch_map(d) for d in (0.5, 1.0, 2.0)]
        report = average_fiedler(fms, kernel)
        expected = np.mean([2.0 * np.exp(-(d * d) / 2.0) for d in (0.5, 1.0, 2.0)])
        assert report.mean_fiedler == pytest.approx(expected, abs=1e-12)
        assert report.sample_count == 3
        assert report.skipped == 0

    def test_mean_is_permutation_invariant(self):
        kernel = KernelSpec(kind="gaussian", sigma=1.0)
        rng = np.random.default_rng(7)
        fms = [
            FeatureMap(grid_h=2, grid_w=2, vectors=rng.normal(size=(4, 5)))
            for _ in range(6)
        ]
        fwd = average_fiedler(fms, kernel)
        rev = average_fiedler(fms[::-1], kernel)
        assert fwd.mean_fiedler == pytest.approx(rev.mean_fiedler, abs=1e-12)
        assert sorted(fwd.per_sample) == pytest.approx(sorted(rev.per_sample))

    def test_degenerate_sample_skipped_not_fatal(self):
        # A zero feature row has no direction, so cosine kernels skip the map.
        kernel = KernelSpec(kind="cosine-continuous")
        good = FeatureMap(grid_h=1, grid_w=2, vectors=np.eye(2))
        bad = FeatureMap(grid_h=1, grid_w=2, vectors=np.array([[1.0, 0.0], [0.0, 0.0]]))
        report = average_fiedler([good, bad, good], kernel)
        assert report.sample_count == 2
        assert report.skipped == 1

    def test_all_degenerate_raises(self):
        kernel = KernelSpec(kind="cosine-continuous")
        bad = FeatureMap(grid_h=1, grid_w=2, vectors=np.zeros((2, 2)))
        with pytest.raises(ValueError):
            average_fiedler([bad], kernel)

    def test_empty_probe_set_raises(self):
        with pytest.raises(ValueError):
            average_fiedler([], KernelSpec(kind="gaussian", sigma=1.0))

    def test_which_flag_changes_normalization(self):
        # K2 with weight w: unnormalized lambda_2 = 2w, normalized = 2.
        kernel = KernelSpec(kind="gaussian", sigma=2.0)
        fm = two_patch_map(2.0)
        unnorm = average_fiedler([fm], kernel, which="unnormalized")
        norm = average_fiedler([fm], kernel, which="normalized")
        assert unnorm.mean_fiedler == pytest.approx(2.0 * np.exp(-0.5))
        assert norm.mean_fiedler == pytest.approx(2.0)

    def test_to_dict_carries_kernel_and_counts(self):
        kernel = KernelSpec(kind="gaussian", sigma=1.5)
        report = average_fiedler([two_patch_map(1.0)], kernel, source_id="ckpt-3")
        d = report.to_dict()
        assert d["source_id"] == "ckpt-3"
        assert d["kernel"] == kernel.to_dict()
        assert d["sample_count"] == 1
        assert d["per_sample"] == list(report.per_sample)


class TestRankSources:
    def test_sorts_ascending_by_mean(self):
        reports = [
            AssessmentReport("b", 0.5, (0.5,), None, 1),
            AssessmentReport("a", 0.1, (0.1,), None, 1),
            AssessmentReport("c", 0.3, (0.3,), None, 1),
        ]
        assert [r.source_id for r in rank_sources(reports)] == ["a", "c", "b"]

    def test_ties_break_by_source_id(self):
        reports = [
            AssessmentReport("z", 0.2, (0.2,), None, 1),
            AssessmentReport("a", 0.2, (0.2,), None, 1),
        ]
        assert [r.source_id for r in rank_sources(reports)] == ["a", "z"]


class TestRandomWeightedGraph:
    def test_symmetric_zero_diagonal_unit_range(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            g = random_weighted_graph(int(rng.integers(2, 9)), rng)
            w = g.adjacency
            assert np.array_equal(w, w.T)
            assert np.all(np.diag(w) == 0.0)
            off = w[~np.eye(w.shape[0], dtype=bool)]
            assert np.all((off >= 0.0) & (off < 1.0))


class TestBoundHarnesses:
    # Small trial counts here; the full-size runs live in the acceptance suite.

    def test_lemma1_no_violations(self):
        report = verify_lemma1(trials=60, n_max=8, seed=3)
        assert report.trials == 60
        assert report.violations == 0
        assert report.max_slack >= 0.0

    def test_lemma1_deterministic(self):
        a = verify_lemma1(trials=20, n_max=6, seed=11)
        b = verify_lemma1(trials=20, n_max=6, seed=11)
        assert a == b

    def test_theorem1_no_violations_two_blocks(self):
        report = verify_theorem1(trials=60, blocks=2, n=10, seed=5)
        assert report.violations == 0
        assert report.max_slack >= 0.0

    def test_theorem1_three_blocks(self):
        report = verify_theorem1(trials=40, blocks=3, n=12, seed=5)
        assert report.violations == 0

    def test_theorem1_rejects_single_block(self):
        with pytest.raises(ValueError):
            verify_theorem1(trials=1, blocks=1)

    def test_theorem1_rejects_undersized_blocks(self):
        # n = 12 over 7 blocks leaves singleton blocks.
        with pytest.raises(ValueError):
            verify_theorem1(trials=1, blocks=7, n=12)

    def test_relaxation_never_beats_exact(self):
        report = relaxation_report(trials=40, n_max=8, seed=2)
        assert report["worst_ratio"] >= 1.0 - 1e-12
        assert report["mean_ratio"] >= 1.0 - 1e-12
        assert 0 <= report["within_factor"] <= report["trials"]
        assert report["fraction"] == report["within_factor"] / report["trials"]

    def test_relaxation_deterministic(self):
        assert relaxation_report(trials=15, seed=9) == relaxation_report(
            trials=15, seed=9
        )
