import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lekmc.sumtree import SumTree


class TestBasics:
    def test_single_leaf(self):
        t = SumTree([0.7])
        assert t.total == 0.7
        assert t.find(0.3) == 0

    def test_total_and_updates(self):
        t = SumTree([1.0, 2.0, 3.0])
        assert t.total == 6.0
        t.set(1, 5.0)
        assert t.total == 9.0
        assert t.get(1) == 5.0

    def test_negative_weight_rejected(self):
        t = SumTree([1.0, 2.0])
        with pytest.raises(ValueError):
            t.set(0, -1.0)

    def test_fresh_tree_resync_is_noop(self):
        t = SumTree(np.arange(1, 9, dtype=float))
        leaves = t.leaves()
        assert t.resync() == 0.0
        assert np.array_equal(t.leaves(), leaves)

    def test_find_skips_zero_leaves(self):
        t = SumTree([1.0, 0.0, 0.0, 2.0])
        # x just past the first leaf's span must land on leaf 3, not a zero leaf
        assert t.find(1.0) == 3
        assert t.find(2.9) == 3


class TestDrift:
    def test_drift_after_many_updates(self):
        rng = np.random.default_rng(0)
        t = SumTree(rng.random(64))
        for _ in range(1_000_000):
            t.set(int(rng.integers(64)), float(rng.random()))
        assert t.drift() < 1e-9
        assert t.resync() < 1e-9


class TestSampling:
    def test_empirical_distribution_matches_weights(self):
        rng = np.random.default_rng(42)
        weights = np.array([0.5, 1.5, 3.0, 0.0, 1.0, 2.0, 0.25, 0.75])
        t = SumTree(weights)
        counts = np.zeros(weights.size, dtype=int)
        n = 100_000
        for u in rng.random(n):
            counts[t.find(u * t.total)] += 1
        probs = weights / weights.sum()
        keep = probs > 0
        assert counts[~keep].sum() == 0
        chi2, p = stats.chisquare(counts[keep], n * probs[keep])
        assert p > 0.001

    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=40),
           st.floats(0.0, 1.0, exclude_max=True))
    @settings(max_examples=200, deadline=None)
    def test_find_lands_on_positive_leaf(self, weights, u):
        t = SumTree(weights)
        if t.total <= 0.0:
            return
        leaf = t.find(u * t.total)
        assert 0 <= leaf < t.n_leaves
        assert t.get(leaf) > 0.0

    @given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=32))
    @settings(max_examples=200, deadline=None)
    def test_root_equals_leaf_sum(self, weights):
        t = SumTree(weights)
        assert t.total == pytest.approx(float(np.sum(np.asarray(weights))), rel=1e-12, abs=1e-12)
