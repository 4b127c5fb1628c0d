import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitl_crystal.dataset import feature_matrix, target_vector, training_records
from hitl_crystal.forest import (
    ForestHyperparams,
    forest_fit,
    forest_predict,
    oob_error,
)


class TestTrees:
    def test_constant_target_predicts_constant(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20, 3))
        model = forest_fit(x, np.full(20, 2.5), ForestHyperparams(n_trees=20), rng_seed=1)
        np.testing.assert_allclose(forest_predict(model, rng.normal(size=(10, 3))), 2.5)

    def test_single_depth_one_tree_is_step_function(self):
        x = np.array([[0.0], [1.0]])
        y = np.array([0.0, 1.0])
        model = forest_fit(
            x, y, ForestHyperparams(n_trees=1, max_depth=1), rng_seed=0, bootstrap=False
        )
        # exhaustive enumeration: the only admissible split lies in (0, 1)
        queries = np.array([[-1.0], [0.2], [0.45], [0.9], [2.0]])
        np.testing.assert_allclose(forest_predict(model, queries), [0, 0, 0, 1, 1])
        tree = model.trees[0]
        assert tree.feature[0] == 0
        assert 0.0 < tree.threshold[0] < 1.0

    def test_split_reduces_variance_on_known_function(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, size=(60, 2))
        y = np.where(x[:, 1] > 0.5, 10.0, -10.0)
        model = forest_fit(
            x, y, ForestHyperparams(n_trees=1, max_depth=1), rng_seed=0, bootstrap=False
        )
        tree = model.trees[0]
        assert tree.feature[0] == 1
        assert abs(tree.threshold[0] - 0.5) < 0.2

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = forest_fit(
            x, y, ForestHyperparams(n_trees=10, min_samples_leaf=5), rng_seed=3
        )
        for tree, rows in zip(model.trees, model.bootstrap_indices):
            # count training rows reaching each leaf
            leaf_idx = np.zeros(len(rows), dtype=int)
            pts = x[rows]
            idx = np.zeros(pts.shape[0], dtype=np.int64)
            for _ in range(tree.depth + 1):
                feat = tree.feature[idx]
                active = feat >= 0
                if not active.any():
                    break
                cols = np.where(active, feat, 0)
                go_left = pts[np.arange(pts.shape[0]), cols] <= tree.threshold[idx]
                idx = np.where(active, np.where(go_left, tree.left[idx], tree.right[idx]), idx)
            counts = np.bincount(idx)
            assert counts[counts > 0].min() >= 5

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_predictions_bounded_by_target_range(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(25, 3))
        y = rng.normal(size=25) * rng.uniform(0.1, 50)
        model = forest_fit(x, y, ForestHyperparams(n_trees=15, max_depth=4), rng_seed=seed)
        preds = forest_predict(model, rng.normal(size=(40, 3)))
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12

    def test_determinism_per_seed(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        a = forest_fit(x, y, ForestHyperparams(n_trees=25), rng_seed=9)
        b = forest_fit(x, y, ForestHyperparams(n_trees=25), rng_seed=9)
        query = rng.normal(size=(15, 2))
        np.testing.assert_array_equal(forest_predict(a, query), forest_predict(b, query))


class TestSearch:
    def test_tuned_oob_beats_untuned_baseline_on_final_mg(self, records):
        recs = training_records(records)
        x = feature_matrix(recs)
        y = target_vector(recs, "final_mg")
        baseline = forest_fit(x, y, ForestHyperparams(n_trees=10), rng_seed=100)
        tuned = forest_fit(x, y, rng_seed=100)  # random search over the grid
        assert oob_error(tuned, x, y) <= oob_error(baseline, x, y)

    def test_search_is_deterministic(self, records):
        recs = training_records(records)[:30]
        x = feature_matrix(recs)
        y = target_vector(recs, "final_mg")
        a = forest_fit(x, y, rng_seed=5, n_search_candidates=6)
        b = forest_fit(x, y, rng_seed=5, n_search_candidates=6)
        assert a.hyperparams == b.hyperparams

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            forest_fit(np.empty((0, 2)), np.empty(0), ForestHyperparams())
