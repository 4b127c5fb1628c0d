import itertools
import math

import numpy as np
import pytest

from hitl_crystal.analysis import (
    RANDOM_CONTROL_NAME,
    pearson_matrix,
    sensitivity,
    shapley_importance,
)
from hitl_crystal.dataset import (
    FEATURE_NAMES,
    feature_matrix,
    target_vector,
    training_records,
)
from hitl_crystal.forest import forest_fit, forest_predict

# value computed once with the plain covariance formula on the bundled table
FROZEN_T_COLD_FINAL_MG_R = -0.3922768810952955


def _manual_pearson(a, b):
    n = len(a)
    sa, sb = a.sum(), b.sum()
    num = n * (a * b).sum() - sa * sb
    den = math.sqrt(n * (a * a).sum() - sa**2) * math.sqrt(n * (b * b).sum() - sb**2)
    return num / den


class TestPearson:
    def test_column_with_itself(self):
        rng = np.random.default_rng(0)
        col = rng.normal(size=30)
        report = pearson_matrix(np.column_stack([col, col * 1.0]), ["a", "b"])
        assert report.value("a", "a") == 1.0
        assert report.value("a", "b") == pytest.approx(1.0, abs=1e-12)

    def test_perfect_negative_linear(self):
        x = np.linspace(0, 5, 20)
        report = pearson_matrix(np.column_stack([x, -2 * x + 3]), ["x", "y"])
        assert report.value("x", "y") == pytest.approx(-1.0, abs=1e-12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        base = pearson_matrix(np.column_stack([x, y]), ["x", "y"]).value("x", "y")
        scaled = pearson_matrix(
            np.column_stack([3.7 * x + 11, 0.02 * y - 5]), ["x", "y"]
        ).value("x", "y")
        assert scaled == pytest.approx(base, abs=1e-10)

    def test_symmetry_and_diagonal(self):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(40, 5))
        report = pearson_matrix(data, list("abcde"))
        np.testing.assert_allclose(report.matrix, report.matrix.T, atol=1e-12)
        np.testing.assert_allclose(np.diag(report.matrix), 1.0)
        assert not np.isnan(report.matrix).any()

    def test_constant_column_dropped_with_notice(self):
        rng = np.random.default_rng(3)
        data = np.column_stack([rng.normal(size=10), np.full(10, 7.0)])
        report = pearson_matrix(data, ["varying", "fixed"])
        assert report.names == ("varying",)
        assert report.dropped == ("fixed",)

    def test_all_constant_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            pearson_matrix(np.ones((5, 2)), ["a", "b"])

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError, match="3 rows"):
            pearson_matrix(np.random.default_rng(0).normal(size=(2, 2)), ["a", "b"])

    def test_bundled_t_cold_final_mg_is_negative(self, records):
        recs = training_records(records)
        t_cold = feature_matrix(recs)[:, FEATURE_NAMES.index("t_cold")]
        final_mg = target_vector(recs, "final_mg")
        oracle = _manual_pearson(t_cold, final_mg)
        report = pearson_matrix(
            np.column_stack([t_cold, final_mg]), ["t_cold", "final_mg"]
        )
        value = report.value("t_cold", "final_mg")
        assert value < 0
        assert value == pytest.approx(oracle, abs=1e-12)
        assert value == pytest.approx(FROZEN_T_COLD_FINAL_MG_R, abs=1e-9)


def _exact_shapley(fn, background, row):
    """Brute-force Shapley with marginal baselines by subset enumeration."""
    d = background.shape[1]
    values = np.zeros(d)

    def coalition_value(subset):
        hybrids = background.copy()
        for j in subset:
            hybrids[:, j] = row[j]
        return float(np.mean(fn(hybrids)))

    for j in range(d):
        others = [i for i in range(d) if i != j]
        for size in range(d):
            weight = (
                math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
            )
            for subset in itertools.combinations(others, size):
                values[j] += weight * (
                    coalition_value(subset + (j,)) - coalition_value(subset)
                )
    return values


class TestShapley:
    def test_constant_model_gives_zero_values(self):
        rng = np.random.default_rng(0)
        report = shapley_importance(
            lambda pts: np.full(pts.shape[0], 3.3),
            rng.random((30, 3)),
            rng.random((4, 3)),
            n_permutations=50,
            rng_seed=1,
        )
        real = [n for n in report.names if n != RANDOM_CONTROL_NAME]
        for name in real:
            assert report.importance_of(name) == pytest.approx(0.0, abs=1e-12)

    def test_linear_model_matches_analytic_importance(self):
        rng = np.random.default_rng(2)
        background = rng.random((400, 2))
        explain = rng.random((12, 2))
        fn = lambda pts: 3.0 * pts[:, 0]
        report = shapley_importance(
            fn, background, explain, n_permutations=2000, rng_seed=3
        )
        # analytic: phi_1(x) = 3 (x_1 - E[z_1]) for a linear model
        analytic = np.abs(3.0 * (explain[:, 0] - background[:, 0].mean())).mean()
        assert report.importance_of("x0") == pytest.approx(analytic, rel=0.05)
        assert report.importance_of("x1") < 0.05 * report.importance_of("x0")
        assert report.ranks[report.names.index("x0")] == 1

    def test_local_accuracy(self):
        rng = np.random.default_rng(4)
        background = rng.random((60, 3))
        explain = rng.random((5, 3))
        fn = lambda pts: pts[:, 0] ** 2 + 2 * pts[:, 1] - pts[:, 2] * pts[:, 0]
        n_perm = 800
        report = shapley_importance(
            fn, background, explain, n_permutations=n_perm, rng_seed=5,
            add_random_control=False,
        )
        fx = fn(explain)
        # telescoping: per-row sums equal f(x) minus the sampled-baseline mean
        np.testing.assert_allclose(
            report.row_values.sum(axis=1),
            fx - report.sampled_background_mean,
            atol=1e-8,
        )
        # and the sampled baseline converges to the full background mean
        bg_pred = fn(background)
        tol = 3 * bg_pred.std() / math.sqrt(n_perm)
        assert abs(report.sampled_background_mean - bg_pred.mean()) <= tol

    def test_symmetry_of_exchangeable_features(self):
        rng = np.random.default_rng(6)
        background = rng.normal(size=(300, 2))
        # duplicated coordinates isolate estimator symmetry from sample noise
        v = rng.normal(size=10)
        explain = np.column_stack([v, v])
        report = shapley_importance(
            lambda pts: pts[:, 0] + pts[:, 1],
            background,
            explain,
            n_permutations=2000,
            rng_seed=7,
            add_random_control=False,
        )
        a, b = report.importance_of("x0"), report.importance_of("x1")
        assert abs(a - b) / max(a, b) < 0.05

    def test_matches_bruteforce_enumeration_on_four_features(self):
        rng = np.random.default_rng(8)
        background = rng.random((25, 4))
        explain = rng.random((3, 4))

        def fn(pts):
            return pts[:, 0] * pts[:, 1] + 2.0 * pts[:, 2] - 0.5 * pts[:, 3] ** 2

        n_perm = 3000
        report = shapley_importance(
            fn, background, explain, n_permutations=n_perm, rng_seed=9,
            add_random_control=False,
        )
        for row_idx in range(explain.shape[0]):
            exact = _exact_shapley(fn, background, explain[row_idx])
            estimate = report.row_values[row_idx]
            # Monte-Carlo CI: generous 5-sigma guard band per feature
            spread = np.abs(fn(background)).std() + 1.0
            tol = 5 * spread / math.sqrt(n_perm)
            np.testing.assert_allclose(estimate, exact, atol=tol)

    def test_random_control_ranks_at_the_bottom_on_final_mg(self, records):
        recs = training_records(records)
        x = feature_matrix(recs)
        y = target_vector(recs, "final_mg")
        model = forest_fit(x, y, rng_seed=11)
        report = shapley_importance(
            lambda pts: forest_predict(model, pts),
            x,
            x,
            n_permutations=300,
            rng_seed=12,
            feature_names=FEATURE_NAMES,
        )
        control = report.importance_of(RANDOM_CONTROL_NAME)
        assert control <= float(np.median(report.importance))
        assert report.importance_of("init_mg") > control

    def test_half_widths_nonnegative_and_ranks_are_permutation(self):
        rng = np.random.default_rng(13)
        report = shapley_importance(
            lambda pts: pts[:, 0],
            rng.random((40, 3)),
            rng.random((6, 3)),
            n_permutations=100,
            rng_seed=14,
        )
        assert np.all(report.half_widths >= 0)
        assert sorted(report.ranks) == list(range(1, len(report.names) + 1))


class TestSensitivity:
    def test_constant_model_gives_zeros(self):
        rng = np.random.default_rng(0)
        report = sensitivity(
            lambda pts: np.ones(pts.shape[0]), rng.random((10, 3)), np.ones(3)
        )
        np.testing.assert_allclose(report.normalized, 0.0)
        np.testing.assert_allclose(report.responses, 0.0)

    def test_linear_response_ratio(self):
        rng = np.random.default_rng(1)
        points = rng.random((25, 2))
        report = sensitivity(
            lambda pts: 5 * pts[:, 0] + 1 * pts[:, 1], points, np.array([1.0, 1.0])
        )
        np.testing.assert_allclose(report.normalized, [1.0, 0.2], atol=1e-12)
        np.testing.assert_allclose(report.responses, [10.0, 2.0], atol=1e-12)

    def test_ignored_feature_scores_exact_zero(self):
        rng = np.random.default_rng(2)
        report = sensitivity(
            lambda pts: pts[:, 1] ** 2, rng.random((15, 3)), np.ones(3)
        )
        assert report.responses[0] == 0.0
        assert report.responses[2] == 0.0

    def test_top_features_ordering(self):
        rng = np.random.default_rng(3)
        report = sensitivity(
            lambda pts: 2 * pts[:, 2] + pts[:, 0],
            rng.random((20, 3)),
            np.ones(3),
            feature_names=("a", "b", "c"),
        )
        assert report.top_features(2) == ("c", "a")

    def test_rejects_nonpositive_stds(self):
        with pytest.raises(ValueError, match="stds"):
            sensitivity(lambda pts: pts[:, 0], np.ones((4, 2)), np.array([1.0, 0.0]))
