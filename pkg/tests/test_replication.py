import json
import math

import numpy as np
import pytest

from hitl_crystal.dataset import FEATURE_NAMES
from hitl_crystal.replication import (
    ARMS,
    StudyConfig,
    Trajectory,
    build_oracle,
    build_pools,
    run_instance,
    run_study,
    wilson_interval,
    write_study_outputs,
)

MG = FEATURE_NAMES.index("init_mg")


def _planted_pool(n, true_fraction, seed):
    rng = np.random.default_rng(seed)
    pool = rng.random((n, len(FEATURE_NAMES)))
    pool[:, 0] = 10 + 50 * pool[:, 0]
    pool[:, 1] = pool[:, 0] + 5 + 20 * pool[:, 1]
    pool[:, MG] = 100 + 900 * pool[:, MG]
    labels = rng.random(n) < true_fraction
    return pool, labels


class TestWilson:
    def test_interval_contains_point_estimate(self):
        lo, hi = wilson_interval(30, 100)
        assert lo < 0.30 < hi
        assert 0.0 <= lo and hi <= 1.0

    def test_degenerate_counts(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        lo, hi = wilson_interval(0, 50)
        assert lo == pytest.approx(0.0, abs=1e-12) and hi < 0.15


class TestRunInstance:
    def test_budget_one_pool_of_one(self):
        pool = np.array([[30, 60, 30, 5, 300, 300, 150_000, 400, 1000]], dtype=float)
        labels = np.array([True])
        success = labels & (pool[:, MG] > 200)
        queries, ok = run_instance(
            pool, "random", labels, success, budget=1, rng_seed=0, config=StudyConfig()
        )
        assert ok and queries == (0,)

    def test_zero_true_pool_censors_both_policies(self):
        pool, _ = _planted_pool(500, 0.0, seed=1)
        labels = np.zeros(500, dtype=bool)
        for policy in ("random", "ucb"):
            queries, ok = run_instance(
                pool, policy, labels, labels.copy(), budget=15, rng_seed=2,
                config=StudyConfig(),
            )
            assert not ok
            assert len(queries) == 15

    def test_ucb_never_repeats_a_query(self):
        pool, labels = _planted_pool(400, 0.01, seed=3)
        success = labels & (pool[:, MG] > 200)
        queries, _ = run_instance(
            pool, "ucb", labels, success, budget=40, rng_seed=4, config=StudyConfig()
        )
        assert len(queries) == len(set(queries))

    def test_fixed_seed_replays_identical_trajectory(self):
        pool, labels = _planted_pool(600, 0.02, seed=5)
        success = labels & (pool[:, MG] > 200)
        runs = [
            run_instance(pool, "ucb", labels, success, 25, rng_seed=77, config=StudyConfig())
            for _ in range(2)
        ]
        assert runs[0] == runs[1]

    def test_random_policy_matches_hypergeometric_expectation(self):
        n, budget, n_instances = 2000, 10, 400
        pool, _ = _planted_pool(n, 0.0, seed=6)
        rng = np.random.default_rng(7)
        k_true = 100
        success = np.zeros(n, dtype=bool)
        success[rng.choice(n, size=k_true, replace=False)] = True
        success &= pool[:, MG] > 0  # all eligible
        k_true = int(success.sum())
        hits = 0
        for i in range(n_instances):
            _, ok = run_instance(
                pool, "random", success.copy(), success, budget, rng_seed=1000 + i,
                config=StudyConfig(),
            )
            hits += int(ok)
        expected = 1.0 - math.comb(n - k_true, budget) / math.comb(n, budget)
        sigma = math.sqrt(expected * (1 - expected) / n_instances)
        assert abs(hits / n_instances - expected) <= 3 * sigma


class TestPoolsAndOracle:
    def test_informed_pool_is_mg_contaminated(self, spaces):
        pools = build_pools(spaces["F"], spaces["A"], 4000, rng_seed=11)
        assert (pools["informed"][:, MG] > 200).all()
        bounds = spaces["A"].bounds()
        x = pools["uninformed"]
        assert np.all(x >= bounds[:, 0] - 1e-9) and np.all(x <= bounds[:, 1] + 1e-9)
        assert spaces["A"].satisfies(x).all()

    def test_oracle_separates_training_labels(self, records, grade_spec):
        from hitl_crystal.dataset import feature_matrix, grade_labels, training_records
        from hitl_crystal.gp import gpc_predict

        recs = training_records(records)
        oracle = build_oracle(recs, grade_spec, rng_seed=7)
        predicted = gpc_predict(oracle, feature_matrix(recs))
        agreement = (predicted == grade_labels(recs, grade_spec)).mean()
        assert agreement >= 0.95


@pytest.fixture(scope="module")
def small_result(records, grade_spec, spaces):
    config = StudyConfig(n_instances=8, pool_size=8000, base_seed=99)
    return config, run_study(config, records=records, grade_spec=grade_spec, spaces=spaces)


class TestStudy:
    def test_shape_and_counts(self, small_result):
        config, result = small_result
        assert set(result.arm_stats) == {f"{s}/{p}" for s, p in ARMS}
        for stats in result.arm_stats.values():
            assert stats["instances"] == 8
            assert 0.0 <= stats["rate"] <= 1.0
            assert stats["successes"] == round(stats["rate"] * 8)
            assert stats["ci_low"] <= stats["rate"] <= stats["ci_high"]
        assert len(result.trajectories) == 4 * 8

    def test_rates_csv_fixed_order(self, small_result):
        _, result = small_result
        lines = result.rates_csv().strip().splitlines()
        assert lines[0].startswith("space,policy")
        assert [line.split(",")[0:2] for line in lines[1:]] == [
            ["informed", "ucb"],
            ["informed", "random"],
            ["uninformed", "ucb"],
            ["uninformed", "random"],
        ]

    def test_byte_exact_determinism(self, small_result, records, grade_spec, spaces):
        config, result = small_result
        again = run_study(config, records=records, grade_spec=grade_spec, spaces=spaces)
        assert json.dumps(result.to_dict()) == json.dumps(again.to_dict())

    def test_outputs_written(self, small_result, tmp_path):
        _, result = small_result
        write_study_outputs(result, tmp_path)
        assert (tmp_path / "study_result.json").exists()
        assert (tmp_path / "rates.csv").exists()
        assert (tmp_path / "trajectories.csv").exists()
        payload = json.loads((tmp_path / "study_result.json").read_text())
        assert payload["config"]["n_instances"] == 8

    def test_config_round_trip(self, tmp_path):
        config = StudyConfig(n_instances=3, pool_size=500, base_seed=5)
        path = tmp_path / "study.json"
        path.write_text(json.dumps(config.to_dict()))
        assert StudyConfig.from_json(path) == config
