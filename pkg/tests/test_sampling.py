import io

import numpy as np
import pytest

from hitl_crystal.dataset import FEATURE_NAMES
from hitl_crystal.errors import InfeasibleSpaceError
from hitl_crystal.sampling import (
    ConditionPoint,
    SurrogateSpaceSpec,
    WalkConfig,
    lhc_sample,
    lhc_sample_matrix,
    point_from_features,
    points_to_matrix,
    random_walk,
    read_points_csv,
    spaces_from_json,
    spaces_to_json,
    write_points_csv,
)


def make_space(n_points=100, min_delta_t=0.0, **overrides):
    dims = {
        "t_cold": (10, 60),
        "t_hot": (62, 80),
        "flow_rate": (10, 100),
        "slurry_concentration": (1, 10),
        "init_ca": (50, 2000),
        "init_k": (50, 1000),
        "init_li": (120_000, 187_000),
        "init_mg": (100, 1000),
        "init_na": (200, 8000),
    }
    dims.update(overrides)
    return SurrogateSpaceSpec(
        label="test", dimensions=dims, n_points=n_points, min_delta_t=min_delta_t
    )


class TestSpec:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError, match="min"):
            make_space(t_cold=(60, 10))

    def test_rejects_missing_dimension(self):
        dims = {k: (0.0, 1.0) for k in FEATURE_NAMES if k != "init_na"}
        with pytest.raises(ValueError, match="init_na"):
            SurrogateSpaceSpec(label="x", dimensions=dims)

    def test_json_round_trip(self, spaces):
        text = spaces_to_json(list(spaces.values()))
        again = spaces_from_json(text)
        assert set(again) == set(spaces)
        assert again["A"].to_dict() == spaces["A"].to_dict()


class TestLhc:
    def test_single_point_inside_bounds(self):
        spec = make_space(n_points=1)
        (point,) = lhc_sample(spec, rng_seed=1)
        assert spec.in_bounds(point.features()[None, :])[0]

    def test_stratification_exact_per_dimension(self):
        spec = make_space(n_points=1000)  # unconstrained: min_delta_t=0, t ranges disjoint
        x = lhc_sample_matrix(spec, rng_seed=3)
        bounds = spec.bounds()
        for j in range(x.shape[1]):
            strata = np.floor(
                (x[:, j] - bounds[j, 0]) / (bounds[j, 1] - bounds[j, 0]) * 1000
            ).astype(int)
            strata = np.clip(strata, 0, 999)
            assert len(set(strata.tolist())) == 1000

    def test_histogram_of_1000_samples_over_10_bins(self):
        spec = make_space(n_points=1000)
        x = lhc_sample_matrix(spec, rng_seed=4)
        counts, _ = np.histogram(x[:, 0], bins=10, range=(10, 60))
        assert counts.tolist() == [100] * 10

    def test_space_a_sample_honors_bounds_and_constraints(self, spaces):
        spec = spaces["A"]
        pts = lhc_sample(spec, rng_seed=5)
        x = points_to_matrix(pts)
        assert x.shape[0] == spec.n_points == 10_000
        assert x[:, 0].min() >= 10 and x[:, 0].max() <= 60
        assert x[:, 1].min() >= 40 and x[:, 1].max() <= 80
        mg = x[:, FEATURE_NAMES.index("init_mg")]
        assert mg.min() >= 100 and mg.max() <= 1000
        assert spec.satisfies(x).all()
        assert (x[:, 1] - x[:, 0] >= spec.min_delta_t).all()

    def test_deterministic_byte_exact(self, spaces):
        spec = spaces["A"]
        buf_a, buf_b = io.StringIO(), io.StringIO()
        write_points_csv(lhc_sample(spec, rng_seed=9), buf_a)
        write_points_csv(lhc_sample(spec, rng_seed=9), buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()
        assert buf_a.getvalue() != ""

    def test_infeasible_space_reports_acceptance_rate(self):
        spec = make_space(t_cold=(50, 60), t_hot=(40, 45), min_delta_t=20.0, n_points=10)
        with pytest.raises(InfeasibleSpaceError) as err:
            lhc_sample(spec, rng_seed=1)
        assert err.value.acceptance_rate is None or err.value.acceptance_rate < 0.01

    def test_points_csv_round_trip(self):
        pts = lhc_sample(make_space(n_points=20), rng_seed=2)
        buf = io.StringIO()
        write_points_csv(pts, buf)
        buf.seek(0)
        again = read_points_csv(buf)
        np.testing.assert_allclose(points_to_matrix(again), points_to_matrix(pts))
        assert all(p.provenance == "lhc" for p in again)


def _anchor(t_cold, t_hot, flow, slurry, ca, k, li, mg, na):
    return point_from_features(
        np.array([t_cold, t_hot, flow, slurry, ca, k, li, mg, na], dtype=float), "manual"
    )


class TestRandomWalk:
    def test_zero_step_returns_anchor_points(self):
        spec = make_space()
        anchors = (
            _anchor(20, 70, 30, 5, 300, 300, 150_000, 400, 1000),
            _anchor(40, 75, 60, 7, 900, 600, 170_000, 700, 4000),
        )
        cfg = WalkConfig(
            anchor_points=anchors, n_walkers=50, step_fraction=0.0, n_output=50
        )
        pts = random_walk(cfg, spec, rng_seed=11)
        anchor_rows = {tuple(a.features()) for a in anchors}
        assert all(tuple(p.features()) in anchor_rows for p in pts)

    def test_single_varying_dimension_stays_in_expanded_hull(self):
        # anchors differ only in flow_rate: hull [10, 20], f=0.25 -> [7.5, 22.5]
        spec = make_space(flow_rate=(1, 100))
        anchors = (
            _anchor(30, 70, 10, 5, 300, 300, 150_000, 400, 1000),
            _anchor(30, 70, 20, 5, 300, 300, 150_000, 400, 1000),
        )
        cfg = WalkConfig(anchor_points=anchors, n_walkers=4000, n_output=3000)
        pts = random_walk(cfg, spec, rng_seed=12)
        flow = points_to_matrix(pts)[:, 2]
        assert flow.min() >= 7.5 - 1e-9
        assert flow.max() <= 22.5 + 1e-9

    def test_outputs_respect_expanded_hull_every_dimension(self, spaces):
        spec = spaces["C"]
        rng = np.random.default_rng(0)
        anchors = tuple(
            point_from_features(row, "manual")
            for row in lhc_sample_matrix(spec, rng_seed=21, n_points=12)
        )
        amat = points_to_matrix(list(anchors))
        lo = amat.min(axis=0) - 0.25 * (amat.max(axis=0) - amat.min(axis=0))
        hi = amat.max(axis=0) + 0.25 * (amat.max(axis=0) - amat.min(axis=0))
        cfg = WalkConfig(anchor_points=anchors, n_walkers=20_000, n_output=5000)
        x = points_to_matrix(random_walk(cfg, spec, rng_seed=22))
        assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)
        assert spec.satisfies(x).all()

    def test_paper_scale_walk_produces_distinct_valid_points(self, spaces):
        spec = spaces["C"]
        anchors = tuple(
            point_from_features(row, "manual")
            for row in lhc_sample_matrix(spec, rng_seed=31, n_points=30)
        )
        cfg = WalkConfig(anchor_points=anchors, n_walkers=100_000, n_output=5000)
        pts = random_walk(cfg, spec, rng_seed=32)
        x = points_to_matrix(pts)
        assert x.shape == (5000, 9)
        assert spec.satisfies(x).all()
        assert len({tuple(row) for row in x}) == 5000

    def test_determinism(self, spaces):
        spec = spaces["C"]
        anchors = tuple(
            point_from_features(row, "manual")
            for row in lhc_sample_matrix(spec, rng_seed=41, n_points=5)
        )
        cfg = WalkConfig(anchor_points=anchors, n_walkers=5000, n_output=1000)
        a = points_to_matrix(random_walk(cfg, spec, rng_seed=42))
        b = points_to_matrix(random_walk(cfg, spec, rng_seed=42))
        np.testing.assert_array_equal(a, b)

    def test_anchor_outside_bounds_rejected(self):
        spec = make_space()
        outside = _anchor(30, 70, 500, 5, 300, 300, 150_000, 400, 1000)
        cfg = WalkConfig(anchor_points=(outside,), n_walkers=10, n_output=5)
        with pytest.raises(ValueError, match="bounds"):
            random_walk(cfg, spec, rng_seed=1)

    def test_walk_config_validation(self):
        anchor = _anchor(30, 70, 30, 5, 300, 300, 150_000, 400, 1000)
        with pytest.raises(ValueError):
            WalkConfig(anchor_points=(anchor,), step_fraction=1.5)
        with pytest.raises(ValueError):
            WalkConfig(anchor_points=(), n_walkers=10)
        with pytest.raises(ValueError):
            WalkConfig(anchor_points=(anchor,), n_walkers=10, n_output=20)
