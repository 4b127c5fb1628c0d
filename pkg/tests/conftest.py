import pytest

from hitl_crystal.config import CampaignConfig
from hitl_crystal.dataset import load_bundled_dataset, load_bundled_grade_spec
from hitl_crystal.gp import KernelSpec
from hitl_crystal.sampling import load_bundled_spaces


@pytest.fixture(scope="session")
def records():
    return sorted(load_bundled_dataset(), key=lambda r: r.exp_id)


@pytest.fixture(scope="session")
def grade_spec():
    return load_bundled_grade_spec()


@pytest.fixture(scope="session")
def spaces():
    return load_bundled_spaces()


@pytest.fixture(scope="session")
def fast_config():
    """Trimmed config so campaign/service tests stay quick."""
    return CampaignConfig(
        gpr_kernel=KernelSpec(family="matern32", length_scales=(1.0,) * 9),
        gpr_restarts=2,
        gpc_restarts=2,
        report_permutations=40,
        sensitivity_probes=8,
        candidates_per_batch=10,
    )
