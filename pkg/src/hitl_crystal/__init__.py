"""Human-in-the-loop active learning engine for continuous lithium-carbonate
crystallization campaigns: surrogate-space sampling, GP surrogates,
statistical diagnostics, multi-strategy acquisition, an event-sourced
campaign service, and a seeded policy-comparison study."""

from .dataset import (
    Composition,
    ExperimentRecord,
    FeatureScaler,
    GradeSpec,
    ProcessControls,
    apply_scaler,
    fit_scaler,
    label_grade,
    load_bundled_dataset,
    load_bundled_grade_spec,
    load_dataset,
    save_dataset,
)
from .sampling import (
    ConditionPoint,
    SurrogateSpaceSpec,
    WalkConfig,
    lhc_sample,
    load_bundled_spaces,
    random_walk,
)
from .gp import (
    GpClassifier,
    GpModel,
    KernelSpec,
    gpc_fit,
    gpc_predict_proba,
    gpr_fit,
    gpr_predict,
    kernel_eval,
)
from .forest import ForestHyperparams, ForestModel, forest_fit, forest_predict, oob_error
from .analysis import pearson_matrix, sensitivity, shapley_importance
from .acquisition import (
    Candidate,
    CandidateBatch,
    ParetoFront,
    boundary_midpoints,
    non_dominated_sort,
    nsga2,
    nsga2_pareto,
    pareto_candidates,
    ucb_scores,
)
from .campaign import (
    CampaignState,
    ingest_result,
    load_state,
    new_campaign,
    replay_events,
    review_candidate,
    run_iteration,
    save_state,
    set_active_space,
    set_phase,
)
from .config import CampaignConfig, DEFAULT_CONFIG
from .replication import StudyConfig, StudyResult, build_oracle, build_pools, run_instance, run_study

__version__ = "0.1.0"
