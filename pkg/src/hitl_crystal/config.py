"""Tunable defaults for model fitting, acquisition sizes and the UCB weight.

Values can be overridden from a JSON config file passed to the CLI/service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dataset import DEFAULT_GRADE_SPEC, GradeSpec
from .gp import KernelSpec


@dataclass(frozen=True)
class CampaignConfig:
    grade_spec: GradeSpec = DEFAULT_GRADE_SPEC
    # per-dimension length scales (initialized at the scalar default) let the
    # likelihood stretch out uninformative condition dimensions
    gpr_kernel: KernelSpec = KernelSpec(family="matern32", length_scales=(1.0,) * 9)
    # campaign targets are raw ppm values with real measurement noise, so the
    # regression noise floor is expressed relative to the target variance
    gpr_alpha: float = 0.01
    gpr_alpha_scale: str = "target_variance"
    gpr_restarts: int = 10
    gpc_kernel: KernelSpec = KernelSpec(family="matern32", length_scales=(1.0,) * 9)
    gpc_alpha: float = 0.06
    gpc_restarts: int = 5
    nsga_population: int = 100
    nsga_generations: int = 200
    kappa: float = 2.0
    candidates_per_batch: int = 30
    report_permutations: int = 200
    sensitivity_probes: int = 32
    pareto_method: str = "sorted_lhc"  # or "nsga2"

    def to_dict(self) -> dict:
        return {
            "grade_spec": {
                "max_na": self.grade_spec.max_na,
                "max_mg": self.grade_spec.max_mg,
                "max_ca": self.grade_spec.max_ca,
                "max_k": self.grade_spec.max_k,
                "min_purity_pct": self.grade_spec.min_purity_pct,
                "k_enforced": self.grade_spec.k_enforced,
            },
            "gpr_kernel": self.gpr_kernel.to_dict(),
            "gpr_alpha": self.gpr_alpha,
            "gpr_alpha_scale": self.gpr_alpha_scale,
            "gpr_restarts": self.gpr_restarts,
            "gpc_kernel": self.gpc_kernel.to_dict(),
            "gpc_alpha": self.gpc_alpha,
            "gpc_restarts": self.gpc_restarts,
            "nsga_population": self.nsga_population,
            "nsga_generations": self.nsga_generations,
            "kappa": self.kappa,
            "candidates_per_batch": self.candidates_per_batch,
            "report_permutations": self.report_permutations,
            "sensitivity_probes": self.sensitivity_probes,
            "pareto_method": self.pareto_method,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CampaignConfig":
        base = cls()
        kwargs: dict = {}
        if "grade_spec" in payload:
            kwargs["grade_spec"] = GradeSpec(**payload["grade_spec"])
        for key in ("gpr_kernel", "gpc_kernel"):
            if key in payload:
                kwargs[key] = KernelSpec.from_dict(payload[key])
        for key in (
            "gpr_alpha",
            "gpr_alpha_scale",
            "gpr_restarts",
            "gpc_alpha",
            "gpc_restarts",
            "nsga_population",
            "nsga_generations",
            "kappa",
            "candidates_per_batch",
            "report_permutations",
            "sensitivity_probes",
            "pareto_method",
        ):
            if key in payload:
                kwargs[key] = payload[key]
        return replace(base, **kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "CampaignConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


DEFAULT_CONFIG = CampaignConfig()
