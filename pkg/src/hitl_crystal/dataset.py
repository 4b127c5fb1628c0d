"""Domain types and CSV ingestion for crystallization experiment records.

A record holds the process controls of one continuous-crystallization run,
the elemental composition of the feed and of the recovered product, an
operator quality score (1-3), and an exclusion flag for runs that failed
reproducibility checks. Excluded records are kept for auditability but are
filtered out of every model-training path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import CsvParseError, DegenerateFeatureError, IntegrityError

# Li mass fraction of pure Li2CO3, in ppm. Used only for a consistency
# warning: measured Li can exceed it through instrument noise, so purity is
# always stored, never derived.
LI_PPM_FULL_PURITY = 187_880.0

PPM_MAX = 1_000_000.0

FEATURE_NAMES: tuple[str, ...] = (
    "t_cold",
    "t_hot",
    "flow_rate",
    "slurry_concentration",
    "init_ca",
    "init_k",
    "init_li",
    "init_mg",
    "init_na",
)

TARGET_NAMES: tuple[str, ...] = (
    "final_ca",
    "final_k",
    "final_li",
    "final_mg",
    "final_na",
    "final_purity",
)

CSV_COLUMNS: tuple[str, ...] = (
    "exp_id",
    "t_cold_c",
    "t_hot_c",
    "delta_t_c",
    "flow_rate_ml_min",
    "slurry_conc_g_100ml",
    "initial_ca_ppm",
    "initial_k_ppm",
    "initial_li_ppm",
    "initial_mg_ppm",
    "initial_na_ppm",
    "initial_purity_pct",
    "final_ca_ppm",
    "final_k_ppm",
    "final_li_ppm",
    "final_mg_ppm",
    "final_na_ppm",
    "final_purity_pct",
)

CSV_OPTIONAL_COLUMNS: tuple[str, ...] = ("quality_score", "excluded", "notes")


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ProcessControls:
    """Operational settings of one run: reactor temperatures (degC), liquid
    flow rate (mL/min) and slurry concentration (g solid / 100 mL)."""

    t_cold: float
    t_hot: float
    flow_rate: float
    slurry_concentration: float

    def __post_init__(self):
        for name in ("t_cold", "t_hot", "flow_rate", "slurry_concentration"):
            _require_finite(name, getattr(self, name))
        if self.t_cold < 0:
            raise ValueError(f"t_cold must be >= 0, got {self.t_cold}")
        for name in ("t_hot", "flow_rate", "slurry_concentration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.t_hot <= self.t_cold:
            raise ValueError(
                f"t_hot ({self.t_hot}) must exceed t_cold ({self.t_cold})"
            )

    @property
    def delta_t(self) -> float:
        return self.t_hot - self.t_cold


@dataclass(frozen=True)
class Composition:
    """Elemental concentrations in ppm (mass fraction x 1e6) plus optional
    Li2CO3 purity in mass percent."""

    ca: float
    k: float
    li: float
    mg: float
    na: float
    purity_pct: float | None = None

    def __post_init__(self):
        for name in ("ca", "k", "li", "mg", "na"):
            value = _require_finite(name, getattr(self, name))
            if not 0.0 <= value <= PPM_MAX:
                raise ValueError(f"{name} must be in [0, 1e6] ppm, got {value}")
        total = self.element_sum
        if total > PPM_MAX * (1 + 1e-12):
            raise ValueError(f"element sum {total} ppm exceeds 1e6")
        if self.purity_pct is not None:
            p = _require_finite("purity_pct", self.purity_pct)
            if not 0.0 <= p <= 100.0:
                raise ValueError(f"purity_pct must be in [0, 100], got {p}")

    @property
    def element_sum(self) -> float:
        return self.ca + self.k + self.li + self.mg + self.na


@dataclass(frozen=True)
class ExperimentRecord:
    """One crystallization run with feed and product compositions."""

    exp_id: int
    controls: ProcessControls
    initial: Composition
    final: Composition
    quality_score: int = 1
    excluded: bool = False
    notes: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.exp_id) != self.exp_id or self.exp_id <= 0:
            raise ValueError(f"exp_id must be a positive integer, got {self.exp_id}")
        if self.quality_score not in (1, 2, 3):
            raise ValueError(f"quality_score must be 1, 2 or 3, got {self.quality_score}")
        if self.final.purity_pct is None:
            raise ValueError("final composition must carry purity_pct")


@dataclass(frozen=True)
class GradeSpec:
    """Battery-grade acceptance thresholds for the final product.

    K is tracked but not enforced by default: potassium washes out in
    post-processing, so runs over the K ceiling still count as successes
    unless ``k_enforced`` is set.
    """

    max_na: float = 500.0
    max_mg: float = 80.0
    max_ca: float = 150.0
    max_k: float = 100.0
    min_purity_pct: float = 99.5
    k_enforced: bool = False

    def __post_init__(self):
        for name in ("max_na", "max_mg", "max_ca", "max_k", "min_purity_pct"):
            if _require_finite(name, getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be > 0")


DEFAULT_GRADE_SPEC = GradeSpec()


def label_grade(final: Composition, spec: GradeSpec = DEFAULT_GRADE_SPEC) -> bool:
    """True iff the product composition meets every enforced threshold."""
    if final.purity_pct is None:
        raise ValueError("cannot grade a composition without purity_pct")
    ok = (
        final.mg <= spec.max_mg
        and final.na <= spec.max_na
        and final.ca <= spec.max_ca
        and final.purity_pct >= spec.min_purity_pct
    )
    if spec.k_enforced:
        ok = ok and final.k <= spec.max_k
    return ok


# ---------------------------------------------------------------------------
# Standard scaling


@dataclass(eq=False)
class FeatureScaler:
    """Per-column mean/std computed on a fit matrix (population std)."""

    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D arrays of equal length")
        if np.any(self.std <= 0):
            bad = int(np.argmax(self.std <= 0))
            raise DegenerateFeatureError(
                f"scaler std must be > 0 (column {self._col_name(bad)})", column=bad
            )
        self.mean.setflags(write=False)
        self.std.setflags(write=False)

    def _col_name(self, idx: int) -> str:
        if self.names is not None and idx < len(self.names):
            return self.names[idx]
        return str(idx)

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        return (matrix - self.mean) / self.std

    def inverse(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        return matrix * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "names": list(self.names) if self.names else None,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureScaler":
        names = payload.get("names")
        return cls(
            mean=np.array(payload["mean"], dtype=float),
            std=np.array(payload["std"], dtype=float),
            names=tuple(names) if names else None,
        )

    @classmethod
    def identity(cls, n_features: int, names: tuple[str, ...] | None = None) -> "FeatureScaler":
        return cls(mean=np.zeros(n_features), std=np.ones(n_features), names=names)


def fit_scaler(matrix: np.ndarray, names: Sequence[str] | None = None) -> FeatureScaler:
    """Fit a standard scaler; rejects constant columns by name."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population std (ddof=0)
    if np.any(std == 0):
        bad = int(np.argmax(std == 0))
        label = names[bad] if names is not None else str(bad)
        raise DegenerateFeatureError(f"constant feature column: {label}", column=label)
    return FeatureScaler(mean=mean, std=std, names=tuple(names) if names else None)


def apply_scaler(scaler: FeatureScaler, matrix: np.ndarray) -> np.ndarray:
    return scaler.transform(matrix)


# ---------------------------------------------------------------------------
# Feature/target extraction


def record_features(record: ExperimentRecord) -> np.ndarray:
    c, i = record.controls, record.initial
    return np.array(
        [c.t_cold, c.t_hot, c.flow_rate, c.slurry_concentration, i.ca, i.k, i.li, i.mg, i.na]
    )


def feature_matrix(records: Sequence[ExperimentRecord]) -> np.ndarray:
    return np.array([record_features(r) for r in records]).reshape(len(records), len(FEATURE_NAMES))


def target_vector(records: Sequence[ExperimentRecord], target: str) -> np.ndarray:
    if target not in TARGET_NAMES:
        raise ValueError(f"unknown target {target!r}; expected one of {TARGET_NAMES}")
    attr = target.removeprefix("final_")
    if attr == "purity":
        return np.array([r.final.purity_pct for r in records], dtype=float)
    return np.array([getattr(r.final, attr) for r in records], dtype=float)


def training_records(records: Iterable[ExperimentRecord]) -> list[ExperimentRecord]:
    """Records eligible for model training (reproducibility failures dropped)."""
    return [r for r in records if not r.excluded]


def grade_labels(
    records: Sequence[ExperimentRecord], spec: GradeSpec = DEFAULT_GRADE_SPEC
) -> np.ndarray:
    return np.array([label_grade(r.final, spec) for r in records], dtype=bool)


# ---------------------------------------------------------------------------
# CSV ingestion / serialization


def _parse_float(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text.endswith("%"):
        text = text[:-1].strip()
    try:
        value = float(text)
    except ValueError:
        raise CsvParseError(
            f"row {row}: column {column!r}: cannot parse {raw!r} as a number",
            row=row,
            column=column,
        ) from None
    if not math.isfinite(value):
        raise CsvParseError(
            f"row {row}: column {column!r}: non-finite value {raw!r}", row=row, column=column
        )
    return value


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in {"true", "1", "yes", "y"}


def load_dataset(csv_source: str | Path | TextIO) -> list[ExperimentRecord]:
    """Load experiment records from a CSV file (path or open text stream)."""
    if isinstance(csv_source, (str, Path)):
        with open(csv_source, "r", encoding="utf-8", newline="") as handle:
            return _load_from_stream(handle)
    return _load_from_stream(csv_source)


def _load_from_stream(stream: TextIO) -> list[ExperimentRecord]:
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise IntegrityError(f"CSV header missing required columns: {missing}")

    records: list[ExperimentRecord] = []
    seen_ids: set[int] = set()
    for idx, row in enumerate(reader, start=2):  # header is line 1
        raw_id = (row.get("exp_id") or "").strip()
        try:
            exp_id = int(raw_id)
        except ValueError:
            raise CsvParseError(
                f"row {idx}: column 'exp_id': cannot parse {raw_id!r} as an integer",
                row=idx,
                column="exp_id",
            ) from None
        if exp_id in seen_ids:
            raise IntegrityError(f"duplicate exp_id {exp_id} at row {idx}")
        seen_ids.add(exp_id)

        def num(column: str) -> float:
            return _parse_float(row.get(column) or "", idx, column)

        controls = ProcessControls(
            t_cold=num("t_cold_c"),
            t_hot=num("t_hot_c"),
            flow_rate=num("flow_rate_ml_min"),
            slurry_concentration=num("slurry_conc_g_100ml"),
        )
        initial = Composition(
            ca=num("initial_ca_ppm"),
            k=num("initial_k_ppm"),
            li=num("initial_li_ppm"),
            mg=num("initial_mg_ppm"),
            na=num("initial_na_ppm"),
            purity_pct=num("initial_purity_pct"),
        )
        final = Composition(
            ca=num("final_ca_ppm"),
            k=num("final_k_ppm"),
            li=num("final_li_ppm"),
            mg=num("final_mg_ppm"),
            na=num("final_na_ppm"),
            purity_pct=num("final_purity_pct"),
        )

        warnings: list[str] = []
        delta_t = num("delta_t_c")
        if abs(delta_t - controls.delta_t) > 0.5:
            warnings.append(
                f"delta_t column ({delta_t}) disagrees with t_hot - t_cold "
                f"({controls.delta_t:.2f}) by more than 0.5 degC"
            )
        expected_li = final.purity_pct / 100.0 * LI_PPM_FULL_PURITY
        if expected_li > 0 and abs(final.li - expected_li) / expected_li > 0.05:
            warnings.append(
                f"final Li ({final.li} ppm) deviates >5% from the stoichiometric "
                f"value implied by purity ({expected_li:.0f} ppm)"
            )

        quality_raw = (row.get("quality_score") or "").strip()
        quality = int(float(quality_raw)) if quality_raw else 1
        records.append(
            ExperimentRecord(
                exp_id=exp_id,
                controls=controls,
                initial=initial,
                final=final,
                quality_score=quality,
                excluded=_parse_bool(row.get("excluded") or ""),
                notes=(row.get("notes") or "").strip(),
                warnings=tuple(warnings),
            )
        )
    return records


def save_dataset(records: Sequence[ExperimentRecord], dest: str | Path | TextIO) -> None:
    """Write records as canonical CSV (full float precision, round-trip safe)."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as handle:
            _save_to_stream(records, handle)
    else:
        _save_to_stream(records, dest)


def _save_to_stream(records: Sequence[ExperimentRecord], stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(CSV_COLUMNS + CSV_OPTIONAL_COLUMNS)
    for r in records:
        c, i, f = r.controls, r.initial, r.final
        writer.writerow(
            [
                r.exp_id,
                repr(c.t_cold),
                repr(c.t_hot),
                repr(c.delta_t),
                repr(c.flow_rate),
                repr(c.slurry_concentration),
                repr(i.ca),
                repr(i.k),
                repr(i.li),
                repr(i.mg),
                repr(i.na),
                "" if i.purity_pct is None else repr(i.purity_pct),
                repr(f.ca),
                repr(f.k),
                repr(f.li),
                repr(f.mg),
                repr(f.na),
                repr(f.purity_pct),
                r.quality_score,
                "true" if r.excluded else "false",
                r.notes,
            ]
        )


def dataset_to_csv_string(records: Sequence[ExperimentRecord]) -> str:
    buffer = io.StringIO()
    _save_to_stream(records, buffer)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Dict round-trips (campaign persistence, HTTP payloads)


def controls_to_dict(c: ProcessControls) -> dict:
    return {
        "t_cold": c.t_cold,
        "t_hot": c.t_hot,
        "flow_rate": c.flow_rate,
        "slurry_concentration": c.slurry_concentration,
    }


def composition_to_dict(c: Composition) -> dict:
    return {"ca": c.ca, "k": c.k, "li": c.li, "mg": c.mg, "na": c.na, "purity_pct": c.purity_pct}


def record_to_dict(r: ExperimentRecord) -> dict:
    return {
        "exp_id": r.exp_id,
        "controls": controls_to_dict(r.controls),
        "initial": composition_to_dict(r.initial),
        "final": composition_to_dict(r.final),
        "quality_score": r.quality_score,
        "excluded": r.excluded,
        "notes": r.notes,
        "warnings": list(r.warnings),
    }


def record_from_dict(payload: dict) -> ExperimentRecord:
    return ExperimentRecord(
        exp_id=int(payload["exp_id"]),
        controls=ProcessControls(**payload["controls"]),
        initial=Composition(**payload["initial"]),
        final=Composition(**payload["final"]),
        quality_score=int(payload.get("quality_score", 1)),
        excluded=bool(payload.get("excluded", False)),
        notes=str(payload.get("notes", "")),
        warnings=tuple(payload.get("warnings", ())),
    )


# ---------------------------------------------------------------------------
# Bundled data


def _data_path(name: str):
    return resources.files("hitl_crystal").joinpath("data").joinpath(name)


def load_bundled_dataset() -> list[ExperimentRecord]:
    with _data_path("table_s4.csv").open("r", encoding="utf-8") as handle:
        return _load_from_stream(handle)


def load_bundled_grade_spec() -> GradeSpec:
    payload = json.loads(_data_path("table_s1.json").read_text(encoding="utf-8"))
    return GradeSpec(
        max_na=payload["max_na"],
        max_mg=payload["max_mg"],
        max_ca=payload["max_ca"],
        max_k=payload["max_k"],
        min_purity_pct=payload["min_purity_pct"],
        k_enforced=bool(payload.get("k_enforced", False)),
    )
