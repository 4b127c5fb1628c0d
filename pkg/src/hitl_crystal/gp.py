"""Gaussian-process regression and threshold-based GP classification.

The regressor carries an explicit Cholesky factor of K + alpha*I, a constant
prior mean equal to the training-target mean, and a log marginal likelihood.
Hyperparameters (length scales, signal variance) are selected by multi-start
derivative-free coordinate search on the log marginal likelihood.

The classifier is a GP regressor on {0, 1} labels whose posterior mean,
clamped to [0, 1], is read as a class probability with a 0.5 threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .dataset import FeatureScaler, fit_scaler
from .errors import ConditioningError, DegenerateLabelsError

_SQRT3 = math.sqrt(3.0)
_LOG_2PI = math.log(2.0 * math.pi)

KERNEL_FAMILIES = ("matern32", "rbf")

# log-space search box for hyperparameters
_PARAM_LO, _PARAM_HI = math.log(1e-3), math.log(1e3)
_INIT_LO, _INIT_HI = math.log(1e-2), math.log(1e2)


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel: Matern nu=3/2 or squared-exponential (RBF)."""

    family: str = "matern32"
    length_scales: tuple[float, ...] = (1.0,)
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"kernel family must be one of {KERNEL_FAMILIES}")
        if any(l <= 0 for l in self.length_scales):
            raise ValueError("length scales must be > 0")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be > 0")

    def scales_for(self, n_dims: int) -> np.ndarray:
        ls = np.asarray(self.length_scales, dtype=float)
        if ls.size == 1:
            return np.full(n_dims, ls[0])
        if ls.size != n_dims:
            raise ValueError(f"kernel has {ls.size} length scales but data has {n_dims} dims")
        return ls

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "length_scales": list(self.length_scales),
            "signal_variance": self.signal_variance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "KernelSpec":
        return cls(
            family=payload["family"],
            length_scales=tuple(float(v) for v in payload["length_scales"]),
            signal_variance=float(payload["signal_variance"]),
        )


def _scaled_sqdist(x1: np.ndarray, x2: np.ndarray, scales: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(x1) / scales
    b = np.atleast_2d(x2) / scales
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def kernel_matrix(spec: KernelSpec, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1, x2 = np.atleast_2d(x1), np.atleast_2d(x2)
    if x1.shape[1] != x2.shape[1]:
        raise ValueError(f"dimension mismatch: {x1.shape[1]} vs {x2.shape[1]}")
    scales = spec.scales_for(x1.shape[1])
    r = np.sqrt(_scaled_sqdist(x1, x2, scales))
    if spec.family == "matern32":
        return spec.signal_variance * (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
    return spec.signal_variance * np.exp(-0.5 * r * r)


def kernel_eval(spec: KernelSpec, x1: np.ndarray, x2: np.ndarray) -> float:
    """Covariance between two single points."""
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    return float(kernel_matrix(spec, x1[None, :], x2[None, :])[0, 0])


def _chol_with_jitter(k: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + alpha*I, escalating alpha x10 up to 3 times."""
    n = k.shape[0]
    jitter = max(alpha, 0.0)
    for attempt in range(4):
        try:
            fac = cholesky(k + jitter * np.eye(n), lower=True)
            return fac, jitter
        except np.linalg.LinAlgError:
            jitter = jitter * 10.0 if jitter > 0 else 1e-12
    raise ConditioningError(
        f"Cholesky failed for a {n}x{n} kernel matrix even at jitter {jitter:.1e}"
    )


@dataclass(eq=False)
class GpModel:
    """Trained GP regressor (immutable after construction)."""

    kernel: KernelSpec
    noise_alpha: float
    alpha_effective: float
    scaler: FeatureScaler
    x_scaled: np.ndarray
    y: np.ndarray
    y_mean: float
    chol: np.ndarray
    resid_weights: np.ndarray  # (K + alpha I)^-1 (y - y_mean)
    log_marginal_likelihood: float
    target_name: str | None = None

    def __post_init__(self):
        for arr in (self.x_scaled, self.y, self.chol, self.resid_weights):
            arr.setflags(write=False)

    @property
    def n_train(self) -> int:
        return self.x_scaled.shape[0]

    def to_dict(self) -> dict:
        return {
            "format": "gp-model/1",
            "kernel": self.kernel.to_dict(),
            "noise_alpha": self.noise_alpha,
            "alpha_effective": self.alpha_effective,
            "scaler": self.scaler.to_dict(),
            "x_scaled": self.x_scaled.tolist(),
            "y": self.y.tolist(),
            "y_mean": self.y_mean,
            "log_marginal_likelihood": self.log_marginal_likelihood,
            "target_name": self.target_name,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GpModel":
        if payload.get("format") != "gp-model/1":
            raise ValueError(f"unsupported model format: {payload.get('format')!r}")
        kernel = KernelSpec.from_dict(payload["kernel"])
        x_scaled = np.array(payload["x_scaled"], dtype=float)
        y = np.array(payload["y"], dtype=float)
        y_mean = float(payload["y_mean"])
        k = kernel_matrix(kernel, x_scaled, x_scaled)
        chol, _ = _chol_with_jitter(k, float(payload["alpha_effective"]))
        resid = solve_triangular(chol, y - y_mean, lower=True)
        resid = solve_triangular(chol.T, resid, lower=False)
        return cls(
            kernel=kernel,
            noise_alpha=float(payload["noise_alpha"]),
            alpha_effective=float(payload["alpha_effective"]),
            scaler=FeatureScaler.from_dict(payload["scaler"]),
            x_scaled=x_scaled,
            y=y,
            y_mean=y_mean,
            chol=chol,
            resid_weights=resid,
            log_marginal_likelihood=float(payload["log_marginal_likelihood"]),
            target_name=payload.get("target_name"),
        )


def _log_marginal_likelihood(
    kernel: KernelSpec, x: np.ndarray, resid: np.ndarray, alpha: float
) -> float:
    k = kernel_matrix(kernel, x, x)
    try:
        chol, _ = _chol_with_jitter(k, alpha)
    except ConditioningError:
        return -np.inf
    v = solve_triangular(chol, resid, lower=True)
    n = x.shape[0]
    return float(-0.5 * v @ v - np.log(np.diag(chol)).sum() - 0.5 * n * _LOG_2PI)


def _coordinate_search(
    objective, theta0: np.ndarray, max_rounds: int = 40, init_step: float = 1.0, tol: float = 1e-3
) -> tuple[np.ndarray, float]:
    """Maximize objective(theta) by per-coordinate steps with geometric shrink."""
    theta = np.clip(theta0.copy(), _PARAM_LO, _PARAM_HI)
    best = objective(theta)
    step = init_step
    for _ in range(max_rounds):
        improved = False
        for i in range(theta.size):
            for direction in (+1.0, -1.0):
                trial = theta.copy()
                trial[i] = np.clip(trial[i] + direction * step, _PARAM_LO, _PARAM_HI)
                if trial[i] == theta[i]:
                    continue
                value = objective(trial)
                if value > best:
                    theta, best = trial, value
                    improved = True
                    break
        if not improved:
            step *= 0.5
            if step < tol:
                break
    return theta, best


def _kernel_from_theta(family: str, theta: np.ndarray, iso: bool) -> KernelSpec:
    if iso:
        scales = (float(np.exp(theta[0])),)
    else:
        scales = tuple(float(v) for v in np.exp(theta[:-1]))
    return KernelSpec(family=family, length_scales=scales, signal_variance=float(np.exp(theta[-1])))


def gpr_fit(
    inputs: np.ndarray,
    targets: np.ndarray,
    kernel: KernelSpec | None = None,
    noise_alpha: float = 1e-10,
    n_restarts: int = 10,
    rng_seed: int = 0,
    optimize: bool = True,
    scaler: FeatureScaler | None = None,
    feature_names: Sequence[str] | None = None,
    target_name: str | None = None,
    alpha_scale: str = "absolute",
) -> GpModel:
    """Fit a GP regressor; features are standard-scaled, targets stay raw.

    When ``optimize`` is set, length scales and signal variance maximize the
    log marginal likelihood over 1 + n_restarts coordinate searches (the given
    kernel plus log-uniform random initializations). Deterministic per seed.

    ``alpha_scale="target_variance"`` multiplies noise_alpha by the target
    variance, giving raw-unit targets a scale-free noise floor.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} inputs vs {y.size} targets")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    if scaler is None:
        scaler = fit_scaler(x, names=feature_names)
    xs = scaler.transform(x)
    y_mean = float(y.mean())
    resid = y - y_mean
    if alpha_scale == "target_variance":
        noise_alpha = noise_alpha * (float(resid.var()) or 1.0)
    elif alpha_scale != "absolute":
        raise ValueError("alpha_scale must be 'absolute' or 'target_variance'")

    base = kernel if kernel is not None else KernelSpec()
    iso = len(base.length_scales) == 1
    n_theta = (1 if iso else x.shape[1]) + 1

    if optimize:
        rng = np.random.default_rng(rng_seed)
        # search the signal variance relative to the target variance so raw
        # ppm-scale targets get the same well-conditioned log-space box
        var_scale = float(resid.var()) or 1.0

        def kernel_of(theta: np.ndarray) -> KernelSpec:
            spec = _kernel_from_theta(base.family, theta, iso)
            return replace(spec, signal_variance=spec.signal_variance * var_scale)

        def objective(theta: np.ndarray) -> float:
            return _log_marginal_likelihood(kernel_of(theta), xs, resid, noise_alpha)

        theta_base = np.log(
            np.concatenate(
                [
                    base.scales_for(1 if iso else x.shape[1]),
                    [max(base.signal_variance / var_scale, 1e-3)],
                ]
            )
        )
        best_theta, best_val = _coordinate_search(objective, theta_base)
        for _ in range(n_restarts):
            theta0 = rng.uniform(_INIT_LO, _INIT_HI, size=n_theta)
            theta, value = _coordinate_search(objective, theta0)
            if value > best_val:
                best_theta, best_val = theta, value
        chosen = kernel_of(best_theta)
    else:
        chosen = base

    k = kernel_matrix(chosen, xs, xs)
    chol, jitter = _chol_with_jitter(k, noise_alpha)
    v = solve_triangular(chol, resid, lower=True)
    weights = solve_triangular(chol.T, v, lower=False)
    lml = float(-0.5 * v @ v - np.log(np.diag(chol)).sum() - 0.5 * y.size * _LOG_2PI)
    return GpModel(
        kernel=chosen,
        noise_alpha=noise_alpha,
        alpha_effective=jitter,
        scaler=scaler,
        x_scaled=xs,
        y=y,
        y_mean=y_mean,
        chol=chol,
        resid_weights=weights,
        log_marginal_likelihood=lml,
        target_name=target_name,
    )


def gpr_predict(model: GpModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at raw-feature points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != model.x_scaled.shape[1]:
        raise ValueError(
            f"dimension mismatch: model has {model.x_scaled.shape[1]} features, "
            f"points have {pts.shape[1]}"
        )
    xs = model.scaler.transform(pts)
    k_star = kernel_matrix(model.kernel, model.x_scaled, xs)
    mean = model.y_mean + k_star.T @ model.resid_weights
    v = solve_triangular(model.chol, k_star, lower=True)
    var = model.kernel.signal_variance - np.sum(v * v, axis=0)
    return mean, np.sqrt(np.maximum(var, 0.0))


def gpr_loo_rmse(model: GpModel) -> float:
    """Exact leave-one-out RMSE from the Cholesky factor."""
    n = model.n_train
    k_inv = solve_triangular(model.chol, np.eye(n), lower=True)
    k_inv = solve_triangular(model.chol.T, k_inv, lower=False)
    diag = np.diag(k_inv)
    loo_err = model.resid_weights / diag
    return float(np.sqrt(np.mean(loo_err**2)))


# ---------------------------------------------------------------------------
# Threshold classifier


@dataclass(eq=False)
class GpClassifier:
    """GP regressor on {0,1} labels read as a probability via clamping."""

    inner: GpModel
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {"format": "gp-classifier/1", "inner": self.inner.to_dict(), "threshold": self.threshold}

    @classmethod
    def from_dict(cls, payload: dict) -> "GpClassifier":
        if payload.get("format") != "gp-classifier/1":
            raise ValueError(f"unsupported classifier format: {payload.get('format')!r}")
        return cls(inner=GpModel.from_dict(payload["inner"]), threshold=float(payload["threshold"]))


def gpc_fit(
    inputs: np.ndarray,
    labels: np.ndarray,
    kernel: KernelSpec | None = None,
    alpha: float = 0.06,
    rng_seed: int = 0,
    n_restarts: int = 10,
    optimize: bool = True,
    threshold: float = 0.5,
    feature_names: Sequence[str] | None = None,
    scaler: FeatureScaler | None = None,
) -> GpClassifier:
    labels = np.asarray(labels).astype(bool).ravel()
    if labels.all() or not labels.any():
        raise DegenerateLabelsError(
            "classification needs both classes present in the training labels"
        )
    inner = gpr_fit(
        inputs,
        labels.astype(float),
        kernel=kernel,
        noise_alpha=alpha,
        n_restarts=n_restarts,
        rng_seed=rng_seed,
        optimize=optimize,
        scaler=scaler,
        feature_names=feature_names,
        target_name="battery_grade",
    )
    return GpClassifier(inner=inner, threshold=threshold)


def gpc_predict_proba(clf: GpClassifier, points: np.ndarray) -> np.ndarray:
    mean, _ = gpr_predict(clf.inner, points)
    return np.clip(mean, 0.0, 1.0)


def gpc_predict(clf: GpClassifier, points: np.ndarray) -> np.ndarray:
    return gpc_predict_proba(clf, points) >= clf.threshold


# ---------------------------------------------------------------------------
# Snapshot I/O


def model_to_json(model: GpModel | GpClassifier) -> str:
    return json.dumps(model.to_dict())


def model_from_json(text: str) -> GpModel | GpClassifier:
    payload = json.loads(text)
    if payload.get("format") == "gp-classifier/1":
        return GpClassifier.from_dict(payload)
    return GpModel.from_dict(payload)
