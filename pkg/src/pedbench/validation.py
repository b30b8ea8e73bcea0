"""Input validation for prediction sets before scoring.

Externally produced prediction files are checked for instance coverage,
weight normalization, shared timestamps, and positive semi-definite
covariances before any metric sees them. Missing instances are an error
rather than a silent skip, so a model cannot improve its score by declining
to predict hard instances.
"""

import warnings

import numpy as np

from .errors import PredictionValidationError
from .predictors import ModePrediction, MultimodalPrediction

WEIGHT_SUM_TOL = 1e-9
PSD_EIGENVALUE_TOL = -1e-12
SYMMETRY_TOL = 1e-9


def min_eigenvalue_2x2(cov: np.ndarray) -> float:
    a, d = float(cov[0, 0]), float(cov[1, 1])
    b = 0.5 * (float(cov[0, 1]) + float(cov[1, 0]))
    mid = 0.5 * (a + d)
    radius = float(np.hypot(0.5 * (a - d), b))
    return mid - radius


def ensure_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clamp tiny negative eigenvalues to zero."""
    sym = 0.5 * (cov + cov.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= 0:
        return sym
    return (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T


def check_prediction(pred: MultimodalPrediction, instance=None) -> MultimodalPrediction:
    """Validate one prediction; returns it with covariances clamped to PSD.

    Checks: weights within [0, 1] summing to 1, all modes sharing one
    timestamp grid (matching the instance's future when given), symmetric
    covariances with eigenvalues no more negative than the tolerance.
    """
    ctx = f"prediction {pred.instance_id}"
    weights = pred.weights
    if np.any(weights < 0) or np.any(weights > 1):
        raise PredictionValidationError(f"{ctx}: mode weights must lie in [0, 1], got {weights.tolist()}")
    if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
        raise PredictionValidationError(f"{ctx}: mode weights sum to {weights.sum()!r}, expected 1")

    ts = pred.timestamps_us
    for mode in pred.modes[1:]:
        if not np.array_equal(mode.timestamps_us, ts):
            raise PredictionValidationError(f"{ctx}: modes do not share timestamps")
    if instance is not None and not np.array_equal(ts, instance.future_t_us):
        raise PredictionValidationError(f"{ctx}: timestamps do not match the instance future")

    clamped_modes = []
    needs_clamp = False
    for mode in pred.modes:
        covs = mode.covariances
        if np.max(np.abs(covs - covs.transpose(0, 2, 1))) > SYMMETRY_TOL:
            raise PredictionValidationError(f"{ctx}: covariances are not symmetric")
        mins = np.array([min_eigenvalue_2x2(c) for c in covs])
        if np.any(mins < PSD_EIGENVALUE_TOL):
            raise PredictionValidationError(
                f"{ctx}: covariance eigenvalue {mins.min():.3e} below the PSD tolerance"
            )
        if np.any(mins < 0):
            needs_clamp = True
            covs = np.stack([ensure_psd(c) for c in covs])
        clamped_modes.append(
            ModePrediction(
                weight=mode.weight,
                timestamps_us=mode.timestamps_us,
                means=mode.means,
                covariances=covs,
                label=mode.label,
            )
        )
    if not needs_clamp:
        return pred
    return MultimodalPrediction(instance_id=pred.instance_id, modes=tuple(clamped_modes))


def check_prediction_set(instances, predictions) -> list[MultimodalPrediction]:
    """Validate an external prediction set against the instances it must cover.

    Every instance needs exactly one prediction; predictions for unknown
    instances are dropped with a warning. Returns the validated (and where
    needed, PSD-clamped) predictions.
    """
    by_id: dict[str, MultimodalPrediction] = {}
    for pred in predictions:
        if pred.instance_id in by_id:
            raise PredictionValidationError(f"duplicate prediction for instance {pred.instance_id}")
        by_id[pred.instance_id] = pred

    wanted = {inst.instance_id: inst for inst in instances}
    missing = [iid for iid in wanted if iid not in by_id]
    if missing:
        raise PredictionValidationError(
            f"{len(missing)} of {len(wanted)} instances lack predictions (first missing: {missing[0]})"
        )
    extra = [iid for iid in by_id if iid not in wanted]
    if extra:
        warnings.warn(f"ignoring {len(extra)} predictions for unknown instances", UserWarning)

    return [check_prediction(by_id[iid], inst) for iid, inst in wanted.items()]
