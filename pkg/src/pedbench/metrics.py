"""The five multimodal evaluation measures and Table-style report aggregation.

Per-horizon displacement metrics evaluate the error at the horizon step
itself (minADE being the exception: by definition it averages over all steps
up to the horizon). An alternative convention that averages predRMS/expRMS/
NLL over all steps up to the horizon is available behind the
``horizon_mode="averaged"`` flag, since upstream tooling is not explicit
about which aggregation it uses.

Unimodal predictors are reported with a single RMS row (computed exactly as
predRMS of their one mode); multimodal predictors get the full five-metric
treatment. Aggregation over instances uses compensated summation so results
do not depend on evaluation order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonExceedsFuture, PredictionValidationError, SingularCovariance
from .predictors import MultimodalPrediction

LOG_2PI = math.log(2.0 * math.pi)
COVARIANCE_EPSILON = 1e-6  # m^2, applied only when a covariance is not positive definite
METRIC_ORDER = ("RMS", "predRMS", "minADE", "minFDE", "expRMS", "NLL")
HORIZON_MODES = ("at_horizon", "averaged")
DEFAULT_HORIZONS = (1.0, 2.0, 3.0)


def horizon_step(prediction: MultimodalPrediction, horizon_s: float) -> int:
    """1-based step index corresponding to a horizon in seconds."""
    ts = prediction.timestamps_us
    n = len(ts)
    if n == 1:
        return 1
    dt_us = int(ts[1] - ts[0])
    steps = horizon_s * 1e6 / dt_us
    k = int(round(steps))
    if abs(steps - k) > 1e-6 or k < 1:
        raise ValueError(f"horizon {horizon_s}s is not a positive multiple of the step ({dt_us} us)")
    if k > n:
        raise HorizonExceedsFuture(f"horizon {horizon_s}s needs step {k} but the prediction has {n}")
    return k


def mode_distances(prediction: MultimodalPrediction, future_xy: np.ndarray) -> np.ndarray:
    """Euclidean distance of every mode mean to ground truth, shape (K, H)."""
    gt = np.asarray(future_xy, dtype=float)
    return np.stack([np.linalg.norm(mode.means - gt, axis=1) for mode in prediction.modes])


def top_mode_index(prediction: MultimodalPrediction) -> int:
    """Index of the highest-weight mode; ties go to the lowest index."""
    return int(np.argmax(prediction.weights))


def min_ade(prediction: MultimodalPrediction, future_xy: np.ndarray, horizon_s: float) -> float:
    """Smallest over modes of the mean displacement over steps 1..K_T."""
    k = horizon_step(prediction, horizon_s)
    d = mode_distances(prediction, future_xy)
    return float(np.min(np.mean(d[:, :k], axis=1)))


def min_fde(prediction: MultimodalPrediction, future_xy: np.ndarray, horizon_s: float) -> float:
    """Smallest over modes of the displacement at the horizon step."""
    k = horizon_step(prediction, horizon_s)
    d = mode_distances(prediction, future_xy)
    return float(np.min(d[:, k - 1]))


def _sq_errors_top(prediction, future_xy, horizon_s, horizon_mode) -> float:
    k = horizon_step(prediction, horizon_s)
    d = mode_distances(prediction, future_xy)[top_mode_index(prediction)]
    if horizon_mode == "averaged":
        return float(np.mean(d[:k] ** 2))
    return float(d[k - 1] ** 2)


def _sq_errors_expected(prediction, future_xy, horizon_s, horizon_mode) -> float:
    k = horizon_step(prediction, horizon_s)
    d = mode_distances(prediction, future_xy)
    w = prediction.weights
    per_step = w @ (d[:, :k] ** 2)
    if horizon_mode == "averaged":
        return float(np.mean(per_step))
    return float(per_step[k - 1])


def pred_rms(pairs, horizon_s: float, horizon_mode: str = "at_horizon") -> float:
    """RMS displacement of the most probable mode over (prediction, truth) pairs."""
    sq = [_sq_errors_top(pred, gt, horizon_s, horizon_mode) for pred, gt in pairs]
    return math.sqrt(math.fsum(sq) / len(sq))


def exp_rms(pairs, horizon_s: float, horizon_mode: str = "at_horizon") -> float:
    """RMS of the probability-weighted squared displacements across modes."""
    sq = [_sq_errors_expected(pred, gt, horizon_s, horizon_mode) for pred, gt in pairs]
    return math.sqrt(math.fsum(sq) / len(sq))


def _log_gauss2(delta: np.ndarray, cov: np.ndarray, epsilon: float) -> float:
    a = float(cov[0, 0])
    b = 0.5 * (float(cov[0, 1]) + float(cov[1, 0]))
    d = float(cov[1, 1])
    det = a * d - b * b
    if not (a > 0 and det > 0):
        a += epsilon
        d += epsilon
        det = a * d - b * b
        if not (a > 0 and det > 0):
            raise SingularCovariance(f"covariance {cov.tolist()} is not positive definite after regularization")
    dx, dy = float(delta[0]), float(delta[1])
    quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    return -LOG_2PI - 0.5 * math.log(det) - 0.5 * quad


def _nll_at_step(prediction: MultimodalPrediction, gt_xy: np.ndarray, step_idx: int, epsilon: float) -> float:
    log_terms = []
    for mode in prediction.modes:
        if mode.weight <= 0:
            continue
        delta = np.asarray(gt_xy[step_idx], dtype=float) - mode.means[step_idx]
        log_terms.append(math.log(mode.weight) + _log_gauss2(delta, mode.covariances[step_idx], epsilon))
    shift = max(log_terms)
    return -(shift + math.log(math.fsum(math.exp(t - shift) for t in log_terms)))


def nll(
    prediction: MultimodalPrediction,
    future_xy: np.ndarray,
    horizon_s: float,
    horizon_mode: str = "at_horizon",
    epsilon: float = COVARIANCE_EPSILON,
) -> float:
    """Negative log-likelihood of the true position under the predicted mixture.

    Computed in log space with a max shift for numerical stability. The
    small-epsilon regularization is applied only to covariances that are not
    already positive definite, so well-conditioned inputs are evaluated
    exactly.
    """
    k = horizon_step(prediction, horizon_s)
    gt = np.asarray(future_xy, dtype=float)
    if horizon_mode == "averaged":
        values = [_nll_at_step(prediction, gt, i, epsilon) for i in range(k)]
        return math.fsum(values) / k
    return _nll_at_step(prediction, gt, k - 1, epsilon)


@dataclass(frozen=True)
class MetricRow:
    """One metric for one predictor across the horizon set."""

    metric: str
    predictor: str
    values: dict  # horizon seconds -> value


@dataclass(frozen=True)
class ReportTable:
    """All metric rows for one dataset variant."""

    variant: str
    n_instances: int
    rows: tuple[MetricRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        seen = set()
        for row in self.rows:
            key = (row.metric, row.predictor)
            if key in seen:
                raise ValueError(f"duplicate (metric, predictor) pair {key}")
            seen.add(key)


def pair_predictions(instances, predictions) -> list:
    """Align predictions to instances by id; every instance must be covered."""
    by_id = {}
    for pred in predictions:
        by_id[pred.instance_id] = pred
    missing = [inst.instance_id for inst in instances if inst.instance_id not in by_id]
    if missing:
        raise PredictionValidationError(
            f"{len(missing)} instance(s) lack predictions (first missing: {missing[0]})"
        )
    return [(by_id[inst.instance_id], inst.future_xy) for inst in instances]


def evaluate(
    instances,
    predictions,
    horizons=DEFAULT_HORIZONS,
    predictor_name: str = "model",
    variant: str = "full",
    horizon_mode: str = "at_horizon",
) -> ReportTable:
    """Score a prediction set against instances at each horizon.

    Single-mode prediction sets are unimodal baselines and get only the RMS
    row; multimodal sets get predRMS, minADE, minFDE, expRMS, and NLL.
    """
    if horizon_mode not in HORIZON_MODES:
        raise ValueError(f"horizon_mode must be one of {HORIZON_MODES}")
    instances = list(instances)
    if not instances:
        raise ValueError("cannot evaluate an empty instance set")
    pairs = pair_predictions(instances, predictions)
    unimodal = all(pred.n_modes == 1 for pred, _ in pairs)
    horizons = tuple(float(h) for h in horizons)

    def row(metric: str, fn) -> MetricRow:
        return MetricRow(metric=metric, predictor=predictor_name, values={h: fn(h) for h in horizons})

    n = len(pairs)
    if unimodal:
        rows = [row("RMS", lambda h: pred_rms(pairs, h, horizon_mode))]
    else:
        rows = [
            row("predRMS", lambda h: pred_rms(pairs, h, horizon_mode)),
            row("minADE", lambda h: math.fsum(min_ade(p, gt, h) for p, gt in pairs) / n),
            row("minFDE", lambda h: math.fsum(min_fde(p, gt, h) for p, gt in pairs) / n),
            row("expRMS", lambda h: exp_rms(pairs, h, horizon_mode)),
            row("NLL", lambda h: math.fsum(nll(p, gt, h, horizon_mode) for p, gt in pairs) / n),
        ]
    return ReportTable(variant=variant, n_instances=n, rows=tuple(rows))


def _fmt_horizon(h: float) -> str:
    return f"{h:g}"


def table_to_json_dict(table: ReportTable) -> dict:
    metrics: dict = {}
    for row in table.rows:
        metrics.setdefault(row.metric, {})[row.predictor] = {
            _fmt_horizon(h): v for h, v in sorted(row.values.items())
        }
    return {"variant": table.variant, "n_instances": table.n_instances, "metrics": metrics}


def table_from_json_dict(data: dict) -> ReportTable:
    rows = []
    for metric, by_predictor in data["metrics"].items():
        for predictor, values in by_predictor.items():
            rows.append(
                MetricRow(metric=metric, predictor=predictor, values={float(h): v for h, v in values.items()})
            )
    return ReportTable(variant=data["variant"], n_instances=data["n_instances"], rows=tuple(rows))


def render_tables(tables) -> str:
    """Aligned text table: rows grouped by metric, columns variant x horizon."""
    tables = list(tables)
    variants: list[str] = []
    for t in tables:
        if t.variant not in variants:
            variants.append(t.variant)
    horizons_by_variant = {
        v: sorted({h for t in tables if t.variant == v for row in t.rows for h in row.values}) for v in variants
    }
    predictors_by_metric: dict[str, list[str]] = {}
    for t in tables:
        for row in t.rows:
            names = predictors_by_metric.setdefault(row.metric, [])
            if row.predictor not in names:
                names.append(row.predictor)
    metric_names = [m for m in METRIC_ORDER if m in predictors_by_metric]
    metric_names += [m for m in predictors_by_metric if m not in METRIC_ORDER]

    value_of = {}
    for t in tables:
        for row in t.rows:
            for h, v in row.values.items():
                value_of[(row.metric, row.predictor, t.variant, h)] = v

    metric_w = max(len(m) for m in metric_names)
    name_w = max(
        [len("Time Horizon")]
        + [metric_w + 2 + len(p) for names in predictors_by_metric.values() for p in names]
    )
    col_w = 8
    lines = []
    header_var = " " * name_w
    header_hor = "Time Horizon".ljust(name_w)
    for v in variants:
        hs = horizons_by_variant[v]
        header_var += "  " + v.center(col_w * len(hs) + 2 * (len(hs) - 1))
        header_hor += "  " + "  ".join(f"{_fmt_horizon(h)} s".center(col_w) for h in hs)
    lines.append(header_var.rstrip())
    lines.append(header_hor.rstrip())
    lines.append("-" * max(len(header_var), len(header_hor)))
    for metric in metric_names:
        for i, predictor in enumerate(predictors_by_metric[metric]):
            label = (metric if i == 0 else "").ljust(metric_w)
            line = f"{label}  {predictor}".ljust(name_w)
            for v in variants:
                cells = []
                for h in horizons_by_variant[v]:
                    val = value_of.get((metric, predictor, v, h))
                    cells.append(("-" if val is None else f"{val:.2f}").center(col_w))
                line += "  " + "  ".join(cells)
            lines.append(line.rstrip())
    return "\n".join(lines) + "\n"
