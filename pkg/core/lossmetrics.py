"""
Training loss, checkpoint metric and evaluation statistics.

All reductions are means and all accumulation is done in float64, whatever
the dtype of the predictions.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from core.exceptions import DegenerateSeries, ParameterError, ShapeError
from models.config import LossWeights, MetricWeights
from models.report import BlandAltmanStats, MetricRow

logger = logging.getLogger(__name__)

LOA_Z = 1.96
UNITS = ("seconds", "bpm")


def _pair(x, y, op: str, min_length: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"{op}: lengths differ ({x.size} vs {y.size})")
    if x.size < min_length:
        raise ParameterError(f"{op}: need at least {min_length} values, got {x.size}")
    return x, y


def _is_flat(values: np.ndarray, centered: np.ndarray) -> bool:
    # spread at the level of rounding noise in the mean counts as none
    noise = 4.0 * np.finfo(np.float64).eps * float(np.max(np.abs(values))) * np.sqrt(values.size)
    return float(np.sqrt(np.dot(centered, centered))) <= noise


def pearson_r(x, y) -> float:
    """
    Pearson correlation of two equal-length series.

    Raises:
        DegenerateSeries: if either series has zero variance
    """
    x, y = _pair(x, y, "pearson_r", min_length=2)
    xc, yc = x - x.mean(), y - y.mean()
    if _is_flat(x, xc) or _is_flat(y, yc):
        raise DegenerateSeries("pearson_r: series with zero variance")
    r = np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    return float(np.clip(r, -1.0, 1.0))


def rmse(x, y) -> float:
    """Root mean squared difference of two equal-length series."""
    x, y = _pair(x, y, "rmse")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def huber(pred, target, delta: float = 1.0) -> float:
    """Mean Huber loss: e²/2 inside `delta`, delta·(|e| − delta/2) outside."""
    if delta <= 0:
        raise ParameterError(f"huber: delta must be positive, got {delta}")
    p, t = _pair(pred, target, "huber")
    err = np.abs(p - t)
    return float(np.mean(np.where(err <= delta, 0.5 * err ** 2, delta * (err - 0.5 * delta))))


def _correlation_term(p: np.ndarray, t: np.ndarray) -> Tuple[float, np.ndarray]:
    """1 − r² over flattened pairs and its gradient with respect to p."""
    pc, tc = p - p.mean(), t - t.mean()
    if _is_flat(t, tc):
        raise DegenerateSeries("weighted_loss: targets are constant across the batch")
    if _is_flat(p, pc):
        # r is undefined for constant predictions; count it as uncorrelated
        return 1.0, np.zeros_like(p)
    sxx, syy = np.dot(pc, pc), np.dot(tc, tc)
    norm = np.sqrt(sxx * syy)
    r = np.dot(pc, tc) / norm
    dr = tc / norm - r * pc / sxx
    return float(1.0 - r * r), -2.0 * r * dr


def weighted_loss(pred: np.ndarray, target: np.ndarray,
                  weights: Optional[LossWeights] = None) -> Tuple[float, np.ndarray]:
    """
    w1·(1 − r²) + w2·Huber + w3·MSE + w4·MAE over a (B, 7) batch.

    r is the Pearson correlation of all B·7 flattened (pred, target) pairs.
    Returns the loss value and its exact gradient with respect to `pred`,
    in the dtype of `pred`.

    Raises:
        ParameterError: for a batch of one unless `correlation_fallback` is set
        DegenerateSeries: if the targets are constant
    """
    weights = weights or LossWeights()
    if pred.shape != target.shape:
        raise ShapeError(f"weighted_loss: pred {pred.shape} does not match target {target.shape}")
    use_correlation = weights.w1 > 0
    if use_correlation and pred.shape[0] < 2:
        if not weights.correlation_fallback:
            raise ParameterError("weighted_loss: the correlation term needs a batch of at least 2")
        use_correlation = False

    p = pred.astype(np.float64).ravel()
    t = target.astype(np.float64).ravel()
    n = p.size
    err = p - t
    abs_err = np.abs(err)
    delta = weights.huber_delta
    quadratic = abs_err <= delta

    value = 0.0
    grad = np.zeros_like(p)
    if use_correlation:
        corr, corr_grad = _correlation_term(p, t)
        value += weights.w1 * corr
        grad += weights.w1 * corr_grad
    if weights.w2 > 0:
        value += weights.w2 * np.mean(np.where(quadratic, 0.5 * err ** 2, delta * (abs_err - 0.5 * delta)))
        grad += weights.w2 * np.where(quadratic, err, delta * np.sign(err)) / n
    if weights.w3 > 0:
        value += weights.w3 * np.mean(err ** 2)
        grad += weights.w3 * 2.0 * err / n
    if weights.w4 > 0:
        value += weights.w4 * np.mean(abs_err)
        grad += weights.w4 * np.sign(err) / n

    return float(value), grad.reshape(pred.shape).astype(pred.dtype, copy=False)


def weighted_metric(pred, target, weights: Optional[MetricWeights] = None) -> float:
    """α1·(1 − r²) + α2·mean(ε²) + α3·mean(|ε|); lower is better."""
    weights = weights or MetricWeights()
    p, t = _pair(pred, target, "weighted_metric", min_length=2)
    r = pearson_r(p, t)
    err = p - t
    return float(weights.alpha1 * (1.0 - r * r)
                 + weights.alpha2 * np.mean(err ** 2)
                 + weights.alpha3 * np.mean(np.abs(err)))


def ibi_to_bpm(ibi):
    """60 / IBI; accepts scalars and arrays."""
    arr = np.asarray(ibi, dtype=np.float64)
    if np.any(arr <= 0):
        raise ParameterError("ibi_to_bpm: IBIs must be positive")
    bpm = 60.0 / arr
    return float(bpm) if bpm.ndim == 0 else bpm


def bland_altman(pred, target, unit: str = "seconds") -> BlandAltmanStats:
    """Mean of pred − target and limits of agreement at ±1.96 sample standard deviations."""
    if unit not in UNITS:
        raise ParameterError(f"bland_altman: unit must be one of {UNITS}, got {unit!r}")
    p, t = _pair(pred, target, "bland_altman", min_length=2)
    if unit == "bpm":
        p, t = ibi_to_bpm(p), ibi_to_bpm(t)
    diff = p - t
    mean = float(diff.mean())
    spread = LOA_Z * float(diff.std(ddof=1))
    return BlandAltmanStats(mean_diff=mean, loa_low=mean - spread, loa_high=mean + spread,
                            n=int(diff.size), unit=unit)


def metric_row(fold_id, stage: str, pred, target) -> MetricRow:
    """Concatenated-series metrics in report units (r in %, errors in ms)."""
    r = pearson_r(pred, target)
    seconds = bland_altman(pred, target, "seconds")
    return MetricRow(
        fold_id=str(fold_id),
        stage=stage,
        r_percent=100.0 * r,
        rmse_ms=1000.0 * rmse(pred, target),
        ba_mean_ms=1000.0 * seconds.mean_diff,
        ba_loa_low_ms=1000.0 * seconds.loa_low,
        ba_loa_high_ms=1000.0 * seconds.loa_high,
        n_ibis=seconds.n,
        bpm=bland_altman(pred, target, "bpm"),
    )
