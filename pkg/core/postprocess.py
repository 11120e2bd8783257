"""Turn overlapping window predictions into one smoothed IBI series per recording."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence

import numpy as np

from core.exceptions import ParameterError
from models.series import IbiSeries, WindowPredictions

logger = logging.getLogger(__name__)

MEDIAN_LENGTH = 5
AVERAGE_LENGTH = 6


def _overlap_mean(preds: WindowPredictions):
    width = preds.preds.shape[1]
    beats = (preds.first_beat_indices[:, None] + np.arange(width)[None, :]).ravel()
    covered, inverse = np.unique(beats, return_inverse=True)
    sums = np.zeros(len(covered))
    counts = np.zeros(len(covered))
    np.add.at(sums, inverse, preds.preds.ravel())
    np.add.at(counts, inverse, 1)
    return covered, sums / counts


def rolling_average(preds: WindowPredictions) -> IbiSeries:
    """
    Average every prediction that addresses the same beat.

    Window w predicts beats first[w] .. first[w] + 6, so an interior beat
    collects seven predictions, one from each slot; beats near the edges
    average whatever predictions they have.

    Discarded windows split the table into segments that are averaged
    independently. A segment ends where the next one begins: the earlier
    segment's predictions for later beats are dropped, never pooled with
    the next segment's.

    Args:
        preds: window predictions of one recording

    Returns:
        IbiSeries whose segment_ids number the window runs from 0
    """
    segments = preds.segments()
    if not segments:
        return IbiSeries(np.zeros(0, np.int64), np.zeros(0))
    if len(segments) > 1:
        logger.debug(f"Subject {preds.subject_id}: {len(segments)} segments, gaps at {preds.gaps}")

    beats, values, ids = [], [], []
    for segment_id, segment in enumerate(segments):
        covered, mean = _overlap_mean(segment)
        if segment_id + 1 < len(segments):
            keep = covered < segments[segment_id + 1].first_beat_indices[0]
            covered, mean = covered[keep], mean[keep]
        beats.append(covered)
        values.append(mean)
        ids.append(np.full(len(covered), segment_id, dtype=np.int64))
    return IbiSeries(np.concatenate(beats), np.concatenate(values), np.concatenate(ids))


def _median_run(values: np.ndarray, half: int) -> np.ndarray:
    out = np.empty_like(values)
    n = len(values)
    for i in range(n):
        out[i] = np.median(values[max(0, i - half):min(n, i + half + 1)])
    return out


def _trailing_mean_run(values: np.ndarray, length: int) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(values)])
    stop = np.arange(1, len(values) + 1)
    start = np.maximum(0, stop - length)
    return (csum[stop] - csum[start]) / (stop - start)


def median_filter(series: IbiSeries, length: int = MEDIAN_LENGTH) -> IbiSeries:
    """
    Centered running median; windows are cut short at the run ends.

    Each run of consecutive beats within one segment is filtered on its own.

    Args:
        series: per-beat IBIs
        length: odd window length

    Raises:
        ParameterError: if length is even or not positive
    """
    if length < 1 or length % 2 == 0:
        raise ParameterError(f"median_filter: length must be odd and positive, got {length}")
    out = series.values.copy()
    for run in series.runs():
        out[run] = _median_run(series.values[run], length // 2)
    return series.with_values(out)


def moving_average(series: IbiSeries, length: int = AVERAGE_LENGTH) -> IbiSeries:
    """Trailing mean of up to `length` samples, restarted at every run of `series.runs()`."""
    if length < 1:
        raise ParameterError(f"moving_average: length must be positive, got {length}")
    out = series.values.copy()
    for run in series.runs():
        out[run] = _trailing_mean_run(series.values[run], length)
    return series.with_values(out)


def postprocess_pipeline(preds: WindowPredictions, median_length: int = MEDIAN_LENGTH,
                         average_length: int = AVERAGE_LENGTH) -> IbiSeries:
    """rolling_average, then median_filter, then moving_average."""
    return moving_average(median_filter(rolling_average(preds), median_length), average_length)


def postprocess_many(recordings: Sequence[WindowPredictions], threads: int = 1) -> List[IbiSeries]:
    """Pipeline over several recordings; results keep the input order."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(postprocess_pipeline, recordings))
