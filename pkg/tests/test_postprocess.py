"""Unit tests for overlap averaging and the smoothing filters."""

import numpy as np
import pytest

from core.exceptions import ParameterError, ShapeError
from core.lossmetrics import rmse
from core.postprocess import (median_filter, moving_average, postprocess_many,
                              postprocess_pipeline, rolling_average)
from models.series import IbiSeries, WindowPredictions


def _brute_force_average(first, preds):
    totals = {}
    for start, row in zip(first, preds):
        for slot, value in enumerate(row):
            totals.setdefault(start + slot, []).append(value)
    beats = sorted(totals)
    return beats, [np.mean(totals[b]) for b in beats]


def _segmented_average(first, preds):
    """Brute-force average per contiguous window run; a run ends where the next begins."""
    cuts = [i for i in range(1, len(first)) if first[i] - first[i - 1] > 1]
    bounds = [0, *cuts, len(first)]
    beats, values, ids = [], [], []
    for segment_id, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        stop = first[b] if b < len(first) else np.inf
        for beat, value in zip(*_brute_force_average(first[a:b], preds[a:b])):
            if beat < stop:
                beats.append(beat)
                values.append(value)
                ids.append(segment_id)
    return beats, values, ids


def _random_windows(rng, max_beats=200, gaps=False):
    n = int(rng.integers(1, max_beats - 6 + 1))
    first = np.arange(n) + int(rng.integers(0, 50))
    if gaps and n > 2:
        drop = rng.choice(np.arange(1, n - 1), size=int(rng.integers(1, min(5, n - 2) + 1)), replace=False)
        first = np.delete(first, drop)
    return first, rng.uniform(0.4, 1.2, size=(len(first), 7))


def test_constant_predictions_average_to_the_constant():
    """Every beat of a constant prediction table averages to that constant."""
    preds = WindowPredictions(np.arange(5), np.full((5, 7), 0.8))
    series = rolling_average(preds)
    assert series.beat_indices.tolist() == list(range(11))
    np.testing.assert_allclose(series.values, 0.8)


def test_two_windows_overlap_on_six_beats():
    """Beats 1..6 average both windows, beats 0 and 7 have one prediction each."""
    preds = WindowPredictions([0, 1], np.vstack([np.zeros(7), np.ones(7)]))
    series = rolling_average(preds)
    np.testing.assert_allclose(series.values, [0.0] + [0.5] * 6 + [1.0])


def test_rolling_average_splits_at_gaps(rng):
    """Each window run is averaged on its own and stops where the next run starts."""
    first = np.array([0, 1, 2, 3, 7, 8, 20])
    preds = rng.uniform(0.5, 1.0, size=(len(first), 7))
    series = rolling_average(WindowPredictions(first, preds))
    assert series.beat_indices.tolist() == list(range(15)) + list(range(20, 27))
    assert series.segment_ids.tolist() == [0] * 7 + [1] * 8 + [2] * 7
    beats, values, ids = _segmented_average(first, preds)
    assert series.beat_indices.tolist() == beats
    np.testing.assert_allclose(series.values, values, rtol=0, atol=1e-9)


def test_rolling_average_matches_brute_force_on_random_windows():
    """One hundred random stride-1 window sets of up to 200 beats agree with the per-beat oracle."""
    rng = np.random.default_rng(3)
    for _ in range(100):
        first, preds = _random_windows(rng)
        beats, values = _brute_force_average(first, preds)
        series = rolling_average(WindowPredictions(first, preds))
        assert series.beat_indices.tolist() == beats
        np.testing.assert_allclose(series.values, values, rtol=0, atol=1e-9)
        assert len(series.runs()) == 1


def test_rolling_average_matches_segment_oracle_with_gaps():
    """Random window sets with discarded windows agree with the per-segment oracle."""
    rng = np.random.default_rng(4)
    for _ in range(100):
        first, preds = _random_windows(rng, gaps=True)
        beats, values, ids = _segmented_average(first, preds)
        series = rolling_average(WindowPredictions(first, preds))
        assert series.beat_indices.tolist() == beats
        assert series.segment_ids.tolist() == ids
        np.testing.assert_allclose(series.values, values, rtol=0, atol=1e-9)


def test_seven_covering_predictions_average():
    """An interior beat is the mean of its seven predictions."""
    first = np.arange(13)
    preds = np.full((13, 7), 0.7)
    # beat 12 is slot 6 of window 6 ... slot 0 of window 12
    for slot, value in enumerate([0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9]):
        preds[12 - slot, slot] = value
    series = rolling_average(WindowPredictions(first, preds))
    assert series.values[12] == pytest.approx(0.75)


def test_discarded_window_splits_the_series():
    """Beats on either side of a discarded window are never smoothed together."""
    first = np.delete(np.arange(20), 10)
    preds = np.where(first[:, None] < 10, 0.6, 1.2) * np.ones((1, 7))
    wp = WindowPredictions(first, preds)
    assert wp.gaps == [11]
    series = postprocess_pipeline(wp)
    assert [(r.start, r.stop) for r in series.runs()] == [(0, 11), (11, 26)]
    assert series.beat_indices.tolist() == list(range(26))
    np.testing.assert_allclose(series.values, [0.6] * 11 + [1.2] * 15)


def test_rolling_average_of_nothing():
    """No windows, no beats."""
    assert len(rolling_average(WindowPredictions(np.zeros(0), np.zeros((0, 7))))) == 0


def test_window_predictions_validation():
    """Mismatched rows and unordered windows are rejected."""
    with pytest.raises(ShapeError):
        WindowPredictions([0, 1], np.zeros((3, 7)))
    with pytest.raises(ParameterError):
        WindowPredictions([1, 1], np.zeros((2, 7)))
    assert WindowPredictions([0, 1, 5, 6, 9], np.zeros((5, 7))).gaps == [5, 9]


def test_median_filter_removes_a_spike():
    """A single outlier disappears under the length-5 median."""
    values = np.array([0.7, 0.7, 0.7, 2.0, 0.7, 0.7, 0.7])
    out = median_filter(IbiSeries(np.arange(7), values))
    np.testing.assert_allclose(out.values, 0.7)


def test_median_filter_truncates_at_the_edges():
    """The first sample sees itself and the next two."""
    out = median_filter(IbiSeries(np.arange(5), [1.0, 5.0, 3.0, 2.0, 4.0]))
    np.testing.assert_allclose(out.values, [3.0, 2.5, 3.0, 3.5, 3.0])


def test_median_filter_rejects_even_lengths():
    """The centered median needs an odd length."""
    with pytest.raises(ParameterError):
        median_filter(IbiSeries(np.arange(3), np.ones(3)), length=4)


def test_moving_average_is_trailing():
    """Output k is the mean of inputs max(0, k-5)..k."""
    values = np.arange(1.0, 9.0)
    out = moving_average(IbiSeries(np.arange(8), values))
    np.testing.assert_allclose(out.values, [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.5, 5.5])


def test_filters_restart_after_a_gap():
    """Runs of consecutive beats are smoothed independently."""
    series = IbiSeries([0, 1, 2, 10, 11], [1.0, 1.0, 1.0, 3.0, 3.0])
    np.testing.assert_allclose(moving_average(series).values, [1.0, 1.0, 1.0, 3.0, 3.0])
    np.testing.assert_allclose(median_filter(series).values, [1.0, 1.0, 1.0, 3.0, 3.0])


def test_filters_restart_at_a_segment_boundary():
    """Adjacent beats from different segments are smoothed independently."""
    series = IbiSeries([0, 1, 2, 3, 4], [1.0, 1.0, 3.0, 3.0, 3.0], segment_ids=[0, 0, 1, 1, 1])
    assert [(r.start, r.stop) for r in series.runs()] == [(0, 2), (2, 5)]
    np.testing.assert_allclose(moving_average(series).values, [1.0, 1.0, 3.0, 3.0, 3.0])
    np.testing.assert_allclose(median_filter(series).values, [1.0, 1.0, 3.0, 3.0, 3.0])
    assert moving_average(series).segment_ids.tolist() == [0, 0, 1, 1, 1]


def test_segment_ids_are_validated():
    """Segment ids must match the values and never decrease."""
    with pytest.raises(ShapeError):
        IbiSeries([0, 1], [1.0, 1.0], segment_ids=[0])
    with pytest.raises(ParameterError):
        IbiSeries([0, 1], [1.0, 1.0], segment_ids=[1, 0])


def test_pipeline_preserves_a_constant_rhythm():
    """Smoothing a constant series changes nothing."""
    preds = WindowPredictions(np.arange(20), np.full((20, 7), 0.65))
    series = postprocess_pipeline(preds)
    assert len(series) == 26
    np.testing.assert_allclose(series.values, 0.65)


def test_smoothing_reduces_noise_on_average():
    """Over a hundred noisy trials of a slowly varying rhythm the pipeline lowers the RMSE."""
    rng = np.random.default_rng(21)
    raw_errors, post_errors = [], []
    for _ in range(100):
        truth = 0.75 + 0.05 * np.sin(np.arange(60) / 8.0)
        first = np.arange(54)
        clean = np.stack([truth[j:j + 7] for j in first])
        preds = WindowPredictions(first, clean + rng.normal(scale=0.05, size=clean.shape))
        raw_errors.append(rmse(preds.preds[:, 0], truth[:54]))
        series = postprocess_pipeline(preds)
        post_errors.append(rmse(series.values, truth))
    assert np.mean(post_errors) < np.mean(raw_errors)


def test_many_recordings_keep_their_order():
    """Threaded processing returns one series per input, in order."""
    recordings = [WindowPredictions(np.arange(n), np.full((n, 7), 0.5 + n / 100)) for n in (3, 8, 5)]
    out = postprocess_many(recordings, threads=3)
    assert [len(s) for s in out] == [9, 14, 11]
    np.testing.assert_allclose(out[1].values, 0.58)
