"""Rolling-window extraction, zero-padding, normalisation and fold construction."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from core.exceptions import EmptyWindowSet, OversizeWindow, ParameterError
from models.signal import AnnotatedSignal
from models.window import (MAX_SEGMENT_LENGTH, PEAKS_PER_WINDOW, WINDOW_LENGTH,
                           FoldSplit, WindowSample)

logger = logging.getLogger(__name__)

WINDOW_FS = 500
NORM_EPS = 1e-8

SeedLike = Union[int, np.random.Generator, None]


def normalize_segment(segment: np.ndarray) -> np.ndarray:
    """Z-score a raw segment; a (near) constant segment becomes all zeros."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.size == 0:
        return segment.astype(np.float32)
    std = segment.std()
    if std < NORM_EPS:
        return np.zeros(segment.shape, dtype=np.float32)
    return ((segment - segment.mean()) / std).astype(np.float32)


def signal_region(window: np.ndarray) -> Tuple[int, int]:
    """[start, stop) span from the first to the last nonzero sample."""
    nonzero = np.flatnonzero(window)
    if nonzero.size == 0:
        return 0, 0
    return int(nonzero[0]), int(nonzero[-1]) + 1


def normalize(window: np.ndarray) -> np.ndarray:
    """Z-score the unpadded region of a padded window; padding stays exactly zero."""
    out = np.zeros(np.shape(window), dtype=np.float32)
    start, stop = signal_region(window)
    out[start:stop] = normalize_segment(np.asarray(window)[start:stop])
    return out


def pad_window(segment: np.ndarray, seed: SeedLike,
               length: int = WINDOW_LENGTH) -> Tuple[np.ndarray, int]:
    """Place a segment at a uniformly random offset inside a zero vector of fixed length."""
    segment = np.asarray(segment, dtype=np.float32)
    if len(segment) > length:
        raise OversizeWindow(f"Segment of {len(segment)} samples exceeds window length {length}")
    rng = np.random.default_rng(seed)
    pad_left = int(rng.integers(0, length - len(segment) + 1))
    padded = np.zeros(length, dtype=np.float32)
    padded[pad_left:pad_left + len(segment)] = segment
    return padded, pad_left


def repad(window: np.ndarray, seed: SeedLike) -> Tuple[np.ndarray, int]:
    """Move the signal region of an already padded window to a fresh random offset."""
    start, stop = signal_region(window)
    return pad_window(window[start:stop], seed, length=len(window))


def extract_windows(signal: AnnotatedSignal, seed: SeedLike,
                    window_length: int = WINDOW_LENGTH,
                    max_segment: int = MAX_SEGMENT_LENGTH,
                    expected_fs: int = WINDOW_FS) -> List[WindowSample]:
    """
    Cut one window per R-peak stride.

    Window j spans R-peaks j..j+7 and targets IBIs j..j+6. Its left edge is a
    random sample between R-peaks j-1 and j (sample 0 for j = 0), its right
    edge a random sample between R-peaks j+7 and j+8 (signal end for the last
    window). Segments are normalised, then randomly zero-padded. Segments
    longer than `max_segment` are discarded.

    Raises:
        EmptyWindowSet: if the signal has fewer than 8 R-peaks
    """
    if signal.fs != expected_fs:
        raise ParameterError(
            f"Subject {signal.subject_id}: windows need fs={expected_fs}, got {signal.fs}"
        )
    peaks = signal.r_peaks
    n_windows = len(peaks) - PEAKS_PER_WINDOW + 1
    if n_windows <= 0:
        raise EmptyWindowSet(
            f"Subject {signal.subject_id}: {len(peaks)} R-peaks, need {PEAKS_PER_WINDOW}"
        )

    rng = np.random.default_rng(seed)
    targets_all = (np.diff(peaks) / signal.fs).astype(np.float32)
    augmented = bool(signal.meta.get('augmented', False))
    windows: List[WindowSample] = []
    discarded = 0

    for j in range(n_windows):
        first, last = peaks[j], peaks[j + PEAKS_PER_WINDOW - 1]
        prev = peaks[j - 1] if j > 0 else -1
        nxt = peaks[j + PEAKS_PER_WINDOW] if j + PEAKS_PER_WINDOW < len(peaks) else len(signal.samples)

        left = int(rng.integers(prev + 1, first)) if prev + 1 < first else int(first)
        right = int(rng.integers(last + 1, nxt)) if last + 1 < nxt else int(last)
        segment = signal.samples[left:right + 1]

        if len(segment) > max_segment:
            discarded += 1
            logger.warning(
                f"Subject {signal.subject_id}: window {j} spans {len(segment)} samples "
                f"(> {max_segment}), discarded"
            )
            continue

        padded, pad_left = pad_window(normalize_segment(segment), rng, length=window_length)
        windows.append(WindowSample(
            input=padded,
            targets=targets_all[j:j + PEAKS_PER_WINDOW - 1].copy(),
            subject_id=signal.subject_id,
            first_beat_index=j,
            pad_left=pad_left,
            augmented=augmented,
        ))

    logger.debug(f"Subject {signal.subject_id}: {len(windows)} windows, {discarded} discarded")
    return windows


def extract_many(signals: Sequence[AnnotatedSignal], seed: int, threads: int = 1,
                 **kwargs) -> List[WindowSample]:
    """
    Extract windows from many signals in parallel.

    Each signal draws from its own seed derived from (seed, subject_id,
    augmented), and the merged list is ordered by
    (augmented, subject_id, first_beat_index) whatever the thread count.
    """
    def work(signal: AnnotatedSignal) -> List[WindowSample]:
        tag = 1 if signal.meta.get('augmented') else 0
        child = np.random.SeedSequence([seed, signal.subject_id, tag])
        try:
            return extract_windows(signal, np.random.default_rng(child), **kwargs)
        except EmptyWindowSet as e:
            logger.warning(str(e))
            return []

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(work, signals))
    merged = [w for result in results for w in result]
    merged.sort(key=lambda w: (w.augmented, w.subject_id, w.first_beat_index))
    return merged


def validation_count(n_remaining: int) -> int:
    """Roughly 20% of the non-test subjects, at least one, never all of them."""
    return max(1, min(int(round(0.2 * n_remaining)), n_remaining - 1))


def make_folds(subject_ids: Iterable[int], fold_id: int, seed: int) -> FoldSplit:
    """
    Build the leave-one-subject-out split named after its test subject.

    Validation subjects are drawn deterministically from (seed, fold_id)
    among the remaining subjects; everyone else trains.
    """
    subjects = sorted(set(int(s) for s in subject_ids))
    if fold_id not in subjects:
        raise ParameterError(f"Fold {fold_id} is not one of the subjects {subjects}")
    if len(subjects) < 3:
        raise ParameterError(f"Need at least 3 subjects for a fold split, got {len(subjects)}")

    rest = [s for s in subjects if s != fold_id]
    rng = np.random.default_rng([seed, fold_id])
    val = rng.choice(rest, size=validation_count(len(rest)), replace=False)
    val_set = frozenset(int(s) for s in val)
    return FoldSplit(
        fold_id=fold_id,
        train_subjects=frozenset(s for s in rest if s not in val_set),
        val_subjects=val_set,
        test_subjects=frozenset({fold_id}),
    )
