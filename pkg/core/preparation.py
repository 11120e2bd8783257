"""Build a prepared dataset for one fold from a set of annotated signals."""

import logging
from typing import List, Sequence

import numpy as np

from core.exceptions import AugmentationNotApplicable, DataError, ParameterError, SignalFormatError
from core.signalgen import resample, superpose_augment
from core.windowing import WINDOW_FS, extract_many, make_folds
from models.signal import AnnotatedSignal
from models.window import PreparedDataset

logger = logging.getLogger(__name__)

AUGMENT_STREAM = 2


def conform(signals: Sequence[AnnotatedSignal], fs: int = WINDOW_FS) -> List[AnnotatedSignal]:
    """Resample every signal not already at `fs`."""
    out = []
    for signal in signals:
        if signal.fs != fs:
            logger.info(f"Subject {signal.subject_id}: resampling {signal.fs} Hz -> {fs} Hz")
            signal = resample(signal, fs)
        out.append(signal)
    return out


def augment_sources(signals: Sequence[AnnotatedSignal], seed: int) -> List[AnnotatedSignal]:
    """Superposition-augmented copies of every signal eligible for it."""
    augmented = []
    for signal in signals:
        child = np.random.SeedSequence([seed, signal.subject_id, AUGMENT_STREAM])
        try:
            augmented.append(superpose_augment(signal, int(child.generate_state(1)[0])))
        except AugmentationNotApplicable as e:
            logger.debug(f"Subject {signal.subject_id}: not augmented ({e})")
        except SignalFormatError as e:
            logger.warning(f"Subject {signal.subject_id}: superposed copy discarded ({e})")
    return augmented


def prepare_dataset(signals: Sequence[AnnotatedSignal], fold_id: int, seed: int,
                    augment: bool = False, threads: int = 1) -> PreparedDataset:
    """
    Window every signal and split the windows into the fold's partitions.

    With `augment`, training-subject signals whose median IBI lies in the
    augmentation range contribute an extra superposed recording whose
    windows join the training partition only.

    Raises:
        ParameterError: if fold_id is not a subject or fewer than 3 subjects exist
        DataError: if no signal yields a window
    """
    signals = conform(signals)
    ids = [s.subject_id for s in signals]
    if len(set(ids)) != len(ids):
        raise ParameterError(f"Duplicate subject ids in {sorted(ids)}")
    split = make_folds(ids, fold_id, seed)

    extra: List[AnnotatedSignal] = []
    if augment:
        train_signals = [s for s in signals if s.subject_id in split.train_subjects]
        extra = augment_sources(train_signals, seed)
        if extra:
            logger.info(f"Fold {fold_id}: augmented subjects {[s.subject_id for s in extra]}")
        else:
            logger.warning(f"Fold {fold_id}: no training signal is eligible for augmentation")

    windows = extract_many(list(signals) + extra, seed, threads)
    if not windows:
        raise DataError(f"Fold {fold_id}: no signal produced a window")
    dataset = PreparedDataset.from_windows(windows, split)
    dataset.meta = {'seed': seed, 'augmented_subjects': sorted(s.subject_id for s in extra)}
    logger.info(
        f"Fold {fold_id}: {len(dataset)} windows "
        f"(train {len(dataset.partition('train'))}, val {len(dataset.partition('val'))}, "
        f"test {len(dataset.partition('test'))})"
    )
    return dataset
