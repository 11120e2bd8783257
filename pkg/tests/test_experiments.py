"""Full-scale synthetic experiments with the default network. Deselected unless `-m slow`."""

import numpy as np
import pytest

from core.preparation import prepare_dataset
from core.signalgen import default_profiles, synthesize_subject
from core.trainer import evaluate, train
from models.config import TrainConfig

LOW_IBI_SUBJECT = 3


@pytest.fixture(scope="module")
def population():
    return [synthesize_subject(p, 500, seed=0) for p in default_profiles(duration=300.0)]


def _test_rows(signals, fold_id, seed, augment):
    dataset = prepare_dataset(signals, fold_id=fold_id, seed=seed, augment=augment)
    model, _ = train(dataset, TrainConfig(seed=seed), progress=False)
    return evaluate(model, dataset.partition('test')).rows()


@pytest.mark.slow
def test_fold_one_reaches_target_accuracy(population):
    """Eleven five-minute subjects, fold 1, desk profile: r >= 90% and RMSE <= 35 ms after smoothing."""
    raw, post = _test_rows(population, fold_id=1, seed=0, augment=True)
    assert post.r_percent >= 90.0
    assert post.rmse_ms <= 35.0
    assert post.rmse_ms <= raw.rmse_ms


@pytest.mark.slow
def test_augmentation_helps_the_fast_rhythm_subject(population):
    """Holding out the fastest rhythm, augmented training wins on most seeds."""
    assert np.median(population[LOW_IBI_SUBJECT - 1].ibis()) < 0.6
    wins = 0
    for seed in range(3):
        _, without = _test_rows(population, LOW_IBI_SUBJECT, seed, augment=False)
        _, with_aug = _test_rows(population, LOW_IBI_SUBJECT, seed, augment=True)
        wins += with_aug.rmse_ms < without.rmse_ms
    assert wins >= 2
