"""Training loop with best-checkpoint selection, evaluation and inference."""

import logging
import time
from copy import deepcopy
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from core.checkpoint import save_checkpoint
from core.exceptions import DegenerateSeries, DivergenceError, EmptyWindowSet, ParameterError, ShapeError
from core.lossmetrics import metric_row, weighted_loss, weighted_metric
from core.network import Mibinet, build_mibinet, predict as predict_batches
from core.optim import Adam, StagedSchedule
from core.postprocess import postprocess_many, postprocess_pipeline, rolling_average
from core.preparation import conform
from core.windowing import extract_windows, repad
from models.architecture import ArchConfig, default_arch
from models.config import TrainConfig
from models.report import EpochRecord, MetricRow, RunReport
from models.series import IbiSeries, WindowPredictions
from models.signal import AnnotatedSignal
from models.window import PreparedDataset

logger = logging.getLogger(__name__)

SHUFFLE_STREAM = 1
REPAD_STREAM = 3

Predictor = Callable[[PreparedDataset], np.ndarray]


def _snapshot(model: Mibinet) -> Dict[str, np.ndarray]:
    state = {name: value.copy() for name, value in model.named_parameters().items()}
    state.update({name: value.copy() for name, value in model.named_buffers().items()})
    return state


def _repad_inputs(inputs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = np.empty_like(inputs)
    for i, window in enumerate(inputs):
        out[i], _ = repad(window, rng)
    return out


def validation_metric(model: Mibinet, val: PreparedDataset, config: TrainConfig) -> float:
    """Checkpoint-selection metric on raw validation predictions."""
    preds = predict_batches(model, val.inputs, config.eval_batch_size)
    if not np.all(np.isfinite(preds)):
        raise DivergenceError("Validation predictions contain NaN or Inf")
    try:
        return weighted_metric(preds, val.targets, config.metric)
    except DegenerateSeries:
        if np.ptp(val.targets) == 0:
            raise
        logger.warning("Validation predictions are constant; epoch cannot be selected")
        return float('inf')


def _resume_start(resume: Mibinet, dataset: PreparedDataset, config: TrainConfig) -> int:
    """First epoch still to run when continuing from `resume`."""
    if resume.config.input_length != dataset.window_length:
        raise ShapeError(
            f"Resumed model expects windows of {resume.config.input_length} samples, "
            f"dataset has {dataset.window_length}"
        )
    fold_id = resume.metadata.get('fold_id', dataset.split.fold_id)
    if fold_id != dataset.split.fold_id:
        raise ParameterError(f"Resumed model was trained on fold {fold_id}, not {dataset.split.fold_id}")
    start = int(resume.metadata.get('epoch', -1)) + 1
    if start >= config.epochs:
        raise ParameterError(f"Resumed model already reached epoch {start - 1} of {config.epochs}")
    return start


def train(dataset: PreparedDataset, config: TrainConfig,
          checkpoint_path: Optional[Union[str, Path]] = None,
          arch: Optional[ArchConfig] = None, progress: bool = True,
          resume: Optional[Mibinet] = None):
    """
    Fit a model on the training partition of `dataset`.

    Every epoch runs seeded shuffled minibatches under the staged learning
    rate, then scores the validation partition; the weights with the lowest
    validation metric are kept (and written to `checkpoint_path` when given).

    Args:
        dataset: prepared fold dataset
        config: training settings; `epochs` is the total including resumed ones
        checkpoint_path: where to write the best checkpoint
        arch: architecture for a fresh model; the default network when None
        progress: show a tqdm bar
        resume: a loaded checkpoint to continue from, with its weights, Adam
            moments and best metric; training restarts at the epoch after
            the one it was saved at

    Returns:
        (best model, RunReport)

    Raises:
        EmptyWindowSet: if the training or validation partition is empty
        DivergenceError: on a NaN/Inf loss, naming the epoch and batch
        ParameterError: if `resume` belongs to another fold or has no epochs left
    """
    started = time.perf_counter()
    train_set, val_set = dataset.partition('train'), dataset.partition('val')
    if len(train_set) < 2:
        raise EmptyWindowSet(f"Fold {dataset.split.fold_id}: {len(train_set)} training windows")
    if not len(val_set):
        raise EmptyWindowSet(f"Fold {dataset.split.fold_id}: no validation windows")

    report = RunReport(config=config.to_flat(), created_at=datetime.now().isoformat(timespec='seconds'))
    best_state: Dict[str, np.ndarray] = {}
    if resume is not None:
        start_epoch = _resume_start(resume, dataset, config)
        model = resume
        optimizer = Adam(state=deepcopy(resume.optimizer_state))
        report.best_epoch = start_epoch - 1
        report.best_metric = float(resume.metadata.get('best_metric', float('inf')))
        best_state = _snapshot(model)
        logger.info(f"Resuming at epoch {start_epoch} (Adam step {optimizer.state.step})")
    else:
        if arch is None:
            arch = default_arch(config.dense_widths)
            arch.input_length = dataset.window_length
        start_epoch = 0
        model = build_mibinet(arch, config.seed)
        optimizer = Adam()
    schedule = StagedSchedule(config.epochs)
    loss_weights = config.loss_weights
    logger.info(f"Training {model!r} on {len(train_set)} windows, validating on {len(val_set)}")

    improved = False
    epochs = tqdm(range(start_epoch, config.epochs), desc="epochs", unit="epoch", disable=not progress)

    for epoch in epochs:
        lr = schedule(epoch)
        rng = np.random.default_rng([config.seed, SHUFFLE_STREAM, epoch])
        if config.repad_per_epoch:
            inputs = _repad_inputs(train_set.inputs, np.random.default_rng([config.seed, REPAD_STREAM, epoch]))
        else:
            inputs = train_set.inputs
        order = rng.permutation(len(train_set))
        losses: List[float] = []

        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            index = order[start:start + config.batch_size]
            if len(index) < 2:
                continue
            out = model.forward(inputs[index][:, None, :], training=True)
            loss, grad = weighted_loss(out, train_set.targets[index], loss_weights)
            if not np.isfinite(loss):
                raise DivergenceError(f"Loss is {loss} at epoch {epoch}, batch {batch}")
            model.backward(grad)
            optimizer.step(model.named_parameters(), model.named_grads(), lr)
            losses.append(loss)

        metric = validation_metric(model, val_set, config)
        record = EpochRecord(epoch, float(np.mean(losses)), metric, lr)
        report.curves.append(record)
        epochs.set_postfix(loss=f"{record.train_loss:.4f}", val=f"{metric:.4f}")
        logger.debug(f"Epoch {epoch}: loss {record.train_loss:.5f}, val metric {metric:.5f}, lr {lr:g}")

        if report.best_epoch < 0 or metric < report.best_metric:
            report.best_epoch, report.best_metric = epoch, metric
            best_state = _snapshot(model)
            model.metadata = {'epoch': epoch, 'best_metric': metric, 'seed': config.seed,
                              'fold_id': dataset.split.fold_id}
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path, optimizer_state=optimizer.state)
                improved = True

    model.load_state(best_state)
    model.metadata = {'epoch': report.best_epoch, 'best_metric': report.best_metric,
                      'seed': config.seed, 'fold_id': dataset.split.fold_id}
    if resume is not None and checkpoint_path is not None and not improved:
        # no epoch beat the resumed weights
        save_checkpoint(model, checkpoint_path, optimizer_state=resume.optimizer_state)
    report.timings['train_s'] = time.perf_counter() - started
    logger.info(f"Best epoch {report.best_epoch} with validation metric {report.best_metric:.5f}")
    return model, report


@dataclass
class Evaluation:
    """
    Concatenated per-IBI series of one evaluated partition, at both stages.

    `series` holds the smoothed series of every recording, keyed by
    (subject_id, augmented).
    """

    fold_id: str
    raw_pred: np.ndarray
    raw_truth: np.ndarray
    post_pred: np.ndarray
    post_truth: np.ndarray
    points: List[Dict] = field(default_factory=list)
    series: Dict[Tuple[int, bool], IbiSeries] = field(default_factory=dict)

    def rows(self) -> List[MetricRow]:
        return [
            metric_row(self.fold_id, 'raw', self.raw_pred, self.raw_truth),
            metric_row(self.fold_id, 'postprocessed', self.post_pred, self.post_truth),
        ]

    @classmethod
    def concatenate(cls, parts: Sequence['Evaluation'], fold_id: str = 'all') -> 'Evaluation':
        return cls(
            fold_id=fold_id,
            raw_pred=np.concatenate([p.raw_pred for p in parts]),
            raw_truth=np.concatenate([p.raw_truth for p in parts]),
            post_pred=np.concatenate([p.post_pred for p in parts]),
            post_truth=np.concatenate([p.post_truth for p in parts]),
            points=[point for p in parts for point in p.points],
        )


def _earliest_prediction(preds: WindowPredictions, series: IbiSeries) -> np.ndarray:
    """For each beat of `series`, the prediction of the first window of its segment that covers it."""
    out = np.full(len(series), np.nan)
    position = {(int(s), int(b)): i for i, (s, b) in enumerate(zip(series.segment_ids, series.beat_indices))}
    for segment_id, segment in enumerate(preds.segments()):
        for first, row in zip(segment.first_beat_indices.tolist(), segment.preds):
            for slot, value in enumerate(row):
                i = position.get((segment_id, first + slot))
                if i is not None and np.isnan(out[i]):
                    out[i] = value
    return out


def evaluate(model: Optional[Mibinet], dataset: PreparedDataset, fold_id=None,
             predict: Optional[Predictor] = None, threads: int = 1,
             batch_size: int = 256) -> Evaluation:
    """
    Score every window of `dataset`, post-process each recording and
    concatenate all subjects.

    The raw stage compares every predicted slot with its target; the
    postprocessed stage compares each recording's smoothed per-beat series
    with the true per-beat IBIs. `predict` replaces the model forward.
    """
    if not len(dataset):
        raise EmptyWindowSet("Nothing to evaluate: the partition has no windows")
    fold_id = dataset.split.fold_id if fold_id is None else fold_id
    preds = (predict(dataset) if predict is not None
             else predict_batches(model, dataset.inputs, batch_size)).astype(np.float64)

    keys, recordings, truths = dataset.recordings(), [], []
    for subject_id, augmented in keys:
        mask = dataset.recording_mask(subject_id, augmented)
        first = dataset.first_beat_indices[mask]
        recordings.append(WindowPredictions(first, preds[mask], subject_id))
        truths.append(rolling_average(WindowPredictions(first, dataset.targets[mask], subject_id)))
    smoothed = postprocess_many(recordings, threads)

    points, series = [], {}
    for key, recording, truth, post in zip(keys, recordings, truths, smoothed):
        raw = _earliest_prediction(recording, post)
        series[key] = post
        points += [
            {'subject_id': recording.subject_id, 'beat_index': int(b), 'truth_s': float(t),
             'raw_pred_s': float(r), 'post_pred_s': float(p)}
            for b, t, r, p in zip(post.beat_indices, truth.values, raw, post.values)
        ]

    return Evaluation(
        fold_id=str(fold_id),
        raw_pred=preds.ravel(),
        raw_truth=dataset.targets.astype(np.float64).ravel(),
        post_pred=np.concatenate([s.values for s in smoothed]),
        post_truth=np.concatenate([t.values for t in truths]),
        points=points,
        series=series,
    )


def infer(model: Mibinet, signal: AnnotatedSignal, seed: int = 0,
          batch_size: int = 256) -> IbiSeries:
    """
    Window one annotated recording with a fixed seed, predict and post-process.

    Raises:
        EmptyWindowSet: if the recording has fewer than 8 R-peaks
    """
    (signal,) = conform([signal])
    windows = extract_windows(signal, seed, window_length=model.config.input_length)
    if not windows:
        raise EmptyWindowSet(f"Subject {signal.subject_id}: every window was discarded")
    inputs = np.stack([w.input for w in windows])
    first = np.array([w.first_beat_index for w in windows], dtype=np.int64)
    preds = predict_batches(model, inputs, batch_size)
    return postprocess_pipeline(WindowPredictions(first, preds, signal.subject_id))
