"""Command-line entry point for the IBI estimation pipeline."""

import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
from tabulate import tabulate

from core.checkpoint import load_checkpoint
from core.dataset_io import read_dataset, write_dataset
from core.exceptions import (ArchitectureError, DataError, EmptyWindowSet, NumericalError,
                             ParameterError, ShapeError, SignalFormatError)
from core.postprocess import median_filter, moving_average, postprocess_pipeline
from core.preparation import prepare_dataset
from core.settings import resolve_train_config, thread_count
from core.signal_io import list_signal_stems, load_profiles, read_signal, subject_stem, write_signal
from core.signalgen import default_profiles, synthesize_subject
from core.trainer import Evaluation, evaluate, infer, train
from models.report import (bpm_sidecar_path, write_bpm_csv, write_curves_csv, write_metric_csv,
                           write_points_csv)
from models.series import (read_predictions_csv, read_series_csv, write_series_csv)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOSS_CHOICES = click.Choice(["weighted", "huber"])


def _print_rows(rows) -> None:
    click.echo(tabulate([row.to_dict() for row in rows], headers="keys", floatfmt=".3f"))


def _write_evaluation(out: Path, rows, evaluation: Evaluation, points: Optional[Path]) -> None:
    write_metric_csv(out, rows)
    write_bpm_csv(bpm_sidecar_path(out), rows)
    if points is not None:
        write_points_csv(points, evaluation.points)
    _print_rows(rows)


def _train_options(func):
    """Options shared by `train` and `crossval`; None means 'not given'."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="key=value config file"),
        click.option("--batch-size", type=int, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--loss", "loss_preset", type=LOSS_CHOICES, default=None),
        click.option("--repad-per-epoch/--no-repad-per-epoch", default=None,
                     help="Re-randomise zero padding every epoch"),
        click.option("--full-scale/--desk-scale", default=None,
                     help="Batch 1024 / 200 epochs instead of batch 64 / 30 epochs"),
        click.option("--quiet", is_flag=True, help="No progress bar"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
@click.option("--env-file", type=click.Path(dir_okay=False), default=None,
              help=".env file providing IBINET_THREADS")
@click.pass_context
def cli(ctx, verbose, env_file):
    """Inter-beat interval estimation: synthesis, preparation, training, evaluation, inference."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    ctx.ensure_object(dict)
    ctx.obj['threads'] = thread_count(env_file)


@cli.command()
@click.option("--profiles", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list of subject profiles (default: the built-in 11 subjects)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fs", type=int, default=500, show_default=True)
@click.option("--duration", type=float, default=300.0, show_default=True,
              help="Recording length of the built-in profiles, seconds")
def synth(profiles, out_dir, seed, fs, duration):
    """Write synthetic .sig/.rpk pairs, one per subject profile."""
    subjects = load_profiles(profiles) if profiles else default_profiles(duration)
    for profile in subjects:
        signal = synthesize_subject(profile, fs, seed)
        write_signal(subject_stem(out_dir, profile.subject_id), signal)
        logger.info(f"Subject {profile.subject_id}: {len(signal.r_peaks)} beats, {signal.duration:.1f} s")
    click.echo(f"Wrote {len(subjects)} subjects to {out_dir}")


def _read_signals(signals_dir: str):
    stems = list_signal_stems(signals_dir)
    return [read_signal(stem) for stem in stems]


@cli.command()
@click.option("--signals", "signals_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--fold", "fold_id", type=int, required=True, help="Test subject id")
@click.option("--augment/--no-augment", default=False, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def prepare(ctx, signals_dir, fold_id, augment, out, seed):
    """Window the signals of one fold into a prepared dataset file."""
    signals = _read_signals(signals_dir)
    dataset = prepare_dataset(signals, fold_id, seed, augment=augment, threads=ctx.obj['threads'])
    write_dataset(out, dataset)
    click.echo(f"Wrote {dataset!r} to {out}")


@cli.command("train")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Checkpoint path")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Continue from a checkpoint of this fold")
@click.option("--seed", type=int, required=True)
@_train_options
def train_cmd(data, out, seed, resume, config_path, batch_size, epochs, loss_preset,
              repad_per_epoch, full_scale, quiet):
    """Train on a prepared dataset, keeping the best validation checkpoint."""
    dataset = read_dataset(data)
    config = resolve_train_config(
        config_path, seed=seed, batch_size=batch_size, epochs=epochs, loss_preset=loss_preset,
        repad_per_epoch=repad_per_epoch, full_scale=full_scale,
        fold_id=dataset.split.fold_id, augment=bool(dataset.augmented.any()),
    )
    resumed = load_checkpoint(resume) if resume else None
    _, report = train(dataset, config, out, progress=not quiet, resume=resumed)
    write_curves_csv(f"{out}.curves.csv", report.curves)
    report.write_json(f"{out}.report.json")
    click.echo(f"Best epoch {report.best_epoch}, validation metric {report.best_metric:.5f}; saved {out}")


@cli.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--partition", type=click.Choice(["test", "val", "train"]), default="test", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Metric report CSV")
@click.option("--points", type=click.Path(dir_okay=False), default=None,
              help="Per-IBI agreement points CSV")
@click.pass_context
def eval_cmd(ctx, checkpoint, data, partition, out, points):
    """Score a checkpoint on one partition, raw and post-processed."""
    model = load_checkpoint(checkpoint)
    dataset = read_dataset(data)
    if dataset.window_length != model.config.input_length:
        raise ArchitectureError(
            f"Checkpoint expects windows of {model.config.input_length} samples, "
            f"dataset has {dataset.window_length}"
        )
    evaluation = evaluate(model, dataset.partition(partition), threads=ctx.obj['threads'])
    _write_evaluation(Path(out), evaluation.rows(), evaluation, Path(points) if points else None)


@cli.command("infer")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--signals", "signals_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Pad placement seed")
def infer_cmd(checkpoint, signals_dir, out_dir, seed):
    """Estimate a post-processed IBI series for every recording in a directory."""
    model = load_checkpoint(checkpoint)
    stems = list_signal_stems(signals_dir)
    if not stems:
        logger.warning(f"{signals_dir}: no .sig/.rpk pairs found")
    written = 0
    for stem in stems:
        signal = read_signal(stem)
        try:
            series = infer(model, signal, seed)
        except EmptyWindowSet as e:
            logger.warning(f"{stem}: skipped ({e})")
            continue
        write_series_csv(Path(out_dir) / f"{stem.name}.csv", series)
        written += 1
    click.echo(f"Wrote {written} IBI series to {out_dir}")


@cli.command("postprocess")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Window predictions CSV (first_beat_index, ibi_0..) or IBI series CSV")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def postprocess_cmd(input_path, out):
    """Smooth window predictions (or an IBI series) into a per-beat IBI series."""
    with open(input_path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header[0] == "first_beat_index":
        series = postprocess_pipeline(read_predictions_csv(input_path))
    elif header[0] == "beat_index":
        series = moving_average(median_filter(read_series_csv(input_path)))
    else:
        raise SignalFormatError(f"{input_path}: unrecognised header {header}")
    write_series_csv(out, series)
    click.echo(f"Wrote {len(series)} beats to {out}")


def _parse_folds(folds: Optional[str], available: List[int]) -> List[int]:
    if not folds:
        return available
    try:
        chosen = [int(f) for f in folds.split(",") if f.strip()]
    except ValueError as e:
        raise ParameterError(f"--folds must be comma-separated integers, got {folds!r}") from e
    return chosen


@cli.command("crossval")
@click.option("--signals", "signals_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Metric report CSV")
@click.option("--seed", type=int, required=True)
@click.option("--folds", default=None, help="Comma-separated fold ids (default: every subject)")
@click.option("--augment/--no-augment", default=False, show_default=True)
@click.option("--work-dir", type=click.Path(file_okay=False), default=None,
              help="Where fold checkpoints go (default: next to --out)")
@click.option("--points", type=click.Path(dir_okay=False), default=None)
@_train_options
@click.pass_context
def crossval_cmd(ctx, signals_dir, out, seed, folds, augment, work_dir, points, config_path,
                 batch_size, epochs, loss_preset, repad_per_epoch, full_scale, quiet):
    """Leave-one-subject-out: prepare, train and test every fold, then pool all test IBIs."""
    threads = ctx.obj['threads']
    signals = _read_signals(signals_dir)
    work = Path(work_dir) if work_dir else Path(out).parent
    evaluations = []
    rows = []
    for fold_id in _parse_folds(folds, sorted(s.subject_id for s in signals)):
        dataset = prepare_dataset(signals, fold_id, seed, augment=augment, threads=threads)
        config = resolve_train_config(
            config_path, seed=seed, batch_size=batch_size, epochs=epochs, loss_preset=loss_preset,
            repad_per_epoch=repad_per_epoch, full_scale=full_scale, fold_id=fold_id, augment=augment,
        )
        checkpoint = work / f"fold_{fold_id:02d}.ibck"
        model, report = train(dataset, config, checkpoint, progress=not quiet)
        write_curves_csv(f"{checkpoint}.curves.csv", report.curves)
        evaluation = evaluate(model, dataset.partition('test'), threads=threads)
        report.metrics = evaluation.rows()
        report.write_json(f"{checkpoint}.report.json")
        evaluations.append(evaluation)
        rows += report.metrics
    if not evaluations:
        raise ParameterError("No folds to run")
    pooled = Evaluation.concatenate(evaluations)
    rows += pooled.rows()
    _write_evaluation(Path(out), rows, pooled, Path(points) if points else None)


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and translate failures into exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="ibinet", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except (ParameterError, ArchitectureError, ShapeError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (DataError, OSError) as e:
        logger.error(str(e))
        return EXIT_DATA
    except NumericalError as e:
        logger.error(str(e))
        return EXIT_NUMERICAL
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
