"""Command-line tests: subcommands end to end on small synthetic data, and exit codes."""

import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from core.checkpoint import save_checkpoint
from core.dataset_io import read_dataset
from core.network import build_mibinet
from core.settings import THREADS_ENV
from main import EXIT_DATA, EXIT_OK, EXIT_USAGE, cli, main
from models.architecture import tiny_arch
from models.report import METRIC_COLUMNS, POINT_COLUMNS
from models.series import (IbiSeries, WindowPredictions, read_series_csv, write_predictions_csv,
                           write_series_csv)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")


@pytest.fixture
def signals_dir(tmp_path):
    """Four short synthetic subjects written through the synth command."""
    profiles = tmp_path / "profiles.json"
    profiles.write_text(json.dumps([
        {'subject_id': 1, 'ibi_mean': 0.70, 'duration': 20.0},
        {'subject_id': 2, 'ibi_mean': 0.62, 'duration': 20.0},
        {'subject_id': 3, 'ibi_mean': 0.80, 'duration': 20.0},
        {'subject_id': 4, 'ibi_mean': 0.75, 'duration': 20.0},
    ]))
    out = tmp_path / "signals"
    assert main(["synth", "--profiles", str(profiles), "--out", str(out), "--seed", "5"]) == EXIT_OK
    return out


@pytest.fixture
def prepared(signals_dir, tmp_path):
    path = tmp_path / "fold_01.ibwd"
    assert main(["prepare", "--signals", str(signals_dir), "--fold", "1", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def checkpoint(tmp_path):
    return save_checkpoint(build_mibinet(tiny_arch(input_length=4910), seed=0), tmp_path / "tiny.ibck")


def test_help_lists_every_command():
    """The group help names all subcommands."""
    result = CliRunner().invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("synth", "prepare", "train", "eval", "infer", "postprocess", "crossval"):
        assert command in result.output


def test_synth_writes_signal_pairs(signals_dir):
    """One .sig/.rpk pair per profile."""
    assert sorted(p.name for p in signals_dir.glob("*.sig")) == [
        "subject_01.sig", "subject_02.sig", "subject_03.sig", "subject_04.sig"]
    assert len(list(signals_dir.glob("*.rpk"))) == 4


def test_prepare_writes_a_fold_dataset(prepared):
    """The dataset file records the fold split."""
    dataset = read_dataset(prepared)
    assert dataset.split.test_subjects == {1}
    assert len(dataset.partition('test')) > 0


def test_eval_writes_reports(checkpoint, prepared, tmp_path):
    """The metric CSV has a raw and a postprocessed row, plus bpm and point files."""
    out = tmp_path / "report.csv"
    points = tmp_path / "points.csv"
    code = main(["eval", "--checkpoint", str(checkpoint), "--data", str(prepared),
                 "--out", str(out), "--points", str(points)])
    assert code == EXIT_OK
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert [r['stage'] for r in rows] == ['raw', 'postprocessed']
    assert (tmp_path / "report_bpm.csv").exists()
    with open(points, newline="") as f:
        assert tuple(next(csv.DictReader(f))) == POINT_COLUMNS


def test_eval_rejects_mismatched_window_length(tmp_path, prepared):
    """A checkpoint built for 64-sample windows cannot score 4910-sample windows."""
    small = save_checkpoint(build_mibinet(tiny_arch(), seed=0), tmp_path / "small.ibck")
    code = main(["eval", "--checkpoint", str(small), "--data", str(prepared),
                 "--out", str(tmp_path / "r.csv")])
    assert code == EXIT_USAGE


def test_corrupt_checkpoint_is_a_data_error(tmp_path, prepared):
    """Unreadable checkpoints exit with the data-error code."""
    bad = tmp_path / "bad.ibck"
    bad.write_bytes(b"IBCK" + bytes(20))
    code = main(["eval", "--checkpoint", str(bad), "--data", str(prepared),
                 "--out", str(tmp_path / "r.csv")])
    assert code == EXIT_DATA


def test_infer_writes_one_series_per_recording(checkpoint, signals_dir, tmp_path):
    """Every recording gets a beat_index,ibi_seconds file."""
    out = tmp_path / "series"
    assert main(["infer", "--checkpoint", str(checkpoint), "--signals", str(signals_dir),
                 "--out", str(out)]) == EXIT_OK
    files = sorted(out.glob("*.csv"))
    assert [f.name for f in files] == [f"subject_0{i}.csv" for i in range(1, 5)]
    assert len(read_series_csv(files[0])) > 0


def test_infer_on_an_empty_directory(checkpoint, tmp_path):
    """No recordings is a warning, not a failure."""
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["infer", "--checkpoint", str(checkpoint), "--signals", str(empty),
                 "--out", str(tmp_path / "series")]) == EXIT_OK


def test_postprocess_window_predictions(tmp_path):
    """Window predictions become a smoothed per-beat series."""
    source = write_predictions_csv(tmp_path / "preds.csv",
                                   WindowPredictions(np.arange(10), np.full((10, 7), 0.8)))
    out = tmp_path / "series.csv"
    assert main(["postprocess", "--input", str(source), "--out", str(out)]) == EXIT_OK
    series = read_series_csv(out)
    assert series.beat_indices.tolist() == list(range(16))
    np.testing.assert_allclose(series.values, 0.8, atol=1e-6)


def test_postprocess_series_input(tmp_path):
    """An existing IBI series is filtered without re-averaging."""
    source = write_series_csv(tmp_path / "raw.csv",
                              IbiSeries(np.arange(7), [0.7, 0.7, 0.7, 2.0, 0.7, 0.7, 0.7]))
    out = tmp_path / "smooth.csv"
    assert main(["postprocess", "--input", str(source), "--out", str(out)]) == EXIT_OK
    np.testing.assert_allclose(read_series_csv(out).values, 0.7, atol=1e-6)


def test_postprocess_unknown_header(tmp_path):
    """Files that are neither predictions nor series are data errors."""
    source = tmp_path / "junk.csv"
    source.write_text("a,b\n1,2\n")
    assert main(["postprocess", "--input", str(source), "--out", str(tmp_path / "o.csv")]) == EXIT_DATA


def test_usage_errors(tmp_path, prepared, monkeypatch):
    """Missing options, missing config files and bad settings exit with the usage code."""
    assert main(["train", "--data", str(prepared)]) == EXIT_USAGE
    assert main(["train", "--data", str(prepared), "--out", str(tmp_path / "m.ibck"), "--seed", "0",
                 "--config", str(tmp_path / "missing.env")]) == EXIT_USAGE
    monkeypatch.setenv(THREADS_ENV, "none")
    assert main(["synth", "--out", str(tmp_path / "s")]) == EXIT_USAGE


@pytest.mark.slow
def test_train_then_eval_full_network(prepared, tmp_path):
    """A short full-size training run, resumed once, produces a checkpoint, curves and a report."""
    model = tmp_path / "fold_01.ibck"
    assert main(["train", "--data", str(prepared), "--out", str(model), "--seed", "0",
                 "--epochs", "2", "--batch-size", "16", "--quiet"]) == EXIT_OK
    assert model.exists()
    assert (tmp_path / "fold_01.ibck.curves.csv").exists()
    report = json.loads((tmp_path / "fold_01.ibck.report.json").read_text())
    assert len(report['curves']) == 2
    assert main(["train", "--data", str(prepared), "--out", str(model), "--seed", "0", "--resume", str(model),
                 "--epochs", "4", "--batch-size", "16", "--quiet"]) == EXIT_OK
    assert main(["eval", "--checkpoint", str(model), "--data", str(prepared),
                 "--out", str(tmp_path / "report.csv")]) == EXIT_OK


@pytest.mark.slow
def test_crossval_pools_every_fold(signals_dir, tmp_path):
    """Leave-one-subject-out over four subjects reports each fold and the pooled result."""
    out = tmp_path / "cv.csv"
    assert main(["crossval", "--signals", str(signals_dir), "--out", str(out), "--seed", "0",
                 "--epochs", "1", "--batch-size", "16", "--quiet"]) == EXIT_OK
    with open(out, newline="") as f:
        folds = [r['fold_id'] for r in csv.DictReader(f)]
    assert folds == ['1', '1', '2', '2', '3', '3', '4', '4', 'all', 'all']
    assert len(list(tmp_path.glob("fold_*.ibck"))) == 4
