"""Evaluation rows, training curves and run reports."""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

METRIC_COLUMNS = ("fold_id", "stage", "r_percent", "rmse_ms", "ba_mean_ms",
                  "ba_loa_low_ms", "ba_loa_high_ms", "n_ibis")
BPM_COLUMNS = ("fold_id", "stage", "ba_bpm_mean", "ba_bpm_loa_low", "ba_bpm_loa_high", "n_ibis")
POINT_COLUMNS = ("subject_id", "beat_index", "truth_s", "raw_pred_s", "post_pred_s")
CURVE_COLUMNS = ("epoch", "train_loss", "val_metric", "lr")


@dataclass
class BlandAltmanStats:
    """Mean difference and 95% limits of agreement."""

    mean_diff: float
    loa_low: float
    loa_high: float
    n: int
    unit: str = "seconds"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MetricRow:
    """One line of the metric report: a fold at one stage (raw or postprocessed)."""

    fold_id: str
    stage: str
    r_percent: float
    rmse_ms: float
    ba_mean_ms: float
    ba_loa_low_ms: float
    ba_loa_high_ms: float
    n_ibis: int
    bpm: Optional[BlandAltmanStats] = None

    def to_dict(self) -> Dict[str, Any]:
        """Values of the primary CSV columns."""
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def to_bpm_dict(self) -> Dict[str, Any]:
        return {
            'fold_id': self.fold_id,
            'stage': self.stage,
            'ba_bpm_mean': self.bpm.mean_diff if self.bpm else float('nan'),
            'ba_bpm_loa_low': self.bpm.loa_low if self.bpm else float('nan'),
            'ba_bpm_loa_high': self.bpm.loa_high if self.bpm else float('nan'),
            'n_ibis': self.n_ibis,
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunReport:
    """
    Outcome of a training (and optionally evaluation) run.

    `config` is the flat TrainConfig snapshot; timings and the creation
    timestamp are the only fields that differ between identical runs.
    """

    config: Dict[str, Any]
    curves: List[EpochRecord] = field(default_factory=list)
    metrics: List[MetricRow] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float('inf')
    timings: Dict[str, float] = field(default_factory=dict)
    created_at: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config,
            'curves': [record.to_dict() for record in self.curves],
            'metrics': [row.to_dict() for row in self.metrics],
            'best_epoch': self.best_epoch,
            'best_metric': self.best_metric,
            'timings': self.timings,
            'created_at': self.created_at,
        }

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


def _write_rows(path: Union[str, Path], columns: Sequence[str],
                rows: Sequence[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return path


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def write_metric_csv(path: Union[str, Path], rows: Sequence[MetricRow]) -> Path:
    return _write_rows(path, METRIC_COLUMNS, [row.to_dict() for row in rows])


def bpm_sidecar_path(path: Union[str, Path]) -> Path:
    """`report.csv` -> `report_bpm.csv`."""
    path = Path(path)
    return path.with_name(f"{path.stem}_bpm{path.suffix or '.csv'}")


def write_bpm_csv(path: Union[str, Path], rows: Sequence[MetricRow]) -> Path:
    return _write_rows(path, BPM_COLUMNS, [row.to_bpm_dict() for row in rows])


def write_curves_csv(path: Union[str, Path], curves: Sequence[EpochRecord]) -> Path:
    return _write_rows(path, CURVE_COLUMNS, [record.to_dict() for record in curves])


def write_points_csv(path: Union[str, Path], points: Sequence[Dict[str, Any]]) -> Path:
    return _write_rows(path, POINT_COLUMNS, points)
