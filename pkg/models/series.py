"""Per-window predictions and per-beat IBI series."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from core.exceptions import ParameterError, ShapeError, SignalFormatError

SERIES_COLUMNS = ("beat_index", "ibi_seconds")


@dataclass
class WindowPredictions:
    """
    Seven-IBI predictions of one recording's windows.

    Row i predicts IBIs first_beat_indices[i] .. first_beat_indices[i] + 6.
    Windows advance by one beat; a jump of more than one between
    consecutive rows marks windows that were discarded.
    """

    first_beat_indices: np.ndarray
    preds: np.ndarray
    subject_id: int = 0

    def __post_init__(self):
        self.first_beat_indices = np.asarray(self.first_beat_indices, dtype=np.int64)
        self.preds = np.asarray(self.preds, dtype=np.float64)
        if self.preds.ndim != 2 or len(self.preds) != len(self.first_beat_indices):
            raise ShapeError(
                f"WindowPredictions: preds {self.preds.shape} do not match "
                f"{len(self.first_beat_indices)} window indices"
            )
        if np.any(np.diff(self.first_beat_indices) <= 0):
            raise ParameterError("WindowPredictions: first_beat_indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.first_beat_indices)

    def _gap_positions(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.first_beat_indices) > 1) + 1

    @property
    def gaps(self) -> List[int]:
        """First beat index of every window that follows a discarded run."""
        return self.first_beat_indices[self._gap_positions()].tolist()

    def segments(self) -> List['WindowPredictions']:
        """
        Split the table at every gap into contiguous stride-1 window runs.

        Returns:
            One WindowPredictions per run, in order; empty for an empty table
        """
        if not len(self):
            return []
        cuts = self._gap_positions()
        return [
            WindowPredictions(first, preds, self.subject_id)
            for first, preds in zip(np.split(self.first_beat_indices, cuts), np.split(self.preds, cuts))
        ]


@dataclass
class IbiSeries:
    """
    Ordered beat indices with one IBI value in seconds each.

    `segment_ids` tags every beat with the window run it came from; beats of
    different segments are never filtered together even when their indices
    are adjacent. Defaults to a single segment.
    """

    beat_indices: np.ndarray
    values: np.ndarray
    segment_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.beat_indices = np.asarray(self.beat_indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.beat_indices.shape != self.values.shape or self.values.ndim != 1:
            raise ShapeError(
                f"IbiSeries: beat_indices {self.beat_indices.shape} and values "
                f"{self.values.shape} must be matching 1-D arrays"
            )
        if np.any(np.diff(self.beat_indices) <= 0):
            raise ParameterError("IbiSeries: beat indices must be strictly increasing")
        if self.segment_ids is None:
            self.segment_ids = np.zeros(len(self.values), dtype=np.int64)
        self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
        if self.segment_ids.shape != self.values.shape:
            raise ShapeError(
                f"IbiSeries: segment_ids {self.segment_ids.shape} do not match values {self.values.shape}"
            )
        if np.any(np.diff(self.segment_ids) < 0):
            raise ParameterError("IbiSeries: segment ids must be non-decreasing")

    def __len__(self) -> int:
        return len(self.values)

    def runs(self) -> List[slice]:
        """Slices of consecutive beat indices within one segment."""
        if not len(self):
            return []
        breaks = (np.diff(self.beat_indices) != 1) | (np.diff(self.segment_ids) != 0)
        cuts = np.flatnonzero(breaks) + 1
        bounds = [0, *cuts.tolist(), len(self)]
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def with_values(self, values: np.ndarray) -> 'IbiSeries':
        """Same beats and segments carrying new values."""
        return IbiSeries(self.beat_indices.copy(), values, self.segment_ids.copy())

    def __repr__(self) -> str:
        return f"IbiSeries(beats={len(self)})"


def write_series_csv(path: Union[str, Path], series: IbiSeries) -> Path:
    """Write `beat_index,ibi_seconds` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SERIES_COLUMNS)
        for beat, value in zip(series.beat_indices.tolist(), series.values.tolist()):
            writer.writerow([beat, f"{value:.6f}"])
    return path


def read_series_csv(path: Union[str, Path]) -> IbiSeries:
    """Read a file written by `write_series_csv`."""
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != SERIES_COLUMNS:
                raise SignalFormatError(f"{path}: expected columns {SERIES_COLUMNS}")
            rows = [(int(r['beat_index']), float(r['ibi_seconds'])) for r in reader]
    except ValueError as e:
        raise SignalFormatError(f"{path}: {e}") from e
    beats = [b for b, _ in rows]
    values = [v for _, v in rows]
    try:
        return IbiSeries(np.array(beats, dtype=np.int64), np.array(values, dtype=np.float64))
    except ParameterError as e:
        raise SignalFormatError(f"{path}: {e}") from e


def prediction_columns(width: int = 7) -> tuple:
    """CSV header for window predictions of the given width."""
    return ("first_beat_index", *(f"ibi_{slot}" for slot in range(width)))


def write_predictions_csv(path: Union[str, Path], preds: WindowPredictions) -> Path:
    """Write one row per window: first_beat_index then its predicted IBIs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(prediction_columns(preds.preds.shape[1]))
        for first, row in zip(preds.first_beat_indices.tolist(), preds.preds.tolist()):
            writer.writerow([first, *(f"{v:.6f}" for v in row)])
    return path


def read_predictions_csv(path: Union[str, Path], subject_id: int = 0) -> WindowPredictions:
    """
    Read a file written by `write_predictions_csv`.

    Args:
        path: CSV with a first_beat_index column then one column per IBI slot
        subject_id: Subject to tag the predictions with

    Returns:
        The prediction table

    Raises:
        SignalFormatError: On a bad header, unparsable values or unordered rows
    """
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or header[0] != "first_beat_index" or len(header) < 2:
                raise SignalFormatError(f"{path}: not a window prediction file")
            rows = [[float(v) for v in row] for row in reader if row]
        table = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    except ValueError as e:
        raise SignalFormatError(f"{path}: {e}") from e
    try:
        return WindowPredictions(table[:, 0].astype(np.int64), table[:, 1:], subject_id)
    except ParameterError as e:
        raise SignalFormatError(f"{path}: {e}") from e
