"""Binary prepared-dataset files (`IBWD`)."""

import struct
from pathlib import Path
from typing import List, Union

import numpy as np

from core.exceptions import SignalFormatError
from models.window import FoldSplit, PreparedDataset

DATASET_MAGIC = b"IBWD"
DATASET_VERSION = 1
DATASET_HEADER = struct.Struct("<4sHIIQI")
U32 = struct.Struct("<I")


def record_dtype(window_length: int, target_count: int) -> np.dtype:
    """Packed little-endian record layout, one per window."""
    return np.dtype([
        ('subject_id', '<u4'),
        ('first_beat_index', '<u4'),
        ('pad_left', '<u2'),
        ('inputs', '<f4', (window_length,)),
        ('targets', '<f4', (target_count,)),
    ])


def _pack_ids(ids) -> bytes:
    ids = sorted(ids)
    return U32.pack(len(ids)) + struct.pack(f"<{len(ids)}I", *ids)


def write_dataset(path: Union[str, Path], dataset: PreparedDataset) -> Path:
    """
    Serialize a prepared dataset to a little-endian binary file.

    Args:
        path: Destination; parent directories are created
        dataset: Windows to store, augmented ones after all originals

    Returns:
        The written path

    Raises:
        SignalFormatError: If an original window follows an augmented one
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_aug = int(dataset.augmented.sum())
    if n_aug and not dataset.augmented[len(dataset) - n_aug:].all():
        raise SignalFormatError("Augmented windows must be stored after all original windows")

    records = np.zeros(len(dataset), dtype=record_dtype(dataset.window_length, dataset.target_count))
    records['subject_id'] = dataset.subject_ids
    records['first_beat_index'] = dataset.first_beat_indices
    records['pad_left'] = dataset.pad_left
    records['inputs'] = dataset.inputs
    records['targets'] = dataset.targets

    split = dataset.split
    with open(path, "wb") as f:
        f.write(DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, dataset.window_length,
                                    dataset.target_count, len(dataset), n_aug))
        f.write(U32.pack(split.fold_id))
        for ids in (split.train_subjects, split.val_subjects, split.test_subjects):
            f.write(_pack_ids(ids))
        f.write(records.tobytes())
    return path


def read_dataset(path: Union[str, Path]) -> PreparedDataset:
    """
    Load a prepared dataset written by `write_dataset`.

    Args:
        path: File to read

    Returns:
        The dataset with its fold split restored

    Raises:
        SignalFormatError: on bad magic, version or a truncated file
    """
    raw = Path(path).read_bytes()
    try:
        magic, version, window_length, target_count, count, n_aug = DATASET_HEADER.unpack_from(raw)
        if magic != DATASET_MAGIC:
            raise SignalFormatError(f"{path}: bad magic {magic!r}")
        if version != DATASET_VERSION:
            raise SignalFormatError(f"{path}: unsupported version {version}")
        offset = DATASET_HEADER.size
        (fold_id,) = U32.unpack_from(raw, offset)
        offset += U32.size
        partitions: List[List[int]] = []
        for _ in range(3):
            (n,) = U32.unpack_from(raw, offset)
            offset += U32.size
            partitions.append(list(struct.unpack_from(f"<{n}I", raw, offset)))
            offset += 4 * n
    except struct.error as e:
        raise SignalFormatError(f"{path}: truncated header") from e

    dtype = record_dtype(window_length, target_count)
    if len(raw) - offset != count * dtype.itemsize:
        raise SignalFormatError(f"{path}: expected {count} records of {dtype.itemsize} bytes")
    records = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)

    augmented = np.zeros(count, dtype=bool)
    augmented[count - n_aug:] = True
    return PreparedDataset(
        inputs=records['inputs'].astype(np.float32),
        targets=records['targets'].astype(np.float32),
        subject_ids=records['subject_id'].astype(np.int64),
        first_beat_indices=records['first_beat_index'].astype(np.int64),
        pad_left=records['pad_left'].astype(np.int64),
        augmented=augmented,
        split=FoldSplit(fold_id, *partitions),
        window_length=window_length,
        target_count=target_count,
    )
