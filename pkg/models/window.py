"""Window, fold and prepared-dataset models."""

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Sequence

import numpy as np

from core.exceptions import ParameterError

WINDOW_LENGTH = 4910
MAX_SEGMENT_LENGTH = 4885
TARGET_COUNT = 7
PEAKS_PER_WINDOW = TARGET_COUNT + 1


@dataclass
class WindowSample:
    """One padded input segment spanning 8 R-peaks and its 7 target IBIs."""

    input: np.ndarray
    targets: np.ndarray
    subject_id: int
    first_beat_index: int
    pad_left: int
    augmented: bool = False

    def __repr__(self) -> str:
        return (f"WindowSample(subject_id={self.subject_id!r}, "
                f"first_beat_index={self.first_beat_index!r}, pad_left={self.pad_left!r})")


@dataclass
class FoldSplit:
    """Subject-disjoint train/validation/test partition named after its test subject."""

    fold_id: int
    train_subjects: FrozenSet[int]
    val_subjects: FrozenSet[int]
    test_subjects: FrozenSet[int]

    def __post_init__(self):
        self.train_subjects = frozenset(self.train_subjects)
        self.val_subjects = frozenset(self.val_subjects)
        self.test_subjects = frozenset(self.test_subjects)
        if (self.train_subjects & self.val_subjects or self.train_subjects & self.test_subjects
                or self.val_subjects & self.test_subjects):
            raise ParameterError(f"Fold {self.fold_id}: partitions share subjects")

    def subjects(self, partition: str) -> FrozenSet[int]:
        try:
            return {
                'train': self.train_subjects,
                'val': self.val_subjects,
                'test': self.test_subjects,
            }[partition]
        except KeyError as e:
            raise ParameterError(f"Unknown partition {partition!r}") from e

    def to_dict(self) -> Dict[str, Any]:
        """Convert split to dictionary representation."""
        return {
            'fold_id': self.fold_id,
            'train_subjects': sorted(self.train_subjects),
            'val_subjects': sorted(self.val_subjects),
            'test_subjects': sorted(self.test_subjects),
        }


@dataclass
class PreparedDataset:
    """Column-wise store of windows for one fold, with the fold split as audit trail."""

    inputs: np.ndarray
    targets: np.ndarray
    subject_ids: np.ndarray
    first_beat_indices: np.ndarray
    pad_left: np.ndarray
    augmented: np.ndarray
    split: FoldSplit
    window_length: int = WINDOW_LENGTH
    target_count: int = TARGET_COUNT
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.targets)

    @classmethod
    def from_windows(cls, windows: Sequence[WindowSample], split: FoldSplit,
                     window_length: int = WINDOW_LENGTH) -> 'PreparedDataset':
        """Stack windows, originals first, each group ordered by (subject_id, first_beat_index)."""
        ordered: List[WindowSample] = sorted(
            windows, key=lambda w: (w.augmented, w.subject_id, w.first_beat_index)
        )
        n = len(ordered)
        return cls(
            inputs=(np.stack([w.input for w in ordered]).astype(np.float32) if n
                    else np.zeros((0, window_length), dtype=np.float32)),
            targets=(np.stack([w.targets for w in ordered]).astype(np.float32) if n
                     else np.zeros((0, TARGET_COUNT), dtype=np.float32)),
            subject_ids=np.array([w.subject_id for w in ordered], dtype=np.int64),
            first_beat_indices=np.array([w.first_beat_index for w in ordered], dtype=np.int64),
            pad_left=np.array([w.pad_left for w in ordered], dtype=np.int64),
            augmented=np.array([w.augmented for w in ordered], dtype=bool),
            split=split,
            window_length=window_length,
        )

    def subset(self, mask: np.ndarray) -> 'PreparedDataset':
        return PreparedDataset(
            inputs=self.inputs[mask],
            targets=self.targets[mask],
            subject_ids=self.subject_ids[mask],
            first_beat_indices=self.first_beat_indices[mask],
            pad_left=self.pad_left[mask],
            augmented=self.augmented[mask],
            split=self.split,
            window_length=self.window_length,
            target_count=self.target_count,
            meta=dict(self.meta),
        )

    def partition(self, name: str) -> 'PreparedDataset':
        """Windows of the subjects in one partition; augmented windows only ever belong to 'train'."""
        subjects = np.array(sorted(self.split.subjects(name)), dtype=np.int64)
        mask = np.isin(self.subject_ids, subjects)
        if name != 'train':
            mask &= ~self.augmented
        return self.subset(mask)

    def recordings(self) -> List[tuple]:
        """Distinct (subject_id, augmented) recording keys in storage order."""
        keys = []
        for key in zip(self.subject_ids.tolist(), self.augmented.tolist()):
            if not keys or keys[-1] != key:
                keys.append(key)
        return keys

    def recording_mask(self, subject_id: int, augmented: bool = False) -> np.ndarray:
        return (self.subject_ids == subject_id) & (self.augmented == augmented)

    def __repr__(self) -> str:
        return (f"PreparedDataset(fold_id={self.split.fold_id!r}, windows={len(self)}, "
                f"augmented={int(self.augmented.sum())})")
