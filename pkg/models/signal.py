"""Signal models: subject profiles and annotated waveforms."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict

import numpy as np

from core.exceptions import ParameterError, SignalFormatError

# Consecutive R-peaks closer than this are not a heartbeat.
MIN_PHYSIOLOGICAL_IBI = 0.2


class PulseTemplate(Enum):
    """Shapes available for a single rendered beat."""
    GAUSSIAN_DERIVATIVE = "gaussian-derivative"
    DAMPED_SINUSOID = "damped-sinusoid"
    BIPHASIC = "biphasic"


@dataclass
class SubjectProfile:
    """IBI statistics and rendering options for one synthetic subject."""

    subject_id: int
    ibi_mean: float = 0.7
    ibi_std: float = 0.05
    ibi_min: float = 0.5
    ibi_max: float = 1.1
    pulse_template_id: PulseTemplate = PulseTemplate.GAUSSIAN_DERIVATIVE
    noise_std: float = 0.05
    duration: float = 300.0

    def __post_init__(self):
        if isinstance(self.pulse_template_id, str):
            try:
                self.pulse_template_id = PulseTemplate(self.pulse_template_id)
            except ValueError as e:
                raise ParameterError(f"Unknown pulse template: {self.pulse_template_id!r}") from e
        self.check()

    def check(self) -> None:
        """Raise ParameterError unless the profile invariants hold."""
        if not 0 < self.ibi_min <= self.ibi_mean <= self.ibi_max:
            raise ParameterError(
                f"Subject {self.subject_id}: need 0 < ibi_min <= ibi_mean <= ibi_max, "
                f"got {self.ibi_min}, {self.ibi_mean}, {self.ibi_max}"
            )
        if self.ibi_std < 0:
            raise ParameterError(f"Subject {self.subject_id}: ibi_std must be >= 0, got {self.ibi_std}")
        if self.duration <= 0:
            raise ParameterError(f"Subject {self.subject_id}: duration must be > 0, got {self.duration}")
        if self.noise_std < 0:
            raise ParameterError(f"Subject {self.subject_id}: noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self) -> Dict[str, Any]:
        """Convert profile to dictionary representation."""
        return {
            'subject_id': self.subject_id,
            'ibi_mean': self.ibi_mean,
            'ibi_std': self.ibi_std,
            'ibi_min': self.ibi_min,
            'ibi_max': self.ibi_max,
            'pulse_template_id': self.pulse_template_id.value,
            'noise_std': self.noise_std,
            'duration': self.duration,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SubjectProfile':
        """Create SubjectProfile instance from dictionary."""
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"Unknown profile fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class AnnotatedSignal:
    """A sampled waveform with its ground-truth R-peak sample indices."""

    samples: np.ndarray
    fs: int
    r_peaks: np.ndarray
    subject_id: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        self.r_peaks = np.asarray(self.r_peaks, dtype=np.int64)
        if self.samples.ndim != 1:
            raise SignalFormatError(f"Subject {self.subject_id}: samples must be one-dimensional")
        if self.fs <= 0:
            raise SignalFormatError(f"Subject {self.subject_id}: fs must be positive, got {self.fs}")
        if self.r_peaks.size:
            if self.r_peaks[0] < 0 or self.r_peaks[-1] >= len(self.samples):
                raise SignalFormatError(
                    f"Subject {self.subject_id}: R-peak outside [0, {len(self.samples)})"
                )
            gaps = np.diff(self.r_peaks)
            if np.any(gaps <= 0):
                raise SignalFormatError(f"Subject {self.subject_id}: R-peaks not strictly increasing")
            if np.any(gaps / self.fs <= MIN_PHYSIOLOGICAL_IBI):
                worst = int(np.argmin(gaps))
                raise SignalFormatError(
                    f"Subject {self.subject_id}: IBI {gaps[worst] / self.fs:.3f} s after peak {worst} "
                    f"is below the {MIN_PHYSIOLOGICAL_IBI} s floor"
                )

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    def ibis(self) -> np.ndarray:
        """IBIs in seconds implied by consecutive R-peaks."""
        return np.diff(self.r_peaks) / self.fs

    def __repr__(self) -> str:
        return (f"AnnotatedSignal(subject_id={self.subject_id!r}, fs={self.fs!r}, "
                f"samples={len(self.samples)}, r_peaks={len(self.r_peaks)})")
