"""Reading and writing `.sig` / `.rpk` annotated-signal file pairs."""

import json
import logging
import re
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from core.exceptions import ParameterError, SignalFormatError
from models.signal import AnnotatedSignal, SubjectProfile

logger = logging.getLogger(__name__)

SIG_MAGIC = b"IBSG"
SIG_VERSION = 1
SIG_HEADER = struct.Struct("<4sHIQ")

PathLike = Union[str, Path]


def signal_paths(stem: PathLike) -> Tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_suffix(".sig"), stem.with_suffix(".rpk")


def subject_stem(directory: PathLike, subject_id: int) -> Path:
    return Path(directory) / f"subject_{subject_id:02d}"


def write_signal(stem: PathLike, signal: AnnotatedSignal) -> Tuple[Path, Path]:
    """Write the waveform and its R-peak annotation next to each other."""
    sig_path, rpk_path = signal_paths(stem)
    sig_path.parent.mkdir(parents=True, exist_ok=True)
    header = SIG_HEADER.pack(SIG_MAGIC, SIG_VERSION, int(signal.fs), len(signal.samples))
    with open(sig_path, "wb") as f:
        f.write(header)
        f.write(signal.samples.astype("<f4").tobytes())
    rpk_path.write_text("".join(f"{int(idx)}\n" for idx in signal.r_peaks), encoding="utf-8")
    return sig_path, rpk_path


def read_signal(stem: PathLike, subject_id: int = None) -> AnnotatedSignal:
    """
    Load a `.sig`/`.rpk` pair.

    The subject id defaults to the trailing integer of the file stem.

    Raises:
        SignalFormatError: on bad magic, version, truncated payload or annotations
    """
    sig_path, rpk_path = signal_paths(stem)
    raw = sig_path.read_bytes()
    if len(raw) < SIG_HEADER.size:
        raise SignalFormatError(f"{sig_path}: truncated header")
    magic, version, fs, count = SIG_HEADER.unpack_from(raw)
    if magic != SIG_MAGIC:
        raise SignalFormatError(f"{sig_path}: bad magic {magic!r}")
    if version != SIG_VERSION:
        raise SignalFormatError(f"{sig_path}: unsupported version {version}")
    payload = raw[SIG_HEADER.size:]
    if len(payload) != 4 * count:
        raise SignalFormatError(f"{sig_path}: expected {count} samples, found {len(payload) // 4}")
    samples = np.frombuffer(payload, dtype="<f4").astype(np.float32)

    try:
        lines = [line.strip() for line in rpk_path.read_text(encoding="utf-8").splitlines()]
        r_peaks = np.array([int(line) for line in lines if line], dtype=np.int64)
    except ValueError as e:
        raise SignalFormatError(f"{rpk_path}: annotations must be decimal sample indices") from e

    if subject_id is None:
        subject_id = subject_id_from_stem(sig_path.stem)
    return AnnotatedSignal(samples, int(fs), r_peaks, subject_id=subject_id)


def subject_id_from_stem(stem: str) -> int:
    match = re.search(r"(\d+)$", stem)
    if match is None:
        raise SignalFormatError(f"Cannot infer a subject id from file name {stem!r}")
    return int(match.group(1))


def list_signal_stems(directory: PathLike) -> List[Path]:
    """Stems of every `.sig` file in a directory that has a matching `.rpk`."""
    stems = []
    for sig_path in sorted(Path(directory).glob("*.sig")):
        if sig_path.with_suffix(".rpk").exists():
            stems.append(sig_path.with_suffix(""))
        else:
            logger.warning(f"{sig_path}: no matching .rpk annotation, skipped")
    return stems


def load_profiles(path: PathLike) -> List[SubjectProfile]:
    """Parse a JSON list of subject profiles."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise SignalFormatError(f"{path}: expected a JSON list of profiles")
        return [SubjectProfile.from_dict(entry) for entry in entries]
    except json.JSONDecodeError as e:
        raise SignalFormatError(f"{path}: invalid JSON: {e}") from e
    except (TypeError, ParameterError) as e:
        raise SignalFormatError(f"{path}: malformed profile: {e}") from e
