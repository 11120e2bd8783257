"""
Binary checkpoint files (`IBCK`).

Layout, all little-endian:

    magic "IBCK" | version u16
    u32 length + UTF-8 JSON ArchConfig
    u32 length + UTF-8 JSON metadata
    u32 blob count
    blobs: u16 name length + UTF-8 name | u8 ndim | u32 dims... | f32 payload
    u32 CRC32 of everything above

Blob order: parameters in declaration order, batch-norm running statistics,
then Adam moments (`adam.m/<param>`, `adam.v/<param>`) when an optimizer
state is saved.
"""

import json
import logging
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.exceptions import ArchitectureError, CorruptCheckpoint
from core.network import Mibinet, build_mibinet
from core.optim import AdamState
from models.architecture import ArchConfig

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"IBCK"
CKPT_VERSION = 1
CKPT_HEADER = struct.Struct("<4sH")
U32 = struct.Struct("<I")
U16 = struct.Struct("<H")
U8 = struct.Struct("<B")

ADAM_M = "adam.m/"
ADAM_V = "adam.v/"


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return U32.pack(len(raw)) + raw


def _pack_blob(name: str, array: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype='<f4')
    parts = [U16.pack(len(raw_name)), raw_name, U8.pack(array.ndim)]
    parts += [U32.pack(dim) for dim in array.shape]
    parts.append(array.tobytes())
    return b"".join(parts)


def save_checkpoint(model: Mibinet, path: Union[str, Path],
                    metadata: Optional[Dict[str, Any]] = None,
                    optimizer_state: Optional[AdamState] = None) -> Path:
    """
    Write the model's architecture, parameters and running statistics.

    `metadata` (epoch, best metric, seed, ...) is stored as JSON alongside;
    when omitted, `model.metadata` is used.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(model.metadata if metadata is None else metadata)
    if optimizer_state is not None:
        meta['adam_step'] = optimizer_state.step

    blobs = list(model.named_parameters().items()) + list(model.named_buffers().items())
    if optimizer_state is not None:
        blobs += [(ADAM_M + name, value) for name, value in optimizer_state.m.items()]
        blobs += [(ADAM_V + name, value) for name, value in optimizer_state.v.items()]

    body = b"".join([
        CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION),
        _pack_text(model.config.to_json()),
        _pack_text(json.dumps(meta, sort_keys=True)),
        U32.pack(len(blobs)),
        *(_pack_blob(name, value) for name, value in blobs),
    ])
    path.write_bytes(body + U32.pack(zlib.crc32(body)))
    logger.debug(f"Saved checkpoint {path} ({len(blobs)} tensors)")
    return path


class _Reader:
    """Cursor over a checkpoint body that turns short reads into CorruptCheckpoint."""

    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.path = path
        self.offset = 0

    def unpack(self, fmt: struct.Struct) -> tuple:
        """Unpack one struct at the cursor and advance past it."""
        try:
            values = fmt.unpack_from(self.raw, self.offset)
        except struct.error as e:
            raise CorruptCheckpoint(f"{self.path}: truncated at byte {self.offset}") from e
        self.offset += fmt.size
        return values

    def take(self, n: int) -> bytes:
        """Next n raw bytes."""
        if self.offset + n > len(self.raw):
            raise CorruptCheckpoint(f"{self.path}: truncated at byte {self.offset}")
        chunk = self.raw[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def text(self) -> str:
        """A u32 length followed by that many UTF-8 bytes."""
        (n,) = self.unpack(U32)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptCheckpoint(f"{self.path}: undecodable text block") from e


def read_checkpoint(path: Union[str, Path]):
    """
    Parse a checkpoint into (ArchConfig, metadata, tensors).

    Raises:
        CorruptCheckpoint: on bad magic, version, CRC or truncation
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < CKPT_HEADER.size + U32.size:
        raise CorruptCheckpoint(f"{path}: file too short ({len(raw)} bytes)")
    body, (crc,) = raw[:-U32.size], U32.unpack(raw[-U32.size:])

    reader = _Reader(body, path)
    magic, version = reader.unpack(CKPT_HEADER)
    if magic != CKPT_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported version {version}")
    if zlib.crc32(body) != crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch")

    try:
        config = ArchConfig.from_json(reader.text())
        metadata = json.loads(reader.text())
    except (ValueError, KeyError, TypeError, ArchitectureError) as e:
        raise CorruptCheckpoint(f"{path}: unreadable descriptor") from e

    (count,) = reader.unpack(U32)
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack(U16)
        name = reader.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.unpack(U8)
        shape = tuple(reader.unpack(U32)[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        payload = reader.take(4 * size)
        tensors[name] = np.frombuffer(payload, dtype='<f4').reshape(shape).astype(np.float32)
    if reader.offset != len(body):
        raise CorruptCheckpoint(f"{path}: {len(body) - reader.offset} trailing bytes")
    return config, metadata, tensors


def load_checkpoint(path: Union[str, Path]) -> Mibinet:
    """
    Rebuild a model from a checkpoint.

    The returned model carries the stored metadata in `model.metadata` and,
    when present, the Adam moments in `model.optimizer_state`.
    """
    config, metadata, tensors = read_checkpoint(path)
    try:
        model = build_mibinet(config, seed=0)
        model.load_state(tensors)
    except ArchitectureError as e:
        raise CorruptCheckpoint(f"{path}: {e}") from e
    model.metadata = metadata

    m = {k[len(ADAM_M):]: v for k, v in tensors.items() if k.startswith(ADAM_M)}
    v = {k[len(ADAM_V):]: v for k, v in tensors.items() if k.startswith(ADAM_V)}
    if m:
        model.optimizer_state = AdamState(m=m, v=v, step=int(metadata.get('adam_step', 0)))
    return model
