"""
GVCK checkpoint format
======================

Little-endian, in the style of the tile format::

    magic "GVCK" | u32 version | u32 config length | config (UTF-8 key = value)
    | u32 parameter count
    | per parameter: u16 name length | name | u8 ndim | u32 dims... | f32 data
    | u32 CRC32 of everything before
"""

import logging
import struct
import zlib
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from ..config import build_model, dump_key_value_text, parse_key_value_text
from ..errors import (
    BadMagicError,
    ChecksumError,
    ShapeError,
    TileFormatError,
    TruncatedError,
    UnsupportedVersionError,
)
from ..models import RunConfig
from ..nn.model import GeoSegModel

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GVCK"
CHECKPOINT_VERSION = 1


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, fmt: str) -> Tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.payload):
            raise TruncatedError("checkpoint ends unexpectedly")
        values = struct.unpack_from(fmt, self.payload, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise TruncatedError("checkpoint ends unexpectedly")
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk


def encode_checkpoint(config: RunConfig, state: Dict[str, np.ndarray]) -> bytes:
    echo = dump_key_value_text(config).encode("utf-8")
    parts = [struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(echo)), echo]
    parts.append(struct.pack("<I", len(state)))
    for name, values in state.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{values.ndim}I", values.ndim, *values.shape))
        parts.append(np.ascontiguousarray(values, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(payload: bytes) -> Tuple[RunConfig, Dict[str, np.ndarray]]:
    if len(payload) < 4:
        raise TruncatedError("checkpoint is shorter than its magic")
    if payload[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"bad magic {payload[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    reader = _Reader(payload)
    _, version, echo_len = reader.take("<4sII")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} is not supported")
    echo = reader.raw(echo_len)
    (count,) = reader.take("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.take("<H")
        name = reader.raw(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.take("<B")
        shape = reader.take(f"<{ndim}I")
        n = int(np.prod(shape)) if shape else 1
        state[name] = np.frombuffer(reader.raw(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    (crc,) = reader.take("<I")
    if reader.offset != len(payload):
        raise TileFormatError(f"checkpoint has {len(payload) - reader.offset} trailing bytes")
    if zlib.crc32(payload[:-4]) & 0xFFFFFFFF != crc:
        raise ChecksumError("checkpoint CRC32 mismatch")
    config = build_model(
        RunConfig, parse_key_value_text(echo.decode("utf-8"), "<checkpoint>"), "<checkpoint>"
    )
    return config, state


def save_checkpoint(path: Union[str, Path], config: RunConfig, model: GeoSegModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(config, model.store.state_dict()))
    logger.debug("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[GeoSegModel, RunConfig]:
    """Rebuild the model described by a checkpoint and load its parameters."""
    config, state = decode_checkpoint(Path(path).read_bytes())
    model = GeoSegModel.from_run_config(config)
    try:
        model.store.load_state_dict(state)
    except (KeyError, ShapeError) as e:
        raise TileFormatError(f"checkpoint {path} does not match its config: {e}") from e
    return model, config
