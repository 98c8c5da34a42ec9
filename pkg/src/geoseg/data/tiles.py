"""
Geolocated tiles and the GVT1 binary tile format
================================================

All integers and floats are little-endian::

    magic "GVT1" | u32 version | u32 H | u32 W | u32 C
    | f32 raster C*H*W (row-major) | u8 mask H*W | u16 mask_ignore
    | f64 lon | f64 lat | u8 split | u32 site_id | u32 CRC32 of everything before

.. autosummary::
    ~TileRecord
    ~encode_tile
    ~decode_tile
    ~write_tile
    ~read_tile
"""

import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import (
    BadMagicError,
    ChecksumError,
    ShapeError,
    TileFormatError,
    TruncatedError,
    UnsupportedVersionError,
)
from ..models import IGNORE_INDEX, SPLITS, GeoCoord

logger = logging.getLogger(__name__)

TILE_MAGIC = b"GVT1"
TILE_VERSION = 1
TILE_SUFFIX = ".gvt"
_HEADER = struct.Struct("<4sIIII")
_FOOTER = struct.Struct("<HddBI")
_CRC = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class TileRecord:
    """One geolocated training example"""

    tile_id: str
    raster: np.ndarray
    mask: np.ndarray
    coord: GeoCoord
    split: str
    site_id: int

    def __post_init__(self) -> None:
        raster = np.ascontiguousarray(self.raster, dtype=np.float32)
        mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if raster.ndim != 3 or mask.ndim != 2 or raster.shape[1:] != mask.shape:
            raise ShapeError("tile raster must be C x H x W over an H x W mask", raster.shape, mask.shape)
        if mask.shape[0] % 16 or mask.shape[1] % 16:
            raise ShapeError("tile extents must be multiples of 16", mask.shape)
        if self.split not in SPLITS:
            raise ValueError(f"unknown split '{self.split}'")
        raster.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "mask", mask)

    @property
    def size(self) -> int:
        return int(self.mask.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TileRecord):
            return NotImplemented
        return (
            self.tile_id == other.tile_id
            and self.coord == other.coord
            and self.split == other.split
            and self.site_id == other.site_id
            and np.array_equal(self.raster, other.raster)
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None  # type: ignore[assignment]


def encode_tile(record: TileRecord) -> bytes:
    c, h, w = record.raster.shape
    body = b"".join(
        (
            _HEADER.pack(TILE_MAGIC, TILE_VERSION, h, w, c),
            record.raster.astype("<f4").tobytes(order="C"),
            record.mask.astype("u1").tobytes(order="C"),
            _FOOTER.pack(
                IGNORE_INDEX,
                record.coord.lon,
                record.coord.lat,
                SPLITS.index(record.split),
                record.site_id,
            ),
        )
    )
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_tile(payload: bytes, tile_id: str = "") -> TileRecord:
    if len(payload) < len(TILE_MAGIC):
        raise TruncatedError(f"tile payload has only {len(payload)} bytes")
    if payload[:4] != TILE_MAGIC:
        raise BadMagicError(f"bad magic {payload[:4]!r}, expected {TILE_MAGIC!r}")
    if len(payload) < _HEADER.size:
        raise TruncatedError("tile payload ends inside the header")
    _, version, h, w, c = _HEADER.unpack_from(payload, 0)
    if version != TILE_VERSION:
        raise UnsupportedVersionError(f"tile format version {version} is not supported")
    raster_bytes = 4 * c * h * w
    expected = _HEADER.size + raster_bytes + h * w + _FOOTER.size + _CRC.size
    if len(payload) < expected:
        raise TruncatedError(f"tile payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise TileFormatError(f"tile payload has {len(payload) - expected} trailing bytes")
    body, (crc,) = payload[:-_CRC.size], _CRC.unpack_from(payload, expected - _CRC.size)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError("tile CRC32 mismatch")

    offset = _HEADER.size
    raster = np.frombuffer(payload, dtype="<f4", count=c * h * w, offset=offset).reshape(c, h, w)
    offset += raster_bytes
    mask = np.frombuffer(payload, dtype="u1", count=h * w, offset=offset).reshape(h, w)
    offset += h * w
    ignore, lon, lat, split, site_id = _FOOTER.unpack_from(payload, offset)
    if ignore != IGNORE_INDEX:
        raise TileFormatError(f"unexpected mask ignore value {ignore}")
    if split >= len(SPLITS):
        raise TileFormatError(f"unknown split code {split}")
    return TileRecord(
        tile_id=tile_id,
        raster=raster.astype(np.float32),
        mask=mask.copy(),
        coord=GeoCoord(lon=lon, lat=lat),
        split=SPLITS[split],
        site_id=site_id,
    )


def write_tile(record: TileRecord, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(encode_tile(record))
    return path


def read_tile(path: Union[str, Path], tile_id: Optional[str] = None) -> TileRecord:
    """Read a tile file; the tile id defaults to the file stem."""
    path = Path(path)
    return decode_tile(path.read_bytes(), tile_id=path.stem if tile_id is None else tile_id)
