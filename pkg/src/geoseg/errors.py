"""
Exception hierarchy for GeoSeg
"""

from typing import Optional, Sequence, Tuple


class GeosegError(Exception):
    """Base class for every error raised by this package"""


class ShapeError(GeosegError):
    """Operand shapes are incompatible with a kernel or layer"""

    def __init__(self, message: str, *shapes: Tuple[int, ...]):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class NonFiniteError(GeosegError):
    """A kernel produced NaN or Inf"""

    def __init__(self, op: str):
        super().__init__(f"non-finite values produced by {op}")
        self.op = op


class ConfigError(GeosegError):
    """Invalid configuration value, key or combination"""


class DatasetError(GeosegError):
    """Dataset cannot be used as requested (empty split, class mismatch, bad manifest)"""


class GeometryError(GeosegError):
    """Polygon is degenerate or otherwise invalid"""


class TileFormatError(GeosegError):
    """Binary tile or checkpoint payload cannot be decoded"""


class BadMagicError(TileFormatError):
    """File does not start with the expected magic bytes"""


class TruncatedError(TileFormatError):
    """Payload ends before the declared content"""


class ChecksumError(TileFormatError):
    """Trailing CRC32 does not match the payload"""


class UnsupportedVersionError(TileFormatError):
    """Format version is not understood by this reader"""


class TrainingDivergedError(GeosegError):
    """Loss became non-finite during training"""

    def __init__(
        self, step: int, lr: float, batch: Sequence[str], cause: Optional[str] = None
    ):
        message = f"loss diverged at step {step} (lr={lr:.3g}, batch tiles={list(batch)})"
        if cause:
            message += f": {cause}"
        super().__init__(message)
        self.step = step
        self.lr = lr
        self.batch = list(batch)
