"""Synthetic geolocated tiles, the tile file format and dataset manifests."""

from .jitter import scale_jitter  # noqa: F401
from .manifest import Manifest, read_manifest, write_dataset  # noqa: F401
from .rng import SplitMix64, derive_seed  # noqa: F401
from .synth import default_sites, generate_dataset, generate_from_config  # noqa: F401
from .tiles import TileRecord, decode_tile, encode_tile, read_tile, write_tile  # noqa: F401
