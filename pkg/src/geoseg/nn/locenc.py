"""
Spherical-harmonic location encoder
===================================

(lon, lat) is expanded into the real spherical harmonics of degree < L and
passed through a small GeLU network. Larger L resolves finer spatial detail.

.. autosummary::
    ~sh_basis
    ~init_loc_encoder
    ~encode_location
    ~LocationEncoder
"""

import functools
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..autodiff import Tensor, gelu, is_grad_enabled, linear
from ..config import settings
from ..models import GeoCoord, LocEncoderConfig
from .params import ParamView

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class LocationEmbedding:
    values: Tensor
    source: GeoCoord

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def normalized_legendre(x: float, s: float, degree: int) -> np.ndarray:
    """Orthonormal associated Legendre values P[l, m] for 0 <= m <= l < degree.

    ``x`` is cos(colatitude) and ``s`` its sine. No Condon-Shortley phase.
    """
    p = np.zeros((degree, degree))
    p[0, 0] = math.sqrt(1.0 / (4.0 * math.pi))
    for m in range(1, degree):
        p[m, m] = math.sqrt((2 * m + 1) / (2 * m)) * s * p[m - 1, m - 1]
    for m in range(degree - 1):
        p[m + 1, m] = math.sqrt(2 * m + 3) * x * p[m, m]
    for m in range(degree):
        for l in range(m + 2, degree):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
    return p


@functools.lru_cache(maxsize=8192)
def _basis(lon: float, lat: float, degree: int) -> np.ndarray:
    theta = math.radians(90.0 - lat)
    phi = math.radians(lon)
    p = normalized_legendre(math.cos(theta), math.sin(theta), degree)
    out = np.empty(degree * degree)
    i = 0
    for l in range(degree):
        for m in range(-l, l + 1):
            if m == 0:
                out[i] = p[l, 0]
            elif m > 0:
                out[i] = _SQRT2 * p[l, m] * math.cos(m * phi)
            else:
                out[i] = _SQRT2 * p[l, -m] * math.sin(-m * phi)
            i += 1
    out.setflags(write=False)
    return out


def sh_basis(coord: GeoCoord, degree: int) -> np.ndarray:
    """Real spherical harmonics Y_l^m at ``coord``, ordered by l then m, length degree**2."""
    if degree < 1:
        raise ValueError("degree must be positive")
    return _basis(coord.lon, coord.lat, degree)


def sh_bound(degree: int) -> np.ndarray:
    """Per-component upper bound sqrt((2l+1)/4pi) matching the sh_basis ordering."""
    return np.concatenate(
        [np.full(2 * l + 1, math.sqrt((2 * l + 1) / (4.0 * math.pi))) for l in range(degree)]
    )


def init_loc_encoder(params: ParamView, config: LocEncoderConfig) -> None:
    widths = (config.basis_dim, *config.hidden, config.embed_dim)
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        params.create(f"fc{i}.weight", (n_in, n_out), "lecun_normal", fan_in=n_in)
        params.create(f"fc{i}.bias", (n_out,), "zeros")


def encode_location(
    coord: GeoCoord, config: LocEncoderConfig, params: ParamView
) -> LocationEmbedding:
    basis = Tensor(sh_basis(coord, config.degree), dtype=params.store.dtype)
    x = basis.reshape(1, config.basis_dim)
    n_layers = len(config.hidden) + 1
    for i in range(n_layers):
        x = linear(x, params[f"fc{i}.weight"], params[f"fc{i}.bias"])
        if i < n_layers - 1:
            x = gelu(x)
    return LocationEmbedding(x.reshape(config.embed_dim), coord)


class LocationEncoder:
    """Callable encoder with an embedding cache used only when gradients are off.

    Entries are keyed by (lon, lat, degree, parameter version), so any parameter
    update invalidates them.
    """

    def __init__(
        self, config: LocEncoderConfig, params: ParamView, cache_size: Optional[int] = None
    ):
        self.config = config
        self.params = params
        self.cache_size = settings.embedding_cache_size if cache_size is None else cache_size
        self._cache: "OrderedDict[Tuple[float, float, int, int], LocationEmbedding]" = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __call__(self, coord: GeoCoord) -> LocationEmbedding:
        if is_grad_enabled() or self.cache_size <= 0:
            return encode_location(coord, self.config, self.params)
        key = (coord.lon, coord.lat, self.config.degree, self.params.store.version)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                self.hits += 1
                return hit
        embedding = encode_location(coord, self.config, self.params)
        with self._lock:
            self.misses += 1
            self._cache[key] = embedding
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return embedding

    def clear(self) -> None:
        with self._lock:
            self._cache.clear()
