"""
Synthetic geolocated segmentation data
======================================

Each site scatters blob and polygon shapes of its foreground classes over a
background and colours every pixel from its class's mean plus Gaussian noise.
Shape family and size never depend on the class.
In ambiguity mode two foreground classes share one spectral signature and
each site holds only one of them, so only the tile location tells them apart.

Tile ``k`` (sites, then splits, then index) draws from its own sub-seed
derived from ``(seed, k)``; generation order does not matter.

.. autosummary::
    ~default_sites
    ~draw_shapes
    ~generate_tile
    ~generate_dataset
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..errors import ConfigError
from ..models import SPLITS, DatasetConfig, GeoCoord, SiteSpec, SpectralParams
from .rng import SplitMix64, derive_seed
from .tiles import TileRecord

logger = logging.getLogger(__name__)

BACKGROUND_SPECTRUM = (0.35, 0.42, 0.30)
AMBIGUOUS_CLASSES = (1, 2)
_DRAWN_FAMILIES = ("blobs", "polygons")
# distinct signatures for foreground classes beyond the ambiguous pair
_FOREGROUND_SPECTRA = (
    (0.70, 0.62, 0.48),
    (0.22, 0.28, 0.68),
    (0.82, 0.30, 0.25),
    (0.50, 0.75, 0.40),
    (0.15, 0.55, 0.55),
)


def _spectrum(class_id: int, ambiguity: bool, sigma: float) -> SpectralParams:
    if class_id == 0:
        return SpectralParams(mean=BACKGROUND_SPECTRUM, sigma=sigma)
    if ambiguity and class_id in AMBIGUOUS_CLASSES:
        return SpectralParams(mean=_FOREGROUND_SPECTRA[0], sigma=sigma)
    base = _FOREGROUND_SPECTRA[(class_id - 1) % len(_FOREGROUND_SPECTRA)]
    shift = 0.05 * ((class_id - 1) // len(_FOREGROUND_SPECTRA))
    return SpectralParams(mean=tuple(min(1.0, m + shift) for m in base), sigma=sigma)


def site_center(site_id: int, n_sites: int) -> GeoCoord:
    """Sites spread evenly in longitude across the Arctic band."""
    lon = -180.0 + (site_id + 0.5) * 360.0 / n_sites
    lat = 66.0 + 8.0 * (site_id % 2)
    return GeoCoord(lon=lon, lat=lat)


def default_sites(config: DatasetConfig) -> List[SiteSpec]:
    foreground = tuple(range(1, config.n_classes))
    spectra = {c: _spectrum(c, config.ambiguity, config.noise_sigma) for c in range(config.n_classes)}
    sites = []
    for i in range(config.n_sites):
        if config.ambiguity:
            ambiguous = AMBIGUOUS_CLASSES[i % 2]
            classes = (ambiguous,) + tuple(c for c in foreground if c not in AMBIGUOUS_CLASSES)
        else:
            classes = foreground
        sites.append(
            SiteSpec(
                site_id=i,
                center=site_center(i, config.n_sites),
                n_tiles={
                    "train": config.train_tiles,
                    "val": config.val_tiles,
                    "test": config.test_tiles,
                },
                classes=classes,
                class_spectral_map=spectra,
                min_radius=config.img_size / 16,
                max_radius=config.img_size / 5,
                max_shapes=config.max_shapes,
            )
        )
    return sites


def _blob(rng: SplitMix64, yy: np.ndarray, xx: np.ndarray, cy: float, cx: float, r: float) -> np.ndarray:
    ry = r * rng.uniform_scalar(0.6, 1.4)
    angle = rng.uniform_scalar(0.0, math.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(angle) + dy * math.sin(angle)
    v = -dx * math.sin(angle) + dy * math.cos(angle)
    return (u / r) ** 2 + (v / ry) ** 2 <= 1.0


def _star_polygon(
    rng: SplitMix64, yy: np.ndarray, xx: np.ndarray, cy: float, cx: float, r: float
) -> np.ndarray:
    n_vertices = rng.integer(3, 8)
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_vertices))
    radii = r * rng.uniform(0.6, 1.0, n_vertices)
    theta = np.arctan2(yy - cy, xx - cx) % (2.0 * math.pi)
    boundary = np.interp(theta, angles, radii, period=2.0 * math.pi)
    return np.hypot(yy - cy, xx - cx) <= boundary


@dataclass(frozen=True)
class ShapeDraw:
    class_id: int
    family: str
    cy: float
    cx: float
    radius: float


def draw_shapes(spec: SiteSpec, rng: SplitMix64, img_size: int) -> List[ShapeDraw]:
    """Class, family, centre and radius of every shape on one tile.

    The family draw never looks at the class, so in ``mixed`` sites both
    families appear with the same frequency for every class.
    """
    shapes = []
    for _ in range(rng.integer(1, spec.max_shapes + 1)):
        class_id = rng.choice(spec.classes)
        if spec.shape_family == "mixed":
            family = _DRAWN_FAMILIES[rng.integer(0, len(_DRAWN_FAMILIES))]
        else:
            family = spec.shape_family
        cy, cx = rng.uniform(0.0, img_size, 2)
        radius = rng.uniform_scalar(spec.min_radius, spec.max_radius)
        shapes.append(ShapeDraw(class_id, family, float(cy), float(cx), radius))
    return shapes


def generate_tile(
    spec: SiteSpec, split: str, index: int, tile_seed: int, img_size: int, n_classes: int
) -> TileRecord:
    rng = SplitMix64(tile_seed)
    jitter = spec.jitter_degrees
    lon = spec.center.lon + rng.uniform_scalar(-jitter, jitter)
    lat = min(90.0, max(-90.0, spec.center.lat + rng.uniform_scalar(-jitter, jitter)))

    mask = np.zeros((img_size, img_size), dtype=np.uint8)
    yy, xx = np.mgrid[0:img_size, 0:img_size].astype(np.float64)
    for shape in draw_shapes(spec, rng, img_size):
        draw = _blob if shape.family == "blobs" else _star_polygon
        mask[draw(rng, yy, xx, shape.cy, shape.cx, shape.radius)] = shape.class_id

    means = np.zeros((n_classes, 3))
    sigmas = np.zeros(n_classes)
    for class_id, params in spec.class_spectral_map.items():
        if class_id < n_classes:
            means[class_id] = params.mean
            sigmas[class_id] = params.sigma
    noise = rng.normal((3, img_size, img_size))
    raster = means[mask].transpose(2, 0, 1) + sigmas[mask][None] * noise
    return TileRecord(
        tile_id=f"site{spec.site_id:02d}-{split}-{index:04d}",
        raster=np.clip(raster, 0.0, 1.0).astype(np.float32),
        mask=mask,
        coord=GeoCoord(lon=lon, lat=lat),
        split=split,
        site_id=spec.site_id,
    )


def _check_specs(specs: Sequence[SiteSpec], ambiguity_mode: bool, n_classes: int) -> None:
    if not specs:
        raise ConfigError("at least one site is required")
    ids = [s.site_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate site ids: {ids}")
    for spec in specs:
        if any(c < 1 or c >= n_classes for c in spec.classes):
            raise ConfigError(f"site {spec.site_id}: foreground classes must lie in [1, {n_classes})")
    if not ambiguity_mode:
        return
    if len(specs) < 2:
        raise ConfigError("ambiguity mode needs at least two sites")
    a, b = AMBIGUOUS_CLASSES
    if n_classes <= b:
        raise ConfigError(f"ambiguity mode needs at least {b + 1} classes")
    signatures = {
        (spec.class_spectral_map[c].mean, spec.class_spectral_map[c].sigma)
        for spec in specs
        for c in AMBIGUOUS_CLASSES
        if c in spec.class_spectral_map
    }
    if len(signatures) != 1:
        raise ConfigError("ambiguity mode needs classes 1 and 2 to share spectral parameters")
    for spec in specs:
        if a in spec.classes and b in spec.classes:
            raise ConfigError(f"site {spec.site_id} holds both ambiguous classes")
    geometry = {
        (spec.shape_family, spec.min_radius, spec.max_radius, spec.max_shapes)
        for spec in specs
        if a in spec.classes or b in spec.classes
    }
    if len(geometry) > 1:
        raise ConfigError("ambiguity mode needs every site to draw shapes the same way")


def generate_dataset(
    specs: Sequence[SiteSpec],
    seed: int,
    ambiguity_mode: bool = True,
    img_size: int = 64,
    n_classes: int = 3,
) -> List[TileRecord]:
    """Tiles for every site and split, ordered by site, split, index."""
    _check_specs(specs, ambiguity_mode, n_classes)
    records = []
    k = 0
    for spec in specs:
        for split in SPLITS:
            for index in range(spec.n_tiles.get(split, 0)):
                records.append(
                    generate_tile(spec, split, index, derive_seed(seed, k), img_size, n_classes)
                )
                k += 1
    counts: Dict[str, int] = {s: sum(r.split == s for r in records) for s in SPLITS}
    logger.info("Generated %d tiles from %d sites: %s", len(records), len(specs), counts)
    return records


def generate_from_config(config: DatasetConfig, seed: int) -> List[TileRecord]:
    return generate_dataset(
        default_sites(config),
        seed,
        ambiguity_mode=config.ambiguity,
        img_size=config.img_size,
        n_classes=config.n_classes,
    )
