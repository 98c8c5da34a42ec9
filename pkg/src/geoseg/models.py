"""
Pydantic models for GeoSeg configuration and results
"""

import math
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError

STRATEGIES: Tuple[str, ...] = (
    "add",
    "norm_add",
    "concat",
    "norm_concat",
    "concat_norm",
    "proj_add",
    "proj_concat",
    "cross_attention",
)
PLACEMENTS: Tuple[str, ...] = ("pre", "post")
GRANULARITIES: Tuple[str, ...] = ("L10", "L40")
POST_ONLY_STRATEGIES = frozenset({"add", "norm_add"})
PYRAMID_SCALES: Tuple[int, ...] = (16, 8, 4, 2)
SPLITS: Tuple[str, ...] = ("train", "val", "test")
IGNORE_INDEX = 255
SHAPE_FAMILIES: Tuple[str, ...] = ("blobs", "polygons", "mixed")
# longitudes are kept on a 1e-7 degree grid so lon and lon + 360 agree exactly
LON_DECIMALS = 7


class GeoCoord(BaseModel):
    """Geographic coordinate in degrees; longitude is wrapped into [-180, 180)

    Longitudes are rounded to ``LON_DECIMALS`` places after wrapping.
    """

    model_config = ConfigDict(frozen=True)

    lon: float
    lat: float

    @field_validator("lon")
    @classmethod
    def _wrap_longitude(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError(f"longitude {value} is not finite")
        # remainder is exact; rounding absorbs the error of the caller's own lon + 360
        lon = round(math.remainder(value, 360.0), LON_DECIMALS)
        if lon >= 180.0:
            lon -= 360.0
        return lon + 0.0

    @field_validator("lat")
    @classmethod
    def _check_latitude(cls, value: float) -> float:
        if not -90.0 <= value <= 90.0:
            raise ValueError(f"latitude {value} outside [-90, 90]")
        return value


class ViTConfig(BaseModel):
    """Plain ViT backbone geometry"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    img_size: int = 64
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 4
    n_heads: int = 4
    window_size: int = 2
    subset_size: int = 2
    mlp_ratio: float = 4.0

    @model_validator(mode="after")
    def _check_geometry(self) -> "ViTConfig":
        if self.patch_size != 16:
            raise ConfigError("patch_size is fixed at 16 (S_f = 16)")
        if self.img_size <= 0 or self.img_size % self.patch_size:
            raise ConfigError(f"img_size {self.img_size} is not a multiple of 16")
        if self.depth < 1:
            raise ConfigError("depth must be at least 1")
        if self.subset_size < 1 or self.depth % self.subset_size:
            raise ConfigError(f"depth {self.depth} not divisible by subset_size {self.subset_size}")
        if self.n_heads < 1 or self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if self.window_size < 1 or self.grid_size % self.window_size:
            raise ConfigError(
                f"patch grid {self.grid_size} not divisible by window_size {self.window_size}"
            )
        return self

    @property
    def grid_size(self) -> int:
        return self.img_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    @property
    def global_block_indices(self) -> Tuple[int, ...]:
        """Indices of blocks running global attention: the last block of each subset"""
        n_subsets = self.depth // self.subset_size
        return tuple(self.subset_size * k - 1 for k in range(1, n_subsets + 1))

    @classmethod
    def preset(cls, name: str, img_size: int = 64) -> "ViTConfig":
        if name not in BACKBONE_PRESETS:
            raise ConfigError(f"unknown backbone preset '{name}'")
        return cls(img_size=img_size, **BACKBONE_PRESETS[name])


# Toy presets are tested; base/large/huge follow the published backbone sizes.
BACKBONE_PRESETS: Dict[str, Dict[str, int]] = {
    "tiny": {"embed_dim": 64, "depth": 4, "n_heads": 4, "window_size": 2, "subset_size": 2},
    "small": {"embed_dim": 128, "depth": 8, "n_heads": 8, "window_size": 2, "subset_size": 2},
    "base": {"embed_dim": 768, "depth": 12, "n_heads": 12, "window_size": 14, "subset_size": 3},
    "large": {"embed_dim": 1024, "depth": 24, "n_heads": 16, "window_size": 14, "subset_size": 6},
    "huge": {"embed_dim": 1280, "depth": 32, "n_heads": 16, "window_size": 14, "subset_size": 8},
}


class LocEncoderConfig(BaseModel):
    """Spherical-harmonic location encoder"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    degree: int = 10
    embed_dim: int = 256
    hidden: Tuple[int, int] = (256, 256)

    @field_validator("degree")
    @classmethod
    def _check_degree(cls, value: int) -> int:
        if value < 1:
            raise ValueError("degree must be positive")
        return value

    @property
    def basis_dim(self) -> int:
        return self.degree * self.degree

    @classmethod
    def for_granularity(cls, granularity: str, embed_dim: int = 256) -> "LocEncoderConfig":
        if granularity not in GRANULARITIES:
            raise ConfigError(f"unknown granularity '{granularity}'")
        return cls(degree=int(granularity[1:]), embed_dim=embed_dim, hidden=(embed_dim, embed_dim))


class FusionConfig(BaseModel):
    """One cell of the fusion ablation grid"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: str
    placement: str
    granularity: str
    n_tokens: int = 8
    d_attn: int = 64
    residual: bool = False

    @model_validator(mode="after")
    def _check_combination(self) -> "FusionConfig":
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown fusion strategy '{self.strategy}'")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement '{self.placement}'")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"unknown granularity '{self.granularity}'")
        if self.placement == "pre" and self.strategy in POST_ONLY_STRATEGIES:
            raise ConfigError(f"strategy '{self.strategy}' is only valid post pyramid")
        if self.n_tokens < 1:
            raise ConfigError("n_tokens must be at least 1")
        if self.d_attn < 1:
            raise ConfigError("d_attn must be positive")
        return self

    @property
    def tag(self) -> str:
        return f"{self.placement}/{self.granularity}/{self.strategy}"

    @property
    def degree(self) -> int:
        return int(self.granularity[1:])

    @classmethod
    def from_tag(cls, tag: str, **kwargs: object) -> "FusionConfig":
        parts = tag.strip().split("/")
        if len(parts) != 3:
            raise ConfigError(f"fusion '{tag}' is not of the form placement/granularity/strategy")
        placement, granularity, strategy = parts
        return cls(strategy=strategy, placement=placement, granularity=granularity, **kwargs)


def valid_fusion_configs(**kwargs: object) -> List[FusionConfig]:
    """All valid (placement, granularity, strategy) cells in canonical order"""
    configs = []
    for granularity in GRANULARITIES:
        for placement in ("post", "pre"):
            for strategy in STRATEGIES:
                if placement == "pre" and strategy in POST_ONLY_STRATEGIES:
                    continue
                configs.append(
                    FusionConfig(
                        strategy=strategy, placement=placement, granularity=granularity, **kwargs
                    )
                )
    return configs


class RunConfig(BaseModel):
    """Training/evaluation run; every field is a key of the key=value config file"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    feature: str = "synthetic"
    backbone: str = "tiny"
    fusion: str = "none"
    n_classes: int = 3
    epochs: int = 75
    per_device_batch: int = 4
    devices: int = 1
    learning_rate: float = 1e-3
    weight_decay: float = 0.05
    seed: int = 0
    manifest: str = "data/manifest.txt"
    output_dir: str = "runs/default"
    img_size: int = 64
    pyramid_channels: int = 256
    cross_attention_tokens: int = 8
    d_attn: int = 64
    cross_attention_residual: bool = False
    jitter: bool = True
    jitter_min: float = 0.1
    jitter_max: float = 2.0

    @model_validator(mode="after")
    def _check_run(self) -> "RunConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.per_device_batch < 1:
            raise ConfigError("per_device_batch must be at least 1")
        if self.devices < 1:
            raise ConfigError("devices must be at least 1")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be at least 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.pyramid_channels < 1:
            raise ConfigError("pyramid_channels must be positive")
        if not 0 < self.jitter_min <= self.jitter_max:
            raise ConfigError("jitter range must satisfy 0 < jitter_min <= jitter_max")
        if self.backbone not in BACKBONE_PRESETS:
            raise ConfigError(f"unknown backbone preset '{self.backbone}'")
        self.vit_config()
        self.fusion_config()
        return self

    def vit_config(self) -> ViTConfig:
        return ViTConfig.preset(self.backbone, img_size=self.img_size)

    def fusion_config(self) -> Optional[FusionConfig]:
        if self.fusion.strip().lower() == "none":
            return None
        return FusionConfig.from_tag(
            self.fusion,
            n_tokens=self.cross_attention_tokens,
            d_attn=self.d_attn,
            residual=self.cross_attention_residual,
        )

    @property
    def effective_batch(self) -> int:
        return self.per_device_batch * self.devices


class SpectralParams(BaseModel):
    """Per-class mean colour and noise level"""

    model_config = ConfigDict(frozen=True)

    mean: Tuple[float, float, float]
    sigma: float = 0.05

    @field_validator("mean")
    @classmethod
    def _check_mean(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError("spectral means must lie in [0, 1]")
        return value


class SiteSpec(BaseModel):
    """One geographic site of the synthetic dataset"""

    model_config = ConfigDict(frozen=True)

    site_id: int
    center: GeoCoord
    n_tiles: Dict[str, int] = Field(default_factory=lambda: {s: 10 for s in SPLITS})
    classes: Tuple[int, ...] = (1, 2)
    class_spectral_map: Dict[int, SpectralParams]
    shape_family: str = "mixed"
    min_radius: float = 4.0
    max_radius: float = 12.0
    max_shapes: int = 4
    jitter_degrees: float = 0.05

    @model_validator(mode="after")
    def _check_site(self) -> "SiteSpec":
        for split, count in self.n_tiles.items():
            if split not in SPLITS:
                raise ConfigError(f"unknown split '{split}'")
            if count < 1:
                raise ConfigError(f"site {self.site_id}: split '{split}' needs at least one tile")
        if self.shape_family not in SHAPE_FAMILIES:
            raise ConfigError(f"unknown shape family '{self.shape_family}'")
        if not 0 < self.min_radius <= self.max_radius:
            raise ConfigError("radius range must satisfy 0 < min_radius <= max_radius")
        if self.max_shapes < 1:
            raise ConfigError("max_shapes must be at least 1")
        for cls_id in (0,) + tuple(self.classes):
            if cls_id not in self.class_spectral_map:
                raise ConfigError(f"site {self.site_id}: no spectral parameters for class {cls_id}")
        return self


class DatasetConfig(BaseModel):
    """Synthetic dataset recipe for gen-data; every field is a config-file key"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_sites: int = 2
    train_tiles: int = 10
    val_tiles: int = 10
    test_tiles: int = 10
    img_size: int = 64
    n_classes: int = 3
    ambiguity: bool = True
    noise_sigma: float = 0.05
    max_shapes: int = 4

    @model_validator(mode="after")
    def _check_dataset(self) -> "DatasetConfig":
        if self.img_size <= 0 or self.img_size % 16:
            raise ConfigError(f"img_size {self.img_size} is not a multiple of 16")
        if min(self.train_tiles, self.val_tiles, self.test_tiles) < 1:
            raise ConfigError("every split needs at least one tile per site")
        if self.n_sites < 1:
            raise ConfigError("n_sites must be at least 1")
        if self.ambiguity and self.n_sites < 2:
            raise ConfigError("ambiguity mode needs at least two sites")
        if self.n_classes < 3 or self.n_classes > 255:
            raise ConfigError("n_classes must lie in [3, 255]")
        return self


class SemanticMetrics(BaseModel):
    """Pixel accuracy plus foreground macro precision/recall/F1/mIoU"""

    pixel_accuracy: float
    precision: float
    recall: float
    f1: float
    miou: float
    per_class: Dict[int, Dict[str, Optional[float]]] = Field(default_factory=dict)

    def row(self) -> Dict[str, float]:
        return {
            "pixel_accuracy": self.pixel_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "miou": self.miou,
        }


class GeometryStats(BaseModel):
    """Shape descriptors of one polygon, in meters"""

    area: float
    length_major_axis: float
    width_minor_axis: float
    length_width_ratio: float
    compactness: float


METRIC_COLUMNS: Tuple[str, ...] = ("pixel_accuracy", "precision", "recall", "f1", "miou")
ABLATION_HEADER: Tuple[str, ...] = (
    "feature",
    "placement",
    "granularity",
    "strategy",
    *METRIC_COLUMNS,
    "f1_stderr",
)


class AblationRow(BaseModel):
    """One line of the ablation CSV; metrics are None for a failed configuration"""

    feature: str
    placement: str
    granularity: str
    strategy: str
    pixel_accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    miou: Optional[float] = None
    f1_stderr: Optional[float] = None
    error: Optional[str] = None

    @model_validator(mode="after")
    def _check_ranges(self) -> "AblationRow":
        for name in METRIC_COLUMNS:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.f1_stderr is not None and self.f1_stderr < 0:
            raise ValueError("f1_stderr must be non-negative")
        return self

    def csv_fields(self) -> List[str]:
        out = [self.feature, self.placement, self.granularity, self.strategy]
        for name in (*METRIC_COLUMNS, "f1_stderr"):
            value = getattr(self, name)
            out.append("" if value is None else f"{value:.6f}")
        return out
