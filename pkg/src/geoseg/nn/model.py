"""
Full segmentation model: backbone, optional location fusion, pyramid, head
"""

import logging
from typing import Dict, List, Optional, Union

import numpy as np

from ..autodiff import Tensor, as_tensor
from ..models import FusionConfig, GeoCoord, LocEncoderConfig, RunConfig, ViTConfig
from .fusion import PipelinePlan, apply_placement, fuse, init_fusion_site
from .head import init_unet_head, unet_head
from .locenc import LocationEncoder, init_loc_encoder
from .params import ParamStore, count_parameters
from .sfpn import PyramidSet, build_pyramid, init_pyramid
from .vit import backbone_forward, init_backbone

logger = logging.getLogger(__name__)


class GeoSegModel:
    """Parameters plus forward pass for one (backbone, fusion) configuration.

    The location embedding width equals the pyramid width so the additive
    strategies are well typed after the pyramid.
    """

    def __init__(
        self,
        vit: ViTConfig,
        n_classes: int,
        fusion: Optional[FusionConfig] = None,
        pyramid_channels: int = 256,
        seed: int = 0,
        dtype: np.dtype = np.float32,
    ):
        self.vit = vit
        self.n_classes = n_classes
        self.fusion = fusion
        self.pyramid_channels = pyramid_channels
        self.store = ParamStore(seed=seed, dtype=dtype)

        plan = PipelinePlan.baseline(vit.img_size, vit.embed_dim, pyramid_channels)
        self.plan = apply_placement(plan, fusion) if fusion is not None else plan

        init_backbone(self.store.view("backbone"), vit)
        self.location: Optional[LocationEncoder] = None
        if fusion is not None:
            loc_config = LocEncoderConfig.for_granularity(fusion.granularity, embed_dim=self.plan.d_loc)
            init_loc_encoder(self.store.view("location"), loc_config)
            self.location = LocationEncoder(loc_config, self.store.view("location"))
            for site in self.plan.sites:
                init_fusion_site(
                    self.store.view(f"fusion.{site.name}"),
                    fusion,
                    site.channels,
                    site.height,
                    site.width,
                    self.plan.d_loc,
                )
        init_pyramid(self.store.view("sfpn"), self.plan.sfpn_in_channels, pyramid_channels)
        init_unet_head(self.store.view("head"), self.plan.level_channels, n_classes)
        logger.debug(
            "Built model fusion=%s with %d parameters",
            fusion.tag if fusion else "none",
            self.n_parameters,
        )

    @classmethod
    def from_run_config(cls, config: RunConfig, seed: Optional[int] = None) -> "GeoSegModel":
        return cls(
            config.vit_config(),
            config.n_classes,
            fusion=config.fusion_config(),
            pyramid_channels=config.pyramid_channels,
            seed=config.seed if seed is None else seed,
        )

    @property
    def n_parameters(self) -> int:
        return count_parameters(self.store)

    def forward(
        self,
        image: Union[np.ndarray, Tensor],
        coord: Optional[GeoCoord] = None,
        trace: Optional[Dict[str, List[str]]] = None,
    ) -> Tensor:
        """One 3 x H x W image (and its tile centre) -> N x H x W logits."""
        x = as_tensor(image, self.store.dtype)
        block_trace = trace.setdefault("backbone", []) if trace is not None else None
        feature = backbone_forward(x, self.vit, self.store.view("backbone"), block_trace)

        embedding = None
        if self.fusion is not None:
            if coord is None or self.location is None:
                raise ValueError("a fused model needs the tile coordinate")
            embedding = self.location(coord)
            if self.fusion.placement == "pre":
                feature = fuse(feature, embedding, self.fusion, self.store.view("fusion.pre"))

        level_trace: Optional[Dict[int, List[str]]] = {} if trace is not None else None
        pyramid = build_pyramid(
            feature, self.store.view("sfpn"), c_d=self.pyramid_channels, trace=level_trace
        )
        if trace is not None and level_trace is not None:
            for s_d, ops in level_trace.items():
                trace[f"sfpn.p{s_d}"] = ops

        if self.fusion is not None and self.fusion.placement == "post":
            pyramid = PyramidSet(
                {
                    s_d: fuse(level, embedding, self.fusion, self.store.view(f"fusion.post.p{s_d}"))
                    for s_d, level in pyramid.levels.items()
                }
            )
        return unet_head(pyramid, self.n_classes, self.store.view("head"))

    __call__ = forward
