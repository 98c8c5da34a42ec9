"""Network layers: ViT backbone, feature pyramid, location encoder, fusion and head."""

from .fusion import (  # noqa: F401
    PipelinePlan,
    apply_placement,
    fuse,
    fuse_cross_attention,
    fuse_elementwise,
    fuse_projection,
    fused_channels,
    tile_location,
)
from .head import predict, seg_loss, unet_head, upsample_block  # noqa: F401
from .locenc import LocationEmbedding, LocationEncoder, encode_location, sh_basis  # noqa: F401
from .model import GeoSegModel  # noqa: F401
from .params import ParamStore, ParamView, count_parameters  # noqa: F401
from .sfpn import PyramidSet, build_pyramid, sfpn_level  # noqa: F401
from .vit import attention_block, backbone_forward, patch_embed  # noqa: F401
