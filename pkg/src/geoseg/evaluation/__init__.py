"""Segmentation metrics and polygon geometry statistics."""

from .geometry import (  # noqa: F401
    Polygon,
    compactness,
    geometry_stats,
    min_area_rectangle,
    summarize_geometry,
)
from .metrics import (  # noqa: F401
    ConfusionMatrix,
    accumulate_confusion,
    evaluate_maps,
    semantic_metrics,
)
