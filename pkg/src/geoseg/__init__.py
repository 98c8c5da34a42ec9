"""GeoSeg - location-aware ViT segmentation for Arctic feature detection"""

__version__ = "0.1.0"
