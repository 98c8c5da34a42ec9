"""
Shared fixtures for the GeoSeg test suite
"""

from pathlib import Path

import numpy as np
import pytest

from geoseg.data import generate_from_config, write_dataset
from geoseg.models import DatasetConfig, RunConfig, ViTConfig


@pytest.fixture
def rng():
    """Seeded numpy generator for test inputs"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_vit():
    """Smallest backbone geometry with both window and global blocks"""
    return ViTConfig(img_size=64, embed_dim=8, depth=2, n_heads=2, window_size=2, subset_size=2)


@pytest.fixture
def small_dataset_config():
    return DatasetConfig(n_sites=2, train_tiles=2, val_tiles=1, test_tiles=1, img_size=64)


@pytest.fixture
def dataset_dir(tmp_path, small_dataset_config):
    """Written ambiguity-mode dataset: 2 sites x (2 train, 1 val, 1 test) tiles"""
    records = generate_from_config(small_dataset_config, seed=7)
    write_dataset(records, tmp_path / "data", small_dataset_config.n_classes)
    return tmp_path / "data"


def _run_config(manifest: Path, out: Path, /, **overrides) -> RunConfig:
    values = dict(
        backbone="tiny",
        fusion="none",
        n_classes=3,
        epochs=1,
        per_device_batch=2,
        pyramid_channels=8,
        d_attn=4,
        cross_attention_tokens=2,
        jitter=False,
        manifest=str(manifest),
        output_dir=str(out),
    )
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture
def make_run_config(dataset_dir, tmp_path):
    """Factory for fast run configurations over the test dataset"""

    def make(**overrides) -> RunConfig:
        return _run_config(dataset_dir / "manifest.txt", tmp_path / "run", **overrides)

    return make


@pytest.fixture
def run_config(make_run_config):
    return make_run_config()
