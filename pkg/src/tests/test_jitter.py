"""
Tests for scale-jitter augmentation
"""

import numpy as np
import pytest

from geoseg.data import TileRecord, scale_jitter
from geoseg.data.jitter import resize_mask, resize_raster
from geoseg.errors import ConfigError
from geoseg.models import GeoCoord


@pytest.fixture
def tile(rng):
    return TileRecord(
        tile_id="jitter",
        raster=rng.random((3, 32, 32)),
        mask=rng.integers(0, 3, (32, 32)),
        coord=GeoCoord(lon=20.0, lat=70.0),
        split="train",
        site_id=0,
    )


class TestResize:
    """Test raster and mask resampling"""

    def test_same_size_is_identity(self, tile):
        """Resizing to the current extent changes nothing"""
        np.testing.assert_allclose(resize_raster(tile.raster, 32), tile.raster, atol=1e-7)
        np.testing.assert_array_equal(resize_mask(tile.mask, 32), tile.mask)

    def test_mask_keeps_label_set(self, tile):
        """Nearest-neighbour resampling never invents class ids"""
        for size in (8, 45, 64):
            assert set(np.unique(resize_mask(tile.mask, size))) <= set(np.unique(tile.mask))


class TestScaleJitter:
    """Test rescale with crop or pad"""

    def test_unit_factor_is_identity(self, tile):
        """factor=1 returns the same tile"""
        assert scale_jitter(tile, factor=1.0, seed=5) == tile

    def test_shrink_pads_with_ignore(self, tile):
        """Halving the tile pads the border with zeros and the ignore index"""
        out = scale_jitter(tile, factor=0.5, center=True)
        assert out.raster.shape == (3, 32, 32)
        assert np.all(out.mask[:8] == 255)
        assert np.all(out.raster[:, :8] == 0.0)
        assert not np.any(out.mask[8:24, 8:24] == 255)

    def test_enlarge_crops(self, tile):
        """Doubling the tile crops back to the original size"""
        out = scale_jitter(tile, factor=2.0, seed=9)
        assert out.mask.shape == (32, 32)
        assert not np.any(out.mask == 255)

    def test_deterministic_for_seed(self, tile):
        """The same seed draws the same factor and offsets"""
        a = scale_jitter(tile, (0.5, 1.5), seed=123)
        b = scale_jitter(tile, (0.5, 1.5), seed=123)
        assert a == b

    def test_keeps_location_and_id(self, tile):
        """Augmentation only touches pixels"""
        out = scale_jitter(tile, seed=1)
        assert (out.tile_id, out.coord, out.split) == (tile.tile_id, tile.coord, tile.split)

    @pytest.mark.parametrize("scale_range", [(0.0, 1.0), (2.0, 1.0)])
    def test_invalid_range(self, tile, scale_range):
        """The range must be positive and ordered"""
        with pytest.raises(ConfigError):
            scale_jitter(tile, scale_range)


class TestNonSquare:
    """Test jitter on tiles that are wider than they are tall"""

    @pytest.fixture
    def wide(self, rng):
        return TileRecord(
            tile_id="wide",
            raster=rng.random((3, 16, 32)),
            mask=rng.integers(0, 3, (16, 32)),
            coord=GeoCoord(lon=20.0, lat=70.0),
            split="train",
            site_id=0,
        )

    def test_resize_to_rectangle(self, wide):
        """Height and width resize independently"""
        assert resize_raster(wide.raster, 8, 48).shape == (3, 8, 48)
        assert resize_mask(wide.mask, 8, 48).shape == (8, 48)

    @pytest.mark.parametrize("factor", [0.5, 1.0, 1.7])
    def test_shape_is_kept(self, wide, factor):
        """Output extents match the input for shrinking and enlarging factors"""
        out = scale_jitter(wide, factor=factor, seed=3)
        assert out.raster.shape == (3, 16, 32)
        assert out.mask.shape == (16, 32)

    def test_shrink_pads_both_axes(self, wide):
        """A centred half-size copy leaves a quarter margin on every side"""
        out = scale_jitter(wide, factor=0.5, center=True)
        assert np.all(out.mask[:4] == 255)
        assert np.all(out.mask[:, :8] == 255)
        assert not np.any(out.mask[4:12, 8:24] == 255)

    def test_random_factors(self, wide):
        """Random draws never change the tile extents"""
        for seed in range(20):
            assert scale_jitter(wide, seed=seed).mask.shape == (16, 32)
