"""
Tests for settings, key=value config files and configuration models
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

import geoseg
from geoseg.config import (
    Settings,
    build_model,
    dump_key_value_text,
    load_key_value_file,
    parse_key_value_text,
)
from geoseg.errors import ConfigError
from geoseg.models import DatasetConfig, FusionConfig, GeoCoord, RunConfig

CONFIG_DIR = Path(geoseg.__file__).parent / "configs"


class TestSettings:
    """Test environment-driven settings"""

    def test_defaults(self, monkeypatch):
        """Serial ablation and INFO logging by default"""
        monkeypatch.delenv("GEOSEG_WORKERS", raising=False)
        monkeypatch.delenv("GEOSEG_LOG_LEVEL", raising=False)
        settings = Settings(_env_file=None)
        assert settings.workers == 1
        assert settings.log_level == "INFO"

    def test_environment_prefix(self, monkeypatch):
        """GEOSEG_* variables override settings"""
        monkeypatch.setenv("GEOSEG_WORKERS", "3")
        monkeypatch.setenv("GEOSEG_EMBEDDING_CACHE_SIZE", "16")
        settings = Settings(_env_file=None)
        assert settings.workers == 3
        assert settings.embedding_cache_size == 16


class TestKeyValueText:
    """Test the flat config syntax"""

    def test_comments_and_blank_lines(self):
        """# starts a comment anywhere on a line"""
        text = "# header\n\nepochs = 5  # short run\n  seed=3\n"
        assert parse_key_value_text(text) == {"epochs": "5", "seed": "3"}

    def test_value_may_contain_equals(self):
        """Only the first = separates key and value"""
        assert parse_key_value_text("manifest = a=b.txt") == {"manifest": "a=b.txt"}

    @pytest.mark.parametrize(
        "text,message",
        [("epochs 5", "expected"), ("= 5", "empty key"), ("seed = 1\nseed = 2", "duplicate")],
    )
    def test_malformed(self, text, message):
        """Malformed lines name the source and line"""
        with pytest.raises(ConfigError, match=message):
            parse_key_value_text(text, "run.cfg")

    def test_unknown_key(self):
        """Keys must be model fields"""
        with pytest.raises(ConfigError, match="colour"):
            build_model(RunConfig, {"colour": "blue"})

    def test_bad_value(self):
        """Type errors become configuration errors"""
        with pytest.raises(ConfigError, match="epochs"):
            build_model(RunConfig, {"epochs": "many"})

    def test_range_error(self):
        """Out-of-range values are rejected"""
        with pytest.raises(ConfigError):
            build_model(RunConfig, {"per_device_batch": "0"})

    def test_dump_parse_round_trip(self):
        """Dumped configs parse back to an equal model"""
        config = RunConfig(fusion="pre/L10/proj_concat", jitter=False, learning_rate=3e-4)
        text = dump_key_value_text(config)
        assert "jitter = false" in text
        assert build_model(RunConfig, parse_key_value_text(text)) == config

    def test_overrides_skip_none(self, tmp_path):
        """None overrides leave file values alone"""
        path = tmp_path / "run.cfg"
        path.write_text("seed = 9\nepochs = 2\n")
        config = load_key_value_file(RunConfig, path, {"seed": None, "epochs": 4})
        assert (config.seed, config.epochs) == (9, 4)

    def test_defaults_without_file(self):
        """No file gives the model defaults"""
        assert load_key_value_file(DatasetConfig) == DatasetConfig()

    def test_shipped_configs_load(self):
        """The bundled recipes are valid"""
        run = load_key_value_file(RunConfig, CONFIG_DIR / "tiny.cfg")
        assert run.fusion_config().tag == "post/L40/concat"
        dataset = load_key_value_file(DatasetConfig, CONFIG_DIR / "dataset.cfg")
        assert dataset.ambiguity


class TestModels:
    """Test configuration model validation"""

    def test_longitude_wraps(self):
        """Longitudes are wrapped into [-180, 180)"""
        assert GeoCoord(lon=190.0, lat=0.0).lon == -170.0
        assert GeoCoord(lon=-180.0, lat=0.0).lon == -180.0
        assert GeoCoord(lon=180.0, lat=0.0).lon == -180.0

    def test_longitude_grid(self):
        """Longitudes are rounded to 1e-7 degrees, wrapped or not"""
        assert GeoCoord(lon=12.345678912, lat=0.0).lon == 12.3456789
        assert GeoCoord(lon=179.99999999, lat=0.0).lon == -180.0
        assert GeoCoord(lon=0.1 + 360.0, lat=0.0).lon == 0.1

    def test_longitude_must_be_finite(self):
        """NaN and infinite longitudes are invalid"""
        for lon in (float("nan"), float("inf")):
            with pytest.raises(ValidationError):
                GeoCoord(lon=lon, lat=0.0)

    def test_latitude_range(self):
        """Latitudes beyond the poles are invalid"""
        with pytest.raises(ValidationError):
            GeoCoord(lon=0.0, lat=91.0)

    def test_fusion_tag_round_trip(self):
        """Tags are placement/granularity/strategy"""
        fusion = FusionConfig.from_tag("post/L40/cross_attention", n_tokens=4)
        assert fusion.tag == "post/L40/cross_attention"
        assert fusion.degree == 40
        assert fusion.n_tokens == 4

    @pytest.mark.parametrize("tag", ["post/L40", "mid/L10/concat", "post/L20/concat", "post/L10/sum"])
    def test_bad_fusion_tags(self, tag):
        """Malformed or unknown components are rejected"""
        with pytest.raises(ConfigError):
            FusionConfig.from_tag(tag)

    def test_no_fusion(self):
        """'none' means the baseline model"""
        assert RunConfig(fusion="none").fusion_config() is None

    def test_effective_batch(self):
        """Per-device batch times devices"""
        assert RunConfig(per_device_batch=4, devices=3).effective_batch == 12

    def test_unknown_backbone(self):
        """Only named presets are accepted"""
        with pytest.raises(ConfigError):
            RunConfig(backbone="gigantic")

    def test_jitter_range(self):
        """jitter_min must not exceed jitter_max"""
        with pytest.raises(ConfigError):
            RunConfig(jitter_min=2.0, jitter_max=1.0)
