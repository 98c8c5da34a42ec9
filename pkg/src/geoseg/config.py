"""
Configuration for GeoSeg

Process-wide settings come from the environment (and an optional ``.env`` file);
run and dataset recipes come from flat ``key = value`` files.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseSettings):
    """Application settings"""

    # Logging
    log_level: str = "INFO"
    log_config: Optional[str] = None

    # Ablation worker processes (1 = serial)
    workers: int = 1

    # Evaluation-time location embedding cache
    embedding_cache_size: int = 4096

    model_config = SettingsConfigDict(
        env_prefix="GEOSEG_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # Ignore extra environment variables
    )


# Global settings instance
settings = Settings()


def parse_key_value_text(text: str, source: str = "<string>") -> Dict[str, str]:
    """Parse UTF-8 ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def build_model(
    model: Type[ModelT], values: Mapping[str, Any], source: str = "<config>"
) -> ModelT:
    """Validate raw values into ``model``; unknown keys and bad values become ConfigError."""
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    try:
        return model.model_validate(dict(values))
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}") from e


def load_key_value_file(
    model: Type[ModelT],
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ModelT:
    """Load ``model`` from a key=value file (or defaults), then apply ``overrides``."""
    values: Dict[str, Any] = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        values.update(parse_key_value_text(text, source))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    logger.debug("Loaded %s from %s with %d keys", model.__name__, source, len(values))
    return build_model(model, values, source)


def dump_key_value_text(config: BaseModel) -> str:
    """Render a config model back into canonical key=value text."""
    lines = []
    for key, value in config.model_dump().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
