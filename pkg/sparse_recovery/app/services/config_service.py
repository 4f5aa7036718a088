import json
import logging
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from ..core.exceptions import ConfigError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a JSON document, or TOML when the file ends in .toml"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        logger.error(f"Error in read_document parsing {path}: {e}")
        raise ConfigError(f"cannot parse {path}: {e}") from e


def field_paths(error: ValidationError) -> list:
    return [".".join(str(part) for part in item["loc"]) or "<root>" for item in error.errors()]


def validate_document(model: Type[ModelT], payload: Dict[str, Any], source: str = "<config>") -> ModelT:
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        paths = field_paths(e)
        details = "; ".join(f"{p}: {item['msg']}" for p, item in zip(paths, e.errors()))
        raise ConfigError(f"invalid {model.__name__} in {source}: {details}", field_paths=paths) from e


def load_config(model: Type[ModelT], path: Union[str, Path], **overrides) -> ModelT:
    """Read, apply non-None overrides on top-level keys, validate"""
    payload = read_document(path)
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    payload.update({key: value for key, value in overrides.items() if value is not None})
    config = validate_document(model, payload, str(path))
    logger.info(f"Loaded {model.__name__} from {path}")
    return config
