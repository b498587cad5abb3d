"""
Đọc config YAML, dựng dataclass theo từng section, override và hash config.
"""
import dataclasses
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar, Union

import yaml
from dotenv import load_dotenv

from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

SEED_ENV = "LUT_SEED"

T = TypeVar("T")


def load_config(path: Union[str, Path] = "config/config.yaml") -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        cfg = yaml.safe_load(f) or {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"Config root must be a mapping: {path}")
    return cfg


def dataclass_from_dict(cls: Type[T], values: Optional[Mapping[str, Any]], section: str) -> T:
    """Tạo dataclass từ mapping; key lạ -> ConfigError (không bỏ qua)."""
    values = dict(values or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"Unknown keys in section '{section}': {sorted(unknown)}")
    for f in dataclasses.fields(cls):
        if f.name in values and isinstance(values[f.name], list):
            values[f.name] = tuple(
                tuple(v) if isinstance(v, list) else v for v in values[f.name]
            )
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"Invalid section '{section}': {exc}") from exc


def parse_override(text: str) -> Tuple[str, str, Any]:
    """'section.key=value' -> (section, key, giá trị đã parse bằng YAML)."""
    if "=" not in text:
        raise ConfigError(f"Override must look like section.key=value: {text!r}")
    lhs, raw = text.split("=", 1)
    if "." not in lhs:
        raise ConfigError(f"Override key must be section.key: {lhs!r}")
    section, key = lhs.split(".", 1)
    return section.strip(), key.strip(), yaml.safe_load(raw)


def apply_overrides(cfg: Dict[str, Any], overrides) -> Dict[str, Any]:
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg.items()}
    for text in overrides or ():
        section, key, value = parse_override(text)
        cfg.setdefault(section, {})
        if not isinstance(cfg[section], dict):
            raise ConfigError(f"Section '{section}' is not a mapping")
        cfg[section][key] = value
        logger.info("Config override %s.%s = %r", section, key, value)
    return cfg


def env_seed() -> Optional[int]:
    load_dotenv()
    raw = os.getenv(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def config_hash(payload: Mapping[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
