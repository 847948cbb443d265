"""Controller and plant configuration from files, scenario overrides and flags.

A config file is JSON with optional ``controller`` and ``plant`` sections::

    {"controller": {"alpha": 4.0, "epsilon": 0.001},
     "plant": {"v_max": 0.02, "noise_stddev_pos": 1e-4}}

Later sources win: defaults, then scenario ``set`` lines, then the config
file, then command-line flags.
"""

from __future__ import annotations

import dataclasses
import json
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Optional, Union

from .controller import ControllerConfig
from .errors import FormatError
from .plant import PlantConfig

SEED_ENV = "DUALREP_SEED"
SECTIONS = {"controller": ControllerConfig, "plant": PlantConfig}


def _field_types(cls) -> dict[str, type]:
    return {f.name: type(f.default) for f in dataclasses.fields(cls)}


def _coerce(section: str, name: str, value):
    types = _field_types(SECTIONS[section])
    if name not in types:
        raise FormatError(f"unknown {section} setting {name!r} (known: {', '.join(sorted(types))})")
    want = types[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{section}.{name} must be a number, got {value!r}")
    if want is int:
        if float(value) != int(value):
            raise FormatError(f"{section}.{name} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def merge_overrides(*layers: Optional[Mapping]) -> dict[str, dict]:
    """Combine ``{"controller": {...}, "plant": {...}}`` layers, later ones winning."""
    out: dict[str, dict] = {"controller": {}, "plant": {}}
    for layer in layers:
        if not layer:
            continue
        for section, values in layer.items():
            if section not in SECTIONS:
                raise FormatError(f"unknown config section {section!r} (known: controller, plant)")
            if not isinstance(values, Mapping):
                raise FormatError(f"config section {section!r} must be an object")
            for name, value in values.items():
                if value is None:
                    continue
                out[section][name] = _coerce(section, name, value)
    return out


def build_configs(overrides: Optional[Mapping] = None) -> tuple[ControllerConfig, PlantConfig]:
    merged = merge_overrides(overrides)
    try:
        return ControllerConfig(**merged["controller"]), PlantConfig(**merged["plant"])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def load_config_file(path: Union[str, Path]) -> dict[str, dict]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    try:
        return merge_overrides(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def default_seed(fallback: int = 0) -> int:
    """Seed from ``DUALREP_SEED`` if set, else ``fallback``."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return fallback
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise FormatError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def config_dict(ccfg: ControllerConfig, pcfg: PlantConfig) -> dict[str, dict]:
    return {"controller": dataclasses.asdict(ccfg), "plant": dataclasses.asdict(pcfg)}
