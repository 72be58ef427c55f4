"""Run configuration: key-value config file, environment overrides, CLI flags."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InputError
from .planner import (
    DEFAULT_EXACT_LIMIT,
    MODE_BASELINE_TSP,
    MODE_MIN_EXPECTED_TIME,
    MODE_THRESHOLD_TSP,
)

_MODES = (MODE_MIN_EXPECTED_TIME, MODE_THRESHOLD_TSP, MODE_BASELINE_TSP)

# environment variables override file values (secrets stay out of configs)
_ENV_KEYS = {
    "TILE_URL": "tile_url",
    "TILE_TOKEN": "tile_token",
    "LMPATH_BACKEND_CMD": "backend_cmd",
}


@dataclass
class RunConfig:
    tile_url: str = ""
    tile_token: str = ""
    tile_cache: str = "cache"
    offline: bool = False
    target_mpp: float = 0.3  # smallest zoom reaching this ground resolution
    zoom: int = 0  # explicit zoom; 0 = derive from target_mpp
    max_zoom: int = 22
    tile_parallelism: int = 8

    window_px: int = 1024
    window_overlap: float = 0.75

    footprint_width: float = 30.0
    lateral_overlap: float = 0.2
    detection_radius: float = 0.0  # 0 = footprint_width / 2

    mode: str = MODE_MIN_EXPECTED_TIME
    rho: float = 0.0
    exact_limit: int = DEFAULT_EXACT_LIMIT

    backend: str = "synthetic"  # synthetic | external
    backend_cmd: str = ""
    scenario: str = ""
    labels_map: str = ""  # empty = bundled map
    normalize_over: str = "domain"

    flight_altitude: float = 40.0
    default_cruise_speed: float = 5.0

    output_dir: str = "out"
    seed: int = -1  # -1 = use the scenario's seed
    workers: int = 1

    def validate(self) -> "RunConfig":
        if not (0.0 <= self.window_overlap < 1.0):
            raise InputError("window_overlap must be in [0, 1)")
        if not (0.0 <= self.lateral_overlap < 1.0):
            raise InputError("lateral_overlap must be in [0, 1)")
        if self.rho < 0:
            raise InputError("rho must be >= 0")
        if self.mode not in _MODES:
            raise InputError(f"mode must be one of {_MODES}")
        if self.backend not in ("synthetic", "external"):
            raise InputError("backend must be 'synthetic' or 'external'")
        if self.normalize_over not in ("domain", "image"):
            raise InputError("normalize_over must be 'domain' or 'image'")
        return self


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"config key '{name}': expected a boolean, got '{raw}'")
    try:
        return kind(raw)
    except ValueError as e:
        raise InputError(f"config key '{name}': {e}") from e


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    types = {f.name: f.type for f in fields(RunConfig)}
    resolved = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}
    out: dict = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {ln}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise InputError(f"config line {ln}: unknown key '{key}'")
        out[key] = _coerce(key, resolved[key], raw)
    return out


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """File values, then environment, then explicit overrides."""
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise InputError(f"config file not found: {p}")
        values.update(parse_config(p.read_text()))
    for env_key, name in _ENV_KEYS.items():
        if os.environ.get(env_key):
            values[name] = os.environ[env_key]
    for k, v in overrides.items():
        if v is not None:
            values[k] = v
    cfg = RunConfig(**values)
    return cfg.validate()


def bundled_labels_map() -> Path:
    return Path(__file__).parent / "data" / "labels.map"
