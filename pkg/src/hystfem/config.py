"""TOML experiment configuration: loading, defaults, output locations."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

#: environment variable naming the root directory for all outputs
OUTPUT_ENV = "HYSTFEM_OUT"


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed config {path}: {err}") from err


def output_dir(cfg: dict, override: str | None = None) -> Path:
    """Resolve the output directory: CLI flag > config > $HYSTFEM_OUT > cwd."""
    root = Path(os.environ.get(OUTPUT_ENV, "."))
    sub = override or cfg.get("output", {}).get("dir", "out")
    path = Path(sub)
    if not path.is_absolute():
        path = root / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def stable_hash(payload: dict) -> str:
    """Deterministic short hash of a JSON-serializable parameter dict."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
