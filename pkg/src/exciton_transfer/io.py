"""Config files, run manifests and deterministic table output."""
from __future__ import annotations

import hashlib
import json
import subprocess
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .model import SCHEMA_VERSION

FLOAT_FORMAT = "%.12g"


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def source_revision() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def run_id(payload: dict) -> str:
    """Stable 16-hex-digit identifier of a run's inputs."""
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def load_config(path) -> dict:
    """Read a YAML or JSON config and check its schema version."""
    path = Path(path)
    text = path.read_text()
    data = yaml.safe_load(text) if path.suffix in (".yml", ".yaml") else json.loads(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: expected schema_version {SCHEMA_VERSION}, got {version!r}")
    return data


def manifest_body(command: str, inputs: dict, seed=None, tolerances=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "inputs": _plain(inputs),
        "seed": seed,
        "tolerances": _plain(tolerances or {}),
        "version": package_version(),
    }


def build_manifest(command: str, inputs: dict, *, seed=None, tolerances=None, wall_time=None, extra=None) -> dict:
    """Manifest dict; ``run_id`` hashes everything except timing fields."""
    body = manifest_body(command, inputs, seed, tolerances)
    manifest = dict(body)
    manifest["run_id"] = run_id(body)
    manifest["source_revision"] = source_revision()
    manifest["wall_time_s"] = wall_time
    manifest["created_unix"] = time.time()
    if extra:
        manifest["notes"] = _plain(extra)
    return manifest


def write_table(df, path, fmt: str = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = path.with_suffix(".csv")
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    elif fmt == "json":
        path = path.with_suffix(".json")
        path.write_text(json.dumps(_plain(df.to_dict(orient="records")), indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def write_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    return path
