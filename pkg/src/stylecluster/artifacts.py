"""Append-only working directory for pipeline outputs.

Artifacts are never overwritten: a second write of `name.ext` lands at
`name.v2.ext`, a third at `name.v3.ext`, and readers pick the latest. Every
command appends one record to `manifest.jsonl` holding the effective seed,
the config hash, input hashes, and output names, so any artifact can be
regenerated from the manifest alone. Records carry no timestamps or absolute
paths; two runs with the same seed produce identical manifests.
"""

from __future__ import annotations

import copy
import json
import os
import re

from . import __version__
from .util import canonical_json, sha256_file, sha256_hex

ENV_WORKDIR = "STYLECLUSTER_WORKDIR"
MANIFEST_NAME = "manifest.jsonl"
CONFIG_VERSION = 1


class ArtifactError(Exception):
    pass


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: dict = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "paths": {"corpus": None, "workdir": None},
    "synth": {"n_samples": 2000, "n_styles": 2},
    "train": {
        "hidden_dim": 256,
        "margin": 0.5,
        "batch_size": 2048,
        "lr": 0.001,
        "epochs": 30,
        "val_fraction": 0.05,
        "patience": 5,
        "directed": False,
    },
    "cluster": {
        "k": 4,
        "n_init": 10,
        "split_per_cluster": 100,
        "baseline_total": 400,
        "silhouette_cap": 2000,
        "census_top_k": 15,
    },
    "metric": {"lowercase": True, "drop_punctuation": True},
}

_INT_FIELDS = {
    ("seed",), ("synth", "n_samples"), ("synth", "n_styles"),
    ("train", "hidden_dim"), ("train", "batch_size"), ("train", "epochs"),
    ("train", "patience"),
    ("cluster", "k"), ("cluster", "n_init"), ("cluster", "split_per_cluster"),
    ("cluster", "baseline_total"), ("cluster", "silhouette_cap"),
    ("cluster", "census_top_k"),
}
_FLOAT_FIELDS = {("train", "margin"), ("train", "lr"), ("train", "val_fraction")}
_BOOL_FIELDS = {("train", "directed"), ("metric", "lowercase"),
                ("metric", "drop_punctuation")}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _get(cfg: dict, path: tuple) -> object:
    cur = cfg
    for p in path:
        cur = cur[p]
    return cur


def validate_config(cfg: dict) -> None:
    """Schema check; raises ArtifactError with the offending key path."""
    if cfg.get("version") != CONFIG_VERSION:
        raise ArtifactError(
            f"unsupported config version {cfg.get('version')!r}, "
            f"expected {CONFIG_VERSION}")
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ArtifactError(f"unknown config keys: {sorted(unknown)}")
    for block in ("paths", "synth", "train", "cluster", "metric"):
        if not isinstance(cfg[block], dict):
            raise ArtifactError(f"config {block!r} must be an object")
        extra = set(cfg[block]) - set(DEFAULT_CONFIG[block])
        if extra:
            raise ArtifactError(f"unknown keys in {block!r}: {sorted(extra)}")
    for path in _INT_FIELDS:
        v = _get(cfg, path)
        if not isinstance(v, int) or isinstance(v, bool):
            raise ArtifactError(f"config {'.'.join(path)} must be an integer")
        if v < 0:
            raise ArtifactError(f"config {'.'.join(path)} must be non-negative")
    for path in _FLOAT_FIELDS:
        v = _get(cfg, path)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ArtifactError(f"config {'.'.join(path)} must be a number")
    for path in _BOOL_FIELDS:
        if not isinstance(_get(cfg, path), bool):
            raise ArtifactError(f"config {'.'.join(path)} must be a boolean")
    for key in ("corpus", "workdir"):
        v = cfg["paths"][key]
        if v is not None and not isinstance(v, str):
            raise ArtifactError(f"config paths.{key} must be a string")


def load_config(path: str | None) -> dict:
    """Defaults overlaid with the JSON file at `path` (when given)."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise ArtifactError(f"config {path}: invalid JSON: {e.msg}") from None
        if not isinstance(loaded, dict):
            raise ArtifactError(f"config {path}: top level must be an object")
        cfg = _deep_merge(cfg, loaded)
    validate_config(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    return sha256_hex(canonical_json(cfg).encode("utf-8"))


def resolve_workdir(flag_value: str | None, cfg: dict) -> str:
    """Flag beats config beats environment; no source at all is an error."""
    for candidate in (flag_value, cfg["paths"]["workdir"],
                      os.environ.get(ENV_WORKDIR)):
        if candidate:
            return candidate
    raise ArtifactError(
        "no working directory: pass --workdir, set paths.workdir in the "
        f"config, or export {ENV_WORKDIR}")


# ---------------------------------------------------------------------------
# Versioned artifact store
# ---------------------------------------------------------------------------


def _split_name(name: str) -> tuple[str, str]:
    stem, ext = os.path.splitext(name)
    if not stem or "/" in name or os.sep in name:
        raise ArtifactError(f"bad artifact name {name!r}")
    return stem, ext


class Workdir:
    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def _versions(self, name: str) -> list[tuple[int, str]]:
        stem, ext = _split_name(name)
        pat = re.compile(rf"^{re.escape(stem)}\.v(\d+){re.escape(ext)}$")
        found = []
        if os.path.exists(self.path(name)):
            found.append((1, name))
        for entry in os.listdir(self.root):
            m = pat.match(entry)
            if m:
                found.append((int(m.group(1)), entry))
        found.sort()
        return found

    def new_path(self, name: str) -> str:
        """Where the next write of this artifact should land."""
        versions = self._versions(name)
        if not versions:
            return self.path(name)
        stem, ext = _split_name(name)
        return self.path(f"{stem}.v{versions[-1][0] + 1}{ext}")

    def latest(self, name: str) -> str | None:
        versions = self._versions(name)
        return self.path(versions[-1][1]) if versions else None

    def require(self, name: str, produced_by: str) -> str:
        p = self.latest(name)
        if p is None:
            raise ArtifactError(f"missing artifact {name}: run {produced_by} first")
        return p

    def append_manifest(self, record: dict) -> None:
        with open(self.path(MANIFEST_NAME), "a", encoding="utf-8") as f:
            f.write(canonical_json(record) + "\n")

    def read_manifest(self) -> list[dict]:
        p = self.path(MANIFEST_NAME)
        if not os.path.exists(p):
            return []
        records = []
        with open(p, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(json.loads(line))
        return records


def record_run(wd: Workdir, command: str, seed: int, cfg: dict,
               inputs: dict[str, str], outputs: list[str]) -> dict:
    """Append one manifest record; inputs map artifact names to file paths
    that get hashed, outputs are names relative to the workdir."""
    record = {
        "command": command,
        "package_version": __version__,
        "seed": seed,
        "config_hash": config_hash(cfg),
        "inputs": {name: sha256_file(path) for name, path in sorted(inputs.items())},
        "outputs": sorted(os.path.basename(o) for o in outputs),
    }
    wd.append_manifest(record)
    return record
