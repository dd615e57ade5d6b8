"""Run configuration: hyperparameter profiles, config files and their hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

PROFILES: dict[str, dict[str, Any]] = {
    # sizes a laptop trains in minutes
    "desk": dict(embedding_dim=32, hidden_dim=24, n_layers=1, dropout=0.2, max_len=200,
                 batch_size=8, epochs=8, skipthought_epochs=4, umfs_epochs=5),
    "paper": dict(embedding_dim=300, hidden_dim=200, n_layers=2, dropout=0.2, max_len=200,
                  batch_size=8, epochs=20, skipthought_epochs=20, umfs_epochs=5),
}

PATH_FIELDS = ("corpus", "running_text", "out")


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None = None
    running_text: str | None = None
    out: str = "run"
    seed: int = 0
    profile: str = "desk"
    embedding_dim: int = 32
    hidden_dim: int = 24
    n_layers: int = 1
    dropout: float = 0.2
    max_len: int = 200
    batch_size: int = 8
    epochs: int = 8
    lr: float = 1e-3
    attention: str = "bilinear"
    skipthought_epochs: int = 4
    skipthought_lr: float = 3e-3
    umfs_epochs: int = 5
    synth: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        for name in ("embedding_dim", "hidden_dim", "n_layers", "max_len", "batch_size", "epochs",
                     "skipthought_epochs", "umfs_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.lr <= 0 or self.skipthought_lr <= 0:
            raise ValueError("learning rates must be positive")

    def hyperparameters(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in PATH_FIELDS}

    def config_hash(self) -> str:
        """SHA-256 over everything except filesystem paths."""
        blob = json.dumps(self.hyperparameters(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def read_config_file(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Profile defaults, then config-file values, then command-line overrides."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    profile = overrides.get("profile", file_values.get("profile", "desk"))
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    cfg = replace(RunConfig(), profile=profile, **PROFILES[profile])
    cfg = replace(cfg, **file_values)
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg
