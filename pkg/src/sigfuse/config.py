"""Run configuration: a single JSON file, schema-validated, unknown keys rejected.

``resolve_config`` deep-merges user values over the defaults and type-checks
every leaf; the resolved dict (written into each run directory as
``config.json``) re-runs to identical results.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

_NULLABLE_INT = ("nullable_int",)

DEFAULTS: dict = {
    "seed": 0,
    "data": {
        "source": "synthetic",          # "synthetic" | "directory"
        "directory": None,
        "sample_rate": 128.0,
        "image_target_len": 128,
        "synthetic": {
            "n_patients": 20,
            "signals_per_patient": 8,
            "length": 256,
            "class_weights": [0.4, 0.25, 0.2, 0.15],
            "noise_sd": 0.03,
        },
    },
    "preprocess": {
        "bandpass": {"enabled": True, "low_hz": 0.5, "high_hz": 45.0, "transition_hz": 0.25},
    },
    "split": {"train": 0.8, "val": 0.1, "test": 0.1, "group_by_patient": True,
              "stratify_by_class": False},
    "views": {"fft_bins": None, "n_scales": 24, "scalogram_rows": 32, "scalogram_cols": 32},
    "adasyn": {"enabled": True, "k": 5, "beta": 1.0},
    "models": {"width_mult": 0.125, "heads": 2, "key_dim": 16,
               "ff_dim": None, "fusion_dense": None, "finetune": False,
               "batchnorm": True, "bn_momentum": 0.9},
    "train": {
        "lr": 3e-3,
        "epochs": 14,
        "batch_size": 16,
        "patience": 6,
        "loss": "cross_entropy",
        "lambda_mi": 0.1,
        "lambda_ortho": 0.01,
        # Per-model partial overrides; the selected-pair fusion model trains
        # with the complementarity-aware loss by default.
        "overrides": {"hybrid1": {"loss": "complementary"}},
    },
    "thresholds": {"eps": 0.15, "delta": 0.5, "gamma": 0.25, "tau_mi": 0.42, "tau_ortho": 0.3},
    "bootstrap": {"iterations": 1000, "mi_bins": 16},
    "output": {"figures": True, "svg": False},
    "threads": 1,
}

_MODEL_NAMES = ("cnn1d", "cnn2d", "transformer", "hybrid1", "hybrid2")
_OVERRIDABLE = ("lr", "epochs", "batch_size", "patience", "loss", "lambda_mi", "lambda_ortho")


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _check_type(path: str, value, default) -> None:
    if default is None or value is None:
        return  # nullable leaf
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected bool, got {type(value).__name__}")
    elif isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {type(value).__name__}")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {type(value).__name__}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected list, got {type(value).__name__}")


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = {}
    for key, default in base.items():
        here = f"{path}.{key}" if path else key
        if key not in user:
            out[key] = copy.deepcopy(default)
        elif isinstance(default, dict) and key != "overrides":
            if not isinstance(user[key], dict):
                raise ConfigError(f"{here}: expected an object")
            out[key] = _merge(default, user[key], here)
        else:
            _check_type(here, user[key], default if not isinstance(default, dict) else None)
            out[key] = copy.deepcopy(user[key])
    unknown = set(user) - set(base)
    if unknown:
        raise ConfigError(f"unknown key(s) at {path or 'top level'}: {sorted(unknown)}")
    return out


def _validate_overrides(overrides) -> None:
    if not isinstance(overrides, dict):
        raise ConfigError("train.overrides: expected an object")
    for model, sub in overrides.items():
        if model not in _MODEL_NAMES:
            raise ConfigError(f"train.overrides: unknown model {model!r}")
        if not isinstance(sub, dict):
            raise ConfigError(f"train.overrides.{model}: expected an object")
        bad = set(sub) - set(_OVERRIDABLE)
        if bad:
            raise ConfigError(f"train.overrides.{model}: unknown key(s) {sorted(bad)}")


def resolve_config(user: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, user or {})
    _validate_overrides(cfg["train"]["overrides"])
    if cfg["data"]["source"] not in ("synthetic", "directory"):
        raise ConfigError(f"data.source: must be 'synthetic' or 'directory'")
    if cfg["data"]["source"] == "directory" and not cfg["data"]["directory"]:
        raise ConfigError("data.source is 'directory' but data.directory is unset")
    if cfg["train"]["loss"] not in ("cross_entropy", "complementary"):
        raise ConfigError(f"train.loss: unknown loss {cfg['train']['loss']!r}")
    if cfg["threads"] != 1:
        raise ConfigError("threads: only 1 is supported (kept for bit-reproducible runs)")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        user = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return resolve_config(user)
