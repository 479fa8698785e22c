"""Experiment configuration: presets, config files, dotted overrides.

Resolution order (later wins): built-in defaults < preset < config file
< --set overrides.  The resolved config is validated against every
module-level constraint before any work starts, and can be dumped with
--print-config.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import model as hm
from .. import orthogonal
from ..systems import Kdv, figure_eight_x0, soliton, state_dim
from ..training import TrainConfig
from . import formats

__all__ = ["ConfigError", "ExperimentConfig", "preset_names", "resolve"]


class ConfigError(ValueError):
    """Configuration problem — reported as a usage error."""


_DEFAULTS = {
    "system": None,
    "x0": None,
    "dt": 0.1,
    "internal_dt": None,
    "train_steps": 50,
    "predict_steps": 500,
    "noise": {"sigma2": 0.0, "seed": 0},
    "normalize": "none",
    "model": {"p": 6, "q": 2, "variant": "full", "hidden": None, "seed": 0},
    "train": {
        "epochs": 5000,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "weights": [1.0, 1.0, 1.0, 1.0, 1.0],
    },
    "out_dir": ".",
    "preset": None,
}


def _preset_kepler() -> dict:
    # Circular orbit (period 2pi) sampled densely enough that the curve fit
    # averages the observation noise down; the model is a great circle
    # (q = p - 2) in an odd latent dimension, which pins an exact
    # eigenvalue-1 axis for invariant discovery.
    return {
        "system": {"kind": "kepler", "m": 1.0, "g": 1.0},
        "x0": [1.0, 0.0, 0.0, 1.0],
        "dt": 0.0025,
        "train_steps": 2520,
        "predict_steps": 27720,
        "noise": {"sigma2": 0.01, "seed": 0},
        "normalize": "none",
        "model": {"p": 5, "q": 3, "variant": "full", "hidden": None, "seed": 0},
        "train": {"epochs": 5000, "weights": [1.0, 1.0, 5.0, 5.0, 5.0]},
    }


def _preset_spring(stiffness: float) -> dict:
    # k = m = SC gives unit frequency with momentum amplitude SC; training
    # happens on per-coordinate normalized states so all three presets pose
    # the same learning problem.
    return {
        "system": {"kind": "mass_spring", "m": stiffness, "k": stiffness},
        "x0": [1.0, 0.0],
        "dt": 0.05,
        "train_steps": 126,
        "predict_steps": 180,
        "noise": {"sigma2": 0.0, "seed": 0},
        "normalize": "auto",
        "model": {"p": 5, "q": 3, "variant": "full", "hidden": None, "seed": 0},
        "train": {"epochs": 5000, "weights": [1.0, 1.0, 5.0, 5.0, 5.0]},
    }


def _preset_three_body() -> dict:
    return {
        "system": {"kind": "nbody", "masses": [1.0, 1.0, 1.0], "g": 1.0, "spatial_dim": 2},
        "x0": figure_eight_x0().tolist(),
        "dt": 0.1,
        "train_steps": 50,
        "predict_steps": 500,
        "noise": {"sigma2": 0.01, "seed": 0},
        "normalize": "none",
        "model": {"p": 16, "q": 7, "variant": "full", "hidden": None, "seed": 0},
        "train": {"epochs": 10000},
    }


def _preset_kdv64() -> dict:
    # One soliton riding on a uniform background (u + kappa solves KdV
    # exactly, traveling at c + 6*kappa).  The offset keeps the conserved
    # mass/energy away from zero so their relative drift is a meaningful
    # target under heavy observation noise; the wave itself is the same.
    spec = Kdv(grid_points=64, domain_length=50.0)
    return {
        "system": {"kind": "kdv", "grid_points": 64, "domain_length": 50.0},
        "x0": (soliton(spec, c=1.0, center=25.0) + 2.0).tolist(),
        "dt": 0.1,
        "train_steps": 2000,
        "predict_steps": 6000,
        "noise": {"sigma2": 0.03, "seed": 0},
        "normalize": "none",
        "model": {"p": 5, "q": 3, "variant": "full", "hidden": None, "seed": 0},
        "train": {"epochs": 10000, "weights": [1.0, 1.0, 5.0, 5.0, 5.0]},
    }


_PRESETS = {
    "kepler": _preset_kepler,
    "spring-stiff1": lambda: _preset_spring(1.0),
    "spring-stiff10": lambda: _preset_spring(10.0),
    "spring-stiff100": lambda: _preset_spring(100.0),
    "three-body": _preset_three_body,
    "kdv64": _preset_kdv64,
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and isinstance(value, dict) and key != "system":
            out[key] = _deep_merge(out[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(cfg: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigError(f"--set needs key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    keys = dotted.strip().split(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings like normalize=auto
    override: dict = value
    for key in reversed(keys):
        override = {key: override}
    return _deep_merge(cfg, override)


@dataclass(frozen=True)
class ExperimentConfig:
    system: dict
    x0: list[float]
    dt: float
    internal_dt: float | None
    train_steps: int
    predict_steps: int
    noise: dict
    normalize: str
    model: dict
    train: dict
    out_dir: str
    preset: str | None = None

    def as_dict(self) -> dict:
        return {
            "system": copy.deepcopy(self.system),
            "x0": list(self.x0),
            "dt": self.dt,
            "internal_dt": self.internal_dt,
            "train_steps": self.train_steps,
            "predict_steps": self.predict_steps,
            "noise": copy.deepcopy(self.noise),
            "normalize": self.normalize,
            "model": copy.deepcopy(self.model),
            "train": copy.deepcopy(self.train),
            "out_dir": self.out_dir,
            "preset": self.preset,
        }

    def system_spec(self):
        return formats.system_from_dict(self.system)

    def x0_array(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=np.float64)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            epochs=int(t["epochs"]),
            learning_rate=float(t["learning_rate"]),
            beta1=float(t["beta1"]),
            beta2=float(t["beta2"]),
            eps=float(t["eps"]),
            weights=tuple(float(w) for w in t["weights"]),
        )


def _validate(cfg: dict) -> ExperimentConfig:
    if cfg.get("system") is None:
        raise ConfigError("no system configured; pick a --preset or provide system in a config file")
    try:
        spec = formats.system_from_dict(cfg["system"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n = state_dim(spec)
    x0 = cfg.get("x0")
    if x0 is None:
        raise ConfigError("no initial condition x0 configured")
    if len(x0) != n:
        raise ConfigError(f"x0 has length {len(x0)}, system expects {n}")
    if not cfg["dt"] > 0:
        raise ConfigError(f"dt must be positive, got {cfg['dt']}")
    if cfg["internal_dt"] is not None and not cfg["internal_dt"] > 0:
        raise ConfigError(f"internal_dt must be positive, got {cfg['internal_dt']}")
    if cfg["train_steps"] < 2:
        raise ConfigError(f"train_steps must be >= 2, got {cfg['train_steps']}")
    if cfg["predict_steps"] < cfg["train_steps"]:
        raise ConfigError(
            f"predict_steps ({cfg['predict_steps']}) must cover the training span "
            f"({cfg['train_steps']} steps)"
        )
    if cfg["noise"]["sigma2"] < 0:
        raise ConfigError(f"noise variance must be >= 0, got {cfg['noise']['sigma2']}")
    if cfg["normalize"] not in ("none", "auto"):
        raise ConfigError(f"normalize must be 'none' or 'auto', got {cfg['normalize']!r}")
    m = cfg["model"]
    try:
        orthogonal.param_count(m["variant"], m["p"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lo, hi = hm.q_range(m["p"])
    if not (lo <= m["q"] <= hi or (m["q"] == 0 and lo == 0)):
        raise ConfigError(f"q={m['q']} outside the admissible range [{lo}, {hi}] for p={m['p']}")
    if m["hidden"] is not None and any(w < 1 for w in m["hidden"]):
        raise ConfigError(f"hidden widths must be positive, got {m['hidden']}")
    t = cfg["train"]
    if t["epochs"] < 0:
        raise ConfigError(f"epochs must be >= 0, got {t['epochs']}")
    if not t["learning_rate"] > 0:
        raise ConfigError(f"learning_rate must be positive, got {t['learning_rate']}")
    if len(t["weights"]) != 5:
        raise ConfigError(f"need exactly 5 loss weights, got {len(t['weights'])}")
    return ExperimentConfig(
        system=cfg["system"],
        x0=[float(v) for v in x0],
        dt=float(cfg["dt"]),
        internal_dt=None if cfg["internal_dt"] is None else float(cfg["internal_dt"]),
        train_steps=int(cfg["train_steps"]),
        predict_steps=int(cfg["predict_steps"]),
        noise={"sigma2": float(cfg["noise"]["sigma2"]), "seed": int(cfg["noise"]["seed"])},
        normalize=cfg["normalize"],
        model=copy.deepcopy(cfg["model"]),
        train=copy.deepcopy(cfg["train"]),
        out_dir=str(cfg["out_dir"]),
        preset=cfg.get("preset"),
    )


def resolve(preset: str | None = None, config_path=None,
            overrides: list[str] | None = None) -> ExperimentConfig:
    """Defaults < preset < config file < --set overrides, then validate."""
    cfg = copy.deepcopy(_DEFAULTS)
    if preset is not None:
        if preset not in _PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}, available: {', '.join(preset_names())}"
            )
        cfg = _deep_merge(cfg, _PRESETS[preset]())
        cfg["preset"] = preset
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            from_file = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(from_file, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg = _deep_merge(cfg, from_file)
    for assignment in overrides or []:
        cfg = _apply_set(cfg, assignment)
    return _validate(cfg)
