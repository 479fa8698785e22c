"""Full-batch Adam training of the Koopman autoencoder.

Every epoch rebuilds the loss tape at the current parameters, takes one Adam
step on all parameter groups simultaneously, and records the loss breakdown.
Because the latent map is reconstructed from its skew generator on every
forward pass, the advance matrix is exactly orthogonal after every step —
there is nothing to re-project.

Adam uses the canonical bias-corrected form with epsilon outside the square
root:  p <- p - lr * m_hat / (sqrt(v_hat) + eps).

Divergence handling: if the loss evaluates non-finite, training aborts with
:class:`TrainingDiverged`, carrying the most recent parameters whose loss was
verified finite (the freshly stepped-into parameters are the corrupt ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as hm
from .systems import Trajectory

__all__ = ["TrainConfig", "AdamState", "TrainingDiverged", "adam_step", "train"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        for name, beta in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= beta < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {beta}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if len(self.weights) != 5:
            raise ValueError(f"need 5 loss weights, got {len(self.weights)}")


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite state."""

    def __init__(self, model: hm.HnkoModel, history: list[hm.LossBreakdown], epoch: int):
        super().__init__(
            f"loss became non-finite at epoch {epoch}; "
            f"returning the checkpoint from the last finite evaluation"
        )
        self.model = model
        self.history = history
        self.epoch = epoch


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update; pure (inputs are not mutated)."""
    t = state.t + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    bias1 = 1.0 - cfg.beta1**t
    bias2 = 1.0 - cfg.beta2**t
    for name, value in params.items():
        g = grads[name]
        m = cfg.beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params[name] = value - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t)


def train(
    model: hm.HnkoModel,
    states,
    cfg: TrainConfig,
) -> tuple[hm.HnkoModel, list[hm.LossBreakdown]]:
    """Train for cfg.epochs full-batch steps; returns (new model, per-epoch history).

    The input model is left untouched.  ``states`` may be a snapshot matrix
    (rows are states) or a :class:`Trajectory`.  Deterministic: same inputs,
    bit-identical outputs.

    The sphere radius is kept at or above the largest data norm throughout
    (projected step): without the floor the optimizer can shrink the latent
    cloud toward a point, which makes every structural loss cheap while the
    decoder gain -- and with it the noise sensitivity of long rollouts --
    explodes.
    """
    if isinstance(states, Trajectory):
        states = states.states
    states = np.asarray(states, dtype=np.float64)
    params = hm.params_of(model)
    max_norm = float(np.max(np.linalg.norm(states, axis=1))) if states.size else 0.0
    radius_floor = math.log(max_norm) if max_norm > 0 else -math.inf
    last_good = params
    adam = AdamState()
    history: list[hm.LossBreakdown] = []
    for epoch in range(cfg.epochs):
        current = hm.with_params(model, params)
        # Let divergence flow into values instead of warnings; it is detected
        # on the total and handled with a clean abort.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            total, terms, leaves = hm.loss_graph(current, states, cfg.weights)
            if not np.isfinite(total.value):
                raise TrainingDiverged(hm.with_params(model, last_good), history, epoch)
            last_good = params
            grads_by_node = ad.backward(total, list(leaves.values()))
        grads = {name: grads_by_node[leaf] for name, leaf in leaves.items()}
        history.append(
            hm.LossBreakdown(
                dict=float(terms["dict"].value),
                koop=float(terms["koop"].value),
                sphere=float(terms["sphere"].value),
                deg=float(terms["deg"].value),
                ind=float(terms["ind"].value),
                total=float(total.value),
                weights=cfg.weights,
            )
        )
        params, adam = adam_step(params, grads, adam, cfg)
        if params["log_radius"] < radius_floor:
            params = dict(params)
            params["log_radius"] = np.asarray(radius_floor)
    return hm.with_params(model, params), history
