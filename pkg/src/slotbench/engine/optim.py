"""Optimizers (sgd, adam, adamw) and the plateau scheduler.

Updates are pure with respect to parameters: `step` returns fresh tensors.
adamw applies decoupled weight decay, so adamw with weight_decay=0 matches
adam exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradient
from .autodiff import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PlateauScheduler:
    """reduce_on_plateau: multiply lr by `factor` after `patience` epochs
    without improvement of the observed validation metric (lower is better)."""

    patience: int = 5
    factor: float = 0.9
    best: float | None = None
    bad_epochs: int = 0

    def __post_init__(self):
        if not (0.0 < self.factor < 1.0):
            raise ValueError("factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def observe(self, metric: float) -> bool:
        """Record one epoch's validation metric; True when lr should drop."""
        if self.best is None or metric < self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            return True
        return False

    def state_scalars(self) -> dict:
        return {
            "patience": self.patience,
            "factor": self.factor,
            "best": self.best,
            "bad_epochs": self.bad_epochs,
        }


@dataclass
class OptimizerState:
    kind: str = "adamw"  # sgd | adam | adamw
    lr: float = 1e-3
    weight_decay: float = 0.0
    moments: dict = field(default_factory=dict)  # name -> {"m": arr, "v": arr}
    step_count: int = 0
    scheduler: PlateauScheduler | None = None

    def __post_init__(self):
        if self.kind not in ("sgd", "adam", "adamw"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")

    def reduce_lr(self, factor: float) -> None:
        self.lr *= factor


def step(
    optimizer: OptimizerState,
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
) -> tuple[dict[str, Tensor], OptimizerState]:
    """One update. Returns new parameter tensors and the advanced state."""
    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    optimizer.step_count += 1
    t = optimizer.step_count
    updated: dict[str, Tensor] = {}
    for name, tensor in params.items():
        p = tensor.data
        g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=np.float64)
        if optimizer.kind == "sgd":
            if optimizer.weight_decay:
                g = g + optimizer.weight_decay * p
            new = p - optimizer.lr * g
        else:
            if optimizer.kind == "adam" and optimizer.weight_decay:
                g = g + optimizer.weight_decay * p
            state = optimizer.moments.setdefault(
                name, {"m": np.zeros_like(p), "v": np.zeros_like(p)}
            )
            state["m"] = ADAM_BETA1 * state["m"] + (1.0 - ADAM_BETA1) * g
            state["v"] = ADAM_BETA2 * state["v"] + (1.0 - ADAM_BETA2) * g * g
            m_hat = state["m"] / (1.0 - ADAM_BETA1**t)
            v_hat = state["v"] / (1.0 - ADAM_BETA2**t)
            new = p - optimizer.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if optimizer.kind == "adamw" and optimizer.weight_decay:
                new = new - optimizer.lr * optimizer.weight_decay * p
        updated[name] = Tensor(new, name=name)
    return updated, optimizer


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Global-norm gradient clipping; identity when already inside the bound."""
    total = sum(float((g * g).sum()) for g in grads.values())
    norm = float(np.sqrt(total))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}
