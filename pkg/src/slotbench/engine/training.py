"""The training loop, checkpoint format, and memory estimation.

Bit-reproducible per seed: shuffling is the only stochastic element and it
draws from a PCG64 generator seeded by the caller. Loss history is written
as CSV (epoch, train_loss, val_metric, lr); checkpoints are a JSON header
plus raw little-endian float64 blobs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models as m
from .autodiff import Tensor, backward
from .optim import OptimizerState, PlateauScheduler, clip_gradients, step

CHECKPOINT_FORMAT = "slotbench-checkpoint/1"


@dataclass
class SplitArrays:
    """One split's windows, ready for batching."""

    features: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]

    def batch(self, index: np.ndarray) -> dict[str, Tensor]:
        return {
            "features": Tensor(self.features[index]),
            "targets": Tensor(self.targets[index]),
        }


@dataclass
class TrainBudget:
    max_epochs: int
    max_steps: int | None = None


@dataclass
class TrainRunResult:
    model: m.ModelInstance
    optimizer: OptimizerState
    loss_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)
    epochs_run: int = 0
    steps: int = 0
    seed: int = 0

    @property
    def final_train_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")

    @property
    def final_val_metric(self) -> float:
        return self.val_history[-1] if self.val_history else float("nan")


def evaluate_loss(
    model: m.ModelInstance,
    split: SplitArrays,
    loss_fn,
    batch_size: int,
) -> float:
    """Mean loss over a split, weighted by batch size."""
    n = len(split)
    if n == 0:
        return float("nan")
    total = 0.0
    for start in range(0, n, batch_size):
        index = np.arange(start, min(start + batch_size, n))
        outputs, _ = m.forward(model, split.batch(index))
        total += loss_fn(outputs).item() * len(index)
    return total / n


def fit(
    model: m.ModelInstance,
    optimizer: OptimizerState,
    train: SplitArrays,
    val: SplitArrays | None,
    loss_fn,
    budget: TrainBudget,
    seed: int,
    batch_size: int = 512,
    eval_batch_size: int = 1024,
    grad_clip: float | None = None,
    warmup_epochs: int = 0,
) -> TrainRunResult:
    """Run the loop until the epoch/step budget is exhausted.

    reduce_on_plateau (when configured on the optimizer) observes the val
    metric each epoch and lowers lr by its factor after `patience` epochs
    without improvement. NonFiniteGradient propagates to the caller.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    result = TrainRunResult(model=model, optimizer=optimizer, seed=seed)
    base_lr = optimizer.lr
    n = len(train)
    for epoch in range(budget.max_epochs):
        if warmup_epochs and epoch < warmup_epochs:
            optimizer.lr = base_lr * (epoch + 1) / warmup_epochs
        elif warmup_epochs and epoch == warmup_epochs:
            optimizer.lr = base_lr
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            index = perm[start : start + batch_size]
            _, loss, tape = m.forward_with_loss(model, train.batch(index), loss_fn)
            grads = backward(tape, loss, model.parameters)
            grad_arrays = grads.by_name
            if grad_clip is not None:
                grad_arrays = clip_gradients(grad_arrays, grad_clip)
            params, optimizer = step(optimizer, model.parameters, grad_arrays)
            model.set_parameters(params)
            epoch_loss += loss.item() * len(index)
            result.steps += 1
            if budget.max_steps is not None and result.steps >= budget.max_steps:
                break
        result.loss_history.append(epoch_loss / n)
        if val is not None and len(val):
            val_metric = evaluate_loss(model, val, loss_fn, eval_batch_size)
        else:
            val_metric = result.loss_history[-1]
        result.val_history.append(val_metric)
        result.lr_history.append(optimizer.lr)
        result.epochs_run = epoch + 1
        scheduler = optimizer.scheduler
        if scheduler is not None and (not warmup_epochs or epoch >= warmup_epochs):
            if scheduler.observe(val_metric):
                optimizer.reduce_lr(scheduler.factor)
        if budget.max_steps is not None and result.steps >= budget.max_steps:
            break
    return result


# --- persistence -------------------------------------------------------------


def write_history_csv(path: Path, result: TrainRunResult) -> None:
    lines = ["epoch,train_loss,val_metric,lr"]
    for epoch, (tl, vm, lr) in enumerate(
        zip(result.loss_history, result.val_history, result.lr_history), start=1
    ):
        lines.append(f"{epoch},{tl!r},{vm!r},{lr!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_checkpoint(path_prefix: Path, model: m.ModelInstance, optimizer: OptimizerState) -> None:
    path_prefix = Path(path_prefix)
    names = sorted(model.parameters)
    header = {
        "format": CHECKPOINT_FORMAT,
        "parameters": [
            {"name": name, "shape": list(model.parameters[name].data.shape)}
            for name in names
        ],
        "optimizer": {
            "kind": optimizer.kind,
            "lr": optimizer.lr,
            "weight_decay": optimizer.weight_decay,
            "step_count": optimizer.step_count,
            "scheduler": optimizer.scheduler.state_scalars()
            if optimizer.scheduler
            else None,
            "moment_names": sorted(optimizer.moments),
        },
    }
    blob = bytearray()
    for name in names:
        blob += model.parameters[name].data.astype("<f8").tobytes()
    for name in sorted(optimizer.moments):
        blob += optimizer.moments[name]["m"].astype("<f8").tobytes()
        blob += optimizer.moments[name]["v"].astype("<f8").tobytes()
    path_prefix.with_suffix(".json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    path_prefix.with_suffix(".bin").write_bytes(bytes(blob))


def load_checkpoint(path_prefix: Path) -> tuple[dict[str, Tensor], OptimizerState]:
    path_prefix = Path(path_prefix)
    header = json.loads(path_prefix.with_suffix(".json").read_text(encoding="utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
    blob = path_prefix.with_suffix(".bin").read_bytes()
    offset = 0

    def take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        return arr.astype(np.float64)

    params = {
        spec["name"]: Tensor(take(spec["shape"]), name=spec["name"])
        for spec in header["parameters"]
    }
    shapes = {spec["name"]: spec["shape"] for spec in header["parameters"]}
    opt_meta = header["optimizer"]
    moments = {}
    for name in opt_meta["moment_names"]:
        moments[name] = {"m": take(shapes[name]), "v": take(shapes[name])}
    scheduler = None
    if opt_meta["scheduler"] is not None:
        sched = opt_meta["scheduler"]
        scheduler = PlateauScheduler(
            patience=sched["patience"],
            factor=sched["factor"],
            best=sched["best"],
            bad_epochs=sched["bad_epochs"],
        )
    optimizer = OptimizerState(
        kind=opt_meta["kind"],
        lr=opt_meta["lr"],
        weight_decay=opt_meta["weight_decay"],
        moments=moments,
        step_count=opt_meta["step_count"],
        scheduler=scheduler,
    )
    return params, optimizer


# --- memory estimation ---------------------------------------------------------

BYTES_PER_VALUE = 8


def bytes_for_batch(model: m.ModelInstance, batch: dict[str, Tensor], optimizer_kind: str) -> int:
    """Input + activation + parameter + gradient + optimizer-moment bytes for
    one forward at this batch size; activations counted per recorded primitive."""
    outputs, tape = m.forward(model, batch)
    del outputs
    input_values = sum(t.size for t in batch.values())
    activation_values = sum(rec.output.size for rec in tape.records)
    param_values = model.parameter_count()
    moment_values = 2 * param_values if optimizer_kind in ("adam", "adamw") else 0
    total_values = input_values + activation_values + 2 * param_values + moment_values
    return total_values * BYTES_PER_VALUE
