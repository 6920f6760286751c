"""Assembling a resolved configuration into a runnable experiment stack.

Built once per ladder invocation or training run: targets constructed from
the task binding, transforms fitted on train and applied per their routing
keys, windows cut per the sequencer, and the model instantiated with
seed-deterministic initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import catalog
from .binding import ComponentRegistry, ResolvedConfiguration
from .contracts import SlotFamily, TargetSemantics, TaskContract
from .data import (
    FittedTransform,
    SplitDatasetContainer,
    TransformSpec,
    WindowSpec,
    WindowedDataset,
    apply_transform,
    attach_targets,
    fit_transform,
    window,
)
from .engine import (
    ModelInstance,
    OptimizerState,
    PlateauScheduler,
    SplitArrays,
    TrainBudget,
    TrainRunResult,
    Tensor,
    bytes_for_batch,
    fit,
    loss_for,
)
from .policy import RunPolicy


@dataclass
class ExperimentStack:
    contract: TaskContract
    container: SplitDatasetContainer       # after transform application
    fit_container: SplitDatasetContainer   # the state transforms were fitted on
    fitted_transforms: list[FittedTransform]
    target_transform: FittedTransform | None
    windowed: WindowedDataset
    model: ModelInstance
    loss_fn: object
    window_spec: WindowSpec
    seed: int

    def split_arrays(self, split: str) -> SplitArrays:
        ws = self.windowed.split(split)
        return SplitArrays(features=ws.features, targets=ws.targets)

    def micro_batch(self, count: int) -> dict[str, Tensor]:
        """Slice examples spread across the target quantiles.

        Adjacent windows overlap and share labels, and windows at the same
        degradation phase are near-duplicates; spreading the slice over
        distinct target values keeps memorization well-conditioned while
        still exercising varied labels.
        """
        train = self.windowed.split("train")
        n = len(train)
        take = min(count, n)
        order = np.lexsort((train.starts, train.targets.reshape(n, -1)[:, 0]))
        picks = np.round(np.linspace(0, n - 1, take)).astype(np.int64)
        index = np.unique(order[picks])
        return {
            "features": Tensor(train.features[index]),
            "targets": Tensor(train.targets[index]),
        }


def transform_spec_from_config(config: ResolvedConfiguration) -> TransformSpec | None:
    ref = config.bindings().get(SlotFamily.TRANSFORM)
    if ref is None:
        return None
    params = dict(ref.parameters)
    return TransformSpec(
        name=ref.name,
        fit_on=params.pop("fit_on", "train"),
        apply_to=tuple(params.pop("apply_to", ("train", "val", "test"))),
        assign_to=params.pop("assign_to", "all"),
        parameters=params,
    )


def window_spec_from_config(config: ResolvedConfiguration) -> WindowSpec:
    ref = config.bindings().get(SlotFamily.SEQUENCER)
    if ref is None:
        raise ValueError("configuration binds no sequencer")
    return WindowSpec(
        length=int(ref.parameters.get("length", 16)),
        stride=int(ref.parameters.get("stride", 4)),
        alignment=ref.parameters.get("alignment", "right_edge_label"),
    )


def build_stack(
    config: ResolvedConfiguration,
    registry: ComponentRegistry,
    container: SplitDatasetContainer,
    seed: int = 0,
    contract: TaskContract | None = None,
) -> ExperimentStack:
    contract = contract or catalog.contract_from_config(config)
    bindings = config.bindings()
    task = bindings[SlotFamily.TASK]
    if contract.target_semantics is TargetSemantics.CONTINUOUS:
        container = attach_targets(container, float(task.parameters.get("rul_clip", 40.0)))
    fit_container = container

    fitted: list[FittedTransform] = []
    target_transform: FittedTransform | None = None
    tspec = transform_spec_from_config(config)
    if tspec is not None:
        fitted_one = fit_transform(tspec, fit_container)
        fitted.append(fitted_one)
        if tspec.targets_selected():
            target_transform = fitted_one
        else:
            container = apply_transform(fitted_one, container)

    wspec = window_spec_from_config(config)
    windowed = window(container, wspec, contract)
    if target_transform is not None:
        for split in target_transform.spec.apply_to:
            ws = windowed.split(split)
            flat = ws.targets.reshape(-1, 1)
            ws.targets = target_transform.transform_values(flat).reshape(ws.targets.shape)

    model_ref = bindings[SlotFamily.MODEL]
    n_features = windowed.split("train").features.shape[2] if len(
        windowed.split("train")
    ) else container.units("train")[0].channels.shape[1]
    in_features = wspec.length * n_features
    model = catalog.build_model(model_ref.name, in_features, contract, model_ref.parameters)
    model.init_parameters(seed)

    return ExperimentStack(
        contract=contract,
        container=container,
        fit_container=fit_container,
        fitted_transforms=fitted,
        target_transform=target_transform,
        windowed=windowed,
        model=model,
        loss_fn=loss_for(contract.target_semantics),
        window_spec=wspec,
        seed=seed,
    )


def optimizer_from_config(config: ResolvedConfiguration, policy: RunPolicy) -> OptimizerState:
    hp = config.hyperparameters()
    scheduler = None
    if hp.value("lr_schedule", "none") == "reduce_on_plateau":
        scheduler = PlateauScheduler(
            patience=policy.scheduler_patience, factor=policy.scheduler_factor
        )
    return OptimizerState(
        kind=str(hp.value("optimizer", "adamw")),
        lr=float(hp.value("learning_rate", 1e-3)),
        weight_decay=float(hp.value("weight_decay", 0.0)),
        scheduler=scheduler,
    )


def train(
    config: ResolvedConfiguration,
    dataset: WindowedDataset,
    budget: TrainBudget | None,
    seed: int,
    registry: ComponentRegistry,
    policy: RunPolicy | None = None,
    model: ModelInstance | None = None,
) -> TrainRunResult:
    """Train per the config's hyperparameter contract on pre-windowed data.

    Batch sizes come from the fixed protocol policy, never from the authored
    batch_size row (kept as provenance). Bit-reproducible for a given seed.
    """
    policy = policy or RunPolicy()
    hp = config.hyperparameters()
    contract = catalog.contract_from_config(config)
    if model is None:
        model_ref = config.bindings()[SlotFamily.MODEL]
        train_split = dataset.split("train")
        in_features = train_split.features.shape[1] * train_split.features.shape[2]
        model = catalog.build_model(model_ref.name, in_features, contract, model_ref.parameters)
        model.init_parameters(seed)
    optimizer = optimizer_from_config(config, policy)
    if budget is None:
        budget = TrainBudget(max_epochs=int(hp.value("max_epochs", 300)))
    grad_clip = hp.value("grad_clip")
    warmup = hp.value("warmup", "none")
    warmup_epochs = int(warmup) if isinstance(warmup, (int, float)) and warmup else 0
    train_arrays = SplitArrays(
        features=dataset.split("train").features, targets=dataset.split("train").targets
    )
    val_split = dataset.split("val")
    val_arrays = (
        SplitArrays(features=val_split.features, targets=val_split.targets)
        if len(val_split)
        else None
    )
    return fit(
        model=model,
        optimizer=optimizer,
        train=train_arrays,
        val=val_arrays,
        loss_fn=loss_for(contract.target_semantics),
        budget=budget,
        seed=seed,
        batch_size=policy.train_batch_size,
        eval_batch_size=policy.val_batch_size,
        grad_clip=None if grad_clip in (None, "none") else float(grad_clip),
        warmup_epochs=warmup_epochs,
    )


def batch_fit_estimate(
    config: ResolvedConfiguration,
    budget_bytes: int,
    registry: ComponentRegistry,
    policy: RunPolicy | None = None,
    n_features: int | None = None,
) -> dict:
    """Analytic memory estimate at the fixed batch sizes (train 512, eval 1024).

    Sums input, activation (per recorded primitive), parameter, gradient,
    and optimizer-moment bytes at 8 bytes per value.
    """
    policy = policy or RunPolicy()
    contract = catalog.contract_from_config(config)
    wspec = window_spec_from_config(config)
    if n_features is None:
        ds = config.bindings().get(SlotFamily.DATASOURCE)
        n_features = int(ds.parameters.get("n_features", 4)) if ds else 4
    in_features = wspec.length * n_features
    model_ref = config.bindings()[SlotFamily.MODEL]
    model = catalog.build_model(model_ref.name, in_features, contract, model_ref.parameters)
    model.init_parameters(0)
    hp = config.hyperparameters()
    kind = str(hp.value("optimizer", "adamw"))

    def estimate(batch_size: int) -> int:
        features = Tensor(np.zeros((batch_size, wspec.length, n_features)))
        if contract.target_semantics is TargetSemantics.CLASS_LABEL:
            targets = Tensor(np.zeros(batch_size))
        else:
            targets = Tensor(np.zeros((batch_size, 1, contract.num_targets)))
        return bytes_for_batch(model, {"features": features, "targets": targets}, kind)

    per_batch = {
        "train": estimate(policy.train_batch_size),
        "eval": estimate(policy.val_batch_size),
    }
    estimated = per_batch["train"] + per_batch["eval"]
    return {
        "fits": estimated <= budget_bytes,
        "estimated_bytes": estimated,
        "budget_bytes": budget_bytes,
        "per_batch": per_batch,
    }
