"""Builtin component inventory, framework default documents, and factories.

The registry entries here are the pre-run components a binding can reuse;
extensions arrive via register_extension with created_this_run provenance.
Descriptors declare capabilities as data so the typechecker stays pure.
"""

from __future__ import annotations

from .binding import ComponentRegistry, descriptor
from .contracts import EvaluationUnit, SlotFamily, TaskContract, TaskKind
from .engine import models
from .ledger import FrameworkDefaults

N_REGIMES = 3  # synthetic diagnostics label count

_REGRESSION = ["continuous_target"]
_CLASSIFICATION = ["class_label"]
_SHAPE = ["B", 1, "K"]


def builtin_registry() -> ComponentRegistry:
    registry = ComponentRegistry()
    entries = [
        # tasks
        descriptor(
            "task", "rul_regression",
            parameters=["rul_clip", "evaluation_unit"],
            task_kind="prognostics", target_semantics="continuous_target",
        ),
        descriptor(
            "task", "fault_classification",
            parameters=["num_classes", "evaluation_unit"],
            task_kind="diagnostics", target_semantics="class_label",
        ),
        # datasources
        descriptor(
            "datasource", "synthetic_degradation",
            parameters=[
                "n_units", "time_range", "n_features", "degradation",
                "noise_scale", "rul_clip", "seed",
            ],
            provides_splits=True,
        ),
        descriptor(
            "datasource", "directory",
            parameters=["root"],
            provides_splits=True,
        ),
        # transforms
        descriptor("transform", "zscore", parameters=[], supports_fit_on=["train"]),
        descriptor("transform", "minmax", parameters=[], supports_fit_on=["train"]),
        # sequencer
        descriptor(
            "sequencer", "sliding_window",
            parameters=["length", "stride", "alignment"],
            window_policy="length_stride",
        ),
        # models
        descriptor(
            "model", "linear",
            parameters=[],
            prediction_shape=_SHAPE, target_semantics=_REGRESSION,
        ),
        descriptor(
            "model", "mlp",
            parameters=["hidden_widths", "activation"],
            prediction_shape=_SHAPE, target_semantics=_REGRESSION,
        ),
        descriptor(
            "model", "logistic",
            parameters=[],
            prediction_shape=_SHAPE, target_semantics=_CLASSIFICATION,
        ),
        descriptor(
            "model", "mlp_classifier",
            parameters=["hidden_widths", "activation"],
            prediction_shape=_SHAPE, target_semantics=_CLASSIFICATION,
        ),
        # evaluators
        descriptor(
            "evaluator", "regression_report",
            parameters=["grain", "aggregation"],
            evaluation_units=["window", "unit"], metrics=["mae", "rmse", "nmae"],
        ),
        descriptor(
            "evaluator", "classification_report",
            parameters=["grain", "aggregation"],
            evaluation_units=["window", "unit"], metrics=["accuracy"],
        ),
    ]
    # the planted-bug zoo ships as first-class components for ladder tests
    for bug in models.BUG_KINDS:
        for semantics, caps in (
            ("regression", _REGRESSION),
            ("classifier", _CLASSIFICATION),
        ):
            entries.append(
                descriptor(
                    "model", f"broken_{bug}_{semantics}",
                    parameters=["hidden_widths"],
                    prediction_shape=_SHAPE, target_semantics=caps,
                )
            )
    for entry in entries:
        registry = registry.add(entry, provenance="pre_run")
    return registry


def build_model(name: str, in_features: int, contract: TaskContract, parameters: dict):
    """Instantiate a registered model component (parameters already typechecked)."""
    hidden = parameters.get("hidden_widths", [16])
    activation = parameters.get("activation", "relu")
    k = contract.num_targets
    if name == "linear":
        return models.LinearRegressor(in_features, num_targets=k)
    if name == "mlp":
        return models.MlpRegressor(in_features, hidden, num_targets=k, activation=activation)
    if name == "logistic":
        return models.LogisticClassifier(in_features, num_classes=k)
    if name == "mlp_classifier":
        return models.MlpClassifier(in_features, hidden, num_classes=k, activation=activation)
    if name.startswith("broken_"):
        body = name[len("broken_"):]
        semantics = (
            models.TargetSemantics.CLASS_LABEL
            if body.endswith("_classifier")
            else models.TargetSemantics.CONTINUOUS
        )
        bug = body.rsplit("_", 1)[0]
        return models.BrokenModel(
            in_features, bug=bug, num_outputs=k,
            hidden_widths=parameters.get("hidden_widths", (8,)),
            semantics=semantics,
        )
    raise ValueError(f"no builtin constructor for model {name!r}")


def contract_from_config(config) -> TaskContract:
    """Derive the task contract from a config's task and evaluator bindings."""
    task = config.bindings().get(SlotFamily.TASK)
    if task is None:
        raise ValueError("configuration binds no task")
    if task.name == "fault_classification":
        kind = TaskKind.DIAGNOSTICS
        num_targets = int(task.parameters.get("num_classes", N_REGIMES))
    else:
        kind = TaskKind.PROGNOSTICS
        num_targets = 1
    unit = task.parameters.get("evaluation_unit", EvaluationUnit.UNIT.value)
    return TaskContract.for_task(kind, evaluation_unit=unit, num_targets=num_targets)


def framework_defaults() -> FrameworkDefaults:
    """The default catalog consulted when imputing NOT_SPECIFIED rows."""
    return FrameworkDefaults(
        name="framework-defaults",
        values={
            "optimizer": "adamw",
            "learning_rate": 1e-3,
            "lr_schedule": "reduce_on_plateau",
            "weight_decay": 0.0,
            "max_epochs": 300,
            "batch_size": 512,
        },
        sources={
            "optimizer": "configs/optimizer/default",
            "learning_rate": "configs/optimizer/default",
            "lr_schedule": "configs/scheduler/default",
            "weight_decay": "configs/optimizer/default",
            "max_epochs": "configs/trainer/default",
            "batch_size": "configs/datamodule/default",
        },
        alternatives={
            "optimizer": ["adamw", "adam", "sgd"],
            "learning_rate": [1e-3, 5e-4, 1e-4, 5e-3],
            "lr_schedule": ["reduce_on_plateau", "none"],
            "weight_decay": [0.0, 1e-4, 1e-2],
            "grad_clip": [None, 1.0, 5.0],
            "warmup": ["none", 5],
            "max_epochs": [300, 100, 50],
            "batch_size": [512],
        },
    )


def default_documents() -> dict[str, dict]:
    """Named default documents resolvable by the composition layer."""
    return {
        "base/prognostics": {
            "task": {"component": "rul_regression", "rul_clip": 40.0, "evaluation_unit": "unit"},
            "transform": {
                "component": "zscore",
                "fit_on": "train",
                "apply_to": ["train", "val", "test"],
                "assign_to": "all",
            },
            "sequencer": {"component": "sliding_window", "length": 16, "stride": 4},
            "evaluator": {"component": "regression_report", "grain": "unit"},
        },
        "base/diagnostics": {
            "task": {
                "component": "fault_classification",
                "num_classes": N_REGIMES,
                "evaluation_unit": "window",
            },
            "transform": {
                "component": "zscore",
                "fit_on": "train",
                "apply_to": ["train", "val", "test"],
                "assign_to": "all",
            },
            "sequencer": {"component": "sliding_window", "length": 16, "stride": 4},
            "evaluator": {"component": "classification_report", "grain": "window"},
        },
    }
