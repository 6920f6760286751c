import json
from pathlib import Path

import pytest

from slotbench import catalog
from slotbench.binding import compose
from slotbench.pipeline import build_container
from slotbench.policy import RunPolicy


@pytest.fixture(scope="session")
def registry():
    return catalog.builtin_registry()


@pytest.fixture(scope="session")
def policy():
    return RunPolicy()


def prognostics_tree(model="mlp", data_seed=11, **model_params):
    return {
        "task": {"component": "rul_regression", "rul_clip": 30.0, "evaluation_unit": "unit"},
        "datasource": {
            "component": "synthetic_degradation",
            "n_units": {"train": 8, "val": 3, "test": 3},
            "time_range": [50, 70],
            "seed": data_seed,
        },
        "transform": {
            "component": "zscore",
            "fit_on": "train",
            "apply_to": ["train", "val", "test"],
            "assign_to": "all",
        },
        "sequencer": {"component": "sliding_window", "length": 16, "stride": 4},
        "model": {"component": model, **model_params},
        "evaluator": {"component": "regression_report", "grain": "unit"},
        "hyperparameters": {
            "optimizer": "adamw",
            "learning_rate": 0.02,
            "lr_schedule": "none",
            "weight_decay": 0.0,
            "grad_clip": None,
            "warmup": "none",
            "max_epochs": 120,
            "batch_size": 512,
            "training_protocol_notes": "fixture",
        },
    }


def diagnostics_tree(model="mlp_classifier", data_seed=11, **model_params):
    tree = prognostics_tree(model, data_seed, **model_params)
    tree["task"] = {
        "component": "fault_classification",
        "num_classes": 3,
        "evaluation_unit": "window",
    }
    tree["evaluator"] = {"component": "classification_report", "grain": "window"}
    return tree


@pytest.fixture
def prognostics_config():
    return compose(prognostics_tree())


@pytest.fixture
def diagnostics_config():
    return compose(diagnostics_tree())


@pytest.fixture(scope="session")
def synthetic_container():
    return build_container(compose(prognostics_tree()))


def demo_paper_spec(**updates) -> dict:
    spec = {
        "name": "synthetic-rul-demo",
        "task_kind": "prognostics",
        "dataset": "synthetic",
        "binding": {
            "task": {"component": "rul_regression", "rul_clip": 30.0, "evaluation_unit": "unit"},
            "datasource": {
                "component": "synthetic_degradation",
                "n_units": {"train": 8, "val": 3, "test": 3},
                "time_range": [50, 70],
                "n_features": 4,
                "noise_scale": 0.02,
                "seed": 11,
            },
            "transform": {
                "component": "zscore",
                "fit_on": "train",
                "apply_to": ["train", "val", "test"],
                "assign_to": "all",
            },
            "sequencer": {"component": "sliding_window", "length": 16, "stride": 4},
            "model": {"component": "mlp", "hidden_widths": [16]},
            "evaluator": {"component": "regression_report", "grain": "unit"},
        },
        "hyperparameters": {
            "optimizer": "NOT_SPECIFIED",
            "learning_rate": 0.02,
            "lr_schedule": "NOT_SPECIFIED",
            "weight_decay": "NOT_SPECIFIED",
            "grad_clip": "NOT_SPECIFIED",
            "warmup": "NOT_SPECIFIED",
            "max_epochs": "NOT_SPECIFIED",
            "batch_size": "NOT_SPECIFIED",
            "training_protocol_notes": "NOT_SPECIFIED",
        },
        "claims": [
            {
                "claim_id": "c1",
                "metric": "mae",
                "grain": "unit",
                "comparator": "leq",
                "value": 6.0,
                "tolerance": 0.1,
            }
        ],
        "assumptions": [
            {
                "slot": "sequencer",
                "evidence": "absent",
                "value": "sequencer.length=16",
                "justification": "window length unstated",
                "alternatives": ["sequencer.length=32"],
            }
        ],
    }
    spec.update(updates)
    return spec


def write_spec(tmp_path: Path, spec: dict, name: str = "paper-spec.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(spec, indent=2))
    return path
