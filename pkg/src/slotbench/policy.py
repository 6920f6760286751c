"""The single policy document: retry budgets, phase gates, verification
thresholds, fixed protocol constants, and repair budgets.

Everything the state machine, the sanity ladder, the repair loop, and the
trainer need to agree on lives here, loadable from one JSON/YAML file. Batch
sizes (512/1024/1024) and the plateau-scheduler cadence (patience 5, factor
0.9) are protocol constants: authored hyperparameter rows for them are kept
as provenance but never override these.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

from .config import parse_config

# train / val / test batch sizes fixed by the protocol
FIXED_BATCH_SIZES = (512, 1024, 1024)
SCHEDULER_PATIENCE = 5
SCHEDULER_FACTOR = 0.9


def _default_phase_gates() -> dict:
    return {
        "P0_input_check": ["inputs"],
        "P1_ingest": ["00", "01"],
        "P2_analyze": ["02", "03"],
        "P3_blueprint": ["04"],
        "P3_5_hypothesis": ["05"],
        "P4_experiment": ["06", "07", "08"],
    }


def _default_magnitude_bands() -> dict:
    # diagnostic-only sanity bands for the synthetic task family
    return {
        "prognostics": {"metric": "mae", "low": 0.0, "high": 50.0},
        "diagnostics": {"metric": "accuracy", "low": 0.3, "high": 1.0},
    }


@dataclass
class RunPolicy:
    # control plane
    retry_budget: int = 2
    phase_gates: dict = field(default_factory=_default_phase_gates)
    # verification thresholds (float64 scales)
    dead_gradient_max: float = 1e-12
    vanishing_ratio: float = 1e-8
    exploding_ratio: float = 1e3
    batch_probe_tolerance: float = 1e-12
    init_loss_band: float = 0.20
    overfit_examples: int = 4
    overfit_max_steps: int = 400
    overfit_loss_ratio: float = 1e-3
    overfit_classification_loss: float = 0.05
    overfit_lr: float = 0.05
    overfit_optimizer: str = "adam"
    check_timeout_seconds: float = 60.0
    # repair budgets
    repair_max_iterations: int = 10
    dispute_max_iterations: int = 4
    # training protocol
    train_batch_size: int = FIXED_BATCH_SIZES[0]
    val_batch_size: int = FIXED_BATCH_SIZES[1]
    test_batch_size: int = FIXED_BATCH_SIZES[2]
    scheduler_patience: int = SCHEDULER_PATIENCE
    scheduler_factor: float = SCHEDULER_FACTOR
    quick_max_epochs: int = 25
    n_seeds: int = 3
    memory_budget_bytes: int = 2 * 1024**3
    # evaluation
    unit_aggregation: str = "last"  # last | mean
    claim_tolerance: float = 0.10
    benchmark_only_suppresses_claims: bool = True
    magnitude_bands: dict = field(default_factory=_default_magnitude_bands)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunPolicy":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown policy key(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: Path) -> "RunPolicy":
        return cls.from_dict(parse_config(Path(path).read_text(encoding="utf-8")))

    def required_slots(self, phase_name: str) -> list[str]:
        return list(self.phase_gates.get(phase_name, []))
