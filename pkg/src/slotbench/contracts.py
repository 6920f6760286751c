"""Slot families and task contracts — the typed vocabulary every layer shares."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class SlotFamily(str, Enum):
    """The six typed interfaces an experiment binding must fill."""

    TASK = "task"
    DATASOURCE = "datasource"
    TRANSFORM = "transform"
    SEQUENCER = "sequencer"
    MODEL = "model"
    EVALUATOR = "evaluator"

    def __str__(self) -> str:  # keeps report rendering tidy
        return self.value


ALL_FAMILIES: tuple[SlotFamily, ...] = tuple(SlotFamily)


class TaskKind(str, Enum):
    PROGNOSTICS = "prognostics"
    DIAGNOSTICS = "diagnostics"


class TargetSemantics(str, Enum):
    CONTINUOUS = "continuous_target"
    CLASS_LABEL = "class_label"


class EvaluationUnit(str, Enum):
    WINDOW = "window"
    UNIT = "unit"


# prognostics is a regression family, diagnostics a classification family
KIND_TO_SEMANTICS = {
    TaskKind.PROGNOSTICS: TargetSemantics.CONTINUOUS,
    TaskKind.DIAGNOSTICS: TargetSemantics.CLASS_LABEL,
}


@dataclass(frozen=True)
class TaskContract:
    """The typed agreement a binding is checked against.

    `prediction_shape` is (batch, 1, K): the middle dimension is always 1
    and K is the number of regression targets or classes.
    """

    task_kind: TaskKind
    target_semantics: TargetSemantics
    evaluation_unit: EvaluationUnit
    num_targets: int = 1
    required_batch_keys: frozenset[str] = field(
        default_factory=lambda: frozenset({"features", "targets"})
    )

    def __post_init__(self):
        expected = KIND_TO_SEMANTICS[self.task_kind]
        if self.target_semantics is not expected:
            raise ValueError(
                f"{self.task_kind.value} implies {expected.value}, "
                f"got {self.target_semantics.value}"
            )
        if self.num_targets < 1:
            raise ValueError("num_targets must be >= 1")

    @property
    def prediction_shape(self) -> tuple[str, int, int]:
        return ("B", 1, self.num_targets)

    @classmethod
    def for_task(
        cls,
        task_kind: TaskKind | str,
        evaluation_unit: EvaluationUnit | str = EvaluationUnit.UNIT,
        num_targets: int = 1,
    ) -> "TaskContract":
        kind = TaskKind(task_kind)
        return cls(
            task_kind=kind,
            target_semantics=KIND_TO_SEMANTICS[kind],
            evaluation_unit=EvaluationUnit(evaluation_unit),
            num_targets=num_targets,
        )
