"""Shared-protocol evaluation: metrics at window and per-unit grain, claim
matching under a relative tolerance, benchmark swaps that touch only the
model subtree, and the three-status evaluation report.

nMAE is 100 * mae / normalizer with the normalizer defaulting to the
ground-truth range on the evaluation split; a degenerate (zero) range
surfaces as a NaN value, which claim matching maps to
UNASSESSABLE_METRIC_SCALE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import catalog
from .binding import ComponentRegistry, ResolvedConfiguration, typecheck
from .config import copy_tree
from .contracts import EvaluationUnit, SlotFamily, TargetSemantics
from .data import SplitDatasetContainer
from .engine import ModelInstance, Tensor
from .errors import DegenerateRange, EmptyEvaluation, IncompatibleBaseline
from .ledger import format_assignment
from .policy import RunPolicy
from .stack import ExperimentStack, build_stack

ERROR_METRICS = frozenset({"mae", "rmse", "nmae"})  # lower is better
SCORE_METRICS = frozenset({"accuracy"})             # higher is better


@dataclass
class MetricResult:
    metric: str
    grain: str
    value: float
    dispersion: float | None = None  # std across seeds when multiple runs

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "grain": self.grain,
            "value": self.value,
            "dispersion": self.dispersion,
        }


def _as_pair(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise EmptyEvaluation("no predictions to evaluate")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} targets")
    return p, t


def mae(predictions, targets, grain: str = "window") -> MetricResult:
    p, t = _as_pair(predictions, targets)
    return MetricResult("mae", grain, float(np.abs(p - t).mean()))


def rmse(predictions, targets, grain: str = "window") -> MetricResult:
    p, t = _as_pair(predictions, targets)
    return MetricResult("rmse", grain, float(np.sqrt(((p - t) ** 2).mean())))


def accuracy(predictions, targets, grain: str = "window") -> MetricResult:
    p, t = _as_pair(predictions, targets)
    return MetricResult("accuracy", grain, float((p == t).mean()))


def nmae(predictions, targets, normalizer: float | None = None, grain: str = "window") -> MetricResult:
    """100 * mae / normalizer; normalizer defaults to the target range."""
    p, t = _as_pair(predictions, targets)
    if normalizer is None:
        normalizer = float(t.max() - t.min())
    if normalizer <= 0.0:
        raise DegenerateRange("ground-truth range is zero; nMAE undefined")
    return MetricResult("nmae", grain, float(100.0 * np.abs(p - t).mean() / normalizer))


# --- prediction tables -------------------------------------------------------------


@dataclass
class PredictionTable:
    """Raw per-window predictions, the substrate for metrics and audits."""

    unit_ids: list[str]
    starts: np.ndarray
    predictions: np.ndarray  # (N,) on original target scale
    targets: np.ndarray      # (N,)
    inverse_transformed: bool

    def to_csv(self, path: Path) -> None:
        lines = ["unit_id,window_start,prediction,target,inverse_transformed"]
        flag = "1" if self.inverse_transformed else "0"
        for uid, start, pred, tgt in zip(
            self.unit_ids, self.starts, self.predictions, self.targets
        ):
            lines.append(f"{uid},{int(start)},{float(pred)!r},{float(tgt)!r},{flag}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: Path) -> "PredictionTable":
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
        unit_ids, starts, preds, targets = [], [], [], []
        flag = False
        for line in lines:
            uid, start, pred, tgt, inv = line.split(",")
            unit_ids.append(uid)
            starts.append(int(start))
            preds.append(float(pred))
            targets.append(float(tgt))
            flag = inv == "1"
        return cls(
            unit_ids=unit_ids,
            starts=np.asarray(starts, dtype=np.int64),
            predictions=np.asarray(preds),
            targets=np.asarray(targets),
            inverse_transformed=flag,
        )

    def per_unit(self, aggregation: str = "last") -> tuple[np.ndarray, np.ndarray]:
        """Aggregate windows to one (prediction, target) pair per unit."""
        order = {}
        for i, uid in enumerate(self.unit_ids):
            order.setdefault(uid, []).append(i)
        preds, targets = [], []
        for uid in sorted(order):
            rows = order[uid]
            if aggregation == "last":
                last = max(rows, key=lambda i: self.starts[i])
                preds.append(self.predictions[last])
                targets.append(self.targets[last])
            elif aggregation == "mean":
                preds.append(self.predictions[rows].mean())
                targets.append(self.targets[rows].mean())
            else:
                raise ValueError(f"unknown aggregation {aggregation!r}")
        return np.asarray(preds), np.asarray(targets)


def predict_windows(stack: ExperimentStack, model: ModelInstance, split: str,
                    batch_size: int = 1024) -> PredictionTable:
    ws = stack.windowed.split(split)
    n = len(ws)
    if n == 0:
        raise EmptyEvaluation(f"split {split!r} has no windows")
    classification = stack.contract.target_semantics is TargetSemantics.CLASS_LABEL
    preds = np.zeros(n)
    for start in range(0, n, batch_size):
        index = np.arange(start, min(start + batch_size, n))
        batch = {
            "features": Tensor(ws.features[index]),
            "targets": Tensor(ws.targets[index]),
        }
        outputs = model.run(batch)
        block = outputs["predictions"].data
        if classification:
            preds[index] = block.reshape(len(index), -1).argmax(axis=1)
        else:
            preds[index] = block.reshape(len(index))
    targets = ws.targets.reshape(-1).copy()
    inverse = False
    if stack.target_transform is not None and not classification:
        preds = stack.target_transform.inverse_values(preds.reshape(-1, 1)).reshape(-1)
        targets = stack.target_transform.inverse_values(targets.reshape(-1, 1)).reshape(-1)
        inverse = True
    return PredictionTable(
        unit_ids=list(ws.unit_ids),
        starts=ws.starts.copy(),
        predictions=preds,
        targets=targets,
        inverse_transformed=inverse,
    )


def metrics_from_table(
    table: PredictionTable,
    semantics: TargetSemantics,
    grain: str,
    aggregation: str = "last",
) -> list[MetricResult]:
    if grain == EvaluationUnit.UNIT.value:
        preds, targets = table.per_unit(aggregation)
    else:
        preds, targets = table.predictions, table.targets
    if semantics is TargetSemantics.CLASS_LABEL:
        return [accuracy(preds, targets, grain=grain)]
    results = [mae(preds, targets, grain=grain), rmse(preds, targets, grain=grain)]
    try:
        results.append(nmae(preds, targets, grain=grain))
    except DegenerateRange:
        results.append(MetricResult("nmae", grain, float("nan")))
    return results


def evaluate(
    config: ResolvedConfiguration,
    model: ModelInstance,
    container: SplitDatasetContainer,
    grain: str,
    registry: ComponentRegistry,
    policy: RunPolicy | None = None,
    stack: ExperimentStack | None = None,
    split: str = "test",
) -> tuple[list[MetricResult], PredictionTable]:
    """Score a trained model on a split at the requested grain.

    Inverse transforms are applied before any metric sees a value, so
    everything is reported on the original target scale.
    """
    policy = policy or RunPolicy()
    if stack is None:
        stack = build_stack(config, registry, container, seed=0)
    table = predict_windows(stack, model, split, batch_size=policy.test_batch_size)
    results = metrics_from_table(
        table, stack.contract.target_semantics, grain, aggregation=policy.unit_aggregation
    )
    return results, table


def combine_seed_metrics(per_seed: Sequence[Sequence[MetricResult]]) -> list[MetricResult]:
    """mean +/- std across seeds; dispersion only when there are >= 2 runs."""
    if not per_seed:
        return []
    combined = []
    for i, first in enumerate(per_seed[0]):
        values = np.asarray([seed_metrics[i].value for seed_metrics in per_seed])
        combined.append(
            MetricResult(
                metric=first.metric,
                grain=first.grain,
                value=float(values.mean()),
                dispersion=float(values.std()) if len(per_seed) >= 2 else None,
            )
        )
    return combined


# --- claim matching ------------------------------------------------------------------


class ClaimVerdict:
    CONFIRMED = "CONFIRMED"
    CONTRADICTED = "CONTRADICTED"
    DATASET_DEPENDENT = "DATASET_DEPENDENT"
    UNASSESSABLE = "UNASSESSABLE"
    UNASSESSABLE_METRIC_SCALE = "UNASSESSABLE_METRIC_SCALE"
    UNASSESSABLE_NO_OVERLAPPING_BASELINE = "UNASSESSABLE_NO_OVERLAPPING_BASELINE"

    ALL = (
        CONFIRMED,
        CONTRADICTED,
        DATASET_DEPENDENT,
        UNASSESSABLE,
        UNASSESSABLE_METRIC_SCALE,
        UNASSESSABLE_NO_OVERLAPPING_BASELINE,
    )


COMPARATORS = ("leq", "geq", "beats_baseline")


@dataclass(frozen=True)
class ClaimRecord:
    claim_id: str
    metric: str
    comparator: str  # leq | geq | beats_baseline
    value: float | None = None
    baseline: str | None = None
    tolerance: float = 0.10
    grain: str = "unit"

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.comparator == "beats_baseline" and not self.baseline:
            raise ValueError("beats_baseline claims need a baseline name")
        if self.comparator != "beats_baseline" and self.value is None:
            raise ValueError(f"{self.comparator} claims need a claimed value")

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "metric": self.metric,
            "comparator": self.comparator,
            "value": self.value,
            "baseline": self.baseline,
            "tolerance": self.tolerance,
            "grain": self.grain,
        }


def match_claim(
    claim: ClaimRecord,
    achieved: MetricResult | None,
    dataset_matches_paper: bool,
    baselines: Mapping[str, float] | None = None,
) -> str:
    """Exactly one verdict for every comparator/availability combination."""
    if not dataset_matches_paper:
        return ClaimVerdict.DATASET_DEPENDENT
    if achieved is None:
        return ClaimVerdict.UNASSESSABLE
    if math.isnan(achieved.value):
        return ClaimVerdict.UNASSESSABLE_METRIC_SCALE
    tau = claim.tolerance
    if claim.comparator == "beats_baseline":
        if not baselines or claim.baseline not in baselines:
            return ClaimVerdict.UNASSESSABLE_NO_OVERLAPPING_BASELINE
        reference = baselines[claim.baseline]
        if math.isnan(reference):
            return ClaimVerdict.UNASSESSABLE_METRIC_SCALE
        if claim.metric in SCORE_METRICS:
            ok = achieved.value >= reference * (1.0 - tau)
        else:
            ok = achieved.value <= reference * (1.0 + tau)
        return ClaimVerdict.CONFIRMED if ok else ClaimVerdict.CONTRADICTED
    if claim.comparator == "leq":
        ok = achieved.value <= claim.value * (1.0 + tau)
    else:  # geq
        ok = achieved.value >= claim.value * (1.0 - tau)
    return ClaimVerdict.CONFIRMED if ok else ClaimVerdict.CONTRADICTED


# --- benchmark swap ------------------------------------------------------------------


def benchmark_swap(
    config: ResolvedConfiguration,
    baseline_name: str,
    registry: ComponentRegistry,
    baseline_parameters: dict | None = None,
) -> ResolvedConfiguration:
    """Replace only the model binding; every other leaf stays bit-identical.

    The swap is rejected (IncompatibleBaseline) when the baseline does not
    typecheck under the config's task contract — the empty-cell case in a
    benchmark table.
    """
    contract = catalog.contract_from_config(config)
    desc = registry.get(SlotFamily.MODEL, baseline_name)
    if desc is None:
        raise IncompatibleBaseline(f"no registered model named {baseline_name!r}")
    tree = copy_tree(config.tree)
    model_node = {"component": baseline_name, **(baseline_parameters or {})}
    tree["model"] = model_node
    trace = list(config.composition_trace)
    trace.append({"kind": "override", "ref": format_assignment("model", model_node)})
    swapped = ResolvedConfiguration(
        tree=tree,
        composition_trace=trace,
        hyperparameter_sources=dict(config.hyperparameter_sources),
    )
    report = typecheck(swapped, registry, contract)
    model_violations = [v for v in report.violations if v.family is SlotFamily.MODEL]
    if model_violations:
        raise IncompatibleBaseline(
            f"baseline {baseline_name!r} violates the task contract: "
            + "; ".join(v.message for v in model_violations)
        )
    return swapped


# --- report assembly ------------------------------------------------------------------


class TechnicalStatus:
    PASS = "PASS"
    IMPLEMENTATION_BUG = "IMPLEMENTATION_BUG"
    EVALUATOR_ERROR = "EVALUATOR_ERROR"


class ScientificStatus:
    VALIDATED = "VALIDATED"
    PLAUSIBLE = "PLAUSIBLE"
    INVESTIGATE = "INVESTIGATE"
    INVESTIGATE_CLAIMS_DISPUTED = "INVESTIGATE_CLAIMS_DISPUTED"
    BENCHMARK_ONLY = "BENCHMARK_ONLY"


@dataclass
class EvaluationReport:
    achieved: list[MetricResult]
    baseline_table: dict
    claim_verdicts: dict  # claim_id -> verdict
    artifact_status: str
    technical_status: str
    scientific_status: str
    magnitude_diagnostic: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "achieved_metrics": [m.to_dict() for m in self.achieved],
            "baseline_table": self.baseline_table,
            "claim_verdicts": self.claim_verdicts,
            "artifact_status": self.artifact_status,
            "technical_status": self.technical_status,
            "scientific_status": self.scientific_status,
            "magnitude_diagnostic": self.magnitude_diagnostic,
        }


def _find_metric(
    metrics: Iterable[MetricResult], name: str, grain: str
) -> MetricResult | None:
    for metric in metrics:
        if metric.metric == name and metric.grain == grain:
            return metric
    return None


def generate_report(
    metrics: list[MetricResult],
    baselines: Mapping[str, Mapping[str, float]],
    claims: Sequence[ClaimRecord],
    *,
    dataset_matches_paper: bool,
    hypothesis_status: str,
    technical_status: str,
    task_kind: str,
    policy: RunPolicy | None = None,
) -> EvaluationReport:
    """Assemble the three strictly separated statuses.

    A complete report with INVESTIGATE (or BENCHMARK_ONLY) is still a
    successful evaluation artifact unless the technical status is a bug;
    scientific outcomes never feed back into workflow gating.
    """
    policy = policy or RunPolicy()
    suppress = (
        hypothesis_status == "BENCHMARK_ONLY" and policy.benchmark_only_suppresses_claims
    )
    verdicts: dict[str, str] = {}
    if not suppress:
        for claim in claims:
            achieved = _find_metric(metrics, claim.metric, claim.grain)
            baseline_values = {
                name: row.get(claim.metric, float("nan"))
                for name, row in baselines.items()
            }
            verdicts[claim.claim_id] = match_claim(
                claim, achieved, dataset_matches_paper, baseline_values
            )

    if hypothesis_status == "BENCHMARK_ONLY":
        scientific = ScientificStatus.BENCHMARK_ONLY
    elif any(v == ClaimVerdict.CONTRADICTED for v in verdicts.values()):
        scientific = ScientificStatus.INVESTIGATE_CLAIMS_DISPUTED
    else:
        confirmed = [v for v in verdicts.values() if v == ClaimVerdict.CONFIRMED]
        if confirmed and len(confirmed) == len(verdicts):
            scientific = ScientificStatus.VALIDATED
        elif confirmed:
            scientific = ScientificStatus.PLAUSIBLE
        else:
            scientific = ScientificStatus.INVESTIGATE

    band = (policy.magnitude_bands or {}).get(task_kind, {})
    magnitude: dict = {}
    if band:
        primary = _find_metric(metrics, band["metric"], EvaluationUnit.UNIT.value)
        if primary is None:
            primary = _find_metric(metrics, band["metric"], EvaluationUnit.WINDOW.value)
        if primary is not None and not math.isnan(primary.value):
            magnitude = {
                "metric": band["metric"],
                "value": primary.value,
                "band": [band["low"], band["high"]],
                "in_band": band["low"] <= primary.value <= band["high"],
            }

    return EvaluationReport(
        achieved=metrics,
        baseline_table={k: dict(v) for k, v in baselines.items()},
        claim_verdicts=verdicts,
        artifact_status="complete",
        technical_status=technical_status,
        scientific_status=scientific,
        magnitude_diagnostic=magnitude,
    )
