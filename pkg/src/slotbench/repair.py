"""Bounded assumption repair: find an attributable assumption, substitute its
next alternative default, patch one configuration leaf, re-verify.

Hypothesis selection is a deterministic rule engine: the ledger is scanned
in insertion order for the first record whose slot the failing checks
implicate and that still has alternatives; the patch is that record's next
alternative. Falsified alternatives are consumed and never retried. The loop
never widens its whitelist: a hypothesis pointing outside it terminates with
FRAMEWORK_CHANGE_REQUIRED instead of being applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fnmatch import fnmatch
from typing import Callable, Iterable

from .binding import ResolvedConfiguration
from .contracts import SlotFamily
from .errors import WhitelistViolation
from .ledger import (
    EXHAUSTED,
    AssumptionLedger,
    AssumptionRecord,
    attributable,
    parse_assignment,
    select_alternative,
)
from .verification import CheckResult, SanityVerdict, VerificationReport


class FailureClass(str, Enum):
    IMPL_BUG = "IMPL_BUG"
    HP_MISMATCH = "HP_MISMATCH"
    LOSS_COMPOSITION = "LOSS_COMPOSITION"
    DATA_PIPELINE = "DATA_PIPELINE"


# check_id -> class; overfit resolves against gradient health at call time
_RULE_TABLE = {
    "typecheck": FailureClass.IMPL_BUG,
    "dry_run": FailureClass.IMPL_BUG,
    "gradient_flow": FailureClass.IMPL_BUG,
    "init_loss": FailureClass.LOSS_COMPOSITION,
    "config_preflight": FailureClass.DATA_PIPELINE,
    "leakage": FailureClass.DATA_PIPELINE,
    "batch_fit": FailureClass.HP_MISMATCH,
}


def classify_failure(results: Iterable[CheckResult]) -> dict[str, FailureClass]:
    """Deterministic rule table mapping each failing check to a class."""
    results = list(results)
    failing = [r for r in results if r.failed]
    if not failing:
        raise ValueError("classify_failure requires at least one failing check")
    gradient_healthy = all(
        not r.failed for r in results if r.check_id == "gradient_flow"
    )
    classes: dict[str, FailureClass] = {}
    for result in failing:
        if result.check_id == "overfit_microbatch":
            classes[result.check_id] = (
                FailureClass.HP_MISMATCH if gradient_healthy else FailureClass.IMPL_BUG
            )
        else:
            classes[result.check_id] = _RULE_TABLE.get(
                result.check_id, FailureClass.IMPL_BUG
            )
    return classes


@dataclass(frozen=True)
class Hypothesis:
    """One change per iteration, with its predicted effect pre-registered."""

    global_hypothesis: str
    target_change: tuple[int, object]  # (assumption record id, new value)
    predicted_effect: dict  # check_id -> expected status
    falsification_criterion: str

    def to_dict(self) -> dict:
        return {
            "global_hypothesis": self.global_hypothesis,
            "target_change": list(self.target_change),
            "predicted_effect": dict(self.predicted_effect),
            "falsification_criterion": self.falsification_criterion,
        }


class _NoAttributableAssumption:
    def __repr__(self) -> str:
        return "NO_ATTRIBUTABLE_ASSUMPTION"


#: Returned by propose() when no ledger record can explain the failure —
#: paper-level or framework-level failures rather than assumption-repair ones.
NO_ATTRIBUTABLE_ASSUMPTION = _NoAttributableAssumption()


def _patch_for(record: AssumptionRecord, alternative) -> tuple[str, object] | None:
    """Resolve the config path a record's alternative would patch.

    Assignment-form alternatives carry their own path; bare alternatives
    inherit the path of the record's current value.
    """
    parsed = parse_assignment(alternative)
    if parsed is not None:
        return parsed
    current = record.patch_target()
    if current is not None:
        return current[0], alternative
    return None


def propose(ledger: AssumptionLedger, failing_results: Iterable[CheckResult]):
    """First attributable, non-exhausted, patchable record in insertion order.

    The hypothesis predicts every failing check passes after the patch.
    """
    failing = [r for r in failing_results if r.failed]
    implicated: set[SlotFamily] = set()
    for result in failing:
        implicated |= result.implicated_slots
    for record in ledger:
        if not attributable(record, implicated) or record.exhausted():
            continue
        alternative = record.peek_alternative()
        target = _patch_for(record, alternative)
        if target is None:
            continue
        path, value = target
        return Hypothesis(
            global_hypothesis=(
                f"failing checks implicate {sorted(s.value for s in implicated)}; "
                f"assumption #{record.record_id} ({record.slot.value}) is attributable — "
                f"substitute alternative default {path}={value!r}"
            ),
            target_change=(record.record_id, alternative),
            predicted_effect={r.check_id: "pass" for r in failing},
            falsification_criterion=(
                "after the patch, every check named in predicted_effect passes; "
                "any of them still failing falsifies this hypothesis"
            ),
        )
    return NO_ATTRIBUTABLE_ASSUMPTION


@dataclass(frozen=True)
class MutableSlotWhitelist:
    """(slot family, root-relative parameter path) pairs the loop may patch.

    Paths may use fnmatch wildcards, e.g. ("model", "hyperparameters.*").
    """

    entries: frozenset

    @classmethod
    def of(cls, *pairs) -> "MutableSlotWhitelist":
        return cls(frozenset((SlotFamily(f), p) for f, p in pairs))

    @classmethod
    def from_ledger(cls, ledger: AssumptionLedger) -> "MutableSlotWhitelist":
        """Whitelist exactly the paths the declared assumptions may touch."""
        pairs = set()
        for record in ledger:
            for candidate in [record.value, *record.alternatives]:
                parsed = parse_assignment(candidate)
                if parsed is not None:
                    pairs.add((record.slot, parsed[0]))
        return cls(frozenset(pairs))

    def allows(self, family: SlotFamily, path: str) -> bool:
        return any(
            fam is family and fnmatch(path, pattern) for fam, pattern in self.entries
        )


def apply_patch(
    config: ResolvedConfiguration,
    hypothesis: Hypothesis,
    whitelist: MutableSlotWhitelist,
    ledger: AssumptionLedger,
) -> ResolvedConfiguration:
    """Apply exactly one whitelisted change; consume the record's alternative."""
    record_id, alternative = hypothesis.target_change
    record = ledger[record_id]
    target = _patch_for(record, alternative)
    if target is None:
        raise WhitelistViolation(
            f"assumption #{record_id} carries no patchable path"
        )
    path, value = target
    if not whitelist.allows(record.slot, path):
        raise WhitelistViolation(
            f"patch {path!r} for slot {record.slot.value} is outside the whitelist"
        )
    consumed = select_alternative(record)
    assert consumed is not EXHAUSTED and consumed[0] == alternative
    return config.with_patch(path, value, kind="repair")


class RepairOutcome(str, Enum):
    PASS = "PASS"
    WARN_CONTINUE = "WARN_CONTINUE"
    ESCALATE = "ESCALATE"
    FRAMEWORK_CHANGE_REQUIRED = "FRAMEWORK_CHANGE_REQUIRED"
    DATASET_RECOVERY_REQUIRED = "DATASET_RECOVERY_REQUIRED"
    UNATTRIBUTABLE = "UNATTRIBUTABLE"


@dataclass(frozen=True)
class RepairBudget:
    patience: int = 10

    def __post_init__(self):
        if self.patience < 0:
            raise ValueError("patience must be >= 0")

    @classmethod
    def for_verification(cls, policy=None) -> "RepairBudget":
        return cls(patience=policy.repair_max_iterations if policy else 10)

    @classmethod
    def for_dispute(cls, policy=None) -> "RepairBudget":
        return cls(patience=policy.dispute_max_iterations if policy else 4)


@dataclass
class RepairIteration:
    index: int
    hypothesis: Hypothesis
    pre_checks: list
    post_checks: list
    falsified: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "hypothesis": self.hypothesis.to_dict(),
            "pre_checks": list(self.pre_checks),
            "post_checks": list(self.post_checks),
            "falsified": self.falsified,
        }


@dataclass
class RepairResult:
    outcome: RepairOutcome
    report: VerificationReport
    config: ResolvedConfiguration
    iterations: list[RepairIteration] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.outcome in (RepairOutcome.PASS, RepairOutcome.WARN_CONTINUE)


def _success_outcome(report: VerificationReport) -> RepairOutcome:
    if report.verdict is SanityVerdict.WARN_CONTINUE:
        return RepairOutcome.WARN_CONTINUE
    return RepairOutcome.PASS


def repair_loop(
    config: ResolvedConfiguration,
    ledger: AssumptionLedger,
    budget: RepairBudget,
    verify: Callable[[ResolvedConfiguration], VerificationReport],
    whitelist: MutableSlotWhitelist | None = None,
) -> RepairResult:
    """Verify; while failing and within budget, patch the next attributable
    alternative and re-verify. Stops immediately, preserving the original
    failure, when nothing in the ledger explains it."""
    whitelist = whitelist or MutableSlotWhitelist.from_ledger(ledger)
    iterations: list[RepairIteration] = []
    report = verify(config)
    n = 0
    while True:
        if report.passed:
            return RepairResult(_success_outcome(report), report, config, iterations)
        if report.verdict in (
            SanityVerdict.DATASET_UNAVAILABLE,
            SanityVerdict.DATASET_EXECUTION_FAILED,
        ):
            return RepairResult(
                RepairOutcome.DATASET_RECOVERY_REQUIRED, report, config, iterations
            )
        if n >= budget.patience:
            return RepairResult(RepairOutcome.ESCALATE, report, config, iterations)
        hypothesis = propose(ledger, report.failing)
        if hypothesis is NO_ATTRIBUTABLE_ASSUMPTION:
            return RepairResult(
                RepairOutcome.UNATTRIBUTABLE, report, config, iterations
            )
        try:
            patched = apply_patch(config, hypothesis, whitelist, ledger)
        except WhitelistViolation:
            return RepairResult(
                RepairOutcome.FRAMEWORK_CHANGE_REQUIRED, report, config, iterations
            )
        n += 1
        new_report = verify(patched)
        still_failing = {c.check_id for c in new_report.failing}
        falsified = any(
            check_id in still_failing for check_id in hypothesis.predicted_effect
        )
        iterations.append(
            RepairIteration(
                index=n,
                hypothesis=hypothesis,
                pre_checks=[c.to_dict() for c in report.checks],
                post_checks=[c.to_dict() for c in new_report.checks],
                falsified=falsified,
            )
        )
        config, report = patched, new_report
