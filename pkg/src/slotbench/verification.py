"""The gate between a bound configuration and training.

Static layer: typecheck, datasource preflight, a 2-sample dry run, and the
leakage audit. Sanity ladder: initial-loss, gradient-flow, and micro-batch
memorization, run cheapest first against one stack build. Only categorical
execution failures block; executable-but-suspicious outcomes are
WARN_CONTINUE. Every attempt appends to the append-only ladder log.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import catalog
from .binding import (
    BindingState,
    ComponentRegistry,
    ResolvedConfiguration,
    classify_bindings,
    typecheck,
)
from .contracts import SlotFamily, TargetSemantics, TaskContract
from .data import SplitDatasetContainer, leakage_audit
from .engine import (
    OptimizerState,
    Tensor,
    backward,
    forward_with_loss,
    step,
)
from .errors import EmptyTrainSplit, ShapeMismatch, SlotbenchError, UnknownChannel
from .policy import RunPolicy
from .stack import ExperimentStack, build_stack


class CheckStatus(str, Enum):
    PASS = "pass"
    WARN = "warn"
    FAIL = "fail"


class SanityVerdict(str, Enum):
    PASS = "PASS"
    WARN_CONTINUE = "WARN_CONTINUE"
    BLOCK = "BLOCK"
    PRECHECK_TIMEOUT = "PRECHECK_TIMEOUT"
    DATASET_UNAVAILABLE = "DATASET_UNAVAILABLE"
    DATASET_EXECUTION_FAILED = "DATASET_EXECUTION_FAILED"
    TOOL_INVOCATION_FAILURE = "TOOL_INVOCATION_FAILURE"


@dataclass
class CheckResult:
    check_id: str
    status: CheckStatus
    diagnostics: dict = field(default_factory=dict)
    implicated_slots: set = field(default_factory=set)

    def __post_init__(self):
        self.implicated_slots = {SlotFamily(s) for s in self.implicated_slots}
        if self.status is CheckStatus.FAIL and not self.implicated_slots:
            raise ValueError(f"failing check {self.check_id} must implicate slots")

    @property
    def failed(self) -> bool:
        return self.status is CheckStatus.FAIL

    @property
    def timed_out(self) -> bool:
        return bool(self.diagnostics.get("timed_out"))

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "status": self.status.value,
            "diagnostics": self.diagnostics,
            "implicated_slots": sorted(s.value for s in self.implicated_slots),
        }


@dataclass
class LadderLogEntry:
    attempt: int
    checks: list[CheckResult]
    verdict: SanityVerdict
    timestamp: int  # deterministic logical tick (entry ordinal), not wall clock
    config_digest: str
    kind: str = "attempt"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        payload = {
            "attempt": self.attempt,
            "checks": [c.to_dict() for c in self.checks],
            "verdict": self.verdict.value,
            "timestamp": self.timestamp,
            "config_digest": self.config_digest,
            "kind": self.kind,
        }
        if self.extra:
            payload["extra"] = self.extra
        return payload


class LadderLog:
    """Append-only attempt history; prior entries are never rewritten."""

    def __init__(self):
        self.entries: list[LadderLogEntry] = []

    def next_attempt(self) -> int:
        return len(self.entries) + 1

    def append(self, entry: LadderLogEntry) -> LadderLogEntry:
        self.entries.append(entry)
        return entry

    def to_dicts(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]


@dataclass
class VerificationReport:
    """Static + sanity outcomes with the implicated slot set for attribution."""

    static: list[CheckResult] = field(default_factory=list)
    sanity: list[CheckResult] = field(default_factory=list)
    verdict: SanityVerdict = SanityVerdict.PASS
    result_matching: dict | None = None

    @property
    def checks(self) -> list[CheckResult]:
        return [*self.static, *self.sanity]

    @property
    def failing(self) -> list[CheckResult]:
        return [c for c in self.checks if c.failed]

    @property
    def passed(self) -> bool:
        return self.verdict in (SanityVerdict.PASS, SanityVerdict.WARN_CONTINUE)

    def implicated_slots(self) -> set:
        slots = set()
        for check in self.failing:
            slots |= check.implicated_slots
        return slots


# --- static layer -----------------------------------------------------------------


def verify_static(
    config: ResolvedConfiguration,
    registry: ComponentRegistry,
    contract: TaskContract,
    container: SplitDatasetContainer | None,
    policy: RunPolicy | None = None,
    seed: int = 0,
) -> tuple[list[CheckResult], ExperimentStack | None]:
    """Typecheck, datasource preflight, dry run, and leakage audit, in order.

    Later checks do not run once an earlier one fails categorically. Returns
    the check results and the built stack when the dry run succeeded, so the
    ladder can reuse it.
    """
    policy = policy or RunPolicy()
    results: list[CheckResult] = []

    report = typecheck(config, registry, contract)
    # leakage-declaration rules are re-reported under the leakage check so a
    # planted policy violation surfaces by its own name
    declaration_violations = [
        v for v in report.violations if v.rule_id.startswith("leakage_decl")
    ]
    hard_violations = [
        v for v in report.violations if not v.rule_id.startswith("leakage_decl")
    ]
    diagnostics = classify_bindings(config, registry)
    missing = sorted(
        fam.value
        for fam, state in diagnostics.per_family_state.items()
        if state is BindingState.MISSING
    )
    if hard_violations or missing:
        implicated = {v.family for v in hard_violations if v.family is not None}
        implicated |= {SlotFamily(f) for f in missing}
        results.append(
            CheckResult(
                check_id="typecheck",
                status=CheckStatus.FAIL,
                diagnostics={
                    "violations": [
                        f"{v.family.value if v.family else 'config'}:{v.rule_id}: {v.message}"
                        for v in hard_violations
                    ],
                    "missing_families": missing,
                },
                implicated_slots=implicated or {SlotFamily.TASK},
            )
        )
        return results, None
    results.append(CheckResult("typecheck", CheckStatus.PASS))

    preflight = _datasource_preflight(container)
    results.append(preflight)
    if preflight.failed:
        return results, None

    stack: ExperimentStack | None = None
    try:
        stack = build_stack(config, registry, container, seed=seed, contract=contract)
        n_train = len(stack.windowed.split("train"))
        if n_train == 0:
            raise ValueError("sequencer produced zero train windows")
        batch = stack.micro_batch(2)
        forward_with_loss(stack.model, batch, stack.loss_fn, contract=stack.contract)
        results.append(
            CheckResult(
                "dry_run", CheckStatus.PASS, diagnostics={"train_windows": n_train}
            )
        )
    except ShapeMismatch as exc:
        results.append(
            CheckResult(
                "dry_run", CheckStatus.FAIL,
                diagnostics={"error": str(exc)},
                implicated_slots={SlotFamily.MODEL},
            )
        )
        return results, None
    except UnknownChannel as exc:
        results.append(
            CheckResult(
                "dry_run", CheckStatus.FAIL,
                diagnostics={"error": str(exc)},
                implicated_slots={SlotFamily.TRANSFORM},
            )
        )
        return results, None
    except (EmptyTrainSplit, ValueError) as exc:
        results.append(
            CheckResult(
                "dry_run", CheckStatus.FAIL,
                diagnostics={"error": str(exc)},
                implicated_slots={SlotFamily.SEQUENCER, SlotFamily.DATASOURCE},
            )
        )
        return results, None

    audit = leakage_audit(stack.fitted_transforms, stack.fit_container)
    problems = [f"{v.rule_id}: {v.message}" for v in audit.violations]
    problems += [f"{v.rule_id}: {v.message}" for v in declaration_violations]
    if not problems:
        results.append(
            CheckResult(
                "leakage", CheckStatus.PASS,
                diagnostics={"max_statistic_deviation": audit.max_statistic_deviation},
            )
        )
    else:
        implicated = {v.slot for v in audit.violations}
        implicated |= {v.family for v in declaration_violations if v.family}
        results.append(
            CheckResult(
                "leakage", CheckStatus.FAIL,
                diagnostics={
                    "violations": problems,
                    "max_statistic_deviation": audit.max_statistic_deviation,
                },
                implicated_slots=implicated,
            )
        )
        return results, stack
    return results, stack


def _datasource_preflight(container: SplitDatasetContainer | None) -> CheckResult:
    if container is None:
        return CheckResult(
            "config_preflight", CheckStatus.FAIL,
            diagnostics={"error": "no dataset container available", "dataset_missing": True},
            implicated_slots={SlotFamily.DATASOURCE},
        )
    if not container.units("train"):
        return CheckResult(
            "config_preflight", CheckStatus.FAIL,
            diagnostics={"error": "train split is empty"},
            implicated_slots={SlotFamily.DATASOURCE},
        )
    overlaps = container.split_overlaps()
    if overlaps:
        return CheckResult(
            "config_preflight", CheckStatus.FAIL,
            diagnostics={"error": f"unit(s) in multiple splits: {overlaps}"},
            implicated_slots={SlotFamily.DATASOURCE},
        )
    diagnostics = {
        split: len(container.units(split)) for split in ("train", "val", "test")
    }
    status = CheckStatus.PASS
    if not container.units("val") or not container.units("test"):
        status = CheckStatus.WARN
    return CheckResult("config_preflight", status, diagnostics=diagnostics)


# --- sanity ladder ------------------------------------------------------------------


def check_init_loss(
    model, batch: dict, loss_fn, contract: TaskContract, policy: RunPolicy | None = None
) -> CheckResult:
    """Loss executes and is finite; scale is compared against the task prior
    (ln C for C-way classification, target variance for regression) and a
    deviation beyond the band is a warning, never a failure."""
    policy = policy or RunPolicy()
    started = time.monotonic()
    _, loss, _ = forward_with_loss(model, batch, loss_fn, contract=contract)
    value = loss.item()
    if contract.target_semantics is TargetSemantics.CLASS_LABEL:
        prior = float(np.log(contract.num_targets)) if contract.num_targets > 1 else 1.0
    else:
        prior = float(np.var(batch["targets"].data))
    deviation = abs(value - prior) / max(prior, 1e-12)
    diagnostics = {
        "loss": value,
        "prior": prior,
        "relative_deviation": deviation,
        "timed_out": time.monotonic() - started > policy.check_timeout_seconds,
    }
    if not np.isfinite(value):
        return CheckResult(
            "init_loss", CheckStatus.FAIL,
            diagnostics=diagnostics,
            implicated_slots={SlotFamily.MODEL},
        )
    status = CheckStatus.WARN if deviation > policy.init_loss_band else CheckStatus.PASS
    return CheckResult("init_loss", status, diagnostics=diagnostics)


def check_gradient_flow(
    model, batch: dict, loss_fn, policy: RunPolicy | None = None
) -> CheckResult:
    """One forward+backward: dead / vanishing / exploding gradient bands per
    parameter plus the batch-dimension perturbation probe. Dead, exploding,
    non-finite, or sample-mixing gradients fail; vanishing only warns."""
    policy = policy or RunPolicy()
    started = time.monotonic()
    outputs, loss, tape = forward_with_loss(model, batch, loss_fn)
    grads = backward(tape, loss, model.parameters)
    dead, vanishing, exploding, nonfinite = [], [], [], []
    ratios: dict[str, float] = {}
    for name, grad in sorted(grads.by_name.items()):
        if not np.isfinite(grad).all():
            nonfinite.append(name)
            continue
        gmax = float(np.abs(grad).max()) if grad.size else 0.0
        gnorm = float(np.sqrt((grad * grad).sum()))
        pnorm = float(np.sqrt((model.parameters[name].data ** 2).sum()))
        ratio = gnorm / pnorm if pnorm > 0 else float("inf") if gnorm > 0 else 0.0
        ratios[name] = ratio
        if gmax < policy.dead_gradient_max:
            dead.append(name)
        elif ratio > policy.exploding_ratio:
            exploding.append(name)
        elif ratio < policy.vanishing_ratio:
            vanishing.append(name)

    mixing = _batch_mixing_probe(model, batch, outputs, policy)
    diagnostics = {
        "grad_param_ratios": ratios,
        "dead_parameters": dead,
        "unreached_parameters": sorted(grads.unreached),
        "vanishing_parameters": vanishing,
        "exploding_parameters": exploding,
        "non_finite_parameters": nonfinite,
        "batch_mixing_detected": mixing,
        "timed_out": time.monotonic() - started > policy.check_timeout_seconds,
    }
    if dead or exploding or nonfinite or mixing:
        return CheckResult(
            "gradient_flow", CheckStatus.FAIL,
            diagnostics=diagnostics,
            implicated_slots={SlotFamily.MODEL},
        )
    status = CheckStatus.WARN if vanishing else CheckStatus.PASS
    return CheckResult("gradient_flow", status, diagnostics=diagnostics)


def _batch_mixing_probe(model, batch: dict, reference_outputs: dict, policy: RunPolicy) -> bool:
    """Perturb sample 0's inputs and recompute: any other sample's prediction
    moving beyond tolerance means batch rows contaminate each other."""
    features = batch["features"].data
    if features.shape[0] < 2:
        return False
    perturbed = features.copy()
    perturbed[0] += 1.0
    probe_batch = dict(batch)
    probe_batch["features"] = Tensor(perturbed)
    probe_outputs = model.run(probe_batch)
    before = reference_outputs["predictions"].data
    after = probe_outputs["predictions"].data
    if before.shape != after.shape:
        return True
    delta = np.abs(after[1:] - before[1:])
    return bool(delta.size and float(delta.max()) > policy.batch_probe_tolerance)


def check_overfit_microbatch(
    stack: ExperimentStack, policy: RunPolicy | None = None
) -> CheckResult:
    """Memorize a sliced micro-batch (default 4 examples, up to 400 steps).

    Task-aware end state: regression must cut the loss to 1e-3 of its start;
    classification must get every example right at loss below 0.05. The probe
    runs a policy-fixed optimizer; it is a model-health gate, not a
    hyperparameter probe.
    """
    policy = policy or RunPolicy()
    started = time.monotonic()
    batch = stack.micro_batch(policy.overfit_examples)
    model, loss_fn = stack.model, stack.loss_fn
    optimizer = OptimizerState(kind=policy.overfit_optimizer, lr=policy.overfit_lr)
    classification = stack.contract.target_semantics is TargetSemantics.CLASS_LABEL

    initial = None
    target_loss = None
    final = float("nan")
    met = False
    steps = 0
    timed_out = False
    while True:
        outputs, loss, tape = forward_with_loss(model, batch, loss_fn)
        final = loss.item()
        if initial is None:
            initial = final
            if not np.isfinite(initial):
                return CheckResult(
                    "overfit_microbatch", CheckStatus.FAIL,
                    diagnostics={"initial_loss": initial, "error": "non-finite initial loss"},
                    implicated_slots={SlotFamily.MODEL, SlotFamily.TRANSFORM},
                )
            target_loss = policy.overfit_loss_ratio * initial
        if classification:
            predicted = outputs["predictions"].data.reshape(
                outputs["predictions"].data.shape[0], -1
            ).argmax(axis=1)
            wanted = batch["targets"].data.reshape(-1).astype(np.int64)
            met = bool(
                (predicted == wanted).all() and final < policy.overfit_classification_loss
            )
        else:
            met = final <= target_loss or initial < 1e-12
        timed_out = time.monotonic() - started > policy.check_timeout_seconds
        if met or timed_out or steps >= policy.overfit_max_steps:
            break
        try:
            grads = backward(tape, loss, model.parameters)
            params, optimizer = step(optimizer, model.parameters, grads.by_name)
        except SlotbenchError as exc:
            return CheckResult(
                "overfit_microbatch", CheckStatus.FAIL,
                diagnostics={"initial_loss": initial, "error": str(exc), "steps": steps},
                implicated_slots={SlotFamily.MODEL, SlotFamily.TRANSFORM},
            )
        model.set_parameters(params)
        steps += 1
    diagnostics = {
        "initial_loss": initial,
        "final_loss": final,
        "steps": steps,
        "examples": int(batch["targets"].data.shape[0]),
        "timed_out": timed_out,
    }
    if met and not timed_out:
        return CheckResult("overfit_microbatch", CheckStatus.PASS, diagnostics=diagnostics)
    return CheckResult(
        "overfit_microbatch", CheckStatus.FAIL,
        diagnostics=diagnostics,
        implicated_slots={SlotFamily.MODEL, SlotFamily.TRANSFORM},
    )


def run_ladder(
    config: ResolvedConfiguration,
    registry: ComponentRegistry,
    contract: TaskContract | None,
    container: SplitDatasetContainer | None,
    policy: RunPolicy | None = None,
    log: LadderLog | None = None,
    seed: int = 0,
) -> tuple[SanityVerdict, LadderLogEntry]:
    """Build the stack once, then init-loss, gradient-flow, overfit in order.

    Config preflight (composition + typecheck) runs first; its failure stops
    everything with TOOL_INVOCATION_FAILURE and zero sanity checks run.
    Init-loss warnings do not stop the ladder; categorical failures do.
    """
    policy = policy or RunPolicy()
    log = log if log is not None else LadderLog()
    checks: list[CheckResult] = []

    def finish(verdict: SanityVerdict) -> tuple[SanityVerdict, LadderLogEntry]:
        entry = LadderLogEntry(
            attempt=log.next_attempt(),
            checks=checks,
            verdict=verdict,
            timestamp=log.next_attempt(),
            config_digest=digest,
        )
        log.append(entry)
        return verdict, entry

    digest = ""
    try:
        digest = config.digest()
        contract = contract or catalog.contract_from_config(config)
        report = typecheck(config, registry, contract)
        # declaration-layer leakage rules belong to the static audit, not here
        hard = [v for v in report.violations if not v.rule_id.startswith("leakage_decl")]
        if hard:
            raise ValueError(
                "typecheck violations: "
                + "; ".join(f"{v.rule_id}: {v.message}" for v in hard)
            )
        checks.append(CheckResult("config_preflight", CheckStatus.PASS))
    except Exception as exc:
        checks.append(
            CheckResult(
                "config_preflight", CheckStatus.FAIL,
                diagnostics={"error": str(exc)},
                implicated_slots={SlotFamily.TASK},
            )
        )
        return finish(SanityVerdict.TOOL_INVOCATION_FAILURE)

    if container is None:
        return finish(SanityVerdict.DATASET_UNAVAILABLE)
    try:
        stack = build_stack(config, registry, container, seed=seed, contract=contract)
        if len(stack.windowed.split("train")) == 0:
            raise ValueError("zero train windows")
        batch = stack.micro_batch(policy.overfit_examples)
    except Exception as exc:
        checks.append(
            CheckResult(
                "config_preflight", CheckStatus.FAIL,
                diagnostics={"error": f"stack build failed: {exc}"},
                implicated_slots={SlotFamily.DATASOURCE, SlotFamily.SEQUENCER},
            )
        )
        return finish(SanityVerdict.DATASET_EXECUTION_FAILED)

    try:
        result = check_init_loss(stack.model, batch, stack.loss_fn, stack.contract, policy)
    except ShapeMismatch as exc:
        checks.append(
            CheckResult(
                "dry_run", CheckStatus.FAIL,
                diagnostics={"error": str(exc)},
                implicated_slots={SlotFamily.MODEL},
            )
        )
        return finish(SanityVerdict.BLOCK)
    checks.append(result)
    if result.timed_out:
        return finish(SanityVerdict.PRECHECK_TIMEOUT)
    if result.failed:
        return finish(SanityVerdict.BLOCK)

    result = check_gradient_flow(stack.model, batch, stack.loss_fn, policy)
    checks.append(result)
    if result.timed_out:
        return finish(SanityVerdict.PRECHECK_TIMEOUT)
    if result.failed:
        return finish(SanityVerdict.BLOCK)

    result = check_overfit_microbatch(stack, policy)
    checks.append(result)
    if result.timed_out:
        return finish(SanityVerdict.PRECHECK_TIMEOUT)
    if result.failed:
        return finish(SanityVerdict.BLOCK)

    if any(c.status is CheckStatus.WARN for c in checks):
        return finish(SanityVerdict.WARN_CONTINUE)
    return finish(SanityVerdict.PASS)


def full_verification(
    config: ResolvedConfiguration,
    registry: ComponentRegistry,
    contract: TaskContract | None,
    container: SplitDatasetContainer | None,
    policy: RunPolicy | None = None,
    log: LadderLog | None = None,
    seed: int = 0,
) -> VerificationReport:
    """Static layer first, then the sanity ladder; the repair loop's gate."""
    policy = policy or RunPolicy()
    log = log if log is not None else LadderLog()
    contract = contract or catalog.contract_from_config(config)
    static, _stack = verify_static(config, registry, contract, container, policy, seed=seed)
    if any(c.failed for c in static):
        verdict = SanityVerdict.BLOCK
        if any(c.diagnostics.get("dataset_missing") for c in static if c.failed):
            verdict = SanityVerdict.DATASET_UNAVAILABLE
        entry = LadderLogEntry(
            attempt=log.next_attempt(),
            checks=static,
            verdict=verdict,
            timestamp=log.next_attempt(),
            config_digest=config.digest(),
            kind="static_block",
        )
        log.append(entry)
        return VerificationReport(static=static, verdict=verdict)
    verdict, entry = run_ladder(
        config, registry, contract, container, policy, log=log, seed=seed
    )
    return VerificationReport(static=static, sanity=entry.checks, verdict=verdict)
