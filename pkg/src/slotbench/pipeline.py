"""The run driver: executes phases P0..P4 against a run directory.

Every phase is a pure function of (paper-spec, mode, seed, policy): re-running
a phase regenerates byte-identical artifacts, which is what makes kill-and-
resume indistinguishable from an uninterrupted run. Phase re-entry clears the
phase's own outputs first.

The driver emits injection-point events ("artifact:04", "phase:P2_analyze")
through an optional hook and the SLOTBENCH_ABORT_AT environment variable
(comma-separated keys, aborting the process hard at the first match) for
crash-recovery testing.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from . import catalog, control
from .binding import (
    ComponentRegistry,
    ResolvedConfiguration,
    classify_bindings,
    compose,
    typecheck,
)
from .config import canonical_json
from .contracts import SlotFamily
from .control import Phase, PhaseStatus, RunState
from .data import DirectoryDatasource, SplitDatasetContainer
from .engine import TrainBudget, save_checkpoint, write_history_csv
from .errors import NonFiniteGradient, SlotbenchError
from .evaluation import (
    EvaluationReport,
    ScientificStatus,
    TechnicalStatus,
    combine_seed_metrics,
    evaluate,
    generate_report,
)
from .ledger import (
    AssumptionLedger,
    AssumptionRecord,
    EvidenceRef,
    HyperparameterContract,
    impute,
    render_ledger_markdown,
    validate_contract,
)
from .paperspec import PaperSpec, load_paper_spec
from .policy import RunPolicy
from .repair import (
    NO_ATTRIBUTABLE_ASSUMPTION,
    MutableSlotWhitelist,
    RepairBudget,
    apply_patch,
    propose,
    repair_loop,
)
from .stack import batch_fit_estimate, build_stack, train
from .synthetic import SyntheticDatasource, SyntheticDegradationSpec
from .verification import (
    CheckResult,
    CheckStatus,
    LadderLog,
    SanityVerdict,
    full_verification,
    run_ladder,
)

ABORT_ENV = "SLOTBENCH_ABORT_AT"
LEDGER_FILE = "assumption-ledger.jsonl"
LEDGER_MIRROR = "assumption-ledger.md"
BASELINES_FILE = "baselines.json"
SPEC_COPY = "paper-spec.json"


class PhaseBlocked(SlotbenchError):
    """A named non-recoverable blocker surfaced by a phase."""

    def __init__(self, blocker: str):
        self.blocker = blocker
        super().__init__(blocker)


@dataclass
class RunOutcome:
    exit_code: int
    state: RunState
    blocker: str | None = None


class PersistentLadderLog(LadderLog):
    """Ladder log mirrored into artifact slot 06 on every append."""

    def __init__(self, run_dir: Path):
        super().__init__()
        self.run_dir = Path(run_dir)

    def append(self, entry):
        super().append(entry)
        control.append_ladder_entry(self.run_dir, entry.to_dict())
        return entry


def datasource_for(config: ResolvedConfiguration):
    """Instantiate the bound datasource adapter (None when unbound/unusable)."""
    ref = config.bindings().get(SlotFamily.DATASOURCE)
    if ref is None:
        return None
    params = ref.parameters
    if ref.name == "synthetic_degradation":
        spec = SyntheticDegradationSpec(
            n_units=dict(params.get("n_units", {"train": 8, "val": 3, "test": 3})),
            time_range=tuple(params.get("time_range", (40, 80))),
            n_features=int(params.get("n_features", 4)),
            degradation=params.get("degradation", "linear"),
            noise_scale=float(params.get("noise_scale", 0.02)),
            rul_clip=float(params.get("rul_clip", 40.0)),
            seed=int(params.get("seed", 0)),
        )
        return SyntheticDatasource(spec)
    if ref.name == "directory":
        root = Path(params["root"])
        if not root.is_dir():
            return None
        return DirectoryDatasource(root)
    return None


def build_container(config: ResolvedConfiguration) -> SplitDatasetContainer | None:
    source = datasource_for(config)
    return None if source is None else source.load()


def _seed_matrix(mode: str, seed: int, policy: RunPolicy) -> list[int]:
    if mode == "full":
        return [seed + i for i in range(policy.n_seeds)]
    return [seed]


def default_assumption_records(ledger: AssumptionLedger) -> None:
    """Protocol decisions the source papers habitually leave unstated."""
    ledger.record(
        SlotFamily.SEQUENCER,
        EvidenceRef.absent(),
        "sequencer.alignment=right_edge_label",
        "window label alignment unstated; right-edge is the standard convention",
    )
    ledger.record(
        SlotFamily.DATASOURCE,
        EvidenceRef.absent(),
        "unit_level_split_partitioning",
        "split policy unstated; unit-level partitioning is what the leakage "
        "invariant implies",
    )
    ledger.record(
        SlotFamily.EVALUATOR,
        EvidenceRef.absent(),
        "evaluator.aggregation=last",
        "per-unit aggregator unstated; last-window prediction is the "
        "end-of-life estimate",
        alternatives=["evaluator.aggregation=mean"],
    )


class Driver:
    """Executes the staged workflow against one run directory."""

    def __init__(self, run_dir: Path, policy: RunPolicy | None = None, hook=None):
        self.run_dir = Path(run_dir)
        self.policy = policy or RunPolicy()
        self.hook = hook
        self.registry: ComponentRegistry = catalog.builtin_registry()

    # --- injection points ---

    def _emit(self, key: str) -> None:
        targets = os.environ.get(ABORT_ENV, "")
        if targets and key in {t.strip() for t in targets.split(",")}:
            os._exit(17)  # simulates kill -9 at a deterministic point
        if self.hook is not None:
            self.hook(key)

    def _write(self, slot: str, payload) -> None:
        control.write_sidecar(self.run_dir, slot, payload)
        self._emit(f"artifact:{slot}")

    # --- context loaded from the run directory ---

    def spec(self) -> PaperSpec:
        return load_paper_spec(self.run_dir / SPEC_COPY)

    def manifest(self) -> dict:
        return control.read_inputs(self.run_dir)

    # --- the phases ---

    def phase_p0(self, spec_path: Path, mode: str, seed: int, run_id: str) -> None:
        spec = load_paper_spec(spec_path)
        control.artifacts.atomic_write(
            self.run_dir / SPEC_COPY, canonical_json(spec.to_tree())
        )
        manifest = {
            "run_id": run_id,
            "mode": mode,
            "seed": seed,
            "paper_spec": SPEC_COPY,
            "policy": self.policy.to_dict(),
        }
        control.artifacts.atomic_write(
            self.run_dir / control.INPUTS_FILE, canonical_json(manifest)
        )
        self._emit("artifact:inputs")

    def phase_p1(self) -> None:
        spec = self.spec()
        manifest = self.manifest()
        self._write(
            "00",
            {
                "run_name": spec.name,
                "task_kind": spec.task_kind,
                "dataset": spec.dataset,
                "mode": manifest["mode"],
                "dataset_matches_framework": spec.dataset_matches_framework,
            },
        )
        tree = spec.to_tree()
        kinds = {dict: "mapping", list: "sequence"}
        sections = [
            {"key": key, "kind": kinds.get(type(tree[key]), "scalar")} for key in tree
        ]
        self._write("01", {"sections": sections})

    def phase_p2(self) -> None:
        spec = self.spec()
        self._write(
            "02",
            {
                "bindings": spec.binding,
                "dataset_mapping": {
                    "paper_dataset": spec.dataset,
                    "framework_dataset": "synthetic",
                    "matches": spec.dataset_matches_framework,
                },
            },
        )
        table = HyperparameterContract.from_tree(spec.hyperparameters)
        violations = validate_contract(table)
        if violations:
            rendered = ", ".join(f"{kind}:{row}" for kind, row in violations)
            raise PhaseBlocked(f"BLUEPRINT_INPUT_INCOMPLETE: {rendered}")
        self._write(
            "03",
            {
                "hyperparameters": {
                    name: row.to_dict() for name, row in table.rows.items()
                },
                "claims": [c.to_dict() for c in spec.claims],
                "assumptions": [a.to_dict() for a in spec.assumptions],
            },
        )

    def phase_p3(self) -> None:
        spec = self.spec()
        manifest = self.manifest()
        config = compose(
            base={},
            defaults=[*spec.defaults, spec.base_tree()],
            overrides=spec.overrides,
            documents=catalog.default_documents(),
        )
        ledger = AssumptionLedger()
        for record in spec.assumptions:
            ledger.append_record(
                AssumptionRecord(
                    slot=record.slot,
                    evidence=record.evidence,
                    value=record.value,
                    justification=record.justification,
                    alternatives=list(record.alternatives),
                )
            )
        default_assumption_records(ledger)
        table = config.hyperparameters()
        patched, annotations, _records = impute(table, catalog.framework_defaults(), ledger)
        for note in annotations:
            config = config.with_patch(
                f"hyperparameters.{note.row_name}", note.imputed_value, kind="impute"
            )
            config.hyperparameter_sources[note.row_name] = "imputed"
        contract = catalog.contract_from_config(config)
        report = typecheck(config, self.registry, contract)
        diagnostics = classify_bindings(config, self.registry)
        self._write(
            "04",
            {
                "configuration": config.tree,
                "composition_trace": config.composition_trace,
                "hyperparameters": patched.to_dict(),
                "hyperparameter_sources": config.hyperparameter_sources,
                "substitutions": [note.render() for note in annotations],
                "typecheck": report.to_dict(),
                "binding_diagnostics": diagnostics.to_dict(),
                "assumption_ledger": [rec.to_dict() for rec in ledger],
                "run_matrix": {
                    "seeds": _seed_matrix(
                        manifest["mode"], manifest["seed"], self.policy
                    )
                },
            },
        )
        if manifest["mode"] == "blueprint_only":
            if not report.passed:
                raise PhaseBlocked(
                    "TYPECHECK_FAILED: "
                    + "; ".join(f"{v.rule_id}" for v in report.violations)
                )
            if not diagnostics.complete:
                missing = [
                    fam.value
                    for fam, state in diagnostics.per_family_state.items()
                    if state.value == "Missing"
                ]
                raise PhaseBlocked("BINDING_INCOMPLETE: " + ", ".join(missing))

    def phase_p3_5(self) -> None:
        spec = self.spec()
        status = "PRE_REGISTERED" if spec.claims else "BENCHMARK_ONLY"
        self._write("05", {"status": status, "claims": [c.to_dict() for c in spec.claims]})

    # --- P4 ---

    def load_blueprint(self) -> tuple[ResolvedConfiguration, AssumptionLedger, list[int]]:
        payload = control.read_machine(self.run_dir, "04")
        config = ResolvedConfiguration(
            tree=payload["configuration"],
            composition_trace=payload["composition_trace"],
            hyperparameter_sources=dict(payload.get("hyperparameter_sources", {})),
        )
        ledger = AssumptionLedger()
        for raw in payload.get("assumption_ledger", []):
            ledger.append_record(AssumptionRecord.from_dict(raw))
        return config, ledger, list(payload["run_matrix"]["seeds"])

    def _clear_phase4_outputs(self) -> None:
        for slot in ("06", "07", "08"):
            control.clear_slot(self.run_dir, slot)
        for pattern in (
            "predictions-seed*.csv",
            "history-seed*.csv",
            "checkpoint-seed*.json",
            "checkpoint-seed*.bin",
            LEDGER_FILE,
            LEDGER_MIRROR,
        ):
            for path in self.run_dir.glob(pattern):
                path.unlink()

    def _write_ledger(self, ledger: AssumptionLedger) -> None:
        ledger.save(self.run_dir / LEDGER_FILE)
        control.artifacts.atomic_write(
            self.run_dir / LEDGER_MIRROR, render_ledger_markdown(ledger)
        )

    def _load_baselines(self) -> dict:
        path = self.run_dir / BASELINES_FILE
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def phase_p4(self) -> None:
        self._clear_phase4_outputs()
        spec = self.spec()
        manifest = self.manifest()
        mode = manifest["mode"]
        config, ledger, seeds = self.load_blueprint()
        contract = catalog.contract_from_config(config)
        container = build_container(config)
        log = PersistentLadderLog(self.run_dir)

        def gate(cfg: ResolvedConfiguration):
            return full_verification(
                cfg, self.registry, contract, container, self.policy,
                log=log, seed=seeds[0],
            )

        whitelist = MutableSlotWhitelist.from_ledger(ledger)
        repair = repair_loop(
            config, ledger, RepairBudget.for_verification(self.policy), gate, whitelist
        )
        for iteration in repair.iterations:
            entry_dict = {
                "attempt": log.next_attempt(),
                "checks": iteration.post_checks,
                "verdict": repair.report.verdict.value,
                "timestamp": log.next_attempt(),
                "config_digest": repair.config.digest(),
                "kind": "repair_iteration",
                "extra": {
                    "hypothesis": iteration.hypothesis.to_dict(),
                    "falsified": iteration.falsified,
                    "index": iteration.index,
                },
            }
            control.append_ladder_entry(self.run_dir, entry_dict)
        self._write_ledger(ledger)
        self._emit("artifact:06")
        if not repair.passed:
            failing = ",".join(sorted({c.check_id for c in repair.report.failing}))
            raise PhaseBlocked(
                f"{repair.outcome.value}"
                + (f": failing checks [{failing}]" if failing else "")
            )
        config = repair.config

        fit_report = batch_fit_estimate(
            config, self.policy.memory_budget_bytes, self.registry, self.policy,
            n_features=container.units("train")[0].channels.shape[1],
        )
        if not fit_report["fits"]:
            raise PhaseBlocked(
                f"BATCH_FIT_EXCEEDED: {fit_report['estimated_bytes']} bytes "
                f"over {fit_report['budget_bytes']}"
            )

        budget = None
        hp = config.hyperparameters()
        if mode == "quick":
            budget = TrainBudget(
                max_epochs=min(
                    int(hp.value("max_epochs", 300)), self.policy.quick_max_epochs
                )
            )

        config, results, stack = self._train_matrix(
            config, ledger, container, contract, seeds, budget
        )

        per_seed_window, per_seed_unit = [], []
        seed_rows = []
        for seed, result in zip(seeds, results):
            window_metrics, table = evaluate(
                config, result.model, container, "window",
                self.registry, self.policy, stack=stack,
            )
            unit_metrics, _ = evaluate(
                config, result.model, container, "unit",
                self.registry, self.policy, stack=stack,
            )
            per_seed_window.append(window_metrics)
            per_seed_unit.append(unit_metrics)
            table.to_csv(self.run_dir / f"predictions-seed{seed}.csv")
            write_history_csv(self.run_dir / f"history-seed{seed}.csv", result)
            save_checkpoint(self.run_dir / f"checkpoint-seed{seed}", result.model, result.optimizer)
            seed_rows.append(
                {
                    "seed": seed,
                    "epochs": result.epochs_run,
                    "steps": result.steps,
                    "final_train_loss": result.final_train_loss,
                    "final_val_metric": result.final_val_metric,
                    "final_lr": result.lr_history[-1] if result.lr_history else None,
                    "history_csv": f"history-seed{seed}.csv",
                    "predictions_csv": f"predictions-seed{seed}.csv",
                    "checkpoint": f"checkpoint-seed{seed}",
                }
            )
        combined = combine_seed_metrics(per_seed_unit) + combine_seed_metrics(per_seed_window)
        self._write(
            "07",
            {
                "seeds": seed_rows,
                "batch_fit": fit_report,
                "configuration": config.tree,
                "composition_trace": config.composition_trace,
                "repair": {
                    "outcome": repair.outcome.value,
                    "iterations": len(repair.iterations),
                },
                "combined_metrics": [m.to_dict() for m in combined],
            },
        )

        hypothesis = control.read_machine(self.run_dir, "05")
        try:
            report = generate_report(
                combined,
                self._load_baselines(),
                spec.claims,
                dataset_matches_paper=spec.dataset_matches_framework,
                hypothesis_status=hypothesis["status"],
                technical_status=TechnicalStatus.PASS,
                task_kind=spec.task_kind,
                policy=self.policy,
            )
        except Exception as exc:  # evaluator internal failure, artifact still completes
            report = EvaluationReport(
                achieved=[],
                baseline_table={},
                claim_verdicts={},
                artifact_status="complete",
                technical_status=TechnicalStatus.EVALUATOR_ERROR,
                scientific_status=ScientificStatus.INVESTIGATE,
                magnitude_diagnostic={"error": str(exc)},
            )
        self._write("08", report.to_payload())
        hub = control.read_machine(self.run_dir, "00")
        hub["verdict"] = report.scientific_status
        hub["technical_status"] = report.technical_status
        self._write("00", hub)
        self._report = report

    def _train_matrix(self, config, ledger, container, contract, seeds, budget):
        """Train every seed; a non-finite failure enters the bounded dispute
        loop (one whitelisted patch per iteration, then full retrain)."""
        whitelist = MutableSlotWhitelist.from_ledger(ledger)
        attempts = 0
        while True:
            stack = build_stack(
                config, self.registry, container, seed=seeds[0], contract=contract
            )
            try:
                results = [
                    train(config, stack.windowed, budget, seed, self.registry, self.policy)
                    for seed in seeds
                ]
                return config, results, stack
            except NonFiniteGradient as exc:
                failure = CheckResult(
                    check_id="gradient_flow",
                    status=CheckStatus.FAIL,
                    diagnostics={"error": str(exc), "stage": "training"},
                    implicated_slots=set(exc.implicated),
                )
                if attempts >= self.policy.dispute_max_iterations:
                    raise PhaseBlocked("TRAINING_NONFINITE: dispute budget exhausted")
                hypothesis = propose(ledger, [failure])
                if hypothesis is NO_ATTRIBUTABLE_ASSUMPTION:
                    raise PhaseBlocked("TRAINING_NONFINITE: no attributable assumption")
                config = apply_patch(config, hypothesis, whitelist, ledger)
                attempts += 1

    # --- driving ---

    PHASE_FN = {
        Phase.P1_INGEST: phase_p1,
        Phase.P2_ANALYZE: phase_p2,
        Phase.P3_BLUEPRINT: phase_p3,
        Phase.P3_5_HYPOTHESIS: phase_p3_5,
        Phase.P4_EXPERIMENT: phase_p4,
    }

    def drive(self, state: RunState) -> RunOutcome:
        self._report = None
        with control.run_lock(self.run_dir):
            while True:
                phase = state.current_phase()
                if phase is None:
                    break
                if phase is Phase.P0_INPUT_CHECK and state.phase(phase).status in (
                    PhaseStatus.NOT_STARTED,
                    PhaseStatus.FAILED,
                ):
                    # P0 needs the original spec path; only start_run provides it
                    return RunOutcome(
                        2, state, blocker="INPUTS_MISSING: run was never initialized"
                    )
                control.start_phase(state, phase, self.run_dir, self.policy)
                try:
                    self.PHASE_FN[phase](self)
                except PhaseBlocked as exc:
                    control.fail_phase(state, phase, exc.blocker, self.run_dir)
                    state.axes.artifact = "incomplete"
                    if phase is Phase.P4_EXPERIMENT:
                        state.axes.technical = "failed"
                    control.save_state(self.run_dir, state)
                    return RunOutcome(1, state, blocker=exc.blocker)
                control.complete_phase(state, phase, self.run_dir, self.policy)
                self._emit(f"phase:{phase.value}")
            if self._report is not None:
                state.axes.technical = (
                    "runnable"
                    if self._report.technical_status == TechnicalStatus.PASS
                    else "failed"
                )
                state.axes.scientific = self._report.scientific_status.lower()
                control.save_state(self.run_dir, state)
            exit_code = 0
            if state.axes.artifact != "complete" or state.axes.technical == "failed":
                exit_code = 1
            return RunOutcome(exit_code, state)


def start_run(
    run_dir: Path,
    paper_spec_path: Path,
    mode: str = "full",
    seed: int = 0,
    policy: RunPolicy | None = None,
    hook=None,
) -> RunOutcome:
    """`validate-run`: initialize a fresh run directory and drive it to the end."""
    run_dir = Path(run_dir)
    spec = load_paper_spec(paper_spec_path)
    driver = Driver(run_dir, policy, hook)
    state = control.init_run(run_dir, mode, run_id=spec.name)
    with control.run_lock(run_dir):
        control.start_phase(state, Phase.P0_INPUT_CHECK, run_dir, driver.policy)
        try:
            driver.phase_p0(paper_spec_path, mode, seed, spec.name)
        except PhaseBlocked as exc:
            control.fail_phase(state, Phase.P0_INPUT_CHECK, exc.blocker, run_dir)
            return RunOutcome(1, state, blocker=exc.blocker)
        control.complete_phase(state, Phase.P0_INPUT_CHECK, run_dir, driver.policy)
        driver._emit("phase:P0_input_check")
    return driver.drive(state)


def resume_run(run_dir: Path, hook=None) -> RunOutcome:
    """`resume`: reconcile from artifacts, then continue the current phase."""
    run_dir = Path(run_dir)
    manifest = control.read_inputs(run_dir)
    policy = RunPolicy.from_dict(manifest.get("policy", {}))
    state = control.sync_from_artifacts(run_dir, policy)
    driver = Driver(run_dir, policy, hook)
    return driver.drive(state)


def ladder_once(run_dir: Path) -> SanityVerdict:
    """`ladder`: one sanity-ladder invocation against the blueprinted config."""
    run_dir = Path(run_dir)
    manifest = control.read_inputs(run_dir)
    policy = RunPolicy.from_dict(manifest.get("policy", {}))
    driver = Driver(run_dir, policy)
    config, _ledger, seeds = driver.load_blueprint()
    container = build_container(config)
    contract = catalog.contract_from_config(config)
    log = PersistentLadderLog(run_dir)
    verdict, _entry = run_ladder(
        config, driver.registry, contract, container, policy, log=log, seed=seeds[0]
    )
    return verdict


def format_mean_std(mean: float, std: float | None) -> str:
    if std is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} ± {std:.2f}"


def bench_run(run_dir: Path, baseline: str) -> dict:
    """`bench`: swap only the model binding, retrain under the identical
    protocol and seeds, and emit a leaderboard-style comparison row."""
    from .evaluation import benchmark_swap  # local to avoid cycle at import time

    run_dir = Path(run_dir)
    manifest = control.read_inputs(run_dir)
    policy = RunPolicy.from_dict(manifest.get("policy", {}))
    driver = Driver(run_dir, policy)
    spec = driver.spec()

    training_log = control.read_machine(run_dir, "07")
    config = ResolvedConfiguration(
        tree=training_log["configuration"],
        composition_trace=training_log["composition_trace"],
    )
    seeds = [row["seed"] for row in training_log["seeds"]]
    contract = catalog.contract_from_config(config)
    container = build_container(config)
    display_grain = contract.evaluation_unit.value
    display_metric = "nmae" if spec.task_kind == "prognostics" else "accuracy"

    impl_metrics = [
        m
        for m in control.read_machine(run_dir, "08")["achieved_metrics"]
        if m["metric"] == display_metric and m["grain"] == display_grain
    ]
    if not impl_metrics:
        raise SlotbenchError(
            f"completed run carries no {display_metric}@{display_grain} metric"
        )

    swapped = benchmark_swap(config, baseline, driver.registry)
    stack = build_stack(swapped, driver.registry, container, seed=seeds[0], contract=contract)
    per_seed = []
    budget = None
    if manifest["mode"] == "quick":
        hp = swapped.hyperparameters()
        budget = TrainBudget(
            max_epochs=min(int(hp.value("max_epochs", 300)), policy.quick_max_epochs)
        )
    for seed in seeds:
        result = train(swapped, stack.windowed, budget, seed, driver.registry, policy)
        metrics, _ = evaluate(
            swapped, result.model, container, display_grain,
            driver.registry, policy, stack=stack,
        )
        per_seed.append(metrics)
    baseline_combined = combine_seed_metrics(per_seed)
    baseline_value = next(
        m for m in baseline_combined if m.metric == display_metric
    )
    impl = impl_metrics[0]
    columns = {
        "IMPL": (impl["value"], impl["dispersion"]),
        baseline: (baseline_value.value, baseline_value.dispersion),
    }
    direction = 1 if display_metric != "accuracy" else -1
    ranking = sorted(columns, key=lambda name: direction * columns[name][0])
    row = {
        "run_name": spec.name,
        "dataset": spec.dataset,
        "metric": f"{display_metric} x100" if display_metric == "nmae" else display_metric,
        "grain": display_grain,
        "seeds": seeds,
        "columns": {
            name: {
                "mean": columns[name][0],
                "std": columns[name][1],
                "display": format_mean_std(*columns[name]),
                "rank": ranking.index(name) + 1,
            }
            for name in columns
        },
    }
    control.artifacts.atomic_write(
        run_dir / f"bench-{baseline}.json", canonical_json(row)
    )
    return row
