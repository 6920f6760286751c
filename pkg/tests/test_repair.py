import pytest

from conftest import prognostics_tree
from slotbench.binding import compose
from slotbench.config import tree_diff
from slotbench.contracts import SlotFamily
from slotbench.errors import WhitelistViolation
from slotbench.ledger import AssumptionLedger, EvidenceRef
from slotbench.pipeline import build_container
from slotbench.repair import (
    NO_ATTRIBUTABLE_ASSUMPTION,
    FailureClass,
    Hypothesis,
    MutableSlotWhitelist,
    RepairBudget,
    RepairOutcome,
    apply_patch,
    classify_failure,
    propose,
    repair_loop,
)
from slotbench.verification import CheckResult, CheckStatus, full_verification


def fail(check_id, slots):
    return CheckResult(check_id, CheckStatus.FAIL, implicated_slots=set(slots))


def ok(check_id):
    return CheckResult(check_id, CheckStatus.PASS)


# --- failure classification ---

def test_classify_rule_table():
    assert classify_failure([fail("gradient_flow", {"model"})]) == {
        "gradient_flow": FailureClass.IMPL_BUG
    }
    assert classify_failure([fail("leakage", {"transform"})]) == {
        "leakage": FailureClass.DATA_PIPELINE
    }
    assert classify_failure([fail("init_loss", {"model"})]) == {
        "init_loss": FailureClass.LOSS_COMPOSITION
    }


def test_classify_overfit_depends_on_gradient_health():
    healthy = classify_failure(
        [ok("gradient_flow"), fail("overfit_microbatch", {"model", "transform"})]
    )
    assert healthy["overfit_microbatch"] is FailureClass.HP_MISMATCH
    broken = classify_failure(
        [fail("gradient_flow", {"model"}), fail("overfit_microbatch", {"model"})]
    )
    assert broken["overfit_microbatch"] is FailureClass.IMPL_BUG


def test_classify_requires_a_failure():
    with pytest.raises(ValueError):
        classify_failure([ok("typecheck")])


# --- propose ---

def _ledger_with(*records):
    ledger = AssumptionLedger()
    for slot, value, alternatives in records:
        ledger.record(slot, EvidenceRef.absent(), value, "fixture", alternatives)
    return ledger


def test_propose_first_attributable_record():
    ledger = _ledger_with(("transform", "transform.fit_on=train", ["transform.fit_on=train"]))
    hypothesis = propose(ledger, [fail("leakage", {"transform"})])
    assert isinstance(hypothesis, Hypothesis)
    assert hypothesis.target_change == (0, "transform.fit_on=train")
    assert hypothesis.predicted_effect == {"leakage": "pass"}


def test_propose_no_attributable_assumption():
    ledger = _ledger_with(("evaluator", "evaluator.aggregation=last", ["evaluator.aggregation=mean"]))
    assert propose(ledger, [fail("gradient_flow", {"model"})]) is NO_ATTRIBUTABLE_ASSUMPTION
    assert propose(AssumptionLedger(), [fail("gradient_flow", {"model"})]) is NO_ATTRIBUTABLE_ASSUMPTION


def test_propose_prefers_insertion_order():
    first = ("sequencer", "sequencer.length=16", ["sequencer.length=32"])
    second = ("sequencer", "sequencer.stride=4", ["sequencer.stride=8"])
    hypothesis = propose(_ledger_with(first, second), [fail("dry_run", {"sequencer"})])
    assert hypothesis.target_change[0] == 0
    hypothesis = propose(_ledger_with(second, first), [fail("dry_run", {"sequencer"})])
    assert hypothesis.target_change[0] == 0
    assert "stride" in hypothesis.target_change[1]


def test_propose_skips_exhausted_records():
    ledger = _ledger_with(
        ("model", "hyperparameters.learning_rate=0.001", []),  # nothing left to try
        ("model", "hyperparameters.optimizer=adamw", ["hyperparameters.optimizer=sgd"]),
    )
    hypothesis = propose(ledger, [fail("overfit_microbatch", {"model"})])
    assert hypothesis.target_change[0] == 1


def test_propose_bare_alternative_inherits_path():
    ledger = _ledger_with(("sequencer", "sequencer.length=16", [32, 64]))
    hypothesis = propose(ledger, [fail("dry_run", {"sequencer"})])
    assert hypothesis.target_change == (0, 32)


# --- apply_patch ---

def test_apply_patch_changes_exactly_one_leaf(registry):
    config = compose(prognostics_tree())
    ledger = _ledger_with(("sequencer", "sequencer.length=16", ["sequencer.length=64"]))
    whitelist = MutableSlotWhitelist.from_ledger(ledger)
    hypothesis = propose(ledger, [fail("dry_run", {"sequencer"})])
    patched = apply_patch(config, hypothesis, whitelist, ledger)
    assert tree_diff(config.tree, patched.tree) == ["sequencer.length"]
    assert patched.get("sequencer.length") == 64
    assert ledger[0].attempts_used == 1
    assert patched.composition_trace[-1]["kind"] == "repair"


def test_apply_patch_outside_whitelist(registry):
    config = compose(prognostics_tree())
    ledger = _ledger_with(("evaluator", "evaluator.grain=unit", ["evaluator.grain=window"]))
    whitelist = MutableSlotWhitelist.of(("sequencer", "sequencer.*"))
    hypothesis = propose(ledger, [fail("leakage", {"evaluator"})])
    with pytest.raises(WhitelistViolation):
        apply_patch(config, hypothesis, whitelist, ledger)
    assert ledger[0].attempts_used == 0  # nothing consumed on rejection


# --- the loop ---

def _gate(registry, container, policy):
    def verify(config):
        return full_verification(config, registry, None, container, policy)

    return verify


def test_loop_zero_iterations_on_first_pass(registry, policy):
    config = compose(prognostics_tree())
    container = build_container(config)
    result = repair_loop(
        config, AssumptionLedger(), RepairBudget(patience=10),
        _gate(registry, container, policy),
        whitelist=MutableSlotWhitelist.of(),
    )
    assert result.passed
    assert result.iterations == []
    assert result.config is config


def test_loop_stops_immediately_without_attribution(registry, policy):
    config = compose(prognostics_tree(model="broken_dead_branch_regression"))
    container = build_container(config)
    result = repair_loop(
        config, AssumptionLedger(), RepairBudget(patience=10),
        _gate(registry, container, policy),
        whitelist=MutableSlotWhitelist.of(),
    )
    assert result.outcome is RepairOutcome.UNATTRIBUTABLE
    assert result.iterations == []
    # the original failure is preserved
    assert any(c.check_id == "gradient_flow" for c in result.report.failing)


def test_loop_repairs_wrong_window_length(registry, policy):
    # planted wrong assumption: window longer than every unit -> zero windows;
    # exactly one alternative yields a passing gate
    tree = prognostics_tree()
    tree["sequencer"]["length"] = 500
    config = compose(tree)
    container = build_container(config)
    ledger = _ledger_with(
        ("sequencer", "sequencer.length=500", ["sequencer.length=300", "sequencer.length=16"]),
    )
    result = repair_loop(
        config, ledger, RepairBudget(patience=10), _gate(registry, container, policy)
    )
    assert result.passed
    assert len(result.iterations) <= 2  # at most the alternatives count
    assert result.config.get("sequencer.length") == 16
    assert result.iterations[0].falsified is True  # 300 predicted a fix, still failing
    assert result.iterations[-1].falsified is False


def test_loop_budget_bounds_iterations(registry, policy):
    tree = prognostics_tree()
    tree["sequencer"]["length"] = 500
    config = compose(tree)
    container = build_container(config)
    ledger = _ledger_with(
        ("sequencer", "sequencer.length=500",
         [f"sequencer.length={v}" for v in (400, 350, 300, 250)]),
    )
    result = repair_loop(
        config, ledger, RepairBudget(patience=2), _gate(registry, container, policy)
    )
    assert result.outcome is RepairOutcome.ESCALATE
    assert len(result.iterations) == 2


def test_loop_patience_zero_degenerates_to_single_verify(registry, policy):
    tree = prognostics_tree()
    tree["sequencer"]["length"] = 500
    config = compose(tree)
    container = build_container(config)
    ledger = _ledger_with(("sequencer", "sequencer.length=500", ["sequencer.length=16"]))
    result = repair_loop(
        config, ledger, RepairBudget(patience=0), _gate(registry, container, policy)
    )
    assert result.outcome is RepairOutcome.ESCALATE
    assert result.iterations == []


def test_loop_one_change_per_iteration(registry, policy):
    tree = prognostics_tree()
    tree["sequencer"]["length"] = 500
    config = compose(tree)
    container = build_container(config)
    ledger = _ledger_with(
        ("sequencer", "sequencer.length=500", ["sequencer.length=300", "sequencer.length=16"]),
    )
    seen = [config]

    def verify(cfg):
        seen.append(cfg)
        return full_verification(cfg, registry, None, container, policy)

    repair_loop(config, ledger, RepairBudget(patience=10), verify)
    configs = [seen[0]] + [c for c in seen[1:] if c is not seen[0]]
    for before, after in zip(configs, configs[1:]):
        if before.tree != after.tree:
            assert len(tree_diff(before.tree, after.tree)) == 1


def test_loop_framework_change_required(registry, policy):
    tree = prognostics_tree()
    tree["sequencer"]["length"] = 500
    config = compose(tree)
    container = build_container(config)
    ledger = _ledger_with(("sequencer", "sequencer.length=500", ["sequencer.length=16"]))
    result = repair_loop(
        config, ledger, RepairBudget(patience=10),
        _gate(registry, container, policy),
        whitelist=MutableSlotWhitelist.of(("model", "hyperparameters.*")),
    )
    assert result.outcome is RepairOutcome.FRAMEWORK_CHANGE_REQUIRED


def test_loop_dataset_recovery(registry, policy):
    config = compose(prognostics_tree())
    result = repair_loop(
        config, AssumptionLedger(), RepairBudget(patience=3),
        lambda cfg: full_verification(cfg, registry, None, None, policy),
    )
    assert result.outcome is RepairOutcome.DATASET_RECOVERY_REQUIRED


def test_budget_defaults():
    assert RepairBudget.for_verification().patience == 10
    assert RepairBudget.for_dispute().patience == 4
    with pytest.raises(ValueError):
        RepairBudget(patience=-1)


def test_whitelist_fuzz_never_patches_outside(registry, policy):
    import random

    rng = random.Random(0)
    families = [f.value for f in SlotFamily]
    paths = ["sequencer.length", "sequencer.stride", "transform.fit_on",
             "hyperparameters.learning_rate", "evaluator.grain", "model.hidden_widths"]
    whitelist = MutableSlotWhitelist.of(("sequencer", "sequencer.*"))
    config = compose(prognostics_tree())
    for _ in range(200):
        slot = rng.choice(families)
        path = rng.choice(paths)
        ledger = AssumptionLedger()
        rec = ledger.record(slot, EvidenceRef.absent(), f"{path}=16", "fuzz", [f"{path}=32"])
        hypothesis = propose(ledger, [fail("dry_run", {slot})])
        allowed = slot == "sequencer" and path.startswith("sequencer.")
        if allowed:
            patched = apply_patch(config, hypothesis, whitelist, ledger)
            assert tree_diff(config.tree, patched.tree) == [path]
        else:
            with pytest.raises(WhitelistViolation):
                apply_patch(config, hypothesis, whitelist, ledger)
