import json

import pytest

from slotbench.config import canonical_json
from slotbench.control import (
    INPUTS_FILE,
    Phase,
    PhaseStatus,
    append_ladder_entry,
    complete_phase,
    fail_phase,
    get_status,
    human_path,
    index_artifacts,
    init_run,
    load_state,
    machine_path,
    mirror_matches,
    read_machine,
    render_markdown,
    start_phase,
    sync_from_artifacts,
    write_sidecar,
)
from slotbench.control.artifacts import atomic_write
from slotbench.errors import (
    AlreadyInitialized,
    CorruptArtifact,
    MissingArtifact,
    OutOfOrder,
    RetriesExhausted,
    SchemaViolation,
)
from slotbench.policy import RunPolicy

HUB = {"run_name": "r", "task_kind": "prognostics", "dataset": "synthetic", "mode": "full"}
INDEX = {"sections": [{"key": "binding", "kind": "mapping"}]}
PLAN = {"bindings": {"model": {"component": "mlp"}}, "dataset_mapping": {"matches": True}}
CONTRACT = {"hyperparameters": {k: {"value": 1, "source": "paper"} for k in (
    "optimizer", "learning_rate", "lr_schedule", "weight_decay", "grad_clip",
    "warmup", "max_epochs", "batch_size", "training_protocol_notes")}, "claims": []}
BLUEPRINT = {
    "configuration": {"model": {"component": "mlp"}},
    "binding_diagnostics": {"complete": True},
    "run_matrix": {"seeds": [0, 1, 2]},
}


def _write_inputs(run_dir, mode="full"):
    atomic_write(
        run_dir / INPUTS_FILE,
        canonical_json({"run_id": "r", "mode": mode, "seed": 0, "paper_spec": "paper-spec.json"}),
    )


# --- init and transitions ---

def test_init_creates_fresh_state(tmp_path):
    state = init_run(tmp_path, "full")
    assert state.current_phase() is Phase.P0_INPUT_CHECK
    assert all(
        rec.status is PhaseStatus.NOT_STARTED for rec in state.phases.values()
    )
    assert state.axes.artifact == "pending"
    assert state.axes.technical == "unknown"
    assert (tmp_path / "run_state.json").exists()  # persisted before return


def test_init_twice_rejected(tmp_path):
    init_run(tmp_path, "full")
    with pytest.raises(AlreadyInitialized):
        init_run(tmp_path, "full")


def test_blueprint_only_skips_execution_phases(tmp_path):
    state = init_run(tmp_path, "blueprint_only")
    assert state.phase(Phase.P3_5_HYPOTHESIS).status is PhaseStatus.SKIPPED
    assert state.phase(Phase.P4_EXPERIMENT).status is PhaseStatus.SKIPPED
    with pytest.raises(OutOfOrder):
        start_phase(state, Phase.P4_EXPERIMENT, tmp_path)


def test_start_phase_requires_predecessors(tmp_path):
    state = init_run(tmp_path, "full")
    with pytest.raises(OutOfOrder):
        start_phase(state, Phase.P1_INGEST, tmp_path)


def test_one_phase_in_progress_at_a_time(tmp_path):
    state = init_run(tmp_path, "full")
    _write_inputs(tmp_path)
    start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    with pytest.raises(OutOfOrder):
        start_phase(state, Phase.P1_INGEST, tmp_path)
    complete_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    state = start_phase(state, Phase.P1_INGEST, tmp_path)
    assert state.phase(Phase.P1_INGEST).status is PhaseStatus.IN_PROGRESS


def test_complete_requires_gate_artifacts(tmp_path):
    state = init_run(tmp_path, "full")
    _write_inputs(tmp_path)
    start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    complete_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    start_phase(state, Phase.P1_INGEST, tmp_path)
    write_sidecar(tmp_path, "00", HUB)
    with pytest.raises(MissingArtifact) as err:
        complete_phase(state, Phase.P1_INGEST, tmp_path)
    assert err.value.slots == ["01"]
    write_sidecar(tmp_path, "01", INDEX)
    state = complete_phase(state, Phase.P1_INGEST, tmp_path)
    assert state.phase(Phase.P1_INGEST).status is PhaseStatus.COMPLETE


def test_complete_not_started_phase_is_a_contract_fault(tmp_path):
    state = init_run(tmp_path, "full")
    with pytest.raises(OutOfOrder):
        complete_phase(state, Phase.P2_ANALYZE, tmp_path)


def test_fail_then_retry_within_budget(tmp_path):
    state = init_run(tmp_path, "full")
    _write_inputs(tmp_path)
    start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    state = fail_phase(state, Phase.P0_INPUT_CHECK, "DATASET_UNAVAILABLE", tmp_path)
    assert state.phase(Phase.P0_INPUT_CHECK).status is PhaseStatus.FAILED
    assert state.phase(Phase.P0_INPUT_CHECK).blocker == "DATASET_UNAVAILABLE"
    assert state.phase(Phase.P0_INPUT_CHECK).retries_used == 1
    state = start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    assert state.phase(Phase.P0_INPUT_CHECK).status is PhaseStatus.IN_PROGRESS


def test_blocker_string_survives_reload(tmp_path):
    state = init_run(tmp_path, "full")
    start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    fail_phase(state, Phase.P0_INPUT_CHECK, "DATASET_UNAVAILABLE: s3 bucket 404", tmp_path)
    reloaded = load_state(tmp_path)
    assert (
        reloaded.phase(Phase.P0_INPUT_CHECK).blocker == "DATASET_UNAVAILABLE: s3 bucket 404"
    )


def test_retries_exhausted(tmp_path):
    policy = RunPolicy(retry_budget=2)
    state = init_run(tmp_path, "full")
    for _ in range(3):
        start_phase(state, Phase.P0_INPUT_CHECK, tmp_path, policy)
        fail_phase(state, Phase.P0_INPUT_CHECK, "boom", tmp_path)
    with pytest.raises(RetriesExhausted):
        start_phase(state, Phase.P0_INPUT_CHECK, tmp_path, policy)


def test_event_log_strictly_increasing(tmp_path):
    state = init_run(tmp_path, "full")
    _write_inputs(tmp_path)
    start_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    complete_phase(state, Phase.P0_INPUT_CHECK, tmp_path)
    reloaded = load_state(tmp_path)
    seqs = [e["seq"] for e in reloaded.events]
    assert seqs == list(range(1, len(seqs) + 1))


def test_get_status_is_read_only(tmp_path):
    state = init_run(tmp_path, "full")
    before = canonical_json(state.to_dict())
    snapshot = get_status(state)
    assert snapshot["current_phase"] == "P0_input_check"
    snapshot["phases"]["P0_input_check"]["status"] = "mangled"
    assert canonical_json(state.to_dict()) == before


def test_scientific_status_never_blocks(tmp_path):
    # every transition legal before setting scientific=investigate stays legal
    def run_transitions(mutate):
        state = init_run(tmp_path / ("a" if mutate else "b"), "full")
        run_dir = tmp_path / ("a" if mutate else "b")
        _write_inputs(run_dir)
        if mutate:
            state.axes.scientific = "investigate"
        log = []
        for phase, slots in [
            (Phase.P0_INPUT_CHECK, []),
            (Phase.P1_INGEST, [("00", HUB), ("01", INDEX)]),
            (Phase.P2_ANALYZE, [("02", PLAN), ("03", CONTRACT)]),
            (Phase.P3_BLUEPRINT, [("04", BLUEPRINT)]),
        ]:
            start_phase(state, phase, run_dir)
            for slot, payload in slots:
                write_sidecar(run_dir, slot, payload)
            complete_phase(state, phase, run_dir)
            log.append(state.phase(phase).status)
        return log

    assert run_transitions(mutate=True) == run_transitions(mutate=False)


# --- sidecar writer ---

def test_write_sidecar_emits_pair(tmp_path):
    mpath, hpath = write_sidecar(tmp_path, "00", HUB)
    assert mpath.exists() and hpath.exists()
    assert json.loads(mpath.read_text())["run_name"] == "r"
    assert hpath.read_text().startswith("# 00 paper hub")


def test_write_sidecar_schema_violation_touches_nothing(tmp_path):
    with pytest.raises(SchemaViolation):
        write_sidecar(tmp_path, "00", {"run_name": "r"})  # missing required keys
    assert list(tmp_path.iterdir()) == []


def test_mirror_regeneration_is_byte_identical(tmp_path):
    write_sidecar(tmp_path, "04", BLUEPRINT)
    assert mirror_matches(tmp_path, "04")
    payload = read_machine(tmp_path, "04")
    assert render_markdown("04", payload) == human_path(tmp_path, "04").read_text()


def test_ladder_log_jsonl_appends(tmp_path):
    entry = {
        "attempt": 1, "verdict": "PASS", "timestamp": 1, "config_digest": "x",
        "checks": [], "kind": "attempt",
    }
    append_ladder_entry(tmp_path, entry)
    append_ladder_entry(tmp_path, {**entry, "attempt": 2, "timestamp": 2})
    lines = machine_path(tmp_path, "06").read_text().strip().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["attempt"] == 1
    assert mirror_matches(tmp_path, "06")


# --- reconciliation ---

def _complete_through_p2(run_dir):
    _write_inputs(run_dir)
    write_sidecar(run_dir, "00", HUB)
    write_sidecar(run_dir, "01", INDEX)
    write_sidecar(run_dir, "02", PLAN)
    write_sidecar(run_dir, "03", CONTRACT)


def test_sync_reconstructs_from_artifacts(tmp_path):
    _complete_through_p2(tmp_path)
    state = sync_from_artifacts(tmp_path)
    assert state.phase(Phase.P1_INGEST).status is PhaseStatus.COMPLETE
    assert state.phase(Phase.P2_ANALYZE).status is PhaseStatus.COMPLETE
    assert state.current_phase() is Phase.P3_BLUEPRINT
    assert (tmp_path / "run_state.json").exists()


def test_sync_empty_directory_is_fresh_p0(tmp_path):
    state = sync_from_artifacts(tmp_path)
    assert state.current_phase() is Phase.P0_INPUT_CHECK
    assert all(
        rec.status in (PhaseStatus.NOT_STARTED, PhaseStatus.SKIPPED)
        for rec in state.phases.values()
    )


def test_sync_corrupt_artifact(tmp_path):
    _complete_through_p2(tmp_path)
    # corrupt a required field of 02
    payload = json.loads(machine_path(tmp_path, "02").read_text())
    del payload["bindings"]
    machine_path(tmp_path, "02").write_text(json.dumps(payload))
    with pytest.raises(CorruptArtifact) as err:
        sync_from_artifacts(tmp_path)
    assert err.value.slot == "02"
    state = load_state(tmp_path)  # persisted state reflects the gap
    assert state.phase(Phase.P2_ANALYZE).status is not PhaseStatus.COMPLETE
    assert state.current_phase() is Phase.P2_ANALYZE


def test_sync_respects_mode_from_inputs(tmp_path):
    _write_inputs(tmp_path, mode="blueprint_only")
    state = sync_from_artifacts(tmp_path)
    assert state.mode == "blueprint_only"
    assert state.phase(Phase.P4_EXPERIMENT).status is PhaseStatus.SKIPPED


def test_index_artifacts_reports_presence(tmp_path):
    write_sidecar(tmp_path, "00", HUB)
    index = index_artifacts(tmp_path)
    assert index["00"].present and not index["00"].corrupt
    assert not index["01"].present
    assert index["00"].schema_id.startswith("slotbench/")
    # machine artifact without its mirror is incomplete, not corrupt
    human_path(tmp_path, "00").unlink()
    index = index_artifacts(tmp_path)
    assert not index["00"].present and not index["00"].corrupt
