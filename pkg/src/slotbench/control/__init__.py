"""Control plane: run-state machine and the schema-validated artifact vault."""

from .artifacts import (
    JSONL_SLOTS,
    SLOT_NAMES,
    SLOT_SCHEMAS,
    append_ladder_entry,
    clear_slot,
    human_path,
    index_artifacts,
    machine_path,
    mirror_matches,
    read_machine,
    render_markdown,
    write_sidecar,
)
from .runstate import (
    INPUTS_FILE,
    MODE_SKIPS,
    MODES,
    PHASE_ORDER,
    Phase,
    PhaseRecord,
    PhaseStatus,
    RunState,
    StatusAxes,
    complete_phase,
    fail_phase,
    get_status,
    init_run,
    load_state,
    read_inputs,
    run_lock,
    save_state,
    start_phase,
    state_path,
    sync_from_artifacts,
)

__all__ = [
    "JSONL_SLOTS", "SLOT_NAMES", "SLOT_SCHEMAS", "append_ladder_entry",
    "clear_slot", "human_path", "index_artifacts", "machine_path",
    "mirror_matches", "read_machine", "render_markdown", "write_sidecar",
    "INPUTS_FILE", "MODE_SKIPS", "MODES", "PHASE_ORDER", "Phase",
    "PhaseRecord", "PhaseStatus", "RunState", "StatusAxes", "complete_phase",
    "fail_phase", "get_status", "init_run", "load_state", "read_inputs",
    "run_lock", "save_state", "start_phase", "state_path", "sync_from_artifacts",
]
