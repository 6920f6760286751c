"""The single authoritative run state: phase machine, status axes, recovery.

run_state.json is replaced atomically on every transition; recovery is pure
reconciliation (sync_from_artifacts) against what exists on disk. The three
status axes stay strictly separate — artifact and technical can block
progress, scientific never does. One writer per run directory, enforced by
an advisory lock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from filelock import FileLock

from ..config import canonical_json
from ..errors import (
    AlreadyInitialized,
    CorruptArtifact,
    MissingArtifact,
    NotARun,
    OutOfOrder,
    RetriesExhausted,
)
from ..policy import RunPolicy
from .artifacts import atomic_write, index_artifacts

STATE_FILE = "run_state.json"
INPUTS_FILE = "inputs.json"
STATE_SCHEMA_VERSION = "slotbench/run-state/1"


class Phase(str, Enum):
    P0_INPUT_CHECK = "P0_input_check"
    P1_INGEST = "P1_ingest"
    P2_ANALYZE = "P2_analyze"
    P3_BLUEPRINT = "P3_blueprint"
    P3_5_HYPOTHESIS = "P3_5_hypothesis"
    P4_EXPERIMENT = "P4_experiment"


PHASE_ORDER: tuple[Phase, ...] = tuple(Phase)

MODES = ("blueprint_only", "quick", "full")

# phases a run mode never executes
MODE_SKIPS: dict[str, frozenset] = {
    "blueprint_only": frozenset({Phase.P3_5_HYPOTHESIS, Phase.P4_EXPERIMENT}),
    "quick": frozenset(),
    "full": frozenset(),
}


class PhaseStatus(str, Enum):
    NOT_STARTED = "not_started"
    IN_PROGRESS = "in_progress"
    COMPLETE = "complete"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass
class StatusAxes:
    # artifact and technical may block progress; scientific never gates
    artifact: str = "pending"     # pending | complete | incomplete
    technical: str = "unknown"    # unknown | runnable | failed
    scientific: str = "unknown"   # unknown | validated | plausible | investigate | benchmark_only

    def to_dict(self) -> dict:
        return {
            "artifact": self.artifact,
            "technical": self.technical,
            "scientific": self.scientific,
        }


@dataclass
class PhaseRecord:
    status: PhaseStatus = PhaseStatus.NOT_STARTED
    retries_used: int = 0
    blocker: str | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "retries_used": self.retries_used,
            "blocker": self.blocker,
        }


@dataclass
class RunState:
    run_id: str
    mode: str
    phases: dict[Phase, PhaseRecord] = field(default_factory=dict)
    axes: StatusAxes = field(default_factory=StatusAxes)
    last_event_sequence: int = 0
    events: list[dict] = field(default_factory=list)

    def phase(self, phase: Phase) -> PhaseRecord:
        return self.phases[phase]

    def skipped(self, phase: Phase) -> bool:
        return phase in MODE_SKIPS.get(self.mode, frozenset())

    def active_phases(self) -> list[Phase]:
        return [p for p in PHASE_ORDER if not self.skipped(p)]

    def current_phase(self) -> Phase | None:
        """First non-skipped phase that is not complete; None when done."""
        for phase in self.active_phases():
            if self.phases[phase].status is not PhaseStatus.COMPLETE:
                return phase
        return None

    def in_progress_phase(self) -> Phase | None:
        for phase in PHASE_ORDER:
            if self.phases[phase].status is PhaseStatus.IN_PROGRESS:
                return phase
        return None

    def record_event(self, event: str, phase: Phase | None = None, detail: str = "") -> None:
        self.last_event_sequence += 1
        self.events.append(
            {
                "seq": self.last_event_sequence,
                "event": event,
                "phase": phase.value if phase else None,
                "detail": detail,
            }
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": STATE_SCHEMA_VERSION,
            "run_id": self.run_id,
            "mode": self.mode,
            "phases": {p.value: self.phases[p].to_dict() for p in PHASE_ORDER},
            "axes": self.axes.to_dict(),
            "last_event_sequence": self.last_event_sequence,
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunState":
        phases = {
            Phase(name): PhaseRecord(
                status=PhaseStatus(rec["status"]),
                retries_used=rec["retries_used"],
                blocker=rec.get("blocker"),
            )
            for name, rec in data["phases"].items()
        }
        axes = StatusAxes(**data["axes"])
        return cls(
            run_id=data["run_id"],
            mode=data["mode"],
            phases=phases,
            axes=axes,
            last_event_sequence=data["last_event_sequence"],
            events=list(data.get("events", [])),
        )


def state_path(run_dir: Path) -> Path:
    return Path(run_dir) / STATE_FILE


def save_state(run_dir: Path, state: RunState) -> None:
    atomic_write(state_path(run_dir), canonical_json(state.to_dict()))


def load_state(run_dir: Path) -> RunState:
    path = state_path(run_dir)
    if not path.exists():
        raise NotARun(f"{run_dir} holds no {STATE_FILE}")
    return RunState.from_dict(json.loads(path.read_text(encoding="utf-8")))


def run_lock(run_dir: Path) -> FileLock:
    """Advisory exclusive lock: one orchestrating process per run directory."""
    return FileLock(str(Path(run_dir) / ".run.lock"))


def _fresh_phases(mode: str) -> dict[Phase, PhaseRecord]:
    skips = MODE_SKIPS.get(mode, frozenset())
    return {
        phase: PhaseRecord(
            status=PhaseStatus.SKIPPED if phase in skips else PhaseStatus.NOT_STARTED
        )
        for phase in PHASE_ORDER
    }


def init_run(run_dir: Path, mode: str, run_id: str = "run") -> RunState:
    """Create and persist a fresh state; the directory must not hold one."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    run_dir = Path(run_dir)
    if state_path(run_dir).exists():
        raise AlreadyInitialized(f"{run_dir} already holds a run state")
    run_dir.mkdir(parents=True, exist_ok=True)
    state = RunState(run_id=run_id, mode=mode, phases=_fresh_phases(mode))
    state.record_event("init_run", detail=mode)
    save_state(run_dir, state)
    return state


def start_phase(state: RunState, phase: Phase, run_dir: Path, policy: RunPolicy | None = None) -> RunState:
    policy = policy or RunPolicy()
    record = state.phase(phase)
    if state.skipped(phase):
        raise OutOfOrder(f"{phase.value} is skipped in mode {state.mode}")
    active = state.in_progress_phase()
    if active is not None:
        raise OutOfOrder(f"{active.value} is still in progress")
    for predecessor in state.active_phases():
        if predecessor is phase:
            break
        if state.phase(predecessor).status is not PhaseStatus.COMPLETE:
            raise OutOfOrder(
                f"cannot start {phase.value}: {predecessor.value} is "
                f"{state.phase(predecessor).status.value}"
            )
    if record.status is PhaseStatus.COMPLETE:
        raise OutOfOrder(f"{phase.value} is already complete")
    if record.status is PhaseStatus.FAILED and record.retries_used > policy.retry_budget:
        raise RetriesExhausted(
            f"{phase.value} failed {record.retries_used} time(s); budget is "
            f"{policy.retry_budget} retries"
        )
    record.status = PhaseStatus.IN_PROGRESS
    state.record_event("start_phase", phase)
    save_state(run_dir, state)
    return state


def complete_phase(
    state: RunState,
    phase: Phase,
    run_dir: Path,
    policy: RunPolicy | None = None,
) -> RunState:
    """Close a phase; its gate artifacts must be present and schema-valid."""
    policy = policy or RunPolicy()
    record = state.phase(phase)
    if record.status is not PhaseStatus.IN_PROGRESS:
        raise OutOfOrder(f"cannot complete {phase.value}: it is {record.status.value}")
    missing = _missing_slots(run_dir, policy.required_slots(phase.value))
    if missing:
        raise MissingArtifact(missing)
    record.status = PhaseStatus.COMPLETE
    record.blocker = None
    state.record_event("complete_phase", phase)
    if all(
        state.phase(p).status is PhaseStatus.COMPLETE for p in state.active_phases()
    ):
        state.axes.artifact = "complete"
    save_state(run_dir, state)
    return state


def fail_phase(state: RunState, phase: Phase, named_blocker: str, run_dir: Path) -> RunState:
    record = state.phase(phase)
    if record.status is not PhaseStatus.IN_PROGRESS:
        raise OutOfOrder(f"cannot fail {phase.value}: it is {record.status.value}")
    record.status = PhaseStatus.FAILED
    record.blocker = named_blocker
    record.retries_used += 1
    state.record_event("fail_phase", phase, detail=named_blocker)
    save_state(run_dir, state)
    return state


def _missing_slots(run_dir: Path, required: list[str]) -> list[str]:
    index = index_artifacts(run_dir)
    missing = []
    for slot in required:
        if slot == "inputs":
            if not (Path(run_dir) / INPUTS_FILE).exists():
                missing.append("inputs")
        elif not index[slot].present:
            missing.append(slot)
    return missing


def read_inputs(run_dir: Path) -> dict:
    path = Path(run_dir) / INPUTS_FILE
    if not path.exists():
        raise NotARun(f"{run_dir} holds no {INPUTS_FILE}")
    return json.loads(path.read_text(encoding="utf-8"))


def sync_from_artifacts(
    run_dir: Path, policy: RunPolicy | None = None, strict: bool = True
) -> RunState:
    """Reconcile the control plane with whatever artifacts exist.

    A phase is complete iff every artifact its gate requires exists and
    parses against its schema; the first unmet phase becomes current. The
    reconstructed state is persisted. In strict mode a schema-invalid
    artifact raises CorruptArtifact (after persisting a state in which its
    phase is not complete).
    """
    policy = policy or RunPolicy()
    run_dir = Path(run_dir)
    inputs_path = run_dir / INPUTS_FILE
    if state_path(run_dir).exists():
        prior = load_state(run_dir)
        mode, run_id = prior.mode, prior.run_id
        events, last_seq = prior.events, prior.last_event_sequence
        axes = prior.axes
    elif inputs_path.exists():
        manifest = read_inputs(run_dir)
        mode, run_id = manifest.get("mode", "full"), manifest.get("run_id", "run")
        events, last_seq = [], 0
        axes = StatusAxes()
    elif any(run_dir.glob("0*-*.json")):
        mode, run_id, events, last_seq = "full", "run", [], 0
        axes = StatusAxes()
    else:
        # nothing on disk at all: a fresh pre-P0 state
        mode, run_id, events, last_seq = "full", "run", [], 0
        axes = StatusAxes()

    index = index_artifacts(run_dir)
    corrupt_slot: str | None = None
    state = RunState(
        run_id=run_id,
        mode=mode,
        phases=_fresh_phases(mode),
        axes=StatusAxes(scientific=axes.scientific),
        events=events,
        last_event_sequence=last_seq,
    )
    gates_met = True
    for phase in state.active_phases():
        required = policy.required_slots(phase.value)
        satisfied = True
        for slot in required:
            if slot == "inputs":
                satisfied = satisfied and inputs_path.exists()
            else:
                if index[slot].corrupt and corrupt_slot is None:
                    corrupt_slot = slot
                satisfied = satisfied and index[slot].present
        if gates_met and satisfied:
            state.phases[phase].status = PhaseStatus.COMPLETE
        else:
            gates_met = False
    if all(
        state.phase(p).status is PhaseStatus.COMPLETE for p in state.active_phases()
    ):
        state.axes.artifact = "complete"
        state.axes.technical = axes.technical
    state.record_event("sync_from_artifacts", detail=f"current={state.current_phase()}")
    save_state(run_dir, state)
    if strict and corrupt_slot is not None:
        raise CorruptArtifact(corrupt_slot, "schema-invalid during reconciliation")
    return state


def get_status(state: RunState) -> dict:
    """Read-only snapshot; never mutates the state."""
    current = state.current_phase()
    return {
        "run_id": state.run_id,
        "mode": state.mode,
        "current_phase": current.value if current else None,
        "phases": {p.value: state.phases[p].to_dict() for p in PHASE_ORDER},
        "axes": state.axes.to_dict(),
        "last_event_sequence": state.last_event_sequence,
    }
