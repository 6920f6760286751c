"""Numbered artifact vault: schema-validated JSON sidecars with Markdown mirrors.

Slots 00..08 each carry a machine-readable JSON (JSONL for the ladder log)
and a human-readable Markdown file rendered from the same payload by the
same writer, so the two views cannot diverge. Writes are atomic
(write-then-rename); regeneration from the machine form reproduces the human
form byte-identically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..config import canonical_json
from ..errors import CorruptArtifact, SchemaViolation

_HP_ROWS_SCHEMA = {
    "type": "object",
    "minProperties": 9,
}

SLOT_NAMES = {
    "00": "paper-hub",
    "01": "chunk-index",
    "02": "binding-plan",
    "03": "training-contract",
    "04": "blueprint",
    "05": "hypothesis",
    "06": "sanity-ladder-log",
    "07": "training-log",
    "08": "evaluation-report",
}

SLOT_SCHEMAS: dict[str, dict] = {
    "00": {
        "type": "object",
        "required": ["run_name", "task_kind", "dataset", "mode"],
        "properties": {"task_kind": {"enum": ["prognostics", "diagnostics"]}},
    },
    "01": {
        "type": "object",
        "required": ["sections"],
        "properties": {"sections": {"type": "array"}},
    },
    "02": {
        "type": "object",
        "required": ["bindings", "dataset_mapping"],
        "properties": {"bindings": {"type": "object"}},
    },
    "03": {
        "type": "object",
        "required": ["hyperparameters", "claims"],
        "properties": {"hyperparameters": _HP_ROWS_SCHEMA, "claims": {"type": "array"}},
    },
    "04": {
        "type": "object",
        "required": ["configuration", "binding_diagnostics", "run_matrix"],
        "properties": {
            "configuration": {"type": "object"},
            "run_matrix": {
                "type": "object",
                "required": ["seeds"],
                "properties": {"seeds": {"type": "array", "minItems": 1}},
            },
        },
    },
    "05": {
        "type": "object",
        "required": ["status", "claims"],
        "properties": {
            "status": {"enum": ["PRE_REGISTERED", "BENCHMARK_ONLY"]},
            "claims": {"type": "array"},
        },
    },
    "06": {  # per-line schema for the JSONL log
        "type": "object",
        "required": ["attempt", "verdict", "timestamp", "checks"],
        "properties": {"attempt": {"type": "integer", "minimum": 1}},
    },
    "07": {
        "type": "object",
        "required": ["seeds"],
        "properties": {"seeds": {"type": "array", "minItems": 1}},
    },
    "08": {
        "type": "object",
        "required": [
            "achieved_metrics",
            "claim_verdicts",
            "artifact_status",
            "technical_status",
            "scientific_status",
        ],
    },
}

JSONL_SLOTS = frozenset({"06"})


def machine_path(run_dir: Path, slot: str) -> Path:
    ext = "jsonl" if slot in JSONL_SLOTS else "json"
    return Path(run_dir) / f"{slot}-{SLOT_NAMES[slot]}.{ext}"


def human_path(run_dir: Path, slot: str) -> Path:
    return Path(run_dir) / f"{slot}-{SLOT_NAMES[slot]}.md"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# --- markdown rendering ----------------------------------------------------------


def _render_value(value, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(value, dict):
        # sorted everywhere: the rendering must be a pure function of payload
        # content, independent of in-memory construction order
        lines = []
        for key in sorted(value, key=str):
            sub = value[key]
            if isinstance(sub, (dict, list)):
                lines.append(f"{pad}- **{key}**:")
                lines.extend(_render_value(sub, indent + 1))
            else:
                lines.append(f"{pad}- **{key}**: {_scalar(sub)}")
        return lines
    if isinstance(value, list):
        if value and all(isinstance(item, dict) for item in value):
            return _render_table(value, indent)
        return [f"{pad}- {_scalar(item)}" for item in value] or [f"{pad}- (empty)"]
    return [f"{pad}- {_scalar(value)}"]


def _scalar(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_table(rows: list[dict], indent: int = 0) -> list[str]:
    pad = "  " * indent
    columns = sorted({key for row in rows for key in row}, key=str)
    lines = [
        pad + "| " + " | ".join(columns) + " |",
        pad + "| " + " | ".join("---" for _ in columns) + " |",
    ]
    for row in rows:
        cells = []
        for col in columns:
            cell = row.get(col, "")
            if isinstance(cell, (dict, list)):
                cell = json.dumps(cell, sort_keys=True)
            cells.append(_scalar(cell).replace("|", "\\|").replace("\n", " "))
        lines.append(pad + "| " + " | ".join(cells) + " |")
    return lines


def render_markdown(slot: str, payload) -> str:
    """Deterministic human mirror of a machine payload."""
    title = SLOT_NAMES[slot].replace("-", " ")
    lines = [f"# {slot} {title}", ""]
    if slot in JSONL_SLOTS:
        entries = payload if isinstance(payload, list) else [payload]
        for entry in entries:
            lines.append(f"## attempt {entry.get('attempt', '?')}")
            lines.extend(_render_value(entry))
            lines.append("")
    elif isinstance(payload, dict):
        for key in sorted(payload, key=str):
            lines.append(f"## {key}")
            lines.extend(_render_value(payload[key]))
            lines.append("")
    else:
        lines.extend(_render_value(payload))
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


# --- the writer -------------------------------------------------------------------


def validate_payload(slot: str, payload) -> None:
    schema = SLOT_SCHEMAS[slot]
    try:
        if slot in JSONL_SLOTS:
            for entry in payload if isinstance(payload, list) else [payload]:
                jsonschema.validate(entry, schema)
        else:
            jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"slot {slot}: {exc.message}") from exc


def write_sidecar(run_dir: Path, slot: str, payload) -> tuple[Path, Path]:
    """Validate, then emit the machine artifact and its human mirror.

    Nothing touches disk when validation fails. For the JSONL slot, payload
    is the full entry list and the file is rewritten wholesale.
    """
    if slot not in SLOT_NAMES:
        raise ValueError(f"unknown artifact slot {slot!r}")
    validate_payload(slot, payload)
    mpath, hpath = machine_path(run_dir, slot), human_path(run_dir, slot)
    if slot in JSONL_SLOTS:
        entries = payload if isinstance(payload, list) else [payload]
        machine_text = "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in entries
        )
    else:
        machine_text = canonical_json(payload)
    atomic_write(mpath, machine_text)
    atomic_write(hpath, render_markdown(slot, payload))
    return mpath, hpath


def append_ladder_entry(run_dir: Path, entry: dict) -> tuple[Path, Path]:
    """Append one attempt to the ladder log; prior lines are never rewritten."""
    validate_payload("06", entry)
    mpath = machine_path(run_dir, "06")
    existing = read_machine(run_dir, "06") if mpath.exists() else []
    line = json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n"
    with open(mpath, "a", encoding="utf-8") as handle:
        handle.write(line)
    atomic_write(human_path(run_dir, "06"), render_markdown("06", existing + [entry]))
    return mpath, human_path(run_dir, "06")


def read_machine(run_dir: Path, slot: str):
    """Parse and schema-validate a slot's machine artifact.

    Raises CorruptArtifact when the file exists but does not parse or does
    not validate.
    """
    path = machine_path(run_dir, slot)
    if not path.exists():
        raise FileNotFoundError(path)
    text = path.read_text(encoding="utf-8")
    try:
        if slot in JSONL_SLOTS:
            payload = [json.loads(line) for line in text.splitlines() if line.strip()]
        else:
            payload = json.loads(text)
        validate_payload(slot, payload)
    except (json.JSONDecodeError, SchemaViolation) as exc:
        raise CorruptArtifact(slot, str(exc)) from exc
    return payload


@dataclass
class SlotStatus:
    present: bool
    machine_path: str
    human_path: str
    schema_id: str
    corrupt: bool = False


def index_artifacts(run_dir: Path) -> dict[str, SlotStatus]:
    """Scan the vault: a slot is present when its machine form exists, parses,
    validates, and its human mirror exists."""
    index: dict[str, SlotStatus] = {}
    for slot in SLOT_NAMES:
        mpath, hpath = machine_path(run_dir, slot), human_path(run_dir, slot)
        present = False
        corrupt = False
        if mpath.exists():
            try:
                read_machine(run_dir, slot)
                present = hpath.exists()
            except CorruptArtifact:
                corrupt = True
        index[slot] = SlotStatus(
            present=present,
            machine_path=str(mpath.name),
            human_path=str(hpath.name),
            schema_id=f"slotbench/{SLOT_NAMES[slot]}/1",
            corrupt=corrupt,
        )
    return index


def mirror_matches(run_dir: Path, slot: str) -> bool:
    """True iff render(machine) equals the human file byte for byte."""
    payload = read_machine(run_dir, slot)
    rendered = render_markdown(slot, payload)
    return human_path(run_dir, slot).read_text(encoding="utf-8") == rendered


def clear_slot(run_dir: Path, slot: str) -> None:
    """Remove a slot's files (phase re-entry regenerates them from scratch)."""
    for path in (machine_path(run_dir, slot), human_path(run_dir, slot)):
        if path.exists():
            path.unlink()
