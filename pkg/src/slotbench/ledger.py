"""Assumption ledger and the nine-row training-hyperparameter contract.

Every implementation decision the source paper leaves under-specified is
recorded as an auditable assumption: which slot it concerns, the evidence
span (or an explicit absence-of-evidence marker), the value chosen, why,
and the ordered alternative values the repair loop may substitute later.

Values that should be patchable by the repair loop are written as
root-relative assignment strings, e.g. ``sequencer.length=32`` or
``hyperparameters.learning_rate=0.001``. Bare values are legal but cannot
be turned into configuration patches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .config import parse_scalar
from .contracts import SlotFamily
from .errors import MissingDefault

NOT_SPECIFIED = "NOT_SPECIFIED"

HYPERPARAMETER_ROWS: tuple[str, ...] = (
    "optimizer",
    "learning_rate",
    "lr_schedule",
    "weight_decay",
    "grad_clip",
    "warmup",
    "max_epochs",
    "batch_size",
    "training_protocol_notes",
)

# Rows with a defined null-default: imputable even when the framework
# defaults document carries no value for them.
NULL_DEFAULTS = {
    "grad_clip": None,
    "warmup": "none",
    "training_protocol_notes": "none recorded",
}

# Anything on this list (case-insensitive) is a placeholder, not a value.
_PLACEHOLDERS = frozenset(
    {"", "tbd", "todo", "?", "???", "unknown", "n/a", "na", "missing",
     "unspecified", "not specified", "not_specified", "none given", "placeholder"}
)


class _Exhausted:
    def __repr__(self) -> str:
        return "EXHAUSTED"


#: Returned by :func:`select_alternative` once every alternative has been used.
EXHAUSTED = _Exhausted()


def format_assignment(path: str, value) -> str:
    """Render a patchable ``path=value`` assignment string."""
    if isinstance(value, str) and parse_scalar(value) == value:
        rendered = value
    else:
        rendered = json.dumps(value)
    return f"{path}={rendered}"


def parse_assignment(value) -> tuple[str, object] | None:
    """Split an assignment-form value into (path, value); None for bare values."""
    if not isinstance(value, str) or "=" not in value:
        return None
    path, raw = value.split("=", 1)
    path = path.strip()
    if not path or " " in path:
        return None
    return path, parse_scalar(raw.strip())


@dataclass(frozen=True)
class EvidenceRef:
    """Pointer to the paper span backing a decision, or an explicit absence."""

    kind: str  # "span" | "absent"
    locator: str = ""

    def __post_init__(self):
        if self.kind not in ("span", "absent"):
            raise ValueError(f"evidence kind must be span|absent, got {self.kind!r}")
        if self.kind == "absent" and self.locator:
            raise ValueError("absent evidence must have an empty locator")

    @classmethod
    def span(cls, locator: str) -> "EvidenceRef":
        return cls("span", locator)

    @classmethod
    def absent(cls) -> "EvidenceRef":
        return cls("absent")


@dataclass
class AssumptionRecord:
    slot: SlotFamily
    evidence: EvidenceRef
    value: object
    justification: str
    alternatives: list = field(default_factory=list)
    attempts_used: int = 0
    record_id: int = -1

    def patch_target(self) -> tuple[str, object] | None:
        return parse_assignment(self.value)

    def exhausted(self) -> bool:
        return self.attempts_used >= len(self.alternatives)

    def peek_alternative(self):
        if self.exhausted():
            return EXHAUSTED
        return self.alternatives[self.attempts_used]

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "slot": self.slot.value,
            "evidence": {"kind": self.evidence.kind, "locator": self.evidence.locator},
            "value": self.value,
            "justification": self.justification,
            "alternatives": list(self.alternatives),
            "attempts_used": self.attempts_used,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AssumptionRecord":
        return cls(
            slot=SlotFamily(data["slot"]),
            evidence=EvidenceRef(data["evidence"]["kind"], data["evidence"]["locator"]),
            value=data["value"],
            justification=data["justification"],
            alternatives=list(data["alternatives"]),
            attempts_used=data["attempts_used"],
            record_id=data["record_id"],
        )


class AssumptionLedger:
    """Append-only, insertion-ordered collection of assumption records."""

    def __init__(self):
        self._records: list[AssumptionRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[AssumptionRecord]:
        return iter(self._records)

    def __getitem__(self, record_id: int) -> AssumptionRecord:
        return self._records[record_id]

    def record(
        self,
        slot: SlotFamily | str,
        evidence: EvidenceRef,
        value,
        justification: str,
        alternatives: Iterable = (),
    ) -> AssumptionRecord:
        rec = AssumptionRecord(
            slot=SlotFamily(slot),
            evidence=evidence,
            value=value,
            justification=justification,
            alternatives=list(alternatives),
            attempts_used=0,
            record_id=len(self._records),
        )
        self._records.append(rec)
        return rec

    def append_record(self, rec: AssumptionRecord) -> AssumptionRecord:
        rec.record_id = len(self._records)
        self._records.append(rec)
        return rec

    # --- persistence (JSON lines, one record per line) ---

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
            for rec in self._records
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "AssumptionLedger":
        ledger = cls()
        for line in text.splitlines():
            if line.strip():
                ledger._records.append(AssumptionRecord.from_dict(json.loads(line)))
        return ledger

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "AssumptionLedger":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def attributable(record: AssumptionRecord, implicated_slots) -> bool:
    """A record is attributable to a failure iff its slot is implicated."""
    slots = {SlotFamily(s) for s in implicated_slots}
    return record.slot in slots


def select_alternative(record: AssumptionRecord):
    """Consume the next alternative in declared order.

    Returns (value, record) with attempts_used advanced, or EXHAUSTED once
    every alternative has been tried. Consumed alternatives are never
    revisited.
    """
    if record.exhausted():
        return EXHAUSTED
    value = record.alternatives[record.attempts_used]
    record.attempts_used += 1
    return value, record


# --- the nine-row hyperparameter contract --------------------------------------


@dataclass
class HyperparameterRow:
    value: object
    source: str  # "paper" | "imputed"

    def to_dict(self) -> dict:
        return {"value": self.value, "source": self.source}


@dataclass
class HyperparameterContract:
    """Exactly nine named rows; a value is concrete or the literal NOT_SPECIFIED."""

    rows: dict[str, HyperparameterRow]

    @classmethod
    def from_tree(cls, tree: dict) -> "HyperparameterContract":
        rows = {}
        for name in HYPERPARAMETER_ROWS:
            if name in tree:
                rows[name] = HyperparameterRow(value=tree[name], source="paper")
        # unknown rows are preserved so validate_contract can flag them
        for name in tree:
            if name not in rows:
                rows[name] = HyperparameterRow(value=tree[name], source="paper")
        return cls(rows=rows)

    def to_tree(self) -> dict:
        return {name: row.value for name, row in self.rows.items()}

    def to_dict(self) -> dict:
        return {name: row.to_dict() for name, row in self.rows.items()}

    def value(self, name: str, default=None):
        row = self.rows.get(name)
        if row is None or row.value == NOT_SPECIFIED:
            return default
        return row.value

    def not_specified_rows(self) -> list[str]:
        return [
            name
            for name in HYPERPARAMETER_ROWS
            if name in self.rows and self.rows[name].value == NOT_SPECIFIED
        ]


def _is_placeholder(value) -> bool:
    # None is a concrete value (grad_clip's defined null), not a placeholder
    if isinstance(value, str):
        if value == NOT_SPECIFIED:
            return False
        return value.strip().lower() in _PLACEHOLDERS
    return False


def validate_contract(table: HyperparameterContract) -> list[tuple[str, str]]:
    """Empty iff all nine rows are present with a concrete value or the
    literal NOT_SPECIFIED. Violations are (kind, row_name) pairs."""
    violations: list[tuple[str, str]] = []
    for name in HYPERPARAMETER_ROWS:
        if name not in table.rows:
            violations.append(("missing_row", name))
        elif _is_placeholder(table.rows[name].value):
            violations.append(("placeholder_value", name))
    for name in table.rows:
        if name not in HYPERPARAMETER_ROWS:
            violations.append(("unknown_row", name))
    return violations


@dataclass(frozen=True)
class SubstitutionAnnotation:
    """Provenance of one imputed row, rendered as a substitution comment."""

    row_name: str
    imputed_value: object
    default_source: str

    def render(self) -> str:
        value = "null" if self.imputed_value is None else self.imputed_value
        return (
            f"# SUBSTITUTION: {self.row_name}={NOT_SPECIFIED} -> "
            f"{value} from {self.default_source}"
        )


@dataclass(frozen=True)
class FrameworkDefaults:
    """The framework default catalog consulted when imputing omitted rows."""

    name: str
    values: dict
    sources: dict
    alternatives: dict

    def source_for(self, row: str) -> str:
        return self.sources.get(row, self.name)


def impute(
    table: HyperparameterContract,
    defaults: FrameworkDefaults,
    ledger: AssumptionLedger | None = None,
) -> tuple[HyperparameterContract, list[SubstitutionAnnotation], list[AssumptionRecord]]:
    """Replace every NOT_SPECIFIED row with the framework default.

    Paper-stated rows are untouched. One substitution annotation and one
    assumption record are produced per replacement; records are appended to
    `ledger` when one is given. Idempotent: a second pass finds nothing to
    replace.
    """
    assert not validate_contract(table), "impute requires a valid contract"
    patched_rows = dict(table.rows)
    annotations: list[SubstitutionAnnotation] = []
    records: list[AssumptionRecord] = []
    for row_name in table.not_specified_rows():
        if row_name in defaults.values:
            value = defaults.values[row_name]
            source = defaults.source_for(row_name)
        elif row_name in NULL_DEFAULTS:
            value = NULL_DEFAULTS[row_name]
            source = f"{defaults.name} (no default set; defined null-default)"
        else:
            raise MissingDefault(
                f"no framework default or null-default for row {row_name!r}"
            )
        patched_rows[row_name] = HyperparameterRow(value=value, source="imputed")
        annotations.append(
            SubstitutionAnnotation(
                row_name=row_name, imputed_value=value, default_source=source
            )
        )
        alts = [
            format_assignment(f"hyperparameters.{row_name}", alt)
            for alt in defaults.alternatives.get(row_name, [])
            if alt != value
        ]
        rec = AssumptionRecord(
            slot=SlotFamily.MODEL,
            evidence=EvidenceRef.absent(),
            value=format_assignment(f"hyperparameters.{row_name}", value),
            justification=f"{row_name} not stated; imputed from {source}",
            alternatives=alts,
        )
        if ledger is not None:
            ledger.append_record(rec)
        records.append(rec)
    return HyperparameterContract(rows=patched_rows), annotations, records


def render_ledger_markdown(ledger: AssumptionLedger) -> str:
    """Markdown table mirror of the ledger, one row per record."""
    lines = [
        "| id | slot | evidence | value | attempts | alternatives | justification |",
        "| --- | --- | --- | --- | --- | --- | --- |",
    ]
    for rec in ledger:
        evidence = rec.evidence.locator if rec.evidence.kind == "span" else "(absent)"
        alts = "; ".join(str(a) for a in rec.alternatives) or "-"
        lines.append(
            f"| {rec.record_id} | {rec.slot.value} | {evidence} | {rec.value} "
            f"| {rec.attempts_used}/{len(rec.alternatives)} | {alts} | {rec.justification} |"
        )
    return "\n".join(lines) + "\n"
