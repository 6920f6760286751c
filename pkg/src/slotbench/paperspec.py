"""The paper-spec input document: claims, the nine-row hyperparameter table,
and the slot-binding plan, in one machine-readable file.

This file is what an operator hands to `validate-run`; it stands in for the
upstream paper-analysis stages so the deterministic substrate can run end to
end. JSON is the reference format; the YAML front end is accepted and
normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .config import Tree, parse_config
from .contracts import SlotFamily
from .evaluation import ClaimRecord
from .ledger import (
    HYPERPARAMETER_ROWS,
    NOT_SPECIFIED,
    AssumptionRecord,
    EvidenceRef,
)

FRAMEWORK_DATASETS = ("synthetic",)


@dataclass
class PaperSpec:
    name: str
    task_kind: str
    dataset: str
    binding: Tree
    hyperparameters: Tree
    claims: list[ClaimRecord] = field(default_factory=list)
    assumptions: list[AssumptionRecord] = field(default_factory=list)
    defaults: list[str] = field(default_factory=list)
    overrides: list[str] = field(default_factory=list)
    dataset_matches_framework: bool = True

    def base_tree(self) -> Tree:
        """The experiment tree this document authors (before composition)."""
        tree: Tree = {}
        for family, node in self.binding.items():
            tree[family] = dict(node)
        tree["hyperparameters"] = dict(self.hyperparameters)
        return tree

    def to_tree(self) -> Tree:
        return {
            "name": self.name,
            "task_kind": self.task_kind,
            "dataset": self.dataset,
            "dataset_matches_framework": self.dataset_matches_framework,
            "defaults": list(self.defaults),
            "overrides": list(self.overrides),
            "binding": self.binding,
            "hyperparameters": self.hyperparameters,
            "claims": [c.to_dict() for c in self.claims],
            "assumptions": [r.to_dict() for r in self.assumptions],
        }


def _parse_evidence(raw) -> EvidenceRef:
    if raw in (None, "absent"):
        return EvidenceRef.absent()
    if isinstance(raw, str):
        return EvidenceRef.span(raw)
    if raw.get("kind") == "absent":
        return EvidenceRef.absent()
    return EvidenceRef.span(raw.get("locator", ""))


def _parse_claim(raw: dict) -> ClaimRecord:
    return ClaimRecord(
        claim_id=str(raw["claim_id"]),
        metric=raw["metric"],
        comparator=raw["comparator"],
        value=raw.get("value"),
        baseline=raw.get("baseline"),
        tolerance=float(raw.get("tolerance", 0.10)),
        grain=raw.get("grain", "unit"),
    )


def _parse_assumption(raw: dict) -> AssumptionRecord:
    return AssumptionRecord(
        slot=SlotFamily(raw["slot"]),
        evidence=_parse_evidence(raw.get("evidence")),
        value=raw["value"],
        justification=raw.get("justification", ""),
        alternatives=list(raw.get("alternatives", [])),
    )


def parse_paper_spec(text: str) -> PaperSpec:
    tree = parse_config(text)
    for key in ("name", "task_kind", "dataset", "binding", "hyperparameters"):
        if key not in tree:
            raise ValueError(f"paper-spec is missing required key {key!r}")
    if tree["task_kind"] not in ("prognostics", "diagnostics"):
        raise ValueError(f"unknown task_kind {tree['task_kind']!r}")
    binding = tree["binding"]
    known = {f.value for f in SlotFamily}
    unknown = set(binding) - known
    if unknown:
        raise ValueError(f"binding names unknown slot families: {sorted(unknown)}")
    hp = dict(tree["hyperparameters"])
    for row in HYPERPARAMETER_ROWS:
        hp.setdefault(row, NOT_SPECIFIED)
    dataset = tree["dataset"]
    return PaperSpec(
        name=str(tree["name"]),
        task_kind=tree["task_kind"],
        dataset=dataset,
        binding=binding,
        hyperparameters=hp,
        claims=[_parse_claim(c) for c in tree.get("claims", [])],
        assumptions=[_parse_assumption(a) for a in tree.get("assumptions", [])],
        defaults=list(tree.get("defaults", [])),
        overrides=list(tree.get("overrides", [])),
        dataset_matches_framework=bool(
            tree.get("dataset_matches_framework", dataset in FRAMEWORK_DATASETS)
        ),
    )


def load_paper_spec(path: Path) -> PaperSpec:
    return parse_paper_spec(Path(path).read_text(encoding="utf-8"))
