"""Slot bindings: component registry, resolved configurations, typechecking.

A configuration tree binds each slot family to a component under its family
key (``{"model": {"component": "mlp", "hidden_widths": [16]}}``) plus a
``hyperparameters`` section holding the nine-row training contract.
Component descriptors declare their contract capabilities as data, so the
typechecker never introspects code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .config import (
    Tree,
    compose_tree,
    copy_tree,
    get_path,
    set_path,
    tree_digest,
)
from .contracts import ALL_FAMILIES, SlotFamily, TaskContract
from .errors import DuplicateComponent, RejectedDescriptor
from .ledger import HyperparameterContract, HyperparameterRow

# Transform routing keys are part of the slot interface, not of any one
# component's schema.
TRANSFORM_ROUTING_KEYS = frozenset({"fit_on", "apply_to", "assign_to"})

REQUIRED_CAPABILITIES: dict[SlotFamily, frozenset[str]] = {
    SlotFamily.TASK: frozenset({"task_kind", "target_semantics"}),
    SlotFamily.DATASOURCE: frozenset({"provides_splits"}),
    SlotFamily.TRANSFORM: frozenset({"supports_fit_on"}),
    SlotFamily.SEQUENCER: frozenset({"window_policy"}),
    SlotFamily.MODEL: frozenset({"prediction_shape", "target_semantics"}),
    SlotFamily.EVALUATOR: frozenset({"evaluation_units", "metrics"}),
}


@dataclass(frozen=True)
class ComponentRef:
    family: SlotFamily
    name: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise ValueError("component name must be nonempty")
        if "component" in self.parameters:
            raise ValueError("'component' is a reserved parameter key")


@dataclass(frozen=True)
class ComponentDescriptor:
    family: SlotFamily
    name: str
    parameters: frozenset
    capabilities: dict

    def validate(self) -> None:
        missing = REQUIRED_CAPABILITIES[self.family] - set(self.capabilities)
        if missing:
            raise RejectedDescriptor(
                f"{self.family.value}/{self.name} lacks capability "
                f"declaration(s): {', '.join(sorted(missing))}"
            )


def descriptor(
    family: SlotFamily | str,
    name: str,
    parameters: Sequence[str] = (),
    **capabilities,
) -> ComponentDescriptor:
    return ComponentDescriptor(
        family=SlotFamily(family),
        name=name,
        parameters=frozenset(parameters),
        capabilities=capabilities,
    )


class ComponentRegistry:
    """Immutable-by-convention map (family, name) -> descriptor + provenance."""

    def __init__(self, entries: Mapping | None = None):
        self._entries: dict[tuple[SlotFamily, str], dict] = dict(entries or {})

    def __contains__(self, key: tuple[SlotFamily, str]) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, family: SlotFamily, name: str) -> ComponentDescriptor | None:
        entry = self._entries.get((family, name))
        return entry["descriptor"] if entry else None

    def provenance(self, family: SlotFamily, name: str) -> str | None:
        entry = self._entries.get((family, name))
        return entry["provenance"] if entry else None

    def names(self, family: SlotFamily) -> list[str]:
        return sorted(n for (f, n) in self._entries if f is family)

    def add(
        self, desc: ComponentDescriptor, provenance: str = "pre_run"
    ) -> "ComponentRegistry":
        """Return a new registry with the entry added; the old value is untouched."""
        key = (desc.family, desc.name)
        if key in self._entries:
            raise DuplicateComponent(f"{desc.family.value}/{desc.name} already registered")
        desc.validate()
        entries = dict(self._entries)
        entries[key] = {"descriptor": desc, "provenance": provenance}
        return ComponentRegistry(entries)

    def to_manifest(self) -> dict:
        components = []
        for (fam, name) in sorted(self._entries, key=lambda k: (k[0].value, k[1])):
            entry = self._entries[(fam, name)]
            desc = entry["descriptor"]
            components.append(
                {
                    "family": fam.value,
                    "name": name,
                    "parameters": sorted(desc.parameters),
                    "capabilities": desc.capabilities,
                    "provenance": entry["provenance"],
                }
            )
        return {"components": components}

    @classmethod
    def from_manifest(cls, manifest: dict) -> "ComponentRegistry":
        registry = cls()
        for item in manifest["components"]:
            registry = registry.add(
                descriptor(
                    item["family"],
                    item["name"],
                    item["parameters"],
                    **item["capabilities"],
                ),
                provenance=item["provenance"],
            )
        return registry


def register_extension(
    registry: ComponentRegistry, desc: ComponentDescriptor
) -> ComponentRegistry:
    """Add a contract-preserving extension, flagged as created this run."""
    return registry.add(desc, provenance="created_this_run")


# --- resolved configuration ----------------------------------------------------


@dataclass
class ResolvedConfiguration:
    """The binding c: one component per slot family plus hyperparameters.

    The tree is the single source of truth for values; bindings and the
    hyperparameter contract are typed views derived from it. Hyperparameter
    provenance (paper vs imputed) lives beside the tree because the tree
    carries only values.
    """

    tree: Tree
    composition_trace: list = field(default_factory=list)
    hyperparameter_sources: dict = field(default_factory=dict)

    def bindings(self) -> dict[SlotFamily, ComponentRef]:
        bound = {}
        for family in ALL_FAMILIES:
            node = self.tree.get(family.value)
            if isinstance(node, Mapping) and isinstance(node.get("component"), str):
                params = {k: v for k, v in node.items() if k != "component"}
                bound[family] = ComponentRef(family, node["component"], params)
        return bound

    def hyperparameters(self) -> HyperparameterContract:
        section = self.tree.get("hyperparameters", {})
        rows = {
            name: HyperparameterRow(
                value=value, source=self.hyperparameter_sources.get(name, "paper")
            )
            for name, value in section.items()
        }
        return HyperparameterContract(rows=rows)

    def digest(self) -> str:
        return tree_digest(self.tree)

    def get(self, path: str, default=None):
        return get_path(self.tree, path, default)

    def with_patch(self, path: str, value, kind: str = "repair") -> "ResolvedConfiguration":
        """Return a copy with exactly one leaf changed and the trace extended."""
        from .ledger import format_assignment

        tree = copy_tree(self.tree)
        set_path(tree, path, value, create=False)
        trace = list(self.composition_trace)
        trace.append({"kind": kind, "ref": format_assignment(path, value)})
        return ResolvedConfiguration(
            tree=tree,
            composition_trace=trace,
            hyperparameter_sources=dict(self.hyperparameter_sources),
        )


def compose(
    base: Tree,
    defaults: Sequence = (),
    overrides: Sequence[str] = (),
    documents: Mapping[str, Tree] | None = None,
) -> ResolvedConfiguration:
    """Layered merge producing a ResolvedConfiguration with its trace."""
    tree, trace = compose_tree(base, defaults, overrides, documents)
    return ResolvedConfiguration(tree=tree, composition_trace=trace)


# --- typecheck -----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    family: SlotFamily | None
    rule_id: str
    message: str


@dataclass
class TypecheckReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def implicated_families(self) -> set[SlotFamily]:
        return {v.family for v in self.violations if v.family is not None}

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [
                {
                    "family": v.family.value if v.family else None,
                    "rule_id": v.rule_id,
                    "message": v.message,
                }
                for v in self.violations
            ],
        }


def typecheck(
    config: ResolvedConfiguration,
    registry: ComponentRegistry,
    contract: TaskContract,
) -> TypecheckReport:
    """Audit a composed configuration against the task contract.

    All problems are report entries; nothing raises. Unbound families are
    the completion check's concern (classify_bindings), not a type error.
    """
    violations: list[Violation] = []
    allowed_top = {f.value for f in ALL_FAMILIES} | {"hyperparameters"}
    for key in config.tree:
        if key not in allowed_top:
            violations.append(
                Violation(None, "unknown_key", f"unknown top-level key {key!r}")
            )

    bindings = config.bindings()
    for family in ALL_FAMILIES:
        node = config.tree.get(family.value)
        if node is None:
            continue
        if family not in bindings:
            violations.append(
                Violation(
                    family,
                    "malformed_binding",
                    f"{family.value} binding must be a mapping with a 'component' name",
                )
            )
            continue
        ref = bindings[family]
        desc = registry.get(family, ref.name)
        if desc is None:
            violations.append(
                Violation(
                    family,
                    "unknown_component",
                    f"no registered {family.value} component named {ref.name!r}",
                )
            )
            continue
        allowed = set(desc.parameters)
        if family is SlotFamily.TRANSFORM:
            allowed |= TRANSFORM_ROUTING_KEYS
        for param in ref.parameters:
            if param not in allowed:
                violations.append(
                    Violation(
                        family,
                        "unknown_parameter",
                        f"{family.value}/{ref.name} has no parameter {param!r}",
                    )
                )
        violations.extend(_capability_check(family, ref, desc, contract))
    return TypecheckReport(violations=violations)


def _capability_check(
    family: SlotFamily,
    ref: ComponentRef,
    desc: ComponentDescriptor,
    contract: TaskContract,
) -> list[Violation]:
    caps = desc.capabilities
    out: list[Violation] = []
    if family is SlotFamily.TASK:
        if caps.get("task_kind") != contract.task_kind.value or caps.get(
            "target_semantics"
        ) != contract.target_semantics.value:
            out.append(
                Violation(
                    family,
                    "contract_mismatch",
                    f"task {ref.name!r} declares "
                    f"{caps.get('task_kind')}/{caps.get('target_semantics')}, contract "
                    f"requires {contract.task_kind.value}/{contract.target_semantics.value}",
                )
            )
    elif family is SlotFamily.MODEL:
        shape = caps.get("prediction_shape")
        if not (isinstance(shape, (list, tuple)) and len(shape) == 3 and shape[1] == 1):
            out.append(
                Violation(
                    family,
                    "contract_mismatch",
                    f"model {ref.name!r} prediction_shape {shape!r} is not (B, 1, K)",
                )
            )
        if contract.target_semantics.value not in caps.get("target_semantics", []):
            out.append(
                Violation(
                    family,
                    "contract_mismatch",
                    f"model {ref.name!r} does not support "
                    f"{contract.target_semantics.value} targets",
                )
            )
    elif family is SlotFamily.EVALUATOR:
        if contract.evaluation_unit.value not in caps.get("evaluation_units", []):
            out.append(
                Violation(
                    family,
                    "grain_unsupported",
                    f"evaluator {ref.name!r} does not support "
                    f"{contract.evaluation_unit.value}-grain evaluation",
                )
            )
    elif family is SlotFamily.TRANSFORM:
        fit_on = ref.parameters.get("fit_on")
        if fit_on is None:
            out.append(
                Violation(
                    family,
                    "leakage_decl_missing",
                    f"transform {ref.name!r} declares no fit_on split",
                )
            )
        elif fit_on != "train" or "train" not in caps.get("supports_fit_on", []):
            out.append(
                Violation(
                    family,
                    "leakage_decl_invalid",
                    f"transform {ref.name!r} must fit on the train split only, "
                    f"declared {fit_on!r}",
                )
            )
    return out


# --- binding classification -----------------------------------------------------


class BindingState(str, Enum):
    CREATED = "Created"
    EXISTING = "Existing"
    MISSING = "Missing"


@dataclass
class BindingDiagnostics:
    per_family_state: dict[SlotFamily, BindingState]

    @property
    def complete(self) -> bool:
        return all(
            state is not BindingState.MISSING
            for state in self.per_family_state.values()
        )

    def to_dict(self) -> dict:
        return {
            "per_family_state": {
                fam.value: state.value for fam, state in self.per_family_state.items()
            },
            "complete": self.complete,
        }


def classify_bindings(
    config: ResolvedConfiguration, registry: ComponentRegistry
) -> BindingDiagnostics:
    """Created / Existing / Missing per slot family, from registry provenance."""
    bindings = config.bindings()
    states: dict[SlotFamily, BindingState] = {}
    for family in ALL_FAMILIES:
        ref = bindings.get(family)
        if ref is None:
            states[family] = BindingState.MISSING
            continue
        provenance = registry.provenance(family, ref.name)
        if provenance == "created_this_run":
            states[family] = BindingState.CREATED
        elif provenance == "pre_run":
            states[family] = BindingState.EXISTING
        else:
            states[family] = BindingState.MISSING
    return BindingDiagnostics(per_family_state=states)
