"""slotbench: a slot-binding reproduction harness.

Turns a declarative experiment binding into a validated, executable,
benchmark-comparable run: typed slot bindings checked against task
contracts, under-specified decisions tracked as assumption records,
execution gated behind a static + sanity verification ladder, attributable
failures repaired under a bounded budget, and results evaluated under
shared protocol semantics.
"""

from .binding import (
    BindingDiagnostics,
    BindingState,
    ComponentRef,
    ComponentRegistry,
    ResolvedConfiguration,
    TypecheckReport,
    classify_bindings,
    compose,
    descriptor,
    register_extension,
    typecheck,
)
from .config import parse_config, replay_trace, tree_diff
from .contracts import EvaluationUnit, SlotFamily, TargetSemantics, TaskContract, TaskKind
from .ledger import (
    EXHAUSTED,
    AssumptionLedger,
    AssumptionRecord,
    EvidenceRef,
    FrameworkDefaults,
    HyperparameterContract,
    SubstitutionAnnotation,
    attributable,
    impute,
    select_alternative,
    validate_contract,
)
from .policy import RunPolicy

__version__ = "0.1.0"
