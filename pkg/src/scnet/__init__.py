"""Runtime enforcement of safe-ordering constraints on classifier logits.

The layer either proves the constraints active at an input unsatisfiable and
abstains, or minimally permutes the logit vector to satisfy them, keeping the
original top prediction whenever any satisfying output does.
"""

from .constraints import (
    And,
    ConstraintSet,
    LinearAtom,
    Or,
    OrderingLiteral,
    OrderingTerm,
    Precondition,
    SafeOrderingConstraint,
    TOP,
    active_postcondition,
    eval_formula,
    eval_pre,
    parse_constraints,
    serialize_constraints,
)
from .ordergraph import (
    NO_PATH,
    OrderGraph,
    aplp,
    aplp_batch,
    has_cycle,
    is_sat,
    max_distance_product,
    order_graph,
    roots,
)
from .sclayer import (
    BOTTOM,
    RepairConfig,
    RepairOutcome,
    prioritize,
    reorder,
    repair_not_maximal,
    self_repair,
    self_repair_batch,
    solve,
    to_dnf_lazy,
)
from .toposort import stable_topsort, stable_topsort_batch

__version__ = "0.1.0"

__all__ = [
    "And",
    "BOTTOM",
    "ConstraintSet",
    "LinearAtom",
    "NO_PATH",
    "Or",
    "OrderGraph",
    "OrderingLiteral",
    "OrderingTerm",
    "Precondition",
    "RepairConfig",
    "RepairOutcome",
    "SafeOrderingConstraint",
    "TOP",
    "active_postcondition",
    "aplp",
    "aplp_batch",
    "eval_formula",
    "eval_pre",
    "has_cycle",
    "is_sat",
    "max_distance_product",
    "order_graph",
    "parse_constraints",
    "prioritize",
    "reorder",
    "repair_not_maximal",
    "roots",
    "self_repair",
    "self_repair_batch",
    "serialize_constraints",
    "solve",
    "stable_topsort",
    "stable_topsort_batch",
    "to_dnf_lazy",
]
