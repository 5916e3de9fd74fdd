"""Safe-ordering constraints: data model, evaluation, and JSON wire format.

A constraint pairs a *precondition* over the input vector (a conjunction of
linear inequalities) with an ordering *postcondition* over the output logits,
a positive Boolean combination of strict order literals ``y_i < y_j``.
Negation never appears explicitly: ``not (y_i < y_j)`` is written ``y_j < y_i``.

Equal logits are resolved by a fixed deterministic rule used everywhere in the
package: the lower index is treated as infinitesimally larger, so with
``y[i] == y[j]`` the literal ``y_i < y_j`` holds iff ``i > j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ConstraintParseError, ConstraintShapeError, InputShapeError

_OPS = ("<=", ">=", "<", ">")


def _dot(coeffs: np.ndarray, x: Sequence[float]) -> float:
    # Row-wise pairwise summation; the batched evaluator reduces (B, n) arrays
    # along the last axis with the same algorithm, so scalar and batched
    # precondition checks agree bit for bit.
    return float(np.multiply(coeffs, np.asarray(x, dtype=np.float64)).sum())


@dataclass(frozen=True)
class LinearAtom:
    """One linear inequality ``coeffs . x  <op>  bound`` over the input."""

    coeffs: tuple[float, ...]
    op: str
    bound: float

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "bound", float(self.bound))

    def holds(self, x: Sequence[float]) -> bool:
        if len(x) != len(self.coeffs):
            raise InputShapeError(
                f"atom has {len(self.coeffs)} coefficients, input has {len(x)}"
            )
        d = _dot(np.asarray(self.coeffs, dtype=np.float64), x)
        if self.op == "<=":
            return d <= self.bound
        if self.op == ">=":
            return d >= self.bound
        if self.op == "<":
            return d < self.bound
        return d > self.bound


@dataclass(frozen=True)
class Precondition:
    """Conjunction of linear atoms; the empty conjunction is always true."""

    atoms: tuple[LinearAtom, ...] = ()

    @property
    def is_top(self) -> bool:
        return not self.atoms


@dataclass(frozen=True)
class OrderingLiteral:
    """The strict order relation ``y_lesser < y_greater``."""

    lesser: int
    greater: int

    def __post_init__(self) -> None:
        if self.lesser == self.greater:
            raise ValueError("ordering literal must relate two distinct indices")
        if self.lesser < 0 or self.greater < 0:
            raise ValueError("ordering literal indices must be non-negative")

    def swapped(self) -> "OrderingLiteral":
        """The negation of this literal (equality is excluded by convention)."""
        return OrderingLiteral(self.greater, self.lesser)


@dataclass(frozen=True)
class And:
    children: "tuple[Formula, ...]"

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("And node needs at least one child")


@dataclass(frozen=True)
class Or:
    children: "tuple[Formula, ...]"

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("Or node needs at least one child")


@dataclass(frozen=True)
class Top:
    """Marker for the trivially-true postcondition (no constraint active)."""


TOP = Top()

Formula = Union[OrderingLiteral, And, Or]


@dataclass(frozen=True)
class OrderingTerm:
    """A conjunction of ordering literals, canonically sorted and deduplicated.

    The empty term is the trivially-true constraint.
    """

    literals: tuple[OrderingLiteral, ...] = ()

    def __post_init__(self) -> None:
        canon = tuple(
            sorted(set(self.literals), key=lambda l: (l.lesser, l.greater))
        )
        object.__setattr__(self, "literals", canon)

    def constrained_lessers(self) -> frozenset[int]:
        """Indices that appear on the small side of some literal (non-roots)."""
        return frozenset(l.lesser for l in self.literals)


@dataclass(frozen=True)
class SafeOrderingConstraint:
    name: str
    pre: Precondition
    post: Formula


@dataclass(frozen=True)
class ConstraintSet:
    """All constraints of one enforcement problem, sharing dimensions n and m."""

    n: int
    m: int
    constraints: tuple[SafeOrderingConstraint, ...] = ()

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions n and m must be positive")
        for c in self.constraints:
            for a in c.pre.atoms:
                if len(a.coeffs) != self.n:
                    raise ConstraintShapeError(
                        f"constraint {c.name!r}: atom has {len(a.coeffs)} "
                        f"coefficients, expected n={self.n}"
                    )
            for lit in formula_literals(c.post):
                if lit.lesser >= self.m or lit.greater >= self.m:
                    raise ConstraintShapeError(
                        f"constraint {c.name!r}: literal ({lit.lesser},"
                        f"{lit.greater}) out of range for m={self.m}"
                    )


def formula_literals(f: Formula) -> Iterator[OrderingLiteral]:
    """All literal leaves of a formula, in syntactic order."""
    if isinstance(f, OrderingLiteral):
        yield f
    elif isinstance(f, (And, Or)):
        for child in f.children:
            yield from formula_literals(child)
    else:
        raise TypeError(f"not a formula node: {f!r}")


def logit_less(y: Sequence[float], i: int, j: int) -> bool:
    """``y_i < y_j`` under the deterministic tie rule (lower index is larger)."""
    return y[i] < y[j] or (y[i] == y[j] and i > j)


def eval_pre(pre: Precondition, x: Sequence[float]) -> bool:
    """Whether every atom of the precondition holds at ``x``. Comparisons are
    exact floating point; preconditions gate discrete behavior and must be
    reproducible."""
    return all(atom.holds(x) for atom in pre.atoms)


def eval_formula(f: Formula | Top, y: Sequence[float]) -> bool:
    """Standard Boolean semantics of an ordering formula over logits ``y``."""
    if isinstance(f, Top):
        return True
    if isinstance(f, OrderingLiteral):
        if f.lesser >= len(y) or f.greater >= len(y):
            raise ConstraintShapeError(
                f"literal ({f.lesser},{f.greater}) out of range for m={len(y)}"
            )
        return logit_less(y, f.lesser, f.greater)
    if isinstance(f, And):
        return all(eval_formula(c, y) for c in f.children)
    if isinstance(f, Or):
        return any(eval_formula(c, y) for c in f.children)
    raise TypeError(f"not a formula node: {f!r}")


def eval_term(q: OrderingTerm, y: Sequence[float]) -> bool:
    return all(logit_less(y, l.lesser, l.greater) for l in q.literals)


def fired_constraints(
    cs: ConstraintSet, x: Sequence[float]
) -> tuple[SafeOrderingConstraint, ...]:
    if len(x) != cs.n:
        raise InputShapeError(f"input has length {len(x)}, expected n={cs.n}")
    return tuple(c for c in cs.constraints if eval_pre(c.pre, x))


def active_postcondition(cs: ConstraintSet, x: Sequence[float]) -> Formula | Top:
    """Conjunction of the postconditions whose preconditions hold at ``x``.

    Returns the bare postcondition when exactly one constraint fires, an
    ``And`` node when several fire, and ``TOP`` when none do.
    """
    fired = fired_constraints(cs, x)
    if not fired:
        return TOP
    if len(fired) == 1:
        return fired[0].post
    return And(tuple(c.post for c in fired))


def satisfied_at(cs: ConstraintSet, x: Sequence[float], y: Sequence[float]) -> bool:
    """Whether ``y`` already satisfies every active postcondition at ``x``."""
    if len(y) != cs.m:
        raise InputShapeError(f"logits have length {len(y)}, expected m={cs.m}")
    return all(
        eval_formula(c.post, y) for c in cs.constraints if eval_pre(c.pre, x)
    )


# ---------------------------------------------------------------------------
# JSON wire format
#
# {"n": 5, "m": 5, "constraints": [
#     {"name": "phi2",
#      "pre":  [{"coeffs": [1,0,0,0,0], "op": ">=", "bound": 55947.691}, ...],
#      "post": {"or": [{"lt": [1,0]}, {"lt": [2,0]}]}}]}
#
# "lt": [i, j] encodes y_i < y_j; "pre": [] is the trivially-true precondition.
# ---------------------------------------------------------------------------


def _parse_atom(node: object, n: int, loc: str) -> LinearAtom:
    if not isinstance(node, dict):
        raise ConstraintParseError(loc, "atom must be an object")
    for key in ("coeffs", "op", "bound"):
        if key not in node:
            raise ConstraintParseError(loc, f"atom missing field {key!r}")
    coeffs = node["coeffs"]
    if not isinstance(coeffs, list) or not all(
        isinstance(c, (int, float)) for c in coeffs
    ):
        raise ConstraintParseError(f"{loc}.coeffs", "must be a list of numbers")
    if len(coeffs) != n:
        raise ConstraintParseError(
            f"{loc}.coeffs", f"expected {n} coefficients, got {len(coeffs)}"
        )
    op = node["op"]
    if op not in _OPS:
        raise ConstraintParseError(f"{loc}.op", f"unknown operator {op!r}")
    if not isinstance(node["bound"], (int, float)):
        raise ConstraintParseError(f"{loc}.bound", "must be a number")
    return LinearAtom(tuple(coeffs), op, node["bound"])


def _parse_formula(node: object, m: int, loc: str) -> Formula:
    if not isinstance(node, dict) or len(node) != 1:
        raise ConstraintParseError(
            loc, "formula node must be an object with exactly one of lt/and/or"
        )
    (kind, body), = node.items()
    if kind == "lt":
        if (
            not isinstance(body, list)
            or len(body) != 2
            or not all(isinstance(i, int) for i in body)
        ):
            raise ConstraintParseError(f"{loc}.lt", "must be a pair of indices")
        i, j = body
        if i == j:
            raise ConstraintParseError(f"{loc}.lt", "indices must be distinct")
        if not (0 <= i < m and 0 <= j < m):
            raise ConstraintParseError(
                f"{loc}.lt", f"index out of range for m={m}: [{i},{j}]"
            )
        return OrderingLiteral(i, j)
    if kind in ("and", "or"):
        if not isinstance(body, list) or not body:
            raise ConstraintParseError(
                f"{loc}.{kind}", "must be a non-empty list of formula nodes"
            )
        children = tuple(
            _parse_formula(c, m, f"{loc}.{kind}[{k}]") for k, c in enumerate(body)
        )
        return And(children) if kind == "and" else Or(children)
    raise ConstraintParseError(loc, f"unknown formula node kind {kind!r}")


def parse_constraints(text: bytes | str) -> ConstraintSet:
    """Parse the JSON constraint format. Raises :class:`ConstraintParseError`
    with the path of the offending node on malformed input."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConstraintParseError("$", f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConstraintParseError("$", "top level must be an object")
    for key in ("n", "m", "constraints"):
        if key not in doc:
            raise ConstraintParseError("$", f"missing field {key!r}")
    n, m = doc["n"], doc["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 1 or m < 1:
        raise ConstraintParseError("$", "n and m must be positive integers")
    if not isinstance(doc["constraints"], list):
        raise ConstraintParseError("$.constraints", "must be a list")
    constraints = []
    for k, cnode in enumerate(doc["constraints"]):
        loc = f"$.constraints[{k}]"
        if not isinstance(cnode, dict):
            raise ConstraintParseError(loc, "constraint must be an object")
        name = cnode.get("name", f"c{k}")
        if not isinstance(name, str):
            raise ConstraintParseError(f"{loc}.name", "must be a string")
        pre_node = cnode.get("pre", [])
        if not isinstance(pre_node, list):
            raise ConstraintParseError(f"{loc}.pre", "must be a list of atoms")
        atoms = tuple(
            _parse_atom(a, n, f"{loc}.pre[{i}]") for i, a in enumerate(pre_node)
        )
        if "post" not in cnode:
            raise ConstraintParseError(loc, "constraint missing field 'post'")
        post = _parse_formula(cnode["post"], m, f"{loc}.post")
        constraints.append(SafeOrderingConstraint(name, Precondition(atoms), post))
    return ConstraintSet(n, m, tuple(constraints))


def _formula_to_node(f: Formula) -> dict:
    if isinstance(f, OrderingLiteral):
        return {"lt": [f.lesser, f.greater]}
    if isinstance(f, And):
        return {"and": [_formula_to_node(c) for c in f.children]}
    if isinstance(f, Or):
        return {"or": [_formula_to_node(c) for c in f.children]}
    raise TypeError(f"not a formula node: {f!r}")


def serialize_constraints(cs: ConstraintSet) -> bytes:
    doc = {
        "n": cs.n,
        "m": cs.m,
        "constraints": [
            {
                "name": c.name,
                "pre": [
                    {"coeffs": list(a.coeffs), "op": a.op, "bound": a.bound}
                    for a in c.pre.atoms
                ],
                "post": _formula_to_node(c.post),
            }
            for c in cs.constraints
        ],
    }
    return json.dumps(doc, indent=2).encode("utf-8")
