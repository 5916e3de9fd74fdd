"""The self-correcting layer: check, solve, and repair.

Given the logits ``y`` a classifier produced for input ``x``, the layer first
checks whether every active postcondition already holds. If not, it searches
the disjunctive normal form of the active postcondition for a satisfiable
conjunctive term, preferring terms whose graph keeps the original prediction
as a root (so the repair can leave the argmax in place), and then permutes the
logit values to satisfy the chosen term via the stable topological sort. When
no term is satisfiable the layer returns BOTTOM: abstention is possible
exactly where the constraints are mutually inconsistent.

DNF terms are enumerated lazily by index. A conjunction of children with
``p_1, ..., p_k`` disjuncts each has ``prod(p_i)`` terms, addressed by a
mixed-radix counter with the leftmost child varying fastest. The search order
is fixed and documented so regression values are stable.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .constraints import (
    And,
    ConstraintSet,
    Formula,
    Or,
    OrderingLiteral,
    OrderingTerm,
    Top,
    TOP,
    eval_formula,
    fired_constraints,
)
from .errors import (
    BudgetExceededError,
    ContractViolationError,
    InputShapeError,
)
from .ordergraph import (
    OrderGraph,
    aplp_batch,
    has_cycle_batch,
    is_sat,
    order_graph,
    stack_graphs,
)
from .toposort import stable_topsort, stable_topsort_batch

DEFAULT_BUDGET = 2**20

# Switch point between the pure-python and the numpy single-instance
# satisfiability check inside the batch pipeline; both are exact.
_NUMPY_SAT_MIN_M = 6


class Bottom:
    """Singleton abstention value."""

    _instance: "Bottom | None" = None

    def __new__(cls) -> "Bottom":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"


BOTTOM = Bottom()


@dataclass(frozen=True)
class RepairConfig:
    """Knobs of the layer.

    budget counts satisfiability checks performed by one solve call; crossing
    it raises :class:`BudgetExceededError` (the worst case is exponential in
    the number of active constraints). use_fastpath enables the specialized
    not-maximal repair for postconditions of the shape
    ``OR_{j != i0} y_i0 < y_j``; disable it to force the general search.
    collect_trace records the indices of disjuncts rejected by solve.
    """

    budget: int = DEFAULT_BUDGET
    use_fastpath: bool = True
    collect_trace: bool = False


DEFAULT_CONFIG = RepairConfig()


@dataclass(frozen=True)
class RepairOutcome:
    """Result of one repair: the new logits or BOTTOM, plus diagnostics.

    ``chosen_disjunct`` is the DNF enumeration index of the term used for the
    repair; it is None when the input was already safe, when the layer
    abstained, and when the not-maximal fast path handled the row (the fast
    path never enumerates disjuncts). ``budget_exceeded`` outcomes carry
    BOTTOM as result but signal an aborted search, not proven inconsistency;
    they are only produced by the batch API, the scalar entry point raises.
    """

    result: "tuple[float, ...] | Bottom"
    fired: tuple[str, ...]
    chosen_disjunct: int | None
    already_safe: bool
    used_fastpath: bool = False
    disjuncts_checked: int = 0
    skipped_disjuncts: tuple[int, ...] | None = None
    budget_exceeded: bool = False

    @property
    def is_bottom(self) -> bool:
        """True for a proven-inconsistent abstention."""
        return self.result is BOTTOM and not self.budget_exceeded

    @property
    def repaired(self) -> tuple[float, ...] | None:
        return None if isinstance(self.result, Bottom) else self.result


# ---------------------------------------------------------------------------
# Lazy DNF enumeration
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def dnf_width(f: Formula | Top) -> int:
    """Number of terms in the cross-product DNF expansion of ``f``."""
    if isinstance(f, (Top, OrderingLiteral)):
        return 1
    if isinstance(f, And):
        width = 1
        for c in f.children:
            width *= dnf_width(c)
        return width
    if isinstance(f, Or):
        return sum(dnf_width(c) for c in f.children)
    raise TypeError(f"not a formula node: {f!r}")


def _term_literals(f: Formula | Top, idx: int) -> frozenset[OrderingLiteral]:
    if isinstance(f, Top):
        return frozenset()
    if isinstance(f, OrderingLiteral):
        return frozenset((f,))
    if isinstance(f, Or):
        for c in f.children:
            w = dnf_width(c)
            if idx < w:
                return _term_literals(c, idx)
            idx -= w
        raise IndexError("DNF index out of range")
    if isinstance(f, And):
        lits: set[OrderingLiteral] = set()
        for c in f.children:  # leftmost child varies fastest
            w = dnf_width(c)
            lits |= _term_literals(c, idx % w)
            idx //= w
        return frozenset(lits)
    raise TypeError(f"not a formula node: {f!r}")


def dnf_term(f: Formula | Top, idx: int) -> OrderingTerm:
    """The ``idx``-th DNF term of ``f`` under the fixed enumeration order."""
    if not 0 <= idx < dnf_width(f):
        raise IndexError("DNF index out of range")
    return OrderingTerm(tuple(_term_literals(f, idx)))


def to_dnf_lazy(f: Formula | Top) -> Iterator[OrderingTerm]:
    """Stream all DNF terms of ``f`` without materializing the expansion."""
    return (dnf_term(f, i) for i in range(dnf_width(f)))


def first_argmax(y: Sequence[float]) -> int:
    """Index of the maximum, lowest index on ties (the tie rule's argmax)."""
    return max(range(len(y)), key=lambda i: (y[i], -i))


def prioritize(
    stream: Iterable[OrderingTerm], y: Sequence[float]
) -> Iterator[OrderingTerm]:
    """Re-enumerate a term stream in two passes: first the terms whose graph
    keeps ``argmax(y)`` as a root, then the rest. Within each pass the
    original order is preserved. ``stream`` must be re-iterable."""
    if iter(stream) is stream:
        raise TypeError("prioritize re-enumerates its stream; pass a re-iterable")
    k = first_argmax(y)

    def passes() -> Iterator[OrderingTerm]:
        for t in stream:
            if k not in t.constrained_lessers():
                yield t
        for t in stream:
            if k in t.constrained_lessers():
                yield t

    return passes()


def _iter_prioritized(
    f: Formula | Top, y: Sequence[float]
) -> Iterator[tuple[int, OrderingTerm]]:
    """Prioritized (index, term) pairs; indices refer to enumeration order."""
    width = dnf_width(f)
    k = first_argmax(y)
    for i in range(width):
        t = dnf_term(f, i)
        if k not in t.constrained_lessers():
            yield i, t
    for i in range(width):
        t = dnf_term(f, i)
        if k in t.constrained_lessers():
            yield i, t


# ---------------------------------------------------------------------------
# Solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SolveResult:
    term: OrderingTerm | None
    disjunct: int | None
    checked: int
    skipped: tuple[int, ...]


def _conjoin(posts: Sequence[Formula]) -> Formula | Top:
    if not posts:
        return TOP
    if len(posts) == 1:
        return posts[0]
    return And(tuple(posts))


def _solve_formula(
    f: Formula | Top,
    m: int,
    y: Sequence[float],
    config: RepairConfig,
    sat: Callable[[OrderingTerm, int], bool] | None = None,
) -> _SolveResult:
    if sat is None:
        sat = lambda t, _i: is_sat(t, m)
    checked = 0
    skipped: list[int] = []
    for idx, term in _iter_prioritized(f, y):
        checked += 1
        if checked > config.budget:
            raise BudgetExceededError(config.budget)
        if sat(term, idx):
            return _SolveResult(term, idx, checked, tuple(skipped))
        if config.collect_trace:
            skipped.append(idx)
    return _SolveResult(None, None, checked, tuple(skipped))


def solve(
    cs: ConstraintSet,
    x: Sequence[float],
    y: Sequence[float],
    config: RepairConfig = DEFAULT_CONFIG,
) -> OrderingTerm | Bottom:
    """First satisfiable DNF term of the active postcondition, in prioritized
    order, or BOTTOM when every term is inconsistent."""
    fired = fired_constraints(cs, x)
    res = _solve_formula(_conjoin([c.post for c in fired]), cs.m, y, config)
    return BOTTOM if res.term is None else res.term


# ---------------------------------------------------------------------------
# Reorder
# ---------------------------------------------------------------------------


def _descending_order(y: Sequence[float]) -> list[int]:
    # Equal values tie-break by ascending original index, consistent with the
    # global rule that the lower index counts as larger.
    return sorted(range(len(y)), key=lambda i: (-y[i], i))


def reorder(q: OrderingTerm, y: Sequence[float]) -> list[float]:
    """Permute ``y`` so the result satisfies the conjunctive term ``q``.

    The vertex ranked ``r`` by the stable topological sort receives the
    ``r``-th largest logit value; edge respect then forces every literal.
    Raises :class:`ContractViolationError` when ``q`` is unsatisfiable.
    """
    m = len(y)
    pi = stable_topsort(order_graph(q, m), y)
    ys = [y[i] for i in _descending_order(y)]
    return [ys[pi[j]] for j in range(m)]


def repair_not_maximal(y: Sequence[float], blocked: Iterable[int]) -> list[float]:
    """Permute ``y`` so that no index in ``blocked`` holds the maximum.

    Mechanics: sort descending, locate the best-ranked unblocked slot ``r``,
    rotate the prefix ``[0..r]`` left by one so the overall maximum lands in
    that slot, and undo the sort. Requires ``|blocked| < len(y)``.
    """
    d = len(y)
    blocked_set = set(blocked)
    if any(i < 0 or i >= d for i in blocked_set):
        raise ContractViolationError("blocked index out of range")
    if len(blocked_set) >= d:
        raise ContractViolationError(
            "cannot keep every index away from the maximum"
        )
    mask = [1 if i in blocked_set else 0 for i in range(d)]
    perm = _descending_order(y)
    ysorted = [y[i] for i in perm]
    inv = [0] * d
    for rank, i in enumerate(perm):
        inv[i] = rank
    mperm = [mask[i] for i in perm]
    r = mperm.index(0)
    front = ysorted[: r + 1]
    rolled = front[1:] + front[:1]
    conc = rolled + ysorted[r + 1 :]
    return [conc[inv[i]] for i in range(d)]


def _not_maximal_pattern(posts: Sequence[Formula], m: int) -> set[int] | None:
    """If every post is syntactically ``OR_{j != i0} y_i0 < y_j``, return the
    set of blocked indices ``{i0}``; otherwise None."""
    blocked: set[int] = set()
    for f in posts:
        if not isinstance(f, Or):
            return None
        if not all(isinstance(c, OrderingLiteral) for c in f.children):
            return None
        lessers = {c.lesser for c in f.children}
        if len(lessers) != 1:
            return None
        (i0,) = lessers
        if {c.greater for c in f.children} != set(range(m)) - {i0}:
            return None
        blocked.add(i0)
    return blocked


# ---------------------------------------------------------------------------
# Self-repair
# ---------------------------------------------------------------------------


def self_repair(
    cs: ConstraintSet,
    x: Sequence[float],
    y: Sequence[float],
    config: RepairConfig = DEFAULT_CONFIG,
) -> RepairOutcome:
    """Check-and-correct one logit vector against the constraint set.

    Already-safe inputs pass through unchanged. Otherwise the solver picks a
    satisfiable conjunctive term of the active postcondition (or proves there
    is none and abstains) and the reorder step permutes the logits to satisfy
    it, preserving the original argmax whenever any satisfying output does.
    """
    if len(y) != cs.m:
        raise InputShapeError(f"logits have length {len(y)}, expected m={cs.m}")
    fired = fired_constraints(cs, x)
    names = tuple(c.name for c in fired)
    if all(eval_formula(c.post, y) for c in fired):
        return RepairOutcome(tuple(y), names, None, already_safe=True)
    if config.use_fastpath:
        blocked = _not_maximal_pattern([c.post for c in fired], cs.m)
        if blocked is not None:
            if len(blocked) >= cs.m:
                return RepairOutcome(BOTTOM, names, None, already_safe=False)
            out = repair_not_maximal(y, blocked)
            return RepairOutcome(
                tuple(out), names, None, already_safe=False, used_fastpath=True
            )
    res = _solve_formula(_conjoin([c.post for c in fired]), cs.m, y, config)
    if res.term is None:
        return RepairOutcome(
            BOTTOM,
            names,
            None,
            already_safe=False,
            disjuncts_checked=res.checked,
            skipped_disjuncts=res.skipped if config.collect_trace else None,
        )
    out = reorder(res.term, y)
    return RepairOutcome(
        tuple(out),
        names,
        res.disjunct,
        already_safe=False,
        disjuncts_checked=res.checked,
        skipped_disjuncts=res.skipped if config.collect_trace else None,
    )


# ---------------------------------------------------------------------------
# Batched pipeline
# ---------------------------------------------------------------------------


# Per-object compiled forms, keyed by identity so the (deep) structural hash
# of a constraint set or formula is never recomputed per call.
_PRE_CACHE: "weakref.WeakKeyDictionary[ConstraintSet, tuple]" = (
    weakref.WeakKeyDictionary()
)
_POST_CACHE: "weakref.WeakKeyDictionary[object, tuple | None]" = (
    weakref.WeakKeyDictionary()
)

_OP_CODES = {"<=": 0, ">=": 1, "<": 2, ">": 3}


def _compiled_pre(cs: ConstraintSet) -> tuple:
    try:
        return _PRE_CACHE[cs]
    except KeyError:
        pass
    coeffs, bounds, ops, starts = [], [], [], []
    trivial = np.zeros(len(cs.constraints), dtype=bool)
    for k, c in enumerate(cs.constraints):
        if not c.pre.atoms:
            trivial[k] = True
            continue
        starts.append(len(coeffs))
        for atom in c.pre.atoms:
            coeffs.append(atom.coeffs)
            bounds.append(atom.bound)
            ops.append(_OP_CODES[atom.op])
    compiled = (
        np.array(coeffs, dtype=np.float64).reshape(len(coeffs), cs.n),
        np.array(bounds, dtype=np.float64),
        np.array(ops, dtype=np.int8),
        np.array(starts, dtype=np.intp),
        trivial,
    )
    _PRE_CACHE[cs] = compiled
    return compiled


def eval_pre_batch(cs: ConstraintSet, xs: np.ndarray) -> np.ndarray:
    """(B, #constraints) matrix of precondition verdicts. Row sums reduce
    along the input axis with the same pairwise order as the scalar
    evaluator, so both routes agree bit for bit."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != cs.n:
        raise InputShapeError(f"expected inputs of shape (B, {cs.n})")
    coeffs, bounds, ops, starts, trivial = _compiled_pre(cs)
    out = np.ones((xs.shape[0], len(cs.constraints)), dtype=bool)
    if not len(coeffs):
        return out
    dots = (xs[:, None, :] * coeffs[None, :, :]).sum(axis=2)
    verdicts = np.empty_like(dots, dtype=bool)
    for code, cmp in (
        (0, np.less_equal), (1, np.greater_equal), (2, np.less), (3, np.greater)
    ):
        mask = ops == code
        if mask.any():
            verdicts[:, mask] = cmp(dots[:, mask], bounds[mask])
    grouped = np.logical_and.reduceat(verdicts, starts, axis=1)
    out[:, ~trivial] = grouped
    return out


def _compile_terms(f: Formula | Top) -> tuple | None:
    """Flatten an Or-of-conjunctions (or a single conjunction) into literal
    index arrays; returns None for shapes that need the recursive evaluator."""
    if isinstance(f, Top):
        return None
    def conj(node) -> list[OrderingLiteral] | None:
        if isinstance(node, OrderingLiteral):
            return [node]
        if isinstance(node, And) and all(
            isinstance(c, OrderingLiteral) for c in node.children
        ):
            return list(node.children)
        return None

    if isinstance(f, Or):
        terms = [conj(c) for c in f.children]
        if any(t is None for t in terms):
            return None
    else:
        single = conj(f)
        if single is None:
            return None
        terms = [single]
    les, gr, starts = [], [], []
    for t in terms:
        starts.append(len(les))
        for lit in t:
            les.append(lit.lesser)
            gr.append(lit.greater)
    return (
        np.array(les, dtype=np.intp),
        np.array(gr, dtype=np.intp),
        np.array(les, dtype=np.intp) > np.array(gr, dtype=np.intp),
        np.array(starts, dtype=np.intp),
    )


def eval_formula_batch(f: Formula | Top, ys: np.ndarray) -> np.ndarray:
    """Vectorized formula evaluation over rows of ``ys``."""
    if isinstance(f, Top):
        return np.ones(ys.shape[0], dtype=bool)
    try:
        compiled = _POST_CACHE[f]
    except (KeyError, TypeError):
        compiled = _compile_terms(f)
        try:
            _POST_CACHE[f] = compiled
        except TypeError:
            pass
    if compiled is not None:
        les, gr, tie, starts = compiled
        cmp = ys[:, les] < ys[:, gr]
        if tie.any():
            cmp |= (ys[:, les] == ys[:, gr]) & tie
        return np.logical_or.reduce(
            np.logical_and.reduceat(cmp, starts, axis=1), axis=1
        )
    if isinstance(f, OrderingLiteral):
        i, j = f.lesser, f.greater
        less = ys[:, i] < ys[:, j]
        if i > j:
            less |= ys[:, i] == ys[:, j]
        return less
    if isinstance(f, And):
        out = np.ones(ys.shape[0], dtype=bool)
        for c in f.children:
            out &= eval_formula_batch(c, ys)
        return out
    if isinstance(f, Or):
        out = np.zeros(ys.shape[0], dtype=bool)
        for c in f.children:
            out |= eval_formula_batch(c, ys)
        return out
    raise TypeError(f"not a formula node: {f!r}")


def _sat_single_numpy(g: OrderGraph) -> bool:
    adj = np.asarray(g.adj, dtype=np.float64)[None, :, :]
    return not bool(has_cycle_batch(aplp_batch(adj))[0])


def reorder_batch(terms: Sequence[OrderingTerm], ys: np.ndarray) -> np.ndarray:
    """Batched reorder of rows ``ys[b]`` under terms ``terms[b]``; matches the
    scalar :func:`reorder` bit for bit."""
    ys = np.asarray(ys, dtype=np.float64)
    m = ys.shape[1]
    adj = stack_graphs([order_graph(t, m) for t in terms])
    ranks = stable_topsort_batch(adj, ys)
    idx = np.broadcast_to(np.arange(m), ys.shape)
    desc = np.lexsort((idx, -ys), axis=1)
    ysorted = np.take_along_axis(ys, desc, axis=1)
    return np.take_along_axis(ysorted, ranks, axis=1)


def self_repair_batch(
    cs: ConstraintSet,
    xs: np.ndarray,
    ys: np.ndarray,
    config: RepairConfig = DEFAULT_CONFIG,
    threads: int = 1,
) -> list[RepairOutcome]:
    """Row-independent repair of a whole batch.

    Safety checks and the final reorder run as batched matrix kernels;
    per-term satisfiability verdicts are shared across rows with the same
    active-constraint pattern. Budget overruns are captured per row instead
    of raising. With ``threads > 1`` the batch is sharded across a thread
    pool by row index; outcomes are identical either way.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[0] != ys.shape[0]:
        raise InputShapeError("expected (B, n) inputs and (B, m) logits")
    if ys.shape[1] != cs.m:
        raise InputShapeError(f"logits have width {ys.shape[1]}, expected {cs.m}")

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        shards = np.array_split(np.arange(xs.shape[0]), threads)
        shards = [s for s in shards if s.size]
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            parts = list(
                pool.map(
                    lambda s: self_repair_batch(cs, xs[s], ys[s], config),
                    shards,
                )
            )
        out: list[RepairOutcome] = []
        for part in parts:
            out.extend(part)
        return out

    bsz = xs.shape[0]
    fired = eval_pre_batch(cs, xs)
    safe = np.ones(bsz, dtype=bool)
    for k, c in enumerate(cs.constraints):
        rows = fired[:, k]
        if rows.any():
            safe[rows] &= eval_formula_batch(c.post, ys[rows])

    outcomes: list[RepairOutcome | None] = [None] * bsz
    names_cache: dict[bytes, tuple[str, ...]] = {}
    pattern_cache: dict[bytes, set[int] | None] = {}
    sat_cache: dict[OrderingTerm, bool] = {}
    pending: list[tuple[int, _SolveResult]] = []

    def sat(term: OrderingTerm, _idx: int) -> bool:
        # satisfiability is a property of the term alone; share verdicts
        # across rows and active patterns
        if term not in sat_cache:
            if cs.m >= _NUMPY_SAT_MIN_M:
                sat_cache[term] = _sat_single_numpy(order_graph(term, cs.m))
            else:
                sat_cache[term] = is_sat(term, cs.m)
        return sat_cache[term]

    for b in range(bsz):
        key = fired[b].tobytes()
        if key not in names_cache:
            names_cache[key] = tuple(
                c.name for k, c in enumerate(cs.constraints) if fired[b, k]
            )
        names = names_cache[key]
        row = ys[b]
        if safe[b]:
            outcomes[b] = RepairOutcome(
                tuple(row.tolist()), names, None, already_safe=True
            )
            continue
        posts = [c.post for k, c in enumerate(cs.constraints) if fired[b, k]]
        if config.use_fastpath:
            if key not in pattern_cache:
                pattern_cache[key] = _not_maximal_pattern(posts, cs.m)
            blocked = pattern_cache[key]
            if blocked is not None:
                if len(blocked) >= cs.m:
                    outcomes[b] = RepairOutcome(BOTTOM, names, None, False)
                else:
                    out_row = repair_not_maximal(row.tolist(), blocked)
                    outcomes[b] = RepairOutcome(
                        tuple(out_row), names, None, False, used_fastpath=True
                    )
                continue

        try:
            res = _solve_formula(_conjoin(posts), cs.m, row.tolist(), config, sat)
        except BudgetExceededError:
            outcomes[b] = RepairOutcome(
                BOTTOM, names, None, False, budget_exceeded=True
            )
            continue
        if res.term is None:
            outcomes[b] = RepairOutcome(
                BOTTOM,
                names,
                None,
                False,
                disjuncts_checked=res.checked,
                skipped_disjuncts=res.skipped if config.collect_trace else None,
            )
        else:
            pending.append((b, res))

    if pending:
        rows = np.array([b for b, _ in pending])
        repaired = reorder_batch([r.term for _, r in pending], ys[rows])
        for (b, res), out_row in zip(pending, repaired):
            key = fired[b].tobytes()
            outcomes[b] = RepairOutcome(
                tuple(out_row.tolist()),
                names_cache[key],
                res.disjunct,
                already_safe=False,
                disjuncts_checked=res.checked,
                skipped_disjuncts=res.skipped if config.collect_trace else None,
            )

    return outcomes  # type: ignore[return-value]
