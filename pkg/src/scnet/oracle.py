"""Brute-force reference implementations.

Everything here re-derives its answer from first principles: permutation
enumeration for satisfiability, depth-first search for cycles, exhaustive
simple-path enumeration for longest paths. None of it shares logic with the
production modules; it exists to cross-check them in tests and through the
``scnet oracle`` subcommand. Hard scale guards keep the factorial and
exponential enumerations honest rather than silently truncated.
"""

from __future__ import annotations

from itertools import permutations
from typing import Sequence

from .constraints import And, Formula, Or, OrderingLiteral, Top
from .errors import GuardError
from .ordergraph import NO_PATH, AplpMatrix, OrderGraph

MAX_ORACLE_M = 8


def eval_brute(f: Formula | Top, y: Sequence[float]) -> bool:
    """Formula evaluation by direct recursion; assumes distinct values."""
    if isinstance(f, Top):
        return True
    if isinstance(f, OrderingLiteral):
        return y[f.lesser] < y[f.greater]
    if isinstance(f, And):
        return all(eval_brute(c, y) for c in f.children)
    if isinstance(f, Or):
        return any(eval_brute(c, y) for c in f.children)
    raise TypeError(f"not a formula node: {f!r}")


def _guard(m: int) -> None:
    if m > MAX_ORACLE_M:
        raise GuardError(f"oracle capped at m={MAX_ORACLE_M}, got {m}")


def oracle_satisfiable(f: Formula | Top, m: int) -> bool:
    """Whether any of the m! rank assignments satisfies ``f``."""
    _guard(m)
    return any(eval_brute(f, ranks) for ranks in permutations(range(m)))


def oracle_argmax_preserving(f: Formula | Top, m: int, k: int) -> bool:
    """Whether some satisfying rank assignment puts the maximum at index k."""
    _guard(m)
    return any(
        ranks[k] == m - 1 and eval_brute(f, ranks)
        for ranks in permutations(range(m))
    )


def dfs_has_cycle(g: OrderGraph) -> bool:
    """Back-edge search over the adjacency matrix."""
    color = [0] * g.m  # 0 unvisited, 1 on stack, 2 done

    def visit(u: int) -> bool:
        color[u] = 1
        for v in range(g.m):
            if not g.adj[u][v]:
                continue
            if color[v] == 1:
                return True
            if color[v] == 0 and visit(v):
                return True
        color[u] = 2
        return False

    return any(color[u] == 0 and visit(u) for u in range(g.m))


def oracle_longest_paths(g: OrderGraph) -> AplpMatrix:
    """Longest paths by exhaustive simple-path enumeration (acyclic only)."""
    _guard(g.m)
    if dfs_has_cycle(g):
        raise GuardError("longest-path oracle requires an acyclic graph")
    best: AplpMatrix = [
        [0 if i == j else NO_PATH for j in range(g.m)] for i in range(g.m)
    ]

    def extend(start: int, u: int, length: int, seen: set[int]) -> None:
        for v in range(g.m):
            if not g.adj[u][v] or v in seen:
                continue
            cur = best[start][v]
            if cur is NO_PATH or length + 1 > cur:
                best[start][v] = length + 1
            extend(start, v, length + 1, seen | {v})

    for s in range(g.m):
        extend(s, s, 0, {s})
    return best
