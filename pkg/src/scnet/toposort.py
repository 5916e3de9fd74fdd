"""Stable topological sort of an order graph, keyed by the original logits.

Plain topological sorts respect the edges but ignore the logit values, which
is enough for safety but not for keeping the original prediction on top. This
variant adjusts each vertex's value to the minimum over itself and all its
ancestors, then ranks vertices by descending adjusted value, breaking ties by
ascending depth and finally by ascending vertex index. Adjusted values never
increase along an edge and depth strictly increases, so every edge is
respected; root vertices keep their own value, so when the argmax is a root it
is ranked first.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractViolationError, InputShapeError
from .ordergraph import (
    NO_PATH,
    OrderGraph,
    aplp,
    aplp_batch,
    has_cycle,
    has_cycle_batch,
)

RankPermutation = list  # list[int]; pi[vertex] = rank


def topsort_keys(g: OrderGraph, y: Sequence[float]) -> tuple[list[float], list[int]]:
    """Adjusted values and depths used as sort keys.

    ``v[j]`` is the minimum of ``y`` over ``{j} ∪ ancestors(j)``; ``d[j]`` is
    the length of the longest path ending at ``j``. Requires an acyclic graph.
    """
    m = g.m
    if len(y) != m:
        raise InputShapeError(f"logits have length {len(y)}, expected {m}")
    p = aplp(g)
    if has_cycle(p):
        raise ContractViolationError(
            "stable topological sort requires an acyclic graph; "
            "check satisfiability first"
        )
    v = [
        min(y[i] for i in range(m) if p[i][j] is not NO_PATH) for j in range(m)
    ]
    d = [
        max(p[i][j] for i in range(m) if p[i][j] is not NO_PATH)
        for j in range(m)
    ]
    return v, d


def stable_topsort(g: OrderGraph, y: Sequence[float]) -> RankPermutation:
    """Rank permutation of the vertices: ``pi[i]`` is the rank of vertex ``i``.

    Raises :class:`ContractViolationError` on cyclic graphs.
    """
    v, d = topsort_keys(g, y)
    order = sorted(range(g.m), key=lambda j: (-v[j], d[j], j))
    pi = [0] * g.m
    for rank, vertex in enumerate(order):
        pi[vertex] = rank
    return pi


def stable_topsort_batch(adj: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Batched ranks for graphs stacked as (B, m, m) and logits as (B, m).

    Slice-by-slice identical to :func:`stable_topsort`.
    """
    if adj.ndim != 3 or ys.ndim != 2 or adj.shape[0] != ys.shape[0]:
        raise InputShapeError("expected (B, m, m) graphs and (B, m) logits")
    m = adj.shape[-1]
    if ys.shape[1] != m:
        raise InputShapeError(f"logits have width {ys.shape[1]}, expected {m}")
    p = aplp_batch(adj)
    if bool(has_cycle_batch(p).any()):
        raise ContractViolationError(
            "stable topological sort requires acyclic graphs; "
            "check satisfiability first"
        )
    ancestor = p >= 0  # [b, i, j]: i is an ancestor of j (or i == j)
    vals = np.where(ancestor, ys[:, :, None], np.inf)
    v = vals.min(axis=1)
    d = np.where(ancestor, p, -np.inf).max(axis=1)
    idx = np.broadcast_to(np.arange(m), v.shape)
    # lexsort: last key is primary; matches sorted(..., key=(-v, d, index))
    order = np.lexsort((idx, d, -v), axis=1)
    return np.argsort(order, axis=1)
