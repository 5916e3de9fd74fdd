"""Graph encoding of conjunctive ordering terms.

A term ``q`` over ``m`` logits maps to a directed graph on vertices ``[m]``
with an edge ``(i, j)`` for each literal ``y_j < y_i``: the edge points from
the vertex that must rank higher to the one that must rank lower. The term is
satisfiable iff this graph is acyclic.

Satisfiability, vertex depths, and ancestor sets all derive from the
all-pairs-longest-paths (APLP) matrix ``P``, computed by repeated max-plus
matrix squaring: ``ceil(log2 m)`` squarings of the base matrix suffice because
path lengths double per squaring and simple paths have fewer than ``m`` edges.
On acyclic graphs ``P[i][j]`` is the longest path length from ``i`` to ``j``
(0 on the diagonal, NO_PATH when unreachable); a cycle shows up as a positive
diagonal entry, so the trace decides satisfiability.

Two interchangeable implementations are provided:

* a scalar one over nested lists, with ``None`` as the NO_PATH sentinel and
  exact integer arithmetic;
* a batched one over ``(B, m, m)`` float arrays, where NO_PATH is the finite
  value ``-2m`` and entries are re-clamped to it after every product. On
  acyclic graphs finite path lengths never reach ``m``, so a sentinel-tainted
  sum stays below ``-m`` and the clamp keeps the kernel exact; on cyclic
  graphs only the sign of the diagonal is meaningful, which is all cycle
  detection needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constraints import OrderingTerm
from .errors import ConstraintShapeError

# Scalar NO_PATH sentinel: absent entries are represented by None.
NO_PATH = None

AplpMatrix = list  # list[list[int | None]]


@dataclass(frozen=True)
class OrderGraph:
    """Adjacency-matrix encoding of a conjunctive ordering term."""

    m: int
    adj: tuple[tuple[int, ...], ...]

    def edges(self) -> list[tuple[int, int]]:
        return [
            (i, j) for i in range(self.m) for j in range(self.m) if self.adj[i][j]
        ]


def order_graph(q: OrderingTerm, m: int) -> OrderGraph:
    """Graph with an edge (greater, lesser) per literal. Empty term maps to
    the edgeless graph."""
    adj = [[0] * m for _ in range(m)]
    for lit in q.literals:
        if lit.lesser >= m or lit.greater >= m:
            raise ConstraintShapeError(
                f"literal ({lit.lesser},{lit.greater}) out of range for m={m}"
            )
        adj[lit.greater][lit.lesser] = 1
    return OrderGraph(m, tuple(tuple(row) for row in adj))


def n_squarings(m: int) -> int:
    """Number of max-plus squarings needed for paths up to length m."""
    return 0 if m <= 1 else math.ceil(math.log2(m))


# ---------------------------------------------------------------------------
# Scalar path
# ---------------------------------------------------------------------------


def max_distance_product(a: AplpMatrix, b: AplpMatrix) -> AplpMatrix:
    """Max-plus matrix product: (ab)[i][j] = max_k a[i][k] + b[k][j], with
    NO_PATH absorbing addition and ignored by the maximum."""
    m = len(a)
    out: AplpMatrix = [[NO_PATH] * m for _ in range(m)]
    for i in range(m):
        row = a[i]
        for j in range(m):
            best = NO_PATH
            for k in range(m):
                aik = row[k]
                bkj = b[k][j]
                if aik is NO_PATH or bkj is NO_PATH:
                    continue
                c = aik + bkj
                if best is NO_PATH or c > best:
                    best = c
            out[i][j] = best
    return out


def base_matrix(g: OrderGraph) -> AplpMatrix:
    """Paths of length at most one: 1 on edges, 0 on the diagonal."""
    return [
        [
            1 if g.adj[i][j] else (0 if i == j else NO_PATH)
            for j in range(g.m)
        ]
        for i in range(g.m)
    ]


def aplp(g: OrderGraph) -> AplpMatrix:
    """All-pairs longest paths by repeated max-plus squaring."""
    p = base_matrix(g)
    for _ in range(n_squarings(g.m)):
        p = max_distance_product(p, p)
    return p


def has_cycle(p: AplpMatrix) -> bool:
    """Trace test: a cycle exists iff some diagonal entry is positive."""
    return sum(p[i][i] or 0 for i in range(len(p))) > 0


def is_sat(q: OrderingTerm, m: int) -> bool:
    """A conjunctive term is satisfiable iff its graph is acyclic."""
    return not has_cycle(aplp(order_graph(q, m)))


def in_degrees(g: OrderGraph) -> list[int]:
    return [sum(g.adj[i][j] for i in range(g.m)) for j in range(g.m)]


def roots(g: OrderGraph) -> set[int]:
    """Vertices with in-degree zero; exactly the indices allowed to rank first."""
    return {j for j, d in enumerate(in_degrees(g)) if d == 0}


# ---------------------------------------------------------------------------
# Batched path
# ---------------------------------------------------------------------------

# Keep intermediate (B, m, k, m) product tensors at or below ~32M elements.
_PRODUCT_ELEM_BUDGET = 32_000_000


def no_path_value(m: int) -> float:
    return -2.0 * m


def stack_graphs(graphs: Sequence[OrderGraph]) -> np.ndarray:
    """Stack adjacency matrices into a (B, m, m) float array."""
    if not graphs:
        raise ValueError("empty graph batch")
    m = graphs[0].m
    if any(g.m != m for g in graphs):
        raise ValueError("graphs in one batch must share the vertex count")
    return np.array([g.adj for g in graphs], dtype=np.float64)


def max_distance_product_batch(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """Batched max-plus product with sentinel re-clamping."""
    out = np.empty_like(a)
    bsz = a.shape[0]
    chunk = max(1, _PRODUCT_ELEM_BUDGET // max(1, m * m * m))
    for lo in range(0, bsz, chunk):
        hi = min(bsz, lo + chunk)
        # [b,i,k,1] + [b,1,k,j] -> max over k
        sums = a[lo:hi, :, :, None] + b[lo:hi, None, :, :]
        out[lo:hi] = sums.max(axis=2)
    np.copyto(out, no_path_value(m), where=out < -m)
    return out


def base_matrix_batch(adj: np.ndarray) -> np.ndarray:
    """Batched base matrix over graphs stacked as (B, m, m) 0/1 arrays."""
    bsz, m, _ = adj.shape
    p = np.where(adj > 0, 1.0, no_path_value(m))
    idx = np.arange(m)
    diag = p[:, idx, idx]
    p[:, idx, idx] = np.where(diag > 0, diag, 0.0)
    return p


def aplp_batch(adj: np.ndarray) -> np.ndarray:
    """Batched all-pairs longest paths over (B, m, m) adjacency arrays."""
    m = adj.shape[-1]
    p = base_matrix_batch(adj)
    for _ in range(n_squarings(m)):
        p = max_distance_product_batch(p, p, m)
    return p


def has_cycle_batch(p: np.ndarray) -> np.ndarray:
    """Per-slice trace test on a batched APLP array; returns (B,) bools."""
    idx = np.arange(p.shape[-1])
    diag = p[:, idx, idx]
    return np.maximum(diag, 0.0).sum(axis=1) > 0


def normalize_batch_aplp(p: np.ndarray) -> AplpMatrix | list:
    """Convert one or more batched APLP slices to the scalar representation
    (negative entries become NO_PATH). Only meaningful for acyclic graphs,
    where the batched kernel is exact."""
    if p.ndim == 2:
        return [
            [NO_PATH if v < 0 else int(v) for v in row] for row in p.tolist()
        ]
    return [normalize_batch_aplp(slice_) for slice_ in p]
