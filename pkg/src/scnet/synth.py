"""Seeded generator for synthetic constraint sets and labeled datasets.

Constraints are axis-aligned boxes of side ``epsilon`` in the unit cube, each
paired with a disjunction of ``beta`` random acyclic conjunctive terms. Graphs
are drawn edge-by-edge with inclusion probability ``gamma / (m (m - 1))`` so
the expected edge count is ``gamma``; empty and cyclic draws are resampled
(which biases the conditional mean slightly, see the tests for the measured
tolerance). Half the dataset is sampled inside the boxes and labeled by a
root of a random disjunct, so a label consistent with the constraints always
exists; the other half is rejection-sampled outside every box and labeled by
a pluggable classifier, nearest-centroid by default.

Reproducibility: every stream derives from ``default_rng([seed, lane, k])``
where lane 0/constraint k drives structure, lane 1/constraint k drives
covered points, and lane 2 drives background points. Identical seeds give
identical bytes on a fixed numpy version.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .constraints import (
    And,
    ConstraintSet,
    Formula,
    LinearAtom,
    Or,
    OrderingLiteral,
    OrderingTerm,
    Precondition,
    SafeOrderingConstraint,
    formula_literals,
)
from .errors import GenerationError
from .ordergraph import OrderGraph, is_sat, order_graph, roots
from .sclayer import eval_pre_batch

_RESAMPLE_CAP = 10_000
_BACKGROUND_BATCH_CAP = 1_000


@dataclass(frozen=True)
class SynthConfig:
    alpha: int
    beta: int
    m: int
    n: int = 10
    gamma: float = 3.0
    epsilon: float = 0.4
    points: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.m) < 1:
            raise ValueError("alpha, beta and m must be at least 1")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.m > 1 and not 0 < self.gamma < self.m * (self.m - 1):
            raise ValueError("gamma must lie in (0, m(m-1))")
        if self.n < 1 or self.points < 1:
            raise ValueError("n and points must be positive")


@dataclass(frozen=True)
class LabeledDataset:
    xs: np.ndarray  # (rows, n) float
    labels: np.ndarray  # (rows,) int
    covered: np.ndarray  # (rows,) bool

    def __post_init__(self) -> None:
        if not (len(self.xs) == len(self.labels) == len(self.covered)):
            raise ValueError("dataset columns must have equal length")

    def __len__(self) -> int:
        return len(self.labels)


def _rng(cfg: SynthConfig, lane: int, k: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, lane, k])


def sample_acyclic_graph(
    rng: np.random.Generator, m: int, gamma: float
) -> OrderGraph:
    """One nonempty acyclic graph with per-edge probability gamma/(m(m-1))."""
    p = gamma / (m * (m - 1))
    for _ in range(_RESAMPLE_CAP):
        draw = rng.random((m, m)) < p
        np.fill_diagonal(draw, False)
        if not draw.any():
            continue
        g = OrderGraph(m, tuple(tuple(int(v) for v in row) for row in draw))
        if is_sat(_graph_term(g), m):
            return g
    raise GenerationError(
        f"no acyclic nonempty graph found in {_RESAMPLE_CAP} draws"
    )


def _graph_term(g: OrderGraph) -> OrderingTerm:
    return OrderingTerm(
        tuple(OrderingLiteral(lesser=j, greater=i) for i, j in g.edges())
    )


def _term_formula(term: OrderingTerm) -> Formula:
    if len(term.literals) == 1:
        return term.literals[0]
    return And(term.literals)


def gen_constraints(cfg: SynthConfig) -> ConstraintSet:
    """``alpha`` box-gated constraints, each an Or of ``beta`` acyclic terms."""
    constraints = []
    for k in range(cfg.alpha):
        rng = _rng(cfg, 0, k)
        lo = rng.uniform(0.0, 1.0 - cfg.epsilon, size=cfg.n)
        atoms = []
        for i in range(cfg.n):
            unit = tuple(1.0 if d == i else 0.0 for d in range(cfg.n))
            atoms.append(LinearAtom(unit, ">=", float(lo[i])))
            atoms.append(LinearAtom(unit, "<=", float(lo[i] + cfg.epsilon)))
        disjuncts = tuple(
            _term_formula(_graph_term(sample_acyclic_graph(rng, cfg.m, cfg.gamma)))
            for _ in range(cfg.beta)
        )
        constraints.append(
            SafeOrderingConstraint(
                name=f"c{k}", pre=Precondition(tuple(atoms)), post=Or(disjuncts)
            )
        )
    return ConstraintSet(cfg.n, cfg.m, tuple(constraints))


def _box_bounds(c: SafeOrderingConstraint, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    for atom in c.pre.atoms:
        nz = [i for i, v in enumerate(atom.coeffs) if v != 0.0]
        if len(nz) != 1 or atom.coeffs[nz[0]] != 1.0 or atom.op not in ("<=", ">="):
            raise ValueError(
                f"constraint {c.name!r} is not an axis-aligned box precondition"
            )
        if atom.op == ">=":
            lo[nz[0]] = atom.bound
        else:
            hi[nz[0]] = atom.bound
    if np.isnan(lo).any() or np.isnan(hi).any():
        raise ValueError(f"constraint {c.name!r} does not bound every dimension")
    return lo, hi


def _disjunct_roots(post: Formula, m: int) -> list[list[int]]:
    if not isinstance(post, Or):
        raise ValueError("postcondition must be a disjunction of terms")
    out = []
    for child in post.children:
        term = OrderingTerm(tuple(formula_literals(child)))
        r = sorted(roots(order_graph(term, m)))
        assert r, "acyclic graphs always have at least one root"
        out.append(r)
    return out


def gen_covered_points(cs: ConstraintSet, cfg: SynthConfig) -> LabeledDataset:
    """``points`` inputs drawn inside the precondition boxes, split about
    evenly across constraints, each labeled by a random root of a random
    disjunct of its own constraint."""
    xs, labels = [], []
    base, extra = divmod(cfg.points, cfg.alpha)
    for k, c in enumerate(cs.constraints):
        rng = _rng(cfg, 1, k)
        count = base + (1 if k < extra else 0)
        lo, hi = _box_bounds(c, cs.n)
        per_disjunct = _disjunct_roots(c.post, cs.m)
        for _ in range(count):
            xs.append(rng.uniform(lo, hi))
            root_pool = per_disjunct[int(rng.integers(len(per_disjunct)))]
            labels.append(int(root_pool[int(rng.integers(len(root_pool)))]))
    return LabeledDataset(
        np.array(xs), np.array(labels, dtype=np.int64), np.ones(len(xs), dtype=bool)
    )


def gen_background_points(
    cs: ConstraintSet,
    cfg: SynthConfig,
    labeler: Callable[[np.ndarray], np.ndarray],
) -> LabeledDataset:
    """``points`` inputs rejection-sampled outside every precondition box,
    labeled by the supplied classifier."""
    rng = _rng(cfg, 2)
    kept: list[np.ndarray] = []
    total = 0
    for _ in range(_BACKGROUND_BATCH_CAP):
        draw = rng.uniform(0.0, 1.0, size=(cfg.points, cfg.n))
        outside = ~eval_pre_batch(cs, draw).any(axis=1)
        kept.append(draw[outside])
        total += int(outside.sum())
        if total >= cfg.points:
            break
    else:
        raise GenerationError(
            "precondition boxes cover too much of the cube to sample background"
        )
    xs = np.concatenate(kept)[: cfg.points]
    labels = np.asarray(labeler(xs), dtype=np.int64)
    return LabeledDataset(xs, labels, np.zeros(len(xs), dtype=bool))


def combine(covered: LabeledDataset, background: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(
        np.concatenate([covered.xs, background.xs]),
        np.concatenate([covered.labels, background.labels]),
        np.concatenate([covered.covered, background.covered]),
    )


class NearestCentroidLabeler:
    """Toy deterministic classifier: logit of class k is the negated
    Euclidean distance to the centroid of its training points. Classes never
    seen in training receive a large constant distance, offset by the class
    index so logits stay distinct."""

    def __init__(self, m: int):
        self.m = m
        self.centroids: np.ndarray | None = None
        self._missing_penalty = np.zeros(m)

    def fit(self, xs: np.ndarray, labels: np.ndarray) -> "NearestCentroidLabeler":
        n = xs.shape[1]
        self.centroids = np.full((self.m, n), np.nan)
        self._missing_penalty = np.zeros(self.m)
        for k in range(self.m):
            rows = labels == k
            if rows.any():
                self.centroids[k] = xs[rows].mean(axis=0)
            else:
                self._missing_penalty[k] = 1e6 + k
        return self

    def predict_logits(self, xs: np.ndarray) -> np.ndarray:
        if self.centroids is None:
            raise RuntimeError("labeler is not fitted")
        filled = np.nan_to_num(self.centroids, nan=0.0)
        dists = np.linalg.norm(xs[:, None, :] - filled[None, :, :], axis=2)
        return -(dists + self._missing_penalty[None, :])

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        return self.predict_logits(xs).argmax(axis=1)


def gen_dataset(
    cfg: SynthConfig,
) -> tuple[ConstraintSet, LabeledDataset, NearestCentroidLabeler]:
    """Full pipeline: constraints, 2 * points labeled rows (half covered),
    and the background labeler fitted on the covered half."""
    cs = gen_constraints(cfg)
    covered = gen_covered_points(cs, cfg)
    labeler = NearestCentroidLabeler(cfg.m).fit(covered.xs, covered.labels)
    background = gen_background_points(cs, cfg, labeler)
    return cs, combine(covered, background), labeler


# ---------------------------------------------------------------------------
# Dataset CSV: header x0,...,x{n-1},label,covered
# ---------------------------------------------------------------------------


def dataset_to_csv(ds: LabeledDataset) -> str:
    n = ds.xs.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(n)] + ["label", "covered"])
    for row, label, cov in zip(ds.xs, ds.labels, ds.covered):
        writer.writerow(
            [repr(float(v)) for v in row] + [int(label), int(cov)]
        )
    return buf.getvalue()


def dataset_from_csv(text: str) -> LabeledDataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[-2:] != ["label", "covered"]:
        raise ValueError("dataset CSV must end with label,covered columns")
    n = len(header) - 2
    xs, labels, covered = [], [], []
    for row in reader:
        xs.append([float(v) for v in row[:n]])
        labels.append(int(row[n]))
        covered.append(bool(int(row[n + 1])))
    return LabeledDataset(
        np.array(xs), np.array(labels, dtype=np.int64), np.array(covered, dtype=bool)
    )
