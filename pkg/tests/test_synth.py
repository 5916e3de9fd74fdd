"""Synthetic constraint and dataset generation."""

from __future__ import annotations

import numpy as np
import pytest

from scnet.constraints import (
    Or,
    OrderingTerm,
    eval_pre,
    formula_literals,
    parse_constraints,
    serialize_constraints,
)
from scnet.errors import GenerationError
from scnet.ordergraph import order_graph, roots
from scnet.synth import (
    LabeledDataset,
    NearestCentroidLabeler,
    SynthConfig,
    dataset_from_csv,
    dataset_to_csv,
    gen_background_points,
    gen_constraints,
    gen_covered_points,
    gen_dataset,
    sample_acyclic_graph,
)

D448 = SynthConfig(alpha=4, beta=4, m=8, points=200, seed=7)


class TestGenConstraints:
    def test_two_class_single_edge(self):
        cfg = SynthConfig(alpha=1, beta=1, m=2, gamma=1.0, points=10, seed=1)
        cs = gen_constraints(cfg)
        assert len(cs.constraints) == 1
        (post,) = [c.post for c in cs.constraints]
        assert isinstance(post, Or) and len(post.children) == 1
        assert len(list(formula_literals(post))) == 1

    def test_default_grid_point_shape(self):
        cs = gen_constraints(D448)
        assert len(cs.constraints) == 4
        for c in cs.constraints:
            assert isinstance(c.post, Or) and len(c.post.children) == 4
            assert len(c.pre.atoms) == 2 * 10

    def test_deterministic(self):
        a = serialize_constraints(gen_constraints(D448))
        b = serialize_constraints(gen_constraints(D448))
        assert a == b

    def test_all_disjunct_graphs_acyclic_nonempty(self):
        cs = gen_constraints(D448)
        for c in cs.constraints:
            for child in c.post.children:
                term = OrderingTerm(tuple(formula_literals(child)))
                assert term.literals
                assert roots(order_graph(term, cs.m))

    def test_resample_cap_surfaces(self):
        # gamma close to saturation forces cyclic draws until the cap trips
        rng = np.random.default_rng(0)
        with pytest.raises(GenerationError):
            sample_acyclic_graph(rng, 2, gamma=1.999999)

    def test_mean_edges_near_gamma(self):
        rng = np.random.default_rng(5)
        counts = []
        for _ in range(10_000):
            g = sample_acyclic_graph(rng, 8, gamma=3.0)
            counts.append(sum(sum(row) for row in g.adj))
        mean = float(np.mean(counts))
        # conditioning on nonempty+acyclic shifts the mean slightly
        assert abs(mean - 3.0) / 3.0 < 0.05

    def test_box_overlap_rate_matches_construction(self):
        rng = np.random.default_rng(11)
        n, eps, trials = 10, 0.4, 10_000
        lo_a = rng.uniform(0, 1 - eps, size=(trials, n))
        lo_b = rng.uniform(0, 1 - eps, size=(trials, n))
        overlap = (np.abs(lo_a - lo_b) <= eps).all(axis=1)
        assert 0.2 <= overlap.mean() <= 0.4


class TestCoveredPoints:
    def test_points_inside_their_box_and_labels_in_roots(self):
        cs = gen_constraints(D448)
        ds = gen_covered_points(cs, D448)
        assert len(ds) == D448.points
        assert ds.covered.all()
        assert (ds.labels >= 0).all() and (ds.labels < D448.m).all()
        for x, label in zip(ds.xs, ds.labels):
            firing = [c for c in cs.constraints if eval_pre(c.pre, x)]
            assert firing
            legal = set()
            for c in firing:
                for child in c.post.children:
                    term = OrderingTerm(tuple(formula_literals(child)))
                    legal |= roots(order_graph(term, cs.m))
            assert int(label) in legal

    def test_count_split_with_remainder(self):
        cfg = SynthConfig(alpha=3, beta=2, m=4, points=200, seed=2)
        ds = gen_covered_points(gen_constraints(cfg), cfg)
        assert len(ds) == 200


class TestBackgroundPoints:
    def test_outside_every_box(self):
        cs = gen_constraints(D448)
        ds = gen_background_points(cs, D448, lambda xs: np.zeros(len(xs), int))
        assert len(ds) == D448.points
        assert not ds.covered.any()
        for x in ds.xs:
            assert not any(eval_pre(c.pre, x) for c in cs.constraints)

    def test_deterministic(self):
        cs = gen_constraints(D448)
        labeler = lambda xs: np.zeros(len(xs), int)
        a = gen_background_points(cs, D448, labeler)
        b = gen_background_points(cs, D448, labeler)
        assert np.array_equal(a.xs, b.xs)


class TestFullDataset:
    def test_two_halves(self):
        cs, ds, labeler = gen_dataset(D448)
        assert len(ds) == 2 * D448.points
        assert ds.covered.sum() == D448.points
        # background labels come from the fitted labeler
        bg = ~ds.covered
        assert np.array_equal(labeler(ds.xs[bg]), ds.labels[bg])

    def test_csv_round_trip(self):
        _, ds, _ = gen_dataset(SynthConfig(alpha=2, beta=2, m=3, points=40, seed=3))
        text = dataset_to_csv(ds)
        back = dataset_from_csv(text)
        assert np.array_equal(back.xs, ds.xs)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.covered, ds.covered)
        assert text.splitlines()[0] == ",".join(
            [f"x{i}" for i in range(10)] + ["label", "covered"]
        )

    def test_constraints_file_round_trip(self):
        cfg = SynthConfig(alpha=1, beta=1, m=2, gamma=1.0, points=10, seed=4)
        cs = gen_constraints(cfg)
        assert parse_constraints(serialize_constraints(cs)) == cs


class TestLabeler:
    def test_unseen_class_never_wins(self):
        xs = np.array([[0.0, 0.0], [1.0, 1.0]])
        labels = np.array([0, 2])
        lab = NearestCentroidLabeler(4).fit(xs, labels)
        logits = lab.predict_logits(np.array([[0.1, 0.1]]))
        assert logits.shape == (1, 4)
        assert lab(np.array([[0.1, 0.1]]))[0] == 0
        assert lab(np.array([[0.9, 0.9]]))[0] == 2

    def test_mismatched_columns_rejected(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((3, 2)), np.zeros(2, int), np.zeros(3, bool))


class TestConfigValidation:
    def test_gamma_range(self):
        with pytest.raises(ValueError):
            SynthConfig(alpha=1, beta=1, m=2, gamma=2.0)

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            SynthConfig(alpha=1, beta=1, m=2, gamma=1.0, epsilon=0.0)
