"""Shared fixtures and the acceptance-summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from scnet.constraints import (
    And,
    ConstraintSet,
    LinearAtom,
    Or,
    OrderingLiteral,
    OrderingTerm,
    Precondition,
    SafeOrderingConstraint,
)

# Populated by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((criterion, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {criterion}: {detail}")


def unit_coeffs(i: int, n: int) -> tuple[float, ...]:
    return tuple(1.0 if k == i else 0.0 for k in range(n))


def acas_phi2() -> ConstraintSet:
    """The distant-slow-intruder property: class 0 must not score minimal.
    Inputs are [rho, theta, psi, v_own, v_int]."""
    pre = Precondition(
        (
            LinearAtom(unit_coeffs(0, 5), ">=", 55947.691),
            LinearAtom(unit_coeffs(3, 5), ">=", 1145),
            LinearAtom(unit_coeffs(4, 5), "<=", 60),
        )
    )
    post = Or(
        (
            OrderingLiteral(1, 0),
            OrderingLiteral(2, 0),
            OrderingLiteral(3, 0),
            OrderingLiteral(4, 0),
        )
    )
    return ConstraintSet(5, 5, (SafeOrderingConstraint("phi2", pre, post),))


PHI2_X = [60000.0, 0.0, 0.0, 1200.0, 50.0]
PHI2_VIOLATING_Y = [100.0, 900.0, 300.0, 140.0, 500.0]
PHI2_SAFE_Y = [300.0, 900.0, 140.0, 100.0, 500.0]


def figure_term() -> OrderingTerm:
    """Term whose graph has edges (0,4),(1,2),(1,3),(1,4),(3,2)."""
    return OrderingTerm(
        (
            OrderingLiteral(4, 0),
            OrderingLiteral(2, 1),
            OrderingLiteral(3, 1),
            OrderingLiteral(4, 1),
            OrderingLiteral(2, 3),
        )
    )


FIGURE_Y = [2.0, 3.0, 1.0, 4.0, 5.0]
FIGURE_PI = [2, 0, 4, 1, 3]


def random_term(rng: np.random.Generator, m: int, max_lits: int = 4) -> OrderingTerm:
    lits = []
    for _ in range(int(rng.integers(0, max_lits + 1))):
        i, j = rng.choice(m, size=2, replace=False)
        lits.append(OrderingLiteral(int(i), int(j)))
    return OrderingTerm(tuple(lits))


def random_instance(
    rng: np.random.Generator,
    n: int = 2,
    m_max: int = 5,
    alpha_max: int = 3,
    beta_max: int = 3,
) -> tuple[ConstraintSet, list[float], list[float]]:
    """One random (constraint set, input, logits) triple. Preconditions are
    trivially true half the time so several constraints often fire together;
    terms may be cyclic so abstention cases occur."""
    m = int(rng.integers(2, m_max + 1))
    constraints = []
    for k in range(int(rng.integers(1, alpha_max + 1))):
        atoms = []
        if rng.random() < 0.5:
            for _ in range(int(rng.integers(1, 3))):
                atoms.append(
                    LinearAtom(
                        tuple(float(v) for v in rng.normal(size=n)),
                        str(rng.choice(["<=", ">=", "<", ">"])),
                        float(rng.normal()),
                    )
                )
        disjuncts = []
        for _ in range(int(rng.integers(1, beta_max + 1))):
            lits = []
            for _ in range(int(rng.integers(1, 4))):
                i, j = rng.choice(m, size=2, replace=False)
                lits.append(OrderingLiteral(int(i), int(j)))
            lits = tuple(dict.fromkeys(lits))
            disjuncts.append(And(lits) if len(lits) > 1 else lits[0])
        constraints.append(
            SafeOrderingConstraint(
                f"c{k}", Precondition(tuple(atoms)), Or(tuple(disjuncts))
            )
        )
    cs = ConstraintSet(n, m, tuple(constraints))
    x = [float(v) for v in rng.normal(size=n)]
    y = [float(v) for v in rng.uniform(size=m)]
    return cs, x, y


def random_dag(rng: np.random.Generator, m: int, p: float = 0.3):
    """Random acyclic adjacency by masking a random permutation's upper set."""
    perm = rng.permutation(m)
    pos = np.empty(m, dtype=int)
    pos[perm] = np.arange(m)
    adj = [[0] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i != j and pos[i] < pos[j] and rng.random() < p:
                adj[i][j] = 1
    return adj


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
