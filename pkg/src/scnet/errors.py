"""Exception types shared across the package."""

from __future__ import annotations


class InputShapeError(ValueError):
    """An input vector does not match the declared input dimension."""


class ConstraintShapeError(ValueError):
    """A formula references an output index outside the declared range."""


class ConstraintParseError(ValueError):
    """A constraint file is malformed. Carries the JSON path of the offending node."""

    def __init__(self, location: str, message: str):
        self.location = location
        self.message = message
        super().__init__(f"{location}: {message}")


class DataParseError(ValueError):
    """A CSV data file is malformed. Carries the offending row number."""

    def __init__(self, location: str, message: str):
        self.location = location
        self.message = message
        super().__init__(f"{location}: {message}")


class ContractViolationError(RuntimeError):
    """A caller violated a documented precondition (e.g. sorting a cyclic graph)."""


class BudgetExceededError(RuntimeError):
    """The disjunct search exceeded its enumeration budget. Distinct from an
    unsatisfiable result: the search was aborted, not exhausted."""

    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"disjunct search exceeded budget of {budget} terms")


class GenerationError(RuntimeError):
    """Synthetic generation exceeded a resampling cap."""


class GuardError(ValueError):
    """A brute-force oracle was invoked beyond its hard-coded scale cap."""
