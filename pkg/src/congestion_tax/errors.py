"""Exception types shared across the package."""


class CongestionTaxError(Exception):
    """Base class for all package errors."""


class DomainError(CongestionTaxError, ValueError):
    """An argument lies outside the domain of a function (e.g. x not in [0, 1])."""


class RangeError(CongestionTaxError, ValueError):
    """Grid rounding was asked for a value with no member on the requested side."""


class AssumptionError(CongestionTaxError, ValueError):
    """A cost function violates monotonicity, smoothness or marginal-tax monotonicity."""


class InfeasibleStrategyError(CongestionTaxError, ValueError):
    """A strategy does not satisfy the per-commodity simplex constraints."""


class DecompositionError(CongestionTaxError, ValueError):
    """A load vector could not be decomposed into a feasible strategy."""


class NoPathError(CongestionTaxError, ValueError):
    """The target vertex is unreachable from the source."""


class SizeError(CongestionTaxError, ValueError):
    """An instance is too large for a brute-force oracle."""


class ContractError(CongestionTaxError, RuntimeError):
    """Inputs are mutually inconsistent (e.g. strategy is not an equilibrium)."""


class SolverError(CongestionTaxError, RuntimeError):
    """The equilibrium solver did not certify within its iteration budget.

    The best iterate and its certified epsilon are attached so callers can
    decide whether the approximate answer is usable.
    """

    def __init__(self, message, strategy=None, load=None, certified_eps=float("inf")):
        super().__init__(message)
        self.strategy = strategy
        self.load = load
        self.certified_eps = certified_eps


class DegeneratePerturbationError(CongestionTaxError, RuntimeError):
    """A probe tax failed to move the equilibrium load of the probed facility."""
