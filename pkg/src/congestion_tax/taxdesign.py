"""The tax-design loop: learn a near-marginal-cost tax from equilibrium feedback.

Each facility carries a non-decreasing base tax ``tau_hat_f`` (piece-wise
linear, breakpoints on the grid {0, 1/K, ..., 1}) and the deployed tax is
``tau_hat_f(u) + eps*u``.  A grid point is *known* for a facility once the
base tax there has been estimated from a two-point slope measurement.  A round
deploys the current tax, asks :mod:`explore` for a boundary tax, and if one
exists deploys it with a small push ``delta`` on one facility; the resulting
change in load and cost gives ``u * dc/dy``, the marginal-cost tax at the
neighbouring grid points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .equilibrium import EquilibriumFeedback, SolverConfig, solve_equilibrium
from .errors import ContractError, DegeneratePerturbationError
from .explore import Certified, Probe, decompose, find_exploratory_tax
from .game import social_cost
from .pwl import Grid, KnownIndexSet, PiecewiseLinear, clip, grid_ceil, grid_floor

# A probe that moves the probed load by less than this is treated as degenerate.
DEGENERATE_TOL = 1e-12

Oracle = Callable[[Sequence[PiecewiseLinear]], EquilibriumFeedback]


@dataclass(frozen=True)
class TaxPlan:
    """Base taxes ``tau_hat_f`` plus the slope augmentation ``eps``."""

    base: tuple
    eps: float

    def applied(self) -> list[PiecewiseLinear]:
        return [b.add_linear(self.eps) for b in self.base]

    def values(self, y) -> np.ndarray:
        return np.array([t(v) for t, v in zip(self.applied(), y)])

    def replace(self, f: int, new_base: PiecewiseLinear) -> "TaxPlan":
        base = list(self.base)
        base[f] = new_base
        return TaxPlan(tuple(base), self.eps)


@dataclass
class RoundRecord:
    round: int
    load: np.ndarray
    cost: np.ndarray
    social_cost: float
    outcome: str  # "certified", "probe" or "aborted"
    queries: int = 1
    facility: int | None = None
    sign: int | None = None
    branch: str | None = None
    probe_tax: np.ndarray | None = None
    perturbed_load: np.ndarray | None = None
    perturbed_cost: np.ndarray | None = None
    perturbed_social_cost: float | None = None
    displacement: float | None = None
    updates: list = field(default_factory=list)  # (grid point, new base value)
    known_total: int = 0
    applied_tax: list | None = None
    known_before: list | None = None  # grid points known at the start of the round
    strategy: list | None = None  # decomposition handed to the exploratory search
    ranges: dict | None = None
    tax_values: np.ndarray | None = None


@dataclass
class DesignerState:
    grid: Grid
    eps: float
    beta: float
    delta: float
    plan: TaxPlan
    known: list
    t: int = 0
    trace: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    @property
    def n_facilities(self) -> int:
        return len(self.known)

    @property
    def known_total(self) -> int:
        return sum(len(k) for k in self.known)


@dataclass
class RunResult:
    plan: TaxPlan
    rounds: int
    termination: str  # "subroutine_false", "round_budget_exhausted" or "aborted"
    social_cost: float
    trace: list
    state: DesignerState
    tol_eq: float
    message: str = ""

    @property
    def exploratory_rounds(self) -> int:
        return sum(1 for r in self.trace if r.outcome == "probe")


def init_designer(F: int, eps: float, beta: float) -> DesignerState:
    """Grid ``K = ceil(2 beta / eps)``, push ``delta = eps * Delta**2 / 8`` and the initial tax."""
    if F < 1:
        raise ValueError("at least one facility is required")
    if not eps > 0 or not beta > 0:
        raise ValueError(f"eps and beta must be positive, got eps={eps!r}, beta={beta!r}")
    grid = Grid.for_tolerance(beta, eps)
    base = tuple(PiecewiseLinear.line(0.0, beta, monotone=True) for _ in range(F))
    known = [KnownIndexSet(grid) for _ in range(F)]
    delta = eps * grid.spacing ** 2 / 8.0
    return DesignerState(grid, float(eps), float(beta), delta, TaxPlan(base, float(eps)), known)


def default_tol_eq(state: DesignerState) -> float:
    return min(1e-8, state.delta / 100.0)


def is_known(state: DesignerState, f: int, y_f: float) -> bool:
    g = state.grid
    return g.floor_index(y_f) in state.known[f] and g.ceil_index(y_f) in state.known[f]


def classify_facilities(state: DesignerState, y) -> tuple[list[int], list[int]]:
    """Split facilities into (known, unknown) at the load ``y``."""
    known, unknown = [], []
    for f, v in enumerate(y):
        (known if is_known(state, f, v) else unknown).append(f)
    return known, unknown


def feasible_range(state: DesignerState, f: int, y_f: float) -> tuple[float, float]:
    """Tax values at ``y_f`` that keep every applied slope at least ``eps`` once interpolated."""
    tau = state.plan.applied()[f]
    K_f = state.known[f]
    a = grid_floor(K_f, y_f)
    b = grid_ceil(K_f.with_one(), y_f)
    l = tau(a) + state.eps * (y_f - a)
    r = tau(b) + state.eps * (y_f - b)
    return l, r


def perturbed_tax(state: DesignerState, y, probe: Probe, sign: int | None = None) -> list[PiecewiseLinear]:
    """Deploy the probe values at the current loads and shift the probed facility by ``sign*delta``."""
    sign = probe.sign if sign is None else sign
    out = []
    for f, (tau, v) in enumerate(zip(state.plan.applied(), y)):
        t = tau.update(min(max(v, 0.0), 1.0), probe.tax[f])
        if f == probe.facility:
            t = t.shift(sign * state.delta)
        out.append(t)
    return out


def update_tax(state: DesignerState, f: int, y: float, ydot: float, c: float, cdot: float) -> list:
    """Two-point estimate of ``u c'(u)`` at the unknown grid neighbours of ``y``.

    Clip bounds come from the base tax at the neighbours of ``y`` in the
    known set (the right one taken in the known set augmented with 1), all
    read before any point of this round is written.  Returns the list of
    ``(u, value)`` written.
    """
    dy = y - ydot
    if abs(dy) <= DEGENERATE_TOL:
        raise DegeneratePerturbationError(f"facility {f}: load moved by {dy:.3g} only")
    g = state.grid
    K_f = state.known[f]
    base = state.plan.base[f]
    cands = sorted({g.floor_index(y), g.ceil_index(y)} - set(K_f.indices))
    if not cands:
        raise ContractError(f"facility {f} is already known at load {y!r}")
    lo = base(grid_floor(K_f, y))
    hi = base(grid_ceil(K_f.with_one(), y))
    # a non-decreasing cost gives a non-negative ratio; rounding can flip a zero
    ratio = max((c - cdot) / dy, 0.0)
    written = []
    for k in cands:
        u = g.point(k)
        val = clip(u * ratio, lo, hi)
        base = base.update(u, val)
        written.append((u, val))
    state.plan = state.plan.replace(f, base)
    state.known[f] = K_f.add(*cands)
    return written


def _default_oracle(game, tol_eq: float, solver: SolverConfig | None) -> Oracle:
    cfg = solver or SolverConfig(tol_eq=tol_eq)
    return lambda tax: solve_equilibrium(game, tax, cfg)


def run(game, eps: float, beta: float, oracle: Oracle | None = None, t_max: int | None = None,
        solver: SolverConfig | None = None, reuse_solver_strategy: bool = False,
        on_round: Callable[[RoundRecord], None] | None = None) -> RunResult:
    """Run the learner until the exploratory search certifies the tax or ``t_max`` rounds pass.

    ``oracle(tax)`` must return the equilibrium feedback for a list of
    per-facility taxes; by default the built-in solver is used with
    ``tol_eq = min(1e-8, delta/100)``.  ``on_round`` is called after every
    round, which lets callers persist the trace incrementally.
    """
    F = game.n_facilities
    state = init_designer(F, eps, beta)
    tol_eq = solver.tol_eq if solver is not None else default_tol_eq(state)
    oracle = oracle or _default_oracle(game, tol_eq, solver)
    if t_max is None:
        t_max = int(math.ceil(2 * F * beta / eps)) + F
    last_psi = math.nan

    def finish(kind, psi, msg=""):
        return RunResult(state.plan, state.t, kind, psi, state.trace, state, tol_eq, msg)

    while state.t < t_max:
        state.t += 1
        applied = state.plan.applied()
        fb = oracle(applied)
        y, c = fb.load, fb.cost
        psi = social_cost(game, y)
        last_psi = psi
        rec = RoundRecord(state.t, y, c, psi, "certified", applied_tax=applied,
                          known_before=[k.points for k in state.known])
        _, unknown = classify_facilities(state, y)
        if unknown:
            ranges = {f: feasible_range(state, f, y[f]) for f in unknown}
            x = fb.strategy if reuse_solver_strategy else decompose(
                game, y, fb.commodity_loads if game.n_commodities > 1 else None)
            tau_vals = state.plan.values(y)
            outcome = find_exploratory_tax(game, x, y, c, tau_vals, unknown, ranges)
            rec.strategy, rec.ranges, rec.tax_values = x, ranges, tau_vals
        else:
            outcome = Certified()
            rec.strategy, rec.ranges, rec.tax_values = fb.strategy, {}, state.plan.values(y)
        if isinstance(outcome, Certified):
            rec.known_total = state.known_total
            state.trace.append(rec)
            if on_round:
                on_round(rec)
            return finish("subroutine_false", psi)

        f = outcome.facility
        rec.outcome, rec.facility, rec.sign, rec.branch = "probe", f, outcome.sign, outcome.branch
        rec.probe_tax = outcome.tax
        sign = outcome.sign
        fb2 = oracle(perturbed_tax(state, y, outcome, sign))
        rec.queries = 2
        if abs(fb2.load[f] - y[f]) <= DEGENERATE_TOL:
            sign = -sign
            fb2 = oracle(perturbed_tax(state, y, outcome, sign))
            rec.queries = 3
            rec.sign = sign
        rec.perturbed_load, rec.perturbed_cost = fb2.load, fb2.cost
        rec.perturbed_social_cost = social_cost(game, fb2.load)
        rec.displacement = float(abs(y[f] - fb2.load[f]))
        if rec.displacement <= DEGENERATE_TOL:
            rec.outcome = "aborted"
            rec.known_total = state.known_total
            state.trace.append(rec)
            if on_round:
                on_round(rec)
            return finish("aborted", psi, f"probe on facility {f} did not move its load "
                                          f"(|dy| = {rec.displacement:.3g}) with either sign")
        rec.updates = update_tax(state, f, y[f], fb2.load[f], c[f], fb2.cost[f])
        rec.known_total = state.known_total
        state.trace.append(rec)
        if on_round:
            on_round(rec)
    return finish("round_budget_exhausted", last_psi)
