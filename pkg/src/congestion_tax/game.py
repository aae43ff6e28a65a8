"""Nonatomic congestion games: costs, strategies, loads, potential and social cost.

Strategies are represented as one ``dict`` per commodity mapping an action (a
tuple of facility indices) to the mass of players using it.  This works for
explicit action lists and for network games, where actions are paths that are
only discovered on demand.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import AssumptionError, InfeasibleStrategyError

Action = tuple
Strategy = list  # list[dict[Action, float]]

SUPPORT_TOL = 1e-9
WEIGHT_TOL = 1e-12
_CHECK_GRID = np.linspace(0.0, 1.0, 1024)
_CHECK_TOL = 1e-12


class CostFunction:
    """Polynomial cost ``c(u) = sum_k a_k u^k`` on [0, 1].

    Constant, affine and monomial costs are thin constructors around the
    polynomial form, so derivatives and antiderivatives are exact.  With
    ``validate=True`` the cost is checked on a 1024-point grid for: values in
    [0, 1], monotonicity, and a non-decreasing marginal-cost tax ``u c'(u)``.
    """

    def __init__(self, coefficients: Sequence[float], kind: str = "polynomial",
                 params: dict | None = None, validate: bool = True):
        coef = np.trim_zeros(np.asarray(coefficients, dtype=float), "b")
        self.coef = coef if coef.size else np.zeros(1)
        self._d1 = P.polyder(self.coef) if self.coef.size > 1 else np.zeros(1)
        self._d2 = P.polyder(self._d1) if self._d1.size > 1 else np.zeros(1)
        self._int = P.polyint(self.coef)
        self.kind = kind
        self.params = dict(params or {"coefficients": self.coef.tolist()})
        if validate:
            self._validate()

    @classmethod
    def constant(cls, c: float, **kw) -> "CostFunction":
        return cls([c], kind="constant", params={"c": c}, **kw)

    @classmethod
    def affine(cls, a: float, b: float, **kw) -> "CostFunction":
        """``c(u) = a + b u``."""
        return cls([a, b], kind="affine", params={"a": a, "b": b}, **kw)

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], **kw) -> "CostFunction":
        """Coefficients in ascending powers of u."""
        return cls(coefficients, kind="polynomial",
                   params={"coefficients": list(map(float, coefficients))}, **kw)

    @classmethod
    def monomial(cls, scale: float, power: int, **kw) -> "CostFunction":
        """``c(u) = scale * u**power``."""
        if int(power) != power or power < 0:
            raise ValueError(f"monomial power must be a non-negative integer, got {power!r}")
        coef = np.zeros(int(power) + 1)
        coef[-1] = scale
        return cls(coef, kind="monomial_power", params={"scale": scale, "power": int(power)}, **kw)

    def _validate(self):
        u = _CHECK_GRID
        v = self(u)
        if v.min() < -_CHECK_TOL or v.max() > 1.0 + _CHECK_TOL:
            raise AssumptionError(f"{self!r}: values leave [0, 1] (range [{v.min():.4g}, {v.max():.4g}])")
        d = self.derivative(u)
        if d.min() < -_CHECK_TOL:
            k = int(np.argmin(d))
            raise AssumptionError(f"{self!r}: not monotone, c'({u[k]:.4g}) = {d[k]:.4g} < 0")
        m = u * d
        dm = np.diff(m)
        if dm.min() < -_CHECK_TOL:
            k = int(np.argmin(dm))
            raise AssumptionError(
                f"{self!r}: marginal-cost tax u*c'(u) decreases near u = {u[k]:.4g}")

    def __call__(self, u):
        return P.polyval(u, self.coef)

    def derivative(self, u):
        return P.polyval(u, self._d1)

    slope = derivative

    def second_derivative(self, u):
        return P.polyval(u, self._d2)

    def antiderivative(self, u):
        """Integral from 0 to u."""
        return P.polyval(u, self._int)

    integral = antiderivative

    @property
    def smoothness(self) -> float:
        """Bound on |c''| over [0, 1] (Lipschitz constant of c')."""
        if self._d2.size == 1 and self._d2[0] == 0.0:
            return 0.0
        # |c''| is maximised at an endpoint or at a critical point of c''
        cands = [0.0, 1.0]
        d3 = P.polyder(self._d2)
        if d3.size > 1 or d3[0] != 0.0:
            roots = P.polyroots(d3) if d3.size > 1 else []
            cands += [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 and 0 <= r.real <= 1]
        return float(max(abs(self.second_derivative(c)) for c in cands))

    def marginal_tax(self) -> "CostFunction":
        """The polynomial ``u c'(u)``."""
        coef = np.concatenate(([0.0], self._d1)) if self.coef.size > 1 else np.zeros(1)
        return CostFunction(coef, kind="marginal_tax", validate=False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "CostFunction":
        kind = d.get("kind", "polynomial")
        if kind == "constant":
            return cls.constant(d["c"], validate=validate)
        if kind == "affine":
            return cls.affine(d["a"], d["b"], validate=validate)
        if kind in ("monomial", "monomial_power"):
            return cls.monomial(d.get("scale", 1.0), d["power"], validate=validate)
        if kind == "polynomial":
            return cls.polynomial(d["coefficients"], validate=validate)
        raise ValueError(f"unknown cost kind {kind!r}")

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"CostFunction.{self.kind}({args})"


def marginal_cost_tax(cf: CostFunction) -> CostFunction:
    """Marginal-cost tax ``u -> u c'(u)`` of a cost; used by oracles and tests only."""
    return cf.marginal_tax()


class CongestionGame:
    """Congestion game with explicitly listed actions.

    ``actions[i]`` is the action set of commodity ``i``; each action is an
    iterable of facility indices.  Ties in :meth:`best_response` go to the
    action with the lowest index.
    """

    def __init__(self, costs: Sequence[CostFunction], weights: Sequence[float],
                 actions: Sequence[Sequence[Iterable[int]]]):
        self.costs = tuple(costs)
        self.weights = np.asarray(weights, dtype=float)
        F = len(self.costs)
        if self.weights.ndim != 1 or self.weights.size != len(actions):
            raise ValueError("one weight per commodity is required")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("commodity weights must lie in [0, 1]")
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"commodity weights must sum to 1, got {self.weights.sum()!r}")
        acts = []
        for i, A_i in enumerate(actions):
            A_i = [tuple(sorted(set(int(f) for f in a))) for a in A_i]
            if not A_i:
                raise ValueError(f"commodity {i} has an empty action set")
            for a in A_i:
                if not a:
                    raise ValueError(f"commodity {i} has an empty action")
                if a[0] < 0 or a[-1] >= F:
                    raise ValueError(f"commodity {i} uses an unknown facility in {a}")
            acts.append(tuple(A_i))
        self.actions = tuple(acts)
        self._incidence = [self._build_incidence(A_i) for A_i in self.actions]

    def _build_incidence(self, A_i) -> np.ndarray:
        M = np.zeros((len(A_i), self.n_facilities))
        for k, a in enumerate(A_i):
            M[k, list(a)] = 1.0
        return M

    @property
    def n_facilities(self) -> int:
        return len(self.costs)

    @property
    def n_commodities(self) -> int:
        return self.weights.size

    @property
    def n_actions(self) -> int:
        return sum(len(A) for A in self.actions)

    @property
    def smoothness(self) -> float:
        return max(c.smoothness for c in self.costs)

    def incidence(self, i: int) -> np.ndarray:
        """0/1 matrix with one row per action of commodity ``i``."""
        return self._incidence[i]

    def iter_actions(self, i: int) -> Iterator[Action]:
        return iter(self.actions[i])

    def best_response(self, i: int, facility_cost) -> tuple[Action, float]:
        """Cheapest action of commodity ``i`` under per-facility costs."""
        costs = self._incidence[i] @ np.asarray(facility_cost, dtype=float)
        k = int(np.argmin(costs))
        return self.actions[i][k], float(costs[k])

    def is_action(self, i: int, a: Action) -> bool:
        return tuple(sorted(a)) in self.actions[i]

    def uniform_strategy(self) -> Strategy:
        return [{a: w / len(A) for a in A} for w, A in zip(self.weights, self.actions)]

    def facility_cost(self, y) -> np.ndarray:
        return np.array([c(v) for c, v in zip(self.costs, np.asarray(y, dtype=float))])

    def __repr__(self) -> str:
        return (f"CongestionGame(F={self.n_facilities}, m={self.n_commodities}, "
                f"A={self.n_actions})")


def pigou_game(c: float, p: int) -> CongestionGame:
    """Nonlinear Pigou example: constant-cost link ``c`` in parallel with ``u**p``."""
    return CongestionGame([CostFunction.constant(c), CostFunction.monomial(1.0, p)],
                          [1.0], [[(0,), (1,)]])


def check_strategy(game, x: Strategy, tol: float = 1e-9) -> None:
    """Raise :class:`InfeasibleStrategyError` unless ``x`` is feasible for ``game``."""
    if len(x) != game.n_commodities:
        raise InfeasibleStrategyError(f"expected {game.n_commodities} commodities, got {len(x)}")
    for i, x_i in enumerate(x):
        total = 0.0
        for a, v in x_i.items():
            if v < -tol:
                raise InfeasibleStrategyError(f"negative mass {v!r} on action {a} of commodity {i}")
            if not game.is_action(i, a):
                raise InfeasibleStrategyError(f"{a} is not an action of commodity {i}")
            total += v
        if abs(total - game.weights[i]) > tol:
            raise InfeasibleStrategyError(
                f"commodity {i} distributes {total!r}, expected weight {game.weights[i]!r}")


def commodity_loads(game, x: Strategy, check: bool = True) -> np.ndarray:
    """Per-commodity facility loads, shape (m, F)."""
    if check:
        check_strategy(game, x)
    Y = np.zeros((game.n_commodities, game.n_facilities))
    for i, x_i in enumerate(x):
        for a, v in x_i.items():
            for f in a:
                Y[i, f] += v
    return Y


def facility_load(game, x: Strategy, check: bool = True) -> np.ndarray:
    """Total facility load ``y_f = sum_i sum_{a ∋ f} x_{i,a}``."""
    return commodity_loads(game, x, check=check).sum(axis=0)


def _tax_list(tax, F):
    if tax is None:
        return [None] * F
    tax = list(tax)
    if len(tax) != F:
        raise ValueError(f"expected one tax per facility ({F}), got {len(tax)}")
    return tax


def potential(game, tax, y) -> float:
    """``sum_f ∫_0^{y_f} (c_f + tau_f)``; ``tax`` is None or one tax (or None) per facility.

    Tax entries need an ``integral(u)`` method, e.g. :class:`PiecewiseLinear`
    or :class:`CostFunction`.
    """
    y = np.asarray(y, dtype=float)
    total = 0.0
    for c, t, v in zip(game.costs, _tax_list(tax, game.n_facilities), y):
        total += float(c.antiderivative(v))
        if t is not None:
            total += float(t.integral(v))
    return total


def potential_gradient(game, tax, y) -> np.ndarray:
    """Partial derivatives of :func:`potential`: ``c_f(y_f) + tau_f(y_f)``."""
    y = np.asarray(y, dtype=float)
    g = np.empty(y.size)
    for f, (c, t, v) in enumerate(zip(game.costs, _tax_list(tax, game.n_facilities), y)):
        g[f] = c(v) + (t(v) if t is not None else 0.0)
    return g


def social_cost(game, y) -> float:
    """``sum_f y_f c_f(y_f)``; taxes are transfers and never counted."""
    y = np.asarray(y, dtype=float)
    return float(sum(v * c(v) for c, v in zip(game.costs, y)))


def action_cost(a: Action, c) -> float:
    return float(sum(c[f] for f in a))


def gap(game, i: int, x: Strategy, c, support_tol: float = SUPPORT_TOL) -> float:
    """Cheapest off-support action cost minus the dearest in-support action cost.

    Returns +inf when commodity ``i`` has no off-support action (or no
    in-support action).  Actions are enumerated, so for network games this is
    only practical on small graphs.
    """
    x_i = x[i]
    lo_off = math.inf
    hi_in = -math.inf
    for a in game.iter_actions(i):
        cost = action_cost(a, c)
        if x_i.get(a, 0.0) > support_tol:
            hi_in = max(hi_in, cost)
        else:
            lo_off = min(lo_off, cost)
    if math.isinf(lo_off) or math.isinf(hi_in):
        return math.inf
    return lo_off - hi_in


def max_regret(game, x: Strategy, c, support_tol: float = SUPPORT_TOL) -> float:
    """Largest (in-support cost - best-response cost) over commodities."""
    worst = 0.0
    for i, x_i in enumerate(x):
        costs = [action_cost(a, c) for a, v in x_i.items() if v > support_tol]
        if not costs:
            continue
        _, best = game.best_response(i, c)
        worst = max(worst, max(costs) - best)
    return worst


def is_epsilon_equilibrium(game, x: Strategy, c, eps: float,
                           support_tol: float = SUPPORT_TOL) -> bool:
    """True iff every in-support action costs at most ``eps`` more than the cheapest action."""
    return max_regret(game, x, c, support_tol) <= eps


def price_of_anarchy(game, solve: Callable | None = None, optimum: float | None = None) -> float:
    """Untaxed equilibrium social cost over the optimal social cost (diagnostic).

    The equilibrium is whatever the solver returns; when the untaxed potential
    is not strictly convex, other equilibria may be worse.
    """
    if solve is None:
        from .equilibrium import solve_equilibrium
        solve = lambda g: solve_equilibrium(g, None)
    if optimum is None:
        from .oracles import optimal_social_cost
        optimum = optimal_social_cost(game).value
    if optimum <= 0.0:
        raise ZeroDivisionError("price of anarchy is undefined when the optimal social cost is 0")
    fb = solve(game)
    return social_cost(game, fb.load) / optimum
