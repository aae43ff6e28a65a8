"""Equilibrium feedback: the Nash load of a taxed game.

The Nash load minimises the potential ``sum_f ∫ (c_f + tau_f)`` over feasible
loads.  The default ``"newton"`` step rule is simplicial decomposition: best
responses (cheapest actions, or shortest paths on networks) generate columns,
and a restricted master over the generated columns is solved by active-set
Newton steps with an exact line search.  Probe taxes move loads by roughly
1e-9, so the iterate is polished until the in-support cost spread stops
shrinking, which is typically at rounding level.

The classic ``"frank_wolfe"`` and ``"pairwise_frank_wolfe"`` rules are also
available; they stop as soon as the certificate drops below ``tol_eq``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import SolverError
from .game import SUPPORT_TOL, Strategy, max_regret, potential

STEP_RULES = ("newton", "frank_wolfe", "pairwise_frank_wolfe")
# The Newton rule keeps polishing until the spread is below this (relative to the cost scale).
POLISH_TOL = 1e-14
STALL_LIMIT = 4


@dataclass(frozen=True)
class SolverConfig:
    tol_eq: float = 1e-8
    max_iters: int = 20000
    step_rule: str = "newton"

    def __post_init__(self):
        if not self.tol_eq > 0:
            raise ValueError(f"tol_eq must be positive, got {self.tol_eq!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}; choose from {STEP_RULES}")


@dataclass
class EquilibriumFeedback:
    """Nash load and untaxed Nash cost, plus solver internals for tests and oracles."""

    load: np.ndarray
    cost: np.ndarray
    strategy: Strategy
    commodity_loads: np.ndarray
    taxed_cost: np.ndarray
    certified_eps: float
    iterations: int


@dataclass
class SolverTrace:
    """Per-iteration rows ``(iteration, potential, fw_gap)``."""

    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "potential", "fw_gap"])
            for it, pot, g in self.rows:
                w.writerow([it, f"{pot:.12g}", f"{g:.12g}"])


def as_tax_list(tax, F: int) -> list:
    """Normalise ``None``, a TaxPlan (anything with ``applied()``) or a sequence to one entry per facility."""
    if tax is None:
        return [None] * F
    if hasattr(tax, "applied"):
        tax = tax.applied()
    tax = list(tax)
    if len(tax) != F:
        raise ValueError(f"expected {F} facility taxes, got {len(tax)}")
    return tax


class _Objective:
    def __init__(self, game, taxes):
        self.costs = game.costs
        self.taxes = taxes

    def grad(self, y: np.ndarray) -> np.ndarray:
        g = np.empty(y.size)
        for f, (c, t) in enumerate(zip(self.costs, self.taxes)):
            v = min(max(y[f], 0.0), 1.0)
            g[f] = c(v) + (t(v) if t is not None else 0.0)
        return g

    def hess(self, y: np.ndarray) -> np.ndarray:
        h = np.empty(y.size)
        for f, (c, t) in enumerate(zip(self.costs, self.taxes)):
            v = min(max(y[f], 0.0), 1.0)
            h[f] = c.derivative(v) + (t.slope(v) if t is not None else 0.0)
        return h


class _Columns:
    """Generated actions with their masses, flattened across commodities."""

    def __init__(self, F: int, m: int):
        self.F = F
        self.m = m
        self.actions: list = []
        self.owner: list[int] = []
        self.index: list[dict] = [dict() for _ in range(m)]
        self.Z = np.zeros((0, F))
        self.lam = np.zeros(0)

    def add(self, i: int, a) -> int:
        k = self.index[i].get(a)
        if k is not None:
            return k
        k = len(self.actions)
        self.actions.append(a)
        self.owner.append(i)
        self.index[i][a] = k
        row = np.zeros((1, self.F))
        for f in a:
            row[0, f] += 1.0
        self.Z = np.vstack([self.Z, row])
        self.lam = np.append(self.lam, 0.0)
        return k

    @property
    def owners(self) -> np.ndarray:
        return np.asarray(self.owner, dtype=int)

    def load(self) -> np.ndarray:
        return self.lam @ self.Z

    def commodity_loads(self) -> np.ndarray:
        Y = np.zeros((self.m, self.F))
        np.add.at(Y, self.owners, self.lam[:, None] * self.Z)
        return Y

    def renormalise(self, weights: np.ndarray) -> None:
        self.lam[self.lam < 0.0] = 0.0
        own = self.owners
        for i in range(self.m):
            idx = np.flatnonzero(own == i)
            k = idx[np.argmax(self.lam[idx])]
            self.lam[k] += weights[i] - self.lam[idx].sum()

    def strategy(self) -> Strategy:
        x: Strategy = [dict() for _ in range(self.m)]
        for a, i, v in zip(self.actions, self.owner, self.lam):
            if v > 0.0:
                x[i][a] = float(v)
        return x


def _line_search(obj: _Objective, y: np.ndarray, z: np.ndarray, amax: float) -> float:
    def dphi(a):
        return float(obj.grad(y + a * z) @ z)

    if dphi(0.0) >= 0.0:
        return 0.0
    if not math.isfinite(amax):
        amax = 1.0
        while dphi(amax) < 0.0 and amax < 1e6:
            amax *= 2.0
    if dphi(amax) <= 0.0:
        return amax
    return brentq(dphi, 0.0, amax, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _initial_columns(game, cols: _Columns, obj: _Objective, init: Strategy | None) -> None:
    if init is not None:
        for i, x_i in enumerate(init):
            for a, v in x_i.items():
                if v > 0.0:
                    k = cols.add(i, tuple(a))
                    cols.lam[k] += v
        cols.renormalise(game.weights)
        return
    if hasattr(game, "actions"):
        start = game.uniform_strategy()
        for i, x_i in enumerate(start):
            for a, v in x_i.items():
                k = cols.add(i, a)
                cols.lam[k] = v
        return
    # network games: shortest paths at zero load
    g0 = obj.grad(np.zeros(game.n_facilities))
    for i in range(game.n_commodities):
        a, _ = game.best_response(i, g0)
        k = cols.add(i, a)
        cols.lam[k] = game.weights[i]


def _spread(q: np.ndarray, lam: np.ndarray, own: np.ndarray, m: int, support: float):
    """Per commodity: dearest column carrying more than ``support`` mass, and cheapest column."""
    hi = np.full(m, -math.inf)
    lo = np.full(m, math.inf)
    hi_k = np.zeros(m, dtype=int)
    lo_k = np.zeros(m, dtype=int)
    for k in range(q.size):
        i = own[k]
        if lam[k] > support and q[k] > hi[i]:
            hi[i], hi_k[i] = q[k], k
        if q[k] < lo[i]:
            lo[i], lo_k[i] = q[k], k
    return hi, lo, hi_k, lo_k


def _newton_direction(cols: _Columns, q: np.ndarray, h: np.ndarray, free: np.ndarray):
    Zs = cols.Z[free]
    own = cols.owners[free]
    n = free.size
    comms = np.unique(own)
    E = (own[None, :] == comms[:, None]).astype(float)
    H = (Zs * h[None, :]) @ Zs.T
    KKT = np.block([[H, E.T], [E, np.zeros((comms.size, comms.size))]])
    rhs = np.concatenate([-q[free], np.zeros(comms.size)])
    sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
    d = sol[:n]
    # remove drift so each commodity's mass is conserved exactly in exact arithmetic
    for c in comms:
        sel = own == c
        d[sel] -= d[sel].mean()
    return d


def _newton_step(game, cols: _Columns, obj: _Objective, q, lo) -> bool:
    y = cols.load()
    h = obj.hess(y)
    own = cols.owners
    # free columns: those carrying mass, plus unused columns cheaper than every used one
    min_used = np.full(cols.m, math.inf)
    for k in range(q.size):
        if cols.lam[k] > 0.0:
            min_used[own[k]] = min(min_used[own[k]], q[k])
    free = [k for k in range(q.size) if cols.lam[k] > 0.0 or q[k] < min_used[own[k]]]
    free = np.asarray(free, dtype=int)
    for _ in range(q.size + 1):
        d = _newton_direction(cols, q, h, free)
        neg = d < 0.0
        if not neg.any():
            break
        ratios = cols.lam[free][neg] / -d[neg]
        if ratios.min() > 0.0:
            break
        # an unused column would go negative immediately: pin it at zero
        blocked = free[neg][ratios <= 0.0]
        free = np.setdiff1d(free, blocked)
        if free.size == 0:
            return False
    slope = float(q[free] @ d)
    if not slope < 0.0:
        return False
    neg = d < 0.0
    amax = float(np.min(cols.lam[free][neg] / -d[neg])) if neg.any() else math.inf
    z = d @ cols.Z[free]
    alpha = _line_search(obj, y, z, amax)
    if alpha <= 0.0:
        return False
    new = cols.lam[free] + alpha * d
    if alpha == amax:
        new[neg & (cols.lam[free] / np.where(neg, -d, 1.0) <= amax)] = 0.0
    before = cols.lam.copy()
    cols.lam[free] = new
    cols.renormalise(game.weights)
    return not np.array_equal(before, cols.lam)


def _pairwise_step(game, cols: _Columns, obj: _Objective) -> bool:
    moved = False
    own = cols.owners
    for i in range(cols.m):
        y = cols.load()
        q = cols.Z @ obj.grad(y)
        hi, lo, hi_k, lo_k = _spread(q, cols.lam, own, cols.m, 0.0)
        if not hi[i] > lo[i]:
            continue
        kh, kl = hi_k[i], lo_k[i]
        z = cols.Z[kl] - cols.Z[kh]
        alpha = _line_search(obj, y, z, cols.lam[kh])
        if alpha <= 0.0:
            continue
        if alpha >= cols.lam[kh]:
            cols.lam[kl] += cols.lam[kh]
            cols.lam[kh] = 0.0
        else:
            cols.lam[kh] -= alpha
            cols.lam[kl] += alpha
        moved = True
    cols.renormalise(game.weights)
    return moved


def _fw_step(game, cols: _Columns, obj: _Objective) -> bool:
    """One away-step Frank-Wolfe pass, commodity by commodity.

    Plain Frank-Wolfe never removes a column entirely, so stale actions keep a
    sliver of mass and the in-support regret stalls.  The away direction fixes
    that: it can drive the dearest used column to exactly zero.
    """
    moved = False
    own = cols.owners
    for i in range(cols.m):
        w = float(game.weights[i])
        y = cols.load()
        q = cols.Z @ obj.grad(y)
        hi, lo, hi_k, lo_k = _spread(q, cols.lam, own, cols.m, 0.0)
        if not hi[i] > lo[i]:
            continue
        block = own == i
        lam_i = np.where(block, cols.lam, 0.0)
        toward = -lam_i
        toward[lo_k[i]] += w
        away = lam_i.copy()
        away[hi_k[i]] -= w
        kh = hi_k[i]
        can_away = cols.lam[kh] < w
        if can_away and q @ away < q @ toward:
            d, amax = away, cols.lam[kh] / (w - cols.lam[kh])
        else:
            d, amax, can_away = toward, 1.0, False
        alpha = _line_search(obj, y, d @ cols.Z, amax)
        if alpha <= 0.0:
            continue
        cols.lam = cols.lam + alpha * d
        if can_away and alpha >= amax:
            cols.lam[kh] = 0.0
        moved = True
    cols.renormalise(game.weights)
    return moved


def solve_equilibrium(game, tax=None, config: SolverConfig | None = None,
                      init: Strategy | None = None,
                      trace: SolverTrace | None = None) -> EquilibriumFeedback:
    """Nash equilibrium of ``game`` under ``tax`` (None, a TaxPlan, or one PWL/None per facility).

    Raises :class:`SolverError` carrying the best iterate when the budget runs
    out before the strategy is a ``tol_eq``-equilibrium.
    """
    cfg = config or SolverConfig()
    F, m = game.n_facilities, game.n_commodities
    taxes = as_tax_list(tax, F)
    obj = _Objective(game, taxes)
    cols = _Columns(F, m)
    _initial_columns(game, cols, obj, init)

    best = (math.inf, None)
    stall = 0
    it = 0
    support = 0.0 if cfg.step_rule == "newton" else SUPPORT_TOL
    while True:
        y = cols.load()
        g = obj.grad(y)
        for i in range(m):
            a, _ = game.best_response(i, g)
            cols.add(i, tuple(a))
        q = cols.Z @ g
        hi, lo, hi_k, lo_k = _spread(q, cols.lam, cols.owners, m, support)
        spread = float(np.max(hi - lo))
        if trace is not None:
            fw_gap = float(cols.lam @ q - game.weights @ lo)
            trace.rows.append((it, potential(game, taxes, y), fw_gap))
        if spread < best[0]:
            best = (spread, cols.lam.copy())
            stall = 0
        else:
            stall += 1
        scale = max(1.0, float(np.max(np.abs(g))))
        if cfg.step_rule == "newton":
            done = spread <= POLISH_TOL * scale or (spread <= cfg.tol_eq and stall >= STALL_LIMIT)
        else:
            done = spread <= cfg.tol_eq
        if done or it >= cfg.max_iters:
            break
        it += 1
        if cfg.step_rule == "newton":
            moved = _newton_step(game, cols, obj, q, lo) or _pairwise_step(game, cols, obj)
        elif cfg.step_rule == "pairwise_frank_wolfe":
            moved = _pairwise_step(game, cols, obj)
        else:
            moved = _fw_step(game, cols, obj)
        if not moved:
            stall = STALL_LIMIT
            if spread <= cfg.tol_eq:
                break

    if best[1] is not None and best[0] < spread:
        lam = np.zeros_like(cols.lam)
        lam[:best[1].size] = best[1]
        cols.lam = lam
    return _feedback(game, cols, obj, cfg, it)


def _feedback(game, cols: _Columns, obj: _Objective, cfg: SolverConfig, it: int) -> EquilibriumFeedback:
    y = np.clip(cols.load(), 0.0, 1.0)
    x = cols.strategy()
    taxed = obj.grad(y)
    eps = max_regret(game, x, taxed)
    if not eps <= cfg.tol_eq:
        raise SolverError(f"no {cfg.tol_eq:g}-equilibrium after {it} iterations "
                          f"(certified eps {eps:.3g})", strategy=x, load=y, certified_eps=eps)
    cost = np.array([c(v) for c, v in zip(game.costs, y)])
    return EquilibriumFeedback(load=y, cost=cost, strategy=x,
                               commodity_loads=cols.commodity_loads(), taxed_cost=taxed,
                               certified_eps=eps, iterations=it)


def best_response(game, i: int, taxed_cost: Sequence[float]):
    """Cheapest action of commodity ``i``; ties go to the lowest action index (or edge ids)."""
    return game.best_response(i, taxed_cost)[0]
