"""Exploratory (boundary) taxes.

Given an equilibrium ``x`` under the current tax, either find a tax inside the
per-facility feasible ranges at which ``x`` is still an equilibrium but a
small push on one unknown facility changes the load there, or certify that no
feasible tax can move the equilibrium.

Every quantity is expressed through *tax values at the current loads*: the
strategy ``x`` is fixed, so action costs under a test tax are
``sum_{f in a} (c_f + tau_f)`` with ``c`` the observed Nash cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import ContractError, DecompositionError
from .game import SUPPORT_TOL, Strategy, commodity_loads, gap
from .netgame import NetworkGame, flow_decompose, network_gap, network_gap_sweep

# A worst-case gap below -GAP_TOL means some feasible tax breaks the equilibrium.
GAP_TOL = 1e-12
# Slack tolerated when the fixed strategy looks slightly off-equilibrium.
CONTRACT_TOL = 1e-8
DECOMPOSE_TOL = 1e-8


@dataclass(frozen=True)
class Certified:
    """No feasible tax changes the equilibrium: the current tax is final."""

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Probe:
    """Boundary tax values ``tax`` (one per facility) and the facility to push, with direction ``sign``."""

    tax: np.ndarray
    facility: int
    sign: int
    branch: str = "sweep"

    def __bool__(self) -> bool:
        return True


ExploreOutcome = Certified | Probe


@dataclass(frozen=True)
class CommoditySplit:
    """Unknown facilities carrying all (``full``) or none (``empty``) of one commodity."""

    full: tuple
    empty: tuple


def split_commodity(Y_i: np.ndarray, w_i: float, unknown: Sequence[int],
                    tol: float = SUPPORT_TOL) -> CommoditySplit:
    full = tuple(f for f in sorted(unknown) if Y_i[f] >= w_i - tol)
    empty = tuple(f for f in sorted(unknown) if Y_i[f] <= tol and f not in full)
    return CommoditySplit(full, empty)


def decompose(game, y, commodity_loads_hint=None) -> Strategy:
    """A strategy whose facility loads equal ``y``.

    Network games use path decomposition of per-commodity edge loads.
    Explicit games solve the feasibility program
    ``sum_{i, a ∋ f} x_{i,a} = y_f``, ``sum_a x_{i,a} = w_i``, ``x >= 0``
    and then re-solve the equality system on the returned support so the
    loads are reproduced to rounding precision.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(game, NetworkGame):
        flow = flow_decompose(game, y, commodity_loads_hint)
        return flow.to_strategy(game.n_commodities)
    cols = []
    for i in range(game.n_commodities):
        for a in game.actions[i]:
            cols.append((i, a))
    F, m = game.n_facilities, game.n_commodities
    A = np.zeros((F + m, len(cols)))
    for k, (i, a) in enumerate(cols):
        A[list(a), k] = 1.0
        A[F + i, k] = 1.0
    b = np.concatenate([y, game.weights])
    res = linprog(np.zeros(len(cols)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise DecompositionError(f"load vector is not realisable: {res.message}")
    x = np.maximum(res.x, 0.0)
    support = np.flatnonzero(x > 1e-12)
    sol, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
    if sol.min() >= -1e-14 and np.max(np.abs(A[:, support] @ np.maximum(sol, 0.0) - b)) <= \
            np.max(np.abs(A @ x - b)):
        x = np.zeros(len(cols))
        x[support] = np.maximum(sol, 0.0)
    err = float(np.max(np.abs(A @ x - b)))
    if err > DECOMPOSE_TOL:
        raise DecompositionError(f"decomposition residual {err:.3g} exceeds {DECOMPOSE_TOL:g}")
    out: Strategy = [dict() for _ in range(m)]
    for k, (i, a) in enumerate(cols):
        if x[k] > 0.0:
            out[i][a] = float(x[k])
    return out


@dataclass(frozen=True)
class GapFunction:
    """``Gap_j`` as a function of the tax ``u`` on one facility, all else fixed.

    ``min(off_without, off_with + u) - max(in_without, in_with + u)``, where
    ``with``/``without`` refer to actions that do or do not use the facility
    and ``in``/``off`` to in-support and off-support actions.  Missing groups
    are ``+inf`` (off) or ``-inf`` (in).
    """

    off_without: float
    off_with: float
    in_without: float
    in_with: float

    def __call__(self, u: float) -> float:
        lo = min(self.off_without, self.off_with + u)
        hi = max(self.in_without, self.in_with + u)
        if math.isinf(lo) and lo > 0 or math.isinf(hi) and hi < 0:
            return math.inf
        return lo - hi

    def u_max(self) -> float:
        """Largest ``u`` keeping the gap non-negative (ignoring u-independent terms)."""
        return self.off_without - self.in_with

    def u_min(self) -> float:
        return self.in_without - self.off_with

    def constant_ok(self, tol: float = CONTRACT_TOL) -> bool:
        ok1 = self.off_without - self.in_without >= -tol if not (
            math.isinf(self.off_without) or math.isinf(self.in_without)) else True
        ok2 = self.off_with - self.in_with >= -tol if not (
            math.isinf(self.off_with) or math.isinf(self.in_with)) else True
        return ok1 and ok2


def gap_under_test_tax(game, x: Strategy, c, tau, j: int, f: int,
                       support_tol: float = SUPPORT_TOL) -> GapFunction:
    """Closed form of ``u -> Gap_j(x, c + tau with tau_f := u)`` by enumerating actions."""
    base = np.asarray(c, dtype=float) + np.asarray(tau, dtype=float)
    base[f] = c[f]
    groups = {"off_without": math.inf, "off_with": math.inf,
              "in_without": -math.inf, "in_with": -math.inf}
    x_j = x[j]
    for a in game.iter_actions(j):
        cost = float(sum(base[e] for e in a))
        key = ("in" if x_j.get(a, 0.0) > support_tol else "off") + ("_with" if f in a else "_without")
        if key.startswith("in"):
            groups[key] = max(groups[key], cost)
        else:
            groups[key] = min(groups[key], cost)
    return GapFunction(**groups)


def _commodity_gap(game, x, c_total, i) -> float:
    if isinstance(game, NetworkGame):
        return network_gap(game, x, c_total, i)
    return gap(game, i, x, c_total)


def _sweep_bound(game, x, c, tau, f: int, direction: int) -> float:
    """Tightest boundary over all commodities when the tax on ``f`` is moved."""
    m = game.n_commodities
    bounds = []
    for j in range(m):
        if isinstance(game, NetworkGame):
            bounds.append(network_gap_sweep(game, x, c, tau, j, f, direction))
            continue
        gf = gap_under_test_tax(game, x, c, tau, j, f)
        if not gf.constant_ok():
            raise ContractError(f"strategy is not an equilibrium for commodity {j} under the test tax")
        bounds.append(gf.u_max() if direction > 0 else gf.u_min())
    return min(bounds) if direction > 0 else max(bounds)


def find_exploratory_tax(game, x: Strategy, y, c, tau, unknown: Sequence[int],
                         ranges: dict, support_tol: float = SUPPORT_TOL,
                         log: list | None = None) -> ExploreOutcome:
    """Search for a boundary tax, or certify the current one.

    ``tau`` holds the applied tax values at ``y``; ``ranges[f] = (l_f, r_f)``
    for every unknown facility.  Facilities and commodities are scanned in
    ascending order.
    """
    c = np.asarray(c, dtype=float)
    tau = np.asarray(tau, dtype=float)
    unknown = sorted(unknown)
    Y = commodity_loads(game, x, check=False)
    w = game.weights
    live = [i for i in range(game.n_commodities) if w[i] > support_tol]
    # an unknown facility shared partially by some commodity moves with any push
    for f in unknown:
        for i in live:
            if support_tol < Y[i, f] < w[i] - support_tol:
                if log is not None:
                    log.append({"branch": "split", "commodity": i, "facility": f})
                return Probe(tau.copy(), f, +1, branch="split")

    for i in live:
        split = split_commodity(Y[i], w[i], unknown, support_tol)
        worst = tau.copy()
        for f in split.full:
            worst[f] = ranges[f][1]
        for f in split.empty:
            worst[f] = ranges[f][0]
        g_worst = _commodity_gap(game, x, c + worst, i)
        if log is not None:
            log.append({"branch": "worst_case", "commodity": i, "gap": g_worst})
        if g_worst >= -GAP_TOL:
            continue
        cur = tau.copy()
        for f in split.full:
            u_max = _sweep_bound(game, x, c, cur, f, +1)
            if u_max < cur[f] - CONTRACT_TOL:
                raise ContractError(f"strategy is not an equilibrium under the swept tax (facility {f})")
            u_max = max(u_max, cur[f])
            if log is not None:
                log.append({"branch": "raise", "commodity": i, "facility": f, "u": u_max})
            if u_max <= ranges[f][1]:
                cur[f] = u_max
                return Probe(cur, f, +1)
            cur[f] = ranges[f][1]
        for f in split.empty:
            u_min = _sweep_bound(game, x, c, cur, f, -1)
            if u_min > cur[f] + CONTRACT_TOL:
                raise ContractError(f"strategy is not an equilibrium under the swept tax (facility {f})")
            u_min = min(u_min, cur[f])
            if log is not None:
                log.append({"branch": "lower", "commodity": i, "facility": f, "u": u_min})
            if u_min >= ranges[f][0]:
                cur[f] = u_min
                return Probe(cur, f, -1)
            cur[f] = ranges[f][0]
        raise ContractError(f"worst-case gap {g_worst:.3g} for commodity {i} but the sweep found no boundary")
    return Certified()
