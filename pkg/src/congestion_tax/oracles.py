"""Brute-force references for validation.

These deliberately share no code path with the solver: objectives are
evaluated by Gauss-Legendre quadrature (split at tax breakpoints, so it is
exact for polynomial costs and piece-wise linear taxes), and minimisation is
a lattice search over the product of strategy simplices followed by a
pattern search along pairwise mass exchanges with a shrinking step.  Both
objectives are convex in the strategy, so the pattern search converges to the
global minimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import SizeError
from .netgame import NetworkGame

MAX_ACTIONS = 12
LATTICE_BUDGET = 20_000
COARSE_STEP = 1e-3
FINE_STEP = 1e-10
METHODS = ("grid_search_1d", "grid_search_nd", "path_enumeration", "analytic")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass
class OracleReport:
    quantity: str
    value: Any
    method: str
    resolution: float
    argmin: Any = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown oracle method {self.method!r}")

    def to_dict(self) -> dict:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"quantity": self.quantity, "value": plain(self.value), "method": self.method,
                "resolution": self.resolution, "argmin": plain(self.argmin)}


def _gl(fun, a, b):
    """Vectorised 16-point Gauss-Legendre integral of ``fun`` over [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = (b - a) / 2.0
    mid = (b + a) / 2.0
    nodes = mid[..., None] + half[..., None] * _GL_X
    return half * (fun(nodes) @ _GL_W)


def _integral_cost(cf, y):
    return _gl(lambda u: cf(u), np.zeros_like(y), y)


def _integral_tax(tax, y):
    # integrate piece by piece so every panel sees a polynomial
    xs, ys = np.asarray(tax.xs), np.asarray(tax.ys)
    total = np.zeros_like(y)
    for k in range(xs.size - 1):
        lo = np.minimum(y, xs[k])
        hi = np.minimum(y, xs[k + 1])
        slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        total += _gl(lambda u: ys[k] + slope * (u - xs[k]), lo, hi)
    return total


def _as_explicit(game):
    if isinstance(game, NetworkGame):
        return game.to_explicit(), "path_enumeration"
    return game, None


def _check_size(game):
    if game.n_actions > MAX_ACTIONS:
        raise SizeError(f"{game.n_actions} actions exceed the brute-force limit of {MAX_ACTIONS}")


def _lattice(n: int, N: int) -> np.ndarray:
    """All compositions of N into n non-negative parts, divided by N."""
    if n == 1:
        return np.ones((1, 1))
    rows = []
    for cut in itertools.combinations(range(N + n - 1), n - 1):
        edges = (-1,) + cut + (N + n - 1,)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(n)])
    return np.asarray(rows, dtype=float) / N


def _lattice_size(n: int, N: int) -> int:
    return math.comb(N + n - 1, n - 1)


class _Search:
    def __init__(self, game, objective):
        self.game = game
        self.obj = objective  # callable on a (P, F) array of loads
        self.M = [game.incidence(i) for i in range(game.n_commodities)]
        self.n = [m.shape[0] for m in self.M]

    def loads(self, parts) -> np.ndarray:
        return sum(p @ M for p, M in zip(parts, self.M))

    def coarse(self):
        N = int(round(1 / COARSE_STEP))
        while N > 1 and math.prod(_lattice_size(n, N) for n in self.n) > LATTICE_BUDGET:
            N //= 2
        lats = [_lattice(n, N) * w for n, w in zip(self.n, self.game.weights)]
        best_val, best = math.inf, None
        # the first commodity is vectorised, the rest enumerated
        Y0 = lats[0] @ self.M[0]
        for combo in itertools.product(*[range(l.shape[0]) for l in lats[1:]]):
            rest = sum((lats[k + 1][j] @ self.M[k + 1] for k, j in enumerate(combo)),
                       np.zeros(Y0.shape[1]))
            vals = self.obj(Y0 + rest)
            j0 = int(np.argmin(vals))
            if vals[j0] < best_val:
                best_val = float(vals[j0])
                best = [lats[0][j0].copy()] + [lats[k + 1][j].copy() for k, j in enumerate(combo)]
        return best, 1.0 / N

    def refine(self, parts, step):
        """Best-improvement pattern search over pairwise mass exchanges, halving the step."""
        parts = [p.copy() for p in parts]
        y = self.loads(parts)
        val = float(self.obj(y[None, :])[0])
        moves = [(i, a, b) for i, p in enumerate(parts) for a, b in itertools.permutations(range(p.size), 2)]
        if not moves:
            return parts, val
        dirs = np.array([self.M[i][b] - self.M[i][a] for i, a, b in moves])
        s = step
        while s >= FINE_STEP:
            while True:
                amt = np.array([min(s * self.game.weights[i], parts[i][a]) for i, a, _ in moves])
                trial = y[None, :] + amt[:, None] * dirs
                vals = self.obj(trial)
                vals[amt <= 0.0] = math.inf
                k = int(np.argmin(vals))
                if not vals[k] < val:
                    break
                i, a, b = moves[k]
                parts[i][a] -= amt[k]
                parts[i][b] += amt[k]
                y, val = trial[k], float(vals[k])
            s /= 2.0
        return parts, val

    def run(self):
        parts, h = self.coarse()
        parts, val = self.refine(parts, h)
        return parts, val, h


def _method(game, explicit_method):
    if explicit_method:
        return explicit_method
    dims = sum(n - 1 for n in (len(A) for A in game.actions))
    return "grid_search_1d" if dims <= 1 else "grid_search_nd"


def social_cost_quadrature(game, Y: np.ndarray) -> np.ndarray:
    """``sum_f y_f c_f(y_f)`` row-wise for a (P, F) array of loads."""
    Y = np.atleast_2d(Y)
    return sum(Y[:, f] * game.costs[f](Y[:, f]) for f in range(Y.shape[1]))


def potential_quadrature(game, tax, Y: np.ndarray) -> np.ndarray:
    """Potential row-wise for a (P, F) array of loads, by quadrature."""
    Y = np.atleast_2d(np.clip(Y, 0.0, 1.0))
    taxes = [None] * Y.shape[1] if tax is None else list(tax.applied() if hasattr(tax, "applied") else tax)
    out = np.zeros(Y.shape[0])
    for f in range(Y.shape[1]):
        out += _integral_cost(game.costs[f], Y[:, f])
        t = taxes[f]
        if t is None:
            continue
        if hasattr(t, "xs"):
            out += _integral_tax(t, Y[:, f])
        else:
            out += _integral_cost(t, Y[:, f])
    return out


def optimal_social_cost(game) -> OracleReport:
    """Minimum social cost by lattice search and pairwise-exchange refinement."""
    ex, label = _as_explicit(game)
    _check_size(ex)
    s = _Search(ex, lambda Y: social_cost_quadrature(ex, Y))
    parts, val, h = s.run()
    return OracleReport("optimal_social_cost", val, _method(ex, label), FINE_STEP,
                        argmin=s.loads(parts))


def equilibrium_by_enumeration(game, tax=None) -> OracleReport:
    """Equilibrium load as the brute-force minimiser of the potential."""
    ex, label = _as_explicit(game)
    _check_size(ex)
    s = _Search(ex, lambda Y: potential_quadrature(ex, tax, Y))
    parts, val, h = s.run()
    return OracleReport("equilibrium_load", s.loads(parts), _method(ex, label), FINE_STEP,
                        argmin=val)


def pigou_analytic(c: float, p: int) -> tuple[float, float, float, float]:
    """Untaxed equilibrium load, optimal load, equilibrium and optimal social cost.

    Loads are on the ``u**p`` link; the constant link carries the rest.
    """
    if not 0 < c <= 1 or p < 1:
        raise ValueError(f"need 0 < c <= 1 and p >= 1, got c={c!r}, p={p!r}")
    y_ne = c ** (1.0 / p)
    y_opt = (c / (p + 1.0)) ** (1.0 / p)
    return y_ne, y_opt, c, c - c * y_opt + y_opt ** (p + 1)


def pigou_report(c: float, p: int) -> OracleReport:
    y_ne, y_opt, psi_ne, psi_opt = pigou_analytic(c, p)
    return OracleReport("optimal_social_cost", psi_opt, "analytic", 0.0,
                        argmin=np.array([1.0 - y_opt, y_opt]))
