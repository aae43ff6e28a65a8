"""Named property checks, shared by the ``validate`` command and the test-suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import SolverConfig, solve_equilibrium
from .explore import decompose, gap_under_test_tax
from .game import commodity_loads, facility_load, gap, potential, potential_gradient
from .netgame import (NetworkGame, bellman_ford, enumerate_paths, network_gap_sweep,
                      shortest_path)
from .oracles import MAX_ACTIONS, equilibrium_by_enumeration
from .pwl import PiecewiseLinear


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_strategy(game, rng: np.random.Generator, actions=None):
    """Dirichlet-random mass over (a sample of) each commodity's actions."""
    x = []
    for i in range(game.n_commodities):
        acts = actions[i] if actions is not None else list(game.iter_actions(i))
        p = rng.dirichlet(np.ones(len(acts))) * game.weights[i]
        x.append({a: float(v) for a, v in zip(acts, p)})
    return x


def random_eps_tax(F: int, eps: float, rng: np.random.Generator, n_breaks: int = 4) -> list[PiecewiseLinear]:
    """Random non-decreasing PWL taxes with every slope at least ``eps``."""
    out = []
    for _ in range(F):
        xs = np.sort(rng.uniform(0.05, 0.95, n_breaks))
        xs = np.concatenate(([0.0], xs, [1.0]))
        slopes = eps + rng.uniform(0.0, 2.0, xs.size - 1)
        ys = np.concatenate(([0.0], np.cumsum(slopes * np.diff(xs))))
        out.append(PiecewiseLinear(zip(xs, ys)))
    return out


def _sample_loads(game, rng, n):
    acts = [list(game.iter_actions(i)) for i in range(game.n_commodities)] \
        if not isinstance(game, NetworkGame) or _small(game) else None
    if acts is None:
        raise ValueError("load sampling needs path enumeration; network too large")
    return [facility_load(game, random_strategy(game, rng, acts), check=False) for _ in range(n)]


def _small(game) -> bool:
    total = 0
    for i in range(game.n_commodities):
        for _ in game.iter_actions(i):
            total += 1
            if total > 200:
                return False
    return True


def check_convexity(game, eps: float, rng, n_pairs: int = 1000, tol: float = 1e-10) -> PropertyResult:
    """Midpoint convexity and eps-strong convexity of the potential under a random eps-slope tax."""
    tax = random_eps_tax(game.n_facilities, eps, rng)
    ys = _sample_loads(game, rng, 2 * n_pairs)
    worst_mid = worst_sc = -math.inf
    for k in range(n_pairs):
        y1, y2 = ys[2 * k], ys[2 * k + 1]
        p1, p2 = potential(game, tax, y1), potential(game, tax, y2)
        pm = potential(game, tax, (y1 + y2) / 2)
        worst_mid = max(worst_mid, pm - (p1 + p2) / 2)
        g1 = potential_gradient(game, tax, y1)
        d = y2 - y1
        worst_sc = max(worst_sc, p1 + g1 @ d + eps / 2 * d @ d - p2)
    ok = worst_mid <= tol and worst_sc <= tol
    return PropertyResult("potential_convexity", ok,
                          f"max midpoint excess {worst_mid:.3g}, max strong-convexity excess {worst_sc:.3g}")


def check_gradient(game, eps: float, rng, n: int = 200, h: float = 1e-5,
                   tol: float = 1e-6) -> PropertyResult:
    """Central differences of the potential against ``c + tau``, away from tax kinks."""
    tax = random_eps_tax(game.n_facilities, eps, rng)
    worst = 0.0
    for _ in range(n):
        y = rng.uniform(2 * h, 1 - 2 * h, game.n_facilities)
        for f, t in enumerate(tax):
            while np.min(np.abs(t.xs - y[f])) < 2 * h:
                y[f] = rng.uniform(2 * h, 1 - 2 * h)
        g = potential_gradient(game, tax, y)
        for f in range(game.n_facilities):
            e = np.zeros_like(y)
            e[f] = h
            fd = (potential(game, tax, y + e) - potential(game, tax, y - e)) / (2 * h)
            worst = max(worst, abs(fd - g[f]))
    return PropertyResult("potential_gradient", worst <= tol, f"max |fd - grad| {worst:.3g}")


def check_decomposition(game, rng, n: int = 20, tol: float = 1e-8) -> PropertyResult:
    worst = 0.0
    for _ in range(n):
        x0 = random_strategy(game, rng)
        hint = commodity_loads(game, x0, check=False)
        y = hint.sum(axis=0)
        x = decompose(game, y, hint if game.n_commodities > 1 else None)
        worst = max(worst, float(np.max(np.abs(facility_load(game, x) - y))))
    return PropertyResult("decomposition_roundtrip", worst <= tol, f"max load residual {worst:.3g}")


def check_solver(game, eps: float, rng, n: int = 3, tol: float = 1e-4) -> PropertyResult:
    """Solver certification, and agreement with brute-force enumeration when the game is tiny."""
    worst_cert = worst_dev = 0.0
    tiny = _small(game) and sum(1 for i in range(game.n_commodities)
                                for _ in game.iter_actions(i)) <= MAX_ACTIONS
    cfg = SolverConfig(tol_eq=1e-10)
    for _ in range(n):
        tax = random_eps_tax(game.n_facilities, eps, rng)
        fb = solve_equilibrium(game, tax, cfg)
        worst_cert = max(worst_cert, fb.certified_eps)
        if tiny:
            ref = equilibrium_by_enumeration(game, tax).value
            worst_dev = max(worst_dev, float(np.max(np.abs(ref - fb.load))))
    ok = worst_cert <= cfg.tol_eq and worst_dev <= tol
    return PropertyResult("solver_vs_enumeration", ok,
                          f"certified eps {worst_cert:.3g}, max load deviation {worst_dev:.3g}"
                          + ("" if tiny else " (enumeration skipped: game too large)"))


def enumerated_boundary(game, x, c, tau, f: int, direction: int) -> float:
    """Sweep boundary over all commodities with every path listed explicitly."""
    vals = []
    for j in range(game.n_commodities):
        gf = gap_under_test_tax(game, x, c, tau, j, f)
        vals.append(gf.u_max() if direction > 0 else gf.u_min())
    return min(vals) if direction > 0 else max(vals)


def sweep_boundary(game, x, c, tau, f: int, direction: int) -> float:
    vals = [network_gap_sweep(game, x, c, tau, j, f, direction) for j in range(game.n_commodities)]
    return min(vals) if direction > 0 else max(vals)


def all_or_none(game, x, f: int, tol: float = 1e-9) -> bool:
    for j, k in enumerate(game.commodities):
        share = sum(v for a, v in x[j].items() if f in a)
        if tol < share < k.weight - tol:
            return False
    return True


def check_network(game: NetworkGame, rng, n: int = 10, tol: float = 1e-9) -> list[PropertyResult]:
    """Shortest paths against Bellman-Ford and enumeration; fast sweeps against enumeration."""
    net = game.network
    sp_worst = 0.0
    sweep_worst = 0.0
    checked = 0
    for _ in range(n):
        w = rng.uniform(0.0, 1.0, net.n_edges)
        for k in game.commodities:
            _, length = shortest_path(net, w, k.source, k.target)
            bf = bellman_ford(net, w, k.source)[k.target]
            brute = min(sum(w[e] for e in p) for p in enumerate_paths(net, k.source, k.target))
            sp_worst = max(sp_worst, abs(length - bf), abs(length - brute))
        # one path per commodity gives all-or-none support on every edge
        x = []
        for k in game.commodities:
            paths = list(enumerate_paths(net, k.source, k.target))
            x.append({paths[rng.integers(len(paths))]: k.weight})
        c = rng.uniform(0.0, 0.5, net.n_edges)
        tau = rng.uniform(0.0, 0.5, net.n_edges)
        for f in range(net.n_edges):
            for d in (+1, -1):
                a = sweep_boundary(game, x, c, tau, f, d)
                b = enumerated_boundary(game, x, c, tau, f, d)
                if math.isinf(a) or math.isinf(b):
                    err = 0.0 if a == b else math.inf
                else:
                    err = abs(a - b)
                sweep_worst = max(sweep_worst, err)
                checked += 1
    return [PropertyResult("shortest_path_vs_enumeration", sp_worst <= tol, f"max deviation {sp_worst:.3g}"),
            PropertyResult("network_sweep_vs_enumeration", sweep_worst <= tol,
                           f"{checked} boundaries, max deviation {sweep_worst:.3g}")]


def validate_game(game, eps: float = 0.05, seed: int = 0, n_pairs: int = 1000) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    results = [PropertyResult("assumptions", True, "all costs pass construction checks")]
    results.append(check_convexity(game, eps, rng, n_pairs))
    results.append(check_gradient(game, eps, rng))
    results.append(check_decomposition(game, rng))
    results.append(check_solver(game, eps, rng))
    if isinstance(game, NetworkGame):
        results.extend(check_network(game, rng))
    return results


def perturbation_violations(result, band: float | None = None) -> list[int]:
    """Rounds whose probe displacement is zero or exceeds ``Delta + band``."""
    eps = result.state.eps
    if band is None:
        band = 4 * math.sqrt(2 * result.tol_eq / eps)
    lim = result.state.spacing + band
    return [r.round for r in result.trace
            if r.displacement is not None and not 0.0 < r.displacement <= lim]


def known_index_error(game, result) -> float:
    """Largest ``|tau_f(u) - u c_f'(u)|`` over known grid points, across all rounds."""
    worst = 0.0
    for r in result.trace:
        for f, (tau, pts) in enumerate(zip(r.applied_tax, r.known_before)):
            star = game.costs[f].marginal_tax()
            for u in pts:
                worst = max(worst, abs(tau(u) - star(u)))
    return worst


def certified_soundness(game, result, rng, n: int = 100) -> float:
    """Smallest commodity gap over random feasible taxes at the certifying round."""
    r = result.trace[-1]
    if r.outcome != "certified":
        raise ValueError("the run did not end with a certified round")
    worst = math.inf
    for _ in range(n):
        tau = np.array(r.tax_values, dtype=float)
        for f, (l, h) in r.ranges.items():
            tau[f] = rng.uniform(l, h)
        total = r.cost + tau
        for i in range(game.n_commodities):
            worst = min(worst, gap(game, i, r.strategy, total))
    return worst
