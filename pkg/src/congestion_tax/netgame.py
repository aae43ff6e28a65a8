"""Network congestion games (selfish routing).

Facilities are directed edges, identified by their position in the edge
list; parallel edges are allowed.  Actions of commodity ``i`` are the simple
``s_i -> t_i`` paths, written as tuples of edge ids in travel order.  Paths
are never enumerated by the learner: best responses come from Dijkstra, and
the boundary-tax sweeps use the two shortest-path reductions below.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError, DecompositionError, NoPathError
from .game import SUPPORT_TOL, WEIGHT_TOL, CongestionGame, CostFunction, Strategy, action_cost

ZERO_LOAD = 1e-12
TIE_TOL = 1e-12


class Network:
    """Directed multigraph with edges ``(tail, head)`` indexed by position."""

    def __init__(self, n_vertices: int, edges: Sequence[tuple[int, int]]):
        self.n_vertices = int(n_vertices)
        self.edges = tuple((int(u), int(v)) for u, v in edges)
        for e, (u, v) in enumerate(self.edges):
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge {e} = {(u, v)} references an unknown vertex")
            if u == v:
                raise ValueError(f"edge {e} is a self-loop")
        self.out_edges: list[list[int]] = [[] for _ in range(self.n_vertices)]
        self.in_edges: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for e, (u, v) in enumerate(self.edges):
            self.out_edges[u].append(e)
            self.in_edges[v].append(e)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def tail(self, e: int) -> int:
        return self.edges[e][0]

    def head(self, e: int) -> int:
        return self.edges[e][1]

    def __repr__(self) -> str:
        return f"Network(V={self.n_vertices}, E={self.n_edges})"


def _distances(net: Network, weights, src: int, reverse: bool = False,
               banned: int | None = None) -> np.ndarray:
    """Dijkstra distances from ``src`` (to ``src`` when ``reverse``)."""
    dist = np.full(net.n_vertices, math.inf)
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = np.zeros(net.n_vertices, dtype=bool)
    adj = net.in_edges if reverse else net.out_edges
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for e in adj[v]:
            if e == banned:
                continue
            w = net.edges[e][0] if reverse else net.edges[e][1]
            nd = d + weights[e]
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def _check_weights(weights, n_edges):
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_edges,):
        raise ValueError(f"expected {n_edges} edge weights, got shape {w.shape}")
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("edge weights must be non-negative for Dijkstra")
    return w


def _greedy_path(net: Network, w, s: int, t: int, to_t: np.ndarray,
                 banned: int | None = None) -> tuple[int, ...]:
    # Walk forward along tight edges, always taking the smallest edge id, so
    # the returned path is the lexicographically smallest shortest path.
    path = []
    v = s
    seen = {s}
    while v != t:
        for e in net.out_edges[v]:
            if e == banned:
                continue
            h = net.edges[e][1]
            if h in seen or math.isinf(to_t[h]):
                continue
            if w[e] + to_t[h] <= to_t[v] + TIE_TOL * max(1.0, to_t[v]):
                path.append(e)
                seen.add(h)
                v = h
                break
        else:
            raise NoPathError(f"could not trace a shortest path from {s} to {t}")
    return tuple(path)


def shortest_path(net: Network, weights, s: int, t: int) -> tuple[tuple[int, ...], float]:
    """Minimum-weight ``s -> t`` path and its length (Dijkstra, binary heap).

    Among equally short paths the lexicographically smallest edge-id sequence
    is returned.
    """
    w = _check_weights(weights, net.n_edges)
    to_t = _distances(net, w, t, reverse=True)
    if math.isinf(to_t[s]):
        raise NoPathError(f"vertex {t} is unreachable from {s}")
    path = _greedy_path(net, w, s, t, to_t)
    return path, float(sum(w[e] for e in path))


def shortest_path_avoiding_edge(net: Network, weights, s: int, t: int, f: int) -> float:
    """Length of the shortest ``s -> t`` path that does not use edge ``f`` (+inf if none)."""
    w = _check_weights(weights, net.n_edges)
    return float(_distances(net, w, s, banned=f)[t])


def shortest_path_through_edge(net: Network, weights, s: int, t: int, f: int) -> float:
    """``dist(s, tail f) + w_f + dist(head f, t)``; +inf when a leg is missing.

    The concatenation may revisit a vertex on graphs with cycles; its length
    is still returned.
    """
    w = _check_weights(weights, net.n_edges)
    u, v = net.edges[f]
    d1 = _distances(net, w, s)[u]
    d2 = _distances(net, w, t, reverse=True)[v]
    return float(d1 + w[f] + d2)


def bellman_ford(net: Network, weights, s: int) -> np.ndarray:
    """Distances from ``s``; handles negative weights and rejects negative cycles."""
    w = np.asarray(weights, dtype=float)
    dist = np.full(net.n_vertices, math.inf)
    dist[s] = 0.0
    for _ in range(net.n_vertices - 1):
        changed = False
        for e, (u, v) in enumerate(net.edges):
            if dist[u] + w[e] < dist[v]:
                dist[v] = dist[u] + w[e]
                changed = True
        if not changed:
            return dist
    for e, (u, v) in enumerate(net.edges):
        if dist[u] + w[e] < dist[v] - 1e-15:
            raise ValueError("negative cycle reachable from source")
    return dist


def _any_shortest_path(net: Network, w: np.ndarray, s: int, t: int) -> tuple[tuple[int, ...], float]:
    if np.all(w >= 0):
        return shortest_path(net, w, s, t)
    # perturbed taxes can dip below zero on unloaded edges; reverse Bellman-Ford
    rev = Network(net.n_vertices, [(v, u) for u, v in net.edges])
    to_t = bellman_ford(rev, w, t)
    if math.isinf(to_t[s]):
        raise NoPathError(f"vertex {t} is unreachable from {s}")
    path = _greedy_path(net, w, s, t, to_t)
    return path, float(sum(w[e] for e in path))


def enumerate_paths(net: Network, s: int, t: int) -> Iterator[tuple[int, ...]]:
    """All simple ``s -> t`` paths in lexicographic edge-id order (small graphs only)."""
    path: list[int] = []
    seen = {s}

    def dfs(v):
        if v == t:
            yield tuple(path)
            return
        for e in net.out_edges[v]:
            h = net.edges[e][1]
            if h in seen:
                continue
            seen.add(h)
            path.append(e)
            yield from dfs(h)
            path.pop()
            seen.discard(h)

    yield from dfs(s)


@dataclass(frozen=True)
class Commodity:
    source: int
    target: int
    weight: float


class NetworkGame:
    """Routing game on a :class:`Network`; edge ``e`` is facility ``e``."""

    def __init__(self, network: Network, costs: Sequence[CostFunction],
                 commodities: Sequence[tuple[int, int, float]]):
        self.network = network
        self.costs = tuple(costs)
        if len(self.costs) != network.n_edges:
            raise ValueError("one cost function per edge is required")
        self.commodities = tuple(Commodity(int(s), int(t), float(w)) for s, t, w in commodities)
        if not self.commodities:
            raise ValueError("at least one commodity is required")
        self.weights = np.array([c.weight for c in self.commodities])
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("commodity weights must lie in [0, 1]")
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"commodity weights must sum to 1, got {self.weights.sum()!r}")
        zero = np.zeros(network.n_edges)
        for i, k in enumerate(self.commodities):
            if k.source == k.target:
                raise ValueError(f"commodity {i} has identical source and target")
            if math.isinf(_distances(network, zero, k.source)[k.target]):
                raise ValueError(f"commodity {i}: no path from {k.source} to {k.target}")

    @property
    def n_facilities(self) -> int:
        return self.network.n_edges

    @property
    def n_commodities(self) -> int:
        return len(self.commodities)

    @property
    def smoothness(self) -> float:
        return max(c.smoothness for c in self.costs)

    def best_response(self, i: int, facility_cost) -> tuple[tuple[int, ...], float]:
        k = self.commodities[i]
        return _any_shortest_path(self.network, np.asarray(facility_cost, dtype=float),
                                  k.source, k.target)

    def iter_actions(self, i: int) -> Iterator[tuple[int, ...]]:
        k = self.commodities[i]
        return enumerate_paths(self.network, k.source, k.target)

    def is_action(self, i: int, a) -> bool:
        k = self.commodities[i]
        v = k.source
        seen = {v}
        for e in a:
            if not 0 <= e < self.network.n_edges or self.network.tail(e) != v:
                return False
            v = self.network.head(e)
            if v in seen:
                return False
            seen.add(v)
        return v == k.target and len(a) > 0

    def facility_cost(self, y) -> np.ndarray:
        return np.array([c(v) for c, v in zip(self.costs, np.asarray(y, dtype=float))])

    def to_explicit(self) -> CongestionGame:
        """Equivalent game with every simple path listed (small networks only)."""
        acts = [[tuple(sorted(p)) for p in self.iter_actions(i)] for i in range(self.n_commodities)]
        return CongestionGame(self.costs, self.weights, acts)

    def __repr__(self) -> str:
        return f"NetworkGame(V={self.network.n_vertices}, E={self.network.n_edges}, m={self.n_commodities})"


def pigou_network(c: float, p: int) -> NetworkGame:
    """Pigou's example as two parallel ``s -> t`` edges."""
    net = Network(2, [(0, 1), (0, 1)])
    return NetworkGame(net, [CostFunction.constant(c), CostFunction.monomial(1.0, p)], [(0, 1, 1.0)])


@dataclass
class PathFlow:
    """Path decomposition of a multicommodity flow: ``(commodity, path, weight)`` triples."""

    paths: list = field(default_factory=list)

    def to_strategy(self, m: int) -> Strategy:
        x: Strategy = [dict() for _ in range(m)]
        for i, p, w in self.paths:
            x[i][p] = x[i].get(p, 0.0) + w
        return x

    def edge_loads(self, m: int, n_edges: int) -> np.ndarray:
        Y = np.zeros((m, n_edges))
        for i, p, w in self.paths:
            Y[i, list(p)] += w
        return Y

    def __len__(self) -> int:
        return len(self.paths)


def _check_conservation(net: Network, y: np.ndarray, s: int, t: int, w: float, tol: float):
    bal = np.zeros(net.n_vertices)
    for e, (u, v) in enumerate(net.edges):
        bal[u] += y[e]
        bal[v] -= y[e]
    want = np.zeros(net.n_vertices)
    want[s] += w
    want[t] -= w
    err = np.max(np.abs(bal - want))
    if err > tol:
        raise DecompositionError(f"flow conservation violated by {err:.3g}")


def _dfs_path(net: Network, active: np.ndarray, src: int, dst: int,
              avoid: set | None = None) -> list[int] | None:
    # iterative DFS over positive-residual edges, smallest edge id first
    if src == dst:
        return []
    avoid = avoid or set()
    stack = [(src, iter(net.out_edges[src]))]
    seen = {src} | avoid
    path: list[int] = []
    while stack:
        v, it = stack[-1]
        for e in it:
            h = net.edges[e][1]
            if not active[e] or h in seen:
                continue
            path.append(e)
            if h == dst:
                return path
            seen.add(h)
            stack.append((h, iter(net.out_edges[h])))
            break
        else:
            stack.pop()
            if path:
                path.pop()
    return None


def _loop_erase(net: Network, walk: list[int]) -> list[int]:
    out: list[int] = []
    pos = {net.edges[walk[0]][0]: 0}
    for e in walk:
        out.append(e)
        h = net.edges[e][1]
        if h in pos:
            del out[pos[h]:]
            pos = {k: v for k, v in pos.items() if v <= pos[h]}
        else:
            pos[h] = len(out)
    return out


def flow_decompose(game: NetworkGame, y=None, commodity_loads=None,
                   conservation_tol: float = 1e-9) -> PathFlow:
    """Decompose edge loads into ``s_i -> t_i`` path flows.

    Repeatedly takes the positive edge with the smallest residual, routes a
    simple path through it over positive-residual edges, and subtracts the
    path's bottleneck, which zeroes at least one edge per step (at most E
    paths per commodity).  Multi-commodity games need ``commodity_loads``
    (shape (m, E)); a single commodity may pass the total load ``y``.
    """
    net = game.network
    m = game.n_commodities
    if commodity_loads is None:
        if m != 1:
            raise DecompositionError("per-commodity loads are required for multi-commodity networks")
        commodity_loads = np.asarray(y, dtype=float)[None, :]
    Y = np.array(commodity_loads, dtype=float)
    out = PathFlow()
    for i, k in enumerate(game.commodities):
        r = Y[i].copy()
        if np.any(r < -conservation_tol):
            raise DecompositionError(f"commodity {i} has negative edge load")
        _check_conservation(net, r, k.source, k.target, k.weight, conservation_tol)
        r[r <= ZERO_LOAD] = 0.0
        for _ in range(net.n_edges + 1):
            active = r > 0.0
            if not active.any():
                break
            cand = np.flatnonzero(active)
            fmin = int(cand[np.argmin(r[cand])])
            u, v = net.edges[fmin]
            first = _dfs_path(net, active, k.source, u)
            path = None
            if first is not None:
                on_first = {k.source} | {net.edges[e][1] for e in first}
                second = _dfs_path(net, active, v, k.target, avoid=on_first - {v})
                if second is not None and v not in on_first:
                    path = first + [fmin] + second
                else:
                    second = _dfs_path(net, active, v, k.target)
                    if second is not None:
                        path = _loop_erase(net, first + [fmin] + second)
            if not path:
                raise DecompositionError(
                    f"commodity {i}: residual flow on edge {fmin} is not on any s-t path")
            wgt = float(np.min(r[path]))
            out.paths.append((i, tuple(path), wgt))
            r[path] -= wgt
            r[r <= ZERO_LOAD] = 0.0
        else:
            raise DecompositionError(f"commodity {i}: decomposition did not finish in E steps")
    return out


def _support_relation(x_j: dict, f: int, w: float, tol: float = SUPPORT_TOL) -> str:
    share = sum(v for a, v in x_j.items() if f in a)
    if share >= w - tol:
        return "all"
    if share <= tol:
        return "none"
    raise ContractError(f"edge {f} carries a fraction {share!r} of commodity weight {w!r}")


def network_gap_sweep(game: NetworkGame, x: Strategy, c, tau_prime, j: int, f: int,
                      direction: int) -> float:
    """Boundary tax for commodity ``j`` when the tax on edge ``f`` alone varies.

    ``direction=+1`` returns ``sup{u : Gap_j >= 0}`` as the tax on ``f`` is
    raised; ``direction=-1`` returns ``inf{u : Gap_j >= 0}`` as it is lowered.
    Other edges keep the per-edge taxes in ``tau_prime``.  Commodity ``j``
    must route either all or none of its flow over ``f``.
    """
    k = game.commodities[j]
    x_j = {a: v for a, v in x[j].items() if v > SUPPORT_TOL}
    if not x_j:
        return math.inf if direction > 0 else -math.inf
    rel = _support_relation(x_j, f, k.weight)
    w = np.asarray(c, dtype=float) + np.asarray(tau_prime, dtype=float)
    in_cost = max(action_cost(a, w) for a in x_j)
    net = game.network
    if direction > 0:
        if rel == "none":
            return math.inf
        # in-support cost is u + const; the cheapest rival avoids f
        return shortest_path_avoiding_edge(net, w, k.source, k.target, f) - (in_cost - tau_prime[f])
    if rel == "all":
        return -math.inf
    # in-support cost is fixed; the cheapest rival through f costs u + const
    through = shortest_path_through_edge(net, w, k.source, k.target, f)
    return in_cost - (through - tau_prime[f])


def network_gap(game: NetworkGame, x: Strategy, c, i: int) -> float:
    """Shortest-path surrogate for ``Gap_i``: cheapest path minus dearest in-support path.

    Equals ``Gap_i`` when it is negative or when in-support paths share one
    cost, which is the only way the sign is used; costs must be non-negative.
    """
    k = game.commodities[i]
    x_i = [a for a, v in x[i].items() if v > SUPPORT_TOL]
    if not x_i:
        return math.inf
    w = np.asarray(c, dtype=float)
    in_cost = max(action_cost(a, w) for a in x_i)
    _, best = shortest_path(game.network, w, k.source, k.target)
    return best - in_cost
