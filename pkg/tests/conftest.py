import sys
from pathlib import Path

import numpy as np

from congestion_tax.game import CostFunction
from congestion_tax.netgame import Network, NetworkGame

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "congestion_tax" / "fixtures"
sys.path.insert(0, str(Path(__file__).resolve().parent))

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_cost(rng: np.random.Generator) -> CostFunction:
    kind = rng.integers(3)
    if kind == 0:
        return CostFunction.constant(float(rng.uniform(0, 1)))
    if kind == 1:
        a = float(rng.uniform(0, 0.5))
        return CostFunction.affine(a, float(rng.uniform(0, 1 - a)))
    return CostFunction.monomial(float(rng.uniform(0.1, 1)), int(rng.integers(2, 5)))


def random_dag(rng: np.random.Generator, max_vertices: int = 8, commodities: int | None = None) -> NetworkGame:
    """Random DAG on vertices 0..V-1 (edges go forward) with a guaranteed 0 -> V-1 spine."""
    V = int(rng.integers(3, max_vertices + 1))
    edges = [(v, v + 1) for v in range(V - 1)]
    for u in range(V):
        for v in range(u + 1, V):
            if rng.uniform() < 0.35:
                edges.append((u, v))
    if rng.uniform() < 0.5:
        edges.append((0, V - 1))  # parallel or long edge
    order = rng.permutation(len(edges))
    edges = [edges[k] for k in order]
    m = commodities or int(rng.integers(1, 3))
    comms = []
    w = rng.dirichlet(np.ones(m))
    w[-1] = 1.0 - w[:-1].sum()
    for i in range(m):
        s = int(rng.integers(0, V - 1))
        t = int(rng.integers(s + 1, V))
        comms.append((s, t, float(w[i])))
    costs = [random_cost(rng) for _ in edges]
    return NetworkGame(Network(V, edges), costs, comms)
