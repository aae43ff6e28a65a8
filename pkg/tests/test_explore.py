import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion_tax.errors import DecompositionError
from congestion_tax.explore import (Certified, GapFunction, Probe, decompose, find_exploratory_tax,
                                    gap_under_test_tax, split_commodity)
from congestion_tax.game import CongestionGame, CostFunction, commodity_loads, facility_load, gap
from congestion_tax.io import load_instance

from conftest import FIXTURES

TWO = CongestionGame([CostFunction.constant(0.3), CostFunction.constant(0.5)], [1.0], [[(0,), (1,)]])


class TestDecompose:
    def test_unique(self):
        x = decompose(TWO, [0.4, 0.6])
        assert x[0][(0,)] == pytest.approx(0.4) and x[0][(1,)] == pytest.approx(0.6)

    def test_joint_action(self):
        g = CongestionGame([CostFunction.constant(0.1)] * 2, [1.0], [[(0,), (1,), (0, 1)]])
        x = decompose(g, [0.6, 0.6])
        np.testing.assert_allclose(facility_load(g, x), [0.6, 0.6], atol=1e-12)
        assert sum(x[0].values()) == pytest.approx(1.0)

    def test_infeasible(self):
        with pytest.raises(DecompositionError):
            decompose(TWO, [0.4, 0.4])

    def test_round_trip_on_fixture(self):
        g = load_instance(FIXTURES / "tiny.json")[0]
        rng = np.random.default_rng(0)
        for _ in range(20):
            x0 = []
            for i in range(g.n_commodities):
                s = rng.dirichlet(np.ones(len(g.actions[i]))) * g.weights[i]
                x0.append(dict(zip(g.actions[i], s)))
            y = facility_load(g, x0)
            np.testing.assert_allclose(facility_load(g, decompose(g, y)), y, atol=1e-8)


class TestGapFunction:
    def test_two_action_example(self):
        x = [{(0,): 1.0}]
        gf = gap_under_test_tax(TWO, x, [0.3, 0.5], [0.1, 0.2], 0, 0)
        assert gf.u_max() == pytest.approx(0.4)
        for u in (0.0, 0.4, 0.9):
            assert gf(u) == pytest.approx(0.4 - u)

    def test_constant_in_u_without_facility(self):
        x = [{(0,): 1.0}]
        gf = gap_under_test_tax(TWO, x, [0.3, 0.5], [0.1, 0.2], 0, 1)
        # facility 1 is only on the off-support action: the gap grows with u
        assert gf(0.5) - gf(0.0) == pytest.approx(0.5)
        assert gf.u_min() == pytest.approx(0.4 - 0.5)

    def test_missing_groups(self):
        gf = GapFunction(math.inf, math.inf, 0.3, -math.inf)
        assert gf(0.2) == math.inf


class TestFindExploratoryTax:
    def test_split_branch(self):
        x = [{(0,): 0.55, (1,): 0.45}]
        out = find_exploratory_tax(TWO, x, [0.55, 0.45], [0.3, 0.5], [0.2, 0.0], [1], {1: (0.0, 1.0)})
        assert isinstance(out, Probe)
        assert out.facility == 1 and out.sign == 1 and out.branch == "split"
        np.testing.assert_array_equal(out.tax, [0.2, 0.0])

    def test_single_action_certified(self):
        g = CongestionGame([CostFunction.monomial(1.0, 2)], [1.0], [[(0,)]])
        out = find_exploratory_tax(g, [{(0,): 1.0}], [1.0], [1.0], [0.5], [0], {0: (0.0, 2.0)})
        assert isinstance(out, Certified)
        assert not out

    def test_two_action_raise(self):
        out = find_exploratory_tax(TWO, [{(0,): 1.0}], [1.0, 0.0], [0.3, 0.5], [0.1, 0.2], [0],
                                   {0: (0.03, 1.03)})
        assert isinstance(out, Probe)
        assert out.facility == 0 and out.sign == 1
        np.testing.assert_allclose(out.tax, [0.4, 0.2])

    def test_certified_when_ranges_are_tight(self):
        out = find_exploratory_tax(TWO, [{(0,): 1.0}], [1.0, 0.0], [0.3, 0.5], [0.1, 0.2], [0],
                                   {0: (0.05, 0.35)})
        assert isinstance(out, Certified)

    def test_lowering_sweep(self):
        out = find_exploratory_tax(TWO, [{(0,): 1.0}], [1.0, 0.0], [0.3, 0.5], [0.1, 0.2], [1],
                                   {1: (-0.5, 0.3)})
        assert isinstance(out, Probe)
        assert out.facility == 1 and out.sign == -1
        assert out.tax[1] == pytest.approx(-0.1)


@st.composite
def pure_instances(draw):
    """Explicit game with a pure equilibrium x under c + tau, plus ranges around tau."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    F = int(rng.integers(2, 6))
    m = int(rng.integers(1, 3))
    acts = []
    for _ in range(m):
        n = int(rng.integers(1, 5))
        pool = {tuple(sorted(rng.choice(F, size=int(rng.integers(1, F + 1)), replace=False).tolist()))
                for _ in range(n)}
        acts.append(sorted(pool))
    w = np.full(m, 1.0 / m)
    game = CongestionGame([CostFunction.constant(0.1)] * F, w, acts)
    c = rng.uniform(0, 0.5, F)
    tau = rng.uniform(0, 0.5, F)
    x = []
    for i in range(m):
        a, _ = game.best_response(i, c + tau)
        x.append({a: float(w[i])})
    unknown = sorted(f for f in range(F) if rng.uniform() < 0.7)
    ranges = {f: (tau[f] - rng.uniform(0, 0.6), tau[f] + rng.uniform(0, 0.6)) for f in unknown}
    return game, x, c, tau, unknown, ranges, rng


def min_gap(game, x, total):
    return min(gap(game, j, x, total) for j in range(game.n_commodities))


def sample_feasible(tau, unknown, ranges, rng):
    t = tau.copy()
    for f in unknown:
        t[f] = rng.uniform(*ranges[f])
    return t


@settings(max_examples=150, deadline=None)
@given(pure_instances())
def test_outcome_properties(inst):
    game, x, c, tau, unknown, ranges, rng = inst
    y = facility_load(game, x)
    out = find_exploratory_tax(game, x, y, c, tau, unknown, ranges)
    if isinstance(out, Certified):
        # every feasible tax keeps x an equilibrium
        for _ in range(100):
            t = sample_feasible(tau, unknown, ranges, rng)
            assert min_gap(game, x, c + t) >= -1e-9
        return
    f = out.facility
    assert f in unknown
    for g in range(game.n_facilities):
        if g in unknown:
            assert ranges[g][0] - 1e-12 <= out.tax[g] <= ranges[g][1] + 1e-12
        else:
            assert out.tax[g] == tau[g]
    # x is still an equilibrium at the boundary, and stops being one just past it
    assert min_gap(game, x, c + out.tax) >= -1e-9
    assert abs(min_gap(game, x, c + out.tax)) <= 1e-9
    past = out.tax.copy()
    past[f] += out.sign * 1e-6
    assert min_gap(game, x, c + past) < 0


@settings(max_examples=100, deadline=None)
@given(pure_instances())
def test_worst_case_tax_dominates(inst):
    game, x, c, tau, unknown, ranges, rng = inst
    Y = commodity_loads(game, x)
    for i in range(game.n_commodities):
        split = split_commodity(Y[i], game.weights[i], unknown)
        worst = tau.copy()
        for f in split.full:
            worst[f] = ranges[f][1]
        for f in split.empty:
            worst[f] = ranges[f][0]
        g_worst = gap(game, i, x, c + worst)
        for _ in range(20):
            t = sample_feasible(tau, unknown, ranges, rng)
            assert gap(game, i, x, c + t) >= g_worst - 1e-12


def test_split_commodity_partition():
    s = split_commodity(np.array([0.5, 0.0, 0.5, 0.2]), 0.5, [0, 1, 2, 3])
    assert s.full == (0, 2) and s.empty == (1,)
    assert not set(s.full) & set(s.empty)
