import math

import numpy as np
import pytest

from congestion_tax.equilibrium import (SolverConfig, SolverTrace, best_response,
                                        solve_equilibrium)
from congestion_tax.errors import SolverError
from congestion_tax.game import (CongestionGame, CostFunction, facility_load,
                                 is_epsilon_equilibrium, marginal_cost_tax, pigou_game)
from congestion_tax.io import load_instance
from congestion_tax.validate import random_eps_tax

from conftest import FIXTURES


class TestExamples:
    def test_single_action(self):
        g = CongestionGame([CostFunction.monomial(1.0, 2), CostFunction.constant(0.1)], [1.0], [[(0,)]])
        fb = solve_equilibrium(g, random_eps_tax(2, 0.1, np.random.default_rng(1)))
        np.testing.assert_allclose(fb.load, [1.0, 0.0])

    def test_pigou_untaxed(self):
        fb = solve_equilibrium(pigou_game(0.2, 2))
        assert fb.load[1] == pytest.approx(0.44721, abs=1e-5)
        assert fb.load[1] == pytest.approx(0.2 ** 0.5, abs=1e-12)

    def test_pigou_marginal_cost_tax(self):
        g = pigou_game(0.2, 2)
        tax = [None, marginal_cost_tax(g.costs[1])]
        fb = solve_equilibrium(g, tax)
        assert fb.load[1] == pytest.approx(0.25820, abs=1e-5)
        assert fb.load[1] == pytest.approx((0.2 / 3) ** 0.5, abs=1e-12)

    def test_cost_is_untaxed(self):
        g = pigou_game(0.6, 4)
        tax = random_eps_tax(2, 0.05, np.random.default_rng(0))
        fb = solve_equilibrium(g, tax)
        assert fb.cost[0] == 0.6
        assert fb.cost[1] == g.costs[1](fb.load[1])


class TestBestResponse:
    def setup_method(self):
        self.g = CongestionGame([CostFunction.constant(0.3), CostFunction.constant(0.5)], [1.0],
                                [[(0,), (1,)]])

    def test_cheapest(self):
        assert best_response(self.g, 0, [0.3, 0.5]) == (0,)

    def test_tie_lowest_index(self):
        assert best_response(self.g, 0, [0.3, 0.3]) == (0,)

    def test_tie_with_joint_action(self):
        g = CongestionGame([CostFunction.constant(0.3), CostFunction.constant(0.0)], [1.0],
                           [[(0,), (0, 1)]])
        assert best_response(g, 0, [0.3, 0.0]) == (0,)


def fixture_games():
    return [load_instance(FIXTURES / f)[0] for f in
            ("pigou.json", "tiny.json", "constant.json", "diamond.json", "two_commodity_network.json")]


@pytest.mark.parametrize("game", fixture_games(), ids=lambda g: repr(g))
def test_feedback_is_certified(game):
    rng = np.random.default_rng(3)
    cfg = SolverConfig(tol_eq=1e-9)
    for _ in range(3):
        fb = solve_equilibrium(game, random_eps_tax(game.n_facilities, 0.05, rng), cfg)
        assert is_epsilon_equilibrium(game, fb.strategy, fb.taxed_cost, cfg.tol_eq)
        np.testing.assert_allclose(facility_load(game, fb.strategy), fb.load, atol=1e-12)
        np.testing.assert_allclose(fb.commodity_loads.sum(axis=0), fb.load, atol=1e-12)


@pytest.mark.parametrize("game", fixture_games(), ids=lambda g: repr(g))
def test_unique_load_from_different_starts(game):
    rng = np.random.default_rng(5)
    eps, tol = 0.05, 1e-9
    tax = random_eps_tax(game.n_facilities, eps, rng)
    a = solve_equilibrium(game, tax, SolverConfig(tol_eq=tol))
    # start from a pure strategy of best responses at a random cost vector
    start = []
    for i in range(game.n_commodities):
        act, _ = game.best_response(i, rng.uniform(0, 1, game.n_facilities))
        start.append({act: float(game.weights[i])})
    b = solve_equilibrium(game, tax, SolverConfig(tol_eq=tol), init=start)
    assert np.max(np.abs(a.load - b.load)) <= 2 * math.sqrt(2 * tol / eps)


def test_single_facility_perturbation_moves_that_facility():
    game = load_instance(FIXTURES / "tiny.json")[0]
    rng = np.random.default_rng(11)
    eps, tol = 0.05, 1e-10
    band = math.sqrt(2 * tol / eps)
    for _ in range(5):
        tax = random_eps_tax(game.n_facilities, eps, rng)
        f = int(rng.integers(game.n_facilities))
        bumped = list(tax)
        bumped[f] = tax[f].shift(0.02)
        a = solve_equilibrium(game, tax, SolverConfig(tol_eq=tol))
        b = solve_equilibrium(game, bumped, SolverConfig(tol_eq=tol))
        diff = np.abs(a.load - b.load)
        if diff.max() > band:
            assert diff[f] > band


def test_discontinuity_without_slope_augmentation():
    g = CongestionGame([CostFunction.constant(1.0), CostFunction.constant(1.0 - 1e-3)], [1.0],
                       [[(0,), (1,)]])
    from congestion_tax.pwl import PiecewiseLinear
    zero = PiecewiseLinear.line(0.0, 0.0)
    a = solve_equilibrium(g, [zero, zero])
    b = solve_equilibrium(g, [zero, PiecewiseLinear.line(2e-3, 2e-3)])
    np.testing.assert_allclose(a.load, [0.0, 1.0])
    np.testing.assert_allclose(b.load, [1.0, 0.0])


@pytest.mark.parametrize("rule", ["newton", "frank_wolfe", "pairwise_frank_wolfe"])
def test_step_rules_agree(rule):
    game = load_instance(FIXTURES / "tiny.json")[0]
    tax = random_eps_tax(game.n_facilities, 0.1, np.random.default_rng(2))
    ref = solve_equilibrium(game, tax, SolverConfig(tol_eq=1e-12))
    fb = solve_equilibrium(game, tax, SolverConfig(tol_eq=1e-7, step_rule=rule))
    assert np.max(np.abs(fb.load - ref.load)) <= 2 * math.sqrt(2 * 1e-7 / 0.1)


def test_budget_exhaustion_carries_iterate():
    game = load_instance(FIXTURES / "tiny.json")[0]
    tax = random_eps_tax(game.n_facilities, 0.1, np.random.default_rng(2))
    with pytest.raises(SolverError) as info:
        solve_equilibrium(game, tax, SolverConfig(tol_eq=1e-14, step_rule="frank_wolfe", max_iters=3))
    assert info.value.load is not None
    assert info.value.certified_eps > 1e-14


def test_trace_rows(tmp_path):
    tr = SolverTrace()
    solve_equilibrium(load_instance(FIXTURES / "tiny.json")[0], None, trace=tr)
    assert tr.rows and tr.rows[0][0] == 0
    tr.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("iteration,potential,fw_gap")


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_eq=0.0)
    with pytest.raises(ValueError):
        SolverConfig(step_rule="gradient")
