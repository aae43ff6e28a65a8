import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestion_tax.errors import AssumptionError, InfeasibleStrategyError
from congestion_tax.game import (CongestionGame, CostFunction, facility_load, gap,
                                 is_epsilon_equilibrium, marginal_cost_tax, pigou_game,
                                 potential, potential_gradient, price_of_anarchy, social_cost)
from congestion_tax.pwl import PiecewiseLinear

Y_NE = 0.2 ** 0.5
Y_OPT = (0.2 / 3) ** 0.5


def two_links(extra=False):
    acts = [[(0,), (1,)] + ([(0, 1)] if extra else [])]
    return CongestionGame([CostFunction.monomial(1.0, 2), CostFunction.affine(0.1, 0.5)], [1.0], acts)


class TestCostFunction:
    def test_kinds(self):
        assert CostFunction.constant(0.3)(0.7) == pytest.approx(0.3)
        assert CostFunction.affine(0.1, 0.5)(0.5) == pytest.approx(0.35)
        assert CostFunction.monomial(0.5, 3)(1.0) == pytest.approx(0.5)
        assert CostFunction.polynomial([0.1, 0.0, 0.2])(0.5) == pytest.approx(0.15)

    def test_derivatives_and_integral(self):
        c = CostFunction.monomial(1.0, 4)
        assert c.derivative(0.5) == pytest.approx(0.5)
        assert c.antiderivative(1.0) == pytest.approx(0.2)
        assert c.smoothness == pytest.approx(12.0)
        assert CostFunction.monomial(1.0, 2).smoothness == pytest.approx(2.0)
        assert CostFunction.affine(0.1, 0.5).smoothness == 0.0

    def test_rejects_non_monotone(self):
        with pytest.raises(AssumptionError):
            CostFunction.affine(0.5, -0.3)

    def test_rejects_values_outside_unit_interval(self):
        with pytest.raises(AssumptionError):
            CostFunction.affine(0.5, 0.8)

    def test_rejects_decreasing_marginal_tax(self):
        # c = 0.5 (2u - u^2): u c'(u) = u - u^2 falls after u = 1/2
        with pytest.raises(AssumptionError):
            CostFunction.polynomial([0.0, 1.0, -0.5])

    def test_dict_roundtrip(self):
        for c in (CostFunction.constant(0.2), CostFunction.affine(0.1, 0.4),
                  CostFunction.monomial(0.8, 3), CostFunction.polynomial([0.1, 0.2, 0.3])):
            back = CostFunction.from_dict(c.to_dict())
            assert back(0.37) == pytest.approx(c(0.37))


class TestMarginalTax:
    def test_quadratic(self):
        assert marginal_cost_tax(CostFunction.monomial(1.0, 2))(0.5) == pytest.approx(0.5)

    def test_constant(self):
        assert marginal_cost_tax(CostFunction.constant(0.4))(0.8) == 0.0

    def test_quartic(self):
        assert marginal_cost_tax(CostFunction.monomial(1.0, 4))(0.5) == pytest.approx(0.25)


class TestGameConstruction:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            CongestionGame([CostFunction.constant(0.1)], [0.5], [[(0,)]])

    def test_empty_action_rejected(self):
        with pytest.raises(ValueError):
            CongestionGame([CostFunction.constant(0.1)], [1.0], [[()]])

    def test_unknown_facility_rejected(self):
        with pytest.raises(ValueError):
            CongestionGame([CostFunction.constant(0.1)], [1.0], [[(1,)]])


class TestFacilityLoad:
    def test_split(self):
        g = two_links()
        np.testing.assert_allclose(facility_load(g, [{(0,): 0.4, (1,): 0.6}]), [0.4, 0.6])

    def test_joint_action(self):
        g = two_links(extra=True)
        np.testing.assert_allclose(facility_load(g, [{(0, 1): 1.0}]), [1.0, 1.0])

    def test_additive_over_commodities(self):
        g = CongestionGame([CostFunction.constant(0.1), CostFunction.constant(0.2)], [0.5, 0.5],
                           [[(0,), (1,)], [(0,), (1,)]])
        assert facility_load(g, [{(0,): 0.5}, {(0,): 0.5}])[0] == pytest.approx(1.0)

    def test_infeasible(self):
        g = two_links()
        with pytest.raises(InfeasibleStrategyError):
            facility_load(g, [{(0,): 0.4}])
        with pytest.raises(InfeasibleStrategyError):
            facility_load(g, [{(0,): 1.2, (1,): -0.2}])
        with pytest.raises(InfeasibleStrategyError):
            facility_load(g, [{(0, 1): 1.0}])


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_load_map_is_linear(a, b, lam, _):
    g = two_links(extra=True)
    x1 = [{(0,): a * 0.5, (1,): (1 - a) * 0.5, (0, 1): 0.5}]
    x2 = [{(0,): b, (1,): 1 - b, (0, 1): 0.0}]
    mix = [{k: lam * x1[0].get(k, 0) + (1 - lam) * x2[0].get(k, 0) for k in x1[0]}]
    lhs = facility_load(g, mix)
    rhs = lam * facility_load(g, x1) + (1 - lam) * facility_load(g, x2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestPotential:
    def test_linear_cost(self):
        g = CongestionGame([CostFunction.affine(0.0, 1.0)], [1.0], [[(0,)]])
        assert potential(g, None, [1.0]) == pytest.approx(0.5)

    def test_constant_plus_tax(self):
        g = CongestionGame([CostFunction.constant(0.2)], [1.0], [[(0,)]])
        assert potential(g, [PiecewiseLinear.line(0, 1)], [1.0]) == pytest.approx(0.7)

    def test_pigou(self):
        g = pigou_game(0.2, 2)
        assert potential(g, None, [0.5528, 0.4472]) == pytest.approx(0.2 * 0.5528 + 0.4472 ** 3 / 3)
        assert potential(g, None, [0.5528, 0.4472]) == pytest.approx(0.14036, abs=1e-4)

    def test_gradient_is_taxed_cost(self):
        g = pigou_game(0.2, 2)
        tax = [PiecewiseLinear.line(0, 0.3), PiecewiseLinear([(0, 0), (0.5, 0.1), (1, 1)])]
        y = np.array([0.3, 0.7])
        np.testing.assert_allclose(potential_gradient(g, tax, y), [0.2 + 0.09, 0.49 + 0.1 + 0.2 * 1.8])


class TestSocialCost:
    def test_untaxed_equilibrium(self):
        assert social_cost(pigou_game(0.2, 2), [1 - Y_NE, Y_NE]) == pytest.approx(0.2)

    def test_optimum(self):
        assert social_cost(pigou_game(0.2, 2), [1 - Y_OPT, Y_OPT]) == pytest.approx(0.165573, abs=1e-6)

    def test_zero_load(self):
        assert social_cost(pigou_game(0.2, 2), [0.0, 0.0]) == 0.0


class TestGap:
    def test_two_actions(self):
        g = two_links()
        assert gap(g, 0, [{(0,): 1.0}], [0.2, 0.5]) == pytest.approx(0.3)

    def test_no_off_support_action(self):
        g = two_links()
        assert gap(g, 0, [{(0,): 0.5, (1,): 0.5}], [0.2, 0.5]) == math.inf

    def test_three_actions(self):
        g = two_links(extra=True)
        assert gap(g, 0, [{(0,): 1.0}], [0.2, 0.5]) == pytest.approx(0.3)

    def test_support_tolerance(self):
        g = two_links()
        assert gap(g, 0, [{(0,): 1.0 - 1e-12, (1,): 1e-12}], [0.2, 0.5]) == pytest.approx(0.3)


class TestEpsilonEquilibrium:
    def test_pigou_untaxed(self):
        g = pigou_game(0.2, 2)
        x = [{(0,): 1 - Y_NE, (1,): Y_NE}]
        c = g.facility_cost([1 - Y_NE, Y_NE])
        assert is_epsilon_equilibrium(g, x, c, 1e-4)
        assert not is_epsilon_equilibrium(g, x, c + np.array([0.0, 1e-3]), 0.0)

    def test_single_action(self):
        g = CongestionGame([CostFunction.constant(0.9)], [1.0], [[(0,)]])
        assert is_epsilon_equilibrium(g, [{(0,): 1.0}], [0.9], 0.0)


class TestPriceOfAnarchy:
    def test_pigou(self):
        assert price_of_anarchy(pigou_game(0.2, 2)) == pytest.approx(0.2 / 0.165573, abs=1e-4)
        assert price_of_anarchy(pigou_game(0.2, 2)) == pytest.approx(1.2079, abs=1e-4)

    def test_constant_costs(self):
        g = CongestionGame([CostFunction.constant(0.3), CostFunction.constant(0.5)], [1.0], [[(0,), (1,)]])
        assert price_of_anarchy(g) == pytest.approx(1.0)

    def test_zero_optimum(self):
        g = CongestionGame([CostFunction.constant(0.0)], [1.0], [[(0,)]])
        with pytest.raises(ZeroDivisionError):
            price_of_anarchy(g)

    def test_grows_with_power(self):
        poa = [price_of_anarchy(pigou_game(1.0, p)) for p in (1, 2, 4, 8)]
        assert all(b > a for a, b in zip(poa, poa[1:]))
