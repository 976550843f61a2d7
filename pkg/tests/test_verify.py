import dataclasses

import numpy as np
import pytest

from token_screen import (DegenerateInputError, ExpPoly, FunctionPayoff, binary_belief, constant_payoff,
                          discount, foc_check, foc_multiplier, ic_audit, oracle_upper_bound, utility_matrix)
from token_screen.verify import default_oracle_grid, mixed_differences


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_symmetric_multiplier_closed_form(sym_skeleton, r):
    mp = foc_multiplier(sym_skeleton, discount(r))
    ref = 4 * r * np.exp(-r * mp.times) / (r + 0.5)
    assert np.max(np.abs(mp.Lam - ref)) < 1e-6
    assert mp.lam.min() > 0


def test_multiplier_solves_its_ode(skew_skeleton):
    mp = foc_multiplier(skew_skeleton, discount(1.0))
    assert mp.ode_residual() < 1e-8


@pytest.mark.parametrize("fixture", ["sym_skeleton", "skew_skeleton", "shannon3_skeleton"])
def test_foc_certificate_passes(request, fixture):
    sk = request.getfixturevalue(fixture)
    rho = discount(1.0)
    rep = foc_check(sk, None, foc_multiplier(sk, rho), rho)
    assert rep.passed
    assert rep.max_violation <= 1e-7
    assert rep.max_active_gap <= 1e-7


def test_foc_inactive_states_sit_below_level(skew_skeleton):
    rho = discount(1.0)
    rep = foc_check(skew_skeleton, None, foc_multiplier(skew_skeleton, rho), rho)
    early = (rep.times > 0.01) & (rep.times < 0.3)
    # state 0 is inactive in the first phase and strictly below its constant
    assert np.all(rep.l[early, 0] < rep.a[0])


def test_multiplier_input_checks(sym_skeleton):
    with pytest.raises(DegenerateInputError):
        foc_multiplier(sym_skeleton, ExpPoly(1.0, cutoff=2.0))
    with pytest.raises(DegenerateInputError):
        foc_multiplier(sym_skeleton, FunctionPayoff(lambda t: np.exp(-t)))
    with pytest.raises(DegenerateInputError):
        foc_multiplier(sym_skeleton, ExpPoly(-0.1))


def test_oracle_grid_shape():
    g = default_oracle_grid(40.0)
    assert g.size == 201 and g[0] == 0 and g[-1] == 40.0
    assert g[1] == pytest.approx(0.005)
    assert np.all(np.diff(np.diff(g)) > 0)


def test_oracle_constant_payoff(quad2):
    res = oracle_upper_bound(constant_payoff(), quad2, binary_belief(0.5), 0.125)
    assert res.value == pytest.approx(1.0, abs=1e-7)


def test_oracle_sandwich_discount(quad2, sym_law):
    greedy = sym_law.integrate(discount(1.0))
    res = oracle_upper_bound(discount(1.0), quad2, binary_belief(0.5), 0.125, warm_law=sym_law)
    assert greedy - 1e-7 <= res.value <= 1.02 * greedy
    assert res.max_violation <= 1e-7
    assert np.allclose(res.masses.sum(axis=1), [0.5, 0.5], atol=1e-7)


def test_oracle_bad_grid(quad2):
    with pytest.raises(DegenerateInputError):
        oracle_upper_bound(discount(1.0), quad2, binary_belief(0.5), 0.125, grid=[0.5, 1.0, 2.0])


def test_ic_audit_on_optimal_menu(leading_menu):
    rep = ic_audit(leading_menu)
    assert rep.passed(1e-6)
    assert rep.max_gain <= 1e-6
    assert abs(rep.ir_top) <= 1e-8
    assert rep.min_mixed_difference >= -1e-9


def test_ic_audit_detects_bad_prices(leading_menu):
    prices = leading_menu.prices.copy()
    prices[100] += 0.01  # type 1.25 now prefers a neighbour's item
    bad = dataclasses.replace(leading_menu, prices=prices)
    rep = ic_audit(bad)
    assert not rep.passed(1e-6)
    assert rep.argmax[0] == pytest.approx(1.25)


def test_utility_matrix_parallel_matches_serial(leading_menu):
    a = utility_matrix(leading_menu, workers=1)
    b = utility_matrix(leading_menu, workers=4)
    assert np.array_equal(a, b)
    # diagonal equals each type's own utility
    assert np.allclose(np.diag(a), leading_menu.utilities, atol=1e-14)


def test_mixed_differences_of_supermodular_matrix():
    x = np.linspace(0, 1, 5)
    U = np.outer(x, x)
    assert np.all(mixed_differences(U) > 0)
