import math

import numpy as np
import pytest

from token_screen import (Family, QuadraticBinaryEntropy, RegularityError, ShannonEntropy, binary_belief,
                          capacity_audit, constant_delay_solution, diffusion_solution, diffusion_utility,
                          minimal_delay, screen_1d, TypeModel)
from token_screen.baselines import sech


def test_sech_guard():
    assert sech(0.0) == 1.0
    assert sech(1e6) == pytest.approx(0.0, abs=1e-300)
    assert sech(np.array([1.0, -1.0]))[0] == pytest.approx(1 / math.cosh(1.0))


def test_minimal_delay():
    assert minimal_delay(QuadraticBinaryEntropy(2.0), binary_belief(0.5), 0.125) == pytest.approx(2.0)
    assert minimal_delay(ShannonEntropy(2), binary_belief(0.5), math.log(2)) == pytest.approx(1.0)


def test_constant_delay_solution(uniform12, quad2):
    sol = constant_delay_solution(uniform12, quad2, binary_belief(0.5), 0.125)
    assert sol.t_min == 2.0
    assert sol.revenue == pytest.approx(0.5 * math.exp(-3.0), abs=1e-9)
    res = sol.result
    served = ~res.excluded
    assert np.all(res.types[served] <= 1.5 + 1e-12)
    assert np.all(res.types[~served] > 1.5 - 1e-12)
    assert np.allclose(res.allocation[served], 2.0)
    assert np.allclose(res.prices[served], math.exp(-3.0), atol=1e-9)
    assert res.ic_gain() <= 1e-9
    audit = capacity_audit(sol.law, quad2, binary_belief(0.5), 0.125, times=np.array([2.0]))
    assert audit.slack[0] == pytest.approx(0.0, abs=1e-12)


def test_diffusion_solution(uniform12):
    res = diffusion_solution(uniform12, 0.125)
    assert res.revenue == pytest.approx(sech(2 * math.sqrt(2)), abs=1e-9)
    assert np.allclose(res.allocation, math.sqrt(0.125))
    assert not res.excluded.any()
    assert diffusion_utility(math.sqrt(0.125), 2.0) == pytest.approx(sech(2 * math.sqrt(2)))


def test_linear_family_closed_form(uniform12):
    # U(a|r) = a (2.5 - r): virtual value a (3.5 - 2r), served iff r < 1.75
    fam = Family("linear", 0.0, 1.0, lambda a, r: a * (2.5 - r), lambda a, r: -a * np.ones_like(a))
    res = screen_1d(fam, uniform12, n_types=401)
    assert res.revenue == pytest.approx(0.5625, abs=1e-9)
    high = res.types > 1.75 + 1e-12
    assert np.allclose(res.allocation[high], 0.0)
    assert np.allclose(res.allocation[res.types < 1.75 - 1e-12], 1.0)
    assert res.ic_gain() <= 1e-9


def test_single_type_extracts_full_surplus():
    fam = Family("linear", 0.0, 2.0, lambda a, r: a * (3.0 - r), lambda a, r: -a * np.ones_like(a))
    res = screen_1d(fam, 1.5)
    assert res.revenue == pytest.approx(3.0)
    assert res.allocation[0] == 2.0


def test_interior_optimum_refined(uniform12):
    # virtual value a - a^2 (r + (r - 1)) / 2 peaks inside the interval
    fam = Family("quad", 0.0, 2.0, lambda a, r: a - 0.5 * r * a ** 2, lambda a, r: -0.5 * a ** 2)
    res = screen_1d(fam, uniform12, n_types=11)
    expect = 1.0 / (2 * res.types - 1.0)
    assert np.allclose(res.allocation, expect, atol=1e-7)


def test_nonmonotone_allocation_rejected():
    # hazard ratio collapses above 1.5, so mid types are excluded but higher ones served
    r = np.linspace(1.0, 2.0, 11)
    cdf = np.concatenate([np.linspace(0, 0.05, 6), [0.3, 0.6, 0.85, 0.95, 1.0]])
    tm = TypeModel.tabulated(r, cdf=cdf)
    fam = Family("linear", 0.0, 1.0, lambda a, r: a * (1.8 - r), lambda a, r: -a * np.ones_like(a))
    with pytest.raises(RegularityError):
        screen_1d(fam, tm, n_types=101)
