"""One-dimensional screening and the two parametric mechanism families.

Each family offers a scalar allocation ``a`` on an interval with utility
``U(a | r)`` to a type ``r``; the null item has utility 0.  The optimal menu
maximizes the virtual value ``U + (G/g) dU/dr`` pointwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from ._validation import RegularityError, check_belief, check_positive
from .entropy import EntropyModel
from .screening import TypeModel
from .stopping import StoppingLaw, law_from_atoms

SECH_GUARD = 700.0


def sech(x):
    x = np.minimum(np.abs(np.asarray(x, dtype=float)), SECH_GUARD)
    out = 2.0 / (np.exp(x) + np.exp(-x))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Family:
    """Allocations on ``[low, high]`` with utility ``utility(a, r)`` and its type derivative.

    Both callables must accept an array of allocations.
    """

    name: str
    low: float
    high: float
    utility: Callable
    d_utility: Callable
    n_grid: int = 201

    def grid(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.n_grid)


@dataclass(frozen=True)
class ScreeningResult:
    family: Family
    types: np.ndarray
    allocation: np.ndarray  # nan for excluded types
    utility: np.ndarray
    prices: np.ndarray
    revenue: float

    @property
    def excluded(self) -> np.ndarray:
        return np.isnan(self.allocation)

    def ic_gain(self) -> float:
        """Largest gain from misreporting among grid types."""
        U = np.array([[0.0 if np.isnan(a) else self.family.utility(a, r) for a in self.allocation]
                      for r in self.types])
        net = U - self.prices[None, :]
        return float((net - np.diag(net)[:, None]).max())


def _virtual(family, a, r, w):
    return family.utility(a, r) + w * family.d_utility(a, r)


def _best_allocation(family: Family, r: float, w: float):
    """Pointwise maximizer of the virtual value; ``None`` when exclusion is optimal."""
    grid = family.grid()
    vals = np.asarray(_virtual(family, grid, r, w), dtype=float)
    k = int(np.argmax(vals))
    best_a, best_v = grid[k], vals[k]
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo and 0 < k < grid.size - 1:
        res = minimize_scalar(lambda a: -_virtual(family, a, r, w), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        if -res.fun > best_v:
            best_a, best_v = float(res.x), -float(res.fun)
    if best_v < 0.0:
        return None, best_v
    return float(best_a), float(best_v)


def screen_1d(family: Family, tm: Union[TypeModel, float], n_types: int = 401) -> ScreeningResult:
    """Optimal menu over ``family``; a float ``tm`` is a single known type."""
    if not isinstance(tm, TypeModel):
        r = float(tm)
        a, v = _best_allocation(family, r, 0.0)
        u = 0.0 if a is None else family.utility(a, r)
        return ScreeningResult(family, np.array([r]), np.array([np.nan if a is None else a]),
                               np.array([u]), np.array([u]), float(u))
    rs = tm.grid(n_types)
    alloc = np.full(rs.size, np.nan)
    for j, r in enumerate(rs):
        a, _ = _best_allocation(family, r, tm.inverse_hazard(r))
        if a is not None:
            alloc[j] = a
    util = np.array([0.0 if np.isnan(a) else family.utility(a, r) for a, r in zip(alloc, rs)])
    # higher types must not get allocations they value more than the lower type's
    for j in range(rs.size - 1):
        a_next = alloc[j + 1]
        u_next = 0.0 if np.isnan(a_next) else family.utility(a_next, rs[j])
        if u_next > util[j] + 1e-10:
            raise RegularityError(f"allocation is not monotone between r={rs[j]:.6g} and r={rs[j + 1]:.6g}")

    def slope(z):
        a, _ = _best_allocation(family, z, tm.inverse_hazard(z))
        return 0.0 if a is None else -family.d_utility(a, z)

    # net utility u(r) = int_r^upper -dU/dz, accumulated cell by cell
    pieces = np.array([quad(slope, a, b, epsabs=1e-12, limit=100)[0] for a, b in zip(rs[:-1], rs[1:])])
    rent = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    prices = np.where(np.isnan(alloc), 0.0, util - rent)

    def surplus(z):
        a, v = _best_allocation(family, z, tm.inverse_hazard(z))
        return 0.0 if a is None else v * tm.pdf(z)

    edges = np.linspace(tm.lower, tm.upper, 21)
    revenue = sum(quad(surplus, a, b, epsabs=1e-12, limit=100)[0] for a, b in zip(edges[:-1], edges[1:]))
    return ScreeningResult(family, rs, alloc, util, prices, float(revenue))


def minimal_delay(entropy: EntropyModel, mu0, chi: float) -> float:
    """Shortest constant delay satisfying the capacity constraint at full revelation."""
    mu0 = check_belief(mu0)
    chi = check_positive(chi, "chi")
    return float((mu0 @ entropy.vertex_values(mu0.size) - entropy.value(mu0)) / chi)


@dataclass(frozen=True)
class ConstantDelaySolution:
    t_min: float
    result: ScreeningResult
    law: StoppingLaw

    @property
    def revenue(self) -> float:
        return self.result.revenue


def constant_delay_family(t_min: float, t_max: Optional[float] = None) -> Family:
    t_max = t_max if t_max is not None else t_min + 20.0
    return Family("constant-delay", t_min, t_max,
                  utility=lambda t, r: np.exp(-r * t),
                  d_utility=lambda t, r: -t * np.exp(-r * t))


def constant_delay_solution(tm: TypeModel, entropy: EntropyModel, mu0, chi: float,
                            n_types: int = 401) -> ConstantDelaySolution:
    t_min = minimal_delay(entropy, mu0, chi)
    res = screen_1d(constant_delay_family(t_min), tm, n_types)
    mu0 = check_belief(mu0)
    return ConstantDelaySolution(t_min, res, law_from_atoms(mu0, [(t_min, mu0)]))


def diffusion_utility(sigma: float, r: float) -> float:
    """Value of a binary diffusion with volatility ``sigma`` to a type-``r`` user."""
    return sech(math.sqrt(r / 2.0) / np.asarray(sigma, dtype=float))


def diffusion_family(chi_qv: float) -> Family:
    top = math.sqrt(check_positive(chi_qv, "chi_qv"))

    def d_utility(s, r):
        x = math.sqrt(r / 2.0) / np.asarray(s, dtype=float)
        return -sech(x) * np.tanh(x) * x / (2.0 * r)

    return Family("diffusion", 1e-3 * top, top, utility=diffusion_utility, d_utility=d_utility)


def diffusion_solution(tm: TypeModel, chi_qv: float, n_types: int = 401) -> ScreeningResult:
    return screen_1d(diffusion_family(chi_qv), tm, n_types)
