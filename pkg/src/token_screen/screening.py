"""Type distributions, virtual time preferences and the token cap / price menu.

A type ``r`` is a discount rate.  The cap for type ``r`` is the root
``T(r) = g(r)/G(r)`` of its virtual time preference, and prices follow from
the envelope condition with the top type's participation constraint binding.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from ._validation import DegenerateInputError, RegularityError, check_positive
from .payoffs import ExpPoly
from .stopping import StoppingLaw, truncate_law

PDF_FLOOR = 1e-12
QUAD_EPS = 1e-12
_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)


class TypeModel:
    """Distribution of the discount rate on ``[lower, upper]``."""

    def __init__(self, lower: float, upper: float, cdf, pdf, kind: str = "custom"):
        if not 0.0 < lower < upper:
            raise DegenerateInputError(f"need 0 < lower < upper, got [{lower}, {upper}]")
        self.lower = float(lower)
        self.upper = float(upper)
        self._cdf = cdf
        self._pdf = pdf
        self.kind = kind

    @classmethod
    def uniform(cls, a: float, b: float) -> "TypeModel":
        width = b - a
        return cls(a, b, lambda r: (r - a) / width, lambda r: 1.0 / width, kind="uniform")

    @classmethod
    def tabulated(cls, r, cdf=None, pdf=None) -> "TypeModel":
        """Monotone-cubic interpolation of a tabulated CDF (or of a density's integral)."""
        r = np.asarray(r, dtype=float)
        if r.ndim != 1 or r.size < 3 or np.any(np.diff(r) <= 0):
            raise DegenerateInputError("tabulated types need >= 3 strictly increasing points")
        if (cdf is None) == (pdf is None):
            raise DegenerateInputError("give exactly one of cdf or pdf")
        if cdf is None:
            dens = PchipInterpolator(r, np.asarray(pdf, dtype=float))
            G = dens.antiderivative()
            total = float(G(r[-1]))
            if abs(total - 1.0) > 1e-8:
                raise DegenerateInputError(f"tabulated pdf integrates to {total:.10g}, not 1")
        else:
            cdf = np.asarray(cdf, dtype=float)
            if abs(cdf[0]) > 1e-12 or abs(cdf[-1] - 1.0) > 1e-12 or np.any(np.diff(cdf) < 0):
                raise DegenerateInputError("tabulated cdf must rise monotonically from 0 to 1")
            G = PchipInterpolator(r, cdf)
        g = G.derivative()

        def pdf_fn(x):
            val = float(g(x))
            if val < PDF_FLOOR:
                warnings.warn(f"type density {val:.3g} floored at {PDF_FLOOR:g} at r={x:.6g}",
                              RuntimeWarning, stacklevel=3)
                val = PDF_FLOOR
            return val

        return cls(r[0], r[-1], lambda x: float(np.clip(G(x), 0.0, 1.0)), pdf_fn, kind="tabulated")

    def check(self, r: float) -> float:
        r = float(r)
        if not self.lower - 1e-12 <= r <= self.upper + 1e-12:
            raise DegenerateInputError(f"type {r} outside support [{self.lower}, {self.upper}]")
        return min(max(r, self.lower), self.upper)

    def cdf(self, r: float) -> float:
        r = self.check(r)
        if r == self.lower:
            return 0.0
        if r == self.upper:
            return 1.0
        return float(self._cdf(r))

    def pdf(self, r: float) -> float:
        return float(self._pdf(self.check(r)))

    def inverse_hazard(self, r: float) -> float:
        """``G(r)/g(r)``, the weight on the information rent."""
        return self.cdf(r) / self.pdf(r)

    def cutoff(self, r: float) -> float:
        """Root ``g(r)/G(r)`` of the virtual time preference; inf at the lowest type."""
        G = self.cdf(r)
        return math.inf if G <= 0.0 else self.pdf(r) / G

    def grid(self, n: int = 401) -> np.ndarray:
        if n < 2:
            raise DegenerateInputError("type grid needs at least 2 points")
        return np.linspace(self.lower, self.upper, n)

    def __repr__(self):
        return f"TypeModel(kind={self.kind!r}, support=[{self.lower:g}, {self.upper:g}])"


class _UnitValuation:
    """q == 1; the baseline model as a special case of heterogeneous valuations."""

    def q(self, r):
        return 1.0

    def dq(self, r):
        return 0.0


UNIT_VALUATION = _UnitValuation()


def adjusted_cutoff(tm: TypeModel, r: float, valuation=UNIT_VALUATION) -> float:
    """``g/G + q'/q``; nonpositive values mean the type is excluded."""
    return tm.cutoff(r) + valuation.dq(r) / valuation.q(r)


@dataclass(frozen=True)
class VirtualPreference:
    r: float
    rho: ExpPoly
    rho_plus: ExpPoly
    root: float


def virtual_preference(tm: TypeModel, r: float) -> VirtualPreference:
    """``e^{-rt}(1 - t G(r)/g(r))`` together with its positive part and root."""
    r = tm.check(r)
    w = tm.inverse_hazard(r)
    T = tm.cutoff(r)
    return VirtualPreference(r, ExpPoly(r, 1.0, -w), ExpPoly(r, 1.0, -w, cutoff=T), T)


def token_cap(tm: TypeModel, chi: float, r: float) -> float:
    return check_positive(chi, "chi") * tm.cutoff(r)


def user_utility(law: StoppingLaw, r: float, reported: float, tm: TypeModel) -> float:
    """``U(reported | r)``: discounted value of the law capped at the reported type's cutoff."""
    r = tm.check(r)
    T = tm.cutoff(reported)
    return truncate_law(law, T).integrate(ExpPoly(r))


def _rent_density(tm, law, z, valuation):
    """Derivative of the top-anchored information rent at type ``z``."""
    T = max(adjusted_cutoff(tm, z, valuation), 0.0)
    v = law.exp_moments(z, [T], power=1)[0]
    u0 = law.exp_moments(z, [T], power=0)[0]
    return valuation.q(z) * v - valuation.dq(z) * u0


def _rent_between(tm, law, a, b, valuation) -> float:
    if b <= a:
        return 0.0
    val, _ = quad(lambda z: _rent_density(tm, law, z, valuation), a, b,
                  epsabs=QUAD_EPS, epsrel=1e-12, limit=200)
    return float(val)


def _rent_short(tm, law, a, b, valuation) -> float:
    """Rent over a sub-cell of the type grid; 5-point Gauss-Legendre is ample there."""
    if b <= a:
        return 0.0
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * sum(w * _rent_density(tm, law, mid + half * x, valuation)
                            for x, w in zip(_GL5_X, _GL5_W)))


def price(tm: TypeModel, law: StoppingLaw, r: float) -> float:
    """Menu price for type ``r``: own utility minus the information rent ``int_r^upper V``."""
    r = tm.check(r)
    u = law.exp_moments(r, [tm.cutoff(r)])[0]
    return float(u - _rent_between(tm, law, r, tm.upper, UNIT_VALUATION))


def marginal_price(tm: TypeModel, law: StoppingLaw, r: float, chi: float) -> float:
    """Price of one more token at type ``r``'s cap, ``e^{-rT} f(T) / chi``."""
    r = tm.check(r)
    T = tm.cutoff(r)
    return _marginal(law, r, T, chi, 1.0)


def _marginal(law, r, T, chi, q):
    if math.isinf(T) or T <= 0.0:
        return 0.0
    return float(q * math.exp(-r * T) * law.density_at(T).sum() / chi)


@dataclass(frozen=True)
class TokenMenu:
    """Per-type cutoffs, caps and prices on a fixed type grid.

    ``rent`` holds the information rent ``int_{r_j}^{upper}`` of the rent
    density, so prices off the grid need only one short quadrature.
    """

    types: np.ndarray
    cutoffs: np.ndarray
    caps: np.ndarray
    prices: np.ndarray
    marginal_prices: np.ndarray
    utilities: np.ndarray
    rent: np.ndarray
    chi: float
    law: StoppingLaw
    type_model: TypeModel
    valuation: object = UNIT_VALUATION

    @property
    def net_utilities(self) -> np.ndarray:
        return self.utilities - self.prices

    @property
    def excluded(self) -> np.ndarray:
        return self.cutoffs <= 0.0

    def price_at(self, r: float) -> float:
        tm, v = self.type_model, self.valuation
        r = tm.check(r)
        j = min(int(np.searchsorted(self.types, r, side="right")), self.types.size - 1)
        T = adjusted_cutoff(tm, r, v)
        if T <= 0.0:
            return 0.0
        u = v.q(r) * self.law.exp_moments(r, [T])[0]
        return float(u - (_rent_short(tm, self.law, r, self.types[j], v) + self.rent[j]))

    def table(self) -> np.ndarray:
        """Columns r, T, cap_tokens, price, marginal_price, utility, net_utility."""
        return np.column_stack([self.types, self.cutoffs, self.caps, self.prices,
                                self.marginal_prices, self.utilities, self.net_utilities])


MENU_COLUMNS = ("r", "T", "cap_tokens", "price", "marginal_price", "utility", "net_utility")


def build_menu(tm: TypeModel, law: StoppingLaw, chi: float, n_types: int = 401,
               valuation=UNIT_VALUATION) -> TokenMenu:
    """Token cap / price menu on a uniform type grid."""
    chi = check_positive(chi, "chi")
    if not math.isinf(law.cutoff):
        raise DegenerateInputError("menus are built from the untruncated law")
    rs = tm.grid(n_types)
    T = np.array([adjusted_cutoff(tm, r, valuation) for r in rs])
    if np.any(np.diff(T) > 1e-12 * np.maximum(1.0, np.abs(T[1:]))):
        k = int(np.argmax(np.diff(T) > 0))
        raise RegularityError(f"cutoff increases between r={rs[k]:.6g} and r={rs[k + 1]:.6g}; "
                              "ironing is not supported")
    T = np.where(T > 0.0, T, 0.0)
    q = np.array([valuation.q(r) for r in rs])
    utilities = np.array([q[j] * law.exp_moments(rs[j], [T[j]])[0] for j in range(rs.size)])
    pieces = np.array([_rent_between(tm, law, rs[j], rs[j + 1], valuation) for j in range(rs.size - 1)])
    rent = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    prices = np.where(T > 0.0, utilities - rent, 0.0)
    marg = np.array([_marginal(law, rs[j], T[j], chi, q[j]) for j in range(rs.size)])
    return TokenMenu(types=rs, cutoffs=T, caps=chi * T, prices=prices, marginal_prices=marg,
                     utilities=utilities, rent=rent, chi=chi, law=law, type_model=tm,
                     valuation=valuation)


def menu_revenue(menu: TokenMenu, tm: Optional[TypeModel] = None, n_cells: int = 20) -> float:
    """Expected price ``int P(r) g(r) dr`` by adaptive quadrature."""
    tm = tm or menu.type_model
    edges = np.linspace(tm.lower, tm.upper, n_cells + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda r: menu.price_at(r) * tm.pdf(r), a, b, epsabs=QUAD_EPS, limit=100)
        total += val
    return float(total)


def virtual_surplus(tm: TypeModel, law: StoppingLaw, r: float, valuation=UNIT_VALUATION) -> float:
    """``E[virtual preference^+]`` for type ``r`` under the law."""
    T = adjusted_cutoff(tm, r, valuation)
    if T <= 0.0:
        return 0.0
    q, dq, w = valuation.q(r), valuation.dq(r), tm.inverse_hazard(r)
    return law.integrate(ExpPoly(r, q + w * dq, -q * w, cutoff=T))


def virtual_surplus_revenue(tm: TypeModel, law: StoppingLaw, valuation=UNIT_VALUATION,
                            n_cells: int = 40) -> float:
    """Revenue as the integral of the pointwise virtual surplus."""
    edges = np.linspace(tm.lower, tm.upper, n_cells + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda r: virtual_surplus(tm, law, r, valuation) * tm.pdf(r), a, b,
                      epsabs=QUAD_EPS, limit=100)
        total += val
    return float(total)
