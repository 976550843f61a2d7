"""Heterogeneous valuations and endogenous reasoning quality.

With utility ``q(r) e^{-rt}`` the cutoff becomes ``g/G + q'/q`` and types
with a nonpositive cutoff are excluded.  In the binary model with value
``|mu - 1/2|`` and cost ``|mu - 1/2|**alpha`` the stopping boundary
``1/2 +- kappa(t)`` has a closed form through Kummer's function.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from ._validation import DegenerateInputError, RegularityError, check_positive
from .screening import UNIT_VALUATION, TokenMenu, TypeModel, adjusted_cutoff, build_menu
from .stopping import StoppingLaw

KUMMER_SWITCH = 50.0
KUMMER_RTOL = 1e-14
FD_STEP = 1e-6


class ValuationProfile:
    """Utility scale ``q(r) > 0`` with derivative ``dq`` (central differences if omitted)."""

    def __init__(self, q: Callable[[float], float], dq: Optional[Callable[[float], float]] = None,
                 label: str = "custom"):
        self._q = q
        self._dq = dq
        self.label = label

    def q(self, r):
        val = self._q(r)
        if not val > 0:
            raise DegenerateInputError(f"valuation must be positive, got q({r})={val}")
        return val

    def dq(self, r):
        if self._dq is not None:
            return self._dq(r)
        return (self._q(r + FD_STEP) - self._q(r - FD_STEP)) / (2 * FD_STEP)

    def derivative_error(self, tm: TypeModel, n: int = 101) -> float:
        """Largest gap between ``dq`` and a central difference on the support."""
        rs = np.linspace(tm.lower + FD_STEP, tm.upper - FD_STEP, n)
        fd = [(self._q(r + FD_STEP) - self._q(r - FD_STEP)) / (2 * FD_STEP) for r in rs]
        return float(max(abs(self.dq(r) - d) for r, d in zip(rs, fd)))

    @classmethod
    def unit(cls) -> "ValuationProfile":
        return cls(lambda r: 1.0, lambda r: 0.0, label="1")

    @classmethod
    def from_expression(cls, text: str) -> "ValuationProfile":
        """Parse an arithmetic expression in ``r`` (``exp``, ``log``, ``sqrt``, ``**``)."""
        fn = _compile_expression(text)
        return cls(fn, label=text)

    def __repr__(self):
        return f"ValuationProfile({self.label!r})"


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt, "sin": math.sin,
          "cos": math.cos, "tanh": math.tanh, "cosh": math.cosh}


def _compile_expression(text: str) -> Callable[[float], float]:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise DegenerateInputError(f"cannot parse valuation {text!r}: {exc.msg}") from None

    def ev(node, r):
        if isinstance(node, ast.Expression):
            return ev(node.body, r)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "r":
            return r
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, r), ev(node.right, r))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand, r))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1):
            return _FUNCS[node.func.id](ev(node.args[0], r))
        raise DegenerateInputError(f"unsupported element in valuation {text!r}")

    ev(tree, 1.0)
    return lambda r: ev(tree, float(r))


def valuation_cutoff(tm: TypeModel, v, r: float) -> float:
    """Adjusted cutoff ``g/G + q'/q``; nonpositive means type ``r`` is excluded."""
    return adjusted_cutoff(tm, r, v)


@dataclass(frozen=True)
class SCDReport:
    passed: bool
    margin: float  # T(upper) - max q'/q
    max_log_slope: float
    top_cutoff: float
    min_mixed_difference: Optional[float] = None


def scd_check(tm: TypeModel, v, law: Optional[StoppingLaw] = None, n_grid: int = 401) -> SCDReport:
    """Single-crossing test ``max_r q'/q < T(upper)`` with the adjusted cutoff.

    Given a law, the mixed differences of ``q(r) U(r'|r)`` over the type grid
    are audited directly as well.
    """
    rs = tm.grid(n_grid)
    slope = max(v.dq(r) / v.q(r) for r in rs)
    top = valuation_cutoff(tm, v, tm.upper)
    mixed = None
    if law is not None:
        T = np.array([max(valuation_cutoff(tm, v, r), 0.0) for r in rs])
        U = np.array([v.q(r) * law.exp_moments(r, T) for r in rs])
        mixed = float((U[1:, 1:] - U[1:, :-1] - U[:-1, 1:] + U[:-1, :-1]).min())
    return SCDReport(bool(slope < top), float(top - slope), float(slope), float(top), mixed)


def _check_kummer(b, z):
    if b <= 0 and float(b).is_integer():
        raise DegenerateInputError(f"b must not be a nonpositive integer, got {b}")
    if z < 0:
        raise DegenerateInputError(f"z must be nonnegative, got {z}")


def kummer_1f1(a: float, b: float, z: float) -> float:
    """Confluent hypergeometric ``1F1(a; b; z)`` for ``z >= 0``."""
    _check_kummer(b, z)
    if z <= KUMMER_SWITCH:
        return _kummer_series(a, b, z)
    return math.exp(z) * kummer_scaled(a, b, z) if z <= 700 else math.inf


def kummer_scaled(a: float, b: float, z: float) -> float:
    """``exp(-z) 1F1(a; b; z)``, finite for large ``z``.

    Power series up to ``z = 50``; beyond that the large-argument expansion
    ``Gamma(b)/Gamma(a) z^(a-b) sum_k (b-a)_k (1-a)_k / (k! z^k)``, summed
    until its terms stop shrinking.
    """
    _check_kummer(b, z)
    if z == 0:
        return 1.0
    if z <= KUMMER_SWITCH:
        return math.exp(-z) * _kummer_series(a, b, z)
    if a <= 0 and float(a).is_integer():
        # polynomial case: the series terminates
        return math.exp(-z) * _kummer_series(a, b, z)
    total, term = 1.0, 1.0
    for k in range(500):
        nxt = term * (b - a + k) * (1 - a + k) / ((k + 1) * z)
        if abs(nxt) >= abs(term):
            break  # the expansion starts diverging here
        total += nxt
        term = nxt
        if abs(term) < 1e-17 * abs(total):
            break
    return total * math.exp(gammaln(b) - gammaln(a) + (a - b) * math.log(z))


def _kummer_series(a, b, z):
    total, term, k = 1.0, 1.0, 0
    while True:
        term *= (a + k) / (b + k) * z / (k + 1)
        total += term
        k += 1
        if term == 0.0 or abs(term) <= KUMMER_RTOL * abs(total):
            break
        if k > 10000:  # pragma: no cover
            raise RuntimeError("1F1 series did not converge")
    return total


@dataclass(frozen=True)
class QualityCurve:
    r: float
    T: float
    t: np.ndarray
    kappa: np.ndarray

    @property
    def upper(self) -> np.ndarray:
        return np.clip(0.5 + self.kappa, 0.0, 1.0)

    @property
    def lower(self) -> np.ndarray:
        return np.clip(0.5 - self.kappa, 0.0, 1.0)

    @property
    def plateau(self) -> float:
        return float(self.kappa[0])


def kappa_at(remaining: float, r: float, alpha: float, chi: float) -> float:
    """Quality ``kappa`` with ``remaining = T(r) - t`` time left before the cap."""
    if math.isinf(remaining):
        return (chi / ((alpha - 1.0) * r)) ** (1.0 / alpha)
    if remaining <= 0.0:
        return 0.0
    z = alpha * r * remaining
    val = alpha * chi / ((alpha - 1.0) * (alpha + 1.0)) * remaining * kummer_scaled(alpha + 1.0, alpha + 2.0, z)
    return max(val, 0.0) ** (1.0 / alpha)


def quality_curve(r: float, tm: TypeModel, alpha: float, chi: float, n_points: int = 201,
                  t_max: Optional[float] = None, valuation=UNIT_VALUATION) -> QualityCurve:
    """Reasoning quality ``kappa(t)`` on a uniform grid of ``[0, T(r)]``.

    For the unlimited type (``T = inf``) the grid runs to ``t_max`` instead and
    the curve is the constant plateau.
    """
    if not alpha > 1.0:
        raise DegenerateInputError(f"alpha must exceed 1, got {alpha}")
    chi = check_positive(chi, "chi")
    T = adjusted_cutoff(tm, r, valuation)
    if T <= 0.0:
        raise RegularityError(f"type r={r} is excluded (T={T:.6g})")
    end = T if math.isfinite(T) else (t_max if t_max is not None else 10.0)
    t = np.linspace(0.0, end, n_points)
    kappa = np.array([kappa_at(T - s, r, alpha, chi) for s in t])
    return QualityCurve(float(r), float(T), t, kappa)


def extended_menu(tm: TypeModel, v, law: StoppingLaw, chi: float, n_types: int = 401) -> TokenMenu:
    """Token menu with heterogeneous valuations; excluded types get the null item."""
    rep = scd_check(tm, v, n_grid=n_types)
    if not rep.passed:
        raise RegularityError(f"single-crossing fails: max q'/q = {rep.max_log_slope:.6g} "
                              f">= T(upper) = {rep.top_cutoff:.6g}")
    return build_menu(tm, law, chi, n_types, valuation=v)
