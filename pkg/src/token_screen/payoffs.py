"""Payoff functions of the stopping time.

``ExpPoly`` covers every payoff the pricing formulas need,
``exp(-r t) * (c0 + c1 t)`` optionally cut to zero after ``cutoff``.  It
carries closed-form integrals against exponential densities so the stationary
tail of a stopping law never has to be truncated numerically.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad


def exp_poly_integral(lam: float, c0: float, c1: float, a: float, b: float) -> float:
    """Closed form of ``int_a^b (c0 + c1 t) exp(-lam t) dt`` (``b`` may be inf)."""
    if b <= a:
        return 0.0
    if lam == 0.0:
        if math.isinf(b):
            if c0 == 0.0 and c1 == 0.0:
                return 0.0
            return math.inf
        return c0 * (b - a) + 0.5 * c1 * (b * b - a * a)
    ea = math.exp(-lam * a)
    eb = 0.0 if math.isinf(b) else math.exp(-lam * b)
    i0 = (ea - eb) / lam
    # int t e^{-lam t} = -(t/lam + 1/lam^2) e^{-lam t}
    tb = 0.0 if math.isinf(b) else (b / lam + 1.0 / lam**2) * eb
    i1 = (a / lam + 1.0 / lam**2) * ea - tb
    return c0 * i0 + c1 * i1


class Payoff:
    """A real function of the stopping time.  ``cutoff`` marks where it is set to zero."""

    cutoff: float = math.inf

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def tail_integral(self, start: float, end: float, hazard: float, mass: float) -> float:
        """``int_start^end rho(t) * mass * hazard * exp(-hazard (t - start)) dt``."""
        end = min(end, self.cutoff)
        if end <= start:
            return 0.0
        dens = lambda t: self(t) * mass * hazard * math.exp(-hazard * (t - start))
        val, _ = quad(dens, start, end, limit=200, epsabs=1e-13, epsrel=1e-12)
        return float(val)


class ExpPoly(Payoff):
    """``exp(-rate t) (c0 + c1 t)`` on ``[0, cutoff)`` and zero afterwards."""

    def __init__(self, rate: float, c0: float = 1.0, c1: float = 0.0, cutoff: float = math.inf):
        self.rate = float(rate)
        self.c0 = float(c0)
        self.c1 = float(c1)
        self.cutoff = float(cutoff)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        val = np.exp(-self.rate * t) * (self.c0 + self.c1 * t)
        out = np.where(t < self.cutoff, val, 0.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        val = np.exp(-self.rate * t) * (self.c1 - self.rate * (self.c0 + self.c1 * t))
        out = np.where(t < self.cutoff, val, 0.0)
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        r = self.rate
        val = np.exp(-r * t) * (r * r * (self.c0 + self.c1 * t) - 2.0 * r * self.c1)
        out = np.where(t < self.cutoff, val, 0.0)
        return float(out) if out.ndim == 0 else out

    def tail_integral(self, start, end, hazard, mass):
        end = min(end, self.cutoff)
        if end <= start:
            return 0.0
        # mass * hazard * e^{hazard start} * int (c0 + c1 t) e^{-(rate + hazard) t}
        lam = self.rate + hazard
        shift = math.exp(-self.rate * start)
        # re-centre at start to keep exponentials bounded
        c0 = self.c0 + self.c1 * start
        return mass * hazard * shift * exp_poly_integral(lam, c0, self.c1, 0.0, end - start)

    def truncated(self, cutoff: float) -> "ExpPoly":
        return ExpPoly(self.rate, self.c0, self.c1, min(cutoff, self.cutoff))

    def __repr__(self):
        return f"ExpPoly(rate={self.rate:g}, c0={self.c0:g}, c1={self.c1:g}, cutoff={self.cutoff:g})"


class FunctionPayoff(Payoff):
    """Wrap an arbitrary vectorized callable."""

    def __init__(self, fn: Callable, derivative: Optional[Callable] = None, cutoff: float = math.inf):
        self._fn = fn
        self._dfn = derivative
        self.cutoff = float(cutoff)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.cutoff, self._fn(t), 0.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        if self._dfn is None:
            h = 1e-6
            return (self(np.asarray(t) + h) - self(np.asarray(t) - h)) / (2 * h)
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.cutoff, self._dfn(t), 0.0)
        return float(out) if out.ndim == 0 else out


def discount(rate: float) -> ExpPoly:
    """The user's own payoff ``exp(-rate t)``."""
    return ExpPoly(rate, 1.0, 0.0)


def constant_payoff() -> ExpPoly:
    return ExpPoly(0.0, 1.0, 0.0)
