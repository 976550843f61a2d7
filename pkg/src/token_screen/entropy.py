"""Generalized entropies, their normalized derivatives and Bregman divergences.

Every model is evaluated through its degree-1 homogeneous extension to the
positive orthant, so ``gradient(mu) @ mu == value(mu)`` and
``hessian(mu) @ mu == 0`` hold identically.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.special import xlogy

from ._validation import (
    BOUNDARY_FLOOR,
    BoundaryError,
    DegenerateInputError,
    check_belief,
    check_mass,
)


class EntropyModel:
    """Base class.  Subclasses implement ``_value``, ``_gradient`` and ``_hessian``
    on strictly positive vectors of length ``n``."""

    kind: str = "abstract"
    units: str = ""
    n: Optional[int] = None

    def value(self, x) -> float:
        x = check_mass(x)
        self._check_dim(x)
        return float(self._value(x))

    def gradient(self, mu) -> np.ndarray:
        mu = self._interior(mu)
        return np.asarray(self._gradient(mu), dtype=float)

    def hessian(self, mu) -> np.ndarray:
        mu = self._interior(mu)
        return np.asarray(self._hessian(mu), dtype=float)

    def vertex_values(self, n: int) -> np.ndarray:
        """H(e_i) for every vertex."""
        return np.array([self._value(np.eye(n)[i]) for i in range(n)], dtype=float)

    def divergences_to_vertices(self, mu) -> np.ndarray:
        """Vector of D(e_theta | mu) over all states."""
        mu = self._interior(mu)
        # Normalization makes H(mu) - grad.mu vanish.
        return self.vertex_values(mu.size) - self._gradient(mu)

    def _interior(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        self._check_dim(mu)
        if mu.ndim != 1 or mu.size < 2:
            raise DegenerateInputError(f"expected a 1-D belief, got shape {mu.shape}")
        if mu.min() < BOUNDARY_FLOOR:
            raise BoundaryError(f"belief {mu} is not interior")
        return mu

    def _check_dim(self, x: np.ndarray) -> None:
        if self.n is not None and x.shape[-1] != self.n:
            raise DegenerateInputError(f"{self.kind} entropy is defined for n={self.n}, got n={x.shape[-1]}")

    def _value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class ShannonEntropy(EntropyModel):
    """Negative Shannon entropy in nats, ``sum x_i ln(x_i / sum x)``."""

    kind = "shannon"
    units = "nats"

    def __init__(self, n: Optional[int] = None):
        self.n = n

    def _value(self, x):
        return np.sum(xlogy(x, x / x.sum()))

    def _gradient(self, x):
        return np.log(x / x.sum())

    def _hessian(self, x):
        return np.diag(1.0 / x) - 1.0 / x.sum()

    def divergences_to_vertices(self, mu):
        mu = self._interior(mu)
        return -np.log(mu)

    def __repr__(self):
        return f"ShannonEntropy(n={self.n})"


class QuadraticBinaryEntropy(EntropyModel):
    """``H(mu) = |mu - 1/2|**alpha`` on the binary simplex, mu = P(state 1).

    alpha = 2 is the quadratic-variation constraint.  Vectors are ordered
    ``(P(state 0), P(state 1))``.
    """

    kind = "quadratic-binary"
    units = "squared belief"
    n = 2

    def __init__(self, alpha: float = 2.0):
        if not alpha >= 2.0:
            raise DegenerateInputError(f"alpha must be >= 2, got {alpha}")
        self.alpha = float(alpha)

    def _h(self, p):
        return np.abs(p - 0.5) ** self.alpha

    def _dh(self, p):
        u = p - 0.5
        return self.alpha * np.abs(u) ** (self.alpha - 1.0) * np.sign(u)

    def _d2h(self, p):
        return self.alpha * (self.alpha - 1.0) * np.abs(p - 0.5) ** (self.alpha - 2.0)

    def _value(self, x):
        s = x.sum()
        return s * self._h(x[1] / s)

    def _gradient(self, x):
        p = x[1] / x.sum()
        h, dh = self._h(p), self._dh(p)
        return np.array([h - p * dh, h + (1.0 - p) * dh])

    def _hessian(self, x):
        s = x.sum()
        p = x[1] / s
        w = np.array([-p, 1.0 - p])
        return self._d2h(p) / s * np.outer(w, w)

    def __repr__(self):
        return f"QuadraticBinaryEntropy(alpha={self.alpha:g})"


class CustomEntropy(EntropyModel):
    """Entropy supplied as three callables.  The caller is responsible for the
    homogeneous normalization; ``assumption1_report`` can audit the result."""

    kind = "custom"

    def __init__(
        self,
        value: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        hessian: Callable[[np.ndarray], np.ndarray],
        n: int,
        units: str = "custom",
    ):
        self._value_fn = value
        self._gradient_fn = gradient
        self._hessian_fn = hessian
        self.n = int(n)
        self.units = units

    def _value(self, x):
        return self._value_fn(x)

    def _gradient(self, x):
        return self._gradient_fn(x)

    def _hessian(self, x):
        return self._hessian_fn(x)


def binary_belief(p: float) -> np.ndarray:
    """The binary belief putting probability ``p`` on state 1."""
    return np.array([1.0 - p, p], dtype=float)


def entropy_value(model: EntropyModel, x) -> float:
    return model.value(x)


def bregman(model: EntropyModel, target, base) -> float:
    """D(target | base) = H(target) - H(base) - grad H(base).(target - base)."""
    target = check_belief(target)
    base = check_belief(base)
    if base.min() < BOUNDARY_FLOOR:
        raise BoundaryError(f"base belief {base} is on the boundary")
    d = model.value(target) - model.value(base) - model.gradient(base) @ (target - base)
    # Rounding can leave a tiny negative number when target == base.
    return max(float(d), 0.0)


def hessian_submatrix(model: EntropyModel, mu, active: Iterable[int]) -> np.ndarray:
    mu = check_belief(mu, interior=True)
    idx = sorted(set(int(a) for a in active))
    if not idx:
        raise DegenerateInputError("active set is empty")
    return model.hessian(mu)[np.ix_(idx, idx)]


def simplex_grid(n: int, density: int) -> np.ndarray:
    """All interior points ``k / density`` with positive integer ``k`` summing to ``density``."""
    if density < n:
        raise DegenerateInputError(f"grid density {density} too small for n={n}")
    rows = []
    # stars and bars over the density-n spare units
    for bars in itertools.combinations(range(density - 1), n - 1):
        cuts = (-1,) + bars + (density - 1,)
        rows.append([cuts[i + 1] - cuts[i] for i in range(n)])
    return np.asarray(rows, dtype=float) / density


@dataclass(frozen=True)
class Assumption1Report:
    sup_min_divergence: float
    part1_pass: bool
    closest_state_min_prob: float
    part2_pass: bool
    max_cross_term: float
    part3_pass: bool
    n_points: int

    @property
    def passed(self) -> bool:
        return self.part1_pass and self.part2_pass and self.part3_pass


def assumption1_report(model: EntropyModel, grid_density: int = 40, n: Optional[int] = None,
                       cross_tol: float = 1e-9) -> Assumption1Report:
    """Audit the three regularity conditions on an interior simplex grid.

    (1) sup over the grid of min_theta D(e_theta|mu);
    (2) the smallest probability a closest state can have;
    (3) max over theta != theta' of (e_theta - mu)' Hess H(mu) (e_theta' - mu),
        which must be <= 0: moving toward one state never brings the belief
        closer (in divergence) to another.
    """
    if grid_density < 10:
        raise DegenerateInputError("grid_density must be >= 10")
    n = n or model.n
    if n is None:
        raise DegenerateInputError("state count n must be given for this model")
    grid = simplex_grid(n, grid_density)
    eye = np.eye(n)
    sup_min = -np.inf
    eps_emp = np.inf
    cross = -np.inf
    for mu in grid:
        d = model.divergences_to_vertices(mu)
        dmin = d.min()
        sup_min = max(sup_min, dmin)
        closest = np.flatnonzero(d <= dmin + 1e-12 * max(1.0, abs(dmin)))
        eps_emp = min(eps_emp, mu[closest].min())
        hess = model.hessian(mu)
        dev = eye - mu
        term = dev @ hess @ dev.T
        np.fill_diagonal(term, -np.inf)
        cross = max(cross, term.max())
    return Assumption1Report(
        sup_min_divergence=float(sup_min),
        part1_pass=bool(np.isfinite(sup_min)),
        closest_state_min_prob=float(eps_emp),
        part2_pass=bool(eps_emp > 1.0 / grid_density + 1e-12),
        max_cross_term=float(cross),
        part3_pass=bool(cross <= cross_tol),
        n_points=len(grid),
    )


def make_entropy(kind: str, alpha: float = 2.0, n: Optional[int] = None) -> EntropyModel:
    if kind == "shannon":
        return ShannonEntropy(n)
    if kind == "quadratic-binary":
        return QuadraticBinaryEntropy(alpha)
    raise DegenerateInputError(f"unknown entropy kind {kind!r}")
