"""Input validation helpers shared by the numerical modules and estimators."""
from __future__ import annotations

import numpy as np

# Beliefs closer to the boundary than this are treated as non-interior.
BOUNDARY_FLOOR = 1e-10
# Floor used by callers that clip paths back into the interior.
INTERIOR_FLOOR = 1e-9


class TokenScreenError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInputError(TokenScreenError, ValueError):
    pass


class BoundaryError(TokenScreenError, ValueError):
    """A belief that must be interior touches the simplex boundary."""


class RegularityError(TokenScreenError, ValueError):
    """A monotonicity or single-crossing condition needed by the solver fails."""


class SkeletonError(TokenScreenError, RuntimeError):
    """The greedy construction hit a runtime failure (rates, boundary, phases)."""


class CertificateError(TokenScreenError, RuntimeError):
    """A numerical certificate (capacity, FOC, IC, LP) could not be established."""


def check_belief(probs, *, interior: bool = False, atol: float = 1e-12) -> np.ndarray:
    """Return ``probs`` as a float array after checking it is a simplex point."""
    mu = np.asarray(probs, dtype=float)
    if mu.ndim != 1 or mu.size < 2:
        raise DegenerateInputError(f"belief must be a vector with at least 2 entries, got shape {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise DegenerateInputError("belief has non-finite entries")
    if np.any(mu < 0):
        raise DegenerateInputError(f"belief has negative entries: {mu}")
    if abs(mu.sum() - 1.0) > atol:
        raise DegenerateInputError(f"belief sums to {mu.sum():.17g}, not 1")
    if interior and mu.min() < BOUNDARY_FLOOR:
        raise BoundaryError(f"belief {mu} is not interior (min component < {BOUNDARY_FLOOR})")
    return mu


def check_mass(masses) -> np.ndarray:
    x = np.asarray(masses, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DegenerateInputError(f"mass vector must be 1-D with at least 2 entries, got shape {x.shape}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DegenerateInputError(f"mass vector must be finite and nonnegative: {x}")
    if x.sum() <= 0:
        raise DegenerateInputError("mass vector is identically zero")
    return x


def check_positive(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise DegenerateInputError(f"{name} must be a positive finite number, got {value!r}")
    return v


def vertex(n: int, state: int) -> np.ndarray:
    e = np.zeros(n)
    e[state] = 1.0
    return e
