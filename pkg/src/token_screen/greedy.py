"""Deterministic skeleton of the greedy exploration belief process.

Within a phase the active states (those tied for the smallest divergence
``D(e_theta | mu)``) receive Poisson jump rates ``beta``; absent a jump the
belief drifts so that the tie is preserved.  When an inactive state joins the
tie a new phase starts.  Once every state is active the belief is frozen and
the process is a stationary Poisson race.

Alongside the belief the integrator carries the no-jump survival ``S``, the
per-state absorbed mass ``F^i`` and the elapsed time ``int_0^t S``; these
feed the stopping-law module without a second quadrature pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from ._validation import INTERIOR_FLOOR, SkeletonError, check_belief, check_positive
from .entropy import EntropyModel, assumption1_report

EPS_ISO = 1e-7
EPS_EVENT = 1e-10


def _greedy_rates(entropy: EntropyModel, mu: np.ndarray, active: np.ndarray, chi: float):
    """Rates on the active set and the full divergence vector at ``mu``."""
    d = entropy.divergences_to_vertices(mu)
    sigma = entropy.hessian(mu)[np.ix_(active, active)]
    v = np.linalg.solve(sigma, np.ones(active.size))
    beta = np.zeros(mu.size)
    beta[active] = chi * v / (d[active] @ v)
    return beta, d


@dataclass(frozen=True)
class Phase:
    """One phase of the skeleton on ``[start, end)``.

    ``states`` rows hold the augmented state ``(mu, S, F^0..F^{n-1}, E)``;
    ``derivs`` holds its time derivative at the same nodes.
    """

    index: int
    start: float
    end: float
    active: tuple
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    rates: np.ndarray
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False, compare=False)

    @property
    def beliefs(self) -> np.ndarray:
        n = self.rates.shape[1]
        return self.states[:, :n]


@dataclass(frozen=True)
class StationaryPhase:
    start: float
    belief: np.ndarray
    rates: np.ndarray
    hazard: float
    survival: float
    absorbed: np.ndarray
    elapsed: float


class GreedySkeleton:
    """Phases, dense belief/rate paths and the stationary tail of the greedy model."""

    def __init__(self, entropy, prior, chi, phases, stationary, step):
        self.entropy = entropy
        self.prior = prior
        self.chi = chi
        self.phases = phases
        self.stationary = stationary
        self.step = step

    @property
    def n_states(self) -> int:
        return self.prior.size

    @property
    def breakpoints(self) -> np.ndarray:
        """Phase start times, ending with the stationary start t_K."""
        return np.array([p.start for p in self.phases] + [self.stationary.start])

    @property
    def t_stationary(self) -> float:
        return self.stationary.start

    @property
    def hazard(self) -> float:
        return self.stationary.hazard

    @property
    def active_sets(self) -> list:
        return [p.active for p in self.phases] + [tuple(range(self.n_states))]

    def default_horizon(self, lifetimes: float = 20.0) -> float:
        return self.t_stationary + lifetimes / self.hazard

    def _augmented_at(self, t: float) -> np.ndarray:
        st = self.stationary
        if t >= st.start:
            decay = math.exp(-st.hazard * (t - st.start))
            return np.concatenate([
                st.belief,
                [st.survival * decay],
                st.absorbed + st.survival * (1.0 - decay) * st.belief,
                [st.elapsed + st.survival * (1.0 - decay) / st.hazard],
            ])
        for ph in self.phases:
            if t < ph.end:
                return ph._spline(max(t, ph.start))
        raise AssertionError("time not covered by any phase")  # pragma: no cover

    def belief_at(self, t) -> np.ndarray:
        """Interpolated drift path; a matrix when ``t`` is an array."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([self._augmented_at(s)[: self.n_states] for s in ts])
        return out[0] if np.ndim(t) == 0 else out

    def rates_at(self, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((ts.size, self.n_states))
        for k, s in enumerate(ts):
            out[k] = self._rates_scalar(s)
        return out[0] if np.ndim(t) == 0 else out

    def _rates_scalar(self, t: float) -> np.ndarray:
        if t >= self.stationary.start:
            return self.stationary.rates.copy()
        for ph in self.phases:
            if t < ph.end:
                mu = ph._spline(max(t, ph.start))[: self.n_states]
                beta, _ = _greedy_rates(self.entropy, mu, np.array(ph.active), self.chi)
                return beta
        raise AssertionError("time not covered by any phase")  # pragma: no cover

    def survival_at(self, t: float) -> float:
        return float(self._augmented_at(t)[self.n_states])

    def zeta_at(self, t) -> np.ndarray:
        mus = np.atleast_2d(self.belief_at(np.atleast_1d(t)))
        z = np.array([self.entropy.divergences_to_vertices(m).min() for m in mus])
        return z[0] if np.ndim(t) == 0 else z

    def node_times(self) -> np.ndarray:
        """All integrator nodes on [0, t_K] (phase ends appear once)."""
        if not self.phases:
            return np.array([0.0])
        ts = np.concatenate([p.times[:-1] for p in self.phases] + [[self.stationary.start]])
        return ts

    def __repr__(self):
        return (f"GreedySkeleton(n={self.n_states}, chi={self.chi:g}, phases={len(self.phases)}, "
                f"t_K={self.t_stationary:.6g}, h_K={self.hazard:.6g})")


def _default_density(n: int) -> int:
    return 40 if n <= 3 else 12


def build_skeleton(
    entropy: EntropyModel,
    mu0,
    chi: float,
    *,
    step: Optional[float] = None,
    eps_iso: float = EPS_ISO,
    eps_event: float = EPS_EVENT,
    check_assumption: bool = True,
) -> GreedySkeleton:
    """Integrate the greedy exploration model from ``mu0`` with information rate ``chi``.

    Fixed-step RK4 with bisection-refined phase transitions.  Raises
    ``SkeletonError`` if a rate turns nonpositive, the path approaches the
    boundary, or more than ``n`` phases occur.
    """
    mu0 = check_belief(mu0, interior=True)
    chi = check_positive(chi, "chi")
    n = mu0.size
    if check_assumption:
        report = assumption1_report(entropy, _default_density(n), n=n)
        if not report.passed:
            raise SkeletonError(f"entropy fails the regularity audit: {report}")

    d0 = entropy.divergences_to_vertices(mu0)
    active = np.flatnonzero(d0 <= d0.min() + eps_iso)
    if step is None:
        step = min(1e-3, 0.01 * d0.min() / chi)

    def rhs(y, act):
        mu = y[:n]
        beta, _ = _greedy_rates(entropy, mu, act, chi)
        s = y[n]
        total = beta.sum()
        dy = np.empty_like(y)
        dy[:n] = -(beta - total * mu)
        dy[n] = -s * total
        dy[n + 1: 2 * n + 1] = s * beta
        dy[2 * n + 1] = s
        return dy, beta

    def rk4(y, h, act):
        k1, _ = rhs(y, act)
        k2, _ = rhs(y + 0.5 * h * k1, act)
        k3, _ = rhs(y + 0.5 * h * k2, act)
        k4, _ = rhs(y + h * k3, act)
        return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def gaps(y, act):
        d = entropy.divergences_to_vertices(y[:n])
        inactive = np.setdiff1d(np.arange(n), act)
        return inactive, d[inactive] - d[act].min()

    y = np.concatenate([mu0, [1.0], np.zeros(n), [0.0]])
    t = 0.0
    phases = []
    while active.size < n:
        if len(phases) >= n:
            raise SkeletonError(f"more than {n} phases; the construction is not converging")
        times, states, derivs, rates = [t], [y.copy()], [], []
        dy, beta = rhs(y, active)
        if np.any(beta[active] <= 0):
            raise SkeletonError(f"nonpositive greedy rate {beta} at t={t:.6g}")
        derivs.append(dy)
        rates.append(beta)
        while True:
            y_new = rk4(y, step, active)
            if y_new[:n].min() < INTERIOR_FLOOR:
                raise SkeletonError(f"path left the interior at t={t + step:.6g} before a new state entered")
            _, g = gaps(y_new, active)
            if g.min() > 0:
                t, y = t + step, y_new
                dy, beta = rhs(y, active)
                if np.any(beta[active] <= 0):
                    raise SkeletonError(f"nonpositive greedy rate {beta} at t={t:.6g}")
                times.append(t); states.append(y.copy()); derivs.append(dy); rates.append(beta)
                continue
            # bisection on the sub-step length for the first crossing
            lo, hi = 0.0, step
            while hi - lo > eps_event:
                mid = 0.5 * (lo + hi)
                _, gm = gaps(rk4(y, mid, active), active)
                if gm.min() > 0:
                    lo = mid
                else:
                    hi = mid
            y = rk4(y, hi, active)
            t = t + hi
            dy, beta = rhs(y, active)
            times.append(t); states.append(y.copy()); derivs.append(dy); rates.append(beta)
            break
        inactive, g = gaps(y, active)
        entering = inactive[g <= eps_iso]
        if entering.size == 0:
            entering = inactive[[np.argmin(g)]]
        times_a = np.asarray(times)
        states_a = np.asarray(states)
        derivs_a = np.asarray(derivs)
        spline = CubicHermiteSpline(times_a, states_a, derivs_a, axis=0) if times_a.size > 1 else None
        phases.append(Phase(
            index=len(phases) + 1,
            start=times_a[0],
            end=t,
            active=tuple(int(a) for a in active),
            times=times_a,
            states=states_a,
            derivs=derivs_a,
            rates=np.asarray(rates),
            _spline=spline,
        ))
        active = np.union1d(active, entering)

    mu_k = y[:n].copy()
    d_k = entropy.divergences_to_vertices(mu_k)
    c = chi / (mu_k @ d_k)
    stationary = StationaryPhase(
        start=t,
        belief=mu_k,
        rates=c * mu_k,
        hazard=float(c),
        survival=float(y[n]),
        absorbed=y[n + 1: 2 * n + 1].copy(),
        elapsed=float(y[2 * n + 1]),
    )
    return GreedySkeleton(entropy, mu0, chi, phases, stationary, step)


@dataclass(frozen=True)
class ZetaProfile:
    """min_theta D(e_theta | mu_t) sampled on the skeleton nodes, callable anywhere."""

    skeleton: GreedySkeleton
    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return self.skeleton.zeta_at(t)


def iso_divergence_profile(sk: GreedySkeleton) -> ZetaProfile:
    times = sk.node_times()
    return ZetaProfile(sk, times, np.atleast_1d(sk.zeta_at(times)))


def rates_at(sk: GreedySkeleton, t):
    return sk.rates_at(t)


def belief_at(sk: GreedySkeleton, t):
    return sk.belief_at(t)
