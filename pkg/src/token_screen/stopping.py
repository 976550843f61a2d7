"""Stopping-time laws, the capacity functional, truncation and Monte Carlo.

A ``StoppingLaw`` stores per-state sub-distributions ``F^i`` (total mass
``mu0(i)``) on a body grid, optionally followed by an exact exponential tail,
or discrete atoms for laws that stop at fixed times.  Truncating at ``T``
keeps the law but marks mass not absorbed by ``T`` as never learning.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ._validation import CertificateError, DegenerateInputError, check_belief, check_positive
from .entropy import EntropyModel
from .greedy import GreedySkeleton
from .payoffs import Payoff

EPS_CAP = 1e-7
MASS_TOL = 1e-8

# 3-point Gauss-Legendre on [0, 1]
_GL_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_W = 0.5 * np.array([5.0, 8.0, 5.0]) / 9.0


def _hermite_slope(s, F0, F1, f0, f1, h):
    """Derivative of the cubic Hermite interpolant of F at relative position s."""
    s = s[..., None] if np.ndim(s) else s
    return ((6 * s * s - 6 * s) * (F0 - F1) / h
            + (3 * s * s - 4 * s + 1) * f0
            + (3 * s * s - 2 * s) * f1)


def _hermite_value(s, F0, F1, f0, f1, h):
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * F0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * F1 + (s3 - s2) * h * f1)


@dataclass(frozen=True)
class ExpTail:
    """Stationary tail from ``start``: total hazard ``hazard``, survival ``survival``
    at ``start`` and per-state split ``weights`` (sums to 1)."""

    start: float
    hazard: float
    survival: float
    weights: np.ndarray
    absorbed: np.ndarray
    elapsed: float

    def state_cdf(self, t: float) -> np.ndarray:
        decay = math.exp(-self.hazard * (t - self.start))
        return self.absorbed + self.survival * (1.0 - decay) * self.weights

    def elapsed_at(self, t: float) -> float:
        decay = math.exp(-self.hazard * (t - self.start))
        return self.elapsed + self.survival * (1.0 - decay) / self.hazard

    def density(self, t: float) -> np.ndarray:
        return self.survival * self.hazard * math.exp(-self.hazard * (t - self.start)) * self.weights


@dataclass(frozen=True)
class StoppingLaw:
    """Per-state stopping sub-distributions.

    ``grid``/``F``/``dens``/``elapsed`` describe the body on ``[0, grid[-1]]``
    (a grid node may repeat where the density jumps).  ``cutoff`` is the
    truncation time; ``horizon`` only bounds tabulated views.
    """

    prior: np.ndarray
    grid: np.ndarray
    F: np.ndarray
    dens: np.ndarray
    elapsed: np.ndarray
    tail: Optional[ExpTail] = None
    atoms: tuple = ()
    cutoff: float = math.inf
    horizon: float = math.inf

    @property
    def n_states(self) -> int:
        return self.prior.size

    @property
    def body_end(self) -> float:
        return float(self.grid[-1])

    def _locate(self, t: float) -> int:
        j = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(max(j, 0), self.grid.size - 2)

    def _body_state_cdf(self, t: float) -> np.ndarray:
        if self.grid.size == 1:
            return self.F[0].copy()
        j = self._locate(t)
        h = self.grid[j + 1] - self.grid[j]
        s = (t - self.grid[j]) / h
        return _hermite_value(s, self.F[j], self.F[j + 1], self.dens[j], self.dens[j + 1], h)

    def _atom_mass(self, t: float) -> np.ndarray:
        out = np.zeros(self.n_states)
        for at, m in self.atoms:
            if at <= t:
                out += m
        return out

    def _raw_state_cdf(self, t: float) -> np.ndarray:
        if t < 0:
            return np.zeros(self.n_states)
        if self.tail is not None and t >= self.tail.start:
            base = self.tail.state_cdf(t)
        elif t >= self.body_end:
            base = self.F[-1].copy()
        else:
            base = self._body_state_cdf(t)
        return base + self._atom_mass(t)

    def state_cdf(self, t: float) -> np.ndarray:
        """Vector of F^i(t), frozen after the cutoff."""
        return self._raw_state_cdf(min(t, self.cutoff))

    def cdf(self, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([self.state_cdf(s).sum() for s in ts])
        return out[0] if np.ndim(t) == 0 else out

    def elapsed_at(self, t: float) -> float:
        """``int_0^t (1 - F(s)) ds``, the expected time spent before stopping up to t."""
        c = min(t, self.cutoff)
        if self.atoms:
            # atom laws carry no body density: 1 - F is a step function
            e = c - sum(m.sum() * (c - at) for at, m in self.atoms if at <= c)
        elif self.tail is not None and c >= self.tail.start:
            e = self.tail.elapsed_at(c)
        elif c >= self.body_end:
            e = float(self.elapsed[-1]) + (c - self.body_end) * (1.0 - self.F[-1].sum())
        else:
            j = self._locate(c)
            h = self.grid[j + 1] - self.grid[j]
            s = (c - self.grid[j]) / h
            g0 = 1.0 - self.F[j].sum()
            g1 = 1.0 - self.F[j + 1].sum()
            e = float(_hermite_value(s, self.elapsed[j], self.elapsed[j + 1], g0, g1, h))
        if t > self.cutoff:
            e += (t - self.cutoff) * (1.0 - self.state_cdf(self.cutoff).sum())
        return e

    def absorbed_total(self) -> np.ndarray:
        """F^i(inf) for the (possibly truncated) law."""
        return self.state_cdf(math.inf)

    def never_learn(self) -> np.ndarray:
        return self.prior - self.absorbed_total()

    def mass_defect(self) -> float:
        """Distance of the untruncated total mass from the prior."""
        full = self._raw_state_cdf(math.inf)
        return float(np.abs(full - self.prior).max())

    def view(self, horizon: Optional[float] = None, tail_step: float = 1e-2):
        """Times, per-state CDFs, total density and elapsed time for tabulation."""
        horizon = self.horizon if horizon is None else horizon
        if not math.isfinite(horizon):
            horizon = self.body_end
        ts = [t for t in self.grid if t <= horizon]
        for at, _ in self.atoms:
            if at <= horizon:
                ts.append(at)
        if horizon > self.body_end:
            extra = np.arange(self.body_end + tail_step, horizon + 0.5 * tail_step, tail_step)
            ts.extend(extra[extra <= horizon])
            if not extra.size or extra[-1] < horizon:
                ts.append(horizon)
        if math.isfinite(self.cutoff) and self.cutoff <= horizon:
            ts.append(self.cutoff)
        ts = np.unique(np.asarray(ts, dtype=float))
        F = np.array([self.state_cdf(t) for t in ts])
        f = np.array([self.density_at(t).sum() for t in ts])
        el = np.array([self.elapsed_at(t) for t in ts])
        return ts, F, f, el

    def density_at(self, t: float) -> np.ndarray:
        if t > self.cutoff:
            return np.zeros(self.n_states)
        if self.tail is not None and t >= self.tail.start:
            return self.tail.density(t)
        if t > self.body_end or self.grid.size == 1:
            return np.zeros(self.n_states)
        j = self._locate(t)
        h = self.grid[j + 1] - self.grid[j]
        s = (t - self.grid[j]) / h
        return _hermite_slope(np.float64(s), self.F[j], self.F[j + 1], self.dens[j], self.dens[j + 1], h)

    def exp_moments(self, rate: float, cutoffs, power: int = 0) -> np.ndarray:
        """``E[tau**power exp(-rate tau); tau < c]`` for every cutoff ``c``.

        One rate against many cutoffs: body contributions are accumulated once
        per interval and the partial interval uses the same Gauss-Legendre rule
        as ``integrate``, so both routes agree to rounding.
        """
        cuts = np.minimum(np.atleast_1d(np.asarray(cutoffs, dtype=float)), self.cutoff)
        out = np.zeros(cuts.size)
        g = self.grid
        if g.size > 1:
            Ft, ft = self.F.sum(axis=1), self.dens.sum(axis=1)
            h = np.diff(g)
            safe = np.where(h > 0, h, 1.0)

            def slope(s, j):
                hj = safe[j]
                return ((6 * s * s - 6 * s) * (Ft[j] - Ft[j + 1]) / hj
                        + (3 * s * s - 4 * s + 1) * ft[j] + (3 * s * s - 2 * s) * ft[j + 1])

            idx = np.arange(h.size)
            per = np.zeros(h.size)
            for x, w in zip(_GL_X, _GL_W):
                tn = g[:-1] + x * h
                per += w * h * tn**power * np.exp(-rate * tn) * slope(x, idx)
            cum = np.concatenate([[0.0], np.cumsum(per)])
            b = np.clip(cuts, g[0], self.body_end)
            j = np.searchsorted(g, b, side="right") - 1
            inside = j < h.size
            out += np.where(inside, cum[np.minimum(j, h.size)], cum[-1])
            jj = j[inside]
            frac = (b[inside] - g[jj]) / safe[jj]
            part = np.zeros(jj.size)
            for x, w in zip(_GL_X, _GL_W):
                s = x * frac
                tn = g[jj] + s * h[jj]
                part += w * frac * h[jj] * tn**power * np.exp(-rate * tn) * slope(s, jj)
            out[inside] += np.where(h[jj] > 0, part, 0.0)
        tl = self.tail
        if tl is not None:
            L = np.maximum(cuts - tl.start, 0.0)
            lam = rate + tl.hazard
            e = np.exp(-lam * L)
            i0 = -np.expm1(-lam * L) / lam
            coef = tl.survival * tl.hazard * math.exp(-rate * tl.start)
            if power == 0:
                out += coef * i0
            else:
                # int_0^L (start + u) e^{-lam u} du
                tail_lu = np.where(np.isinf(L), 0.0, L) * e
                i1 = (i0 - tail_lu) / lam
                out += coef * (tl.start * i0 + i1)
        for at, m in self.atoms:
            out += np.where(at <= cuts, m.sum() * at**power * math.exp(-rate * at), 0.0)
        return out

    def integrate(self, rho: Payoff, per_state: bool = False):
        """``E[rho(tau)]`` with never-learn mass contributing zero.

        The body uses 3-point Gauss-Legendre against the derivative of the
        cubic Hermite interpolant of ``F``; the tail uses the payoff's own
        exponential kernel.
        """
        end = min(self.cutoff, getattr(rho, "cutoff", math.inf))
        total = np.zeros(self.n_states)
        g = self.grid
        body_end = min(end, self.body_end)
        if g.size > 1 and body_end > g[0]:
            # intervals lying entirely below body_end
            nfull = int(np.searchsorted(g, body_end, side="right")) - 1
            nfull = min(nfull, g.size - 1)
            h = np.diff(g[: nfull + 1])
            ok = h > 0
            if ok.any():
                F0, F1 = self.F[:nfull][ok], self.F[1: nfull + 1][ok]
                f0, f1 = self.dens[:nfull][ok], self.dens[1: nfull + 1][ok]
                left, hh = g[:nfull][ok], h[ok]
                for x, w in zip(_GL_X, _GL_W):
                    slope = _hermite_slope(np.full(hh.size, x), F0, F1, f0, f1, hh[:, None])
                    weight = w * hh * np.asarray(rho(left + x * hh))
                    total += (weight[:, None] * slope).sum(axis=0)
            j = nfull
            if j < g.size - 1 and body_end > g[j]:
                h = g[j + 1] - g[j]
                frac = (body_end - g[j]) / h
                for x, w in zip(_GL_X, _GL_W):
                    s = x * frac
                    slope = _hermite_slope(np.float64(s), self.F[j], self.F[j + 1],
                                           self.dens[j], self.dens[j + 1], h)
                    total += w * frac * h * float(rho(g[j] + s * h)) * slope
        if self.tail is not None and end > self.tail.start:
            for i in range(self.n_states):
                m = self.tail.survival * self.tail.weights[i]
                if m > 0:
                    total[i] += rho.tail_integral(self.tail.start, end, self.tail.hazard, m)
        for at, m in self.atoms:
            if at <= self.cutoff and at < getattr(rho, "cutoff", math.inf):
                total += float(rho(at)) * m
        return total if per_state else float(total.sum())


def law_from_skeleton(sk: GreedySkeleton, horizon: Optional[float] = None) -> StoppingLaw:
    return stopping_law(sk, horizon if horizon is not None else sk.default_horizon())


def stopping_law(sk: GreedySkeleton, horizon: float) -> StoppingLaw:
    """The stopping-time law induced by the compensated Poisson process on ``sk``."""
    if horizon < sk.t_stationary:
        raise DegenerateInputError(f"horizon {horizon} is below the last breakpoint {sk.t_stationary}")
    n = sk.n_states
    if sk.phases:
        # Phase boundaries appear twice: once with the left-limit slope, once
        # with the right-limit slope (rates jump when a state enters).
        grid = np.concatenate([ph.times for ph in sk.phases])
        st = np.concatenate([ph.states for ph in sk.phases])
        dv = np.concatenate([ph.derivs for ph in sk.phases])
        F = st[:, n + 1: 2 * n + 1]
        dens = dv[:, n + 1: 2 * n + 1]
        elapsed = st[:, 2 * n + 1]
    else:
        grid = np.array([0.0])
        F = np.zeros((1, n))
        dens = np.zeros((1, n))
        elapsed = np.zeros(1)
    stn = sk.stationary
    tail = ExpTail(stn.start, stn.hazard, stn.survival, stn.belief / stn.belief.sum(),
                   stn.absorbed.copy(), stn.elapsed)
    law = StoppingLaw(prior=sk.prior.copy(), grid=grid, F=F, dens=dens, elapsed=elapsed,
                      tail=tail, horizon=float(horizon))
    if law.mass_defect() > MASS_TOL:
        raise CertificateError(f"greedy law loses mass: defect {law.mass_defect():.3g}")
    return law


def law_from_atoms(prior, atoms: Sequence, horizon: Optional[float] = None) -> StoppingLaw:
    """A law stopping at fixed times; ``atoms`` is a sequence of ``(time, mass vector)``."""
    prior = check_belief(prior)
    atoms = tuple((float(t), np.asarray(m, dtype=float)) for t, m in atoms)
    last = max((t for t, _ in atoms), default=0.0)
    return StoppingLaw(prior=prior, grid=np.array([0.0]), F=np.zeros((1, prior.size)),
                       dens=np.zeros((1, prior.size)), elapsed=np.zeros(1), atoms=atoms,
                       horizon=float(horizon if horizon is not None else 2 * last + 1))


def law_from_table(prior, times, F, horizon: Optional[float] = None) -> StoppingLaw:
    """Law from tabulated per-state CDFs (e.g. read back from CSV).  Densities
    are finite differences and elapsed time is integrated by the trapezoid rule."""
    prior = check_belief(prior)
    times = np.asarray(times, dtype=float)
    F = np.asarray(F, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise DegenerateInputError("times must be strictly increasing")
    dens = np.gradient(F, times, axis=0) if times.size > 1 else np.zeros_like(F)
    surv = 1.0 - F.sum(axis=1)
    elapsed = np.concatenate([[0.0], np.cumsum(0.5 * (surv[1:] + surv[:-1]) * np.diff(times))])
    return StoppingLaw(prior=prior, grid=times, F=F, dens=dens, elapsed=elapsed,
                       horizon=float(horizon if horizon is not None else times[-1]))


def truncate_law(law: StoppingLaw, T: float) -> StoppingLaw:
    """Stop generating information at ``T``; unabsorbed mass never learns."""
    if T < 0:
        raise DegenerateInputError("truncation time must be nonnegative")
    if math.isinf(T) and math.isinf(law.cutoff):
        return law
    return replace(law, cutoff=min(float(T), law.cutoff))


def expected_payoff(law: StoppingLaw, rho: Payoff) -> float:
    return law.integrate(rho)


@dataclass(frozen=True)
class CapacityAudit:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    @property
    def worst_time(self) -> float:
        return float(self.times[int(np.argmin(self.slack))])

    def feasible(self, eps: float = EPS_CAP) -> bool:
        return self.min_slack >= -eps


def capacity_functional(entropy: EntropyModel, prior, F_t: np.ndarray) -> float:
    """Left side of the capacity inequality for absorbed masses ``F_t``."""
    n = prior.size
    hv = entropy.vertex_values(n)
    remaining = np.clip(prior - F_t, 0.0, None)
    h_rem = entropy.value(remaining) if remaining.sum() > 1e-15 else 0.0
    return float(F_t @ hv + h_rem - entropy.value(prior))


def capacity_audit(law: StoppingLaw, entropy: EntropyModel, mu0, chi: float,
                   times: Optional[np.ndarray] = None) -> CapacityAudit:
    """Slack ``chi int_0^t (1-F) - [sum F^i H(e_i) + H(remaining) - H(mu0)]``."""
    mu0 = check_belief(mu0)
    chi = check_positive(chi, "chi")
    if np.abs(law.prior - mu0).max() > MASS_TOL:
        raise DegenerateInputError("law prior does not match mu0")
    if law.mass_defect() > MASS_TOL and math.isinf(law.cutoff):
        raise CertificateError(f"law is not mass-complete (defect {law.mass_defect():.3g})")
    if times is None:
        times, F, _, el = law.view()
    else:
        times = np.asarray(times, dtype=float)
        F = np.array([law.state_cdf(t) for t in times])
        el = np.array([law.elapsed_at(t) for t in times])
    lhs = np.array([capacity_functional(entropy, mu0, Ft) for Ft in F])
    rhs = chi * el
    return CapacityAudit(times=times, lhs=lhs, rhs=rhs, slack=rhs - lhs)


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class SimulationResult:
    times: np.ndarray  # stopping time per path (inf if censored at the horizon)
    states: np.ndarray  # revealed state per path (-1 if censored)
    checkpoints: np.ndarray
    mean_belief: np.ndarray  # E[mu_t] at the checkpoints, one row each
    n_states: int

    def empirical_state_cdf(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        out = np.empty((grid.size, self.n_states))
        for i in range(self.n_states):
            ti = np.sort(self.times[self.states == i])
            out[:, i] = np.searchsorted(ti, grid, side="right") / self.times.size
        return out

    def state_frequencies(self) -> np.ndarray:
        return np.array([(self.states == i).mean() for i in range(self.n_states)])


def ks_distance(sample: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov sup distance; infinite samples never jump."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float(np.max(np.abs(cdf(np.array([0.0])))))
    Fx = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, x.size + 1)
    return float(max(np.max(i / n - Fx), np.max(Fx - (i - 1) / n)))


def _rate_table(sk: GreedySkeleton):
    grid = sk.node_times()
    rates = sk.rates_at(grid) if grid.size > 1 or sk.phases else np.atleast_2d(sk.stationary.rates)
    return grid, np.atleast_2d(rates)


def _simulate_block(sk, grid, rates, lam_max, seed, block, size, horizon):
    rng = np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(block)))
    n = sk.n_states
    tK = sk.t_stationary
    times = np.full(size, np.inf)
    states = np.full(size, -1, dtype=np.int64)
    t = np.zeros(size)
    alive = np.arange(size)
    if tK > 0 and lam_max > 0:
        while alive.size:
            t[alive] += rng.exponential(1.0 / lam_max, alive.size)
            u = rng.random(alive.size)
            pick = rng.random(alive.size)
            ta = t[alive]
            beyond = ta >= tK
            within = ~beyond
            if within.any():
                tw = ta[within]
                br = np.column_stack([np.interp(tw, grid, rates[:, i]) for i in range(n)])
                tot = br.sum(axis=1)
                accept = u[within] * lam_max < tot
                idx = alive[within][accept]
                cum = np.cumsum(br[accept], axis=1) / tot[accept, None]
                st = (pick[within][accept, None] > cum).sum(axis=1)
                times[idx] = tw[accept]
                states[idx] = np.minimum(st, n - 1)
                done = np.zeros(alive.size, dtype=bool)
                done[np.flatnonzero(within)[accept]] = True
            else:
                done = np.zeros(alive.size, dtype=bool)
            # paths reaching the stationary phase leave the thinning loop
            done |= beyond
            t[alive[beyond]] = tK
            alive = alive[~done]
            alive = alive[np.isinf(times[alive])]
    rest = np.flatnonzero(np.isinf(times))
    if rest.size:
        wait = rng.exponential(1.0 / sk.hazard, rest.size)
        w = sk.stationary.belief / sk.stationary.belief.sum()
        st = (rng.random(rest.size)[:, None] > np.cumsum(w)[None, :]).sum(axis=1)
        times[rest] = tK + wait
        states[rest] = np.minimum(st, n - 1)
    cens = times > horizon
    times[cens] = np.inf
    states[cens] = -1
    return times, states


def simulate_paths(sk: GreedySkeleton, n_paths: int, seed: int, horizon: Optional[float] = None,
                   checkpoints: Sequence[float] = (1.0, 5.0, 10.0), workers: int = 1,
                   block_size: int = 8192) -> SimulationResult:
    """Thinning simulation of the jump process along the skeleton rates.

    Paths are grouped in fixed blocks of ``block_size``; block ``b`` draws from a
    Philox stream keyed by ``(seed, b)``, so output does not depend on ``workers``.
    """
    if n_paths < 1:
        raise DegenerateInputError("n_paths must be >= 1")
    horizon = sk.default_horizon() if horizon is None else float(horizon)
    grid, rates = _rate_table(sk)
    lam_max = float(rates.sum(axis=1).max()) if sk.phases else 0.0
    nblocks = -(-n_paths // block_size)
    sizes = [min(block_size, n_paths - b * block_size) for b in range(nblocks)]
    job = lambda b: _simulate_block(sk, grid, rates, lam_max, seed, b, sizes[b], horizon)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, range(nblocks)))
    else:
        parts = [job(b) for b in range(nblocks)]
    times = np.concatenate([p[0] for p in parts])
    states = np.concatenate([p[1] for p in parts])
    n = sk.n_states
    cps = np.asarray(checkpoints, dtype=float)
    means = np.empty((cps.size, n))
    for k, c in enumerate(cps):
        stopped = times <= c
        counts = np.bincount(states[stopped], minlength=n)
        means[k] = (counts + (~stopped).sum() * sk.belief_at(c)) / n_paths
    return SimulationResult(times, states, cps, means, n)
