"""Optimality and incentive certificates.

``foc_multiplier``/``foc_check`` build the dual multiplier of the capacity
constraint for the greedy law and check the first-order conditions.
``oracle_upper_bound`` solves a discretized relaxation of the stopping-law
problem by cutting planes; it upper-bounds the continuous optimum on any grid.
``ic_audit`` checks every pairwise misreport on a menu's type grid.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from ._validation import CertificateError, DegenerateInputError, check_belief, check_positive
from .entropy import EntropyModel
from .greedy import GreedySkeleton
from .payoffs import ExpPoly, Payoff, exp_poly_integral
from .screening import TokenMenu, TypeModel
from .stopping import EPS_CAP, StoppingLaw

FOC_TOL = 1e-7


@dataclass(frozen=True)
class MultiplierPath:
    times: np.ndarray
    zeta: np.ndarray
    Lam: np.ndarray
    lam: np.ndarray
    rho_prime: np.ndarray
    chi: float
    t_stationary: float
    breakpoints: tuple = ()

    def ode_residual(self) -> float:
        """Max ``|zeta dLam/dt - rho' - chi Lam|`` with dLam/dt from 4th-order differences.

        Only stencils on a uniform stretch of the grid that do not straddle a
        phase change (where zeta has a kink) are used.
        """
        t, L = self.times, self.Lam
        if t.size < 5:
            return 0.0
        h = np.diff(t)
        k = np.arange(2, t.size - 2)
        stencil = np.stack([h[k - 2], h[k - 1], h[k], h[k + 1]])
        keep = np.ptp(stencil, axis=0) <= 1e-9 * stencil.max(axis=0)
        for b in self.breakpoints:
            keep &= ~((t[k - 2] < b) & (b < t[k + 2]))
        k = k[keep]
        hk = h[k - 1]
        dL = (L[k - 2] - 8 * L[k - 1] + 8 * L[k + 1] - L[k + 2]) / (12 * hk)
        res = self.zeta[k] * dL - self.rho_prime[k] - self.chi * L[k]
        return float(np.abs(res).max()) if res.size else 0.0


def _stationary_lambda(rho: ExpPoly, t, zeta: float, chi: float):
    """Closed form of the multiplier on the stationary region (constant zeta)."""
    k = chi / zeta
    lam = rho.rate + k
    out = []
    for s in np.atleast_1d(t):
        # -rho'(s+u) = e^{-r s} e^{-r u} (r c0 - c1 + r c1 (s + u))
        a0 = rho.rate * rho.c0 - rho.c1 + rho.rate * rho.c1 * s
        val = math.exp(-rho.rate * s) * exp_poly_integral(lam, a0, rho.rate * rho.c1, 0.0, math.inf)
        out.append(val / zeta)
    return np.asarray(out)


def foc_multiplier(sk: GreedySkeleton, rho: Payoff, horizon: Optional[float] = None,
                   tail_step: Optional[float] = None) -> MultiplierPath:
    """Multiplier ``Lam`` of the capacity constraint, integrated backward from the tail.

    ``Lam' = (rho' + chi Lam) / zeta`` with ``Lam(inf) = 0``.  Beyond the last
    breakpoint zeta is constant and the solution is closed form for
    exponential-polynomial payoffs; before it RK4 runs backward on the
    skeleton's own nodes.
    """
    if not isinstance(rho, ExpPoly) or math.isfinite(rho.cutoff):
        raise DegenerateInputError("foc_multiplier needs an untruncated ExpPoly payoff")
    horizon = sk.default_horizon() if horizon is None else float(horizon)
    tK, chi = sk.t_stationary, sk.chi
    body = sk.node_times() if sk.phases else np.array([tK])
    step = sk.step if tail_step is None else float(tail_step)
    tail = np.linspace(tK, horizon, max(int(math.ceil((horizon - tK) / step)), 1) + 1)[1:]
    times = np.concatenate([body, tail])
    rp = np.asarray(rho.derivative(times))
    if np.any(rp >= 0):
        raise DegenerateInputError(f"payoff must be strictly decreasing; rho' >= 0 at t={times[np.argmax(rp >= 0)]:.6g}")
    nb = body.size
    zK = float(sk.entropy.divergences_to_vertices(sk.stationary.belief).min())
    zeta = np.full(times.size, zK)
    if nb > 1:
        zeta[: nb - 1] = sk.zeta_at(body[:-1])
    Lam = np.empty(times.size)
    Lam[nb - 1:] = _stationary_lambda(rho, times[nb - 1:], zK, chi)

    def f(t, L):
        return (float(rho.derivative(t)) + chi * L) / float(sk.zeta_at(t))

    for j in range(nb - 1, 0, -1):
        t1, t0 = times[j], times[j - 1]
        h = t0 - t1
        L = Lam[j]
        k1 = f(t1, L)
        k2 = f(t1 + 0.5 * h, L + 0.5 * h * k1)
        k3 = f(t1 + 0.5 * h, L + 0.5 * h * k2)
        k4 = f(t0, L + h * k3)
        Lam[j - 1] = L + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    lam = -(rp + chi * Lam) / zeta
    return MultiplierPath(times, zeta, Lam, lam, rp, chi, tK, tuple(sk.breakpoints[1:]))


@dataclass(frozen=True)
class FocReport:
    times: np.ndarray
    l: np.ndarray  # (times, states)
    a: np.ndarray
    dl: np.ndarray
    active: np.ndarray  # bool (times, states)
    max_violation: float
    max_active_gap: float
    min_lambda: float
    ode_residual: float

    @property
    def passed(self) -> bool:
        return (self.max_violation <= FOC_TOL and self.max_active_gap <= FOC_TOL
                and self.min_lambda > 0.0)

    def sign_pattern(self) -> dict:
        """Fraction of grid times with dl/dt > 0 per state, split by activity."""
        out = {}
        for i in range(self.l.shape[1]):
            act = self.active[:, i]
            out[i] = {"inactive_positive": float(np.mean(self.dl[~act, i] > 0)) if (~act).any() else None,
                      "active_max_abs": float(np.abs(self.dl[act, i]).max()) if act.any() else None}
        return out


def foc_check(sk: GreedySkeleton, law: Optional[StoppingLaw], mp: MultiplierPath, rho: Payoff) -> FocReport:
    """Evaluate ``l(theta, t)`` and compare with ``a_theta = l(theta, t_K)``."""
    n = sk.n_states
    t = mp.times
    H = sk.entropy.vertex_values(n)
    stat = t >= mp.t_stationary
    D = np.empty((t.size, n))
    # the belief is frozen on the stationary region and every state is tied there
    D[stat] = mp.zeta[stat, None]
    for k in np.flatnonzero(~stat):
        D[k] = sk.entropy.divergences_to_vertices(sk.belief_at(t[k]))
    dl = (mp.rho_prime + mp.chi * mp.Lam)[:, None] + mp.lam[:, None] * D
    l0 = float(rho(0.0)) - mp.Lam[0] * H
    l = l0[None, :] + cumulative_trapezoid(dl, t, axis=0, initial=0.0)
    kK = int(np.searchsorted(t, mp.t_stationary, side="left"))
    kK = min(kK, t.size - 1)
    a = l[kK].copy()
    active = np.zeros((t.size, n), dtype=bool)
    for ph in sk.phases:
        sel = t >= ph.start
        active[np.ix_(sel, list(ph.active))] = True
    active[t >= mp.t_stationary] = True
    viol = float((l - a).max())
    gap = float(np.abs(l - a)[active].max())
    return FocReport(t, l, a, dl, active, viol, gap, float(mp.lam.min()), mp.ode_residual())


# --------------------------------------------------------------------------
# discretized relaxation


@dataclass(frozen=True)
class OracleResult:
    value: float
    iterations: int
    max_violation: float
    n_cuts: int
    grid: np.ndarray
    masses: np.ndarray  # (states, buckets + 1), last column stops after the grid


def default_oracle_grid(horizon: float, n_points: int = 201, fine: float = 0.005) -> np.ndarray:
    """Graded grid: step ``fine`` at the origin growing geometrically to ``horizon``."""
    # solve fine * (q^m - 1)/(q - 1) = horizon with m = n_points - 1
    m = n_points - 1
    lo, hi = 1.0 + 1e-12, 2.0
    for _ in range(200):
        q = 0.5 * (lo + hi)
        if fine * (q**m - 1) / (q - 1) > horizon:
            hi = q
        else:
            lo = q
    steps = fine * q ** np.arange(m)
    grid = np.concatenate([[0.0], np.cumsum(steps)])
    grid[-1] = horizon
    return grid


def _remaining_at(F_cum, mu0):
    return np.clip(mu0[None, :] - F_cum, 0.0, None)


def oracle_upper_bound(rho: Payoff, entropy: EntropyModel, mu0, chi: float, grid=None, *,
                       warm_law: Optional[StoppingLaw] = None, tol: float = EPS_CAP,
                       max_iter: int = 50, horizon: float = 40.0) -> OracleResult:
    """Upper bound on ``sup E[rho(tau)]`` over stopping laws meeting the capacity inequality.

    Variables per state and grid cell are the stopped mass ``m`` and its first
    moment within the cell ``M`` (``0 <= M <= h m``); for convex ``rho`` the
    chord bounds the cell's payoff.  Capacity is imposed at grid points only,
    with the entropy of the remaining mass replaced by supporting hyperplanes
    added until the LP solution is feasible within ``tol``.  Mass stopping
    after the grid is credited ``rho(grid[-1])``.  Cumulative masses ``F`` and
    elapsed time ``E`` are carried as extra variables so every cut is sparse.
    """
    mu0 = check_belief(mu0)
    chi = check_positive(chi, "chi")
    if grid is None:
        t = default_oracle_grid(horizon)
        cut = getattr(rho, "cutoff", math.inf)
        if 0.0 < cut < horizon:
            # a node at the payoff's kink keeps the chord bound tight there
            t = np.unique(np.append(t, cut))
    else:
        t = np.asarray(grid, dtype=float)
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise DegenerateInputError("oracle grid must start at 0 and increase strictly")
    n, J = mu0.size, t.size - 1
    h = np.diff(t)
    rv = np.asarray(rho(t), dtype=float)
    slope = np.diff(rv) / h
    # layout: m[i, 0..J] | M[i, 0..J-1] | F[i, 0..J] | E[0..J]
    m_of = lambda i, j: i * (J + 1) + j
    M0 = n * (J + 1)
    M_of = lambda i, j: M0 + i * J + j
    F0 = M0 + n * J
    F_of = lambda i, k: F0 + i * (J + 1) + k
    E0 = F0 + n * (J + 1)
    nvar = E0 + J + 1
    c = np.zeros(nvar)
    for i in range(n):
        c[m_of(i, 0): m_of(i, 0) + J + 1] = -np.concatenate([rv[:-1], [rv[-1]]])
        c[M_of(i, 0): M_of(i, 0) + J] = -slope

    er, ec, ev, b_eq = [], [], [], []

    def eq(entries, rhs):
        r = len(b_eq)
        for col, val in entries:
            er.append(r)
            ec.append(col)
            ev.append(val)
        b_eq.append(rhs)

    for i in range(n):
        eq([(m_of(i, j), 1.0) for j in range(J + 1)], mu0[i])
        eq([(F_of(i, 0), 1.0)], 0.0)
        for k in range(1, J + 1):
            eq([(F_of(i, k), 1.0), (F_of(i, k - 1), -1.0), (m_of(i, k - 1), -1.0)], 0.0)
    eq([(E0, 1.0)], 0.0)
    for k in range(1, J + 1):
        # E_k - E_{k-1} = h (1 - F(t_{k-1})) - sum_i (h m - M) on the cell
        ent = [(E0 + k, 1.0), (E0 + k - 1, -1.0)]
        for i in range(n):
            ent += [(F_of(i, k - 1), h[k - 1]), (m_of(i, k - 1), h[k - 1]), (M_of(i, k - 1), -1.0)]
        eq(ent, h[k - 1])
    A_eq = coo_matrix((ev, (er, ec)), shape=(len(b_eq), nvar)).tocsr()
    b_eq = np.asarray(b_eq)

    ur, uc, uv = [], [], []
    for i in range(n):
        for j in range(J):
            r = i * J + j
            ur += [r, r]
            uc += [M_of(i, j), m_of(i, j)]
            uv += [1.0, -h[j]]
    n_mom = n * J
    Hv = entropy.vertex_values(n)
    H0 = entropy.value(mu0)
    cut_r, cut_c, cut_v, cut_b = [], [], [], []

    def add_cut(k, g):
        # sum_i F_ik (H(e_i) - g_i) - chi E_k <= H0 - g.mu0
        r = len(cut_b)
        for i in range(n):
            cut_r.append(r)
            cut_c.append(F_of(i, k))
            cut_v.append(Hv[i] - g[i])
        cut_r.append(r)
        cut_c.append(E0 + k)
        cut_v.append(-chi)
        cut_b.append(H0 - g @ mu0)

    def grad_at(R):
        s = R.sum()
        if s <= 1e-14:
            return None
        p = np.clip(R / s, 1e-9, None)
        return entropy.gradient(p / p.sum())

    def cuts_from(Fcum, ks):
        R = _remaining_at(Fcum, mu0)
        for k in ks:
            g = grad_at(R[k])
            if g is not None:
                add_cut(k, g)

    ks_all = range(1, J + 1)
    if warm_law is not None:
        cuts_from(np.array([warm_law.state_cdf(s) for s in t]), ks_all)
    else:
        cuts_from(np.zeros((J + 1, n)), ks_all)
    bounds = [(0, None)] * (E0) + [(None, None)] * (J + 1)
    value, viol, x = math.nan, math.inf, None
    it = 0
    for it in range(1, max_iter + 1):
        A_ub = vstack([coo_matrix((uv, (ur, uc)), shape=(n_mom, nvar)),
                       coo_matrix((cut_v, (cut_r, cut_c)), shape=(len(cut_b), nvar))]).tocsr()
        b_ub = np.concatenate([np.zeros(n_mom), cut_b])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status != 0:
            raise CertificateError(f"oracle LP failed: {res.message}")
        x = res.x
        value = -res.fun
        Fcum = x[F0:E0].reshape(n, J + 1).T
        E = x[E0:]
        R = _remaining_at(Fcum, mu0)
        lhs = np.array([Fcum[k] @ Hv + (entropy.value(R[k]) if R[k].sum() > 1e-14 else 0.0) - H0
                        for k in range(J + 1)])
        excess = lhs - chi * E
        viol = float(excess.max())
        if viol <= tol:
            break
        cuts_from(Fcum, np.flatnonzero(excess > tol))
    masses = x[:M0].reshape(n, J + 1)
    return OracleResult(float(value), it, viol, len(cut_b), t, masses)


# --------------------------------------------------------------------------
# incentive audit


@dataclass(frozen=True)
class ICReport:
    max_gain: float
    argmax: tuple  # (true type, reported type)
    min_ir_slack: float
    ir_top: float
    min_mixed_difference: float

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_gain <= tol and self.min_ir_slack >= -1e-9 and abs(self.ir_top) <= 1e-8


def utility_matrix(menu: TokenMenu, law: Optional[StoppingLaw] = None, workers: int = 1) -> np.ndarray:
    """``U[j, k]`` = utility of true type ``types[j]`` reporting ``types[k]``."""
    law = law or menu.law
    rs, T, v = menu.types, menu.cutoffs, menu.valuation

    def row(j):
        return v.q(rs[j]) * law.exp_moments(rs[j], T)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(rs.size)))
    else:
        rows = [row(j) for j in range(rs.size)]
    return np.array(rows)


def mixed_differences(U: np.ndarray) -> np.ndarray:
    """Discrete cross differences of ``U`` in (true type, report)."""
    return U[1:, 1:] - U[1:, :-1] - U[:-1, 1:] + U[:-1, :-1]


def ic_audit(menu: TokenMenu, tm: Optional[TypeModel] = None, law: Optional[StoppingLaw] = None,
             workers: int = 1) -> ICReport:
    U = utility_matrix(menu, law, workers)
    P = menu.prices
    net = U - P[None, :]
    own = np.diag(net)
    gain = net - own[:, None]
    j, k = np.unravel_index(int(np.argmax(gain)), gain.shape)
    return ICReport(max_gain=float(gain[j, k]), argmax=(float(menu.types[j]), float(menu.types[k])),
                    min_ir_slack=float(own.min()), ir_top=float(own[-1]),
                    min_mixed_difference=float(mixed_differences(U).min()))
