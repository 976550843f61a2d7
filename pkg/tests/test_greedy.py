import math

import numpy as np
import pytest
from scipy.integrate import quad

from token_screen import (DegenerateInputError, QuadraticBinaryEntropy, ShannonEntropy, binary_belief,
                          build_skeleton, capacity_audit, iso_divergence_profile, stopping_law)


def test_symmetric_binary_is_stationary_from_start(sym_skeleton):
    assert sym_skeleton.t_stationary == 0.0
    assert sym_skeleton.hazard == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(sym_skeleton.belief_at(3.0), [0.5, 0.5])


def test_skewed_binary_phase_one_closed_form(skew_skeleton):
    ts = np.linspace(0.0, 0.36, 37)
    p = skew_skeleton.belief_at(ts)[:, 1]
    assert np.max(np.abs((1 - p) ** 2 - (0.16 + 0.25 * ts))) < 1e-6
    assert skew_skeleton.t_stationary == pytest.approx(0.36, abs=1e-4)
    assert skew_skeleton.active_sets == [(1,), (0, 1)]


def test_rates_sum_to_hazard_in_stationary_phase(skew_skeleton):
    beta = skew_skeleton.rates_at(5.0)
    assert beta.sum() == pytest.approx(skew_skeleton.hazard, rel=1e-10)


def _shannon_breakpoints(chi):
    # independent route: while states A are active with equal beliefs, the
    # binding capacity gives dS/dt = -chi S / (-log m), m the common belief
    S1 = 0.8  # state 0 remaining mass falls to 0.3
    t1, _ = quad(lambda F: -math.log((0.5 - F) / (1 - F)) / (chi * (1 - F)), 0.0, 1 - S1, epsabs=1e-13)
    dt, _ = quad(lambda S: -math.log((S - 0.2) / (2 * S)) / (chi * S), 0.6, S1, epsabs=1e-13)
    return t1, t1 + dt


def test_shannon_breakpoints_match_quadrature(shannon3_skeleton):
    t1, t2 = _shannon_breakpoints(0.5)
    bp = shannon3_skeleton.breakpoints
    assert bp[1] == pytest.approx(t1, abs=1e-7)
    assert bp[2] == pytest.approx(t2, abs=1e-7)
    assert shannon3_skeleton.hazard == pytest.approx(0.5 / math.log(3.0), rel=1e-9)
    assert np.allclose(shannon3_skeleton.belief_at(bp[2] + 1.0), 1 / 3, atol=1e-8)


def test_iso_divergence_profile_is_nondecreasing(shannon3_skeleton):
    prof = iso_divergence_profile(shannon3_skeleton)
    assert np.all(np.diff(prof.values) >= -1e-12)


def test_capacity_binds_along_skeleton(shannon3_skeleton):
    sk = shannon3_skeleton
    law = stopping_law(sk, sk.default_horizon())
    audit = capacity_audit(law, sk.entropy, sk.prior, sk.chi)
    assert np.max(np.abs(audit.slack)) < 1e-7


def test_step_refinement_is_stable(quad2):
    a = build_skeleton(quad2, binary_belief(0.8), 0.125)
    b = build_skeleton(quad2, binary_belief(0.8), 0.125, step=a.step / 2)
    assert a.t_stationary == pytest.approx(b.t_stationary, abs=1e-9)


def test_bad_inputs_raise(quad2):
    with pytest.raises(DegenerateInputError):
        build_skeleton(quad2, [0.5, 0.6], 0.125)
    with pytest.raises(DegenerateInputError):
        build_skeleton(quad2, binary_belief(0.5), 0.0)


def test_vertex_prior_is_degenerate():
    with pytest.raises(Exception):
        build_skeleton(ShannonEntropy(2), [1.0, 0.0], 0.5)


def test_higher_alpha_skeleton_runs():
    sk = build_skeleton(QuadraticBinaryEntropy(3.0), binary_belief(0.7), 0.125)
    assert sk.t_stationary > 0
    assert np.allclose(sk.belief_at(sk.t_stationary + 1), 0.5, atol=1e-8)
