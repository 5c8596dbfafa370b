"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in captured
output and in ``python tests/test_acceptance.py``) and then asserts it.
"""

import time

import pytest

from ctrlshare.dp import solve_finite_horizon
from ctrlshare.mab import (RState, alpha_root, closed_form, mab_relative_vi, optimal_actions, phi,
                          recurrent_class, tau, verify_fixed_point, zeta)
from ctrlshare.oracle import (best_response, brute_force_optimal, check_conditional_independence,
                              check_controlled_markov, check_theta_filter, check_xi_filter, constant_strategy,
                              cross_coupled_counterexample, exact_joint_distribution, random_strategy)
from ctrlshare.model import random_model
from ctrlshare.sim import simulate_policy
from ctrlshare.suites import tiny_model

SEEDS = 20


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return emit


def test_criterion_1_large_p_gain(report):
    worst, slowest = 0.0, 0.0
    for p in (0.45, 0.5, 0.7, 0.9):
        t0 = time.perf_counter()
        g = mab_relative_vi(p, n_max=30, tol=1e-9).gain
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, abs(g - (1 - (1 - p) ** 2)))
    ok = worst <= 1e-5 and slowest < 1.0
    assert report(1, ok, f"max |J - (1-(1-p)^2)| = {worst:.2e} <= 1e-5, slowest solve {slowest:.3f}s < 1s")


def test_criterion_2_small_p_gain(report):
    worst, closest_display = 0.0, float("inf")
    for p in (0.1, 0.2, 0.3):
        g = mab_relative_vi(p, n_max=30, tol=1e-9).gain
        worst = max(worst, abs(g - p * (1 - phi(0, p) / zeta(p))))
        closest_display = min(closest_display, abs(g - p * (2 - 2 * p * p) / zeta(p)))
    ok = worst <= 1e-5 and closest_display > 1e-5
    assert report(2, ok, f"max |J - p(1-phi0/zeta)| = {worst:.2e} <= 1e-5; "
                         f"min |J - p(2-2p^2)/zeta| = {closest_display:.2e} > 1e-5")


def _policy_fn(sol):
    return lambda s: sol.policy[s]


def test_criterion_3_policy_structure(report):
    bad = []
    # large p: round robin on {(p, Ap), (Ap, p)}
    p = 0.5
    sol = mab_relative_vi(p, 30)
    rc = recurrent_class(p, _policy_fn(sol))
    if rc != {RState.N(1, 1), RState.N(2, 1)}:
        bad.append(f"p=0.5 recurrent class {sorted(s.label for s in rc)}")
    for s in rc:
        if sol.policy[s] != optimal_actions(p, s.q(p))[0]:
            bad.append(f"p=0.5 at {s.label}")
    if sol.policy.get(RState.N(2, 1)) != (0, 1) or sol.policy.get(RState.N(1, 1)) != (1, 0):
        bad.append("p=0.5 not round robin")
    # small p: both transmit at (p, p); from (1, 1) one user is served, then the other
    p = 0.2
    sol = mab_relative_vi(p, 30)
    rc = recurrent_class(p, _policy_fn(sol))
    states = rc | {RState.star(), RState.zero(), RState.N(1, 1), RState.N(2, 1)}
    for s in states:
        if sol.policy[s] != optimal_actions(p, s.q(p))[0]:
            bad.append(f"p=0.2 at {s.label}")
    if sol.policy[RState.zero()] != (1, 1):
        bad.append("p=0.2 not (1,1) at (p,p)")
    first = sol.policy[RState.star()]
    nxt = RState.infty(2) if first == (1, 0) else RState.infty(1)
    if first not in ((1, 0), (0, 1)) or sol.policy[nxt] != first[::-1]:
        bad.append("p=0.2 emptying sequence")
    ok = not bad
    assert report(3, ok, "value-iteration policy equals the closed-form policy on the recurrent states"
                  + ("" if ok else f" (mismatch: {bad})"))


def test_criterion_4_fixed_point(report):
    worst, mismatches = 0.0, 0
    for p in (0.2, 0.36, 0.5):
        rep = verify_fixed_point(p, closed_form(p))
        worst = max(worst, rep["max_residual"])
        mismatches += len(rep["mismatches"])
    ok = worst < 1e-9 and mismatches == 0
    assert report(4, ok, f"max residual {worst:.2e} < 1e-9, maximizer mismatches {mismatches}")


def test_criterion_5_roots(report):
    a1, t = alpha_root(1), tau()
    alphas = [alpha_root(n) for n in range(0, 11)]
    decreasing = all(a > b for a, b in zip(alphas, alphas[1:]))
    ok = abs(a1 - 0.34727) <= 5e-5 and abs(t - 0.38196) <= 5e-5 and decreasing
    assert report(5, ok, f"alpha_1 = {a1:.6f}, tau = {t:.6f}, alpha_n decreasing for n <= 10: {decreasing}")


def test_criterion_6_dp_equals_brute_force(report):
    t0 = time.perf_counter()
    gap, improvement = 0.0, 0.0
    for s in range(SEEDS):
        m = tiny_model(s)
        _, v_dp = solve_finite_horizon(m, 2)
        v_bf, strat = brute_force_optimal(m, 2, "reduced")
        gap = max(gap, abs(v_dp - v_bf))
        for i in range(2):
            v_full, _ = best_response(m, 2, strat.completed(m), i, "full")
            gain = (v_full - v_bf) if m.maximize else (v_bf - v_full)
            improvement = max(improvement, gain)
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-9 and improvement <= 1e-9 and elapsed < 300
    assert report(6, ok, f"max |DP - brute force| = {gap:.2e} <= 1e-9, best full-history improvement "
                         f"{improvement:.2e} <= 1e-9, {elapsed:.1f}s < 300s")


def test_criterion_7_structure(report):
    dev, res = 0.0, 0.0
    for s in range(SEEDS):
        m = tiny_model(s)
        strat = random_strategy(m, 3, ("full", "reduced", "markov")[s % 3], seed=s)
        dev = max(dev, check_conditional_independence(exact_joint_distribution(m, strat, 3)))
        res = max(res, check_controlled_markov(m, strat, 3))
    ce = cross_coupled_counterexample()
    neg_dev = check_conditional_independence(exact_joint_distribution(ce, constant_strategy(ce, 3), 3))
    neg_res = check_controlled_markov(ce, constant_strategy(ce, 3), 3)
    ok = dev < 1e-12 and res < 1e-12 and neg_dev > 1e-6 and neg_res > 1e-6
    assert report(7, ok, f"independence {dev:.2e} < 1e-12, Markov {res:.2e} < 1e-12; counterexample "
                         f"{neg_dev:.3f}, {neg_res:.3f} > 1e-6")


def test_criterion_8_filters(report):
    th, xi = 0.0, 0.0
    for s in range(SEEDS):
        m = tiny_model(s)
        th = max(th, check_theta_filter(m, random_strategy(m, 3, "reduced", seed=s), 3))
        mp = random_model(s, n=2, nz=1 + s % 2, ny=2)
        joint = exact_joint_distribution(mp, random_strategy(mp, 2, "full", seed=s), 2)
        xi = max(xi, check_xi_filter(joint, mp))
    ok = th < 1e-12 and xi < 1e-12
    assert report(8, ok, f"common-information filter {th:.2e} < 1e-12, local filter {xi:.2e} < 1e-12")


@pytest.mark.parametrize("p,seed", [(0.2, 20260), (0.5, 20261)])
def test_criterion_9_monte_carlo(report, p, seed):
    sol = closed_form(p)
    t0 = time.perf_counter()
    rep = simulate_policy(None, sol, 10**6, seed=seed)
    elapsed = time.perf_counter() - t0
    z = abs(rep.mean - sol.gain) / rep.stderr
    ok = z <= 3 and elapsed < 30
    assert report(9, ok, f"p={p}: mean {rep.mean:.6f} vs J {sol.gain:.6f}, {z:.2f} standard errors <= 3, "
                         f"{elapsed:.1f}s < 30s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
