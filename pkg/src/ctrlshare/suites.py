"""Named verification suites run by ``ctrlshare verify``."""

from __future__ import annotations

from dataclasses import dataclass

from .dp import solve_finite_horizon
from .mab import closed_form, mab_relative_vi, validate_mab_consistency, verify_fixed_point
from .model import random_model
from .oracle import (best_response, brute_force_optimal, check_conditional_independence, check_controlled_markov,
                     check_theta_filter, check_xi_filter, constant_strategy, check_xi_independence, cross_coupled_counterexample,
                     exact_joint_distribution, random_strategy)

SUITES = ("independence", "markov", "dp-equivalence", "mab-fixed-point", "filter")


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: float
    relation: str = "<"

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} {self.relation} {self.bound:.0e}"

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "bound": self.bound,
                "relation": self.relation}


def _below(name, value, bound):
    return CheckResult(name, bool(value < bound), float(value), bound)


def _above(name, value, bound):
    return CheckResult(name, bool(value > bound), float(value), bound, ">")


def tiny_model(seed: int, **kw):
    """Two binary subsystems with one or two shared states, as used by the suites."""
    return random_model(seed, n=2, nz=1 + seed % 2, nx=2, nu=2, feasibility=seed % 3 == 0, **kw)


def _worst(values):
    return max(values) if values else 0.0


def independence(seeds: int = 20, horizon: int = 3) -> list:
    devs = []
    for s in range(seeds):
        m = tiny_model(s)
        pattern = ("full", "reduced", "markov")[s % 3]
        joint = exact_joint_distribution(m, random_strategy(m, horizon, pattern, seed=s), horizon)
        devs.append(check_conditional_independence(joint))
    ce = cross_coupled_counterexample()
    neg = check_conditional_independence(exact_joint_distribution(ce, constant_strategy(ce, horizon), horizon))
    part_x, part_xi = [], []
    for s in range(seeds):
        m = random_model(s, n=2, nz=1 + s % 2, ny=2)
        joint = exact_joint_distribution(m, random_strategy(m, 2, "full", seed=s), 2)
        part_x.append(check_conditional_independence(joint))
        part_xi.append(check_xi_independence(joint, m))
    return [_below("local histories independent given common information", _worst(devs), 1e-12),
            _above("cross-coupled counterexample breaks independence", neg, 1e-6),
            _below("partial observation: local histories independent", _worst(part_x), 1e-12),
            _below("partial observation: local posteriors independent", _worst(part_xi), 1e-12)]


def markov(seeds: int = 20, horizon: int = 3) -> list:
    res = []
    for s in range(seeds):
        m = tiny_model(s)
        res.append(check_controlled_markov(m, random_strategy(m, horizon, ("full", "reduced")[s % 2], seed=s),
                                           horizon))
    ce = cross_coupled_counterexample()
    neg = check_controlled_markov(ce, constant_strategy(ce, horizon), horizon)
    return [_below("local process is controlled Markov", _worst(res), 1e-12),
            _above("cross-coupled counterexample is not Markov", neg, 1e-6)]


def dp_equivalence(seeds: int = 20, horizon: int = 2) -> list:
    gap_red, gap_mk, gap_br, gap_l2 = [], [], [], []
    for s in range(seeds):
        m = tiny_model(s)
        _, v_dp = solve_finite_horizon(m, horizon)
        v_red, strat = brute_force_optimal(m, horizon, "reduced")
        v_mk, _ = brute_force_optimal(m, horizon, "markov")
        gap_red.append(abs(v_dp - v_red))
        gap_mk.append(abs(v_dp - v_mk))
        # no full-history deviation of station 0 improves on the optimum
        v_full, _ = best_response(m, horizon, strat.completed(m), 0, "full")
        gain = (v_full - v_red) if m.maximize else (v_red - v_full)
        gap_br.append(max(gain, 0.0))
        other = random_strategy(m, horizon, "full", seed=1000 + s)
        b_full, _ = best_response(m, horizon, other, 0, "full")
        b_red, _ = best_response(m, horizon, other, 0, "reduced")
        gap_l2.append(abs(b_full - b_red))
    return [_below("coordinator DP equals reduced-pattern brute force", _worst(gap_red), 1e-9),
            _below("coordinator DP equals belief-pattern brute force", _worst(gap_mk), 1e-9),
            _below("full-history deviation gains nothing at the optimum", _worst(gap_br), 1e-9),
            _below("best responses: full history equals reduced", _worst(gap_l2), 1e-9)]


def mab_fixed_point(seeds: int = 0) -> list:
    out = []
    for p in (0.2, 0.36, 0.5):
        rep = verify_fixed_point(p, closed_form(p))
        out.append(_below(f"closed form p={p}: fixed-point residual", rep["max_residual"], 1e-9))
        out.append(_below(f"closed form p={p}: maximizer mismatches", len(rep["mismatches"]), 0.5))
    for p in (0.1, 0.2, 0.3, 0.36, 0.45, 0.5, 0.7, 0.9):
        gap = abs(closed_form(p, 30).gain - mab_relative_vi(p, 30).gain)
        out.append(_below(f"p={p}: closed-form gain equals value iteration", gap, 1e-5))
    return out


def filters(seeds: int = 20) -> list:
    th, xi, mab = [], [], []
    for s in range(seeds):
        m = tiny_model(s)
        th.append(check_theta_filter(m, random_strategy(m, 3, "reduced", seed=s), 3))
        mp = random_model(s, n=2, nz=1 + s % 2, ny=2)
        xi.append(check_xi_filter(exact_joint_distribution(mp, random_strategy(mp, 2, "full", seed=s), 2), mp))
    for p in ((0.3, 0.3), (0.5, 0.2)):
        mab.append(len(validate_mab_consistency(p)))
    return [_below("common-information filter equals exact Bayes", _worst(th), 1e-12),
            _below("local filter equals exact Bayes", _worst(xi), 1e-12),
            _below("channel filter mismatches", _worst(mab), 0.5)]


def run_suite(name: str, seeds: int = 20) -> list:
    if name == "independence":
        return independence(seeds)
    if name == "markov":
        return markov(seeds)
    if name == "dp-equivalence":
        return dp_equivalence(seeds)
    if name == "mab-fixed-point":
        return mab_fixed_point(seeds)
    if name == "filter":
        return filters(seeds)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
