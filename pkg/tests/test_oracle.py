import itertools

import numpy as np
import pytest

from ctrlshare.dp import solve_finite_horizon
from ctrlshare.exceptions import CombinatorialBlowup
from ctrlshare.model import CoupledModel, random_model
from ctrlshare.oracle import (best_response, brute_force_optimal, check_conditional_independence,
                              check_controlled_markov, check_xi_independence, constant_strategy,
                              cross_coupled_counterexample, evaluate, exact_joint_distribution, lift,
                              random_strategy)
from ctrlshare.suites import tiny_model


def _deterministic():
    # x^i flips every step, z fixed, point-mass start
    loc = np.zeros((1, 2, 2, 2, 2))
    for x in range(2):
        loc[0, x, :, :, 1 - x] = 1
    return CoupledModel(np.ones((1, 2, 2, 1)), [loc, loc], np.ones((1, 2, 2, 2, 2)), np.ones(1),
                        [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])])


def test_deterministic_run_is_one_atom():
    m = _deterministic()
    joint = exact_joint_distribution(m, constant_strategy(m, 3), 3)
    assert len(joint) == 1 and joint.total_mass() == 1.0
    ((zs, xs, us, _), p), = joint.table.items()
    assert [tuple(x) for x in xs] == [(0, 1), (1, 0), (0, 1)]


@pytest.mark.parametrize("seed", range(10))
def test_total_mass(seed):
    m = tiny_model(seed)
    joint = exact_joint_distribution(m, random_strategy(m, 3, ("full", "reduced", "markov")[seed % 3], seed), 3)
    assert joint.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_transition_frequencies_match_kernels():
    m = random_model(4, n=2, nz=2)
    joint = exact_joint_distribution(m, random_strategy(m, 2, "reduced", seed=4), 2)
    acc = {}
    for (zs, xs, us, _), p in joint.table.items():
        key = (zs[0], xs[0][0], *us[0])
        acc.setdefault(key, np.zeros(2))[xs[1][0]] += p
        zkey = ("z", zs[0], *us[0])
        acc.setdefault(zkey, np.zeros(2))[zs[1]] += p
    for key, w in acc.items():
        if key[0] == "z":
            want = m.shared_kernel[key[1:]]
        else:
            want = m.local_kernels[0][key]
        np.testing.assert_allclose(w / w.sum(), want, atol=1e-12)


def test_cost_cap():
    m = tiny_model(1)
    with pytest.raises(CombinatorialBlowup):
        exact_joint_distribution(m, random_strategy(m, 3, seed=0), 3, cap=10)


@pytest.mark.parametrize("seed", range(12))
def test_conditional_independence(seed):
    m = tiny_model(seed)
    pattern = ("full", "reduced", "markov")[seed % 3]
    joint = exact_joint_distribution(m, random_strategy(m, 3, pattern, seed=seed), 3)
    assert check_conditional_independence(joint) < 1e-12


def test_independence_single_subsystem_exact():
    m = random_model(3, n=1, nz=2)
    joint = exact_joint_distribution(m, random_strategy(m, 3, seed=3), 3)
    assert check_conditional_independence(joint) == 0.0


def test_counterexample_breaks_independence():
    ce = cross_coupled_counterexample()
    joint = exact_joint_distribution(ce, constant_strategy(ce, 3), 3)
    assert check_conditional_independence(joint) > 1e-6


def test_lift_is_a_product():
    m = random_model(2, n=2, nz=2)
    jm = lift(m)
    k = jm.joint_kernel[1, 0, 1, 1, 0]
    np.testing.assert_allclose(k, np.multiply.outer(m.local_kernels[0][1, 0, 1, 0], m.local_kernels[1][1, 1, 1, 0]))


@pytest.mark.parametrize("seed", range(6))
def test_partial_observation_independence(seed):
    m = random_model(seed, n=2, nz=1 + seed % 2, ny=2)
    joint = exact_joint_distribution(m, random_strategy(m, 2, "full", seed=seed), 2)
    assert check_conditional_independence(joint) < 1e-12
    assert check_xi_independence(joint, m) < 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_controlled_markov(seed):
    m = tiny_model(seed)
    assert check_controlled_markov(m, random_strategy(m, 3, ("full", "reduced")[seed % 2], seed=seed), 3) < 1e-12


def test_controlled_markov_deterministic_exact():
    m = _deterministic()
    assert check_controlled_markov(m, constant_strategy(m, 3), 3) == 0.0


def test_counterexample_not_markov():
    ce = cross_coupled_counterexample()
    assert check_controlled_markov(ce, constant_strategy(ce, 3), 3) > 1e-6


def test_brute_force_horizon_zero():
    assert brute_force_optimal(tiny_model(0), 0)[0] == 0


@pytest.mark.parametrize("seed", range(6))
def test_brute_force_one_stage_by_enumeration(seed):
    m = random_model(seed, n=2, nz=1)
    p1, p2 = m.initial_local[0][0], m.initial_local[1][0]
    best = min(
        sum(p1[a] * p2[b] * m.cost[0, a, b, g1[a], g2[b]] for a in range(2) for b in range(2))
        for g1 in itertools.product(range(2), repeat=2) for g2 in itertools.product(range(2), repeat=2))
    assert brute_force_optimal(m, 1)[0] == pytest.approx(best, abs=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_patterns_agree_with_dp(seed):
    m = tiny_model(seed)
    v_red, strat = brute_force_optimal(m, 2, "reduced")
    v_mk, _ = brute_force_optimal(m, 2, "markov")
    _, v_dp = solve_finite_horizon(m, 2)
    assert v_red == pytest.approx(v_mk, abs=1e-9)
    assert v_red == pytest.approx(v_dp, abs=1e-9)
    # the returned optimizer achieves the value
    assert evaluate(m, strat.completed(m), 2) == pytest.approx(v_red, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_best_response_full_equals_reduced(seed):
    m = tiny_model(seed)
    other = random_strategy(m, 2, "full", seed=100 + seed)
    b_full, _ = best_response(m, 2, other, 0, "full")
    b_red, _ = best_response(m, 2, other, 0, "reduced")
    assert b_full == pytest.approx(b_red, abs=1e-9)


def test_no_full_history_improvement_at_optimum():
    m = tiny_model(2)
    v, strat = brute_force_optimal(m, 2, "reduced")
    v_full, _ = best_response(m, 2, strat.completed(m), 1, "full")
    assert v_full >= v - 1e-9  # minimizing


def test_brute_force_maximize():
    m = random_model(5, n=2, objective_sense="maximize")
    v, _ = brute_force_optimal(m, 1)
    _, v_dp = solve_finite_horizon(m, 1)
    assert v == pytest.approx(v_dp, abs=1e-12)


def test_unknown_pattern():
    with pytest.raises(ValueError):
        brute_force_optimal(tiny_model(0), 1, "psychic")
