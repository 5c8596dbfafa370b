import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrlshare.belief import (BeliefPoint, LocalBelief, initial_xi, joint_from_theta, update_theta, update_xi)
from ctrlshare.exceptions import InconsistentObservation
from ctrlshare.mab import mab_model
from ctrlshare.model import CoupledModel, random_model
from ctrlshare.oracle import check_theta_filter, check_xi_filter, exact_joint_distribution, random_strategy
from ctrlshare.suites import tiny_model


def _bayes_by_enumeration(model, point, d, u):
    """Posterior marginals of the next local states, from the full joint."""
    z = point.z
    nx = model.local_sizes
    post = np.zeros(nx)
    for x in itertools.product(*(range(k) for k in nx)):
        if any(d[i][x[i]] != u[i] for i in range(model.n)):
            continue
        w = np.prod([point.theta[i][x[i]] for i in range(model.n)])
        nxt = np.ones(())
        for i in range(model.n):
            nxt = np.multiply.outer(nxt, model.local_kernels[i][(z, x[i], *u)])
        post += w * nxt
    post /= post.sum()
    margs = []
    for i in range(model.n):
        axes = tuple(j for j in range(model.n) if j != i)
        margs.append(post.sum(axis=axes))
    return margs, post


def test_point_mass_deterministic_kernel():
    k = np.zeros((1, 3, 1, 3))
    k[0, 0, 0, 2] = k[0, 1, 0, 0] = k[0, 2, 0, 1] = 1
    m = CoupledModel(np.ones((1, 1, 1)), [k], np.zeros((1, 3, 1)), np.ones(1), [np.ones((1, 3)) / 3])
    out = update_theta(m, BeliefPoint(0, [[0, 1, 0]]), [(0, 0, 0)], (0,), 0)
    np.testing.assert_array_equal(out[0], [1, 0, 0])


@pytest.mark.parametrize("p1,p2,q1,q2", [(0.3, 0.3, 0.5, 0.8), (0.2, 0.6, 0.1, 0.9), (0.5, 0.4, 1.0, 1.0)])
def test_mab_idle_both_transmit_resets_to_arrivals(p1, p2, q1, q2):
    m = mab_model((p1, p2))
    pt = BeliefPoint(0, [[1 - q1, q1], [1 - q2, q2]])
    d = ((0, 1), (0, 1))
    for u in ((1, 0), (0, 1), (0, 0)):
        if (u[0] == 0 and q1 == 1) or (u[1] == 0 and q2 == 1):
            continue
        out = update_theta(m, pt, d, u, 0)
        assert out[0][1] == pytest.approx(p1, abs=1e-12)
        assert out[1][1] == pytest.approx(p2, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_update_theta_equals_enumerated_bayes(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed, n=2, nz=2, nx=(2, 3), nu=2)
    theta = [rng.dirichlet(np.ones(k)) for k in m.local_sizes]
    pt = BeliefPoint(int(rng.integers(2)), theta)
    d = [tuple(int(a) for a in rng.integers(2, size=k)) for k in m.local_sizes]
    u = (d[0][0], d[1][-1])
    out = update_theta(m, pt, d, u, 0)
    margs, joint = _bayes_by_enumeration(m, pt, d, u)
    for a, b in zip(out, margs):
        np.testing.assert_allclose(a, b, atol=1e-12)
    # the posterior factorizes too
    np.testing.assert_allclose(np.multiply.outer(out[0], out[1]), joint, atol=1e-12)


def test_zero_probability_action_raises():
    m = random_model(0)
    pt = BeliefPoint(0, [[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(InconsistentObservation):
        update_theta(m, pt, [(0, 1), (0, 1)], (1, 0), 0)


def test_z_next_out_of_range():
    m = random_model(0)
    with pytest.raises(IndexError):
        update_theta(m, BeliefPoint(0, [[0.5, 0.5]] * 2), [(0, 1), (0, 1)], (0, 0), 3)


def test_joint_from_theta_single_subsystem():
    pt = BeliefPoint(1, [[0.2, 0.8]])
    out = joint_from_theta(pt, shared_size=3)
    np.testing.assert_array_equal(out, [[0, 0], [0.2, 0.8], [0, 0]])


def test_joint_from_theta_product():
    out = joint_from_theta(BeliefPoint(0, [[0.5, 0.5], [0.25, 0.75]]))
    np.testing.assert_allclose(out[0].ravel(), [0.125, 0.375, 0.125, 0.375])
    assert out.sum() == pytest.approx(1.0)


def _swap(model):
    """Same model with the two subsystems relabeled."""
    sk = np.swapaxes(model.shared_kernel, 1, 2)
    lk = [np.swapaxes(model.local_kernels[j], 2, 3) for j in (1, 0)]
    cost = model.cost.transpose(0, 2, 1, 4, 3)
    feas = [model.feasible_actions[j] for j in (1, 0)]
    return CoupledModel(sk, lk, cost, model.initial_shared, [model.initial_local[j] for j in (1, 0)], feas)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_update_theta_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed, n=2, nz=2, nx=(2, 3), nu=(2, 3))
    theta = [rng.dirichlet(np.ones(k)) for k in m.local_sizes]
    d = [tuple(int(a) for a in rng.integers(m.action_sizes[i], size=m.local_sizes[i])) for i in range(2)]
    u = (d[0][0], d[1][0])
    a = update_theta(m, BeliefPoint(0, theta), d, u, 1)
    b = update_theta(_swap(m), BeliefPoint(0, theta[::-1]), d[::-1], u[::-1], 1)
    np.testing.assert_allclose(a[0], b[1], atol=1e-14)
    np.testing.assert_allclose(a[1], b[0], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_update_theta_normalized(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed, n=2, nz=1, nx=3, nu=2, sparsity=0.3)
    theta = [rng.dirichlet(np.ones(3)) for _ in range(2)]
    d = [tuple(int(a) for a in rng.integers(2, size=3)) for _ in range(2)]
    out = update_theta(m, BeliefPoint(0, theta), d, (d[0][1], d[1][2]), 0)
    for th in out:
        assert th.sum() == pytest.approx(1.0, abs=1e-9) and np.all(th >= 0)


@pytest.mark.parametrize("seed", range(5))
def test_theta_filter_matches_exact_joint(seed):
    m = tiny_model(seed)
    assert check_theta_filter(m, random_strategy(m, 3, "reduced", seed=seed), 3) < 1e-12


def _with_observation(model, obs):
    return CoupledModel(model.shared_kernel, model.local_kernels, model.cost, model.initial_shared,
                        model.initial_local, model.feasible_actions, [np.asarray(o) for o in obs])


def test_xi_noiseless_is_point_mass():
    m = _with_observation(random_model(3), [np.eye(2), np.eye(2)])
    b = update_xi(m, LocalBelief(0, [0.3, 0.7]), 0, (1, 0), 1)
    np.testing.assert_array_equal(b.xi, [0, 1])


def test_xi_uniform_observation_is_prediction():
    m = _with_observation(random_model(3), [np.full((2, 3), 1 / 3)] * 2)
    xi = np.array([0.3, 0.7])
    b = update_xi(m, LocalBelief(1, xi), 0, (0, 1), 2)
    np.testing.assert_allclose(b.xi, xi @ m.local_kernels[1][0, :, 0, 1], atol=1e-15)


def test_xi_impossible_observation():
    obs = np.array([[1.0, 0.0], [1.0, 0.0]])
    m = _with_observation(random_model(3), [obs, obs])
    with pytest.raises(InconsistentObservation):
        update_xi(m, LocalBelief(0, [0.5, 0.5]), 0, (0, 0), 1)
    with pytest.raises(InconsistentObservation):
        initial_xi(m, 0, 0, 1)


def test_xi_without_observation_kernels():
    with pytest.raises(ValueError):
        update_xi(random_model(0), LocalBelief(0, [0.5, 0.5]), 0, (0, 0), 0)


@pytest.mark.parametrize("seed", range(5))
def test_xi_filter_matches_exact_joint(seed):
    m = random_model(seed, n=2, nz=1 + seed % 2, ny=2)
    joint = exact_joint_distribution(m, random_strategy(m, 2, "full", seed=seed), 2)
    assert check_xi_filter(joint, m) < 1e-12
