import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ctrlshare.belief import BeliefPoint, initial_points
from ctrlshare.estimators import CoordinatorSolver, MabSolver, belief_points
from ctrlshare.mab import apply_A, mab_model
from ctrlshare.model import random_model
from ctrlshare.oracle import brute_force_optimal


def test_params_and_clone():
    est = CoordinatorSolver(criterion="discounted", discount=0.9, tol=1e-7)
    assert est.get_params()["discount"] == 0.9
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    est.set_params(discount=0.5)
    assert est.discount == 0.5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        MabSolver().predict([[0.5, 0.5]])
    with pytest.raises(NotFittedError):
        CoordinatorSolver().predict([])


def test_finite_horizon_fit():
    m = random_model(4, n=2, nz=1)
    est = CoordinatorSolver("finite", horizon=2).fit(m)
    assert est.value_ == pytest.approx(brute_force_optimal(m, 2)[0], abs=1e-9)
    pts = [p for _, p in initial_points(m)]
    (d,) = est.predict(pts)
    assert len(d) == 2 and est.score(pts) == est.value_


def test_average_fit_on_channel():
    m = mab_model(0.5)
    est = CoordinatorSolver("average").fit(m)
    assert est.gain_ == pytest.approx(0.75, abs=1e-6)
    p = 0.5
    ap = apply_A(p, 1, p)
    pts = belief_points(0, [[[1 - p, p], [1 - ap, ap]]])
    assert est.predict(pts) == [((0, 0), (0, 1))]


def test_discounted_score():
    m = mab_model(0.5)
    est = CoordinatorSolver("discounted", discount=0.9, tol=1e-8).fit(m)
    ref = initial_points(m)[0][1]
    assert est.score([ref]) == pytest.approx(est.values_(ref))


def test_bad_configuration():
    with pytest.raises(ValueError):
        CoordinatorSolver("finite").fit(random_model(0))
    with pytest.raises(ValueError):
        CoordinatorSolver("discounted").fit(random_model(0))
    with pytest.raises(ValueError):
        CoordinatorSolver("banana").fit(random_model(0))
    with pytest.raises(ValueError):
        MabSolver(0.3, 0.6, method="closed-form").fit()


@pytest.mark.parametrize("method", ["rvi", "closed-form"])
def test_mab_solver(method):
    est = MabSolver(0.5, method=method).fit()
    assert est.gain_ == pytest.approx(0.75, abs=1e-6)
    ap = apply_A(0.5, 1, 0.5)
    out = est.predict(np.array([[0.5, ap], [ap, 0.5]]))
    assert out.shape == (2, 2) and out.tolist() == [[0, 1], [1, 0]]


def test_mab_solver_asymmetric():
    est = MabSolver(0.3, 0.6).fit()
    assert 0 < est.gain_ <= 1
    assert est.predict([0.3, 0.6]).shape == (1, 2)


def test_belief_points_helper():
    (p,) = belief_points(1, [[[0.5, 0.5]]])
    assert isinstance(p, BeliefPoint) and p.z == 1
