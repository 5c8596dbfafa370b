"""scikit-learn style wrappers around the solvers.

``fit`` takes the model (there are no samples); ``predict`` maps belief
points, or channel belief pairs, to the coordinator's action.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .belief import BeliefPoint
from .dp import solve_average_reward, solve_discounted, solve_finite_horizon
from .mab import MabParams, closed_form, mab_relative_vi


class CoordinatorSolver(BaseEstimator):
    """Optimal coordinator policy for a :class:`~ctrlshare.model.CoupledModel`.

    ``criterion`` is ``"finite"`` (needs ``horizon``), ``"discounted"``
    (needs ``discount``) or ``"average"``.
    """

    def __init__(self, criterion="average", horizon=None, discount=None, tol=1e-9, max_points=100_000,
                 snap=False):
        self.criterion = criterion
        self.horizon = horizon
        self.discount = discount
        self.tol = tol
        self.max_points = max_points
        self.snap = snap

    def fit(self, model, y=None):
        if self.criterion == "finite":
            if self.horizon is None:
                raise ValueError("criterion='finite' needs horizon")
            self.policy_, self.value_ = solve_finite_horizon(model, self.horizon, max_points=self.max_points)
            self.gain_ = None
        elif self.criterion == "discounted":
            if self.discount is None:
                raise ValueError("criterion='discounted' needs discount")
            self.values_, self.policy_ = solve_discounted(model, self.discount, self.tol,
                                                          max_points=self.max_points, snap=self.snap)
            self.value_ = None
            self.gain_ = None
        elif self.criterion == "average":
            self.gain_, self.values_, self.policy_ = solve_average_reward(model, self.tol,
                                                                          max_points=self.max_points,
                                                                          snap=self.snap)
            self.value_ = None
        else:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        self.model_ = model
        return self

    def predict(self, points, t=0):
        """Joint prescription at each :class:`BeliefPoint`."""
        check_is_fitted(self, "policy_")
        return [self.policy_.prescription(p, t, snap=self.snap) for p in points]

    def score(self, points, y=None):
        """Mean stored value over ``points`` (discounted / average criteria)."""
        check_is_fitted(self, "policy_")
        if self.criterion == "finite":
            return self.value_
        return float(np.mean([self.values_(p, snap=self.snap) for p in points]))


class MabSolver(BaseEstimator):
    """Two-user multiaccess channel: gain, values and policy.

    ``method`` is ``"rvi"`` or ``"closed-form"`` (symmetric arrivals only).
    """

    def __init__(self, p1=0.5, p2=None, method="rvi", n_max=None, tol=1e-9):
        self.p1 = p1
        self.p2 = p2
        self.method = method
        self.n_max = n_max
        self.tol = tol

    def fit(self, X=None, y=None):
        params = MabParams(self.p1, self.p1 if self.p2 is None else self.p2)
        if self.method == "rvi":
            self.solution_ = mab_relative_vi(params, self.n_max, self.tol)
        elif self.method == "closed-form":
            if not params.is_symmetric:
                raise ValueError("the closed form needs symmetric arrivals")
            self.solution_ = closed_form(params.p1, self.n_max)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.gain_ = self.solution_.gain
        return self

    def predict(self, X):
        """Action pair for each row ``(q1, q2)`` of ``X``; shape (n, 2)."""
        check_is_fitted(self, "solution_")
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        return np.array([self.solution_.action((float(a), float(b))) for a, b in X], dtype=int)


def belief_points(z, thetas):
    """Convenience: list of :class:`BeliefPoint` sharing one ``z``."""
    return [BeliefPoint(z, th) for th in thetas]
