"""Common-information beliefs and their filter updates.

The coordinator's state is a :class:`BeliefPoint` ``(z, theta)`` where
``theta[i]`` is the posterior of subsystem ``i``'s local state given the
shared-state and joint-action history.  Because the local kernels do not
couple local states, the posterior of the joint local state is the product
of the ``theta[i]``; the update is carried out one subsystem at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InconsistentObservation
from .model import CoupledModel

BELIEF_TOL = 1e-9
DEFAULT_QUANTUM = 1e-9


@dataclass(frozen=True, eq=False)
class BeliefPoint:
    """Shared state plus one probability vector per subsystem."""

    z: int
    theta: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", int(self.z))
        theta = []
        for th in self.theta:
            arr = np.array(th, dtype=float)
            arr.setflags(write=False)
            theta.append(arr)
        object.__setattr__(self, "theta", tuple(theta))

    def key(self, quantum: float = DEFAULT_QUANTUM) -> tuple:
        return belief_key(self.z, self.theta, quantum)

    def is_valid(self, tol: float = BELIEF_TOL) -> bool:
        return all(np.all(th >= -tol) and abs(th.sum() - 1.0) <= tol for th in self.theta)

    def to_json(self) -> dict:
        return {"z": self.z, "theta": [th.tolist() for th in self.theta]}

    def __repr__(self):
        th = ", ".join("[" + ", ".join(f"{v:.6g}" for v in t) + "]" for t in self.theta)
        return f"BeliefPoint(z={self.z}, theta=({th}))"


def belief_key(z, theta, quantum=DEFAULT_QUANTUM) -> tuple:
    """Hashable canonical form: each probability rounded to ``quantum``."""
    return (int(z),) + tuple(tuple(int(v) for v in np.rint(np.asarray(th) / quantum)) for th in theta)


def initial_points(model: CoupledModel) -> list:
    """One belief point per shared state with positive initial mass.

    Returns ``[(probability, BeliefPoint), ...]``.
    """
    out = []
    for z in range(model.shared_size):
        pz = float(model.initial_shared[z])
        if pz > 0:
            out.append((pz, BeliefPoint(z, [p[z] for p in model.initial_local])))
    return out


def _component_update(theta_i, d_i, u_i, row_kernel):
    # row_kernel: (nx, nx') transition rows for the realized (z, u)
    mask = np.asarray(d_i) == u_i
    w = np.where(mask, theta_i, 0.0)
    mass = w.sum()
    if mass <= 0:
        return None, 0.0
    return (w / mass) @ row_kernel, mass


def update_theta(model: CoupledModel, point: BeliefPoint, prescriptions: Sequence, u_observed: Sequence[int],
                 z_next: int) -> tuple:
    """Filter the common-information belief through one stage.

    ``prescriptions[i][x]`` is the action station ``i`` takes in local state
    ``x``.  ``z_next`` is part of the update signature but does not enter
    it: the shared state moves independently of the local states.
    """
    u = tuple(int(a) for a in u_observed)
    if not 0 <= z_next < model.shared_size:
        raise IndexError(f"shared state {z_next} out of range")
    z = point.z
    out = []
    for i in range(model.n):
        kern = model.local_kernels[i][(z, slice(None), *u)]
        new, mass = _component_update(point.theta[i], prescriptions[i], u[i], kern)
        if new is None:
            raise InconsistentObservation(
                f"subsystem {i}: action {u[i]} has zero probability under prescription "
                f"{list(prescriptions[i])} and belief {point.theta[i].tolist()}")
        out.append(new)
    return tuple(out)


def action_probabilities(point: BeliefPoint, prescriptions: Sequence, action_sizes: Sequence[int]) -> list:
    """Per-subsystem distribution of the action induced by a prescription."""
    probs = []
    for th, d, m in zip(point.theta, prescriptions, action_sizes):
        probs.append(np.bincount(np.asarray(d), weights=th, minlength=m))
    return probs


def joint_from_theta(point: BeliefPoint, shared_size: int | None = None) -> np.ndarray:
    """Joint posterior over ``(z, x_1, ..., x_n)`` from a belief point."""
    nz = shared_size if shared_size is not None else point.z + 1
    joint = point.theta[0]
    for th in point.theta[1:]:
        joint = np.multiply.outer(joint, th)
    out = np.zeros((nz, *joint.shape))
    out[point.z] = joint
    return out


@dataclass(frozen=True, eq=False)
class LocalBelief:
    """Station ``i``'s own posterior over its local state."""

    i: int
    xi: np.ndarray

    def __post_init__(self):
        arr = np.array(self.xi, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "xi", arr)


def initial_xi(model: CoupledModel, i: int, z: int, y: int) -> LocalBelief:
    """Posterior of ``x^i_1`` after the first observation."""
    post = model.initial_local[i][z] * model.observation_kernels[i][:, y]
    s = post.sum()
    if s <= 0:
        raise InconsistentObservation(f"subsystem {i}: observation {y} impossible at z={z}")
    return LocalBelief(i, post / s)


def update_xi(model: CoupledModel, belief: LocalBelief, z: int, u_joint: Sequence[int], y_next: int) -> LocalBelief:
    """Predict through the local kernel, then correct with ``y_next``."""
    if model.observation_kernels is None:
        raise ValueError("model has no observation kernels")
    i = belief.i
    u = tuple(int(a) for a in u_joint)
    pred = belief.xi @ model.local_kernels[i][(z, slice(None), *u)]
    post = pred * model.observation_kernels[i][:, y_next]
    s = post.sum()
    if s <= 0:
        raise InconsistentObservation(f"subsystem {i}: observation {y_next} has zero predicted probability")
    return LocalBelief(i, post / s)
