"""Common-information dynamic programming over product beliefs.

The coordinator observes ``(z, theta)`` and picks a joint prescription,
one map ``x^i -> u^i`` per station.  Expectations inside a backup are
exact: local states are enumerated, never sampled.  Every backup groups
local states by the joint action they induce, because the next belief
depends on the local states only through that action.

Ties between prescriptions are broken towards the first one in
:func:`enumerate_prescriptions` order; two values count as tied when they
differ by at most ``TIE_TOL * (1 + |value|)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .belief import DEFAULT_QUANTUM, BeliefPoint, initial_points, update_theta
from .exceptions import ClosureViolation, CombinatorialBlowup, MissingSuccessor, NonConvergence
from .model import CoupledModel

PRESCRIPTION_CAP = 10**7
TIE_TOL = 1e-12


def count_prescriptions(model: CoupledModel, z: int) -> int:
    total = 1
    for i in range(model.n):
        for x in range(model.local_sizes[i]):
            total *= int(model.feasible_actions[i][z, x].sum())
    return total


def enumerate_prescriptions(model: CoupledModel, z: int, cap: int = PRESCRIPTION_CAP) -> list:
    """All joint prescriptions feasible at shared state ``z``.

    Each prescription is a tuple ``(d^1, ..., d^n)`` with ``d^i`` a tuple of
    actions indexed by local state.  The order is lexicographic: station 1
    varies slowest, and within a station ``d^i(0)`` varies slowest.
    """
    count = count_prescriptions(model, z)
    if count > cap:
        raise CombinatorialBlowup(f"{count} joint prescriptions at z={z} exceed the cap of {cap}")
    per_station = []
    for i in range(model.n):
        options = [model.feasible(i, z, x) for x in range(model.local_sizes[i])]
        per_station.append(list(itertools.product(*options)))
    return list(itertools.product(*per_station))


def expand(model: CoupledModel, point: BeliefPoint, d: Sequence, t: int = 0):
    """Expected stage cost and successor distribution for one prescription.

    Returns ``(cost, successors)`` where ``successors`` is a list of
    ``(probability, BeliefPoint)`` with positive probability.
    """
    z = point.z
    nx = model.local_sizes
    grids = np.indices(nx, sparse=True)
    actions = [np.asarray(d[i])[grids[i]] for i in range(model.n)]
    c = model.cost_at(t)[(z, *grids, *actions)]
    joint = point.theta[0]
    for th in point.theta[1:]:
        joint = np.multiply.outer(joint, th)
    cost = float(np.sum(c * joint))

    per_u = []
    for i in range(model.n):
        per_u.append(np.bincount(np.asarray(d[i]), weights=point.theta[i], minlength=model.action_sizes[i]))
    succ = []
    support = [np.flatnonzero(p > 0) for p in per_u]
    for u in itertools.product(*support):
        pu = math.prod(float(per_u[i][u[i]]) for i in range(model.n))
        if pu <= 0:
            continue
        zrow = model.shared_kernel[(z, *u)]
        theta_next = None
        for z_next in np.flatnonzero(zrow > 0):
            if theta_next is None:
                theta_next = update_theta(model, point, d, u, int(z_next))
            succ.append((pu * float(zrow[z_next]), BeliefPoint(int(z_next), theta_next)))
    return cost, succ


# -- value functions and policies ---------------------------------------------

class _PointIndex:
    """Keyed store of belief points with optional nearest-point lookup."""

    def __init__(self, quantum):
        self.quantum = quantum
        self.keys = {}
        self.points = []
        self._nearest = None

    def __len__(self):
        return len(self.points)

    def add(self, point):
        k = point.key(self.quantum)
        j = self.keys.get(k)
        if j is None:
            j = len(self.points)
            self.keys[k] = j
            self.points.append(point)
            self._nearest = None
        return j

    def get(self, point):
        return self.keys.get(point.key(self.quantum))

    def nearest(self, point):
        if self._nearest is None:
            by_z = {}
            for j, p in enumerate(self.points):
                by_z.setdefault(p.z, []).append(j)
            self._nearest = {
                z: (np.array(idx), np.array([np.concatenate(self.points[j].theta) for j in idx]))
                for z, idx in by_z.items()
            }
        if point.z not in self._nearest:
            return None
        idx, mat = self._nearest[point.z]
        dist = np.abs(mat - np.concatenate(point.theta)).sum(axis=1)
        return int(idx[int(np.argmin(dist))])


@dataclass
class ValueFunction:
    """Values at canonical belief keys, plus solver metadata."""

    values: dict
    points: dict
    objective_sense: str
    quantum: float = DEFAULT_QUANTUM
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def __contains__(self, point):
        return point.key(self.quantum) in self.values

    def __call__(self, point: BeliefPoint, snap: bool = False) -> float:
        k = point.key(self.quantum)
        if k in self.values:
            return self.values[k]
        if snap:
            return self.values[self._snap_key(point)]
        raise MissingSuccessor(f"no value stored at {point!r}")

    def _snap_key(self, point):
        best, best_d = None, math.inf
        flat = np.concatenate(point.theta)
        for k, p in self.points.items():
            if p.z != point.z:
                continue
            dist = float(np.abs(np.concatenate(p.theta) - flat).sum())
            if dist < best_d:
                best, best_d = k, dist
        if best is None:
            raise MissingSuccessor(f"no stored point shares z={point.z}")
        return best

    def to_json(self) -> dict:
        rows = [{"point": self.points[k].to_json(), "value": v} for k, v in self.values.items()]
        return {"objective_sense": self.objective_sense, "meta": self.meta, "values": rows}


@dataclass
class CoordinatorPolicy:
    """Joint prescription per belief point, one table per stage.

    A stationary policy has a single table used at every stage.
    """

    stages: list
    points: dict
    quantum: float = DEFAULT_QUANTUM
    stationary: bool = True

    def __len__(self):
        return len(self.stages)

    def prescription(self, point: BeliefPoint, t: int = 0, snap: bool = False):
        s = 0 if self.stationary else t
        table = self.stages[s]
        k = point.key(self.quantum)
        if k in table:
            return table[k]
        if snap:
            index = self._snap_index(s)
            j = index.nearest(point)
            if j is not None:
                return table[index.points[j].key(self.quantum)]
        raise MissingSuccessor(f"policy undefined at {point!r} (stage {t})")

    def _snap_index(self, s):
        cache = self.__dict__.setdefault("_indices", {})
        if s not in cache:
            index = _PointIndex(self.quantum)
            for k in self.stages[s]:
                index.add(self.points[k])
            cache[s] = index
        return cache[s]

    def to_json(self) -> dict:
        return {
            "stationary": self.stationary,
            "quantum": self.quantum,
            "stages": [
                [{"point": self.points[k].to_json(), "prescription": [list(di) for di in d]}
                 for k, d in table.items()]
                for table in self.stages
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CoordinatorPolicy":
        quantum = float(doc.get("quantum", DEFAULT_QUANTUM))
        stages, points = [], {}
        for rows in doc["stages"]:
            table = {}
            for row in rows:
                p = BeliefPoint(row["point"]["z"], row["point"]["theta"])
                k = p.key(quantum)
                points[k] = p
                table[k] = tuple(tuple(int(a) for a in di) for di in row["prescription"])
            stages.append(table)
        return cls(stages, points, quantum, bool(doc.get("stationary", True)))


# -- single backups -------------------------------------------------------------

def _better(a, b, maximize):
    tol = TIE_TOL * (1.0 + abs(b))
    return a > b + tol if maximize else a < b - tol


def bellman_backup(model: CoupledModel, point: BeliefPoint, next_value: Optional[ValueFunction] = None,
                   discount: float = 1.0, *, t: int = 0, snap: bool = False,
                   prescriptions: Optional[list] = None, cap: int = PRESCRIPTION_CAP):
    """Optimize the one-stage lookahead at ``point``.

    ``next_value=None`` means a terminal value of zero.  Returns
    ``(value, best_prescription)``.
    """
    if prescriptions is None:
        prescriptions = enumerate_prescriptions(model, point.z, cap)
    best_v, best_d = None, None
    for d in prescriptions:
        cost, succ = expand(model, point, d, t)
        v = cost
        if next_value is not None and discount != 0:
            v += discount * sum(p * next_value(q, snap=snap) for p, q in succ)
        if best_v is None or _better(v, best_v, model.maximize):
            best_v, best_d = v, d
    return best_v, best_d


# -- tabulated backups -----------------------------------------------------------

@dataclass
class _Table:
    cost: np.ndarray
    trans: sparse.csr_matrix
    offsets: np.ndarray
    choices: list


class BeliefSet:
    """A collection of belief points plus a closure report."""

    def __init__(self, index: _PointIndex, truncated: bool = False, boundary: Sequence = (),
                 table: Optional[_Table] = None, unresolved: Sequence = (), prescription_filter=None):
        self._index = index
        self.truncated = truncated
        self.boundary = list(boundary)
        # expansion cached by reachable_beliefs, valid for this filter only
        self._table = table
        self._unresolved = list(unresolved)
        self._filter = prescription_filter

    @property
    def points(self) -> list:
        return list(self._index.points)

    @property
    def quantum(self) -> float:
        return self._index.quantum

    @property
    def closed(self) -> bool:
        return not self._unresolved

    def __len__(self):
        return len(self._index)

    def __iter__(self):
        return iter(self._index.points)

    def __contains__(self, point):
        return self._index.get(point) is not None

    def report(self) -> dict:
        return {"size": len(self), "truncated": self.truncated, "closed": self.closed,
                "boundary": [p.to_json() for p in self.boundary]}


def _prescriptions_for(model, z, cache, prescription_filter, cap):
    if z not in cache:
        ds = enumerate_prescriptions(model, z, cap)
        if prescription_filter is not None:
            ds = [d for d in ds if prescription_filter(z, d)]
            if not ds:
                raise ValueError(f"prescription_filter removed every prescription at z={z}")
        cache[z] = ds
    return cache[z]


def _explore(model, seeds, *, quantum, max_points, grow, t=0, target=None,
             prescription_filter=None, cap=PRESCRIPTION_CAP):
    """Expand ``seeds`` under every prescription.

    Successors are placed in ``target`` (the same index when ``target`` is
    None, which makes this a breadth-first closure).  New points are added
    only while ``grow`` is true and the target holds fewer than
    ``max_points``.  Returns the table plus unresolved successors as
    ``(row, probability, point)``.
    """
    source = seeds
    target = source if target is None else target
    cache = {}
    cost, rows, cols, vals, choices, offsets = [], [], [], [], [], [0]
    unresolved = []
    j = 0
    while j < len(source):
        point = source.points[j]
        for d in _prescriptions_for(model, point.z, cache, prescription_filter, cap):
            c, succ = expand(model, point, d, t)
            r = len(cost)
            cost.append(c)
            choices.append(d)
            merged = {}
            for p, q in succ:
                k = target.get(q)
                if k is None and grow and len(target) < max_points:
                    k = target.add(q)
                if k is None:
                    unresolved.append((r, p, q))
                else:
                    merged[k] = merged.get(k, 0.0) + p
            for k, p in merged.items():
                rows.append(r)
                cols.append(k)
                vals.append(p)
        offsets.append(len(cost))
        j += 1
    table = _Table(np.array(cost), None, np.array(offsets), choices)
    return table, (rows, cols, vals), unresolved


def _finish(table, triplets, unresolved, target, snap):
    rows, cols, vals = (list(v) for v in triplets)
    if unresolved:
        if not snap:
            r, _, q = unresolved[0]
            raise ClosureViolation(
                f"{len(unresolved)} successor(s) fall outside the belief set, e.g. {q!r}; "
                "enlarge max_points or enable snap")
        for r, p, q in unresolved:
            k = target.nearest(q)
            if k is None:
                raise ClosureViolation(f"no stored point shares z={q.z} with {q!r}")
            rows.append(r)
            cols.append(k)
            vals.append(p)
    table.trans = sparse.csr_matrix((vals, (rows, cols)), shape=(len(table.cost), len(target)))
    return table


def reachable_beliefs(model: CoupledModel, initial: Optional[Sequence[BeliefPoint]] = None,
                      max_points: int = 100_000, quantization: float = DEFAULT_QUANTUM, *,
                      prescription_filter: Optional[Callable] = None, cap: int = PRESCRIPTION_CAP) -> BeliefSet:
    """Breadth-first closure of the initial beliefs under the filter.

    Points are identified by their probabilities rounded to
    ``quantization``.  When ``max_points`` is reached the set is marked
    truncated and the points with successors outside it are listed in
    ``boundary``.  ``prescription_filter(z, d)`` may exclude prescriptions.
    """
    if initial is None:
        initial = [p for _, p in initial_points(model)]
    elif isinstance(initial, BeliefPoint):
        initial = [initial]
    index = _PointIndex(quantization)
    for p in initial:
        index.add(p)
    table, triplets, unresolved = _explore(model, index, quantum=quantization, max_points=max_points, grow=True,
                                           prescription_filter=prescription_filter, cap=cap)
    boundary_rows = sorted({r for r, _, _ in unresolved})
    owners = np.searchsorted(table.offsets, boundary_rows, side="right") - 1
    boundary = [index.points[j] for j in sorted(set(owners.tolist()))]
    table.trans = triplets
    return BeliefSet(index, truncated=bool(unresolved), boundary=boundary, table=table,
                     unresolved=unresolved, prescription_filter=prescription_filter)


def _stationary_table(model, belief_set, *, snap, prescription_filter, cap):
    cached = belief_set._table
    if cached is not None and belief_set._filter is prescription_filter:
        table = _Table(cached.cost, None, cached.offsets, cached.choices)
        return _finish(table, cached.trans, belief_set._unresolved, belief_set._index, snap)
    table, triplets, unresolved = _explore(model, belief_set._index, quantum=belief_set.quantum, max_points=0,
                                           grow=False, prescription_filter=prescription_filter, cap=cap)
    return _finish(table, triplets, unresolved, belief_set._index, snap)


def _reduce(q, offsets, maximize):
    """Optimal value and first optimal row for each point."""
    starts = offsets[:-1]
    best = (np.maximum if maximize else np.minimum).reduceat(q, starts)
    owner = np.repeat(np.arange(len(starts)), np.diff(offsets))
    tol = TIE_TOL * (1.0 + np.abs(best[owner]))
    hit = (q >= best[owner] - tol) if maximize else (q <= best[owner] + tol)
    rows = np.flatnonzero(hit)
    _, first = np.unique(owner[rows], return_index=True)
    return best, rows[first]


def _resolve_belief_set(model, belief_set, max_points, quantum, prescription_filter, cap):
    if belief_set is None:
        return reachable_beliefs(model, None, max_points, quantum, prescription_filter=prescription_filter, cap=cap)
    if isinstance(belief_set, BeliefSet):
        return belief_set
    index = _PointIndex(quantum)
    for p in belief_set:
        index.add(p)
    return BeliefSet(index)


def _check_stationary(model):
    if model.time_varying:
        raise ValueError("stationary solvers need a time-invariant cost")


def _pack(model, bs, values, rows, table, meta, quantum):
    keys = [p.key(quantum) for p in bs.points]
    vf = ValueFunction(dict(zip(keys, map(float, values))), dict(zip(keys, bs.points)),
                       model.objective_sense, quantum, meta)
    policy = CoordinatorPolicy([{k: table.choices[r] for k, r in zip(keys, rows)}],
                               dict(zip(keys, bs.points)), quantum, stationary=True)
    return vf, policy


def solve_discounted(model: CoupledModel, discount: float, tol: float = 1e-8, belief_set=None, *,
                     max_points: int = 100_000, quantum: float = DEFAULT_QUANTUM, snap: bool = False,
                     max_iter: int = 10**6, prescription_filter: Optional[Callable] = None,
                     cap: int = PRESCRIPTION_CAP):
    """Discounted value iteration on a belief set closed under the filter.

    Iterates until the sup-norm change is at most
    ``tol * (1 - discount) / (2 * discount)``, which puts the greedy policy
    within ``tol`` of optimal.  Returns ``(ValueFunction, CoordinatorPolicy)``.
    """
    if not 0 < discount < 1:
        raise ValueError("discount must lie in (0, 1)")
    _check_stationary(model)
    bs = _resolve_belief_set(model, belief_set, max_points, quantum, prescription_filter, cap)
    quantum = bs.quantum
    table = _stationary_table(model, bs, snap=snap, prescription_filter=prescription_filter, cap=cap)
    threshold = tol * (1 - discount) / (2 * discount)
    v = np.zeros(len(bs))
    for it in range(1, max_iter + 1):
        q = table.cost + discount * (table.trans @ v)
        new, rows = _reduce(q, table.offsets, model.maximize)
        delta = float(np.max(np.abs(new - v))) if len(v) else 0.0
        v = new
        if delta <= threshold:
            break
    else:
        raise NonConvergence(f"value iteration did not converge in {max_iter} sweeps (last change {delta:g})",
                             residual=delta)
    q = table.cost + discount * (table.trans @ v)
    _, rows = _reduce(q, table.offsets, model.maximize)
    meta = {"criterion": "discounted", "discount": discount, "iterations": it, "points": len(bs),
            "truncated": bs.truncated}
    return _pack(model, bs, v, rows, table, meta, quantum)


def solve_average_reward(model: CoupledModel, tol: float = 1e-9, belief_set=None, *,
                         reference: Optional[BeliefPoint] = None, max_points: int = 100_000,
                         quantum: float = DEFAULT_QUANTUM, snap: bool = False, max_iter: int = 10**5,
                         aperiodicity: float = 0.5, prescription_filter: Optional[Callable] = None,
                         cap: int = PRESCRIPTION_CAP):
    """Relative value iteration for the long-run average criterion.

    The update is ``h <- T'h - T'h(ref)`` with ``T' = (1-a) I + a T`` and
    ``a = aperiodicity``; the blend has the same fixed points as ``T`` and
    keeps periodic optimal cycles, such as round-robin transmission, from
    making plain iteration oscillate.
    Iteration stops once the span of ``T h - h`` is at most ``tol``.

    Returns ``(gain, ValueFunction, CoordinatorPolicy)``; relative values are
    zero at ``reference`` (default: the first initial belief point).
    """
    if not 0 < aperiodicity <= 1:
        raise ValueError("aperiodicity must lie in (0, 1]")
    _check_stationary(model)
    bs = _resolve_belief_set(model, belief_set, max_points, quantum, prescription_filter, cap)
    quantum = bs.quantum
    table = _stationary_table(model, bs, snap=snap, prescription_filter=prescription_filter, cap=cap)
    if reference is None:
        reference = initial_points(model)[0][1]
    ref = bs._index.get(reference)
    if ref is None:
        raise ValueError(f"reference point {reference!r} is not in the belief set")
    h = np.zeros(len(bs))
    span = math.inf
    for it in range(1, max_iter + 1):
        q = table.cost + table.trans @ h
        th, rows = _reduce(q, table.offsets, model.maximize)
        diff = th - h
        span = float(diff.max() - diff.min())
        if span <= tol:
            break
        h = (1 - aperiodicity) * h + aperiodicity * th
        h -= h[ref]
    else:
        raise NonConvergence(f"relative value iteration did not converge in {max_iter} sweeps (span {span:g})",
                             residual=span)
    gain = float(diff[ref])
    meta = {"criterion": "average", "gain": gain, "iterations": it, "span": span, "points": len(bs),
            "truncated": bs.truncated}
    vf, policy = _pack(model, bs, h, rows, table, meta, quantum)
    return gain, vf, policy


def solve_finite_horizon(model: CoupledModel, horizon: int, *, quantum: float = DEFAULT_QUANTUM,
                         max_points: int = 1_000_000, cap: int = PRESCRIPTION_CAP):
    """Backward induction over the beliefs reachable at each stage.

    Returns ``(policy, value)`` where ``value`` is the optimal expected
    total cost (reward) averaged over the initial shared state.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if model.time_varying and len(model.cost) < horizon:
        raise ValueError(f"model has {len(model.cost)} cost tensors but horizon is {horizon}")
    init = initial_points(model)
    if horizon == 0:
        return CoordinatorPolicy([], {}, quantum, stationary=False), 0.0
    layers = [_PointIndex(quantum)]
    for _, p in init:
        layers[0].add(p)
    tables = []
    for t in range(horizon):
        last = t == horizon - 1
        nxt = _PointIndex(quantum)
        table, triplets, unresolved = _explore(model, layers[t], quantum=quantum, max_points=max_points,
                                               grow=not last, t=t, target=nxt, cap=cap)
        if unresolved and not last:
            raise CombinatorialBlowup(f"stage {t + 2} has more than {max_points} belief points")
        if last:
            table.trans = None
        else:
            table = _finish(table, triplets, [], nxt, snap=False)
            layers.append(nxt)
        tables.append(table)
    v_next = None
    stages = [None] * horizon
    points = {}
    for t in range(horizon - 1, -1, -1):
        table = tables[t]
        q = table.cost if v_next is None else table.cost + table.trans @ v_next
        v, rows = _reduce(q, table.offsets, model.maximize)
        keys = [p.key(quantum) for p in layers[t].points]
        points.update(zip(keys, layers[t].points))
        stages[t] = {k: table.choices[r] for k, r in zip(keys, rows)}
        v_next = v
    value = float(sum(pz * v_next[layers[0].get(p)] for pz, p in init))
    return CoordinatorPolicy(stages, points, quantum, stationary=False), value
