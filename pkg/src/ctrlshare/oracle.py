"""Brute-force references for small instances.

Everything here works on the full joint distribution of a finite-horizon
run, enumerated exactly.  The functions are slow by design and exist to
check the belief filter, the coordinator DP and the structural results
they rely on.

Stages are 0-based.  A realization is the tuple ``(zs, xs, us, ys)`` of
shared states, joint local states, joint actions and (for partial models)
joint observations, one entry per stage.
"""

from __future__ import annotations

import itertools
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .belief import BeliefPoint, initial_points, initial_xi, update_theta, update_xi
from .exceptions import CombinatorialBlowup, InfeasibleActionError
from .model import MAXIMIZE, MINIMIZE, CoupledModel

DEFAULT_CAP = 10**7
PATTERNS = ("full", "reduced", "markov")
_THETA_QUANTUM = 1e-9


@dataclass(frozen=True, eq=False)
class JointStateModel:
    """Model with an arbitrary kernel over the joint local state.

    ``joint_kernel`` has shape ``(nz, nx_1..nx_n, nu_1..nu_n, nx_1..nx_n)``.
    This admits cross-coupled local dynamics that a :class:`CoupledModel`
    cannot express; the oracle treats every model in this form.
    """

    shared_kernel: np.ndarray
    joint_kernel: np.ndarray
    cost: object
    initial_shared: np.ndarray
    initial_joint: np.ndarray
    local_sizes: tuple
    action_sizes: tuple
    feasible_actions: tuple
    observation_kernels: Optional[tuple] = None
    objective_sense: str = MINIMIZE

    @property
    def n(self) -> int:
        return len(self.local_sizes)

    @property
    def shared_size(self) -> int:
        return self.shared_kernel.shape[0]

    @property
    def maximize(self) -> bool:
        return self.objective_sense == MAXIMIZE

    def cost_at(self, t: int) -> np.ndarray:
        return self.cost[t] if isinstance(self.cost, tuple) else self.cost

    def feasible(self, i, z, x) -> tuple:
        return tuple(int(a) for a in np.flatnonzero(self.feasible_actions[i][z, x]))


def lift(model) -> JointStateModel:
    """Joint-kernel form of a coupled model (identity on a lifted one)."""
    if isinstance(model, JointStateModel):
        return model
    n = model.n
    nx, nu, nz = model.local_sizes, model.action_sizes, model.shared_size
    kernel = np.ones((nz, *nx, *nu, *nx))
    for i, k in enumerate(model.local_kernels):
        # k: (nz, nx_i, nu..., nx_i) -> broadcast into the joint layout
        shape = [nz] + [1] * n + list(nu) + [1] * n
        shape[1 + i] = nx[i]
        shape[1 + 2 * n + i] = nx[i]
        kernel = kernel * k.reshape(shape)
    init = np.ones((nz, *nx))
    for i, p in enumerate(model.initial_local):
        shape = [nz] + [1] * n
        shape[1 + i] = nx[i]
        init = init * p.reshape(shape)
    cost = model.cost if not model.time_varying else tuple(model.cost)
    return JointStateModel(model.shared_kernel, kernel, cost, model.initial_shared, init, tuple(nx),
                           tuple(nu), model.feasible_actions, model.observation_kernels, model.objective_sense)


def cross_coupled_counterexample() -> JointStateModel:
    """Two binary subsystems where subsystem 1 is driven by subsystem 2.

    ``x1' = x1 XOR x2``, ``x2' = x2``; both start uniform.  With constant
    actions, subsystem 1's history reveals ``x2`` so the local histories
    are not independent given the common information.
    """
    nz, nx, nu = 1, (2, 2), (2, 2)
    kernel = np.zeros((nz, 2, 2, 2, 2, 2, 2))
    for x1, x2, u1, u2 in itertools.product(range(2), repeat=4):
        kernel[0, x1, x2, u1, u2, x1 ^ x2, x2] = 1.0
    init = np.full((1, 2, 2), 0.25)
    feas = tuple(np.ones((1, 2, 2), dtype=bool) for _ in range(2))
    return JointStateModel(np.ones((1, 2, 2, 1)), kernel, np.zeros((1, 2, 2, 2, 2)), np.ones(1), init,
                           nx, nu, feas)


# -- strategies ---------------------------------------------------------------

def information(pattern: str, t: int, i: int, zs, xs, us, ys=None, theta_key=None) -> tuple:
    """Station ``i``'s information at stage ``t`` under ``pattern``.

    ``full``: (z history, own local-state or observation history, past
    joint actions); ``reduced``: (current local state, z history, past
    joint actions); ``markov``: (current local state, current z, key of the
    common-information belief).
    """
    if pattern == "full":
        own = ys if ys is not None else xs
        return (tuple(zs[:t + 1]), tuple(o[i] for o in own[:t + 1]), tuple(us[:t]))
    if pattern == "reduced":
        return (xs[t][i], tuple(zs[:t + 1]), tuple(us[:t]))
    if pattern == "markov":
        return (xs[t][i], zs[t], theta_key)
    raise ValueError(f"unknown information pattern {pattern!r}; expected one of {PATTERNS}")


def _split(pattern, info):
    # (common part, private part) of an information realization
    if pattern == "full":
        return (info[0], info[2]), info[1]
    if pattern == "reduced":
        return (info[1], info[2]), info[0]
    return (info[1], info[2]), info[0]


@dataclass
class StrategyTable:
    """Deterministic strategy: per station and stage, information -> action.

    ``tables[i][t]`` is a dict.  ``rules[i]``, if given, supplies actions
    for information not in the table (used for seeded random strategies).
    """

    patterns: tuple
    tables: list
    rules: Optional[list] = field(default=None, repr=False)

    @classmethod
    def empty(cls, patterns, horizon):
        return cls(tuple(patterns), [[{} for _ in range(horizon)] for _ in patterns])

    @property
    def n(self) -> int:
        return len(self.patterns)

    @property
    def needs_theta(self) -> bool:
        return "markov" in self.patterns

    def action(self, t: int, i: int, info: tuple) -> int:
        table = self.tables[i][t] if t < len(self.tables[i]) else {}
        if info in table:
            return table[info]
        if self.rules is not None and self.rules[i] is not None:
            return self.rules[i](t, info)
        raise KeyError(f"station {i} has no action at stage {t} for information {info}")

    def completed(self, model) -> "StrategyTable":
        """Copy that plays the first feasible action off the tabulated set."""
        jm = lift(model)
        rules = list(self.rules) if self.rules is not None else [None] * self.n

        def first_feasible(i):
            return lambda t, info: _options(jm, self.patterns[i], i, info)[0]

        rules = [r if r is not None else first_feasible(i) for i, r in enumerate(rules)]
        return StrategyTable(self.patterns, [[dict(d) for d in st] for st in self.tables], rules)


def random_strategy(model, horizon: int, pattern="reduced", seed: int = 0) -> StrategyTable:
    """Seeded random deterministic strategy, defined on every information.

    ``pattern`` may be one name for all stations or one per station.  The
    action is a feasible one chosen by a generator seeded from the seed,
    stage, station and information, so the strategy is reproducible.
    """
    jm = lift(model)
    patterns = (pattern,) * jm.n if isinstance(pattern, str) else tuple(pattern)
    partial = jm.observation_kernels is not None

    def rule_for(i):
        def rule(t, info):
            if partial:
                options = tuple(range(jm.action_sizes[i]))
            else:
                z, x = _current(patterns[i], info)
                options = jm.feasible(i, z, x)
            rng = random.Random(hash((seed, t, i, info)))
            return options[rng.randrange(len(options))]
        return rule

    if partial and not all(f.all() for f in jm.feasible_actions):
        raise ValueError("random strategies on partial models need every action feasible")
    return StrategyTable(patterns, [[{} for _ in range(horizon)] for _ in range(jm.n)],
                         [rule_for(i) for i in range(jm.n)])


def constant_strategy(model, horizon: int, actions=None, pattern="reduced") -> StrategyTable:
    """Every station always plays ``actions[i]`` (default 0)."""
    jm = lift(model)
    actions = (0,) * jm.n if actions is None else tuple(actions)
    return StrategyTable((pattern,) * jm.n, [[{} for _ in range(horizon)] for _ in range(jm.n)],
                         [(lambda t, info, a=a: a) for a in actions])


def _current(pattern, info):
    if pattern == "full":
        return info[0][-1], info[1][-1]
    if pattern == "reduced":
        return info[1][-1], info[0]
    return info[1], info[0]


# -- exact forward enumeration ------------------------------------------------

@dataclass
class ExactJoint:
    """Exact law of a finite run: ``table[(zs, xs, us, ys)] = probability``."""

    table: dict
    horizon: int
    n: int
    partial: bool

    def total_mass(self) -> float:
        return float(sum(self.table.values()))

    def expected_cost(self, model) -> float:
        jm = lift(model)
        total = 0.0
        for (zs, xs, us, _), p in self.table.items():
            total += p * sum(jm.cost_at(t)[(zs[t], *xs[t], *us[t])] for t in range(len(zs)))
        return float(total)

    def __len__(self):
        return len(self.table)


def _initial(jm):
    out = []
    obs = jm.observation_kernels
    for z in range(jm.shared_size):
        pz = jm.initial_shared[z]
        if pz <= 0:
            continue
        for x in itertools.product(*(range(m) for m in jm.local_sizes)):
            px = pz * jm.initial_joint[(z, *x)]
            if px <= 0:
                continue
            if obs is None:
                out.append((px, (z,), (x,), (), None))
                continue
            for y in itertools.product(*(range(o.shape[1]) for o in obs)):
                py = px * np.prod([obs[i][x[i], y[i]] for i in range(jm.n)])
                if py > 0:
                    out.append((py, (z,), (x,), (), (y,)))
    return out


def _theta_keys(jm, reals, t):
    # common information -> key of the per-station posteriors of x_t
    acc = defaultdict(lambda: [np.zeros(m) for m in jm.local_sizes])
    for p, zs, xs, us, _ in reals:
        th = acc[(zs, us)]
        for i in range(jm.n):
            th[i][xs[t][i]] += p
    keys = {}
    for c, th in acc.items():
        keys[c] = tuple(tuple(int(v) for v in np.rint(a / a.sum() / _THETA_QUANTUM)) for a in th)
    return keys


def _act(jm, strategy, reals, t, fixed_only=None):
    keys = _theta_keys(jm, reals, t) if strategy.needs_theta else {}
    out = []
    for p, zs, xs, us, ys in reals:
        u = []
        for i in range(jm.n):
            info = information(strategy.patterns[i], t, i, zs, xs, us, ys, keys.get((zs, us)))
            a = strategy.action(t, i, info)
            if not jm.feasible_actions[i][zs[t], xs[t][i], a]:
                raise InfeasibleActionError(f"t={t}, i={i}, z={zs[t]}, x={xs[t][i]}, u={a} is infeasible")
            u.append(a)
        out.append((p, zs, xs, us + (tuple(u),), ys))
    return out


def _advance(jm, reals):
    out = []
    obs = jm.observation_kernels
    nxt_x = list(itertools.product(*(range(m) for m in jm.local_sizes)))
    for p, zs, xs, us, ys in reals:
        z, x, u = zs[-1], xs[-1], us[-1]
        pz = jm.shared_kernel[(z, *u)]
        px = jm.joint_kernel[(z, *x, *u)]
        for z2 in np.flatnonzero(pz):
            for x2 in nxt_x:
                q = p * pz[z2] * px[x2]
                if q <= 0:
                    continue
                if obs is None:
                    out.append((q, zs + (int(z2),), xs + (x2,), us, None))
                    continue
                for y in itertools.product(*(range(o.shape[1]) for o in obs)):
                    qy = q * np.prod([obs[i][x2[i], y[i]] for i in range(jm.n)])
                    if qy > 0:
                        out.append((qy, zs + (int(z2),), xs + (x2,), us, ys + (y,)))
    return out


def exact_joint_distribution(model, strategy: StrategyTable, T: int, cap: int = DEFAULT_CAP) -> ExactJoint:
    """Enumerate every positive-probability realization of ``T`` stages."""
    jm = lift(model)
    if T == 0:
        return ExactJoint({((), (), (), None): 1.0}, 0, jm.n, jm.observation_kernels is not None)
    reals = _initial(jm)
    for t in range(T):
        if len(reals) > cap:
            raise CombinatorialBlowup(f"joint table has {len(reals)} entries at stage {t}, cap {cap}")
        reals = _act(jm, strategy, reals, t)
        if t + 1 < T:
            reals = _advance(jm, reals)
    table = defaultdict(float)
    for p, zs, xs, us, ys in reals:
        table[(zs, xs, us, ys)] += p
    return ExactJoint(dict(table), T, jm.n, jm.observation_kernels is not None)


# -- structural checks --------------------------------------------------------

def _max_product_gap(groups, n):
    # groups: common -> {(h_1..h_n): prob}; max |P(h | c) - prod_i P(h_i | c)|
    worst = 0.0
    for dist in groups.values():
        mass = sum(dist.values())
        margs = [defaultdict(float) for _ in range(n)]
        for h, p in dist.items():
            for i in range(n):
                margs[i][h[i]] += p / mass
        for combo in itertools.product(*(list(m.items()) for m in margs)):
            h = tuple(k for k, _ in combo)
            prod = float(np.prod([v for _, v in combo]))
            worst = max(worst, abs(dist.get(h, 0.0) / mass - prod))
    return worst


def check_conditional_independence(joint: ExactJoint) -> float:
    """Largest gap between the joint and the product of per-subsystem
    conditionals of the local-state histories, over every stage ``t`` and
    every positive-probability (z history, joint action history) up to ``t``.
    """
    worst = 0.0
    for t in range(1, joint.horizon + 1):
        groups = defaultdict(lambda: defaultdict(float))
        for (zs, xs, us, _), p in joint.table.items():
            hist = tuple(tuple(x[i] for x in xs[:t]) for i in range(joint.n))
            groups[(zs[:t], us[:t])][hist] += p
        worst = max(worst, _max_product_gap(groups, joint.n))
    return worst


def exact_xi(joint: ExactJoint, model, i: int, t: int) -> dict:
    """Station ``i``'s posterior of ``x^i_t`` given its information.

    Keyed by ``(own observations up to t, z history up to t, actions before t)``.
    """
    jm = lift(model)
    acc = defaultdict(lambda: np.zeros(jm.local_sizes[i]))
    for (zs, xs, us, ys), p in joint.table.items():
        acc[(tuple(y[i] for y in ys[:t + 1]), zs[:t + 1], us[:t])][xs[t][i]] += p
    return {k: v / v.sum() for k, v in acc.items()}


def check_theta_filter(model: CoupledModel, strategy: StrategyTable, T: int, cap: int = DEFAULT_CAP) -> float:
    """Largest gap between exact posteriors of each ``x^i_t`` given the
    common information and the recursive common-information filter.

    ``strategy`` must use the reduced pattern, so that every stage's
    prescription is a function of the common information.
    """
    if any(p != "reduced" for p in strategy.patterns):
        raise ValueError("filter check needs reduced-pattern strategies")
    joint = exact_joint_distribution(model, strategy, T, cap)
    starts = {p.z: p for _, p in initial_points(model)}
    acc = defaultdict(lambda: [np.zeros(m) for m in model.local_sizes])
    for t in range(T):
        for (zs, xs, us, _), p in joint.table.items():
            th = acc[(zs[:t + 1], us[:t])]
            for i in range(model.n):
                th[i][xs[t][i]] += p
    worst = 0.0
    for (zs, us), exact in acc.items():
        point = starts[zs[0]]
        for s in range(len(us)):
            d = [tuple(strategy.action(s, i, (x, zs[:s + 1], us[:s])) for x in range(model.local_sizes[i]))
                 for i in range(model.n)]
            point = BeliefPoint(zs[s + 1], update_theta(model, point, d, us[s], zs[s + 1]))
        for i in range(model.n):
            worst = max(worst, float(np.abs(point.theta[i] - exact[i] / exact[i].sum()).max()))
    return worst


def check_xi_filter(joint: ExactJoint, model: CoupledModel) -> float:
    """Largest gap between exact posteriors and the recursive local filter."""
    worst = 0.0
    for t in range(joint.horizon):
        for i in range(joint.n):
            for (ys, zs, us), xi in exact_xi(joint, model, i, t).items():
                b = initial_xi(model, i, zs[0], ys[0])
                for s in range(1, t + 1):
                    b = update_xi(model, b, zs[s - 1], us[s - 1], ys[s])
                worst = max(worst, float(np.abs(b.xi - xi).max()))
    return worst


def check_xi_independence(joint: ExactJoint, model) -> float:
    """Product test on the stations' own posteriors given common information."""
    worst = 0.0
    for t in range(joint.horizon):
        posts = [exact_xi(joint, model, i, t) for i in range(joint.n)]
        groups = defaultdict(lambda: defaultdict(float))
        for (zs, xs, us, ys), p in joint.table.items():
            keys = []
            for i in range(joint.n):
                xi = posts[i][(tuple(y[i] for y in ys[:t + 1]), zs[:t + 1], us[:t])]
                keys.append(tuple(int(v) for v in np.rint(xi / 1e-12)))
            groups[(zs[:t + 1], us[:t])][tuple(keys)] += p
        worst = max(worst, _max_product_gap(groups, joint.n))
    return worst


def _conditional_gap(pairs):
    # pairs: list of (fine, coarse, outcome, prob); compare P(outcome | fine) with P(outcome | coarse)
    fine = defaultdict(lambda: defaultdict(float))
    coarse = defaultdict(lambda: defaultdict(float))
    link = {}
    for f, c, o, p in pairs:
        fine[f][o] += p
        coarse[c][o] += p
        link[f] = c
    worst = 0.0
    for f, dist in fine.items():
        cd = coarse[link[f]]
        fm, cm = sum(dist.values()), sum(cd.values())
        for o in set(dist) | set(cd):
            worst = max(worst, abs(dist.get(o, 0.0) / fm - cd.get(o, 0.0) / cm))
    return worst


def _conditional_mean_gap(pairs):
    fine = defaultdict(lambda: [0.0, 0.0])
    coarse = defaultdict(lambda: [0.0, 0.0])
    link = {}
    for f, c, v, p in pairs:
        fine[f][0] += p * v
        fine[f][1] += p
        coarse[c][0] += p * v
        coarse[c][1] += p
        link[f] = c
    worst = 0.0
    for f, (s, m) in fine.items():
        cs, cm = coarse[link[f]]
        worst = max(worst, abs(s / m - cs / cm))
    return worst


def check_controlled_markov(model, strategy: StrategyTable, T: int, cap: int = DEFAULT_CAP) -> float:
    """Check that each station's ``R_t = (x^i_t, z history, past actions)``
    is a controlled Markov process driven by its own action, and that the
    conditional expected cost depends on ``(R_t, u^i_t)`` only.

    Returns the largest residual over stations, stages and histories.
    """
    jm = lift(model)
    joint = exact_joint_distribution(jm, strategy, T, cap)
    worst = 0.0
    for i in range(jm.n):
        for t in range(T):
            trans, costs = [], []
            for (zs, xs, us, _), p in joint.table.items():
                r_t = (xs[t][i], zs[:t + 1], us[:t])
                own = tuple(x[i] for x in xs[:t + 1])
                own_u = tuple(u[i] for u in us[:t + 1])
                fine = (own, zs[:t + 1], us[:t], own_u)
                coarse = (r_t, us[t][i])
                if t + 1 < T:
                    nxt = (xs[t + 1][i], zs[:t + 2], us[:t + 1])
                    trans.append((fine, coarse, nxt, p))
                costs.append((fine, coarse, float(jm.cost_at(t)[(zs[t], *xs[t], *us[t])]), p))
            if trans:
                worst = max(worst, _conditional_gap(trans))
            worst = max(worst, _conditional_mean_gap(costs))
    return worst


# -- exhaustive strategy search -----------------------------------------------

def _infos_at(jm, strategy, reals, t, stations):
    keys = _theta_keys(jm, reals, t) if "markov" in strategy.patterns else {}
    per_station = {i: set() for i in stations}
    for _, zs, xs, us, ys in reals:
        for i in stations:
            per_station[i].add(information(strategy.patterns[i], t, i, zs, xs, us, ys, keys.get((zs, us))))
    return {i: sorted(v, key=repr) for i, v in per_station.items()}, keys


def _options(jm, pattern, i, info):
    z, x = _current(pattern, info)
    return jm.feasible(i, z, x)


def _last_stage(jm, strategy, reals, t, free, sign, cap):
    """Optimal last-stage actions for the free stations, one group of
    shared information at a time (groups touch disjoint realizations, so
    their contributions to the cost add)."""
    keys = _theta_keys(jm, reals, t) if strategy.needs_theta else {}
    cost_t = jm.cost_at(t)
    groups = defaultdict(list)
    for p, zs, xs, us, ys in reals:
        infos = [information(strategy.patterns[i], t, i, zs, xs, us, ys, keys.get((zs, us))) for i in range(jm.n)]
        commons = tuple(_split(strategy.patterns[i], infos[i])[0] for i in free)
        groups[commons].append((p, zs[t], xs[t], infos))
    total, chosen, count = 0.0, {}, 0
    for g in sorted(groups, key=repr):
        rows = groups[g]
        local = {i: sorted({r[3][i] for r in rows}, key=repr) for i in free}
        maps = {}
        for i in free:
            opts = [_options(jm, strategy.patterns[i], i, info) for info in local[i]]
            maps[i] = np.array(list(itertools.product(*opts)), dtype=int).reshape(-1, len(local[i]))
        count += int(np.prod([len(m) for m in maps.values()]))
        if count > cap:
            raise CombinatorialBlowup(f"last-stage search needs more than {cap} candidates")
        index = {i: {info: k for k, info in enumerate(local[i])} for i in free}
        acc = np.zeros(tuple(len(maps[i]) for i in free))
        nf = len(free)
        for p, z, x, infos in rows:
            idx = [z, *x]
            for j in range(jm.n):
                if j in free:
                    k = free.index(j)
                    col = maps[j][:, index[j][infos[j]]]
                    shape = [1] * nf
                    shape[k] = -1
                    idx.append(col.reshape(shape))
                else:
                    idx.append(strategy.action(t, j, infos[j]))
            acc = acc + p * cost_t[tuple(idx)]
        flat = (sign * acc).ravel()
        best = flat.min()
        # first candidate within rounding of the optimum
        k = int(np.argmax(flat <= best + 1e-12 * (1 + abs(best))))
        pos = np.unravel_index(k, acc.shape)
        for i, m in zip(free, pos):
            for info, a in zip(local[i], maps[i][m]):
                chosen[(i, info)] = int(a)
        total += float(acc[pos])
    return total, chosen


def _search(jm, strategy, reals, t, T, free, sign, cap, budget):
    if t == T - 1:
        val, chosen = _last_stage(jm, strategy, reals, t, free, sign, cap)
        return val, {t: chosen}
    infos, _ = _infos_at(jm, strategy, reals, t, free)
    slots = [(i, info) for i in free for info in infos[i]]
    options = [_options(jm, strategy.patterns[i], i, info) for i, info in slots]
    n_assign = int(np.prod([len(o) for o in options], dtype=float))
    budget[0] *= max(n_assign, 1)
    if budget[0] > cap:
        raise CombinatorialBlowup(f"strategy search needs at least {int(budget[0])} candidates, cap {cap}")
    cost_t = jm.cost_at(t)
    best_val, best_plan = None, None
    for assign in itertools.product(*options):
        for (i, info), a in zip(slots, assign):
            strategy.tables[i][t][info] = a
        acted = _act(jm, strategy, reals, t)
        stage = sum(p * cost_t[(zs[t], *xs[t], *us[t])] for p, zs, xs, us, _ in acted)
        nxt = _advance(jm, acted)
        val, plan = _search(jm, strategy, nxt, t + 1, T, free, sign, cap, [budget[0]])
        val += stage
        if best_val is None or sign * val < sign * best_val - 1e-12 * (1 + abs(best_val)):
            best_val = val
            best_plan = {t: dict(zip(slots, assign)), **plan}
    for i, info in slots:
        strategy.tables[i][t].pop(info, None)
    return best_val, best_plan


def _optimize(model, T, patterns, fixed: Optional[StrategyTable], free, cap):
    jm = lift(model)
    sign = -1.0 if jm.maximize else 1.0
    if T == 0:
        return 0.0, StrategyTable.empty(patterns, 0)
    strategy = StrategyTable(tuple(patterns), [[{} for _ in range(T)] for _ in range(jm.n)],
                             None if fixed is None else fixed.rules)
    if fixed is not None:
        for j in range(jm.n):
            if j not in free:
                strategy.tables[j] = [dict(d) for d in fixed.tables[j]]
    val, plan = _search(jm, strategy, _initial(jm), 0, T, list(free), sign, cap, [1.0])
    for t, chosen in plan.items():
        for (i, info), a in chosen.items():
            strategy.tables[i][t][info] = a
    if fixed is not None and fixed.rules is not None:
        strategy.rules = [fixed.rules[j] if j not in free else None for j in range(jm.n)]
    return float(val), strategy


def brute_force_optimal(model, T: int, pattern: str = "reduced", cap: int = DEFAULT_CAP):
    """Exhaustive search over deterministic strategies of one pattern.

    Returns ``(value, StrategyTable)``.  Stages are searched in order; the
    last stage is optimized separately per group of shared information.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown information pattern {pattern!r}")
    jm = lift(model)
    return _optimize(jm, T, (pattern,) * jm.n, None, list(range(jm.n)), cap)


def best_response(model, T: int, others: StrategyTable, i: int, pattern: str = "full",
                  cap: int = DEFAULT_CAP):
    """Optimal strategy of station ``i`` with the others fixed to ``others``."""
    jm = lift(model)
    patterns = list(others.patterns)
    patterns[i] = pattern
    return _optimize(jm, T, patterns, others, [i], cap)


def evaluate(model, strategy: StrategyTable, T: int) -> float:
    """Exact expected total cost (or reward) of a strategy."""
    return exact_joint_distribution(model, strategy, T).expected_cost(model)
