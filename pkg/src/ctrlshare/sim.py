"""Monte Carlo evaluation of coordinator policies.

The simulator runs the true system and, alongside it, the coordinator:
the belief is filtered from the observed joint actions only, the
prescription is read off the policy at that belief and applied to the
sampled local states.  Average reward is estimated by batch means.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .belief import BeliefPoint, initial_points, update_theta
from .dp import CoordinatorPolicy
from .mab import MabSolution, mab_filter, mab_model, prescription_of
from .model import CoupledModel

DEFAULT_BATCHES = 100


@dataclass
class SimReport:
    policy_id: str
    steps: int
    seed: Optional[int]
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    batches: int
    objective_sense: str
    visit_frequencies: dict
    checkpoints: list = field(default_factory=list)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["checkpoints"] = [{"step": s, "belief": b} for s, b in self.checkpoints]
        return doc


def batch_means(rewards: np.ndarray, batches: int = DEFAULT_BATCHES, level: float = 0.95):
    """Mean, batch-means standard error and t confidence interval."""
    rewards = np.asarray(rewards, dtype=float)
    mean = float(rewards.mean()) if rewards.size else 0.0
    batches = min(batches, rewards.size)
    if batches < 2:
        return mean, 0.0, (mean, mean), batches
    size = rewards.size // batches
    means = rewards[:size * batches].reshape(batches, size).mean(axis=1)
    stderr = float(means.std(ddof=1) / np.sqrt(batches))
    half = float(stats.t.ppf(0.5 + level / 2, batches - 1)) * stderr
    return mean, stderr, (mean - half, mean + half), batches


def _policy_id(policy) -> str:
    if isinstance(policy, MabSolution):
        return f"mab-{policy.provenance}(p1={policy.params.p1}, p2={policy.params.p2}, n_max={policy.n_max})"
    digest = hashlib.sha256(json.dumps(policy.to_json(), sort_keys=True).encode()).hexdigest()
    return f"coordinator-{digest[:12]}"


def _frequencies(counts: Counter, total: int) -> dict:
    return {k: counts[k] / total for k in sorted(counts)}


def simulate_policy(model: Optional[CoupledModel], policy, steps: int, seed: Optional[int] = None, *,
                    batches: int = DEFAULT_BATCHES, snap: bool = True,
                    check_every: Optional[int] = None) -> SimReport:
    """Run ``policy`` online for ``steps`` stages and summarize the stage rewards.

    ``policy`` is a :class:`CoordinatorPolicy` (for ``model``) or a
    :class:`MabSolution` (``model`` may then be None).  With
    ``check_every`` the report keeps the online belief every that many
    steps and the action history, for :func:`replay_beliefs`.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    if isinstance(policy, MabSolution):
        return _simulate_mab(policy, steps, seed, batches, check_every)
    if not isinstance(policy, CoordinatorPolicy):
        raise TypeError(f"cannot simulate a {type(policy).__name__}")
    return _simulate_generic(model, policy, steps, seed, batches, snap, check_every)


def _simulate_mab(sol: MabSolution, steps, seed, batches, check_every):
    rng = np.random.default_rng(seed)
    p1, p2 = sol.params.p1, sol.params.p2
    w1 = rng.random(steps) < p1
    w2 = rng.random(steps) < p2
    x1, x2 = int(rng.random() < p1), int(rng.random() < p2)
    # beliefs take finitely many values; index them and cache their moves
    qs, ids, acts, nxt = [], {}, [], {}

    def intern(q):
        j = ids.get(q)
        if j is None:
            j = ids[q] = len(qs)
            qs.append(q)
            acts.append(sol.action(q))
        return j

    j = intern((p1, p2))
    rewards = np.zeros(steps)
    visits = np.zeros(steps, dtype=np.int64)
    checkpoints, history = [], []
    for t in range(steps):
        s = acts[j]
        if check_every and t % check_every == 0:
            checkpoints.append((t, [qs[j][0], qs[j][1]]))
        u1, u2 = x1 & s[0], x2 & s[1]
        rewards[t] = u1 ^ u2
        visits[t] = j
        if check_every:
            history.append((s, (u1, u2)))
        x1 = min(x1 - u1 * (1 - u2) + int(w1[t]), 1)
        x2 = min(x2 - u2 * (1 - u1) + int(w2[t]), 1)
        key = (j, u1, u2)
        k = nxt.get(key)
        if k is None:
            k = nxt[key] = intern(mab_filter(sol.params, qs[j], (u1, u2), s))
        j = k
    counts = Counter()
    for jj, c in enumerate(np.bincount(visits, minlength=len(qs))):
        if c:
            counts[sol.state_of(qs[jj]).label] += int(c)
    mean, se, ci, b = batch_means(rewards, batches)
    rep = SimReport(_policy_id(sol), steps, seed, mean, se, ci[0], ci[1], b, "maximize",
                    _frequencies(counts, steps), checkpoints)
    rep.history = history
    return rep


def _simulate_generic(model, policy, steps, seed, batches, snap, check_every):
    rng = np.random.default_rng(seed)
    n = model.n
    shared_cdf, local_cdf, init_z, init_x, _ = model._cdfs
    draws = rng.random((steps, 1 + n))
    z = min(int(np.searchsorted(init_z, draws[0, 0], side="right")), model.shared_size - 1)
    x = [min(int(np.searchsorted(init_x[i][z], draws[0, 1 + i], side="right")), model.local_sizes[i] - 1)
         for i in range(n)]
    point = dict((p.z, p) for _, p in initial_points(model))[z]
    horizon = None if policy.stationary else len(policy.stages)
    if horizon is not None and steps > horizon:
        raise ValueError(f"policy covers {horizon} stages, asked for {steps}")
    rewards = np.zeros(steps)
    counts = Counter()
    presc_memo, next_memo = {}, {}
    checkpoints, history = [], []
    for t in range(steps):
        key = point.key(policy.quantum)
        mk = (key, 0 if policy.stationary else t)
        d = presc_memo.get(mk)
        if d is None:
            d = presc_memo[mk] = policy.prescription(point, t, snap=snap)
        if check_every and t % check_every == 0:
            checkpoints.append((t, point.to_json()))
        u = tuple(int(d[i][x[i]]) for i in range(n))
        rewards[t] = model.cost_at(t)[(z, *x, *u)]
        counts[repr(point)] += 1
        r = draws[t + 1] if t + 1 < steps else rng.random(1 + n)
        z2 = min(int(np.searchsorted(shared_cdf[(z, *u)], r[0], side="right")), model.shared_size - 1)
        x = [min(int(np.searchsorted(local_cdf[i][(z, x[i], *u)], r[1 + i], side="right")),
                 model.local_sizes[i] - 1) for i in range(n)]
        if check_every:
            history.append((u, z2))
        nk = (mk, u, z2)
        nxt = next_memo.get(nk)
        if nxt is None:
            nxt = next_memo[nk] = BeliefPoint(z2, update_theta(model, point, d, u, z2))
        point, z = nxt, z2
    mean, se, ci, b = batch_means(rewards, batches)
    rep = SimReport(_policy_id(policy), steps, seed, mean, se, ci[0], ci[1], b, model.objective_sense,
                    _frequencies(counts, steps), checkpoints)
    rep.history = history
    return rep


def replay_beliefs(model: Optional[CoupledModel], policy, report: SimReport, snap: bool = True) -> list:
    """Recompute the beliefs at the report's checkpoints from the common
    information alone (the joint actions, plus shared states for generic
    models), using the generic filter.  Returns ``[(step, belief_json)]``.
    """
    history = getattr(report, "history", None)
    if not history:
        raise ValueError("report has no recorded history; simulate with check_every")
    wanted = {s for s, _ in report.checkpoints}
    out = []
    if isinstance(policy, MabSolution):
        model = mab_model(policy.params)
        point = initial_points(model)[0][1]
        for t, (_, u) in enumerate(history):
            q = (float(point.theta[0][1]), float(point.theta[1][1]))
            if t in wanted:
                out.append((t, [q[0], q[1]]))
            d = prescription_of(policy.action(q))
            point = BeliefPoint(0, update_theta(model, point, d, u, 0))
        return out
    z0 = report.checkpoints[0][1]["z"]
    point = dict((p.z, p) for _, p in initial_points(model))[z0]
    for t, (u, z2) in enumerate(history):
        if t in wanted:
            out.append((t, point.to_json()))
        d = policy.prescription(point, t, snap=snap)
        point = BeliefPoint(z2, update_theta(model, point, d, u, z2))
    return out
