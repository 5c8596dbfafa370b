"""Two-user multiaccess broadcast channel.

Each user holds at most one packet; a packet arrives at user ``i`` with
probability ``p_i`` per slot and is dropped when the buffer is full.  A
slot succeeds when exactly one user transmits.  The coordinator state is
the pair ``q = (q1, q2)`` of probabilities that each buffer is nonempty,
and the coordinator picks ``s = (s1, s2)``: user ``i`` transmits iff it
has a packet and ``s_i = 1``.

From ``q = (p1, p2)`` the beliefs stay in a countable set indexed by
:class:`RState`; ``N(i, n)`` is the state whose user-``i`` coordinate has
drifted for ``n`` slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .belief import BeliefPoint, update_theta
from .exceptions import InconsistentObservation, NonConvergence
from .model import MAXIMIZE, CoupledModel

ACTIONS = ((1, 0), (0, 1), (1, 1))
"""Undominated coordinator actions, in tie-breaking order."""

Q_TOL = 1e-12


@dataclass(frozen=True)
class MabParams:
    p1: float
    p2: float

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
            object.__setattr__(self, name, v)

    @classmethod
    def symmetric(cls, p):
        return cls(p, p)

    @property
    def is_symmetric(self) -> bool:
        return self.p1 == self.p2

    def p(self, i: int) -> float:
        return self.p1 if i == 1 else self.p2


def _params(params) -> MabParams:
    if isinstance(params, MabParams):
        return params
    if np.isscalar(params):
        return MabParams(params, params)
    return MabParams(*params)


def mab_model(params) -> CoupledModel:
    """The channel as a coupled model: singleton shared state, binary buffers.

    Buffer update: ``x' = min(x - u_i (1 - u_j) + w, 1)`` clipped at 0, so
    the kernel is total even for the infeasible ``u_i > x``.
    """
    prm = _params(params)
    local = []
    for i, p in ((0, prm.p1), (1, prm.p2)):
        k = np.zeros((1, 2, 2, 2, 2))
        for x in range(2):
            for u1 in range(2):
                for u2 in range(2):
                    mine, other = (u1, u2) if i == 0 else (u2, u1)
                    base = x - mine * (1 - other)
                    for w, pw in ((0, 1 - p), (1, p)):
                        k[0, x, u1, u2, min(max(base + w, 0), 1)] += pw
        local.append(k)
    shared = np.ones((1, 2, 2, 1))
    cost = np.zeros((1, 2, 2, 2, 2))
    for u1 in range(2):
        for u2 in range(2):
            cost[0, :, :, u1, u2] = u1 ^ u2
    feas = [np.array([[[True, False], [True, True]]]) for _ in range(2)]
    init = [np.array([[1 - prm.p1, prm.p1]]), np.array([[1 - prm.p2, prm.p2]])]
    return CoupledModel(shared, local, cost, np.ones(1), init, feas, None, MAXIMIZE,
                        name=f"mab(p1={prm.p1}, p2={prm.p2})")


def apply_A(params, i: int, q: float, n: int = 1) -> float:
    """``n``-fold arrival drift ``1 - (1 - p_i)^n (1 - q)`` of user ``i``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = _params(params).p(i)
    if n == 0:
        return float(q)
    return 1.0 - (1.0 - p) ** n * (1.0 - q)


def mab_filter(params, q, u, s) -> tuple:
    """Next belief pair after action ``s`` produced transmissions ``u``."""
    prm = _params(params)
    q1, q2 = q
    u, s = tuple(u), tuple(s)
    if any(ui > si for ui, si in zip(u, s)):
        raise ValueError(f"transmissions {u} inconsistent with action {s}")
    if s == (0, 0):
        return (apply_A(prm, 1, q1), apply_A(prm, 2, q2))
    if s == (1, 0):
        return (prm.p1, apply_A(prm, 2, q2))
    if s == (0, 1):
        return (apply_A(prm, 1, q1), prm.p2)
    if u == (1, 1):
        return (1.0, 1.0)
    return (prm.p1, prm.p2)


def prescription_of(s) -> tuple:
    """Joint prescription on the binary buffers for coordinator action ``s``."""
    return tuple((0, int(si)) for si in s)


def validate_mab_consistency(params, samples: int = 100, seed: int = 0, model: Optional[CoupledModel] = None,
                             tol: float = 1e-12) -> list:
    """Compare the generic filter on the channel model with :func:`mab_filter`.

    Checks every consistent ``(s, u)`` at ``samples`` random belief pairs
    plus the reachable-set anchors.  Returns mismatches; empty means agree.
    """
    prm = _params(params)
    model = mab_model(prm) if model is None else model
    rng = np.random.default_rng(seed)
    qs = [(prm.p1, prm.p2), (1.0, 1.0), (prm.p1, 1.0), (1.0, prm.p2)]
    qs += [tuple(map(float, rng.random(2))) for _ in range(samples)]
    report = []
    for q in qs:
        point = BeliefPoint(0, [[1 - q[0], q[0]], [1 - q[1], q[1]]])
        for s in ((0, 0), (1, 0), (0, 1), (1, 1)):
            d = prescription_of(s)
            for u in ((0, 0), (1, 0), (0, 1), (1, 1)):
                prob = 1.0
                for qi, si, ui in zip(q, s, u):
                    p1 = qi * si
                    prob *= p1 if ui else 1 - p1
                if prob <= 0:
                    continue
                expected = mab_filter(prm, q, u, s)
                try:
                    theta = update_theta(model, point, d, u, 0)
                except InconsistentObservation as exc:
                    report.append({"q": q, "s": s, "u": u, "error": str(exc)})
                    continue
                got = (float(theta[0][1]), float(theta[1][1]))
                err = max(abs(g - e) for g, e in zip(got, expected))
                if err > tol or abs(theta[0].sum() - 1) > tol or abs(theta[1].sum() - 1) > tol:
                    report.append({"q": q, "s": s, "u": u, "expected": expected, "got": got, "error": err})
    return report


# -- the countable reachable set --------------------------------------------

@dataclass(frozen=True, order=True)
class RState:
    """Symbolic index into the reachable belief set.

    ``kind`` is ``"star"`` for (1, 1), ``"zero"`` for (p1, p2), ``"n"`` for
    ``N(side, n)`` and ``"inf"`` for the limit of ``N(side, n)``.
    """

    kind: str
    side: int = 0
    n: int = 0

    def __post_init__(self):
        if self.kind not in ("star", "zero", "n", "inf"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        if self.kind in ("n", "inf") and self.side not in (1, 2):
            raise ValueError("side must be 1 or 2")
        if self.kind == "n" and self.n < 1:
            raise ValueError("N states need n >= 1")

    @classmethod
    def star(cls):
        return cls("star")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def N(cls, side, n):
        return cls("n", side, n)

    @classmethod
    def infty(cls, side):
        return cls("inf", side)

    @property
    def label(self) -> str:
        if self.kind in ("star", "zero"):
            return self.kind
        if self.kind == "inf":
            return f"inf{self.side}"
        return f"n{self.side}_{self.n}"

    @classmethod
    def from_label(cls, label: str) -> "RState":
        if label in ("star", "zero"):
            return cls(label)
        if label.startswith("inf"):
            return cls.infty(int(label[3:]))
        side, n = label[1:].split("_")
        return cls.N(int(side), int(n))

    def q(self, params) -> tuple:
        prm = _params(params)
        if self.kind == "star":
            return (1.0, 1.0)
        if self.kind == "zero":
            return (prm.p1, prm.p2)
        if self.kind == "inf":
            return (1.0, prm.p2) if self.side == 1 else (prm.p1, 1.0)
        if self.side == 1:
            return (apply_A(prm, 1, prm.p1, self.n), prm.p2)
        return (prm.p1, apply_A(prm, 2, prm.p2, self.n))

    def __str__(self):
        return self.label


def _qkey(q):
    return (round(q[0] / Q_TOL), round(q[1] / Q_TOL))


def reachable_set(params, n_max: int) -> list:
    """Reachable beliefs truncated at ``n_max`` drift steps per side.

    Ordered Star, Zero, N(1, 1..n_max), N(2, 1..n_max), Infty(1), Infty(2);
    states whose belief pair coincides with an earlier one are dropped.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    candidates = [RState.star(), RState.zero()]
    candidates += [RState.N(1, n) for n in range(1, n_max + 1)]
    candidates += [RState.N(2, n) for n in range(1, n_max + 1)]
    candidates += [RState.infty(1), RState.infty(2)]
    seen, out = set(), []
    for st in candidates:
        k = _qkey(st.q(params))
        if k not in seen:
            seen.add(k)
            out.append(st)
    return out


def successors(params, state: RState, action, n_max: int) -> list:
    """``[(probability, reward_share, RState)]`` after ``action`` at ``state``.

    Drift beyond ``n_max`` is folded into the matching Infty state.  The
    reward is returned separately by :func:`expected_reward`.
    """
    prm = _params(params)
    q1, q2 = state.q(prm)

    def drift(side):
        # state reached by letting user `side` drift one more slot while
        # the other user's buffer was just emptied
        if state.kind == "star" or (state.kind == "inf" and state.side == side):
            return RState.infty(side)
        if state.kind == "n" and state.side == side:
            return RState.N(side, state.n + 1) if state.n + 1 <= n_max else RState.infty(side)
        return RState.N(side, 1)

    if action == (1, 0):
        return [(1.0, drift(2))]
    if action == (0, 1):
        return [(1.0, drift(1))]
    if action == (1, 1):
        both = q1 * q2
        out = []
        if both > 0:
            out.append((both, RState.star()))
        if both < 1:
            out.append((1.0 - both, RState.zero()))
        return out
    raise ValueError(f"action {action} is not one of {ACTIONS}")


def expected_reward(q, action) -> float:
    q1, q2 = q
    if action == (1, 0):
        return q1
    if action == (0, 1):
        return q2
    return q1 + q2 - 2 * q1 * q2


def default_n_max(params) -> int:
    prm = _params(params)
    return 60 if min(prm.p1, prm.p2) < 0.15 else 30


@dataclass
class MabSolution:
    """Gain, relative values and policy over the reachable set."""

    params: MabParams
    gain: float
    values: dict
    policy: dict
    provenance: str
    n_max: int
    meta: dict = field(default_factory=dict)
    tail: Optional[Callable] = field(default=None, repr=False)
    rule: Optional[Callable] = field(default=None, repr=False)

    def value(self, state: RState) -> float:
        if state in self.values:
            return self.values[state]
        if state.kind == "n":
            if self.tail is not None:
                return self.tail(state)
            if state.n > self.n_max:
                return self.values[RState.infty(state.side)]
        return self.values[self._canonical(state)]

    def _canonical(self, state):
        k = _qkey(state.q(self.params))
        for st in self.values:
            if _qkey(st.q(self.params)) == k:
                return st
        raise KeyError(state)

    def state_of(self, q) -> RState:
        """Stored state closest to belief pair ``q`` (exact match if present)."""
        memo = self.__dict__.setdefault("_state_memo", {})
        k = _qkey(q)
        if k not in memo:
            states = list(self.policy)
            qs = np.array([st.q(self.params) for st in states])
            dist = np.abs(qs - np.asarray(q, dtype=float)).sum(axis=1)
            memo[k] = states[int(np.argmin(dist))]
        return memo[k]

    def action(self, q) -> tuple:
        """Coordinator action at an arbitrary belief pair."""
        if self.rule is not None:
            memo = self.__dict__.setdefault("_rule_memo", {})
            k = _qkey(q)
            if k not in memo:
                memo[k] = self.rule(q)
            return memo[k]
        return self.policy[self.state_of(q)]

    def to_json(self) -> dict:
        return {
            "p": [self.params.p1, self.params.p2],
            "n_max": self.n_max,
            "provenance": self.provenance,
            "gain": self.gain,
            "values": {st.label: v for st, v in self.values.items()},
            "policy": {st.label: list(a) for st, a in self.policy.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MabSolution":
        params = MabParams(*doc["p"])
        values = {RState.from_label(k): float(v) for k, v in doc["values"].items()}
        policy = {RState.from_label(k): tuple(int(a) for a in v) for k, v in doc["policy"].items()}
        return cls(params, float(doc["gain"]), values, policy, doc.get("provenance", "rvi"),
                   int(doc["n_max"]), doc.get("meta", {}))


def _greedy(values, q, succ, tol):
    best, best_a = None, None
    for a in ACTIONS:
        v = expected_reward(q, a) + sum(p * values[s] for p, s in succ[a])
        if best is None or v > best + tol * (1 + abs(best)):
            best, best_a = v, a
    return best, best_a


def mab_relative_vi(params, n_max: Optional[int] = None, tol: float = 1e-9, *, max_iter: int = 10**5,
                    aperiodicity: float = 0.5) -> MabSolution:
    """Relative value iteration over the truncated reachable set.

    Uses the three undominated actions; ``(0, 0)`` is never better than
    ``(1, 0)``.  Values are relative to ``Zero``.  The iteration is blended,
    ``h <- (1-a) h + a T h``, so the period-two round-robin cycle does not
    stall convergence; the stopping rule is ``span(T h - h) <= tol``.
    """
    prm = _params(params)
    n_max = default_n_max(prm) if n_max is None else n_max
    states = reachable_set(prm, n_max)
    canon = {_qkey(st.q(prm)): j for j, st in enumerate(states)}
    m = len(states)
    idx = {st: j for j, st in enumerate(states)}
    rewards = np.zeros((len(ACTIONS), m))
    trans = np.zeros((len(ACTIONS), m, m))
    for j, st in enumerate(states):
        q = st.q(prm)
        for a_i, a in enumerate(ACTIONS):
            rewards[a_i, j] = expected_reward(q, a)
            for p, nxt in successors(prm, st, a, n_max):
                k = idx.get(nxt)
                if k is None:
                    k = canon[_qkey(nxt.q(prm))]
                trans[a_i, j, k] += p
    ref = idx.get(RState.zero(), canon[_qkey((prm.p1, prm.p2))])
    h = np.zeros(m)
    for it in range(1, max_iter + 1):
        q_all = rewards + trans @ h
        th = q_all.max(axis=0)
        diff = th - h
        span = float(diff.max() - diff.min())
        if span <= tol:
            break
        h = (1 - aperiodicity) * h + aperiodicity * th
        h -= h[ref]
    else:
        raise NonConvergence(f"MAB relative value iteration did not converge in {max_iter} sweeps "
                             f"(span {span:g})", residual=span)
    gain = float(diff[ref])
    q_all = rewards + trans @ h
    best = q_all.max(axis=0)
    tie = 1e-9 * (1 + np.abs(best))
    choice = np.argmax(q_all >= best - tie, axis=0)
    values = {st: float(h[j]) for j, st in enumerate(states)}
    policy = {st: ACTIONS[int(choice[j])] for j, st in enumerate(states)}
    meta = {"iterations": it, "span": span, "states": m}
    return MabSolution(prm, gain, values, policy, "rvi", n_max, meta)


# -- closed form for symmetric arrivals ----------------------------------------

def phi(n: int, x: float) -> float:
    """Threshold polynomial ``1 + (1-x)^2 - (3+x)(1-x)^(n+1)``."""
    return 1.0 + (1.0 - x) ** 2 - (3.0 + x) * (1.0 - x) ** (n + 1)


def zeta(x: float) -> float:
    return 1.0 + x * x + x ** 3


def alpha_root(n: int, tol: float = 1e-12) -> float:
    """Root of ``phi(n, .)`` in [0, 1] by bisection (phi is -1 at 0, 1 at 1)."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(n, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tau() -> float:
    """Root of ``x = (1 - x)^2`` in [0, 1]."""
    return (3.0 - math.sqrt(5.0)) / 2.0


def regime(p: float, max_depth: int = 10_000) -> tuple:
    """Which closed-form case covers ``p``.

    Returns ``(case, m)``: case 1 for ``p`` in (tau, 1], case 2 for
    (alpha_1, tau], case 3 with ``alpha_{m+1} < p <= alpha_m``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p={p} must lie in (0, 1]")
    if p > tau():
        return 1, 0
    if p > alpha_root(1):
        return 2, 0
    for m in range(1, max_depth + 1):
        if p > alpha_root(m + 1):
            return 3, m
    raise ValueError(f"p={p} lies below alpha_{max_depth + 1}; raise max_depth")


def _policy_threshold_index(p, max_depth):
    # n >= 0 with alpha_{n+1} < p <= alpha_n; alpha_0 = 1/sqrt(2)
    for n in range(0, max_depth + 1):
        if p > alpha_root(n + 1):
            return n
    raise ValueError(f"p={p} lies below alpha_{max_depth + 1}")


def optimal_actions(p: float, q, max_depth: int = 10_000) -> tuple:
    """Actions prescribed by the closed-form optimal policy at ``q``.

    Ties are returned as more than one action.
    """
    q1, q2 = q
    eq = abs(q1 - q2) <= Q_TOL
    if p >= tau():
        if eq:
            return ((1, 0), (0, 1))
        return ((1, 0),) if q1 > q2 else ((0, 1),)
    n = _policy_threshold_index(p, max_depth)
    thr = apply_A(p, 1, p, n) + Q_TOL
    if q1 <= thr and q2 <= thr:
        return ((1, 1),)
    if q1 > max(thr, q2 + Q_TOL):
        return ((1, 0),)
    if q2 > max(thr, q1 + Q_TOL):
        return ((0, 1),)
    return ((1, 0), (0, 1))


def closed_form(p: float, n_max: Optional[int] = None, max_depth: int = 10_000, *,
                literal_w: bool = False) -> MabSolution:
    """Exact gain, relative values and policy for symmetric arrivals ``p``.

    Below ``alpha_1`` the values at ``(p, A^n p)``, ``n <= m``, are
    ``(1-p) A^(n-1) p (J/p - 1) + v0``, the form that gives ``v^1 = J`` and
    satisfies the fixed point.  ``literal_w=True`` uses ``J/p - (1-p)``
    instead, which does neither; it is kept for comparison.
    """
    case, m = regime(p, max_depth)
    prm = MabParams(p, p)
    n_max = default_n_max(prm) if n_max is None else n_max
    Ap = apply_A(p, 1, p)
    if case in (1, 2):
        gain = Ap
        v_star = 2 - Ap
        v0 = p if case == 1 else 1 - Ap

        def v_n(n):
            return apply_A(p, 1, p, n)
    else:
        z = zeta(p)
        shift = (1 - p) if literal_w else 1.0
        gain = p * (1 - phi(0, p) / z)
        v_star = 2 - gain
        v0 = 2 - p - (1 + (1 - p) ** 2) / z

        def v_n(n):
            if n <= m:
                return (1 - p) * apply_A(p, 1, p, n - 1) * (gain / p - shift) + v0
            return apply_A(p, 1, p, n)
    v_inf = 1.0
    values = {RState.star(): v_star, RState.zero(): v0}
    for side in (1, 2):
        for n in range(1, n_max + 1):
            values[RState.N(side, n)] = v_n(n)
    values[RState.infty(1)] = v_inf
    values[RState.infty(2)] = v_inf
    states = reachable_set(prm, n_max)
    values = {st: values[st] for st in states}

    def rule(q):
        return optimal_actions(p, q, max_depth)[0]

    policy = {st: rule(st.q(prm)) for st in states}
    meta = {"case": case, "m": m}
    return MabSolution(prm, gain, values, policy, "closed-form", n_max, meta,
                       tail=lambda st: v_n(st.n), rule=rule)


def verify_fixed_point(p: float, sol: MabSolution, n_max: Optional[int] = None, tol: float = 1e-9) -> dict:
    """Check ``v^n + J = max(a^n, b^n, c^n)`` at every reachable index.

    ``a``, ``b``, ``c`` are the values of actions (1,0), (0,1), (1,1) at
    ``(p, A^n p)`` computed from ``sol``'s values; index ``*`` is (1,1),
    ``0`` is (p,p) and ``inf`` is (p,1).  The report lists residuals and
    the states where ``sol.policy`` is not among the maximizers.
    """
    n_max = sol.n_max if n_max is None else n_max
    J = sol.gain

    def v(n):
        if n == "*":
            return sol.value(RState.star())
        if n == 0:
            return sol.value(RState.zero())
        if n == "inf":
            return sol.value(RState.infty(2))
        return sol.value(RState.N(2, n))

    v_star, v0, v1, v_inf = v("*"), v(0), v(1), v("inf")
    rows = []
    table = [("*", RState.star(), 1 + v_inf, 1 + v_inf, v_star)]
    table.append((0, RState.zero(), p + v1, p + v1, 2 * p * (1 - p) + p * p * v_star + (1 - p * p) * v0))
    for n in range(1, n_max + 1):
        An = apply_A(p, 1, p, n)
        table.append((n, RState.N(2, n), p + v(n + 1), An + v1,
                      p + An - 2 * p * An + p * An * v_star + (1 - p * An) * v0))
    table.append(("inf", RState.infty(2), p + v_inf, 1 + v1, 1 - p + p * v_star + (1 - p) * v0))
    max_res = 0.0
    mismatches = []
    for n, st, a, b, c in table:
        lhs = v(n) + J
        best = max(a, b, c)
        res = abs(lhs - best)
        max_res = max(max_res, res)
        maximizers = [act for act, val in zip(ACTIONS, (a, b, c)) if val >= best - tol]
        chosen = sol.policy.get(st)
        if chosen is None:
            chosen = sol.action(st.q((p, p)))
        ok = tuple(chosen) in maximizers
        if not ok:
            mismatches.append({"index": str(n), "state": st.label, "policy": list(chosen),
                               "maximizers": [list(x) for x in maximizers]})
        rows.append({"index": str(n), "state": st.label, "a": a, "b": b, "c": c, "lhs": lhs,
                     "residual": res, "maximizers": [list(x) for x in maximizers], "policy": list(chosen)})
    b_inf = 1 + v1
    return {
        "p": p,
        "gain": J,
        "max_residual": max_res,
        "ok": max_res <= tol and not mismatches,
        "mismatches": mismatches,
        "rows": rows,
        "infinity_check": {"v_inf_plus_gain": v_inf + J, "b_inf": b_inf, "two_gain": 2 * J,
                           "matches_b_inf": abs(v_inf + J - b_inf) <= tol,
                           "matches_two_gain": abs(v_inf + J - 2 * J) <= tol},
    }


def recurrent_class(params, policy: Callable, start: Optional[RState] = None, n_max: int = 30) -> set:
    """States visited infinitely often under a deterministic policy.

    ``policy(state) -> action``.  Computes the reachable set from ``start``
    and keeps the states that can reach themselves again and are reachable
    from every state they reach (the closed classes).
    """
    prm = _params(params)
    start = RState.zero() if start is None else start
    graph, stack = {}, [start]
    while stack:
        st = stack.pop()
        if st in graph:
            continue
        graph[st] = {s for p, s in successors(prm, st, policy(st), n_max) if p > 0}
        stack.extend(graph[st] - set(graph))

    def reach(src):
        seen, todo = set(), [src]
        while todo:
            s = todo.pop()
            for t in graph[s]:
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
        return seen

    closure = {s: reach(s) for s in graph}
    return {s for s in graph if s in closure[s] and all(s in closure[t] for t in closure[s])}


def is_closed(params, states, policy: Callable, n_max: int = 30) -> bool:
    """True iff no state in ``states`` can leave the set under ``policy``."""
    prm = _params(params)
    states = set(states)
    return all(nxt in states for st in states for p, nxt in successors(prm, st, policy(st), n_max) if p > 0)
