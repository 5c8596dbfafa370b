"""Finite-space coupled subsystems with control sharing.

A :class:`CoupledModel` stores the shared-state kernel ``P(z' | z, u)``,
one local kernel ``P(x' | z, x^i, u)`` per subsystem, the stage cost
``c(z, x, u)`` and the initial distributions.  Joint actions ``u`` are
tuples with one entry per subsystem; every tensor is indexed with the
joint action unpacked, e.g. ``shared_kernel[(z, *u)]`` is a row over
``z'``.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import InfeasibleActionError, ModelFormatError, ModelValidationError

ROW_TOL = 1e-12

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CoupledModel:
    """Coupled subsystems sharing a state ``z`` and each other's actions.

    Parameters
    ----------
    shared_kernel : array, shape (nz, nu_1, ..., nu_n, nz)
    local_kernels : sequence of arrays, shape (nz, nx_i, nu_1, ..., nu_n, nx_i)
    cost : array of shape (nz, nx_1, ..., nx_n, nu_1, ..., nu_n), or a list
        of such arrays for a time-varying cost.
    initial_shared : array, shape (nz,)
    initial_local : sequence of arrays, shape (nz, nx_i)
    feasible_actions : sequence of boolean arrays, shape (nz, nx_i, nu_i)
        Defaults to every action feasible everywhere.
    observation_kernels : sequence of arrays, shape (nx_i, ny_i), optional
        Present only for the partial observation model.
    objective_sense : {"minimize", "maximize"}
    """

    shared_kernel: np.ndarray
    local_kernels: tuple
    cost: object
    initial_shared: np.ndarray
    initial_local: tuple
    feasible_actions: Optional[tuple] = None
    observation_kernels: Optional[tuple] = None
    objective_sense: str = MINIMIZE
    name: str = ""

    def __post_init__(self):
        set_ = functools.partial(object.__setattr__, self)
        set_("shared_kernel", _frozen(self.shared_kernel))
        set_("local_kernels", tuple(_frozen(k) for k in self.local_kernels))
        if isinstance(self.cost, (list, tuple)):
            set_("cost", tuple(_frozen(c) for c in self.cost))
        else:
            set_("cost", _frozen(self.cost))
        set_("initial_shared", _frozen(self.initial_shared))
        set_("initial_local", tuple(_frozen(p) for p in self.initial_local))
        n = len(self.local_kernels)
        if n == 0:
            raise ValueError("a model needs at least one subsystem")
        nz = self.shared_kernel.shape[0]
        nu = self.shared_kernel.shape[1:-1]
        if len(nu) != n or self.shared_kernel.shape[-1] != nz:
            raise ValueError(
                f"shared_kernel shape {self.shared_kernel.shape} does not match "
                f"{n} subsystems; expected (nz, nu_1..nu_n, nz)")
        nx = []
        for i, k in enumerate(self.local_kernels):
            if k.ndim != n + 3 or k.shape[0] != nz or k.shape[2:-1] != nu or k.shape[1] != k.shape[-1]:
                raise ValueError(
                    f"local_kernels[{i}] has shape {k.shape}; expected "
                    f"({nz}, nx, {', '.join(map(str, nu))}, nx)")
            nx.append(k.shape[1])
        nx = tuple(nx)
        expected_cost = (nz, *nx, *nu)
        for t, c in enumerate(self.cost if self.time_varying else (self.cost,)):
            if c.shape != expected_cost:
                raise ValueError(f"cost[{t}] has shape {c.shape}; expected {expected_cost}")
        if self.initial_shared.shape != (nz,):
            raise ValueError(f"initial_shared has shape {self.initial_shared.shape}; expected ({nz},)")
        if len(self.initial_local) != n:
            raise ValueError(f"initial_local needs {n} entries, got {len(self.initial_local)}")
        for i, p in enumerate(self.initial_local):
            if p.shape != (nz, nx[i]):
                raise ValueError(f"initial_local[{i}] has shape {p.shape}; expected ({nz}, {nx[i]})")
        if self.feasible_actions is None:
            feas = tuple(np.ones((nz, nx[i], nu[i]), dtype=bool) for i in range(n))
        else:
            feas = tuple(np.array(f, dtype=bool) for f in self.feasible_actions)
            if len(feas) != n:
                raise ValueError(f"feasible_actions needs {n} entries, got {len(feas)}")
            for i, f in enumerate(feas):
                if f.shape != (nz, nx[i], nu[i]):
                    raise ValueError(
                        f"feasible_actions[{i}] has shape {f.shape}; expected ({nz}, {nx[i]}, {nu[i]})")
        for f in feas:
            f.setflags(write=False)
        set_("feasible_actions", feas)
        if self.observation_kernels is not None:
            obs = tuple(_frozen(o) for o in self.observation_kernels)
            if len(obs) != n:
                raise ValueError(f"observation_kernels needs {n} entries, got {len(obs)}")
            for i, o in enumerate(obs):
                if o.ndim != 2 or o.shape[0] != nx[i]:
                    raise ValueError(f"observation_kernels[{i}] has shape {o.shape}; expected ({nx[i]}, ny)")
            set_("observation_kernels", obs)
        if self.objective_sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"objective_sense must be {MINIMIZE!r} or {MAXIMIZE!r}")

    # -- shape information -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.local_kernels)

    @property
    def shared_size(self) -> int:
        return self.shared_kernel.shape[0]

    @property
    def local_sizes(self) -> tuple:
        return tuple(k.shape[1] for k in self.local_kernels)

    @property
    def action_sizes(self) -> tuple:
        return tuple(self.shared_kernel.shape[1:-1])

    @property
    def observation_sizes(self) -> Optional[tuple]:
        if self.observation_kernels is None:
            return None
        return tuple(o.shape[1] for o in self.observation_kernels)

    @property
    def time_varying(self) -> bool:
        return isinstance(self.cost, tuple)

    @property
    def maximize(self) -> bool:
        return self.objective_sense == MAXIMIZE

    def cost_at(self, t: int = 0) -> np.ndarray:
        """Cost tensor for 0-based stage ``t``."""
        if not self.time_varying:
            return self.cost
        if not 0 <= t < len(self.cost):
            raise IndexError(f"no cost tensor for stage {t} (have {len(self.cost)})")
        return self.cost[t]

    def joint_actions(self):
        return itertools.product(*(range(m) for m in self.action_sizes))

    def joint_local_states(self):
        return itertools.product(*(range(m) for m in self.local_sizes))

    def feasible(self, i: int, z: int, x: int) -> tuple:
        return tuple(int(a) for a in np.flatnonzero(self.feasible_actions[i][z, x]))

    def with_observations(self, observation_kernels) -> "CoupledModel":
        return CoupledModel(
            self.shared_kernel, self.local_kernels, self.cost, self.initial_shared,
            self.initial_local, self.feasible_actions, observation_kernels,
            self.objective_sense, self.name)

    @functools.cached_property
    def _cdfs(self):
        shared = np.cumsum(self.shared_kernel, axis=-1)
        local = tuple(np.cumsum(k, axis=-1) for k in self.local_kernels)
        init_z = np.cumsum(self.initial_shared)
        init_x = tuple(np.cumsum(p, axis=-1) for p in self.initial_local)
        obs = None
        if self.observation_kernels is not None:
            obs = tuple(np.cumsum(o, axis=-1) for o in self.observation_kernels)
        return shared, local, init_z, init_x, obs


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    field: str
    index: tuple
    detail: str

    def __str__(self):
        return f"{self.field}{list(self.index)}: {self.kind} ({self.detail})"


def _check_rows(report, name, arr, tol=ROW_TOL, rows=None):
    flat_idx = np.ndindex(arr.shape[:-1])
    for idx in flat_idx:
        if rows is not None and not rows(idx):
            continue
        row = arr[idx]
        if np.any(row < 0) or not np.all(np.isfinite(row)):
            report.append(Violation("negative entry", name, idx, f"row={row.tolist()}"))
        s = float(row.sum())
        if abs(s - 1.0) > tol:
            report.append(Violation("normalization", name, idx, f"row sums to {s!r}"))


def validate_model(model: CoupledModel) -> list:
    """Return every violated invariant of ``model``; empty iff valid."""
    report = []
    _check_rows(report, "shared_kernel", model.shared_kernel)
    for i, k in enumerate(model.local_kernels):
        _check_rows(report, f"local_kernels[{i}]", k)
    _check_rows(report, "initial_shared", model.initial_shared[None, :])
    support = model.initial_shared > 0
    for i, p in enumerate(model.initial_local):
        _check_rows(report, f"initial_local[{i}]", p, rows=lambda idx: bool(support[idx[0]]))
    for i, f in enumerate(model.feasible_actions):
        for z, x in np.ndindex(f.shape[:2]):
            if not f[z, x].any():
                report.append(Violation("empty feasible set", f"feasible_actions[{i}]", (z, x), "no action allowed"))
    for t, c in enumerate(model.cost if model.time_varying else (model.cost,)):
        if not np.all(np.isfinite(c)):
            report.append(Violation("non-finite cost", "cost", (t,), "cost tensor has inf/nan"))
    if model.observation_kernels is not None:
        for i, o in enumerate(model.observation_kernels):
            _check_rows(report, f"observation_kernels[{i}]", o)
    return report


def check_model(model: CoupledModel) -> CoupledModel:
    """Raise :class:`ModelValidationError` unless ``model`` is valid."""
    report = validate_model(model)
    if report:
        raise ModelValidationError(report)
    return model


def transition_local(model: CoupledModel, i: int, z: int, x_i: int, u_joint: Sequence[int]) -> np.ndarray:
    """Distribution of subsystem ``i``'s next local state."""
    if not 0 <= i < model.n:
        raise IndexError(f"subsystem {i} out of range for n={model.n}")
    if not 0 <= z < model.shared_size:
        raise IndexError(f"shared state {z} out of range")
    if not 0 <= x_i < model.local_sizes[i]:
        raise IndexError(f"local state {x_i} out of range for subsystem {i}")
    u = tuple(u_joint)
    if len(u) != model.n or any(not 0 <= a < m for a, m in zip(u, model.action_sizes)):
        raise IndexError(f"joint action {u} out of range")
    return model.local_kernels[i][(z, x_i, *u)]


# -- sampling -----------------------------------------------------------------

@dataclass
class Trajectory:
    """A sampled run; arrays are indexed by 0-based stage."""

    z: np.ndarray
    x: np.ndarray
    u: np.ndarray
    costs: np.ndarray
    seed: Optional[int]
    y: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.z)

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())


def _draw(cdf_row, r):
    k = int(np.searchsorted(cdf_row, r, side="right"))
    return min(k, len(cdf_row) - 1)


def sample_trajectory(model: CoupledModel, strategy: Callable, horizon: int,
                      seed: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Sample ``horizon`` stages under a decentralized strategy.

    ``strategy(t, i, z_hist, info_hist_i, u_hist)`` returns the action of
    station ``i`` at stage ``t`` from the shared-state history, its own
    local-state (or observation, for partial models) history and the past
    joint actions.  The histories are read-only array views of lengths
    ``t+1``, ``t+1`` and ``t`` (rows of ``u_hist`` are joint actions).
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    n = model.n
    partial = model.observation_kernels is not None
    shared_cdf, local_cdf, init_z, init_x, obs_cdf = model._cdfs
    zs = np.zeros(horizon, dtype=int)
    xs = np.zeros((horizon, n), dtype=int)
    us = np.zeros((horizon, n), dtype=int)
    ys = np.zeros((horizon, n), dtype=int) if partial else None
    costs = np.zeros(horizon)
    if horizon == 0:
        return Trajectory(zs, xs, us, costs, seed, ys)
    # one uniform per random draw: z, x^1..x^n, and y^1..y^n if partial
    width = 1 + n + (n if partial else 0)
    draws = rng.random((horizon, width))
    z = _draw(init_z, draws[0, 0])
    x = [_draw(init_x[i][z], draws[0, 1 + i]) for i in range(n)]
    own = ys if partial else xs
    for t in range(horizon):
        zs[t] = z
        xs[t] = x
        for i in range(n):
            if partial:
                ys[t, i] = _draw(obs_cdf[i][x[i]], draws[t, 1 + n + i])
        u = []
        for i in range(n):
            a = int(strategy(t, i, zs[:t + 1], own[:t + 1, i], us[:t]))
            if not (0 <= a < model.action_sizes[i]) or not model.feasible_actions[i][z, x[i], a]:
                raise InfeasibleActionError(f"t={t}, i={i}, z={z}, x={x[i]}, u={a} is infeasible")
            u.append(a)
        u = tuple(u)
        us[t] = u
        costs[t] = model.cost_at(t)[(z, *x, *u)]
        if t + 1 < horizon:
            nxt = draws[t + 1]
            x = [_draw(local_cdf[i][(z, x[i], *u)], nxt[1 + i]) for i in range(n)]
            z = _draw(shared_cdf[(z, *u)], nxt[0])
    return Trajectory(zs, xs, us, costs, seed, ys)


# -- JSON model files ---------------------------------------------------------

def _require(doc, key, path):
    if key not in doc:
        raise ModelFormatError(f"{path}: missing required field {key!r}")
    return doc[key]


def _array(value, field_name, shape, dtype=float):
    try:
        arr = np.array(value, dtype=dtype)
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"field {field_name!r}: not a rectangular numeric array ({exc})") from None
    if shape is not None and arr.shape != tuple(shape):
        raise ModelFormatError(f"field {field_name!r}: expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def model_from_dict(doc: dict, source: str = "<model>") -> CoupledModel:
    """Build a model from its JSON document form; raises on format errors."""
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{source}: top level must be a JSON object")
    nz = int(_require(doc, "shared_size", source))
    nx = [int(v) for v in _require(doc, "local_sizes", source)]
    nu = [int(v) for v in _require(doc, "action_sizes", source)]
    n = len(nx)
    if len(nu) != n:
        raise ModelFormatError(f"{source}: local_sizes and action_sizes lengths differ ({n} vs {len(nu)})")
    shared = _array(_require(doc, "shared_kernel", source), "shared_kernel", (nz, *nu, nz))
    lk = _require(doc, "local_kernels", source)
    if len(lk) != n:
        raise ModelFormatError(f"field 'local_kernels': expected {n} entries, got {len(lk)}")
    local = [_array(k, f"local_kernels[{i}]", (nz, nx[i], *nu, nx[i])) for i, k in enumerate(lk)]
    cshape = (nz, *nx, *nu)
    if "costs" in doc:
        cost = [_array(c, f"costs[{t}]", cshape) for t, c in enumerate(doc["costs"])]
    else:
        cost = _array(_require(doc, "cost", source), "cost", cshape)
    init_z = _array(_require(doc, "initial_shared", source), "initial_shared", (nz,))
    il = _require(doc, "initial_local", source)
    if len(il) != n:
        raise ModelFormatError(f"field 'initial_local': expected {n} entries, got {len(il)}")
    init_x = [_array(p, f"initial_local[{i}]", (nz, nx[i])) for i, p in enumerate(il)]
    feas = None
    if doc.get("feasible_actions") is not None:
        fa = doc["feasible_actions"]
        if len(fa) != n:
            raise ModelFormatError(f"field 'feasible_actions': expected {n} entries, got {len(fa)}")
        feas = []
        for i, per_z in enumerate(fa):
            f = np.zeros((nz, nx[i], nu[i]), dtype=bool)
            if len(per_z) != nz:
                raise ModelFormatError(f"field 'feasible_actions[{i}]': expected {nz} rows, got {len(per_z)}")
            for z, per_x in enumerate(per_z):
                if len(per_x) != nx[i]:
                    raise ModelFormatError(
                        f"field 'feasible_actions[{i}][{z}]': expected {nx[i]} lists, got {len(per_x)}")
                for x, allowed in enumerate(per_x):
                    for a in allowed:
                        if not 0 <= int(a) < nu[i]:
                            raise ModelFormatError(
                                f"field 'feasible_actions[{i}][{z}][{x}]': action {a} out of range")
                        f[z, x, int(a)] = True
            feas.append(f)
    obs = None
    if doc.get("observation_kernels") is not None:
        obs = [_array(o, f"observation_kernels[{i}]", None) for i, o in enumerate(doc["observation_kernels"])]
    sense = doc.get("objective_sense", MINIMIZE)
    if sense not in (MINIMIZE, MAXIMIZE):
        raise ModelFormatError(f"field 'objective_sense': must be {MINIMIZE!r} or {MAXIMIZE!r}, got {sense!r}")
    try:
        return CoupledModel(shared, local, cost, init_z, init_x, feas, obs, sense, doc.get("name", ""))
    except ValueError as exc:
        raise ModelFormatError(f"{source}: {exc}") from None


def model_to_dict(model: CoupledModel) -> dict:
    doc = {
        "name": model.name,
        "objective_sense": model.objective_sense,
        "shared_size": model.shared_size,
        "local_sizes": list(model.local_sizes),
        "action_sizes": list(model.action_sizes),
        "shared_kernel": model.shared_kernel.tolist(),
        "local_kernels": [k.tolist() for k in model.local_kernels],
        "initial_shared": model.initial_shared.tolist(),
        "initial_local": [p.tolist() for p in model.initial_local],
        "feasible_actions": [
            [[np.flatnonzero(f[z, x]).tolist() for x in range(f.shape[1])] for z in range(f.shape[0])]
            for f in model.feasible_actions
        ],
    }
    if model.time_varying:
        doc["costs"] = [c.tolist() for c in model.cost]
    else:
        doc["cost"] = model.cost.tolist()
    if model.observation_kernels is not None:
        doc["observation_kernels"] = [o.tolist() for o in model.observation_kernels]
    return doc


def load_model(path) -> CoupledModel:
    """Read a JSON model file and validate it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFormatError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return check_model(model_from_dict(doc, str(path)))


def save_model(model: CoupledModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


# -- random instances ---------------------------------------------------------

def random_model(rng, n=2, nz=1, nx=2, nu=2, *, feasibility=False, ny=None,
                 sparsity=0.0, time_varying=None, objective_sense=MINIMIZE) -> CoupledModel:
    """Random model with Dirichlet kernels and uniform costs.

    ``sparsity`` zeroes that fraction of kernel entries (rows renormalized)
    so that beliefs visit the simplex boundary.
    """
    rng = np.random.default_rng(rng)
    nx = (nx,) * n if np.isscalar(nx) else tuple(nx)
    nu = (nu,) * n if np.isscalar(nu) else tuple(nu)

    def kernel(shape):
        k = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
        if sparsity > 0:
            mask = rng.random(k.shape) >= sparsity
            keep = rng.integers(0, shape[-1], size=shape[:-1])
            np.put_along_axis(mask, keep[..., None], True, axis=-1)
            k = k * mask
            k = k / k.sum(axis=-1, keepdims=True)
        return k

    shared = kernel((nz, *nu, nz))
    local = [kernel((nz, nx[i], *nu, nx[i])) for i in range(n)]
    cshape = (nz, *nx, *nu)
    if time_varying:
        cost = [rng.random(cshape) for _ in range(time_varying)]
    else:
        cost = rng.random(cshape)
    init_z = rng.dirichlet(np.ones(nz))
    init_x = [rng.dirichlet(np.ones(nx[i]), size=nz) for i in range(n)]
    feas = None
    if feasibility:
        feas = []
        for i in range(n):
            f = rng.random((nz, nx[i], nu[i])) < 0.7
            f[np.arange(nz)[:, None], np.arange(nx[i])[None, :], rng.integers(0, nu[i], size=(nz, nx[i]))] = True
            feas.append(f)
    obs = None
    if ny is not None:
        obs = [rng.dirichlet(np.ones(ny), size=nx[i]) for i in range(n)]
    return CoupledModel(shared, local, cost, init_z, init_x, feas, obs, objective_sense)
