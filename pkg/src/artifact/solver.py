"""Discounted MDP over battery levels: action sets, value iteration, lookahead.

Value iteration works on the channel-averaged utility and the expected
backhaul reservation ``eps * P_b``.  Online decisions
(:func:`one_step_lookahead`) score actions with the realized channel, idle
when a needed backhaul transmission is unaffordable, and reuse the converged
value function for the future term.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels, model
from .battery import (DRAIN_RTOL, EnergyGrid, HarvestDistribution, TransitionRow,
                      build_transition_matrix)
from .config import ConfigError, SystemConfig
from .utility import (EfficiencyExponentParams, LinkGeometry, average_utility_table)

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    """Per-user downlink powers plus the expected backhaul reservation.

    ``total_power`` is ``sum(powers) + eps * backhaul_budget`` for transmitting
    actions and 0 for the idle action.
    """

    powers: tuple
    backhaul_budget: float
    total_power: float

    @property
    def downlink_power(self) -> float:
        return float(sum(self.powers))

    @property
    def is_idle(self) -> bool:
        return not any(p > 0 for p in self.powers)


@dataclass(frozen=True)
class ActionSet:
    actions: tuple
    mode: str
    levels: int
    epsilon: float
    backhaul_budget: float

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, i) -> Action:
        return self.actions[i]

    @property
    def power_matrix(self) -> np.ndarray:
        return np.array([a.powers for a in self.actions], dtype=np.float64)

    @property
    def downlink_totals(self) -> np.ndarray:
        return self.power_matrix.sum(axis=1)

    @property
    def totals(self) -> np.ndarray:
        return np.array([a.total_power for a in self.actions], dtype=np.float64)


def _make_action(powers, eps, budget) -> Action:
    powers = tuple(float(p) for p in powers)
    dl = sum(powers)
    total = dl + eps * budget if dl > 0 else 0.0
    return Action(powers, budget, total)


def build_action_set(cfg: SystemConfig, *, levels: int | None = None,
                     mode: str | None = None) -> ActionSet:
    """Discretized transmit-power vectors.

    The largest downlink total is ``P_max - eps * P_b`` so that every action
    respects the expected-power constraint at a full battery.  In
    ``equal-split`` mode the ``levels`` totals ``0 .. P_max - eps * P_b`` are
    shared equally by all users; ``exhaustive`` mode takes the Cartesian
    product of per-user levels (at most 3 users) and drops vectors whose sum
    exceeds the cap.  Actions come sorted by total power.
    """
    levels = cfg.power_levels if levels is None else levels
    mode = cfg.action_mode if mode is None else mode
    if levels < 2:
        raise ConfigError([("solver.power_levels", "must be >= 2")])
    n = cfg.n_users
    eps = model.backhaul_probability(cfg)
    budget = model.backhaul_coefficient(cfg) * cfg.mu
    cap = cfg.p_max - eps * budget
    if cap <= 0:
        raise ConfigError([("radio.p_max_w",
                            f"expected backhaul reservation {eps * budget:.4g} W leaves no downlink power")])
    grid = np.linspace(0.0, cap, levels)
    if mode == "equal-split":
        vectors = [np.full(n, t / n) for t in grid]
    elif mode == "exhaustive":
        if n > 3:
            raise ConfigError([("solver.action_mode", "exhaustive mode allows at most 3 users")])
        vectors = [np.array(v) for v in itertools.product(grid, repeat=n)
                   if sum(v) <= cap * (1 + 1e-12)]
    else:
        raise ConfigError([("solver.action_mode", f"unknown mode {mode!r}")])
    seen = set()
    actions = []
    for v in vectors:
        key = tuple(np.round(v, 15))
        if key in seen:
            continue
        seen.add(key)
        actions.append(_make_action(v, eps, budget))
    actions.sort(key=lambda a: (a.total_power, a.powers))
    return ActionSet(tuple(actions), mode, levels, eps, budget)


def power_cap(e: float, p_max: float, slot_t: float) -> float:
    """Largest total power the battery can sustain for one slot."""
    return min(p_max, e / slot_t)


def feasibility_mask(grid: EnergyGrid, action_set: ActionSet, p_max: float,
                     slot_t: float) -> np.ndarray:
    caps = np.minimum(p_max, grid.energies / slot_t)
    mask = action_set.totals[None, :] <= caps[:, None] * (1 + DRAIN_RTOL)
    mask[:, action_set.totals == 0] = True
    return mask


def feasible_actions(grid_index: int, action_set: ActionSet, cfg: SystemConfig) -> list[int]:
    """Indices of actions whose total power fits ``min(P_max, E / T)`` at this node."""
    grid = model.energy_grid(cfg)
    mask = feasibility_mask(grid, action_set, cfg.p_max, cfg.slot_t)
    return [int(a) for a in np.flatnonzero(mask[grid_index])]


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray
    iterations: int
    residual: float
    residuals: tuple = field(repr=False)
    e_max: float
    n_cells: int

    @property
    def grid(self) -> EnergyGrid:
        return EnergyGrid(self.e_max, self.n_cells)

    def __call__(self, e: float) -> float:
        """Linearly interpolated value at a continuous energy."""
        return float(kernels.interp_value(self.values, self.grid.delta_e, float(e)))


@dataclass(frozen=True)
class Policy:
    action_index: np.ndarray

    def action(self, grid_index: int, action_set: ActionSet) -> Action:
        return action_set[int(self.action_index[grid_index])]


def iterate_values(utilities: np.ndarray, transitions: sp.csr_matrix, delta: float,
                   theta: float, max_iter: int = 10000):
    """Jacobi value iteration on precomputed arrays.

    ``utilities`` is ``(n_states, n_actions)`` with ``-inf`` on infeasible
    pairs; ``transitions`` has row ``s * n_actions + a``.  Starts from
    ``V = 0`` and stops once the sup-norm change drops below ``theta``, then
    extracts the greedy policy against the final iterate.

    Returns
    -------
    values, policy, residuals
    """
    if not 0 <= delta < 1:
        raise ValueError(f"discount must lie in [0, 1), got {delta}")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    u = np.ascontiguousarray(utilities, dtype=np.float64)
    t = transitions.tocsr()
    indptr = t.indptr.astype(np.int32)
    indices = t.indices.astype(np.int32)
    data = np.ascontiguousarray(t.data, dtype=np.float64)
    v = np.zeros(u.shape[0])
    residuals = []
    for _ in range(max_iter):
        new_v, _ = kernels.bellman_sweep(u, indptr, indices, data, v, float(delta))
        residuals.append(float(np.max(np.abs(new_v - v))))
        v = new_v
        if residuals[-1] < theta:
            break
    else:
        raise ConvergenceError(
            f"value iteration hit max_iter={max_iter} with residual {residuals[-1]:.3g} > theta={theta:g}")
    _, policy = kernels.bellman_sweep(u, indptr, indices, data, v, float(delta))
    return v, policy, residuals


def value_iteration(grid: EnergyGrid, action_set: ActionSet, transition_builder,
                    avg_utility, delta: float, theta: float, *, p_max: float,
                    slot_t: float, max_iter: int = 10000):
    """Value iteration driven by per-row callbacks.

    ``transition_builder(grid_index, total_power)`` returns a
    :class:`TransitionRow`; ``avg_utility(action, energy)`` returns the
    channel-averaged utility.  Only actions feasible at each node are scored.
    """
    n_s, n_a = grid.n_cells, len(action_set)
    mask = feasibility_mask(grid, action_set, p_max, slot_t)
    u = np.full((n_s, n_a), -np.inf)
    rows, cols, vals = [], [], []
    for s in range(n_s):
        e = grid.energy(s)
        for a in np.flatnonzero(mask[s]):
            act = action_set[a]
            u[s, a] = avg_utility(act, e)
            row: TransitionRow = transition_builder(s, act.total_power)
            rows.extend([s * n_a + a] * len(row.indices))
            cols.extend(row.indices.tolist())
            vals.extend(row.probs.tolist())
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_s * n_a, n_s))
    return _wrap(grid, *iterate_values(u, mat, delta, theta, max_iter))


def _wrap(grid, values, policy, residuals):
    vf = ValueFunction(values, len(residuals), residuals[-1], tuple(residuals),
                       grid.e_max, grid.n_cells)
    return vf, Policy(policy)


@dataclass
class MDPModel:
    """Everything the solver and the online controller need for one configuration."""

    cfg: SystemConfig
    distances: np.ndarray
    grid: EnergyGrid
    harvest: HarvestDistribution
    geom: LinkGeometry
    params: EfficiencyExponentParams
    action_set: ActionSet
    feasible: np.ndarray
    utilities: np.ndarray
    transitions: sp.csr_matrix

    @property
    def key(self) -> str:
        return self.cfg.solver_key(self.distances)


def build_mdp(cfg: SystemConfig, distances=None) -> MDPModel:
    """Assemble the utility table and transition matrix for ``cfg``."""
    d = model.user_distances(cfg) if distances is None else np.asarray(distances, dtype=np.float64)
    grid = model.energy_grid(cfg)
    harv = model.harvest(cfg)
    geom = model.geometry(cfg, d)
    params = model.exponent_params(cfg)
    acts = build_action_set(cfg)
    mask = feasibility_mask(grid, acts, cfg.p_max, cfg.slot_t)
    u = average_utility_table(model.bandwidths(cfg), acts.power_matrix, grid.energies,
                              geom, params, cfg.e_max)
    u = np.where(mask, u, -np.inf)
    trans = build_transition_matrix(grid, acts.totals, harv)
    return MDPModel(cfg, d, grid, harv, geom, params, acts, mask, u, trans)


@dataclass
class Solution:
    mdp: MDPModel
    value_function: ValueFunction
    policy: Policy


def solve(cfg: SystemConfig, distances=None, mdp: MDPModel | None = None) -> Solution:
    mdp = build_mdp(cfg, distances) if mdp is None else mdp
    vf, pol = _wrap(mdp.grid, *iterate_values(mdp.utilities, mdp.transitions,
                                              cfg.discount, cfg.theta, cfg.max_iter))
    log.info("value iteration converged in %d iterations (residual %.3g, key %s)",
             vf.iterations, vf.residual, mdp.key)
    return Solution(mdp, vf, pol)


def lookahead_tables(mdp: MDPModel, vf: ValueFunction) -> dict:
    """Arrays consumed by the lookahead/simulation kernels."""
    cfg = mdp.cfg
    acts = mdp.action_set
    return dict(
        snr_coef=np.ascontiguousarray(mdp.geom.snr_per_watt),
        bandwidth=model.bandwidths(cfg),
        action_powers=np.ascontiguousarray(acts.power_matrix),
        action_dl=np.ascontiguousarray(acts.downlink_totals),
        action_offline=np.ascontiguousarray(acts.totals),
        values=np.ascontiguousarray(vf.values, dtype=np.float64),
        delta_e=mdp.grid.delta_e,
        harvest_pmf=np.ascontiguousarray(mdp.harvest.pmf, dtype=np.float64),
        backhaul_coef=model.backhaul_coefficient(cfg),
    )


def one_step_lookahead(e: float, h2s, h2_b: float, miss: bool, vf: ValueFunction,
                       mdp: MDPModel) -> Action:
    """Online action for the realized channels and cache outcome of one slot.

    On a miss the realized backhaul power ``gamma_min * d_b**alpha * sigma2 / h2_b``
    is computed first; if it exceeds ``min(P_max, E / T)`` the slot idles.
    Candidates must fit the cap under ``cfg.backhaul_charge`` and are scored
    by realized utility plus the discounted expected value of the next
    battery level.
    """
    cfg = mdp.cfg
    tab = lookahead_tables(mdp, vf)
    budget = power_cap(e, cfg.p_max, cfg.slot_t)
    pb = 0.0
    if miss:
        if not h2_b > 0:
            return mdp.action_set[0]
        pb = tab["backhaul_coef"] / h2_b
        if pb > budget:
            return mdp.action_set[0]
    gains = np.ascontiguousarray(np.asarray(h2s, dtype=np.float64) * tab["snr_coef"])
    idx = kernels.lookahead_index(
        float(e), gains, pb, budget, tab["bandwidth"], tab["action_powers"],
        tab["action_dl"], tab["action_offline"], tab["values"], tab["delta_e"],
        cfg.e_max, cfg.slot_t, cfg.discount, tab["harvest_pmf"], cfg.q_energy,
        cfg.a, cfg.b, cfg.power_unit, 1 if cfg.backhaul_charge == "expected" else 0)
    return mdp.action_set[int(idx)]


def save_snapshot(path, solution: Solution) -> Path:
    """Write value function, policy and solver metadata to a versioned ``.npz``."""
    path = Path(path)
    mdp = solution.mdp
    meta = {
        "format_version": SNAPSHOT_VERSION,
        "solver_key": mdp.key,
        "config": mdp.cfg.to_dict(),
        "distances": [float(d) for d in mdp.distances],
        "iterations": solution.value_function.iterations,
        "residual": solution.value_function.residual,
    }
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            format_version=np.array(SNAPSHOT_VERSION),
            values=solution.value_function.values,
            policy=solution.policy.action_index,
            residuals=np.array(solution.value_function.residuals),
            action_powers=mdp.action_set.power_matrix,
            action_totals=mdp.action_set.totals,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
    return path


def load_snapshot(path):
    """Read a snapshot; returns ``(ValueFunction, Policy, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})")
        meta = json.loads(str(z["meta"]))
        residuals = tuple(float(r) for r in z["residuals"])
        values = np.array(z["values"])
        policy = np.array(z["policy"])
    cfg = meta["config"]["battery"]
    vf = ValueFunction(values, int(meta["iterations"]), float(meta["residual"]), residuals,
                       float(cfg["e_max_j"]), int(cfg["grid_cells"]))
    return vf, Policy(policy), meta
