"""Slot-by-slot closed-loop simulation of the energy-harvesting base station.

Each slot: draw per-user and backhaul fading, draw one request per user,
resolve the cache outcome, reserve the realized backhaul power on a miss (or
idle if the battery cannot cover it), pick the downlink powers, drain the
battery and credit the harvested energy.  Random inputs come from separate
named streams (see :mod:`artifact.rng`) and are drawn in fixed-size chunks,
so results depend only on ``(config, seed, n_slots)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, model
from .config import ConfigError, SystemConfig
from .popularity import sample_requests
from .rng import stream
from .solver import Action, MDPModel, ValueFunction, lookahead_tables, power_cap

CHUNK = 1 << 15
POLICIES = ("dp", "baseline")


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    start_energy: float
    action_index: int
    downlink_power: float
    gains: tuple
    backhaul_gain: float
    miss: bool
    backhaul_power: float
    harvested: float
    end_energy: float
    throughput: float
    idle: bool


@dataclass
class SlotTrace:
    """Column-oriented per-slot record; :meth:`outcomes` yields :class:`SlotOutcome`."""

    start_energy: np.ndarray
    action_index: np.ndarray
    downlink_power: np.ndarray
    gains: np.ndarray
    backhaul_gain: np.ndarray
    miss: np.ndarray
    backhaul_power: np.ndarray
    harvested: np.ndarray
    end_energy: np.ndarray
    throughput: np.ndarray
    idle: np.ndarray

    def __len__(self):
        return self.start_energy.size

    def outcomes(self):
        for t in range(len(self)):
            yield SlotOutcome(
                t, float(self.start_energy[t]), int(self.action_index[t]),
                float(self.downlink_power[t]), tuple(self.gains[t].tolist()),
                float(self.backhaul_gain[t]), bool(self.miss[t]),
                float(self.backhaul_power[t]), float(self.harvested[t]),
                float(self.end_energy[t]), float(self.throughput[t]), bool(self.idle[t]))

    def write_csv(self, path, every: int = 1):
        """One row per slot (or every ``every``-th slot), 9 significant digits."""
        n_u = self.gains.shape[1]
        header = (["slot", "start_energy_j", "action_index", "downlink_power_w"]
                  + [f"h2_user_{i}" for i in range(n_u)]
                  + ["h2_backhaul", "miss", "backhaul_power_w", "harvested_j",
                     "end_energy_j", "throughput_bps", "idle"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t in range(0, len(self), every):
                w.writerow([t, fmt(self.start_energy[t]), int(self.action_index[t]),
                            fmt(self.downlink_power[t])]
                           + [fmt(g) for g in self.gains[t]]
                           + [fmt(self.backhaul_gain[t]), int(self.miss[t]),
                              fmt(self.backhaul_power[t]), fmt(self.harvested[t]),
                              fmt(self.end_energy[t]), fmt(self.throughput[t]),
                              int(self.idle[t])])


def fmt(x) -> str:
    return f"{float(x):.9g}"


@dataclass
class RunMetrics:
    """Slot averages after the warm-up window, plus run bookkeeping."""

    mean_energy: float
    terminal_energy: float
    mean_throughput: float
    idle_fraction: float
    backhaul_fraction: float
    miss_fraction: float
    n_slots: int
    warmup_slots: int
    seed: int
    policy: str
    arrivals: int
    energy_trace: np.ndarray | None = field(default=None, repr=False)

    def as_row(self) -> dict:
        return {
            "mean_energy_j": self.mean_energy,
            "terminal_energy_j": self.terminal_energy,
            "mean_throughput_bps": self.mean_throughput,
            "idle_fraction": self.idle_fraction,
            "backhaul_fraction": self.backhaul_fraction,
            "miss_fraction": self.miss_fraction,
            "n_slots": self.n_slots,
            "warmup_slots": self.warmup_slots,
            "seed": self.seed,
            "arrivals": self.arrivals,
        }


def sample_channels(rng: np.random.Generator, n_users: int, mu: float, size=None):
    """Squared Rayleigh gains: ``n_users`` downlink draws and one backhaul draw.

    With ``size`` given, returns arrays of shape ``(size, n_users)`` and ``(size,)``.
    """
    if not mu > 0:
        raise ValueError("fading rate mu must be positive")
    if size is None:
        g = rng.exponential(1.0 / mu, size=n_users + 1)
        return g[:n_users], float(g[n_users])
    g = rng.exponential(1.0 / mu, size=(size, n_users + 1))
    return g[:, :n_users], g[:, n_users]


def backhaul_power(h2_b: float, e: float, cfg: SystemConfig):
    """Backhaul power meeting ``gamma_min`` on the realized channel, or ``None`` if unaffordable."""
    if not h2_b > 0:
        return None
    pb = model.backhaul_coefficient(cfg) / h2_b
    if pb > power_cap(e, cfg.p_max, cfg.slot_t):
        return None
    return pb


def baseline_action(e: float, h2s, miss: bool, h2_b: float, cfg: SystemConfig) -> Action:
    """Channel-oblivious max-power action, split equally across users.

    Under ``expected`` charging the downlink gets ``min(P_max, E/T)`` minus the
    expected backhaul reservation and a miss adds the realized backhaul power
    on top (downlink trimmed if the battery cannot cover both); under
    ``realized`` charging the downlink gets the cap minus the realized
    backhaul power.  ``total_power`` is the realized draw.  Idles when the
    backhaul is needed but unaffordable or the battery is empty.
    """
    n = cfg.n_users
    idle = Action((0.0,) * n, 0.0, 0.0)
    budget = power_cap(e, cfg.p_max, cfg.slot_t)
    pb = 0.0
    if miss:
        pb = backhaul_power(h2_b, e, cfg)
        if pb is None:
            return idle
    if cfg.backhaul_charge == "expected":
        reserve = model.backhaul_probability(cfg) * model.backhaul_coefficient(cfg) * cfg.mu
        dl = min(budget - reserve, e / cfg.slot_t - pb)
    else:
        dl = budget - pb
    if dl <= 0:
        return idle
    return Action((dl / n,) * n, pb, dl + pb)


class _Inputs:
    """Pre-drawn random inputs for one run, generated chunk by chunk."""

    def __init__(self, cfg: SystemConfig, seed: int):
        self.cfg = cfg
        self.channels = stream(seed, "channels")
        self.backhaul = stream(seed, "backhaul")
        self.requests = stream(seed, "requests")
        self.arrivals = stream(seed, "arrivals")
        self.catalog = model.catalog(cfg)
        self.harvest = model.harvest(cfg)

    def draw(self, n: int):
        cfg = self.cfg
        h2 = np.ascontiguousarray(self.channels.exponential(1.0 / cfg.mu, size=(n, cfg.n_users)))
        h2b = np.ascontiguousarray(self.backhaul.exponential(1.0 / cfg.mu, size=n))
        _, miss = sample_requests(self.requests, self.catalog, cfg.n_users, n)
        arrivals = self.harvest.sample(self.arrivals, n)
        return h2, h2b, np.ascontiguousarray(miss, dtype=np.uint8), np.ascontiguousarray(arrivals, dtype=np.int64)


def simulate(policy: str, cfg: SystemConfig, value_function: ValueFunction | None = None,
             seed: int | None = None, n_slots: int | None = None, *,
             mdp: MDPModel | None = None, trace: bool = False, backend=None,
             energy_trace_every: int | None = None):
    """Run the closed-loop simulation.

    Parameters
    ----------
    policy : {"dp", "baseline"}
        ``dp`` uses the one-step lookahead against ``value_function`` (which
        must come from ``mdp``); ``baseline`` always spends ``min(P_max, E/T)``.
    seed, n_slots : int, optional
        Default to ``cfg.seed`` and ``cfg.n_slots``.
    trace : bool
        Also return the full :class:`SlotTrace`.
    backend : module, optional
        Kernel implementation override (see :func:`artifact.kernels.available_backends`).

    Returns
    -------
    RunMetrics, or ``(RunMetrics, SlotTrace)`` when ``trace`` is set.
    """
    seed = cfg.seed if seed is None else int(seed)
    n_slots = cfg.n_slots if n_slots is None else int(n_slots)
    if policy not in POLICIES:
        raise ConfigError([("policy", f"must be one of {POLICIES}, got {policy!r}")])
    if n_slots < 1:
        raise ConfigError([("simulation.n_slots", "must be >= 1")])
    impl = kernels if backend is None else backend
    if mdp is None:
        from .solver import build_mdp
        mdp = build_mdp(cfg)
    if mdp.cfg.n_users != cfg.n_users:
        raise ConfigError([("network.n_users", "does not match the solved model")])
    if policy == "dp":
        if value_function is None:
            raise ConfigError([("policy", "dp policy requires a converged value function")])
        if value_function.n_cells != mdp.grid.n_cells or value_function.e_max != mdp.grid.e_max:
            raise ConfigError([("battery.grid_cells", "value function grid does not match the model")])
        values = np.ascontiguousarray(value_function.values, dtype=np.float64)
    else:
        values = np.zeros(mdp.grid.n_cells)
    tab = lookahead_tables(mdp, ValueFunction(values, 0, 0.0, (), mdp.grid.e_max, mdp.grid.n_cells))
    code = 0 if policy == "dp" else 1
    charge = 1 if cfg.backhaul_charge == "expected" else 0
    reserve = mdp.action_set.epsilon * mdp.action_set.backhaul_budget

    out = {k: np.empty(n_slots) for k in ("start", "dl", "pb", "harv", "end", "tput")}
    out["action"] = np.empty(n_slots, dtype=np.int64)
    out["idle"] = np.empty(n_slots, dtype=np.uint8)
    out["bh"] = np.empty(n_slots, dtype=np.uint8)
    miss_all = np.empty(n_slots, dtype=np.uint8)
    arrivals_total = 0
    if trace:
        gains_all = np.empty((n_slots, cfg.n_users))
        hb_all = np.empty(n_slots)

    inputs = _Inputs(cfg, seed)
    e = float(cfg.start_energy)
    for lo in range(0, n_slots, CHUNK):
        hi = min(lo + CHUNK, n_slots)
        h2, h2b, miss, arrivals = inputs.draw(hi - lo)
        sl = slice(lo, hi)
        e = impl.simulate_chunk(
            code, charge, reserve, e, h2, h2b, miss, arrivals, tab["snr_coef"], tab["bandwidth"],
            cfg.p_max, cfg.slot_t, cfg.e_max, cfg.q_energy, tab["backhaul_coef"],
            cfg.a, cfg.b, cfg.power_unit, tab["action_powers"], tab["action_dl"],
            tab["action_offline"], tab["values"], tab["delta_e"], cfg.discount,
            tab["harvest_pmf"], out["start"][sl], out["action"][sl], out["dl"][sl],
            out["pb"][sl], out["harv"][sl], out["end"][sl], out["tput"][sl],
            out["idle"][sl], out["bh"][sl])
        miss_all[sl] = miss
        arrivals_total += int(arrivals.sum())
        if trace:
            gains_all[sl] = h2
            hb_all[sl] = h2b

    warm = min(int(math.floor(cfg.warmup_fraction * n_slots)), n_slots - 1)
    keep = slice(warm, n_slots)
    every = energy_trace_every if energy_trace_every is not None else cfg.trace_every
    metrics = RunMetrics(
        mean_energy=float(np.mean(out["start"][keep])),
        terminal_energy=float(out["end"][-1]),
        mean_throughput=float(np.mean(out["tput"][keep])),
        idle_fraction=float(np.mean(out["idle"][keep])),
        backhaul_fraction=float(np.mean(out["bh"][keep])),
        miss_fraction=float(np.mean(miss_all[keep])),
        n_slots=n_slots,
        warmup_slots=warm,
        seed=seed,
        policy=policy,
        arrivals=arrivals_total,
        energy_trace=out["start"][::every].copy(),
    )
    if not trace:
        return metrics
    st = SlotTrace(out["start"], out["action"], out["dl"], gains_all, hb_all,
                   miss_all.astype(bool), out["pb"], out["harv"], out["end"], out["tput"],
                   out["idle"].astype(bool))
    return metrics, st
