"""Sweep orchestration for the four figure experiments, plus result persistence.

Each ``run_figN`` returns an :class:`ExperimentResult` whose rows are plain
dicts.  :meth:`ExperimentResult.write` emits a CSV (header row, 9 significant
digits, no timestamps, so identical configs give identical bytes) and a JSON
manifest that embeds the full resolved config; feeding the manifest back
through ``--config`` reproduces the CSV.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, kernels, model
from .config import SystemConfig
from .simulator import RunMetrics, fmt, simulate
from .solver import Solution, build_mdp, solve

log = logging.getLogger(__name__)


class SolveCache:
    """Value-iteration solves keyed by :meth:`SystemConfig.solver_key`."""

    def __init__(self):
        self._store: dict[str, Solution] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, cfg: SystemConfig, distances) -> Solution:
        key = cfg.solver_key(distances)
        with self._lock:
            sol = self._store.get(key)
            if sol is not None:
                self.hits += 1
                return sol
        sol = solve(cfg, distances)
        with self._lock:
            self.misses += 1
            return self._store.setdefault(key, sol)

    def __len__(self):
        return len(self._store)


_CACHE = SolveCache()


def seeds_for(cfg: SystemConfig) -> list[int]:
    return [cfg.seed + k for k in range(cfg.n_seeds)]


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Sample mean and t-interval half-width (``nan`` for a single value)."""
    x = np.asarray(values, dtype=np.float64)
    m = float(np.mean(x))
    if x.size < 2:
        return m, math.nan
    half = stats.t.ppf(0.5 + level / 2, x.size - 1) * np.std(x, ddof=1) / math.sqrt(x.size)
    return m, float(half)


def run_point(cfg: SystemConfig, policies, seeds, cache: SolveCache | None = None) -> dict:
    """Simulate every ``(policy, seed)`` pair at one sweep point.

    Users are placed once per point from the placement stream of ``cfg.seed``
    and shared by all policies and seeds.
    """
    cache = _CACHE if cache is None else cache
    distances = model.user_distances(cfg)
    cfg = cfg.replace(distances=tuple(distances))
    sol = cache.get(cfg, distances) if "dp" in policies else None
    mdp = sol.mdp if sol is not None else build_mdp(cfg, distances)
    out = {}
    for policy in policies:
        vf = sol.value_function if policy == "dp" else None
        out[policy] = [simulate(policy, cfg, vf, seed=s, mdp=mdp) for s in seeds]
    return out


def _point_task(args):
    cfg, policies, seeds = args
    return run_point(cfg, policies, seeds)


def _run_points(points, policies, seeds, jobs: int):
    tasks = [(cfg, tuple(policies), tuple(seeds)) for cfg in points]
    if jobs <= 1 or len(tasks) < 2:
        return [_point_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_point_task, tasks))


@dataclass
class ExperimentResult:
    experiment: str
    config: SystemConfig
    columns: list[str]
    rows: list[dict]
    seeds: list[int]
    summary: dict = field(default_factory=dict)
    extra_tables: dict = field(default_factory=dict)

    def csv_text(self, columns=None, rows=None) -> str:
        columns = self.columns if columns is None else columns
        rows = self.rows if rows is None else rows
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        """Write ``<experiment>.csv`` (plus any extra tables) and ``<experiment>_manifest.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = {}
        tables = {self.experiment: (self.columns, self.rows), **self.extra_tables}
        main_csv = None
        for name, (cols, rows) in tables.items():
            text = self.csv_text(cols, rows)
            path = out_dir / f"{name}.csv"
            path.write_text(text)
            outputs[path.name] = hashlib.sha256(text.encode()).hexdigest()
            if main_csv is None:
                main_csv = path
        manifest = {
            "experiment": self.experiment,
            "code_version": __version__,
            "kernel_backend": kernels.BACKEND,
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "seeds": self.seeds,
            "outputs": outputs,
            "summary": self.summary,
            "config": self.config.to_dict(),
        }
        man = out_dir / f"{self.experiment}_manifest.json"
        man.write_text(json.dumps(manifest, indent=2, sort_keys=False, default=_json_default) + "\n")
        return main_csv, man


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _aggregate(metrics: list[RunMetrics]) -> dict:
    e, e_ci = mean_ci([m.mean_energy for m in metrics])
    tp, tp_ci = mean_ci([m.mean_throughput for m in metrics])
    return {
        "mean_energy_j": e,
        "energy_ci95_j": e_ci,
        "terminal_energy_j": float(np.mean([m.terminal_energy for m in metrics])),
        "mean_throughput_bps": tp,
        "throughput_ci95_bps": tp_ci,
        "idle_fraction": float(np.mean([m.idle_fraction for m in metrics])),
        "backhaul_fraction": float(np.mean([m.backhaul_fraction for m in metrics])),
        "n_seeds": len(metrics),
    }


_AGG_COLUMNS = ["mean_energy_j", "energy_ci95_j", "terminal_energy_j", "mean_throughput_bps",
                "throughput_ci95_bps", "idle_fraction", "backhaul_fraction", "n_seeds"]


def run_fig2(cfg: SystemConfig, policy: str = "dp") -> ExperimentResult:
    """Single energy trace at the configured (M, lambda) with arrival and idle markers."""
    sweep = cfg.experiments["fig2"]
    pcfg = cfg.replace(cache_size=int(sweep["cache_size"]), arrival_rate=float(sweep["rate_per_s"]))
    n_slots = int(sweep.get("n_slots", cfg.n_slots))
    distances = model.user_distances(pcfg)
    pcfg = pcfg.replace(distances=tuple(distances))
    if policy == "dp":
        sol = _CACHE.get(pcfg, distances)
        metrics, tr = simulate("dp", pcfg, sol.value_function, n_slots=n_slots, mdp=sol.mdp, trace=True)
    else:
        metrics, tr = simulate(policy, pcfg, n_slots=n_slots, trace=True)
    rows = [
        {"slot": t, "energy_j": tr.start_energy[t], "arrival": int(tr.harvested[t] > 0),
         "idle": bool(tr.idle[t]), "miss": bool(tr.miss[t])}
        for t in range(0, len(tr), cfg.trace_every)
    ]
    low = tr.start_energy < np.median(tr.start_energy)
    summary = {
        "policy": policy,
        "n_slots": n_slots,
        "arrivals": int(np.count_nonzero(tr.harvested)),
        "idle_fraction": float(np.mean(tr.idle)),
        "idle_fraction_below_median_energy": float(np.mean(tr.idle[low])) if low.any() else math.nan,
        "min_energy_j": float(tr.start_energy.min()),
        "max_energy_j": float(tr.start_energy.max()),
        "mean_energy_j": metrics.mean_energy,
    }
    return ExperimentResult("fig2", cfg, ["slot", "energy_j", "arrival", "idle", "miss"],
                            rows, [metrics.seed], summary)


def run_fig3(cfg: SystemConfig, jobs: int = 1, policies=("dp",)) -> ExperimentResult:
    """Mean remaining energy over ``n_users`` for each configured ``(M, lambda)`` curve."""
    sweep = cfg.experiments["fig3"]
    seeds = seeds_for(cfg)
    keys, points = [], []
    for m, lam in sweep["curves"]:
        for n in sweep["n_users"]:
            keys.append((int(m), float(lam), int(n)))
            points.append(cfg.replace(cache_size=int(m), arrival_rate=float(lam), n_users=int(n)))
    results = _run_points(points, policies, seeds, jobs)
    rows = []
    for (m, lam, n), res in zip(keys, results):
        for policy in policies:
            rows.append({"cache_size": m, "rate_per_s": lam, "n_users": n, "policy": policy,
                         **_aggregate(res[policy])})
    cols = ["cache_size", "rate_per_s", "n_users", "policy"] + _AGG_COLUMNS
    return ExperimentResult("fig3", cfg, cols, rows, seeds)


def run_fig4(cfg: SystemConfig, jobs: int = 1) -> ExperimentResult:
    """Sum throughput of the lookahead policy and the max-power baseline on paired seeds."""
    sweep = cfg.experiments["fig4"]
    seeds = seeds_for(cfg)
    lam = float(sweep["rate_per_s"])
    keys, points = [], []
    for m in sweep["cache_sizes"]:
        for n in sweep["n_users"]:
            keys.append((int(m), int(n)))
            points.append(cfg.replace(cache_size=int(m), arrival_rate=lam, n_users=int(n)))
    results = _run_points(points, ("dp", "baseline"), seeds, jobs)
    rows = []
    for (m, n), res in zip(keys, results):
        dp = np.array([r.mean_throughput for r in res["dp"]])
        bl = np.array([r.mean_throughput for r in res["baseline"]])
        gain, gain_ci = mean_ci(dp - bl)
        base = float(np.mean(bl))
        rows.append({
            "cache_size": m, "rate_per_s": lam, "n_users": n,
            "dp_throughput_bps": float(np.mean(dp)), "baseline_throughput_bps": base,
            "gain_bps": gain, "gain_ci95_bps": gain_ci,
            "gain_percent": 100.0 * gain / base if base > 0 else math.nan,
            "dp_energy_j": float(np.mean([r.mean_energy for r in res["dp"]])),
            "baseline_energy_j": float(np.mean([r.mean_energy for r in res["baseline"]])),
            "n_seeds": len(seeds),
        })
    cols = ["cache_size", "rate_per_s", "n_users", "dp_throughput_bps", "baseline_throughput_bps",
            "gain_bps", "gain_ci95_bps", "gain_percent", "dp_energy_j", "baseline_energy_j", "n_seeds"]
    return ExperimentResult("fig4", cfg, cols, rows, seeds)


def run_fig5(cfg: SystemConfig, jobs: int = 1) -> ExperimentResult:
    """Mean available energy over the (cache size, harvest amount) mesh."""
    sweep = cfg.experiments["fig5"]
    seeds = seeds_for(cfg)
    n = int(sweep["n_users"])
    lam = float(sweep["rate_per_s"])
    keys, points = [], []
    for m in sweep["cache_sizes"]:
        for q in sweep["q_j"]:
            keys.append((int(m), float(q)))
            points.append(cfg.replace(cache_size=int(m), q_energy=float(q), n_users=n, arrival_rate=lam))
    results = _run_points(points, ("dp",), seeds, jobs)
    rows = [{"cache_size": m, "q_j": q, "n_users": n, "rate_per_s": lam, **_aggregate(res["dp"])}
            for (m, q), res in zip(keys, results)]
    cols = ["cache_size", "q_j", "n_users", "rate_per_s"] + _AGG_COLUMNS
    return ExperimentResult("fig5", cfg, cols, rows, seeds)


def default_jobs() -> int:
    return max(1, min(8, os.cpu_count() or 1))


EXPERIMENTS = {"fig2": run_fig2, "fig3": run_fig3, "fig4": run_fig4, "fig5": run_fig5}
