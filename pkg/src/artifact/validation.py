"""Quick self-checks against independent references, run by ``artifact validate``.

These are smoke-level versions of the test suite's oracles that need only
runtime dependencies: ``scipy.special.exp1`` for the exponential integral,
direct summation for Zipf, Monte Carlo for the fading average, exhaustive
policy enumeration for a tiny MDP and short simulations for the energy ledger.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels, model
from .battery import step_energy
from .config import SystemConfig
from .popularity import ZipfCatalog, miss_probability
from .simulator import simulate
from .solver import build_mdp, solve
from .utility import average_utility, mc_average_utility


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def check_e1() -> Check:
    x = np.logspace(-8, 2, 50)
    ref = special.exp1(x) * np.exp(x)
    rel = float(np.max(np.abs(kernels.e1_scaled_array(x) / ref - 1.0)))
    return Check("exp-integral", rel <= 1e-9, f"max rel err {rel:.2e} over 50 points")


def check_zipf() -> Check:
    cat = ZipfCatalog(2.0, 10_000, 2)
    j = np.arange(1, 10_001, dtype=np.float64)
    w = j ** -2.0
    ref = math.fsum(w[2:]) / math.fsum(w)
    err = abs(miss_probability(cat) - ref)
    return Check("zipf-miss", err <= 1e-10, f"abs err {err:.1e}")


def check_average_utility(seed: int = 0) -> Check:
    cfg = SystemConfig(n_users=3, distances=(150.0, 400.0, 700.0))
    geom = model.geometry(cfg)
    params = model.exponent_params(cfg)
    p = np.array([0.05, 0.2, 0.4])
    w = model.bandwidths(cfg)
    cf = average_utility(w, p, 1.0, geom, params, cfg.e_max)
    est, se = mc_average_utility(w, p, 1.0, geom, params, cfg.e_max,
                                 np.random.default_rng(seed), 200_000)
    z = abs(est - cf) / se
    return Check("avg-utility", z <= 4.0, f"closed form {cf:.6g}, MC {est:.6g} ({z:.2f} SE)")


def _tiny_config() -> SystemConfig:
    return SystemConfig(n_users=1, distances=(200.0,), e_max=0.004, n_cells=5, power_levels=3,
                        cache_size=10_000, bandwidth=1.0, arrival_rate=300.0, q_energy=1e-3,
                        theta=1e-12)


def check_small_mdp() -> Check:
    cfg = _tiny_config()
    mdp = build_mdp(cfg)
    sol = solve(cfg, mdp=mdp)
    u = mdp.utilities
    n_s, n_a = u.shape
    p = mdp.transitions.toarray().reshape(n_s, n_a, n_s)
    best = None
    for pol in itertools.product(range(n_a), repeat=n_s):
        if any(not np.isfinite(u[s, a]) for s, a in enumerate(pol)):
            continue
        ps = np.array([p[s, a] for s, a in enumerate(pol)])
        r = np.array([u[s, a] for s, a in enumerate(pol)])
        v = np.linalg.solve(np.eye(n_s) - cfg.discount * ps, r)
        if best is None or np.all(v >= best - 1e-9 * max(1.0, np.max(np.abs(v)))):
            best = v
    err = float(np.max(np.abs(sol.value_function.values - best)) / max(1.0, np.max(np.abs(best))))
    return Check("small-mdp", err <= 1e-9, f"{n_s} states, {n_a} actions, rel err {err:.1e}")


def check_simulation(n_slots: int = 20_000) -> Check:
    cfg = SystemConfig(n_users=4)
    sol = solve(cfg)
    m1, tr = simulate("dp", cfg, sol.value_function, n_slots=n_slots, mdp=sol.mdp, trace=True)
    m2 = simulate("dp", cfg, sol.value_function, n_slots=n_slots, mdp=sol.mdp)
    in_band = bool(np.all((tr.start_energy >= 0) & (tr.end_energy <= cfg.e_max)))
    worst = 0.0
    for t in range(len(tr)):
        ref = step_energy(tr.start_energy[t], tr.downlink_power[t] + tr.backhaul_power[t],
                          cfg.slot_t, tr.harvested[t], cfg.e_max)
        worst = max(worst, abs(ref - tr.end_energy[t]))
    same = m1.mean_energy == m2.mean_energy and m1.mean_throughput == m2.mean_throughput
    ok = in_band and worst <= 1e-15 and same
    return Check("simulation", ok, f"{n_slots} slots, ledger err {worst:.1e}, reproducible={same}")


def check_backends(n_slots: int = 2000) -> Check:
    backends = kernels.available_backends()
    if len(backends) < 2:
        return Check("backends", True, f"only {list(backends)} available, skipped")
    cfg = SystemConfig(n_users=3)
    sol = solve(cfg)
    runs = [simulate("dp", cfg, sol.value_function, n_slots=n_slots, mdp=sol.mdp, trace=True,
                     backend=b)[1] for b in backends.values()]
    same = all(np.array_equal(runs[0].end_energy, r.end_energy)
               and np.array_equal(runs[0].throughput, r.throughput) for r in runs[1:])
    return Check("backends", same, f"{', '.join(backends)} agree bit-for-bit: {same}")


CHECKS = (check_e1, check_zipf, check_average_utility, check_small_mdp,
          check_simulation, check_backends)


def run_all() -> list[Check]:
    return [c() for c in CHECKS]
