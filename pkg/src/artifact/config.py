"""System configuration: schema, defaults, unit conversion and validation.

Configuration files are YAML (JSON is accepted too, being a YAML subset) with
the nested layout below.  Every key is optional; missing keys take the
defaults shown.  Noise is given in dBm and the backhaul SNR threshold in dB;
both are stored internally in linear SI units.

.. code-block:: yaml

    network:
      n_users: 10
      cell_radius_m: 800.0
      min_distance_m: 1.0
      distances_m: null          # explicit per-user distances override placement
      backhaul_distance_m: 3000.0
    battery:
      e_max_j: 2.0
      initial_energy_j: null     # null -> start full
      grid_cells: 2001
    harvest:
      rate_per_s: 2.0
      q_j: 0.08
      tail_tol: 1.0e-12
    radio:
      p_max_w: 0.8
      slot_s: 0.001
      bandwidth_hz: 100000.0
      path_loss_exp: 3.0
      noise_dbm: -90.0
      fading_mu: 1.0
      gamma_min_db: 8.0
    content:
      catalog_size: 10000
      zipf_s: 2.0
      cache_size: 6
    utility:
      a: 0.18
      b: 0.03
      power_unit_w: 0.001
    solver:
      discount: 0.7
      theta: 1.0e-6
      max_iter: 10000
      power_levels: 11
      action_mode: equal-split   # or "exhaustive" (n_users <= 3)
    simulation:
      seed: 0
      n_seeds: 10
      n_slots: 100000
      warmup_fraction: 0.1
      trace_every: 1
      backhaul_charge: expected  # or "realized"
    experiments:
      fig2: {cache_size: 80, rate_per_s: 0.1, n_slots: 30000}
      fig3: {n_users: [2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
             curves: [[2, 2.0], [6, 1.2], [12, 1.2], [0, 2.0], [2, 1.2]]}
      fig4: {rate_per_s: 2.0, n_users: [...], cache_sizes: [0, 2, 6, 12]}
      fig5: {n_users: 15, rate_per_s: 2.0, cache_sizes: [...], q_j: [...]}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Raised for schema or range violations; ``errors`` lists ``(field, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def _default_experiments():
    return {
        "fig2": {"cache_size": 80, "rate_per_s": 0.1, "n_slots": 30000},
        "fig3": {
            "n_users": [2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
            "curves": [[2, 2.0], [6, 1.2], [12, 1.2], [0, 2.0], [2, 1.2]],
        },
        "fig4": {
            "rate_per_s": 2.0,
            "n_users": [3, 5, 7, 9, 11, 13, 15],
            "cache_sizes": [0, 2, 6, 12],
        },
        "fig5": {
            "n_users": 15,
            "rate_per_s": 2.0,
            "cache_sizes": [1, 20, 40, 80, 120, 160],
            "q_j": [0.1, 0.3, 0.5, 0.7, 0.9],
        },
    }


@dataclass(frozen=True)
class SystemConfig:
    """Every model, solver and simulation parameter, in SI units."""

    n_users: int = 10
    cell_radius: float = 800.0
    min_distance: float = 1.0
    distances: tuple | None = None
    d_backhaul: float = 3000.0
    e_max: float = 2.0
    initial_energy: float | None = None
    n_cells: int = 2001
    arrival_rate: float = 2.0
    q_energy: float = 0.08
    harvest_tail_tol: float = 1e-12
    p_max: float = 0.8
    slot_t: float = 1e-3
    bandwidth: float = 1e5
    alpha: float = 3.0
    noise_dbm: float = -90.0
    mu: float = 1.0
    gamma_min_db: float = 8.0
    catalog_size: int = 10000
    zipf_s: float = 2.0
    cache_size: int = 6
    a: float = 0.18
    b: float = 0.03
    power_unit: float = 1e-3
    discount: float = 0.7
    theta: float = 1e-6
    max_iter: int = 10000
    power_levels: int = 11
    action_mode: str = "equal-split"
    seed: int = 0
    n_seeds: int = 10
    n_slots: int = 100_000
    warmup_fraction: float = 0.1
    trace_every: int = 1
    backhaul_charge: str = "expected"
    experiments: dict = field(default_factory=_default_experiments, compare=False, hash=False)
    # linear SI values derived from the dB inputs above
    noise_w: float = field(init=False)
    gamma_min: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "noise_w", dbm_to_watts(self.noise_dbm))
        object.__setattr__(self, "gamma_min", db_to_linear(self.gamma_min_db))
        if self.distances is not None:
            object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        errors = _validate(self)
        if errors:
            raise ConfigError(errors)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @property
    def start_energy(self) -> float:
        return self.e_max if self.initial_energy is None else self.initial_energy

    def to_dict(self) -> dict:
        """Nested, file-schema representation (dB units) of this config."""
        return {
            "network": {
                "n_users": self.n_users,
                "cell_radius_m": self.cell_radius,
                "min_distance_m": self.min_distance,
                "distances_m": None if self.distances is None else list(self.distances),
                "backhaul_distance_m": self.d_backhaul,
            },
            "battery": {
                "e_max_j": self.e_max,
                "initial_energy_j": self.initial_energy,
                "grid_cells": self.n_cells,
            },
            "harvest": {
                "rate_per_s": self.arrival_rate,
                "q_j": self.q_energy,
                "tail_tol": self.harvest_tail_tol,
            },
            "radio": {
                "p_max_w": self.p_max,
                "slot_s": self.slot_t,
                "bandwidth_hz": self.bandwidth,
                "path_loss_exp": self.alpha,
                "noise_dbm": self.noise_dbm,
                "fading_mu": self.mu,
                "gamma_min_db": self.gamma_min_db,
            },
            "content": {
                "catalog_size": self.catalog_size,
                "zipf_s": self.zipf_s,
                "cache_size": self.cache_size,
            },
            "utility": {"a": self.a, "b": self.b, "power_unit_w": self.power_unit},
            "solver": {
                "discount": self.discount,
                "theta": self.theta,
                "max_iter": self.max_iter,
                "power_levels": self.power_levels,
                "action_mode": self.action_mode,
            },
            "simulation": {
                "seed": self.seed,
                "n_seeds": self.n_seeds,
                "n_slots": self.n_slots,
                "warmup_fraction": self.warmup_fraction,
                "trace_every": self.trace_every,
                "backhaul_charge": self.backhaul_charge,
            },
            "experiments": json.loads(json.dumps(self.experiments)),
        }

    def solver_key(self, distances) -> str:
        """Content hash of every field that changes the value-iteration solve."""
        fields = {
            "distances": [repr(float(d)) for d in distances],
            **{k: repr(getattr(self, k)) for k in _SOLVER_FIELDS},
        }
        blob = json.dumps(fields, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SOLVER_FIELDS = (
    "d_backhaul", "e_max", "n_cells", "arrival_rate", "q_energy", "harvest_tail_tol",
    "p_max", "slot_t", "bandwidth", "alpha", "noise_dbm", "mu", "gamma_min_db",
    "catalog_size", "zipf_s", "cache_size", "a", "b", "power_unit", "discount",
    "theta", "max_iter", "power_levels", "action_mode",
)

# "expected": actions reserve eps * P_b against min(P_max, E/T) and a miss pays the
# realized backhaul power on top; "realized": the realized P_b must fit that cap too
BACKHAUL_CHARGES = ("expected", "realized")

# (section, key, attribute, converter)
_SCHEMA = [
    ("network", "n_users", "n_users", int),
    ("network", "cell_radius_m", "cell_radius", float),
    ("network", "min_distance_m", "min_distance", float),
    ("network", "distances_m", "distances", None),
    ("network", "backhaul_distance_m", "d_backhaul", float),
    ("battery", "e_max_j", "e_max", float),
    ("battery", "initial_energy_j", "initial_energy", None),
    ("battery", "grid_cells", "n_cells", int),
    ("harvest", "rate_per_s", "arrival_rate", float),
    ("harvest", "q_j", "q_energy", float),
    ("harvest", "tail_tol", "harvest_tail_tol", float),
    ("radio", "p_max_w", "p_max", float),
    ("radio", "slot_s", "slot_t", float),
    ("radio", "bandwidth_hz", "bandwidth", float),
    ("radio", "path_loss_exp", "alpha", float),
    ("radio", "noise_dbm", "noise_dbm", float),
    ("radio", "fading_mu", "mu", float),
    ("radio", "gamma_min_db", "gamma_min_db", float),
    ("content", "catalog_size", "catalog_size", int),
    ("content", "zipf_s", "zipf_s", float),
    ("content", "cache_size", "cache_size", int),
    ("utility", "a", "a", float),
    ("utility", "b", "b", float),
    ("utility", "power_unit_w", "power_unit", float),
    ("solver", "discount", "discount", float),
    ("solver", "theta", "theta", float),
    ("solver", "max_iter", "max_iter", int),
    ("solver", "power_levels", "power_levels", int),
    ("solver", "action_mode", "action_mode", str),
    ("simulation", "seed", "seed", int),
    ("simulation", "n_seeds", "n_seeds", int),
    ("simulation", "n_slots", "n_slots", int),
    ("simulation", "warmup_fraction", "warmup_fraction", float),
    ("simulation", "trace_every", "trace_every", int),
    ("simulation", "backhaul_charge", "backhaul_charge", str),
]
_SECTIONS = {s for s, _, _, _ in _SCHEMA} | {"experiments"}


def _validate(c: SystemConfig):
    errs = []

    def need(ok, name, msg):
        if not ok:
            errs.append((name, msg))

    need(isinstance(c.n_users, int) and c.n_users >= 1, "network.n_users", "must be an integer >= 1")
    need(c.cell_radius > 0, "network.cell_radius_m", "must be > 0")
    need(0 < c.min_distance <= c.cell_radius, "network.min_distance_m", "must lie in (0, cell_radius_m]")
    if c.distances is not None:
        need(len(c.distances) == c.n_users, "network.distances_m",
             f"needs exactly n_users={c.n_users} entries")
        need(all(d > 0 for d in c.distances), "network.distances_m", "entries must be > 0")
    need(c.d_backhaul > 0, "network.backhaul_distance_m", "must be > 0")
    need(c.e_max > 0, "battery.e_max_j", "must be > 0")
    if c.initial_energy is not None:
        need(0 <= c.initial_energy <= c.e_max, "battery.initial_energy_j", "must lie in [0, e_max_j]")
    need(isinstance(c.n_cells, int) and c.n_cells >= 2, "battery.grid_cells", "must be an integer >= 2")
    need(c.arrival_rate >= 0, "harvest.rate_per_s", "must be >= 0")
    need(c.q_energy >= 0, "harvest.q_j", "must be >= 0")
    need(0 < c.harvest_tail_tol < 1, "harvest.tail_tol", "must lie in (0, 1)")
    need(c.p_max > 0, "radio.p_max_w", "must be > 0")
    need(c.slot_t > 0, "radio.slot_s", "must be > 0")
    need(c.bandwidth > 0, "radio.bandwidth_hz", "must be > 0")
    need(c.alpha > 0, "radio.path_loss_exp", "must be > 0")
    need(math.isfinite(c.noise_dbm), "radio.noise_dbm", "must be finite")
    need(c.mu > 0, "radio.fading_mu", "must be > 0")
    need(math.isfinite(c.gamma_min_db), "radio.gamma_min_db", "must be finite")
    need(isinstance(c.catalog_size, int) and c.catalog_size >= 1, "content.catalog_size", "must be an integer >= 1")
    need(c.zipf_s > 1, "content.zipf_s", "must be > 1")
    need(isinstance(c.cache_size, int) and 0 <= c.cache_size <= c.catalog_size,
         "content.cache_size", "must lie in [0, catalog_size]")
    need(c.a > c.b > 0, "utility.a", f"need a > b > 0 (got a={c.a}, b={c.b})")
    need(c.power_unit > 0, "utility.power_unit_w", "must be > 0")
    need(0 <= c.discount < 1, "solver.discount", "must lie in [0, 1)")
    need(c.theta > 0, "solver.theta", "must be > 0")
    need(isinstance(c.max_iter, int) and c.max_iter >= 1, "solver.max_iter", "must be an integer >= 1")
    need(isinstance(c.power_levels, int) and c.power_levels >= 2, "solver.power_levels", "must be an integer >= 2")
    need(c.action_mode in ("equal-split", "exhaustive"), "solver.action_mode",
         "must be 'equal-split' or 'exhaustive'")
    if c.action_mode == "exhaustive":
        need(c.n_users <= 3, "solver.action_mode", "exhaustive mode allows at most 3 users")
    need(isinstance(c.seed, int) and c.seed >= 0, "simulation.seed", "must be a non-negative integer")
    need(isinstance(c.n_seeds, int) and c.n_seeds >= 1, "simulation.n_seeds", "must be an integer >= 1")
    need(isinstance(c.n_slots, int) and c.n_slots >= 1, "simulation.n_slots", "must be an integer >= 1")
    need(0 <= c.warmup_fraction < 1, "simulation.warmup_fraction", "must lie in [0, 1)")
    need(isinstance(c.trace_every, int) and c.trace_every >= 1, "simulation.trace_every", "must be an integer >= 1")
    need(c.backhaul_charge in BACKHAUL_CHARGES, "simulation.backhaul_charge",
         f"must be one of {BACKHAUL_CHARGES}")
    return errs


def config_from_dict(data: dict | None) -> SystemConfig:
    """Build a validated config from the nested file schema."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "top level must be a mapping")])
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # a run manifest embeds its config under this key
    errors = [(k, "unknown section") for k in data if k not in _SECTIONS]
    kwargs = {}
    known = {(s, k) for s, k, _, _ in _SCHEMA}
    for section, body in data.items():
        if section == "experiments" or section not in _SECTIONS:
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            errors.append((section, "must be a mapping"))
            continue
        for key in body:
            if (section, key) not in known:
                errors.append((f"{section}.{key}", "unknown key"))
    for section, key, attr, conv in _SCHEMA:
        body = data.get(section) or {}
        if not isinstance(body, dict) or key not in body:
            continue
        value = body[key]
        try:
            if conv is None:
                if attr == "distances" and value is not None:
                    value = tuple(float(v) for v in value)
                elif attr == "initial_energy" and value is not None:
                    value = float(value)
            elif conv is int:
                if isinstance(value, bool) or float(value) != int(value):
                    raise ValueError("not an integer")
                value = int(value)
            else:
                value = conv(value)
        except (TypeError, ValueError) as exc:
            errors.append((f"{section}.{key}", f"invalid value {value!r} ({exc})"))
            continue
        kwargs[attr] = value
    exp = _default_experiments()
    user_exp = data.get("experiments") or {}
    if not isinstance(user_exp, dict):
        errors.append(("experiments", "must be a mapping"))
    else:
        for fig, body in user_exp.items():
            if fig not in exp:
                errors.append((f"experiments.{fig}", "unknown experiment"))
            elif not isinstance(body, dict):
                errors.append((f"experiments.{fig}", "must be a mapping"))
            else:
                exp[fig].update(body)
    kwargs["experiments"] = exp
    if errors:
        raise ConfigError(errors)
    return SystemConfig(**kwargs)


def load_config(path=None) -> SystemConfig:
    """Read and validate a YAML/JSON config file; ``None`` gives the defaults."""
    if path is None:
        return SystemConfig()
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from exc
    return config_from_dict(data)


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
