"""Builders that turn a :class:`SystemConfig` into model objects."""
from __future__ import annotations

import numpy as np

from .battery import EnergyGrid, HarvestDistribution, build_harvest_distribution
from .config import SystemConfig
from .popularity import ZipfCatalog, backhaul_access_probability, miss_probability
from .rng import stream
from .utility import EfficiencyExponentParams, LinkGeometry


def place_users(n_users: int, radius: float, min_distance: float,
                rng: np.random.Generator) -> np.ndarray:
    """Distances of users dropped uniformly over the disc, excluding ``r < min_distance``.

    Radial law has density proportional to ``r``.  Draws are prefix-stable:
    the first ``k`` users are the same whatever ``n_users >= k`` is.
    """
    u = rng.random(n_users)
    return np.sqrt(min_distance ** 2 + (radius ** 2 - min_distance ** 2) * u)


def user_distances(cfg: SystemConfig) -> np.ndarray:
    if cfg.distances is not None:
        return np.asarray(cfg.distances, dtype=np.float64)
    return place_users(cfg.n_users, cfg.cell_radius, cfg.min_distance,
                       stream(cfg.seed, "placement"))


def geometry(cfg: SystemConfig, distances=None) -> LinkGeometry:
    d = user_distances(cfg) if distances is None else distances
    return LinkGeometry(tuple(d), cfg.d_backhaul, cfg.alpha, cfg.noise_w, cfg.mu)


def energy_grid(cfg: SystemConfig) -> EnergyGrid:
    return EnergyGrid(cfg.e_max, cfg.n_cells)


def harvest(cfg: SystemConfig) -> HarvestDistribution:
    return build_harvest_distribution(cfg.arrival_rate, cfg.slot_t, cfg.q_energy,
                                      cfg.harvest_tail_tol)


def catalog(cfg: SystemConfig) -> ZipfCatalog:
    return ZipfCatalog(cfg.zipf_s, cfg.catalog_size, cfg.cache_size)


def exponent_params(cfg: SystemConfig) -> EfficiencyExponentParams:
    return EfficiencyExponentParams(cfg.a, cfg.b, cfg.power_unit)


def backhaul_probability(cfg: SystemConfig) -> float:
    """Per-slot probability that the backhaul is needed."""
    return backhaul_access_probability(miss_probability(catalog(cfg)), cfg.n_users)


def backhaul_coefficient(cfg: SystemConfig) -> float:
    """``gamma_min * d_b**alpha * sigma2``: backhaul power (W) needed at unit channel gain."""
    return cfg.gamma_min * cfg.d_backhaul ** cfg.alpha * cfg.noise_w


def bandwidths(cfg: SystemConfig) -> np.ndarray:
    return np.full(cfg.n_users, cfg.bandwidth, dtype=np.float64)
