"""Battery dynamics, Poisson energy harvesting and the discretized energy grid.

Energies are joules, powers watts, durations seconds.  The grid carries
continuous energies onto its nodes with two-point linear interpolation, which
keeps the expected next-state energy exact for unclamped transitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import pdtrc

# relative slack for the "drain <= stored energy" check; covers e/T*T rounding
DRAIN_RTOL = 1e-12


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform grid ``0, delta_e, ..., e_max`` over the battery interval."""

    e_max: float
    n_cells: int

    def __post_init__(self):
        if not self.e_max > 0:
            raise ValueError(f"e_max must be positive, got {self.e_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")

    @property
    def delta_e(self) -> float:
        return self.e_max / (self.n_cells - 1)

    @property
    def energies(self) -> np.ndarray:
        e = np.arange(self.n_cells, dtype=np.float64) * self.delta_e
        e[-1] = self.e_max
        return e

    def energy(self, i: int) -> float:
        if i == self.n_cells - 1:
            return float(self.e_max)
        return i * self.delta_e


@dataclass(frozen=True)
class HarvestDistribution:
    """Truncated Poisson law of the number of energy arrivals in one slot.

    ``pmf[k]`` is the Poisson probability of ``k`` arrivals for ``k < k_max``;
    ``pmf[k_max]`` carries the whole tail ``P(N >= k_max)``.
    """

    lambda_rate: float
    slot_t: float
    q_energy: float
    k_max: int
    pmf: np.ndarray = field(repr=False, compare=False)

    @property
    def amounts(self) -> np.ndarray:
        """Harvested energy (J) for each arrival count ``0..k_max``."""
        return np.arange(self.k_max + 1) * self.q_energy

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Arrival counts drawn from the truncated law."""
        if self.k_max == 0:
            return np.zeros(size, dtype=np.int64)
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right").astype(np.int64)


def build_harvest_distribution(lambda_rate: float, slot_t: float, q_energy: float,
                               tail_tol: float = 1e-12) -> HarvestDistribution:
    """Poisson(``lambda_rate * slot_t``) arrivals truncated once the tail drops below ``tail_tol``."""
    if lambda_rate < 0 or q_energy < 0:
        raise ValueError("arrival rate and energy per arrival must be non-negative")
    if not slot_t > 0:
        raise ValueError(f"slot duration must be positive, got {slot_t}")
    if not 0 < tail_tol < 1:
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol}")
    m = lambda_rate * slot_t
    if m == 0:
        return HarvestDistribution(lambda_rate, slot_t, q_energy, 0, np.array([1.0]))
    k_max = 0
    while pdtrc(k_max, m) >= tail_tol:  # pdtrc(k, m) = P(N > k)
        k_max += 1
    head = [math.exp(-m)]
    for k in range(1, k_max):
        head.append(head[-1] * m / k)
    pmf = np.array(head[:k_max] + [pdtrc(k_max - 1, m)])
    pmf.setflags(write=False)
    return HarvestDistribution(lambda_rate, slot_t, q_energy, k_max, pmf)


def step_energy(e: float, total_power: float, slot_t: float, harvested: float,
                e_max: float) -> float:
    """Battery level after one slot: drain first, then credit the harvest, clamp at capacity."""
    drain = total_power * slot_t
    if total_power < 0 or harvested < 0:
        raise ValueError("power and harvested energy must be non-negative")
    if drain > e * (1 + DRAIN_RTOL) + 1e-300:
        raise ValueError(f"slot drain {drain!r} J exceeds stored energy {e!r} J")
    drain = min(drain, e)
    return min(e - drain + harvested, e_max)


def quantize(e: float, grid: EnergyGrid):
    """Split energy ``e`` onto its two bracketing grid nodes.

    Returns ``((i, w), (j, 1 - w))`` with ``w * E_i + (1 - w) * E_j == e``.
    On-grid energies put weight 1 on a single node.
    """
    if not 0.0 <= e <= grid.e_max:
        raise ValueError(f"energy {e!r} outside [0, {grid.e_max}]")
    i, frac = _bracket(e, grid)
    i, frac = int(i), float(frac)
    return (i, 1.0 - frac), (i + 1, frac)


def _bracket(e, grid: EnergyGrid):
    """Lower node index and fractional offset toward the next node (vectorized)."""
    e = np.asarray(e, dtype=np.float64)
    delta = grid.delta_e
    top = grid.n_cells - 2
    i = np.clip(np.floor(e / delta).astype(np.int64), 0, top)
    frac = (e - i * delta) / delta
    # floor() of a rounded quotient can land one node off
    i = np.where((frac < 0) & (i > 0), i - 1, i)
    i = np.where((frac > 1) & (i < top), i + 1, i)
    frac = np.clip((e - i * delta) / delta, 0.0, 1.0)
    frac = np.where(e >= grid.e_max, 1.0, frac)
    return i, frac


@dataclass(frozen=True)
class TransitionRow:
    """Sparse next-state distribution over grid indices."""

    indices: np.ndarray
    probs: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(p) for i, p in zip(self.indices, self.probs)}

    def expectation(self, values: np.ndarray) -> float:
        return float(np.dot(self.probs, np.asarray(values)[self.indices]))


def build_transition_row(grid_index: int, total_power: float, grid: EnergyGrid,
                         harvest: HarvestDistribution) -> TransitionRow:
    """Next-state distribution from node ``grid_index`` under a total power draw."""
    e = grid.energy(grid_index)
    if total_power < 0:
        raise ValueError("total power must be non-negative")
    if total_power * harvest.slot_t > e * (1 + DRAIN_RTOL) + 1e-300:
        raise ValueError(
            f"power {total_power} W infeasible at node {grid_index} ({e} J stored)")
    acc: dict[int, float] = {}
    for k, pk in enumerate(harvest.pmf):
        if pk == 0.0:
            continue
        e_next = min(max(e - total_power * harvest.slot_t, 0.0) + k * harvest.q_energy,
                     grid.e_max)
        for idx, w in quantize(e_next, grid):
            if w:
                acc[idx] = acc.get(idx, 0.0) + pk * w
    idx = np.fromiter(sorted(acc), dtype=np.int64)
    return TransitionRow(idx, np.array([acc[i] for i in idx]))


def build_transition_matrix(grid: EnergyGrid, totals: np.ndarray,
                            harvest: HarvestDistribution) -> sp.csr_matrix:
    """Stack transition rows for every (node, action) pair.

    Row ``s * n_actions + a`` holds the next-state law for node ``s`` under an
    action of total power ``totals[a]``.  Pairs whose drain exceeds the stored
    energy are left empty; callers mask them as infeasible.
    """
    totals = np.asarray(totals, dtype=np.float64)
    n_s, n_a = grid.n_cells, totals.size
    e = grid.energies
    drain = totals[None, :] * harvest.slot_t
    feasible = drain <= e[:, None] * (1 + DRAIN_RTOL)
    base = np.maximum(e[:, None] - drain, 0.0)
    nxt = np.minimum(base[..., None] + harvest.amounts, grid.e_max)
    lo, frac = _bracket(nxt.ravel(), grid)
    hi = lo + 1
    pk = np.broadcast_to(harvest.pmf, nxt.shape).ravel()
    rows = np.broadcast_to(np.arange(n_s * n_a).reshape(n_s, n_a, 1), nxt.shape).ravel()
    keep = np.repeat(feasible.ravel(), harvest.k_max + 1)
    r = np.concatenate([rows[keep], rows[keep]])
    c = np.concatenate([lo[keep], hi[keep]])
    v = np.concatenate([(pk * (1.0 - frac))[keep], (pk * frac)[keep]])
    mat = sp.coo_matrix((v, (r, c)), shape=(n_s * n_a, n_s)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat
