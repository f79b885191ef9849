"""Energy-efficiency utility of the base station and its Rayleigh average.

The per-slot utility is sum throughput divided by the total downlink power
raised to a battery-dependent exponent ``g(E)``.  Averaging over Rayleigh
fading has a closed form in terms of ``exp(x) * E1(x)``, evaluated here in the
fused (overflow-free) form.  A Monte Carlo estimator of the same average is
provided as an independent check.

Powers in the denominator are measured in units of ``power_unit`` watts
(``EfficiencyExponentParams.power_unit``, 1 W by default).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LinkGeometry:
    """Distances, path loss, noise and fading rate of the downlink and backhaul."""

    distances: tuple
    d_backhaul: float
    alpha: float
    sigma2: float
    mu: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        if d.ndim != 1 or d.size == 0 or not np.all(d > 0):
            raise ValueError("distances must be a non-empty vector of positive values")
        for name in ("d_backhaul", "alpha", "sigma2", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        object.__setattr__(self, "distances", tuple(float(x) for x in d))

    @property
    def n_users(self) -> int:
        return len(self.distances)

    @property
    def path_loss(self) -> np.ndarray:
        """``d_i**alpha * sigma2`` per user (W)."""
        return np.asarray(self.distances) ** self.alpha * self.sigma2

    @property
    def snr_per_watt(self) -> np.ndarray:
        """SNR per watt of transmit power at unit channel gain, per user."""
        return 1.0 / self.path_loss


@dataclass(frozen=True)
class EfficiencyExponentParams:
    """Constants of the battery-dependent exponent, ``a > b > 0``."""

    a: float = 0.18
    b: float = 0.03
    power_unit: float = 1.0

    def __post_init__(self):
        if not self.a > self.b > 0:
            raise ValueError(f"need a > b > 0, got a={self.a}, b={self.b}")
        if not self.power_unit > 0:
            raise ValueError("power_unit must be positive")


def g_exponent(e, params: EfficiencyExponentParams, e_max: float):
    """Exponent ``a + (b - a) * e / e_max``, falling from ``a`` (empty) to ``b`` (full)."""
    e_arr = np.asarray(e, dtype=np.float64)
    if np.any(e_arr < 0) or np.any(e_arr > e_max):
        raise ValueError(f"energy outside [0, {e_max}]")
    g = params.a + (params.b - params.a) * e_arr / e_max
    return float(g) if g.ndim == 0 else g


def snr(power, h2, d, alpha, sigma2):
    """Received SNR ``P * h2 / (d**alpha * sigma2)``."""
    return np.asarray(power) * np.asarray(h2) / (np.asarray(d) ** alpha * sigma2)


def sum_throughput(bandwidths, powers, h2s, geom: LinkGeometry) -> float:
    """Sum over users of ``W_i * log2(1 + SNR_i)`` in bits/s."""
    gamma = snr(powers, h2s, np.asarray(geom.distances), geom.alpha, geom.sigma2)
    return float(np.sum(np.asarray(bandwidths, dtype=np.float64) * np.log2(1.0 + gamma)))


def _denominator(powers, e, params, e_max):
    total = float(np.sum(powers))
    return (total / params.power_unit) ** g_exponent(e, params, e_max)


def _check_vectors(bandwidths, powers, n_users):
    w = np.broadcast_to(np.asarray(bandwidths, dtype=np.float64), (n_users,))
    p = np.asarray(powers, dtype=np.float64)
    if p.shape != (n_users,):
        raise ValueError(f"expected {n_users} per-user powers, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    return w, p


def instantaneous_utility(bandwidths, powers, h2s, e: float, geom: LinkGeometry,
                          params: EfficiencyExponentParams, e_max: float) -> float:
    """Realized utility for one channel draw; zero when no power is transmitted."""
    w, p = _check_vectors(bandwidths, powers, geom.n_users)
    if not np.any(p > 0):
        return 0.0
    return sum_throughput(w, p, h2s, geom) / _denominator(p, e, params, e_max)


def exp_gamma0(x: float) -> float:
    """Upper incomplete gamma ``Gamma(0, x)``, i.e. the exponential integral ``E1(x)``.

    Series expansion for ``x <= 1``, continued fraction above; returns 0 once
    the result underflows.  Raises ``ValueError`` for ``x <= 0``.
    """
    return kernels.e1(float(x))


def exp_gamma0_scaled(x: float) -> float:
    """``exp(x) * Gamma(0, x)`` evaluated without forming either factor."""
    return kernels.e1_scaled(float(x))


def average_utility(bandwidths, powers, e: float, geom: LinkGeometry,
                    params: EfficiencyExponentParams, e_max: float) -> float:
    """Utility averaged over Rayleigh fading, in closed form.

    Each transmitting user contributes ``W_i * exp(x_i) * E1(x_i) / ln 2`` with
    ``x_i = mu * d_i**alpha * sigma2 / P_i``; users with zero power contribute
    nothing.
    """
    w, p = _check_vectors(bandwidths, powers, geom.n_users)
    on = p > 0
    if not np.any(on):
        return 0.0
    x = geom.mu * geom.path_loss[on] / p[on]
    num = float(np.sum(w[on] * kernels.e1_scaled_array(x)))
    return num / (LN2 * _denominator(p, e, params, e_max))


def average_utility_table(bandwidths, power_matrix, energies, geom: LinkGeometry,
                          params: EfficiencyExponentParams, e_max: float) -> np.ndarray:
    """Closed-form average utility for every (energy, action) pair.

    ``power_matrix`` is ``(n_actions, n_users)``; returns ``(n_energies, n_actions)``.
    """
    pm = np.asarray(power_matrix, dtype=np.float64)
    w = np.broadcast_to(np.asarray(bandwidths, dtype=np.float64), (geom.n_users,))
    on = pm > 0
    x = np.where(on, geom.mu * geom.path_loss[None, :] / np.where(on, pm, 1.0), 1.0)
    terms = np.where(on, w[None, :] * kernels.e1_scaled_array(x), 0.0)
    num = terms.sum(axis=1) / LN2
    totals = pm.sum(axis=1)
    g = g_exponent(np.asarray(energies, dtype=np.float64), params, e_max)
    g = np.atleast_1d(g)
    with np.errstate(divide="ignore"):
        den = (totals[None, :] / params.power_unit) ** g[:, None]
    return np.where(totals[None, :] > 0, num[None, :] / np.where(den > 0, den, 1.0), 0.0)


def mc_average_utility(bandwidths, powers, e: float, geom: LinkGeometry,
                       params: EfficiencyExponentParams, e_max: float,
                       rng: np.random.Generator, n_samples: int,
                       batch: int = 250_000):
    """Monte Carlo estimate of the fading-averaged utility.

    Draws ``h2 ~ Exponential(rate=mu)`` per user per sample and averages the
    throughput numerator; the denominator does not depend on the channel.

    Returns
    -------
    estimate, standard_error : float
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    w, p = _check_vectors(bandwidths, powers, geom.n_users)
    if not np.any(p > 0):
        return 0.0, 0.0
    gamma_scale = p / geom.path_loss
    den = _denominator(p, e, params, e_max)
    # batched mean / sum of squared deviations, merged pairwise
    count, mean, m2 = 0, 0.0, 0.0
    while count < n_samples:
        m = min(batch, n_samples - count)
        h2 = rng.exponential(1.0 / geom.mu, size=(m, geom.n_users))
        vals = np.log2(1.0 + h2 * gamma_scale) @ w
        b_mean = float(vals.mean())
        b_m2 = float(np.sum((vals - b_mean) ** 2))
        delta = b_mean - mean
        tot = count + m
        mean += delta * m / tot
        m2 += b_m2 + delta * delta * count * m / tot
        count = tot
    se = math.sqrt(m2 / max(count - 1, 1) / count)
    return mean / den, se / den
