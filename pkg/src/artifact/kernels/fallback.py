"""Pure-Python/NumPy implementations of the hot kernels.

Every function here has a drop-in twin in ``_core.pyx`` with the same
signature and the same floating-point operation order, so both backends
produce matching results.  This module is what runs when the extension is not
built or ``ARTIFACT_KERNELS=python`` is set.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

EULER_GAMMA = 0.57721566490153286060651209008240243
_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_MAX_TERMS = 500
# absolute slack (W) when comparing a power draw against the slot budget
POWER_ATOL = 1e-12


def e1_scaled(x: float) -> float:
    """``exp(x) * E1(x)`` for ``x > 0`` without forming either factor alone."""
    if not x > 0:
        raise ValueError(f"E1 requires x > 0, got {x}")
    if x <= 1.0:
        return math.exp(x) * _e1_series(x)
    return _e1_cfrac(x)


def e1(x: float) -> float:
    """Exponential integral ``E1(x) = Gamma(0, x)`` for ``x > 0``."""
    if not x > 0:
        raise ValueError(f"E1 requires x > 0, got {x}")
    if x <= 1.0:
        return _e1_series(x)
    if x > 745.0:
        return 0.0
    return _e1_cfrac(x) * math.exp(-x)


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k * k!)
    total = 0.0
    fact = 1.0
    for k in range(1, _MAX_TERMS):
        fact *= -x / k
        term = fact / k
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return -EULER_GAMMA - math.log(x) - total


def _e1_cfrac(x: float) -> float:
    # modified Lentz evaluation of exp(x) * E1(x)
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def e1_scaled_array(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    flat, res = x.ravel(), out.ravel()
    for i in range(flat.size):
        res[i] = e1_scaled(float(flat[i]))
    return out


def e1_array(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    flat, res = x.ravel(), out.ravel()
    for i in range(flat.size):
        res[i] = e1(float(flat[i]))
    return out


def bellman_sweep(utilities, indptr, indices, data, values, discount):
    """One Jacobi backup: returns ``(new_values, argmax_action)``.

    ``utilities`` is ``(n_states, n_actions)`` with ``-inf`` marking
    infeasible pairs; the CSR arrays hold row ``s * n_actions + a``.
    Ties go to the lowest action index.
    """
    n_s, n_a = utilities.shape
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_s * n_a, values.size))
    q = utilities + discount * (mat @ values).reshape(n_s, n_a)
    best = np.argmax(q, axis=1)
    return q[np.arange(n_s), best], best.astype(np.int64)


def interp_value(values, delta_e: float, e: float) -> float:
    n = values.shape[0]
    i = int(math.floor(e / delta_e))
    if i > n - 2:
        i = n - 2
    if i < 0:
        i = 0
    frac = (e - i * delta_e) / delta_e
    if frac < 0.0:
        frac = 0.0
    elif frac > 1.0:
        frac = 1.0
    return values[i] * (1.0 - frac) + values[i + 1] * frac


def lookahead_index(e, gains, pb, budget, bandwidth, action_powers, action_dl,
                    action_offline, values, delta_e, e_max, slot_t, discount,
                    harvest_pmf, q_energy, g_a, g_b, power_unit, charge_mode) -> int:
    """Index of the action maximizing realized utility plus discounted value.

    ``gains[i]`` is user ``i``'s realized SNR per watt; ``pb`` is the backhaul
    power committed this slot.  With ``charge_mode`` 0 an action is feasible
    when its downlink power plus ``pb`` fits ``budget``; with 1 its offline
    total (downlink plus expected backhaul reservation) must fit.  Actions
    must be sorted by total power so that ties resolve toward the cheapest one.
    """
    n_a, n_u = action_powers.shape
    g = g_a + (g_b - g_a) * e / e_max
    best = -math.inf
    best_idx = 0
    for a in range(n_a):
        dl = action_dl[a]
        if charge_mode == 0:
            if dl + pb > budget + POWER_ATOL:
                continue
        elif action_offline[a] > budget + POWER_ATOL:
            continue
        if dl > 0.0:
            num = 0.0
            for i in range(n_u):
                num += bandwidth[i] * math.log2(1.0 + action_powers[a, i] * gains[i])
            score = num / (dl / power_unit) ** g
        else:
            score = 0.0
        base = e - action_offline[a] * slot_t
        if base < 0.0:
            base = 0.0
        future = 0.0
        for k in range(harvest_pmf.shape[0]):
            en = base + k * q_energy
            if en > e_max:
                en = e_max
            future += harvest_pmf[k] * interp_value(values, delta_e, en)
        score += discount * future
        if score > best:
            best = score
            best_idx = a
    return best_idx


def simulate_chunk(policy, charge_mode, reserve, e0, h2, h2b, miss, arrivals,
                   snr_coef, bandwidth, p_max, slot_t, e_max, q_energy, backhaul_coef,
                   g_a, g_b, power_unit, action_powers, action_dl, action_offline,
                   values, delta_e, discount, harvest_pmf,
                   out_start, out_action, out_dl, out_pb, out_harv, out_end,
                   out_tput, out_idle, out_bh) -> float:
    """Advance the battery through one chunk of pre-drawn slots.

    ``policy`` is 0 for value-function lookahead and 1 for the max-power
    baseline.  ``charge_mode`` 0 fits downlink plus realized backhaul power
    into ``min(P_max, E/T)``; mode 1 fits downlink plus the expected
    reservation ``reserve`` and then pays the realized backhaul power on top,
    trimming the downlink only if the battery cannot cover the slot.
    Per-slot records are written into the ``out_*`` arrays and the final
    battery level is returned.
    """
    n, n_u = h2.shape
    gains = np.empty(n_u)
    e = e0
    for t in range(n):
        start = e
        budget = e / slot_t
        if budget > p_max:
            budget = p_max
        for i in range(n_u):
            gains[i] = h2[t, i] * snr_coef[i]
        pb = 0.0
        forced_idle = False
        if miss[t]:
            hb = h2b[t]
            if hb > 0.0:
                pb = backhaul_coef / hb
            if hb <= 0.0 or pb > budget:
                forced_idle = True
                pb = 0.0
        action = 0
        tput = 0.0
        if forced_idle:
            dl = 0.0
        elif policy == 0:
            action = lookahead_index(e, gains, pb, budget, bandwidth, action_powers,
                                     action_dl, action_offline, values, delta_e,
                                     e_max, slot_t, discount, harvest_pmf, q_energy,
                                     g_a, g_b, power_unit, charge_mode)
            dl = action_dl[action]
        else:
            action = -1
            dl = budget - (pb if charge_mode == 0 else reserve)
        scale = 1.0
        if dl > 0.0 and charge_mode == 1 and (dl + pb) * slot_t > e:
            trimmed = e / slot_t - pb
            scale = trimmed / dl if trimmed > 0.0 else 0.0
            dl = trimmed
        if dl > 0.0:
            if policy == 0:
                for i in range(n_u):
                    tput += bandwidth[i] * math.log2(1.0 + action_powers[action, i] * scale * gains[i])
            else:
                share = dl / n_u
                for i in range(n_u):
                    tput += bandwidth[i] * math.log2(1.0 + share * gains[i])
        else:
            dl = 0.0
        if dl <= 0.0:
            # nothing to deliver, so nothing is fetched either
            pb = 0.0
            if policy != 0:
                action = 0
        drain = (dl + pb) * slot_t
        if drain > e:
            drain = e
        harv = arrivals[t] * q_energy
        e = e - drain + harv
        if e > e_max:
            e = e_max
        out_start[t] = start
        out_action[t] = action
        out_dl[t] = dl
        out_pb[t] = pb
        out_harv[t] = harv
        out_end[t] = e
        out_tput[t] = tput
        out_idle[t] = dl <= 0.0
        out_bh[t] = pb > 0.0
    return e
