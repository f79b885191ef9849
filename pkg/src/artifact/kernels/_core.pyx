# cython: language_level=3
"""Compiled hot kernels; see ``fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log2, pow, floor, fabs, INFINITY

cnp.import_array()

cdef double EULER_GAMMA = 0.57721566490153286060651209008240243
cdef double _EPS = 2.220446049250313e-16
cdef double _FPMIN = 1e-300
cdef int _MAX_TERMS = 500
cdef double POWER_ATOL = 1e-12


cdef double _e1_series(double x) nogil:
    cdef double total = 0.0, fact = 1.0, term
    cdef int k
    for k in range(1, _MAX_TERMS):
        fact *= -x / k
        term = fact / k
        total += term
        if fabs(term) < fabs(total) * _EPS:
            break
    return -EULER_GAMMA - log(x) - total


cdef double _e1_cfrac(double x) nogil:
    cdef double b = x + 1.0, c = 1.0 / _FPMIN, d = 1.0 / b, h = d, a, delta
    cdef int i
    for i in range(1, _MAX_TERMS):
        a = -<double>(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            break
    return h


cdef inline double _e1_scaled(double x) nogil:
    if x <= 1.0:
        return exp(x) * _e1_series(x)
    return _e1_cfrac(x)


cdef inline double _e1(double x) nogil:
    if x <= 1.0:
        return _e1_series(x)
    if x > 745.0:
        return 0.0
    return _e1_cfrac(x) * exp(-x)


def e1_scaled(double x):
    if not x > 0:
        raise ValueError(f"E1 requires x > 0, got {x}")
    return _e1_scaled(x)


def e1(double x):
    if not x > 0:
        raise ValueError(f"E1 requires x > 0, got {x}")
    return _e1(x)


def e1_scaled_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty_like(flat)
    cdef Py_ssize_t i
    if flat.size and not np.all(flat > 0):
        raise ValueError("E1 requires x > 0")
    for i in range(flat.shape[0]):
        res[i] = _e1_scaled(flat[i])
    return res.reshape(np.shape(x))


def e1_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.empty_like(flat)
    cdef Py_ssize_t i
    if flat.size and not np.all(flat > 0):
        raise ValueError("E1 requires x > 0")
    for i in range(flat.shape[0]):
        res[i] = _e1(flat[i])
    return res.reshape(np.shape(x))


def bellman_sweep(const double[:, ::1] utilities, const int[::1] indptr,
                  const int[::1] indices, const double[::1] data,
                  const double[::1] values, double discount):
    cdef Py_ssize_t n_s = utilities.shape[0], n_a = utilities.shape[1]
    cdef Py_ssize_t s, a, r, j
    cdef double ev, q, best
    cdef Py_ssize_t best_a
    new_values = np.empty(n_s, dtype=np.float64)
    best_action = np.empty(n_s, dtype=np.int64)
    cdef double[::1] nv = new_values
    cdef long long[::1] ba = best_action
    for s in range(n_s):
        best = -INFINITY
        best_a = 0
        for a in range(n_a):
            r = s * n_a + a
            ev = 0.0
            for j in range(indptr[r], indptr[r + 1]):
                ev += data[j] * values[indices[j]]
            q = utilities[s, a] + discount * ev
            if q > best:
                best = q
                best_a = a
        nv[s] = best
        ba[s] = best_a
    return new_values, best_action


cdef inline double _interp(const double[::1] values, double delta_e, double e) nogil:
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t i = <Py_ssize_t>floor(e / delta_e)
    cdef double frac
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


def interp_value(const double[::1] values, double delta_e, double e):
    return _interp(values, delta_e, e)


cdef Py_ssize_t _lookahead(double e, const double[::1] gains, double pb, double budget,
                           const double[::1] bandwidth, const double[:, ::1] action_powers,
                           const double[::1] action_dl, const double[::1] action_offline,
                           const double[::1] values, double delta_e, double e_max,
                           double slot_t, double discount, const double[::1] harvest_pmf,
                           double q_energy, double g_a, double g_b, double power_unit,
                           int charge_mode) nogil:
    cdef Py_ssize_t n_a = action_powers.shape[0], n_u = action_powers.shape[1]
    cdef Py_ssize_t a, i, k
    cdef double g = g_a + (g_b - g_a) * e / e_max
    cdef double best = -INFINITY, dl, num, score, base, future, en
    cdef Py_ssize_t best_idx = 0
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
                num += bandwidth[i] * log2(1.0 + action_powers[a, i] * gains[i])
            score = num / pow(dl / power_unit, g)
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
            future += harvest_pmf[k] * _interp(values, delta_e, en)
        score += discount * future
        if score > best:
            best = score
            best_idx = a
    return best_idx


def lookahead_index(double e, const double[::1] gains, double pb, double budget,
                    const double[::1] bandwidth, const double[:, ::1] action_powers,
                    const double[::1] action_dl, const double[::1] action_offline,
                    const double[::1] values, double delta_e, double e_max,
                    double slot_t, double discount, const double[::1] harvest_pmf,
                    double q_energy, double g_a, double g_b, double power_unit,
                    int charge_mode):
    return _lookahead(e, gains, pb, budget, bandwidth, action_powers, action_dl,
                      action_offline, values, delta_e, e_max, slot_t, discount,
                      harvest_pmf, q_energy, g_a, g_b, power_unit, charge_mode)


def simulate_chunk(int policy, int charge_mode, double reserve, double e0, const double[:, ::1] h2, const double[::1] h2b,
                   const unsigned char[::1] miss, const long long[::1] arrivals,
                   const double[::1] snr_coef, const double[::1] bandwidth,
                   double p_max, double slot_t, double e_max, double q_energy,
                   double backhaul_coef, double g_a, double g_b, double power_unit,
                   const double[:, ::1] action_powers, const double[::1] action_dl,
                   const double[::1] action_offline, const double[::1] values,
                   double delta_e, double discount, const double[::1] harvest_pmf,
                   double[::1] out_start, long long[::1] out_action, double[::1] out_dl,
                   double[::1] out_pb, double[::1] out_harv, double[::1] out_end,
                   double[::1] out_tput, unsigned char[::1] out_idle,
                   unsigned char[::1] out_bh):
    cdef Py_ssize_t n = h2.shape[0], n_u = h2.shape[1]
    cdef Py_ssize_t t, i
    cdef double e = e0, start, budget, pb, hb, dl, tput, share, drain, harv, scale, trimmed
    cdef bint forced_idle
    cdef Py_ssize_t action
    gains_arr = np.empty(n_u, dtype=np.float64)
    cdef double[::1] gains = gains_arr
    with nogil:
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
                action = _lookahead(e, gains, pb, budget, bandwidth, action_powers,
                                    action_dl, action_offline, values, delta_e,
                                    e_max, slot_t, discount, harvest_pmf, q_energy,
                                    g_a, g_b, power_unit, charge_mode)
                dl = action_dl[action]
            else:
                action = -1
                if charge_mode == 0:
                    dl = budget - pb
                else:
                    dl = budget - reserve
            scale = 1.0
            if dl > 0.0 and charge_mode == 1 and (dl + pb) * slot_t > e:
                trimmed = e / slot_t - pb
                if trimmed > 0.0:
                    scale = trimmed / dl
                else:
                    scale = 0.0
                dl = trimmed
            if dl > 0.0:
                if policy == 0:
                    for i in range(n_u):
                        tput += bandwidth[i] * log2(1.0 + action_powers[action, i] * scale * gains[i])
                else:
                    share = dl / n_u
                    for i in range(n_u):
                        tput += bandwidth[i] * log2(1.0 + share * gains[i])
            else:
                dl = 0.0
            if dl <= 0.0:
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
