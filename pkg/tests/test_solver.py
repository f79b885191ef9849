import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact import kernels, model
from artifact.battery import build_transition_row
from artifact.config import ConfigError, SystemConfig
from artifact.solver import (ConvergenceError, ValueFunction, build_action_set, build_mdp,
                             feasible_actions, iterate_values, load_snapshot, lookahead_tables,
                             one_step_lookahead, save_snapshot, solve, value_iteration)
from artifact.utility import average_utility, instantaneous_utility

# 0.17036 W: backhaul power needed at unit channel gain for the default geometry
BACKHAUL_COEF = 0.1703584830096522


def tiny_cfg(**kw):
    """5 energy states, 3 actions, one user; strong harvesting keeps every action relevant."""
    base = dict(n_users=1, distances=(200.0,), e_max=0.004, n_cells=5, power_levels=3,
                cache_size=10_000, bandwidth=1.0, arrival_rate=300.0, q_energy=1e-3, theta=1e-12)
    base.update(kw)
    return SystemConfig(**base)


def enumerate_optimum(u, p, delta):
    """Best stationary policy by solving every policy's linear system."""
    n_s, n_a = u.shape
    best_v, best_pol = None, None
    for pol in itertools.product(range(n_a), repeat=n_s):
        if not all(np.isfinite(u[s, a]) for s, a in enumerate(pol)):
            continue
        ps = np.array([p[s, a] for s, a in enumerate(pol)])
        r = np.array([u[s, a] for s, a in enumerate(pol)])
        v = np.linalg.solve(np.eye(n_s) - delta * ps, r)
        if best_v is None or v.sum() > best_v.sum():
            best_v, best_pol = v, pol
    return best_v, np.array(best_pol)


class TestActionSet:
    def test_two_levels_single_user(self):
        cfg = SystemConfig(n_users=1, distances=(300.0,), power_levels=2)
        acts = build_action_set(cfg)
        eps = model.backhaul_probability(cfg)
        assert len(acts) == 2
        assert acts[0].is_idle and acts[0].total_power == 0.0
        assert acts[1].powers[0] == pytest.approx(0.8 - eps * BACKHAUL_COEF, rel=1e-12)
        assert acts[1].total_power == pytest.approx(0.8, rel=1e-12)

    def test_backhaul_budget_constant(self, default_cfg):
        assert build_action_set(default_cfg).backhaul_budget == pytest.approx(BACKHAUL_COEF, rel=1e-12)

    def test_equal_split(self, default_cfg):
        pm = build_action_set(default_cfg).power_matrix
        assert np.all(pm == pm[:, :1])
        assert pm.shape == (11, 10)

    def test_exhaustive_two_users(self):
        cfg = SystemConfig(n_users=2, distances=(100.0, 500.0), power_levels=3,
                           action_mode="exhaustive")
        acts = build_action_set(cfg)
        cap = 0.8 - acts.epsilon * acts.backhaul_budget
        levels = [0.0, cap / 2, cap]
        grid = list(itertools.product(levels, repeat=2))
        assert len(grid) == 9
        kept = {tuple(round(x, 12) for x in v) for v in grid if sum(v) <= cap * (1 + 1e-12)}
        assert {tuple(round(x, 12) for x in a.powers) for a in acts.actions} == kept
        assert len(acts) == 6

    def test_exhaustive_guard(self):
        with pytest.raises(ConfigError):
            SystemConfig(n_users=4, action_mode="exhaustive")
        with pytest.raises(ConfigError):
            build_action_set(SystemConfig(n_users=4), mode="exhaustive")

    @given(st.integers(1, 12), st.integers(2, 15), st.integers(0, 200))
    @settings(max_examples=25)
    def test_invariants(self, n, levels, m):
        cfg = SystemConfig(n_users=n, power_levels=levels, cache_size=m)
        acts = build_action_set(cfg)
        totals = acts.totals
        assert acts[0].is_idle
        assert np.all(acts.power_matrix >= 0)
        assert np.all(totals <= cfg.p_max * (1 + 1e-12))
        assert np.all(np.diff(totals) >= 0)
        assert len({a.powers for a in acts.actions}) == len(acts)


class TestFeasibility:
    def test_empty_battery(self, default_cfg):
        acts = build_action_set(default_cfg)
        assert feasible_actions(0, acts, default_cfg) == [0]

    def test_full_battery(self, default_cfg):
        acts = build_action_set(default_cfg)
        assert feasible_actions(2000, acts, default_cfg) == list(range(len(acts)))

    def test_nested(self, default_cfg):
        acts = build_action_set(default_cfg)
        prev = set(feasible_actions(0, acts, default_cfg))
        for s in range(1, 12):
            cur = set(feasible_actions(s, acts, default_cfg))
            assert prev <= cur
            prev = cur


class TestValueIteration:
    def test_small_mdp_matches_enumeration(self):
        mdp = build_mdp(tiny_cfg())
        sol = solve(mdp.cfg, mdp=mdp)
        n_s, n_a = mdp.utilities.shape
        assert (n_s, n_a) == (5, 3)
        p = mdp.transitions.toarray().reshape(n_s, n_a, n_s)
        v, pol = enumerate_optimum(mdp.utilities, p, mdp.cfg.discount)
        np.testing.assert_allclose(sol.value_function.values, v, rtol=1e-9, atol=0)
        np.testing.assert_array_equal(sol.policy.action_index, pol)
        # the instance exercises more than one action
        assert len(set(pol.tolist())) > 1

    def test_zero_discount_is_myopic(self):
        mdp = build_mdp(tiny_cfg(discount=0.0))
        sol = solve(mdp.cfg, mdp=mdp)
        np.testing.assert_allclose(sol.value_function.values, mdp.utilities.max(axis=1))
        np.testing.assert_array_equal(sol.policy.action_index, mdp.utilities.argmax(axis=1))

    def test_idle_only_action_set(self):
        mdp = build_mdp(tiny_cfg())
        v, pol, _ = iterate_values(mdp.utilities[:, :1], _first_action_rows(mdp), 0.7, 1e-12)
        assert np.all(v == 0) and np.all(pol == 0)

    def test_callback_route_matches_matrix_route(self, small_cfg):
        mdp = build_mdp(small_cfg)
        ref = solve(small_cfg, mdp=mdp)
        w = model.bandwidths(small_cfg)

        def util(act, e):
            return average_utility(w, np.array(act.powers), e, mdp.geom, mdp.params, small_cfg.e_max)

        vf, pol = value_iteration(mdp.grid, mdp.action_set,
                                  lambda s, p: build_transition_row(s, p, mdp.grid, mdp.harvest),
                                  util, small_cfg.discount, small_cfg.theta,
                                  p_max=small_cfg.p_max, slot_t=small_cfg.slot_t)
        np.testing.assert_allclose(vf.values, ref.value_function.values, rtol=1e-12)
        np.testing.assert_array_equal(pol.action_index, ref.policy.action_index)

    def test_contraction_and_monotone_iterates(self, small_cfg):
        mdp = build_mdp(small_cfg)
        u, t = mdp.utilities, mdp.transitions
        args = (u, t.indptr.astype(np.int32), t.indices.astype(np.int32), t.data)
        v = np.zeros(u.shape[0])
        prev_res = None
        for _ in range(60):
            nv, _ = kernels.bellman_sweep(*args, v, small_cfg.discount)
            assert np.all(nv >= v - 8 * np.spacing(np.max(nv)))
            res = np.max(np.abs(nv - v))
            if prev_res is not None:
                assert res <= small_cfg.discount * prev_res + 8 * np.spacing(np.max(nv))
            prev_res, v = res, nv

    def test_converged_value_monotone_in_energy(self, small_solution):
        v = small_solution.value_function.values
        assert np.all(np.diff(v) >= -8 * np.spacing(v.max()))
        assert small_solution.value_function.residual < small_solution.mdp.cfg.theta

    def test_policy_feasible(self, small_solution):
        mdp = small_solution.mdp
        pol = small_solution.policy.action_index
        assert np.all(mdp.feasible[np.arange(pol.size), pol])

    def test_bandwidth_scaling_keeps_policy(self, small_cfg, small_solution):
        scaled = solve(small_cfg.replace(bandwidth=small_cfg.bandwidth * 7.0, theta=small_cfg.theta * 7.0))
        np.testing.assert_array_equal(scaled.policy.action_index, small_solution.policy.action_index)
        np.testing.assert_allclose(scaled.value_function.values,
                                   7.0 * small_solution.value_function.values, rtol=1e-6)

    def test_iteration_cap(self, small_cfg):
        with pytest.raises(ConvergenceError):
            solve(small_cfg.replace(max_iter=3))

    @pytest.mark.parametrize("delta,theta", [(1.0, 1e-6), (-0.1, 1e-6), (0.5, 0.0)])
    def test_bad_parameters(self, delta, theta):
        mdp = build_mdp(tiny_cfg())
        with pytest.raises(ValueError):
            iterate_values(mdp.utilities, mdp.transitions, delta, theta)


def _first_action_rows(mdp):
    n_s, n_a = mdp.utilities.shape
    rows = mdp.transitions[np.arange(n_s) * n_a]
    return sp.csr_matrix(rows)


class TestLookahead:
    def test_unaffordable_backhaul_idles(self, small_solution):
        act = one_step_lookahead(2.0, np.ones(4), 0.1, True, small_solution.value_function,
                                 small_solution.mdp)
        assert act.is_idle
        act = one_step_lookahead(2.0, np.ones(4), 0.0, True, small_solution.value_function,
                                 small_solution.mdp)
        assert act.is_idle

    def test_zero_discount_maximizes_instantaneous_utility(self, small_cfg):
        cfg = small_cfg.replace(discount=0.0)
        sol = solve(cfg)
        rng = np.random.default_rng(4)
        w = model.bandwidths(cfg)
        for _ in range(30):
            e = float(rng.uniform(0, cfg.e_max))
            h2 = rng.exponential(size=4)
            act = one_step_lookahead(e, h2, 5.0, False, sol.value_function, sol.mdp)
            scores = [instantaneous_utility(w, np.array(a.powers), h2, e, sol.mdp.geom,
                                            sol.mdp.params, cfg.e_max)
                      if a.total_power <= min(cfg.p_max, e / cfg.slot_t) * (1 + 1e-12) else -1
                      for a in sol.mdp.action_set.actions]
            assert instantaneous_utility(w, np.array(act.powers), h2, e, sol.mdp.geom, sol.mdp.params,
                                         cfg.e_max) == pytest.approx(max(scores), rel=1e-12)

    def test_matches_brute_force_scan(self, small_solution):
        mdp, vf = small_solution.mdp, small_solution.value_function
        cfg = mdp.cfg
        w = model.bandwidths(cfg)
        rng = np.random.default_rng(9)
        for _ in range(40):
            e = float(rng.uniform(0, cfg.e_max))
            h2 = rng.exponential(size=4)
            best, best_a = -math.inf, None
            for a in mdp.action_set.actions:
                if a.total_power > min(cfg.p_max, e / cfg.slot_t) + 1e-12:
                    continue
                base = max(e - a.total_power * cfg.slot_t, 0.0)
                fut = sum(pk * vf(min(base + k * cfg.q_energy, cfg.e_max))
                          for k, pk in enumerate(mdp.harvest.pmf))
                score = instantaneous_utility(w, np.array(a.powers), h2, e, mdp.geom, mdp.params,
                                              cfg.e_max) + cfg.discount * fut
                if score > best:
                    best, best_a = score, a
            assert one_step_lookahead(e, h2, 5.0, False, vf, mdp) == best_a

    def test_tables_shapes(self, small_solution):
        tab = lookahead_tables(small_solution.mdp, small_solution.value_function)
        assert tab["action_powers"].shape == (11, 4)
        assert tab["backhaul_coef"] == pytest.approx(BACKHAUL_COEF, rel=1e-12)


class TestSnapshot:
    def test_round_trip(self, tmp_path, small_solution):
        path = save_snapshot(tmp_path / "p.npz", small_solution)
        vf, pol, meta = load_snapshot(path)
        np.testing.assert_array_equal(vf.values, small_solution.value_function.values)
        np.testing.assert_array_equal(pol.action_index, small_solution.policy.action_index)
        assert meta["solver_key"] == small_solution.mdp.key
        assert vf.iterations == small_solution.value_function.iterations
        assert isinstance(vf, ValueFunction) and vf.n_cells == 401

    def test_version_check(self, tmp_path, small_solution):
        path = save_snapshot(tmp_path / "p.npz", small_solution)
        with np.load(path) as z:
            data = dict(z)
        data["format_version"] = np.array(99)
        np.savez(tmp_path / "bad.npz", **data)
        with pytest.raises(ValueError):
            load_snapshot(tmp_path / "bad.npz")
