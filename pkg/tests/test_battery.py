import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from artifact.battery import (EnergyGrid, build_harvest_distribution, build_transition_matrix,
                              build_transition_row, quantize, step_energy)

GRID = EnergyGrid(2.0, 2001)


class TestStepEnergy:
    def test_full_battery_drain(self):
        assert step_energy(2.0, 0.8, 1e-3, 0.0, 2.0) == pytest.approx(1.9992, abs=1e-15)

    def test_clamp_at_capacity(self):
        assert step_energy(2.0, 0.0, 1e-3, 0.08, 2.0) == 2.0

    def test_drain_then_harvest(self):
        assert step_energy(0.5, 0.4, 1e-3, 0.16, 2.0) == pytest.approx(0.6596, abs=1e-15)

    def test_overdraw_rejected(self):
        with pytest.raises(ValueError):
            step_energy(1e-4, 0.8, 1e-3, 0.0, 2.0)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            step_energy(1.0, -0.1, 1e-3, 0.0, 2.0)
        with pytest.raises(ValueError):
            step_energy(1.0, 0.1, 1e-3, -0.1, 2.0)

    @given(st.floats(0, 2), st.floats(0, 1), st.integers(0, 30))
    def test_stays_in_band(self, e, frac, k):
        p = frac * e / 1e-3
        out = step_energy(e, p, 1e-3, k * 0.08, 2.0)
        assert 0.0 <= out <= 2.0


class TestHarvest:
    def test_no_arrivals(self):
        h = build_harvest_distribution(0.0, 1e-3, 0.08)
        assert h.k_max == 0 and list(h.pmf) == [1.0]

    def test_idle_probability_default_rate(self):
        h = build_harvest_distribution(2.0, 1e-3, 0.08)
        assert h.pmf[0] == pytest.approx(0.9980019986673331, abs=1e-9)

    def test_idle_probability_sparse_rate(self):
        h = build_harvest_distribution(0.1, 1e-3, 0.08)
        assert h.pmf[0] == pytest.approx(0.9999000049998333, abs=1e-12)

    @given(st.floats(0.01, 5000.0), st.sampled_from([1e-3, 1e-2]),
           st.sampled_from([1e-6, 1e-9, 1e-12]))
    def test_truncation_law(self, lam, t, tol):
        m = lam * t
        h = build_harvest_distribution(lam, t, 0.08, tol)
        assert abs(math.fsum(h.pmf) - 1.0) <= 1e-15 * (h.k_max + 1)
        # k_max is the smallest k whose tail beyond k is below tol
        assert stats.poisson.sf(h.k_max, m) < tol
        if h.k_max > 0:
            assert stats.poisson.sf(h.k_max - 1, m) >= tol
        np.testing.assert_allclose(h.pmf[:-1], stats.poisson.pmf(np.arange(h.k_max), m),
                                   rtol=1e-10, atol=1e-300)
        # lumping the tail at k_max loses at most q * E[N; N >= k_max] = q * m * P(N >= k_max - 1)
        deficit = m * 0.08 - float(np.dot(h.pmf, h.amounts))
        bound = 0.08 * m * stats.poisson.sf(h.k_max - 2, m)
        assert -1e-12 * m <= deficit <= bound + 1e-12 * m

    def test_sample_frequencies(self):
        h = build_harvest_distribution(300.0, 1e-3, 1e-3)
        k = h.sample(np.random.default_rng(0), 200_000)
        for j in range(4):
            p = h.pmf[j]
            assert abs(np.mean(k == j) - p) <= 4 * math.sqrt(p * (1 - p) / k.size)

    @pytest.mark.parametrize("args", [(-1, 1e-3, 0.08), (1, 0, 0.08), (1, 1e-3, -1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            build_harvest_distribution(*args)


class TestGridAndQuantize:
    def test_grid_ends(self):
        assert GRID.delta_e == pytest.approx(1e-3)
        assert GRID.energies[0] == 0.0 and GRID.energies[-1] == 2.0
        assert GRID.energy(2000) == 2.0

    def test_on_grid(self):
        (i, w), (_, w2) = quantize(GRID.energy(137), GRID)
        assert (i, w, w2) == (137, 1.0, 0.0)

    def test_top_node(self):
        (_, w1), (j, w2) = quantize(2.0, GRID)
        assert (j, w2, w1) == (2000, 1.0, 0.0)

    def test_midpoint(self):
        (i, w1), (j, w2) = quantize(0.0105, GRID)
        assert (i, j) == (10, 11)
        assert w1 == pytest.approx(0.5) and w2 == pytest.approx(0.5)

    @given(st.floats(0.0, 2.0))
    def test_reconstruction(self, e):
        (i, w1), (j, w2) = quantize(e, GRID)
        assert j == i + 1 and 0 <= i and j < GRID.n_cells
        assert w1 >= 0 and w2 >= 0 and w1 + w2 == pytest.approx(1.0, abs=1e-15)
        assert w1 * GRID.energies[i] + w2 * GRID.energies[j] == pytest.approx(e, abs=1e-15)

    @pytest.mark.parametrize("e", [-1e-9, 2.0000001])
    def test_out_of_range(self, e):
        with pytest.raises(ValueError):
            quantize(e, GRID)


def _continuous_mean(e, p, harvest, e_max):
    return math.fsum(pk * min(max(e - p * harvest.slot_t, 0.0) + k * harvest.q_energy, e_max)
                     for k, pk in enumerate(harvest.pmf))


class TestTransitionRows:
    harvest = build_harvest_distribution(2.0, 1e-3, 0.08)

    def test_idle_no_harvest_absorbs(self):
        row = build_transition_row(500, 0.0, GRID, build_harvest_distribution(0.0, 1e-3, 0.08))
        assert row.as_dict() == {500: 1.0}

    def test_top_idle_stays(self):
        row = build_transition_row(2000, 0.0, GRID, self.harvest)
        assert row.as_dict() == pytest.approx({2000: 1.0})

    def test_infeasible_rejected(self):
        with pytest.raises(ValueError):
            build_transition_row(0, 0.1, GRID, self.harvest)

    @given(st.integers(0, 2000), st.floats(0.0, 0.8))
    def test_row_properties(self, s, p):
        e = GRID.energy(s)
        assume(p * 1e-3 <= e)
        row = build_transition_row(s, p, GRID, self.harvest)
        assert np.all((row.indices >= 0) & (row.indices < GRID.n_cells))
        assert math.fsum(row.probs) == pytest.approx(1.0, abs=1e-12)
        assert row.expectation(GRID.energies) == pytest.approx(
            _continuous_mean(e, p, self.harvest, GRID.e_max), abs=1e-12)

    @given(st.integers(1, 1999), st.floats(0.0, 0.79), st.floats(0.001, 0.01))
    def test_expectation_monotone(self, s, p, dp):
        e = GRID.energy(s)
        assume((p + dp) * 1e-3 <= e)
        lo = build_transition_row(s, p + dp, GRID, self.harvest).expectation(GRID.energies)
        hi = build_transition_row(s, p, GRID, self.harvest).expectation(GRID.energies)
        up = build_transition_row(s + 1, p, GRID, self.harvest).expectation(GRID.energies)
        assert lo <= hi + 1e-15 and hi <= up + 1e-15

    def test_matrix_matches_rows(self):
        grid = EnergyGrid(0.05, 51)
        totals = np.array([0.0, 0.2, 0.5, 0.8])
        harvest = build_harvest_distribution(50.0, 1e-3, 0.004)
        mat = build_transition_matrix(grid, totals, harvest).toarray()
        for s in range(grid.n_cells):
            for a, p in enumerate(totals):
                r = mat[s * totals.size + a]
                if p * 1e-3 > grid.energy(s) * (1 + 1e-12):
                    assert not r.any()
                    continue
                ref = np.zeros(grid.n_cells)
                for i, w in build_transition_row(s, p, grid, harvest).as_dict().items():
                    ref[i] = w
                np.testing.assert_allclose(r, ref, atol=1e-15)
