import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.popularity import (ZipfCatalog, backhaul_access_probability, miss_probability,
                                 sample_requests, zipf_pmf)

# direct tail summation of 1/j^2 over j = 3..10000, normalized (computed with mpmath at 30 digits)
MISS_S2_R1E4_M2 = 0.24004492526376375
# 1 - (1 - MISS_S2_R1E4_M2)**10
BACKHAUL_N10 = 0.9357491031391935


def _naive_pmf(j, s, R):
    return (1.0 / j ** s) / math.fsum(1.0 / r ** s for r in range(1, R + 1))


class TestZipfPmf:
    def test_single_file(self):
        assert zipf_pmf(1, ZipfCatalog(3.0, 1, 0)) == 1.0

    def test_two_files_exact(self):
        cat = ZipfCatalog(2.0, 2, 0)
        assert zipf_pmf(1, cat) == pytest.approx(0.8, abs=1e-15)
        assert zipf_pmf(2, cat) == pytest.approx(0.2, abs=1e-15)

    def test_matches_naive_sum(self):
        cat = ZipfCatalog(2.0, 10_000, 0)
        assert zipf_pmf(3, cat) == pytest.approx(_naive_pmf(3, 2.0, 10_000), abs=1e-12)

    def test_exact_rational_small_catalog(self):
        cat = ZipfCatalog(2.0, 7, 0)
        norm = sum(Fraction(1, r * r) for r in range(1, 8))
        for j in range(1, 8):
            assert zipf_pmf(j, cat) == pytest.approx(float(Fraction(1, j * j) / norm), rel=1e-15)

    @pytest.mark.parametrize("j", [0, 11, 2.5, -1])
    def test_rank_out_of_range(self, j):
        with pytest.raises(ValueError):
            zipf_pmf(j, ZipfCatalog(2.0, 10, 0))

    @pytest.mark.parametrize("R", [1, 10, 10_000, 1_000_000])
    def test_sums_to_one(self, R):
        cat = ZipfCatalog(1.5, R, 0)
        assert math.fsum(cat.weights / cat.normalizer) == pytest.approx(1.0, abs=1e-10)

    def test_cdf_monotone_and_closed(self):
        cat = ZipfCatalog(2.0, 10_000, 5)
        assert np.all(np.diff(cat.precomputed_cdf) >= 0)
        assert abs(cat.precomputed_cdf[-1] - 1.0) <= 1e-12

    @pytest.mark.parametrize("kw", [dict(s=1.0, R=10, M=0), dict(s=2.0, R=0, M=0),
                                    dict(s=2.0, R=10, M=11), dict(s=2.0, R=10, M=-1)])
    def test_invalid_catalog(self, kw):
        with pytest.raises(ValueError):
            ZipfCatalog(**kw)


class TestMissProbability:
    def test_empty_cache(self):
        assert miss_probability(ZipfCatalog(2.0, 100, 0)) == 1.0

    def test_full_cache(self):
        assert miss_probability(ZipfCatalog(2.0, 100, 100)) == 0.0

    def test_pinned_value(self):
        assert miss_probability(ZipfCatalog(2.0, 10_000, 2)) == pytest.approx(MISS_S2_R1E4_M2, abs=1e-12)

    def test_complement_of_head(self):
        cat = ZipfCatalog(2.0, 10_000, 6)
        head = math.fsum(zipf_pmf(j, cat) for j in range(1, 7))
        assert miss_probability(cat) == pytest.approx(1.0 - head, abs=1e-12)

    @given(st.floats(1.05, 4.0), st.integers(1, 300), st.integers(0, 299))
    def test_non_increasing_in_cache_and_exponent(self, s, R, M):
        M = min(M, R - 1)
        cat = ZipfCatalog(s, R, M)
        assert miss_probability(cat.with_cache_size(M + 1)) <= miss_probability(cat) + 1e-15
        if M >= 1:
            assert miss_probability(ZipfCatalog(s + 0.5, R, M)) <= miss_probability(cat) + 1e-15


class TestBackhaulAccess:
    def test_no_misses(self):
        assert backhaul_access_probability(0.0, 10) == 0.0

    @given(st.floats(0.0, 1.0))
    def test_single_user_identity(self, eps):
        assert backhaul_access_probability(eps, 1) == pytest.approx(eps, rel=1e-14, abs=1e-300)

    def test_pinned_ten_users(self):
        assert backhaul_access_probability(MISS_S2_R1E4_M2, 10) == pytest.approx(BACKHAUL_N10, abs=1e-12)

    @given(st.floats(0.0, 1.0), st.integers(1, 60))
    def test_monotone(self, eps, n):
        p = backhaul_access_probability(eps, n)
        assert 0.0 <= p <= 1.0
        assert backhaul_access_probability(eps, n + 1) >= p
        assert backhaul_access_probability(min(1.0, eps + 0.01), n) >= p

    @pytest.mark.parametrize("eps,n", [(-0.1, 3), (1.1, 3), (0.5, 0)])
    def test_invalid(self, eps, n):
        with pytest.raises(ValueError):
            backhaul_access_probability(eps, n)


class TestSampling:
    def test_full_cache_never_misses(self):
        _, miss = sample_requests(np.random.default_rng(0), ZipfCatalog(2.0, 50, 50), 8, 5000)
        assert not miss.any()

    def test_empty_cache_always_misses(self):
        _, miss = sample_requests(np.random.default_rng(0), ZipfCatalog(2.0, 50, 0), 1, 5000)
        assert miss.all()

    def test_single_slot_shape(self):
        ranks, miss = sample_requests(np.random.default_rng(1), ZipfCatalog(2.0, 50, 3), 4)
        assert ranks.shape == (4,) and isinstance(miss, bool)
        assert miss == bool((ranks > 3).any())

    def test_rank_frequencies(self):
        cat = ZipfCatalog(2.0, 10_000, 0)
        ranks, _ = sample_requests(np.random.default_rng(7), cat, 1, 1_000_000)
        counts = np.bincount(ranks.ravel(), minlength=8)
        n = ranks.size
        for j in range(1, 8):
            p = zipf_pmf(j, cat)
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts[j] / n - p) <= 4 * se

    def test_miss_frequency_matches_closed_form(self):
        cat = ZipfCatalog(2.0, 10_000, 2)
        _, miss = sample_requests(np.random.default_rng(3), cat, 10, 1_000_000)
        se = math.sqrt(BACKHAUL_N10 * (1 - BACKHAUL_N10) / miss.size)
        assert abs(miss.mean() - BACKHAUL_N10) <= 3 * se
