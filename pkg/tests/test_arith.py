import math

import numpy as np
import pytest

from gtlab.arith import (SieveTables, WTrickParams, build_sieve,
                         chebyshev_check, choose_residue, is_prime_int,
                         load_sieve, make_wtrick_params,
                         mean_prime_log_weight, next_prime_at_least,
                         plan_wtrick, primorial_upto, save_sieve)
from gtlab.errors import CoverageError, SieveMemoryError


@pytest.fixture(scope="module")
def sieve():
    return build_sieve(10 ** 4)


def trial_division_is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


class TestSieve:
    def test_primes_below_30(self, sieve):
        assert list(sieve.primes(30)) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]

    def test_primality_matches_trial_division(self, sieve):
        for n in range(10 ** 4 + 1):
            assert bool(sieve.is_prime[n]) == trial_division_is_prime(n)

    def test_mobius_examples(self, sieve):
        assert sieve.mu(1) == 1
        assert sieve.mu(6) == 1
        assert sieve.mu(12) == 0
        assert sieve.mu(30) == -1

    def test_mobius_rejects_zero(self, sieve):
        with pytest.raises(ValueError):
            sieve.mu(0)

    def test_phi_examples(self, sieve):
        assert sieve.euler_phi(12) == 4
        assert sieve.euler_phi(1) == 1

    def test_prime_entries(self, sieve):
        for p in sieve.primes():
            p = int(p)
            assert sieve.mobius[p] == -1
            assert sieve.phi[p] == p - 1

    def test_mobius_divisor_sums(self, sieve):
        # sum over d | n of mu(d): enumerate every (d, multiple) pair
        acc = np.zeros(10 ** 4 + 1, dtype=np.int64)
        for d in range(1, 10 ** 4 + 1):
            acc[d::d] += sieve.mobius[d]
        assert acc[1] == 1
        assert not acc[2:].any()

    def test_phi_multiplicative_on_coprime_pairs(self, sieve):
        rng = np.random.default_rng(5)
        found = 0
        while found < 100:
            m = int(rng.integers(2, 100))
            n = int(rng.integers(2, 100))
            if math.gcd(m, n) != 1:
                continue
            assert sieve.euler_phi(m * n) == \
                sieve.euler_phi(m) * sieve.euler_phi(n)
            found += 1

    def test_limit_too_small(self):
        with pytest.raises(ValueError):
            build_sieve(1)

    def test_memory_budget_reported(self):
        with pytest.raises(SieveMemoryError):
            build_sieve(10 ** 8, memory_budget=10 ** 6)

    def test_coverage_error(self, sieve):
        with pytest.raises(CoverageError):
            sieve.require(10 ** 5)


class TestChebyshev:
    def test_pi_100(self, sieve):
        pi_x, lower, upper = chebyshev_check(100, sieve)
        assert pi_x == 25
        assert lower <= pi_x <= upper

    def test_pi_million(self):
        pi_x, lower, upper = chebyshev_check(10 ** 6)
        assert pi_x == 78498
        assert lower <= pi_x <= upper

    def test_bracket_from_17(self, sieve):
        for x in (17, 50, 1000, 9973):
            pi_x, lower, upper = chebyshev_check(x, sieve)
            assert lower <= pi_x <= upper

    def test_rejects_small_x(self):
        with pytest.raises(ValueError):
            chebyshev_check(1)


class TestNextPrime:
    def test_examples(self):
        assert next_prime_at_least(10) == 11
        assert next_prime_at_least(10000) == 10007

    def test_fixed_point_on_primes(self, sieve):
        for p in sieve.primes(200):
            assert next_prime_at_least(int(p)) == int(p)

    def test_agrees_with_sieve(self, sieve):
        primes = [int(p) for p in sieve.primes()]
        for n in (500, 2000, 7919, 9000):
            expected = min(p for p in primes if p >= n)
            assert next_prime_at_least(n) == expected


class TestMillerRabin:
    def test_matches_trial_division(self):
        for n in range(2000):
            assert is_prime_int(n) == trial_division_is_prime(n)

    def test_large_values(self):
        assert is_prime_int(10 ** 9 + 7)
        assert not is_prime_int(10 ** 9 + 8)


class TestWTrick:
    def test_default_cutoff_gives_w2(self):
        params = make_wtrick_params(2, 10 ** 6, 0.1)
        assert params.N == next_prime_at_least(10 ** 6)
        assert abs(params.w - math.log(math.log(params.N))) < 1e-12
        assert params.W == 2
        assert params.b == 1

    def test_overrides(self):
        assert primorial_upto(5) == 30
        assert primorial_upto(7.5) == 210
        params = make_wtrick_params(2, 10 ** 4, 0.25, w_override=5)
        assert params.W == 30
        params = make_wtrick_params(2, 10 ** 4, 0.25, w_override=7.5)
        assert params.W == 210

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            plan_wtrick(10 ** 4, 0.3)
        with pytest.raises(ValueError):
            plan_wtrick(10 ** 4, 0.0)
        with pytest.raises(ValueError):
            plan_wtrick(50, 0.1)

    def test_b_invariants(self):
        params = make_wtrick_params(3, 10 ** 4, 0.25, w_override=5)
        assert 1 <= params.b < params.W
        assert math.gcd(params.b, params.W) == 1

    def test_invalid_b_rejected(self):
        with pytest.raises(ValueError):
            WTrickParams(k=2, N=101, w=5.0, W=30, alpha=0.1,
                         R=101 ** 0.1, b=6)

    def test_choose_residue_w6_matches_direct_argmax(self):
        # W = 6 admits b in {1, 5}; compare the means directly
        N, w, W, R = plan_wtrick(101, 0.25, w_override=3)
        assert W == 6
        sieve = build_sieve(W * N + W)
        means = {b: mean_prime_log_weight(N, W, R, b, sieve)
                 for b in (1, 5)}
        expected = max(sorted(means), key=lambda b: means[b])
        assert choose_residue(N, W, R, sieve) == expected

    def test_mean_positive_at_desk_scale(self):
        params = make_wtrick_params(2, 10 ** 4, 0.1)
        sieve = build_sieve(params.coverage)
        assert mean_prime_log_weight(params.N, params.W, params.R,
                                     params.b, sieve) > 0


class TestSieveCache:
    def test_roundtrip(self, tmp_path):
        sieve = build_sieve(997)
        path = tmp_path / "tables.gts"
        save_sieve(sieve, path)
        back = load_sieve(path)
        assert back.limit == sieve.limit
        assert np.array_equal(back.is_prime, sieve.is_prime)
        assert np.array_equal(back.mobius, sieve.mobius)
        assert np.array_equal(back.phi, sieve.phi)

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "junk.gts"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError):
            load_sieve(path)
