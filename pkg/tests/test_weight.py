import math

import numpy as np
import pytest

from gtlab.errors import InfeasibleSizeError
from gtlab.weight import (CorrelationReport, LinearFormFamily, SmoothCutoff,
                          ap_form_family, build_f, build_nu,
                          domination_constant, lambda_table, make_cutoff,
                          make_recipe, mean_nu_divisor_oracle,
                          verify_correlations, verify_linear_forms)
from gtlab.zn_core import GridFunction, autocorrelation, expectation
from gtlab.gowers import gowers_norm_sampled, gowers_norm_u2_fft


@pytest.fixture(scope="module")
def cutoff():
    return make_cutoff()


@pytest.fixture(scope="module")
def recipe_10007(cutoff):
    return make_recipe(2, 10007, alpha=0.1, cutoff=cutoff)


@pytest.fixture(scope="module")
def recipe_wide(cutoff):
    # alpha = 0.25 gives R around 10, so several divisors participate
    return make_recipe(2, 10007, alpha=0.25, cutoff=cutoff)


def simpson_chi_prime_square(cutoff, panels=20000):
    """Fixed-step Simpson quadrature of chi'(x)^2 on [0, 1]."""
    xs = np.linspace(0.0, 1.0, 2 * panels + 1)
    ys = cutoff.chi_prime(xs) ** 2
    h = xs[1] - xs[0]
    return h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-2:2].sum())


class TestCutoff:
    def test_support_boundary(self, cutoff):
        assert cutoff.chi(1.0) == 0.0
        assert cutoff.chi(-1.0) == 0.0
        assert cutoff.chi(1.5) == 0.0

    def test_value_at_zero(self, cutoff):
        expected = cutoff.normalization * math.exp(-1.0)
        assert cutoff.chi(0.0) == pytest.approx(expected, abs=1e-15)
        assert cutoff.at_zero > 0

    def test_nonnegative(self, cutoff):
        xs = np.linspace(-2, 2, 801)
        assert np.all(cutoff.chi(xs) >= 0)

    def test_normalization_cross_checked_by_simpson(self, cutoff):
        # independent fixed-step quadrature of the normalized derivative
        assert simpson_chi_prime_square(cutoff) == pytest.approx(1.0, abs=1e-6)

    def test_derivative_matches_finite_differences(self, cutoff):
        xs = np.linspace(-0.95, 0.95, 39)
        h = 1e-6
        numeric = (cutoff.chi(xs + h) - cutoff.chi(xs - h)) / (2 * h)
        assert np.max(np.abs(numeric - cutoff.chi_prime(xs))) < 1e-5


class TestRecipe:
    def test_parameters(self, recipe_10007):
        p = recipe_10007.wtrick
        assert p.N == 10007
        assert p.W == 2
        assert p.b == 1
        assert p.R == pytest.approx(10007 ** 0.1)

    def test_primorial_must_stay_below_r(self, cutoff):
        # w_override=5 makes W=30 > R=N^0.1
        with pytest.raises(ValueError):
            make_recipe(2, 10007, alpha=0.1, w_override=5, cutoff=cutoff)


class TestLambdaTable:
    def test_matches_per_point_divisor_enumeration(self, recipe_wide):
        p = recipe_wide.wtrick
        sieve = recipe_wide.sieve
        log_r = math.log(p.R)
        table = lambda_table(recipe_wide)

        def brute(m):
            total = 0.0
            d = 1
            while d * d <= m:
                if m % d == 0:
                    for divisor in {d, m // d}:
                        total += sieve.mu(divisor) * recipe_wide.cutoff.chi(
                            math.log(divisor) / log_r
                        )
                d += 1
            return total

        rng = np.random.default_rng(1)
        for n in rng.integers(0, p.N, 20):
            m = p.W * int(n) + p.b
            assert table[int(n)] == pytest.approx(brute(m), abs=1e-10)

    def test_large_prime_points_carry_chi_zero(self, recipe_wide):
        p = recipe_wide.wtrick
        table = lambda_table(recipe_wide)
        points = p.W * np.arange(p.N, dtype=np.int64) + p.b
        prime_beyond_r = recipe_wide.sieve.is_prime[points] & (points > p.R)
        # a prime beyond the truncation has divisors {1, itself} only
        idx = np.nonzero(prime_beyond_r)[0][:50]
        assert np.allclose(table[idx], recipe_wide.cutoff.at_zero, atol=1e-12)

    def test_point_one_has_only_the_trivial_divisor(self, recipe_wide):
        # with b = 1 the n = 0 point evaluates the sum at m = 1
        assert recipe_wide.wtrick.b == 1
        table = lambda_table(recipe_wide)
        assert table[0] == pytest.approx(recipe_wide.cutoff.at_zero,
                                         abs=1e-15)


class TestWeight:
    def test_nonnegative(self, recipe_wide):
        nu = build_nu(recipe_wide)
        assert np.all(nu.values >= 0)

    def test_value_at_prime_points(self, recipe_10007):
        p = recipe_10007.wtrick
        nu = build_nu(recipe_10007)
        points = p.W * np.arange(p.N, dtype=np.int64) + p.b
        prime_beyond_r = recipe_10007.sieve.is_prime[points] & (points > p.R)
        idx = np.nonzero(prime_beyond_r)[0][:20]
        expected = (recipe_10007.sieve.phi[p.W] / p.W) * math.log(p.R) * \
            recipe_10007.cutoff.at_zero ** 2
        assert np.allclose(nu.values[idx], expected, atol=1e-12)

    def test_f_zero_on_composites_and_below_r(self, recipe_wide):
        p = recipe_wide.wtrick
        f = build_f(recipe_wide)
        points = p.W * np.arange(p.N, dtype=np.int64) + p.b
        composite = ~recipe_wide.sieve.is_prime[points]
        assert not f.values[composite].any()
        small_prime = recipe_wide.sieve.is_prime[points] & (points < p.R)
        assert small_prime.any()
        assert not f.values[small_prime].any()

    def test_f_sup_bound(self, recipe_10007):
        p = recipe_10007.wtrick
        f = build_f(recipe_10007)
        bound = (recipe_10007.sieve.phi[p.W] / p.W) * math.log(p.W * p.N + p.W)
        assert float(f.values.max()) <= bound

    def test_f_mean_positive_and_stable(self, recipe_10007):
        f1 = build_f(recipe_10007)
        f2 = build_f(recipe_10007)
        assert np.array_equal(f1.values, f2.values)
        assert expectation(f1) > 0

    def test_domination(self, recipe_10007):
        f = build_f(recipe_10007)
        nu = build_nu(recipe_10007)
        c = domination_constant(recipe_10007, f=f, nu=nu)
        assert c > 0
        assert np.all(f.values >= 0)
        assert np.all(f.values <= c * nu.values)
        support = f.values > 0
        direct_max = float(np.max(f.values[support] / nu.values[support]))
        assert abs(c - direct_max) <= 1e-12 * direct_max
        assert c == domination_constant(recipe_10007, f=f, nu=nu)


class TestDivisorOracle:
    def test_collapse_when_every_divisor_has_small_prime(self, cutoff):
        # R < 3 leaves d = 1 alone, so the sum is exactly C * chi(0)^2
        recipe = make_recipe(2, 10007, alpha=0.08, cutoff=cutoff)
        p = recipe.wtrick
        assert p.R < 3
        expected = (recipe.sieve.phi[p.W] / p.W) * math.log(p.R) * \
            cutoff.at_zero ** 2
        assert mean_nu_divisor_oracle(recipe) == pytest.approx(expected,
                                                               rel=1e-12)

    def test_folded_sum_matches_full_double_loop(self, recipe_wide):
        p = recipe_wide.wtrick
        sieve = recipe_wide.sieve
        log_r = math.log(p.R)
        ds, ws = [], []
        for d in range(1, int(p.R) + 1):
            if sieve.mu(d) == 0 or math.gcd(d, p.W) != 1:
                continue
            chi_val = recipe_wide.cutoff.chi(math.log(d) / log_r)
            if chi_val:
                ds.append(d)
                ws.append(sieve.mu(d) * chi_val)
        full = 0.0
        for di, wi in zip(ds, ws):
            for dj, wj in zip(ds, ws):
                full += wi * wj / (di * dj // math.gcd(di, dj))
        constant = (sieve.phi[p.W] / p.W) * log_r
        assert mean_nu_divisor_oracle(recipe_wide) == pytest.approx(
            constant * full, rel=1e-12
        )

    def test_matches_direct_mean_within_wraparound_budget(self, cutoff):
        recipe = make_recipe(2, 10007, alpha=0.08, cutoff=cutoff)
        direct = expectation(build_nu(recipe))
        oracle = mean_nu_divisor_oracle(recipe)
        bound = recipe.wtrick.R ** 2 / recipe.wtrick.N + 0.05
        assert abs(oracle - direct) <= bound

    def test_pair_budget(self, recipe_wide):
        with pytest.raises(InfeasibleSizeError):
            mean_nu_divisor_oracle(recipe_wide, pair_budget=1)


class TestLinearForms:
    def test_family_validation(self):
        with pytest.raises(ValueError):
            LinearFormFamily(matrix=[[0, 0]], offsets=[0])
        with pytest.raises(ValueError):
            LinearFormFamily(matrix=[[1, 2], [2, 4]], offsets=[0, 0])
        with pytest.raises(ValueError):
            LinearFormFamily(matrix=[[11, 1]], offsets=[0])
        with pytest.raises(ValueError):
            LinearFormFamily(matrix=[[1, 0]], offsets=[0, 1])

    def test_ap_family_shape(self):
        family = ap_form_family(2)
        assert family.form_count == 3
        assert family.variable_count == 2

    def test_constant_weight_is_exactly_one(self):
        one = GridFunction.constant(401, 1.0)
        estimate, stderr = verify_linear_forms(one, ap_form_family(2),
                                               samples=10 ** 4, seed=3)
        assert estimate == 1.0
        assert stderr == 0.0

    def test_single_identity_form_reduces_to_mean(self, recipe_10007):
        nu = build_nu(recipe_10007)
        family = LinearFormFamily(matrix=[[1]], offsets=[0])
        estimate, stderr = verify_linear_forms(nu, family, samples=10 ** 4)
        assert stderr == 0.0
        assert estimate == pytest.approx(expectation(nu), abs=1e-12)

    def test_offsets_unbounded_and_shift_out(self):
        # offsets may be huge; exhaustively they shift out of the average
        f = GridFunction(127, np.random.default_rng(3).uniform(0, 2, 127))
        fam0 = LinearFormFamily(matrix=[[1, 0], [1, 1]], offsets=[0, 0])
        fam1 = LinearFormFamily(matrix=[[1, 0], [1, 1]],
                                offsets=[10 ** 12, 10 ** 12 + 5])
        est0, se0 = verify_linear_forms(f, fam0, samples=10 ** 4)
        est1, se1 = verify_linear_forms(f, fam1, samples=10 ** 4)
        assert se0 == se1 == 0.0
        assert est0 == pytest.approx(est1, rel=1e-12)

    def test_monte_carlo_deterministic_per_seed(self, recipe_10007):
        nu = build_nu(recipe_10007)
        family = ap_form_family(2)
        a = verify_linear_forms(nu, family, samples=20000, seed=9)
        b = verify_linear_forms(nu, family, samples=20000, seed=9)
        assert a == b

    def test_sample_floor(self, recipe_10007):
        nu = build_nu(recipe_10007)
        with pytest.raises(ValueError):
            verify_linear_forms(nu, ap_form_family(2), samples=100)

    def test_averaged_weight_inherits_the_verdict(self, recipe_10007):
        # if nu passes at a tolerance then (1 + nu)/2 must as well
        nu = build_nu(recipe_10007)
        half = GridFunction(nu.modulus, (1.0 + nu.values) / 2.0)
        family = ap_form_family(2)
        est_nu, se_nu = verify_linear_forms(nu, family, samples=10 ** 5, seed=1)
        est_half, se_half = verify_linear_forms(half, family,
                                                samples=10 ** 5, seed=1)
        tol = 0.3
        nu_passes = abs(est_nu - 1) <= max(4 * se_nu, tol)
        half_passes = abs(est_half - 1) <= max(4 * se_half, tol)
        assert (not nu_passes) or half_passes
        # the averaged weight is never farther from 1
        assert abs(est_half - 1) <= abs(est_nu - 1) + 1e-12


class TestCorrelations:
    def test_constant_weight_never_violates(self):
        one = GridFunction.constant(257, 1.0)
        report = verify_correlations(one, 4, trials=100, seed=2)
        assert report.violations == 0
        assert report.tau_moments[4] == pytest.approx(1.0, abs=1e-9)

    def test_repeated_shift_bounded_by_tau_at_zero(self, recipe_10007):
        nu = build_nu(recipe_10007)
        pair = autocorrelation(nu).values
        tau0 = max(pair[0], 1.0)
        mean_square = float((nu.values ** 2).mean())
        assert mean_square <= tau0 + 1e-12

    def test_module_weight_q3(self, recipe_10007):
        nu = build_nu(recipe_10007)
        report = verify_correlations(nu, 3, trials=500, seed=11)
        assert report.violations == 0
        assert all(math.isfinite(v) for v in report.tau_moments.values())

    def test_order_and_trial_floors(self, recipe_10007):
        nu = build_nu(recipe_10007)
        with pytest.raises(ValueError):
            verify_correlations(nu, 7, trials=100)
        with pytest.raises(ValueError):
            verify_correlations(nu, 3, trials=10)


class TestVanishingDistanceTrend:
    def test_u2_of_centered_weight_decreases(self, cutoff):
        norms = {}
        for n_target in (10007, 100003):
            recipe = make_recipe(2, n_target, alpha=0.1, cutoff=cutoff)
            nu = build_nu(recipe)
            centered = GridFunction(nu.modulus, nu.values - 1.0)
            norms[n_target] = gowers_norm_u2_fft(centered)
        assert norms[10007] > 0
        assert norms[100003] > 0
        assert norms[100003] < norms[10007]

    def test_u3_sampled_estimates_decrease_within_band(self, cutoff):
        stats = {}
        for n_target in (10007, 100003):
            recipe = make_recipe(2, n_target, alpha=0.1, cutoff=cutoff)
            nu = build_nu(recipe)
            centered = GridFunction(nu.modulus, nu.values - 1.0)
            stats[n_target] = gowers_norm_sampled(centered, 3, 10 ** 5,
                                                  seed=4)
        (e_small, s_small), (e_large, s_large) = stats[10007], stats[100003]
        assert e_large <= e_small + 4 * (s_small + s_large)


class TestWeightCache:
    def test_roundtrip_and_validation(self, tmp_path, recipe_10007):
        from gtlab.weight import load_weight, save_weight

        nu = build_nu(recipe_10007)
        f = build_f(recipe_10007)
        c = domination_constant(recipe_10007, f=f, nu=nu)
        save_weight(tmp_path, recipe_10007, nu, f, c)
        hit = load_weight(tmp_path, recipe_10007)
        assert hit is not None
        nu2, f2, c2 = hit
        assert np.array_equal(nu2.values, nu.values)
        assert np.array_equal(f2.values, f.values)
        assert c2 == c

    def test_mismatched_header_forces_rebuild(self, tmp_path, recipe_10007):
        from gtlab.weight import cache_stem, load_weight, save_weight

        nu = build_nu(recipe_10007)
        f = build_f(recipe_10007)
        save_weight(tmp_path, recipe_10007, nu, f, 1.0)
        p = recipe_10007.wtrick
        meta = tmp_path / f"{cache_stem(p.k, p.N, p.alpha, p.w)}.meta"
        text = meta.read_text().replace("b=1", "b=5")
        meta.write_text(text)
        assert load_weight(tmp_path, recipe_10007) is None
