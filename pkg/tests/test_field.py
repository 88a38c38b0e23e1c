import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from homeas import field, sim
from homeas.numerics import DomainError, ModelError


class TestLinkBudget:
    def test_urban_mapping(self, urban):
        assert urban.link.beta == pytest.approx(3.76)
        assert urban.link.pl_intercept_db == pytest.approx(15.3, abs=1e-12)

    def test_rural_mapping(self, rural):
        assert rural.link.beta == pytest.approx(3.41)
        assert rural.link.pl_intercept_db == pytest.approx(-6.8, abs=1e-12)

    def test_path_loss_in_db_matches_km_formula(self, urban):
        for d_km in (0.1, 0.5, 1.0, 2.0):
            loss_db = 10 * math.log10(float(urban.link.path_loss(1000 * d_km)))
            assert loss_db + urban.link.pl_intercept_db == pytest.approx(128.1 + 37.6 * math.log10(d_km), abs=1e-9)

    def test_noise_power(self, urban):
        assert urban.link.noise_power_dbm == pytest.approx(-174 + 70 + 9)

    def test_p_tilde_db(self, urban):
        assert urban.link.p_tilde_db == pytest.approx(43 - 15.3 + 95)

    def test_path_loss_floor(self):
        link = field.LinkModel.from_log_distance(128.1, 37.6, 43.0, d_min=35.0)
        assert link.path_loss(1.0) == link.path_loss(35.0)

    def test_invalid(self):
        with pytest.raises(DomainError):
            field.LinkModel(beta=3.0, d_min=-1, pl_intercept_db=0, tx_power_dbm=0)
        with pytest.raises(DomainError):
            field.ShadowingModel(0.0, 50.0, 10.0)


def test_hex_intensity():
    assert field.hex_intensity(1000.0) == pytest.approx(2 / (3 * math.sqrt(3) * 1e6))


class TestStableParams:
    def test_alpha_urban(self, urban_stable):
        assert urban_stable.alpha == pytest.approx(0.531915, abs=1e-6)

    def test_sigma_z(self, urban_stable):
        assert urban_stable.sigma_z == pytest.approx(2.302585, abs=1e-6)

    def test_delta_closed_form(self, urban, urban_stable):
        a = urban_stable.alpha
        c = math.pi * urban.field.lambda_bs_per_m2 * urban.link.p_tilde**a * math.exp(a * a * urban_stable.sigma_z**2 / 2)
        assert urban_stable.c_alpha == pytest.approx(c, rel=1e-12)
        assert urban_stable.delta == pytest.approx(c * math.gamma(1 - a) * math.cos(math.pi * a / 2), rel=1e-12)

    def test_empty_field_limit(self, urban):
        deltas = [
            field.make_stable_params(urban.link, urban.shadow, field.FieldModel(lam)).delta for lam in (1e-6, 1e-9, 1e-12)
        ]
        assert deltas[0] > deltas[1] > deltas[2] and deltas[2] < 1e-3 * deltas[0]

    def test_non_integrable_exponent(self, urban):
        link = replace(urban.link, beta=2.0)
        with pytest.raises(ModelError):
            field.make_stable_params(link, urban.shadow, urban.field)


class TestInterferenceLaw:
    def test_half_stable_is_levy(self):
        # characteristic exponent sqrt(w)(1 - j) is the Levy law with unit scale
        law = field.InterferenceLaw(0.5, 1.0)
        x = np.logspace(-2, 3, 40)
        assert np.max(np.abs(law.pdf(x) - stats.levy.pdf(x))) < 1e-8
        assert np.max(np.abs(law.cdf(x) - stats.levy.cdf(x))) < 1e-8

    def test_sampler_matches_levy(self, rng):
        law = field.InterferenceLaw(0.5, 1.0)
        assert stats.kstest(law.sample(rng, 50_000), stats.levy.cdf).statistic < 0.01

    def test_normalisation(self, urban_stable):
        law = field.InterferenceLaw.from_params(urban_stable)
        lo, hi = law.quantile(1e-7), law.quantile(0.9999)
        x = np.geomspace(lo, hi, 4000)
        body = float(np.trapezoid(np.asarray(law.pdf(x)) * x, np.log(x)))
        # leading term of the regularly varying tail, independent of the series code
        far = law.laplace_scale * hi ** (-law.alpha) / math.gamma(1 - law.alpha)
        assert body + far + 1e-7 == pytest.approx(1.0, abs=1e-3)

    def test_density_non_negative(self, urban_stable):
        law = field.InterferenceLaw.from_params(urban_stable)
        x = np.geomspace(law.quantile(1e-6), law.quantile(1 - 1e-6), 300)
        assert np.min(law.pdf(x)) >= -1e-8

    def test_quadrature_and_series_agree_at_switch(self, urban_stable):
        law = field.InterferenceLaw.from_params(urban_stable)
        x = law.series_threshold
        assert law._pdf_quadrature(np.array([x]), field.DEFAULT_QUAD)[0] == pytest.approx(
            float(field._stable_series(np.array([x]), law.alpha, law.laplace_scale, True)[0]), rel=1e-6
        )

    def test_negative_level(self, urban_stable):
        with pytest.raises(DomainError):
            field.interference_pdf(-1.0, urban_stable)

    @pytest.mark.slow
    def test_shot_noise_ks(self, urban, urban_stable, rng):
        samples = np.sort(sim.sample_interference(urban, 100_000, rng))
        law = field.InterferenceLaw.from_params(urban_stable)
        # the empirical CDF jumps only at samples; evaluate both sides at 1000 of them
        idx = np.linspace(0, samples.size - 1, 1000).astype(int)
        model = np.asarray(law.cdf(samples[idx]))
        gap = np.maximum(np.abs(model - (idx + 1) / samples.size), np.abs(model - idx / samples.size))
        assert gap.max() <= 0.02

    def test_mass_below_empirical_quantile(self, urban, urban_stable, rng):
        samples = sim.sample_interference(urban, 20_000, rng)
        x_hi = np.quantile(samples, 0.999)
        law = field.InterferenceLaw.from_params(urban_stable)
        assert law.cdf(x_hi) >= 0.998


class TestUnlimitedTail:
    def test_small_gamma_limit(self, urban_stable):
        # the missing mass comes from the heavy interference tail and shrinks like gamma**alpha
        gaps = [1 - field.best_sinr_tail_unlimited(g, urban_stable, 8 / 504) for g in (1e-11, 1e-13, 1e-15)]
        assert gaps[-1] < 1e-6
        for a, b in zip(gaps, gaps[1:]):
            assert a / b == pytest.approx(100 ** urban_stable.alpha, rel=0.02)

    def test_zero_gamma(self, urban):
        assert field.best_sinr_tail(0.0, urban.link, urban.shadow, urban.field) == 1.0

    def test_retention(self, urban):
        assert urban.field.retention == pytest.approx(0.015873, abs=1e-6)

    def test_monotone_in_gamma(self, urban):
        g = np.logspace(-2, 2, 50)
        tail = field.best_sinr_tail(g, urban.link, urban.shadow, urban.field)
        assert np.all((tail >= 0) & (tail <= 1))
        assert np.all(np.diff(tail) <= 1e-12)

    def test_monotone_in_k(self, urban):
        values = [field.best_sinr_tail(0.3, urban.link, urban.shadow, urban.with_k(k).field) for k in (1, 2, 8, 64, 504)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_full_retention_is_all_cells(self, urban, urban_stable):
        direct = field.best_sinr_tail_unlimited(0.5, urban_stable, 1.0)
        via_k = field.best_sinr_tail(0.5, urban.link, urban.shadow, urban.with_k(504).field)
        assert via_k == pytest.approx(direct, rel=1e-12)

    def test_branches_agree_at_unit_sinr(self, urban_stable):
        for rho in (1 / 504, 8 / 504, 1.0):
            single = field.best_sinr_tail_unlimited(1.0, urban_stable, rho, method="auto")
            factor = field.best_sinr_tail_unlimited(1.0, urban_stable, rho, method="factorized")
            assert single == pytest.approx(factor, rel=1e-4)

    @pytest.mark.slow
    def test_literal_double_integral_cross_check(self, urban_stable):
        literal = field.best_sinr_tail_unlimited(0.1, urban_stable, 8 / 504, method="literal")
        factor = field.best_sinr_tail_unlimited(0.1, urban_stable, 8 / 504, method="factorized")
        assert literal == pytest.approx(factor, abs=1e-3)

    def test_monte_carlo_at_zero_db(self, urban, rng):
        y = sim.sample_best_sinr(urban, 100_000, rng)
        analytic = field.best_sinr_tail(1.0, urban.link, urban.shadow, urban.field)
        assert abs(np.mean(y > 1.0) - analytic) <= 0.02

    def test_bad_inputs(self, urban_stable):
        with pytest.raises(DomainError):
            field.best_sinr_tail_unlimited(1.0, urban_stable, 0.0)
        with pytest.raises(DomainError):
            field.best_sinr_tail_unlimited(-1.0, urban_stable, 0.5)


def _dense_scenario(urban, n_cell=32, d_min=35.0):
    link = replace(urban.link, d_min=d_min)
    fm = field.FieldModel.from_cell_radius(urban.cell_radius_m, field.LimitedDense(n_cell), 8)
    return replace(urban, link=link, field=fm)


class TestLimitedTail:
    def test_sparse_reduces_to_unlimited(self, urban, urban_stable):
        fm = field.FieldModel.from_cell_radius(1000.0, field.LimitedSparse(32), 8)
        got = field.best_sinr_tail_limited(0.2, urban.link, urban.shadow, fm)
        assert got == pytest.approx(field.best_sinr_tail_unlimited(0.2, urban_stable, 8 / 32), rel=1e-12)

    def test_dense_at_zero(self, urban):
        sc = _dense_scenario(urban)
        assert field.best_sinr_tail_limited(0.0, sc.link, sc.shadow, sc.field) == 1.0

    def test_dense_needs_exclusion_distance(self, urban):
        sc = _dense_scenario(urban, d_min=0.0)
        with pytest.raises(ModelError):
            field.best_sinr_tail_limited(1.0, sc.link, sc.shadow, sc.field)

    def test_dense_validity_warning(self, urban):
        link = replace(urban.link, d_min=900.0)
        fm = field.FieldModel.from_cell_radius(urban.cell_radius_m, field.LimitedDense(32), 8)
        with pytest.warns(field.ApproximationWarning):
            field.best_sinr_tail_limited(1.0, link, urban.shadow, fm)

    def test_candidate_power_cdf_is_a_cdf(self, urban):
        sc = _dense_scenario(urban)
        power = field.dense_candidate_power(sc.link, sc.shadow, sc.field)
        x = np.logspace(-15, 25, 400)
        f = np.asarray(power.cdf(x))
        assert f[0] < 1e-6 and f[-1] > 1 - 1e-6
        assert np.all(np.diff(f) >= -1e-12)

    def test_candidate_power_matches_direct_sampling(self, urban, rng):
        sc = _dense_scenario(urban)
        power = field.dense_candidate_power(sc.link, sc.shadow, sc.field)
        # independent construction: uniform-in-area radius on the annulus, lognormal gain
        d = np.sqrt(rng.uniform(35.0**2, power.radius**2, 100_000))
        gain = 10 ** (rng.normal(0.0, 10.0, 100_000) / 10)
        draws = sc.link.p_tilde * gain * d ** (-sc.link.beta)
        assert stats.kstest(draws, power.cdf).statistic <= 0.02

    def test_dense_against_direct_construction(self, urban, rng):
        # k_hat cells uniform in area on [d_min, R_B], lognormal gains, whole-field interference
        sc = _dense_scenario(urban)
        n, k_hat = 200_000, sc.field.k_hat
        radius = math.sqrt(32 / (math.pi * sc.field.lambda_bs_per_m2))
        d = np.sqrt(rng.uniform(35.0**2, radius**2, (n, k_hat)))
        power = sc.link.p_tilde * 10 ** (rng.normal(0.0, 10.0, (n, k_hat)) / 10) * d ** (-sc.link.beta)
        law = field.InterferenceLaw.from_params(field.make_stable_params(sc.link, sc.shadow, sc.field))
        best = (power / (1.0 + law.sample(rng, n)[:, None])).max(axis=1)
        gammas = np.array([0.1, 1.0, 10.0])
        analytic = field.best_sinr_tail_limited(gammas, sc.link, sc.shadow, sc.field)
        empirical = np.array([np.mean(best > g) for g in gammas])
        assert np.max(np.abs(analytic - empirical)) <= 0.03

    def test_requires_limited_mode(self, urban):
        with pytest.raises(DomainError):
            field.best_sinr_tail_limited(1.0, urban.link, urban.shadow, urban.field)


class TestFindTarget:
    def test_small_requirement(self, urban):
        assert field.find_target_prob(1e-15, urban.link, urban.shadow, urban.field) > 1 - 1e-6

    def test_monotone(self, urban):
        g = np.logspace(-1.5, 1.5, 12)
        p = field.find_target_prob(g, urban.link, urban.shadow, urban.field)
        assert np.all(np.diff(p) <= 1e-12)

    def test_more_cells_help(self, urban):
        few = field.find_target_prob(0.2, urban.link, urban.shadow, urban.field)
        many = field.find_target_prob(0.2, urban.link, urban.shadow, urban.with_k(504).field)
        assert many >= few


class TestTailTable:
    def test_uniform_tail(self):
        grid = np.linspace(1.0, 5.0, 41)
        table = field.TailTable(grid, np.r_[np.ones(40), 1.0])
        # a flat end is read as "tail stops at the grid edge"
        assert field.expected_target_quality(2.0, table) == pytest.approx(2.0 + (5.0 - 2.0))

    def test_conditional_mean_above_requirement(self, urban):
        table = field.build_tail_table(urban.link, urban.shadow, urban.field)
        for g in (0.1, 0.5, 2.0, 50.0):
            assert field.expected_target_quality(g, table) >= g

    def test_null_conditioning(self):
        table = field.TailTable(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
        with pytest.raises(ModelError):
            field.expected_target_quality(1.5, table)

    @pytest.mark.parametrize("grid, tail", [([1.0, 1.0], [0.5, 0.4]), ([1.0, 2.0], [0.4, 0.5]), ([1.0, 2.0], [1.5, 0.5])])
    def test_invalid_tables(self, grid, tail):
        with pytest.raises(DomainError):
            field.TailTable(np.array(grid), np.array(tail))

    def test_interpolation_bounds(self):
        table = field.TailTable(np.array([1.0, 10.0]), np.array([0.5, 0.05]))
        assert table(0.5) == 1.0
        assert table(np.sqrt(10.0)) == pytest.approx(math.sqrt(0.5 * 0.05))
        assert table(20.0) < 0.05

    @pytest.mark.slow
    def test_truncated_conditional_mean_against_monte_carlo(self, urban, rng):
        # E(Y | Y >= g) is infinite for alpha < 1, so compare the part up to the grid edge
        table = field.build_tail_table(urban.link, urban.shadow, urban.field)
        g_req, g_max = 10 ** (-0.8), table.gamma_grid[-1]
        y = sim.sample_best_sinr(urban, 200_000, rng)
        hit = np.minimum(y[y >= g_req], g_max)
        ys = np.geomspace(g_req, g_max, 4000)
        analytic = g_req + float(np.trapezoid(table(ys), ys)) / table(g_req)
        se = hit.std(ddof=1) / math.sqrt(hit.size)
        assert abs(hit.mean() - analytic) <= 2 * se + 0.02 * analytic
