import math
from fractions import Fraction

import numpy as np
import pytest

from powerpool.hdp import (
    BOUND_CSV_COLUMNS,
    bound_report_rows,
    eps1_gap,
    eps2_gap,
    eta_bar,
    eta_of_t,
    eta_tilde,
    fahdp_apply,
    gamma_of_t,
    hdp_apply,
    scaled_gap_chain,
    scaled_t_of_eta,
    support_ratio,
    t_of_eta,
    t_of_gamma,
    variance_ratio,
    verify_bounds,
)
from powerpool.matcore import (
    PoolDomainError,
    random_orthogonal,
    rng_stream,
    spd_from_spectrum,
)

_E = math.e


class TestDiffusionOperator:
    def test_matches_manual_eigenvalue_map(self):
        vals = np.array([0.9, 0.55, 0.2])
        basis = random_orthogonal(3, rng_stream(0))
        m = spd_from_spectrum(vals, basis)
        got = hdp_apply(m, 0.4)
        want = spd_from_spectrum(np.exp(-0.4 / vals), basis)
        assert np.allclose(got, want, atol=1e-12)

    def test_zero_eigenvalue_extends_to_zero(self):
        m = np.diag([0.7, 0.0])
        out = hdp_apply(m, 0.5)
        assert out[1, 1] == 0.0

    def test_time_must_be_positive(self):
        with pytest.raises(PoolDomainError):
            hdp_apply(np.eye(2), 0.0)


class TestParameterMaps:
    def test_time_of_unit_exponent(self):
        assert t_of_eta(1.0) == pytest.approx(_E / (4.0 * (_E - 1.0)), abs=1e-15)
        assert t_of_eta(1.0) == pytest.approx(0.3954941767, abs=1e-9)

    def test_time_map_monotone_decreasing(self):
        etas = np.linspace(1.0, 100.0, 200)
        ts = [t_of_eta(e) for e in etas]
        assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_exponent_of_time_reference_value(self):
        assert eta_of_t(0.3) == pytest.approx(1.50332, abs=1e-5)

    @pytest.mark.parametrize("eta", [10.0, 20.0, 50.0, 100.0])
    def test_inversion_error_below_five_percent(self, eta):
        back = eta_of_t(t_of_eta(eta))
        assert abs(back - eta) / eta <= 0.05

    def test_inversion_improves_with_eta(self):
        errs = [abs(eta_of_t(t_of_eta(e)) - e) / e for e in (10.0, 100.0, 1000.0)]
        assert errs[0] > errs[1] > errs[2]

    def test_gamma_time_round_trip(self):
        for t in np.linspace(0.01, 0.99, 99):
            assert abs(t_of_gamma(gamma_of_t(t)) - t) <= 1e-15
        assert gamma_of_t(1.0 / _E) == pytest.approx(1.0, abs=1e-15)

    def test_domains(self):
        with pytest.raises(PoolDomainError):
            t_of_eta(0.5)
        with pytest.raises(PoolDomainError):
            eta_of_t(1.0)
        with pytest.raises(PoolDomainError):
            gamma_of_t(0.0)
        with pytest.raises(PoolDomainError):
            t_of_gamma(-1.0)
        with pytest.raises(PoolDomainError):
            eta_tilde(0.0)

    def test_scaled_time_map_boundary(self):
        assert scaled_t_of_eta(1.0) == pytest.approx(_E / (2.0 * (_E - 1.0)), abs=1e-15)
        assert scaled_t_of_eta(0.5) == scaled_t_of_eta(1.0)

    def test_tightened_exponent_defined_past_one(self):
        # the re-aimed argument exceeds 1 for t near 1; must not raise
        for t in (0.9, 0.975, 0.99):
            assert eta_bar(t) > 0


class TestBoundGaps:
    def test_gap_values_at_unit_exponent(self):
        assert eps1_gap(1.0) == pytest.approx(0.027615, abs=1e-5)
        assert eps2_gap(1.0) == pytest.approx(0.046604, abs=1e-5)
        closed = 0.5 - math.exp(-_E / (2.0 * (_E - 1.0)))
        assert eps2_gap(1.0) == pytest.approx(closed, abs=1e-15)

    def test_first_gap_below_second_on_exponent_grid(self):
        etas = np.linspace(1.0, 100.0, 500)
        diffs = [eps2_gap(e) - eps1_gap(e) for e in etas]
        assert min(diffs) > 1e-4

    def test_scaled_chain_reference_values(self):
        eps3, eps4, y = scaled_gap_chain(0.3)
        assert eps3 == pytest.approx(0.023676305446888146, abs=1e-12)
        assert eps4 == pytest.approx(0.024081821286966343, abs=1e-12)
        assert y[0] == 0.3
        assert y[1] == pytest.approx(0.6308509536440924, abs=1e-12)
        assert y[2] == pytest.approx(0.3, abs=1e-9)  # root recovers t itself
        assert y[3] == pytest.approx(0.8916795340660404, abs=1e-12)

    def test_scaled_chain_invariants_across_times(self):
        for t in np.linspace(0.02, 0.98, 49):
            eps3, eps4, (y0, y1, y2, y3) = scaled_gap_chain(t)
            assert 0.0 <= eps3 <= eps4 + 1e-15
            assert abs(y2 - y0) <= 1e-6 * max(1.0, y0)
            assert y2 <= y1 + 1e-9 <= y3 + 2e-9

    def test_scaled_chain_domain(self):
        with pytest.raises(PoolDomainError):
            scaled_gap_chain(1.0)


class TestBoundTheorems:
    def test_polynomials_dominate_diffusion(self):
        lam = np.linspace(1e-4, 1.0, 500)
        for eta in np.linspace(1.0, 60.0, 25):
            t = t_of_eta(eta)
            diffusion = np.exp(-t / lam)
            maxexp_bound = 1.0 - (1.0 - lam) ** eta
            gamma_bound = lam ** (_E * t)
            assert float((maxexp_bound - diffusion).min()) >= -1e-12
            assert float((gamma_bound - diffusion).min()) >= -1e-12

    def test_verify_bounds_reports_no_violation(self):
        reports = verify_bounds(np.linspace(0.02, 0.98, 25), np.linspace(1e-4, 1.0, 300))
        assert all(r.max_violation == 0.0 for r in reports)
        assert all(r.eps1 <= r.eps2 for r in reports)

    def test_corrupted_parametrization_is_detected(self):
        reports = verify_bounds(
            np.linspace(0.3, 0.9, 7), np.linspace(1e-4, 1.0, 300),
            parametrization_scale=1.5,
        )
        assert max(r.max_violation for r in reports) > 0.0

    def test_lambda_grid_validated(self):
        with pytest.raises(PoolDomainError, match="lambda grid"):
            verify_bounds([0.3], [0.0, 0.5])
        with pytest.raises(PoolDomainError, match="lambda grid"):
            verify_bounds([0.3], [0.5, 1.5])

    def test_report_rows_match_columns(self):
        reports = verify_bounds([0.3, 0.6], np.linspace(0.01, 1.0, 50))
        rows = bound_report_rows(reports)
        assert len(rows) == 2
        assert all(len(row) == len(BOUND_CSV_COLUMNS) for row in rows)
        assert rows[0][1] == 0.3 and rows[1][1] == 0.6


class TestFastApproximateDiffusion:
    def spectrum_and_matrix(self, d, seed):
        rng = rng_stream(seed)
        vals = rng.uniform(0.05, 1.0, size=d)
        vals = vals / vals.sum()
        vals = np.sort(vals)[::-1]
        return vals, spd_from_spectrum(vals, random_orthogonal(d, rng))

    @pytest.mark.parametrize("t", [0.1, 0.3, 0.5, 0.8, 0.95])
    def test_ceil_rounding_dominates_diffusion_eigenwise(self, t):
        vals, m = self.spectrum_and_matrix(8, 1)
        fast = fahdp_apply(m, t, rounding="ceil_floor")
        fast_vals = np.sort(np.linalg.eigvalsh(fast))[::-1]
        hdp_vals = np.exp(-t / vals)
        assert float((fast_vals - hdp_vals).min()) >= -1e-12

    def test_large_time_uses_integer_power(self):
        vals, m = self.spectrum_and_matrix(5, 2)
        out = fahdp_apply(m, 2.7, rounding="ceil_floor")
        want = math.exp(-2.7) * np.linalg.matrix_power(m, 2)
        assert np.allclose(out, want, atol=1e-12)

    def test_unrounded_exponent_goes_spectral(self):
        vals, m = self.spectrum_and_matrix(5, 3)
        t = 0.37
        h = eta_tilde(t)
        out = fahdp_apply(m, t, rounding="none")
        want_vals = math.exp(-t) * (1.0 - (1.0 - vals) ** h)
        got_vals = np.sort(np.linalg.eigvalsh(out))[::-1]
        assert np.allclose(got_vals, want_vals, atol=1e-11)

    def test_round_mode_gives_integer_exponent(self):
        vals, m = self.spectrum_and_matrix(5, 4)
        t = 0.37
        h = round(eta_tilde(t))
        out = fahdp_apply(m, t, rounding="round")
        want_vals = math.exp(-t) * (1.0 - (1.0 - vals) ** h)
        got_vals = np.sort(np.linalg.eigvalsh(out))[::-1]
        assert np.allclose(got_vals, want_vals, atol=1e-11)

    def test_matching_point_value(self):
        m = np.diag([1.0, 0.0])
        t = 0.6
        out = fahdp_apply(m, t)
        # at lambda = 1 the approximation and the diffusion coincide
        assert out[0, 0] == pytest.approx(math.exp(-t), abs=1e-12)

    def test_trace_precondition(self):
        with pytest.raises(PoolDomainError, match="trace-normalized"):
            fahdp_apply(np.eye(3), 0.5)

    def test_rounding_mode_validated(self):
        with pytest.raises(ValueError, match="rounding"):
            fahdp_apply(np.diag([1.0, 0.0]), 0.5, rounding="up")

    def test_time_must_be_positive(self):
        with pytest.raises(PoolDomainError):
            fahdp_apply(np.diag([1.0, 0.0]), -0.5)


class TestSupportRatio:
    def test_exact_fractions(self):
        assert support_ratio(0, 1) == Fraction(1)
        assert support_ratio(1, 1) == Fraction(1)
        assert support_ratio(5, 10) == Fraction(61, 7)
        assert isinstance(support_ratio(3, 4), Fraction)

    def test_monotone_in_shots_for_multiple_cooccurrences(self):
        for n in (2, 5, 10):
            ratios = [support_ratio(j, n) for j in range(8)]
            assert all(a < b for a, b in zip(ratios, ratios[1:]))

    def test_variance_ratio(self):
        assert variance_ratio(1) == Fraction(1)
        assert variance_ratio(4) == Fraction(1, 4)
        assert variance_ratio(12) == Fraction(1, 12)

    def test_validation(self):
        with pytest.raises(PoolDomainError):
            support_ratio(-1, 3)
        with pytest.raises(PoolDomainError):
            support_ratio(2, 0)
        with pytest.raises(PoolDomainError):
            variance_ratio(0)
        with pytest.raises(PoolDomainError):
            support_ratio(1.5, 3)
