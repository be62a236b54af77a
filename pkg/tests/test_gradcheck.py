import csv
import math

import numpy as np
import pytest

from powerpool.gradcheck import (
    REPORT_CSV_COLUMNS,
    GradCase,
    default_suite,
    fd_vjp,
    run_suite,
    write_report_csv,
)
from powerpool.matcore import rng_stream, sym


class TestFdVjp:
    def test_linear_map_recovers_upstream(self):
        m = sym(rng_stream(0).standard_normal((4, 4)))
        upstream = sym(rng_stream(1).standard_normal((4, 4)))
        numeric = fd_vjp(lambda a: 3.0 * a, m, upstream, step=1e-5)
        assert np.allclose(numeric, 3.0 * upstream, atol=1e-8)

    def test_matrix_square_matches_product_rule(self):
        m = sym(rng_stream(2).standard_normal((5, 5)))
        upstream = sym(rng_stream(3).standard_normal((5, 5)))
        numeric = fd_vjp(lambda a: a @ a, m, upstream, step=1e-6)
        exact = upstream @ m + m @ upstream
        assert np.abs(numeric - exact).max() <= 1e-7

    def test_default_step_scales_with_input(self):
        m = 100.0 * np.eye(3)
        upstream = np.eye(3)
        # would underflow to garbage with an absolute 1e-6 step if the
        # default did not scale; the quadratic still checks out
        numeric = fd_vjp(lambda a: a @ a, m, upstream)
        assert np.allclose(numeric, 2.0 * m, rtol=1e-6)

    def test_nonfinite_forward_detected(self):
        def bad(a):
            out = np.array(a)
            out[0, 0] = np.nan
            return out

        with pytest.raises(FloatingPointError, match=r"probe \(0, 0\)"):
            fd_vjp(bad, np.eye(3), np.eye(3), step=1e-6)

    def test_step_validation(self):
        with pytest.raises(ValueError):
            fd_vjp(lambda a: a, np.eye(2), np.eye(2), step=0.0)

    def test_result_is_symmetric(self):
        m = sym(rng_stream(4).standard_normal((4, 4)))
        numeric = fd_vjp(lambda a: a @ a @ a, m, np.eye(4), step=1e-6)
        assert (numeric == numeric.T).all()


class TestSuite:
    def test_default_suite_is_clean(self):
        reports = run_suite(default_suite(dims=(4,), seeds=(0, 1)))
        assert reports, "suite must not be empty"
        assert reports[0].max_rel_error <= 1e-6  # sorted worst-first

    def test_reports_sorted_worst_first(self):
        reports = run_suite(default_suite(dims=(4,), seeds=(0,)))
        errs = [r.max_rel_error for r in reports]
        assert errs == sorted(errs, reverse=True)

    def test_negated_gradient_is_caught(self):
        cases = default_suite(dims=(4,), seeds=(0,))[:6]
        reports = run_suite(cases, negate_analytic=True)
        for r in reports:
            assert r.max_rel_error == pytest.approx(2.0, abs=1e-5)

    def test_step_halving_shows_second_order_convergence(self):
        case = [GradCase("elementwise", "sigme", 5.0, 4, 0)]
        coarse = run_suite(case, step=1e-3)[0].max_rel_error
        fine = run_suite(case, step=5e-4)[0].max_rel_error
        ratio = coarse / fine
        assert 2.5 <= ratio <= 6.0  # central differences: error ~ step^2

    def test_broken_case_reports_infinite_error(self):
        reports = run_suite([GradCase("warp", "gamma", 0.5, 4, 0)])
        assert math.isinf(reports[0].max_rel_error)

    def test_route_and_op_joined_in_report(self):
        reports = run_suite([GradCase("fast_gamma", "gamma", 2, 3, 0)])
        assert reports[0].op == "fast_gamma:gamma"
        assert reports[0].probe_count == 6

    def test_suite_covers_all_routes(self):
        routes = {case.route for case in default_suite()}
        assert routes == {"elementwise", "spectral", "fast_maxexp", "fast_gamma"}


class TestReportCsv:
    def test_schema_and_round_trip(self, tmp_path):
        reports = run_suite(default_suite(dims=(4,), seeds=(0,))[:4])
        path = tmp_path / "gradcheck.csv"
        write_report_csv(reports, path)
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == REPORT_CSV_COLUMNS
        assert len(rows) == 1 + len(reports)
        assert float(rows[1][4]) == reports[0].max_rel_error
