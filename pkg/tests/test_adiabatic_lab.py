import math

import numpy as np
import pytest

from app.core.errors import DomainError
from app.services import adiabatic_lab as lab
from app.services.adiabatic_lab import EXACT, FAIL, INCONCLUSIVE, INFO, PASS, ExperimentReport, Geometry


def test_judges():
    assert lab.judge(1.0, 1.0005, 1e-3) == PASS
    assert lab.judge(1.0, 1.1, 1e-3) == FAIL
    assert lab.judge(math.nan, 0.0, math.inf) == FAIL
    assert lab.judge_at_least(2.0, 1.0) == PASS
    assert lab.judge_at_least(math.inf, 1.0) == FAIL


def test_report_verdict_aggregation():
    report = ExperimentReport("demo")
    report.add("a", {}, 0.0, 0.0, 0.0)
    report.add("b", {}, 5.0, 0.0, math.inf, INFO)
    assert report.verdict == PASS
    report.add("c", {}, 1.0, 0.0, 0.0, INCONCLUSIVE)
    assert report.verdict == INCONCLUSIVE
    report.add("d", {}, 1.0, 0.0, 0.5)
    assert report.verdict == FAIL
    assert report.failing() == ["d"]
    summary = report.summary()
    assert summary["rows"] == 4 and summary["acceptance"] is True


class TestRateVerdict:
    epsilons = (1.0, 0.5, 0.25, 0.125)

    def test_linear(self):
        verdict, slope, note = lab.rate_verdict(self.epsilons, [0.3 * e for e in self.epsilons])
        assert verdict == PASS and note == "linear"
        assert slope == pytest.approx(1.0)

    def test_quadratic_is_super_linear(self):
        verdict, slope, note = lab.rate_verdict(self.epsilons, [e * e for e in self.epsilons])
        assert verdict == PASS and note == "super-linear"
        assert slope == pytest.approx(2.0)

    def test_plateau_fails(self):
        verdict, _, _ = lab.rate_verdict(self.epsilons, [1.0, 0.9, 0.85, 0.84])
        assert verdict == FAIL

    def test_all_zero_is_exact(self):
        assert lab.rate_verdict(self.epsilons, [0.0, 1e-15, 0.0, 0.0])[0] == EXACT

    def test_drop_to_round_off(self):
        verdict, slope, _ = lab.rate_verdict(self.epsilons, [1e-3, 1e-14, 1e-15, 1e-16])
        assert verdict == PASS and slope is None


def test_loglog_slope_needs_positive_values():
    with pytest.raises(DomainError):
        lab.loglog_slope([1.0, 2.0], [0.0, 1.0])


def test_run_grid_keeps_order():
    points = list(range(20))
    assert lab.run_grid(lambda x: x * x, points, jobs=4) == [x * x for x in points]


def test_richardson_derivative():
    assert lab.richardson_derivative(math.sin, 0.3) == pytest.approx(math.cos(0.3), rel=1e-10)


def test_geometry_normalizes_angle_and_caps_twisted_sizes():
    assert Geometry(alpha=2 * math.pi).alpha == 0.0
    assert not Geometry().twisted
    variant = Geometry(max_mode=400, cutoff=12).twisted_variant(math.pi)
    assert variant.twisted
    assert (variant.max_mode, variant.cutoff) == (150, 6)
    assert Geometry(k=4).expected_betti == (1, 1, 0, 0, 0, 0)


def test_spectral_gap_is_uniform(small_geometry):
    report = lab.spectral_gap_sweep(small_geometry, epsilons=(1.0, 0.5, 0.25))
    assert report.passed, report.failing()
    assert abs(report.slopes["log_gap_vs_log_inv_eps"]) < 0.05


def test_mckean_singer_on_assemblies(small_geometry):
    report = lab.mckean_singer_check(small_geometry, times=(0.1, 1.0, 10.0))
    assert report.passed, report.failing()


def test_alpha_form_is_closed_for_products(small_geometry):
    report = lab.alpha_form_check(small_geometry, ts=(0.5,), Ts=(1.0, 2.0))
    assert report.passed, report.failing()
    residuals = [row.observed for row in report.rows if row.point.startswith("t=")]
    assert residuals == [0.0, 0.0]


def test_product_fiber_weight_vanishes(small_geometry):
    a, b = lab.alpha_components(lab.total_spectrum(small_geometry), 0.5, 3.0)
    assert b == 0.0
    assert a < 0


def test_fiber_decay_is_exact_for_products(small_geometry):
    report = lab.fiber_supertrace_decay_check(small_geometry, sigmas=(0.1, 0.5), Ts=(1.0, 2.0, 4.0))
    assert report.passed
    assert {row.verdict for row in report.rows if row.point.endswith("/decay")} == {EXACT}


def test_supertrace_limit(small_geometry):
    report = lab.supertrace_limit_check(small_geometry, epsilons=(1.0, 0.5, 0.25))
    assert not report.acceptance
    assert report.passed, report.failing()


def test_main_theorem_point(small_geometry):
    point = lab.main_theorem_point(small_geometry)
    assert point["correction"] == pytest.approx(0.0, abs=1e-6)
    assert point["quillen_M"] == pytest.approx(0.0, abs=1e-10)
    assert point["log_torsion_M"] == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert abs(point["residual"]) <= 1e-3


def test_det_line_does_not_move_with_the_fiber_scale(small_geometry):
    report = lab.detline_stabilization_check(small_geometry, Ts=(1.0, 2.0, 8.0))
    assert report.passed
    assert np.allclose([row.observed for row in report.rows], 0.0, atol=1e-10)


def test_rectangle_rejects_bad_corners(small_geometry):
    with pytest.raises(DomainError):
        lab.rectangle_contour_check(small_geometry, A=0.1, sigma=0.5)


def test_large_time_difference_follows_the_fiber_gap(small_geometry):
    report = lab.large_time_limit_check(small_geometry, t=1.0, epsilons=(1.0, 0.5, 0.25))
    assert report.passed, report.failing()
    rows = {row.point: row for row in report.rows}
    # e^{−tΔ_M} ⊗ e^{−(t/ε²)Δ_Y} off the fiber kernel: norm e^{−2τt/ε²}
    assert rows["eps=1"].observed == pytest.approx(math.exp(-2.0), rel=1e-8)
    assert rows["eps=0.5"].observed == pytest.approx(math.exp(-8.0), rel=1e-6)
    assert (rows["rate"].verdict, rows["rate"].note) == (PASS, "super-linear")
    assert rows["A2-bounded"].observed == pytest.approx(0.0, abs=1e-12)
    assert report.slopes["A1_vs_inv_eps"] == pytest.approx(1.0, abs=1e-6)
    assert rows["p-block"].observed <= 1e-3


def test_index_limit_is_the_euler_characteristic(small_geometry):
    report = lab.index_limit_check(small_geometry, epsilons=(1.0, 0.25))
    assert report.passed, report.failing()
    for row in report.rows:
        if row.point.endswith("/kernel"):
            assert (row.observed, row.note) == (0.0, "kernel=(1, 1, 0, 0)")
        else:
            assert row.observed == pytest.approx(0.0, abs=1e-8)


class TestRectangle:

    def test_sides_cancel_for_products(self, small_geometry):
        report = lab.rectangle_contour_check(small_geometry, A=2.0, T0=4.0, sigma=0.1)
        assert report.passed, report.failing()
        rows = {row.point: row for row in report.rows}
        assert rows["I2"].observed == 0.0 and rows["I4"].observed == 0.0
        assert rows["I1"].observed < 0
        assert rows["I1"].observed == pytest.approx(-rows["I3"].observed, rel=1e-12)
        assert rows["sum"].observed == pytest.approx(0.0, abs=1e-10)

    def test_degenerate_rectangle_has_zero_boundary_sum(self, small_geometry):
        report = lab.rectangle_contour_check(small_geometry, A=2.0, T0=1.0, sigma=0.1)
        rows = {row.point: row for row in report.rows}
        assert rows["I2"].observed == 0.0 and rows["I4"].observed == 0.0
        assert rows["sum"].observed == 0.0
        assert report.passed

    def test_divergences_are_removed_per_side(self, small_geometry):
        report = lab.rectangle_contour_check(small_geometry, A=2.0, T0=2.0, sigma=0.04)
        assert report.passed, report.failing()
        rows = {row.point: row for row in report.rows}
        shift_1 = rows["I1/regularized"].observed - rows["I1"].observed
        shift_3 = rows["I3/regularized"].observed - rows["I3"].observed
        assert shift_1 > 0
        assert shift_3 == pytest.approx(-shift_1, rel=1e-12)
        sides = sum(rows[f"I{i}"].observed for i in range(1, 5))
        assert rows["sum"].observed == pytest.approx(sides, abs=1e-12)


def test_main_theorem_residual_does_not_move_with_tau(small_geometry):
    report = lab.main_theorem_check(small_geometry, Ls=(2 * math.pi,), taus=(0.5, 1.0, 2.0))
    assert report.acceptance
    assert report.passed, report.failing()
    spread = next(row for row in report.rows if row.point.endswith("/tau-spread"))
    assert spread.verdict == PASS
    assert spread.observed <= 2e-3


class TestTwistedGeometry:
    """Flat holonomy over S¹ keeps base 0- and 1-forms isospectral in every angular sector."""

    @pytest.fixture
    def twisted(self, small_geometry):
        return small_geometry.twisted_variant(math.pi)

    def test_alpha_form(self, twisted):
        report = lab.alpha_form_check(twisted, ts=(0.5,), Ts=(1.0, 2.0))
        assert report.passed, report.failing()
        grid = [row for row in report.rows if row.point.startswith("t=")]
        assert [row.params["b"] for row in grid] == [0.0, 0.0]
        assert all(row.observed <= 1e-4 for row in grid)

    def test_fiber_weight_vanishes(self, twisted):
        assert lab.alpha_components(lab.total_spectrum(twisted), 0.5, 3.0)[1] == 0.0

    def test_fiber_decay_is_exact(self, twisted):
        report = lab.fiber_supertrace_decay_check(twisted, sigmas=(0.2, 0.5), Ts=(1.0, 4.0, 16.0))
        assert report.passed
        assert report.slopes == {}
        decay = [row for row in report.rows if row.point.endswith("/decay")]
        assert [row.verdict for row in decay] == [EXACT, EXACT]
        bounded = [row.observed for row in report.rows if row.point.endswith("/bounded")]
        assert max(bounded) <= 1e-12

    def test_supertrace_limit_fiber_part_is_exact(self, twisted):
        report = lab.supertrace_limit_check(twisted, epsilons=(1.0, 0.5, 0.25))
        assert report.passed, report.failing()
        assert next(row for row in report.rows if row.point == "N_Y-decay").verdict == EXACT

    def test_mckean_singer_takes_the_configured_angles(self, small_geometry):
        report = lab.mckean_singer_check(small_geometry, times=(0.1, 10.0), alphas=(0.0, math.pi / 2, math.pi))
        assert report.passed, report.failing()
        labels = sorted({row.point.split("/")[0] for row in report.rows})
        assert labels == ["alpha=1.5708", "alpha=3.14159", "spectrum", "untwisted"]
