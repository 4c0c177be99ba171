import math

import numpy as np
import pytest

from app.core.errors import DomainError, FitError, TheoremViolation, UnsupportedStructureError
from app.services import discrete_operators as ops
from app.services import heat_zeta as hz
from app.services.model_spectra import (
    CircleGeometry,
    FiberModel,
    HeatTrace,
    Spectrum,
    SpectrumLine,
    circle_hodge_spectrum,
    fiber_witten_spectrum,
    holonomy_twisted_spectrum,
    product_spectrum,
)


@pytest.mark.parametrize("L", [1.0, 2.0, 2 * math.pi])
def test_circle_closed_form(L):
    result = hz.torsion_zeta_closed_form(circle_hodge_spectrum(CircleGeometry(L), 50))
    assert result.method == hz.CLOSED_FORM
    assert result.zeta_at_zero == pytest.approx(1.0, abs=1e-12)
    assert result.log_torsion == pytest.approx(-math.log(L), abs=1e-12)


def test_product_and_half_turn_keep_the_circle_torsion():
    L = 2 * math.pi
    product = product_spectrum(circle_hodge_spectrum(CircleGeometry(L), 50), fiber_witten_spectrum(FiberModel(2, 1.0, 6)))
    twisted = holonomy_twisted_spectrum(CircleGeometry(L), FiberModel(2, 1.0, 4), math.pi, 50)
    for spec in (product, twisted):
        assert hz.torsion_zeta_closed_form(spec).log_torsion == pytest.approx(-math.log(L), abs=1e-12)


def test_closed_form_refuses_unknown_structure():
    with pytest.raises(UnsupportedStructureError):
        hz.torsion_zeta_closed_form(fiber_witten_spectrum(FiberModel()))
    with pytest.raises(UnsupportedStructureError):
        hz.torsion_zeta_closed_form(Spectrum((SpectrumLine(1, 1.0, 1),)))


def test_heat_split_agrees_with_closed_form():
    L = 2 * math.pi
    spec = circle_hodge_spectrum(CircleGeometry(L), 400)
    result, fit = hz.torsion_from_spectrum(spec)
    assert result.method == hz.HEAT_SPLIT
    assert fit.leading == pytest.approx(-L / (2 * math.sqrt(math.pi)), rel=1e-6)
    assert result.zeta_at_zero == pytest.approx(1.0, abs=1e-6)
    assert result.log_torsion == pytest.approx(-math.log(L), abs=1e-3)


class TestExpansionFit:

    def test_recovers_known_coefficients(self):
        times = np.geomspace(0.02, 0.5, 16)
        values = -3.0 * times ** -0.5 + 0.25 * times ** 0.5 - 0.1 * times ** 1.5
        fit = hz.fit_small_time_expansion(times, values)
        assert fit.leading == pytest.approx(-3.0, rel=1e-8)
        assert abs(fit.constant) < 1e-8
        assert fit.coefficient(7.0) == 0.0

    def test_rejects_too_few_samples(self):
        with pytest.raises(FitError):
            hz.fit_small_time_expansion(np.geomspace(0.02, 0.5, 5), np.ones(5))

    def test_rejects_loose_truncation_bounds(self):
        times = np.geomspace(0.02, 0.5, 16)
        with pytest.raises(FitError):
            hz.fit_small_time_expansion(times, times ** -0.5, bounds=np.full(16, 1e-3))

    def test_rejects_data_outside_the_basis(self):
        times = np.geomspace(0.02, 0.5, 16)
        with pytest.raises(FitError):
            hz.fit_small_time_expansion(times, np.exp(-1 / times) * 1e3 + np.sin(40 * times))

    def test_constant_term_is_flagged(self):
        def theta(t):
            return HeatTrace(1.0 / math.sqrt(t) + 0.5, 0.0)
        with pytest.raises(TheoremViolation):
            hz.fit_theta(theta, (0.02, 0.5))

    def test_window_must_sit_inside_unit_interval(self):
        with pytest.raises(DomainError):
            hz.sample_theta(lambda t: HeatTrace(0.0, 0.0), (0.1, 2.0))


def test_euler_characteristics():
    assert hz.euler_characteristic((1, 1)) == 0
    assert hz.secondary_euler_characteristic((1, 1)) == -1
    assert hz.secondary_euler_characteristic((1, 1, 0, 0)) == -1
    with pytest.raises(DomainError):
        hz.secondary_euler_characteristic((1, -1))


class TestMcKeanSinger:

    def test_circle_index_is_constant(self):
        values, drift = hz.check_mckean_singer(circle_hodge_spectrum(CircleGeometry(1.0), 100), (0.1, 1.0, 10.0))
        assert values == [0.0, 0.0, 0.0]
        assert drift == 0.0

    def test_unpaired_levels_break_the_index(self):
        eigenvalues = {0: np.array([0.0, 1.0]), 1: np.array([2.0])}
        with pytest.raises(TheoremViolation):
            hz.check_mckean_singer(eigenvalues, (0.1, 1.0))
        assert hz.mckean_singer_index({0: np.array([0.0, 1.0]), 1: np.array([1.0])}, 0.3) == pytest.approx(1.0)
        with pytest.raises(DomainError):
            hz.mckean_singer_index(eigenvalues, 0.0)


class TestDetLine:

    @pytest.fixture
    def complex(self):
        return ops.build_circle_complex(ops.make_circle_grid(12, 3.0))

    def test_circle_norm_is_log_length(self, complex):
        norm = hz.det_line_log_norm(ops.circle_harmonics(complex), complex.mass, (1, 1))
        assert norm.log_norm == pytest.approx(math.log(3.0), rel=1e-12)
        assert set(norm.to_dict()["grams"]) == {"0", "1"}

    def test_quillen_norm_of_the_circle_vanishes(self, complex):
        norm = hz.det_line_log_norm(ops.circle_harmonics(complex), complex.mass)
        zeta = hz.torsion_zeta_closed_form(circle_hodge_spectrum(CircleGeometry(3.0), 20))
        assert hz.quillen_log_norm(norm, zeta) == pytest.approx(0.0, abs=1e-12)

    def test_wrong_betti_numbers(self, complex):
        with pytest.raises(TheoremViolation):
            hz.det_line_log_norm(ops.circle_harmonics(complex), complex.mass, (1, 1, 1))
