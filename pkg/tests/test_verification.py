import dataclasses
import math

import pytest

from app.core.config import GeometryConfig, parse_config
from app.services import verification
from app.services.adiabatic_lab import EXACT


def test_twist_angles():
    assert verification.twist_angles(parse_config("")) == (math.pi,)
    cfg = parse_config("geometry.alpha = 1.0\ngrids.alphas = 0, 3.141592653589793, 1.0\n")
    assert verification.twist_angles(cfg) == (1.0, math.pi)
    assert verification.twist_angles(parse_config("grids.alphas = 0\n")) == ()


def test_expansion_fit_on_the_total_space(small_config):
    report = verification.run_check("expansion-fit", small_config)
    assert report.passed, report.failing()
    rows = {row.point: row for row in report.rows}
    for label in ("untwisted", "alpha=3.14159"):
        assert rows[f"{label}/a=b"].observed == pytest.approx(1.0, abs=1e-2)
        assert rows[f"{label}/constant"].observed <= 1e-3
        assert rows[f"{label}/b"].observed == pytest.approx(-math.sqrt(math.pi), rel=1e-2)


def test_contour_heat_on_twenty_random_matrices(small_config):
    report = verification.run_check("contour-heat", small_config)
    assert report.passed, report.failing()
    assert len(report.rows) == 20
    assert max(row.observed for row in report.rows) < 1e-8


def test_fiber_decay_covers_every_configured_angle(small_config):
    grids = dataclasses.replace(small_config.grids, alphas=(0.0, math.pi / 2, math.pi))
    report = verification.run_check("fiber-decay", dataclasses.replace(small_config, grids=grids))
    assert report.passed, report.failing()
    decay = {row.point: row.verdict for row in report.rows if row.point.endswith("/decay")}
    assert set(decay.values()) == {EXACT}
    assert {point.split("/")[0] for point in decay} == {"untwisted", "alpha=1.5708", "alpha=3.14159"}


def test_alpha_form_checks_both_geometries(small_config):
    report = verification.run_check("alpha-form", small_config)
    assert report.passed, report.failing()
    labels = {row.point.split("/")[0] for row in report.rows}
    assert labels == {"untwisted", "alpha=3.14159"}
    sums = [row for row in report.rows if row.point.endswith("/sum")]
    assert len(sums) == 2


def test_twisted_torsion_without_angles_is_empty(small_config):
    cfg = dataclasses.replace(small_config, grids=dataclasses.replace(small_config.grids, alphas=(0.0,)),
                              geometry=GeometryConfig())
    report = verification.run_check("twisted-torsion", cfg)
    assert not report.acceptance
    assert report.rows == []
    assert report.notes == ["no nonzero holonomy angle configured"]
