"""The acceptance suite: one ExperimentReport per tag, driven by a RunConfig."""
from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from app.core.config import RunConfig
from app.core.errors import TorsionLabError
from app.services import clifford
from app.services import discrete_operators as ops
from app.services import heat_zeta
from app.services import adiabatic_lab as lab
from app.services.adiabatic_lab import FAIL, PASS, ExperimentReport, Geometry
from app.services.model_spectra import CircleGeometry, FiberModel, circle_hodge_spectrum, normalize_angle

log = logging.getLogger(__name__)

ACCEPTANCE_TAGS = (
    "clifford-identities",
    "hodge-star",
    "circle-torsion",
    "fiber-spectrum",
    "expansion-fit",
    "main-theorem",
    "spectral-gap",
    "large-time",
    "contour-heat",
    "mckean-singer",
    "alpha-form",
    "fiber-decay",
)
EXTRA_TAGS = (
    "supertrace-limit",
    "index-limit",
    "projected-supertrace",
    "matched-divergence",
    "detline-stabilization",
    "quillen-metric",
    "torsion-epsilon",
    "twisted-torsion",
)

def geometry_from_config(cfg: RunConfig) -> Geometry:
    g, d = cfg.geometry, cfg.discretization
    return Geometry(L=g.L, k=g.k, tau=g.tau, alpha=g.alpha, N=d.N, fiber_basis=d.fiber_basis,
                    max_mode=d.max_mode, cutoff=d.cutoff)


def twist_angles(cfg: RunConfig) -> tuple[float, ...]:
    """Nonzero holonomy angles to test: geometry.alpha first, then grids.alphas."""
    angles = [normalize_angle(a) for a in (cfg.geometry.alpha, *cfg.grids.alphas)]
    return tuple(dict.fromkeys(a for a in angles if a != 0.0))


def _untwisted(cfg: RunConfig) -> Geometry:
    return geometry_from_config(cfg).replace(alpha=0.0)


def _twisted(cfg: RunConfig) -> list[Geometry]:
    geom = geometry_from_config(cfg)
    return [geom.twisted_variant(alpha) for alpha in twist_angles(cfg)]


def _label(geom: Geometry) -> str:
    return f"alpha={geom.alpha:.6g}" if geom.twisted else "untwisted"


def _merge(report: ExperimentReport, sub: ExperimentReport, label: str) -> None:
    for row in sub.rows:
        report.rows.append(row._replace(point=f"{label}/{row.point}"))
    report.slopes.update({f"{label}/{k}": v for k, v in sub.slopes.items()})
    report.notes.extend(f"{label}: {note}" for note in sub.notes)


def _count(report: ExperimentReport, point: str, params: dict, failures: int, note: str = "") -> None:
    report.add(point, params, failures, 0, 0, PASS if failures == 0 else FAIL, note)


# ---- 1. Clifford identities ----

def check_clifford_identities(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("clifford-identities")
    rng = np.random.default_rng(cfg.seed)
    for n, k in ((1, 2), (3, 2)):
        shape = clifford.AlgebraShape(n, k)
        params = {"n": n, "k": k}
        generators = [("e", i) for i in range(1, n + 1)] + [("f", j) for j in range(1, k + 1)]
        identity = clifford.ExteriorOperator.identity(shape)
        failures = 0
        for i, gi in enumerate(generators):
            for j, gj in enumerate(generators):
                delta = 2 * int(i == j)
                left = clifford.anticommutator(clifford.clifford_left(shape, gi), clifford.clifford_left(shape, gj))
                right = clifford.anticommutator(clifford.clifford_right(shape, gi), clifford.clifford_right(shape, gj))
                mixed = clifford.anticommutator(clifford.clifford_left(shape, gi), clifford.clifford_right(shape, gj))
                failures += not left.equals(identity * -delta)
                failures += not right.equals(identity * delta)
                failures += not mixed.is_zero()
        _count(report, f"n={n},k={k}/anticommutators", params, failures)

        constant = clifford.supertrace_constant(shape)
        full = (1 << shape.rank) - 1
        failures = 0
        for w in range(full + 1):
            for w_hat in range(full + 1):
                op = clifford.clifford_word(shape, w) @ clifford.clifford_word(shape, w_hat, right=True)
                expected = constant if w == full and w_hat == full else 0
                failures += clifford.supertrace(op) != expected
        _count(report, f"n={n},k={k}/word-supertraces", params, failures, f"top constant {constant}")

        failures = sum(
            clifford.parity(clifford.clifford_word(shape, w)) != (-1) ** bin(w).count("1") for w in range(full + 1)
        )
        _count(report, f"n={n},k={k}/parity", params, failures)

    failures = 0
    shapes = (clifford.AlgebraShape(1, 2), clifford.AlgebraShape(3, 2))
    for i in range(200):
        shape = shapes[i % 2]
        element = clifford.random_doubled_element(shape, rng)
        lhs = clifford.supertrace(clifford.quantize(element))
        failures += lhs != clifford.supertrace_constant(shape) * clifford.berezin_integral(element)
    _count(report, "berezin", {"elements": 200, "seed": cfg.seed}, failures)
    return report


# ---- 2. Hodge star scaling ----

def check_hodge_star(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("hodge-star")
    shape = clifford.AlgebraShape(1, 2)
    for variable in ("t", "T"):
        defect = clifford.star_scaling_defect(shape, variable)
        nonzero = sum(1 for entry in defect if entry != 0)
        _count(report, f"d/d{variable}", {"n": 1, "k": 2}, nonzero, "exact sympy identity")
    return report


# ---- 3. circle torsion ----

def check_circle_torsion(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("circle-torsion")
    max_mode = cfg.discretization.max_mode

    def point(L):
        spec = circle_hodge_spectrum(CircleGeometry(L), max_mode)
        closed = heat_zeta.torsion_zeta_closed_form(spec)
        split, _ = heat_zeta.torsion_from_spectrum(spec)
        return closed, split

    for L, (closed, split) in zip((1.0, 2.0, 2 * math.pi), lab.run_grid(point, (1.0, 2.0, 2 * math.pi), jobs)):
        predicted = -math.log(L)
        report.add(f"L={L:g}/closed-form", {"L": L}, closed.log_torsion, predicted, cfg.tolerance("torsion_closed"))
        report.add(f"L={L:g}/heat-split", {"L": L, "budget": split.error_budget}, split.log_torsion, predicted,
                   cfg.tolerance("torsion_heat"))
    return report


# ---- 4. fiber spectrum ----

def galerkin_lines(fiber_op: ops.FiberOperator, count: int = 10) -> list[tuple[int, float, int]]:
    """(degree, eigenvalue, multiplicity) of the Hermite Galerkin operator, lowest first."""
    lines = []
    for q, block in fiber_op.blocks().items():
        values = np.sort(np.linalg.eigvalsh(block))
        start = 0
        while start < len(values):
            stop = start + 1
            while stop < len(values) and values[stop] - values[start] <= 1e-8 * max(1.0, values[start]):
                stop += 1
            lines.append((q, float(np.mean(values[start:stop])), stop - start))
            start = stop
    lines.sort(key=lambda line: (line[1], line[0]))
    return lines[:count]


def check_fiber_spectrum(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("fiber-spectrum")
    # the oracle grid is points**k, so it runs on the plane fiber
    k = 2
    tol = cfg.tolerance("discretization")

    def point(tau):
        fiber = FiberModel(k, tau)
        oracle = ops.fiber_fd_oracle(fiber, count=14)
        return galerkin_lines(ops.build_fiber_operator(fiber, 8)), oracle

    for tau, (hermite, oracle) in zip(cfg.grids.taus, lab.run_grid(point, cfg.grids.taus, jobs)):
        params = {"tau": tau, "k": k}
        mismatched, worst = 0, 0.0
        for q, value, mult in hermite:
            candidates = [l for l in oracle.spectrum.lines if l.degree == q]
            best = min(candidates, key=lambda l: abs(l.eigenvalue - value), default=None)
            if best is None or best.multiplicity != mult:
                mismatched += 1
                continue
            error = abs(best.eigenvalue - value) / max(value, 2 * tau)
            worst = max(worst, error)
        report.add(f"tau={tau:g}/lines", params, worst, 0.0, tol)
        _count(report, f"tau={tau:g}/multiplicities", params, mismatched)
        report.add(f"tau={tau:g}/kernel", params, oracle.kernel_dimension, 1, 0)
        report.add(f"tau={tau:g}/ground-state", params, oracle.ground_state_error, 0.0, tol)
    return report


# ---- 5. small-time expansion ----

def check_expansion_fit(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("expansion-fit")
    tol = cfg.tolerance("fit_relative")
    for geom in (_untwisted(cfg), *_twisted(cfg)):
        params = {"L": geom.L, "tau": geom.tau, "alpha": geom.alpha}
        label = _label(geom)
        base = lab.base_spectrum(geom)
        fit_M = heat_zeta.fit_theta(heat_zeta.theta_from_spectrum(base), heat_zeta.default_fit_window(base))
        spec = lab.total_spectrum(geom)
        fit_E = heat_zeta.fit_theta(heat_zeta.theta_from_spectrum(spec), heat_zeta.default_fit_window(spec),
                                    expect_no_constant=False)
        ratio = abs(fit_E.constant) / abs(fit_E.leading)
        report.add(f"{label}/constant", params, ratio, 0.0, cfg.tolerance("constant_term"))
        report.add(f"{label}/a=b", params, fit_E.leading / fit_M.leading, 1.0, tol)
        report.add(f"{label}/b", params, fit_M.leading, -geom.L / (2 * math.sqrt(math.pi)),
                   tol * geom.L / (2 * math.sqrt(math.pi)))
    return report


# ---- 6. main theorem ----

def check_main_theorem(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.main_theorem_check(_untwisted(cfg), (1.0, 2 * math.pi), cfg.grids.taus, cfg.tolerances, jobs)


def check_twisted_torsion(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("twisted-torsion", acceptance=False)
    for geom in _twisted(cfg):
        sub = lab.main_theorem_check(geom, (cfg.geometry.L,), cfg.grids.taus, cfg.tolerances, jobs)
        _merge(report, sub, _label(geom))
    if not report.rows:
        report.notes.append("no nonzero holonomy angle configured")
    return report


# ---- 7, 8. adiabatic limits on assemblies ----

def check_spectral_gap(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.spectral_gap_sweep(geometry_from_config(cfg), cfg.grids.epsilons, cfg.tolerances, jobs)


def check_large_time(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.large_time_limit_check(geometry_from_config(cfg), 1.0, cfg.grids.epsilons, cfg.tolerances, jobs)


# ---- 9. contour heat operator ----

def check_contour_heat(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("contour-heat")
    rng = np.random.default_rng(cfg.seed)
    matrices = []
    for _ in range(20):
        G = rng.standard_normal((50, 50)) / math.sqrt(50)
        matrices.append(0.5 * (G + G.T))

    def point(D):
        result = ops.contour_heat_operator(D, 1.0)
        exact = ops.heat_operator(D @ D, 1.0)
        return float(np.max(np.abs(result.matrix - exact))), result.error_bound

    for i, (error, bound) in enumerate(lab.run_grid(point, matrices, jobs)):
        report.add(f"matrix={i}", {"t": 1.0, "seed": cfg.seed, "error_bound": bound}, error, 0.0,
                   cfg.tolerance("contour"))
    return report


# ---- 10. McKean-Singer ----

def check_mckean_singer(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.mckean_singer_check(geometry_from_config(cfg), alphas=twist_angles(cfg), tolerances=cfg.tolerances)


# ---- 11. α-form and rectangle ----

def check_alpha_form(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("alpha-form")
    for geom in (_untwisted(cfg), *_twisted(cfg)):
        label = _label(geom)
        _merge(report, lab.alpha_form_check(geom, cfg.grids.times, cfg.grids.Ts, tolerances=cfg.tolerances,
                                            jobs=jobs), label)
        _merge(report, lab.rectangle_contour_check(geom, tolerances=cfg.tolerances), label)
    return report


# ---- 12. fiber supertrace decay ----

def check_fiber_decay(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    report = ExperimentReport("fiber-decay")
    for geom in (_untwisted(cfg), *_twisted(cfg)):
        _merge(report, lab.fiber_supertrace_decay_check(geom, cfg.grids.sigmas, cfg.grids.Ts, cfg.tolerances),
               _label(geom))
    return report


# ---- extras ----

def check_supertrace_limit(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.supertrace_limit_check(geometry_from_config(cfg), 1.0, cfg.grids.epsilons, cfg.tolerances, jobs)


def check_index_limit(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.index_limit_check(geometry_from_config(cfg), 1.0, cfg.grids.epsilons, cfg.tolerances, jobs)


def check_projected_supertrace(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.projected_supertrace_check(geometry_from_config(cfg), cfg.grids.times, cfg.grids.epsilons,
                                          cfg.tolerances)


def check_matched_divergence(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.matched_divergence_check(_untwisted(cfg), cfg.grids.sigmas, tolerances=cfg.tolerances)


def check_detline_stabilization(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.detline_stabilization_check(geometry_from_config(cfg), cfg.grids.Ts, cfg.tolerances)


def check_quillen_metric(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    return lab.quillen_metric_check(_untwisted(cfg), tolerances=cfg.tolerances, jobs=jobs)


def check_torsion_epsilon(cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    epsilons = tuple(e for e in cfg.grids.epsilons if e >= 0.125)
    return lab.torsion_epsilon_sweep(_untwisted(cfg), epsilons, cfg.tolerances, jobs)


CHECKS: dict[str, Callable[[RunConfig, int], ExperimentReport]] = {
    "clifford-identities": check_clifford_identities,
    "hodge-star": check_hodge_star,
    "circle-torsion": check_circle_torsion,
    "fiber-spectrum": check_fiber_spectrum,
    "expansion-fit": check_expansion_fit,
    "main-theorem": check_main_theorem,
    "spectral-gap": check_spectral_gap,
    "large-time": check_large_time,
    "contour-heat": check_contour_heat,
    "mckean-singer": check_mckean_singer,
    "alpha-form": check_alpha_form,
    "fiber-decay": check_fiber_decay,
    "supertrace-limit": check_supertrace_limit,
    "index-limit": check_index_limit,
    "projected-supertrace": check_projected_supertrace,
    "matched-divergence": check_matched_divergence,
    "detline-stabilization": check_detline_stabilization,
    "quillen-metric": check_quillen_metric,
    "torsion-epsilon": check_torsion_epsilon,
    "twisted-torsion": check_twisted_torsion,
}


def run_check(tag: str, cfg: RunConfig, jobs: int = 1) -> ExperimentReport:
    """Run one tag; a library error becomes a failing report instead of aborting the suite."""
    if tag not in CHECKS:
        raise KeyError(tag)
    try:
        report = CHECKS[tag](cfg, jobs)
    except TorsionLabError as e:
        log.error("ERROR in %s: %r", tag, e)
        report = ExperimentReport(tag)
        report.add("error", {}, math.nan, 0.0, 0.0, FAIL, repr(e))
    report.tag = tag
    report.acceptance = tag in ACCEPTANCE_TAGS
    log.info("%s: %s", tag, report.verdict)
    return report


def run_suite(cfg: RunConfig, tags=ACCEPTANCE_TAGS, jobs: int = 1) -> list[ExperimentReport]:
    return [run_check(tag, cfg, jobs) for tag in tags]


def suite_passed(reports) -> bool:
    return all(r.passed for r in reports if r.acceptance)
