"""Torsion zeta functions, analytic torsion and determinant-line norms.

Two independent paths: the closed form reduces a circle-structured spectrum to
Riemann/Hurwitz zeta values; the heat split regularizes a heat supertrace by fitting
its small-time expansion and integrating the remainder over [0, 1] and [1, ∞).
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np
from scipy import integrate

from app.core.errors import ContractViolation, DomainError, FitError, TheoremViolation, UnsupportedStructureError
from app.core.settings import (
    CONSTANT_TERM_RATIO,
    FIT_MAX_CONDITION,
    FIT_MAX_RESIDUAL,
    FIT_POWERS,
    FIT_SAMPLES,
    FIT_WINDOW,
    TOLERANCES,
    ZERO_EIGENVALUE,
)
from app.services.discrete_operators import degree_eigenvalues
from app.services.model_spectra import HeatTrace, Spectrum, heat_supertrace

log = logging.getLogger(__name__)

ThetaFn = Callable[[float], HeatTrace]

CLOSED_FORM = "spectral-closed-form"
HEAT_SPLIT = "heat-split"


@dataclass(frozen=True)
class ZetaResult:
    zeta_at_zero: float
    zeta_prime_at_zero: float
    method: str
    error_budget: float = 0.0
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def log_torsion(self) -> float:
        return -0.5 * self.zeta_prime_at_zero

    def to_dict(self) -> dict:
        return {
            "zeta_at_zero": self.zeta_at_zero,
            "zeta_prime_at_zero": self.zeta_prime_at_zero,
            "log_torsion": self.log_torsion,
            "method": self.method,
            "error_budget": self.error_budget,
        }


@dataclass(frozen=True)
class ExpansionFit:
    powers: tuple[float, ...]
    coefficients: tuple[float, ...]
    residual: float
    window: tuple[float, float]
    condition: float = 1.0

    def coefficient(self, power: float) -> float:
        try:
            return self.coefficients[self.powers.index(power)]
        except ValueError:
            return 0.0

    @property
    def leading(self) -> float:
        """Coefficient of t^{−1/2}."""
        return self.coefficient(-0.5)

    @property
    def constant(self) -> float:
        return self.coefficient(0.0)

    def to_dict(self) -> dict:
        return {"powers": list(self.powers), "coefficients": list(self.coefficients), "residual": self.residual}


@dataclass(frozen=True, eq=False)
class DetLineNorm:
    grams: dict[int, np.ndarray]
    log_norm: float

    def to_dict(self) -> dict:
        return {"grams": {str(q): g.tolist() for q, g in sorted(self.grams.items())}, "log_norm": self.log_norm}


# ---- closed form ----

def _frequency_groups(spec: Spectrum) -> tuple[dict[float, int], float]:
    """Signed N-weights per base frequency after the fiber-excited lines cancel."""
    meta = spec.meta
    if meta.get("kind") not in ("circle", "product", "twisted") or "L" not in meta:
        raise UnsupportedStructureError(f"closed form needs a circle-structured spectrum, got {meta.get('kind')!r}")
    groups: dict[tuple[float, float], int] = defaultdict(int)
    for line in spec.lines:
        if line.base_part is None or line.fiber_part is None:
            raise UnsupportedStructureError("closed form needs base/fiber annotations on every line")
        if abs(line.eigenvalue) <= ZERO_EIGENVALUE:
            continue
        sign = -1 if line.degree % 2 else 1
        groups[(line.base_part, line.fiber_part)] += sign * line.degree * line.multiplicity
    survivors: dict[float, int] = defaultdict(int)
    for (mu, nu), weight in groups.items():
        if weight == 0:
            continue
        if nu != 0:
            raise UnsupportedStructureError(f"fiber-excited lines at nu={nu} do not cancel (weight {weight})")
        survivors[mu] += weight
    return {mu: w for mu, w in survivors.items() if w}, float(meta["L"])


def _branches(freqs: dict[float, int]) -> list[tuple[float, int]]:
    """Split frequencies |m + a| into arithmetic branches a + j; returns (offset, weight) pairs."""
    if not freqs:
        raise UnsupportedStructureError("no surviving base frequencies")
    values = sorted(freqs)
    shift = values[0] % 1.0
    shift = 0.0 if min(shift, 1 - shift) < 1e-10 else shift
    branches: dict[float, list[tuple[float, int]]] = defaultdict(list)
    for omega in values:
        frac = omega % 1.0
        for offset in {shift, 1.0 - shift} if shift else {0.0}:
            if min(abs(frac - offset % 1.0), 1 - abs(frac - offset % 1.0)) < 1e-9:
                branches[offset].append((omega, freqs[omega]))
                break
        else:
            raise UnsupportedStructureError(f"frequency {omega} outside the |m + {shift}| pattern")
    out = []
    for offset, members in branches.items():
        weights = {w for _, w in members}
        if len(weights) != 1:
            raise UnsupportedStructureError(f"branch {offset}: non-constant weights {sorted(weights)}")
        steps = np.diff([omega for omega, _ in members])
        if len(steps) and np.max(np.abs(steps - 1.0)) > 1e-9:
            raise UnsupportedStructureError(f"branch {offset}: frequencies are not contiguous")
        start = float(round(members[0][0])) if offset == 0.0 else members[0][0]
        out.append((start, members[0][1]))
    return out


def torsion_zeta_closed_form(spec: Spectrum) -> ZetaResult:
    """ζ_T(s) = (L/2π)^{2s} Σ_branches w·ζ_H(2s, a) continued to s = 0.

    The truncated spectrum only identifies the pattern; the continuation uses the full
    series.
    """
    mu_weights, L = _frequency_groups(spec)
    freqs = {math.sqrt(mu) * L / (2 * math.pi): w for mu, w in mu_weights.items()}
    L_eff = L / math.sqrt(float(spec.meta.get("base_factor", 1.0)))
    scale = L_eff / (2 * math.pi)
    z0 = mpmath.mpf(0)
    dz0 = mpmath.mpf(0)
    for start, weight in _branches(freqs):
        z0 += weight * mpmath.zeta(0, start)
        dz0 += weight * 2 * mpmath.zeta(0, start, 1)
    zeta0 = float(z0)
    zeta_prime = float(2 * math.log(scale) * z0 + dz0)
    log.debug("closed-form zeta: zeta(0)=%s zeta'(0)=%s", zeta0, zeta_prime)
    return ZetaResult(zeta0, zeta_prime, CLOSED_FORM, 1e-12, {"L_eff": L_eff})


# ---- heat split ----

def theta_from_spectrum(spec: Spectrum, weight: str = "N", remove_kernel: bool = False) -> ThetaFn:
    def theta(t: float) -> HeatTrace:
        return heat_supertrace(spec, t, weight, remove_kernel)
    return theta


def default_fit_window(spec: Spectrum, window: tuple[float, float] = FIT_WINDOW) -> tuple[float, float]:
    """The default window in units of the base time scale min(1, (L_eff/2π)²)."""
    meta = spec.meta
    if "L" not in meta:
        return window
    L_eff = float(meta["L"]) / math.sqrt(float(meta.get("base_factor", 1.0)))
    scale = min(1.0, (L_eff / (2 * math.pi)) ** 2)
    return window[0] * scale, window[1] * scale


def sample_theta(theta_fn: ThetaFn, window: tuple[float, float], samples: int = FIT_SAMPLES):
    lo, hi = window
    if not 0 < lo < hi < 1:
        raise DomainError(f"fit window must lie strictly inside (0, 1), got {window}")
    times = np.geomspace(lo, hi, samples)
    traces = [theta_fn(float(t)) for t in times]
    return times, np.array([tr.value for tr in traces]), np.array([tr.bound for tr in traces])


def fit_small_time_expansion(
    times,
    values,
    powers=FIT_POWERS,
    bounds=None,
    max_residual: float = FIT_MAX_RESIDUAL,
) -> ExpansionFit:
    """Least squares in the basis t^p; the constant term is fitted, never imposed."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 8:
        raise FitError(f"need at least 8 sample times, got {len(times)}")
    if bounds is not None and np.max(bounds) > max_residual:
        raise FitError(f"truncation bound {np.max(bounds):.3e} exceeds the fit tolerance {max_residual:.1e}")
    design = times[:, None] ** np.asarray(powers, dtype=float)[None, :]
    norms = np.linalg.norm(design, axis=0)
    scaled = design / norms
    condition = float(np.linalg.cond(scaled))
    if condition > FIT_MAX_CONDITION:
        raise FitError(f"design matrix condition {condition:.3e}; narrow the powers or move the window")
    solution, *_ = np.linalg.lstsq(scaled, values, rcond=None)
    coefficients = solution / norms
    residual = float(np.sqrt(np.mean((design @ coefficients - values) ** 2)))
    if residual > max_residual:
        raise FitError(f"fit residual {residual:.3e} above {max_residual:.1e} on window [{times[0]}, {times[-1]}]")
    return ExpansionFit(tuple(float(p) for p in powers), tuple(float(c) for c in coefficients), residual,
                        (float(times[0]), float(times[-1])), condition)


def fit_theta(theta_fn: ThetaFn, window: tuple[float, float], powers=FIT_POWERS, samples: int = FIT_SAMPLES,
              expect_no_constant: bool = True) -> ExpansionFit:
    times, values, bounds = sample_theta(theta_fn, window, samples)
    fit = fit_small_time_expansion(times, values, powers, bounds)
    if expect_no_constant and abs(fit.constant) > CONSTANT_TERM_RATIO * abs(fit.leading):
        raise TheoremViolation(
            f"constant term {fit.constant:.3e} exceeds {CONSTANT_TERM_RATIO:.0e} x leading {fit.leading:.3e}"
        )
    return fit


def _quad(fn, a, b) -> tuple[float, float]:
    value, error = integrate.quad(fn, a, b, limit=200, epsabs=1e-12, epsrel=1e-11)
    return value, error


def torsion_zeta_heat_split(theta_fn: ThetaFn, fit: ExpansionFit, chi2: float, large_time: float | None = None) -> ZetaResult:
    """ζ(0) = c − χ₂ and ζ'(0) = F(0) + G(0) − 2a + γ(c − χ₂).

    F(0) = ∫₀¹ (θ − a t^{−1/2} − c) dt/t, the part below the fit window taken from the
    fitted positive powers; G(0) = ∫₁^∞ (θ − χ₂) dt/t.
    """
    a, c = fit.leading, fit.constant
    t0 = fit.window[0]
    if not 0 < t0 < 1:
        raise DomainError(f"fit window must start inside (0, 1), got {t0}")

    below = sum(coef * t0 ** p / p for p, coef in zip(fit.powers, fit.coefficients) if p > 0)

    def small(u):
        t = math.exp(u)
        return theta_fn(t).value - a * math.exp(-0.5 * u) - c

    def large(u):
        return theta_fn(math.exp(u)).value - chi2

    middle, middle_err = _quad(small, math.log(t0), 0.0)
    u_max = math.log(large_time) if large_time and large_time > 1 else 8.0
    tail, tail_err = _quad(large, 0.0, u_max)
    remainder = abs(large(u_max)) * 2.0

    zeta0 = c - chi2
    zeta_prime = below + middle + tail - 2 * a + float(mpmath.euler) * zeta0
    bound = max(theta_fn(t0).bound, theta_fn(1.0).bound)
    budget = middle_err + tail_err + remainder + fit.residual * (1 + abs(math.log(t0))) + bound
    log.debug("heat split: a=%s c=%s F=%s G=%s", a, c, below + middle, tail)
    return ZetaResult(zeta0, zeta_prime, HEAT_SPLIT, budget,
                      {"a": a, "c": c, "F0": below + middle, "G0": tail, "window": fit.window})


def torsion_from_spectrum(spec: Spectrum, chi2: float | None = None, window=None,
                          expect_no_constant: bool = True) -> tuple[ZetaResult, ExpansionFit]:
    """Heat-split torsion of a model spectrum with its default fit window."""
    if chi2 is None:
        chi2 = secondary_euler_characteristic(spec.kernel_dimensions())
    theta = theta_from_spectrum(spec, "N")
    fit = fit_theta(theta, window or default_fit_window(spec), expect_no_constant=expect_no_constant)
    values, _ = spec.grouped("N", remove_kernel=True)
    large_time = 60.0 / float(values.min()) if len(values) else None
    return torsion_zeta_heat_split(theta, fit, chi2, large_time), fit


# ---- characteristics and norms ----

def euler_characteristic(betti) -> int:
    return sum((-1) ** p * int(b) for p, b in enumerate(betti))


def secondary_euler_characteristic(betti) -> int:
    if any(int(b) != b or b < 0 for b in betti):
        raise DomainError(f"betti numbers must be non-negative integers, got {betti}")
    return sum((-1) ** p * p * int(b) for p, b in enumerate(betti))


def _eigen_supertrace(eigenvalues: dict[int, np.ndarray], t: float) -> float:
    return float(sum((-1) ** q * np.sum(np.exp(-t * values)) for q, values in eigenvalues.items()))


def mckean_singer_index(source, t: float) -> float:
    """tr_s e^{−tD²} for a Spectrum or per-degree eigenvalues of an assembly."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    if isinstance(source, Spectrum):
        return heat_supertrace(source, t, "one").value
    if isinstance(source, dict):
        return _eigen_supertrace(source, t)
    return _eigen_supertrace(degree_eigenvalues(source), t)


def check_mckean_singer(source, times, tol: float = TOLERANCES["index_drift"]) -> tuple[list[float], float]:
    """Index at every time and the drift; drift above tol flags broken supersymmetry."""
    if not isinstance(source, (Spectrum, dict)):
        source = degree_eigenvalues(source)
    values = [mckean_singer_index(source, t) for t in times]
    drift = max(values) - min(values)
    if drift > tol:
        raise TheoremViolation(f"McKean-Singer drift {drift:.3e} over t in [{min(times)}, {max(times)}]")
    return values, drift


def det_line_log_norm(harmonics: dict[int, np.ndarray], mass, expected_betti=None) -> DetLineNorm:
    """log‖·‖ = Σ_q (−1)^q ½ log det Gram_q for det H = ⊗_q (det H^q)^{(−1)^q}."""
    mass = np.asarray(mass, dtype=float)
    if expected_betti is not None:
        dims = tuple(harmonics[q].shape[1] if q in harmonics else 0 for q in range(len(expected_betti)))
        if dims != tuple(expected_betti):
            raise TheoremViolation(f"harmonic dimensions {dims} differ from Betti numbers {tuple(expected_betti)}")
    grams = {}
    log_norm = 0.0
    for q, vectors in sorted(harmonics.items()):
        gram = vectors.T @ (mass[:, None] * vectors)
        if vectors.shape[1] == 0:
            grams[q] = gram
            continue
        if not np.allclose(gram, gram.T, atol=1e-12 * np.max(np.abs(gram))):
            raise ContractViolation(f"degree {q} Gram matrix is not symmetric")
        sign, logdet = np.linalg.slogdet(gram)
        if sign <= 0:
            raise ContractViolation(f"degree {q} Gram matrix is not positive definite")
        grams[q] = gram
        log_norm += (-1) ** q * 0.5 * logdet
    return DetLineNorm(grams, float(log_norm))


def quillen_log_norm(detline: DetLineNorm, zeta: ZetaResult) -> float:
    """log‖·‖_Q = log|·|_{L²} + log T."""
    return detline.log_norm + zeta.log_torsion
