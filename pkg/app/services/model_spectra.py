"""Closed-form spectra of the solvable pieces: circle Hodge Laplacian, fiber Witten
oscillator, their product under g = (1/t²)((1/ε²)g_M + (1/T²)g_Y), and the k = 2
product twisted by a rotation holonomy. Heat supertraces are evaluated from spectra.
"""
from __future__ import annotations

import functools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import comb, erfc

from app.core.errors import ContractViolation, DomainError
from app.core.settings import ZERO_EIGENVALUE

log = logging.getLogger(__name__)

WEIGHTS = ("one", "N", "N_M", "N_Y")
TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class CircleGeometry:
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError(f"circle length must be positive, got {self.L}")


@dataclass(frozen=True)
class FiberModel:
    k: int = 2
    tau: float = 1.0
    cutoff: int = 12

    def __post_init__(self):
        if self.k < 2 or self.k % 2:
            raise DomainError(f"fiber rank must be even and positive, got k={self.k}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if self.cutoff < 0:
            raise DomainError(f"cutoff must be >= 0, got {self.cutoff}")


@dataclass(frozen=True)
class ScalingParams:
    """g = (1/t²)((1/ε²) g_M + (1/T²) g_Y); eigenvalues scale as t²(ε²μ + T²ν)."""

    epsilon: float = 1.0
    T: float = 1.0
    t: float = 1.0
    holonomy_angle: float = 0.0

    def __post_init__(self):
        for name in ("epsilon", "T", "t"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "holonomy_angle", normalize_angle(self.holonomy_angle))

    @property
    def base_factor(self) -> float:
        return self.t ** 2 * self.epsilon ** 2

    @property
    def fiber_factor(self) -> float:
        return self.t ** 2 * self.T ** 2

    def eigenvalue(self, mu, nu):
        return self.base_factor * mu + self.fiber_factor * nu


def normalize_angle(alpha: float) -> float:
    alpha = math.fmod(float(alpha), TWO_PI)
    return alpha + TWO_PI if alpha < 0 else alpha


def base_eigenvalue(m, shift, L):
    """((2πm + shift)/L)², the single formula used for every circle line."""
    return ((TWO_PI * m + shift) / L) ** 2


# ---- truncation tails ----

def _gaussian_tail(a: float, start: int) -> float:
    # Σ_{m >= start} e^{-a m²}
    if a <= 0:
        return math.inf
    return math.exp(-a * start ** 2) + 0.5 * math.sqrt(math.pi / a) * float(erfc(math.sqrt(a) * start))


@dataclass(frozen=True)
class TailModel:
    """Upper bound on the heat supertrace of the lines a truncated spectrum omits.

    Omitted circle modes come in degree pairs, omitted oscillator levels in complete
    supersymmetric multiplets, so only the weighted parts survive in the bound.
    """

    kind: str = "exact"
    params: tuple = ()

    def bound(self, t: float, weight: str = "N") -> float:
        if self.kind == "exact":
            return 0.0
        if self.kind == "circle":
            L, max_mode = self.params
            if weight in ("one", "N_Y"):
                return 0.0
            return 2.0 * _gaussian_tail(t * (TWO_PI / L) ** 2, max_mode + 1)
        if self.kind == "fiber":
            k, tau, cutoff = self.params
            if weight in ("one", "N_M"):
                return 0.0
            x = math.exp(-2 * tau * t)
            return k * x ** (cutoff + 1) / -math.expm1(-2 * tau * t)
        if self.kind == "product":
            base_tail, base_factor = self.params
            if weight in ("one", "N_Y"):
                return 0.0
            return base_tail.bound(t * base_factor, "N_M")
        raise ContractViolation(f"unknown tail model {self.kind!r}")


# ---- spectra ----

@dataclass(frozen=True)
class SpectrumLine:
    degree: int
    eigenvalue: float
    multiplicity: int
    q_base: int | None = None
    q_fiber: int | None = None
    base_part: float | None = None
    fiber_part: float | None = None

    def key(self):
        return (self.degree, self.eigenvalue, _none_last(self.q_base), _none_last(self.q_fiber))


def _none_last(value):
    return -1 if value is None else value


class HeatTrace(NamedTuple):
    value: float
    bound: float


@dataclass(frozen=True)
class Spectrum:
    lines: tuple[SpectrumLine, ...]
    tail: TailModel = TailModel()
    info: tuple = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        for line in self.lines:
            if line.degree < 0:
                raise ContractViolation(f"negative degree in {line}")
            if int(line.multiplicity) != line.multiplicity or line.multiplicity < 1:
                raise ContractViolation(f"multiplicity must be a positive integer in {line}")
            if line.eigenvalue < -ZERO_EIGENVALUE:
                raise ContractViolation(f"negative eigenvalue in {line}")
        object.__setattr__(self, "lines", tuple(sorted(self.lines, key=SpectrumLine.key)))

    def __len__(self):
        return len(self.lines)

    @property
    def meta(self) -> dict:
        return dict(self.info)

    @property
    def truncation_bound(self) -> float:
        return self.tail.bound(1.0, "N")

    @property
    def max_degree(self) -> int:
        return max((line.degree for line in self.lines), default=0)

    def degree_lines(self, q: int) -> list[SpectrumLine]:
        return [line for line in self.lines if line.degree == q]

    def kernel_dimensions(self, tol: float = ZERO_EIGENVALUE) -> tuple[int, ...]:
        dims = [0] * (self.max_degree + 1)
        for line in self.lines:
            if abs(line.eigenvalue) <= tol:
                dims[line.degree] += line.multiplicity
        return tuple(dims)

    def arrays(self) -> dict[str, np.ndarray]:
        if "arrays" not in self._cache:
            self._cache["arrays"] = {
                "degree": np.array([l.degree for l in self.lines], dtype=np.int64),
                "eigenvalue": np.array([l.eigenvalue for l in self.lines], dtype=float),
                "multiplicity": np.array([l.multiplicity for l in self.lines], dtype=np.int64),
            }
        return self._cache["arrays"]

    def _weights(self, weight: str) -> np.ndarray:
        arr = self.arrays()
        if weight == "one":
            return np.ones_like(arr["degree"])
        if weight == "N":
            return arr["degree"]
        attr = {"N_M": "q_base", "N_Y": "q_fiber"}.get(weight)
        if attr is None:
            raise ContractViolation(f"unknown weight {weight!r}; expected one of {WEIGHTS}")
        values = [getattr(l, attr) for l in self.lines]
        if any(v is None for v in values):
            raise ContractViolation(f"weight {weight} needs split-degree annotations on every line")
        return np.array(values, dtype=np.int64)

    def grouped(self, weight: str = "N", remove_kernel: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Distinct eigenvalues with their summed signed weights; cancelling groups dropped."""
        key = ("grouped", weight, remove_kernel)
        if key not in self._cache:
            arr = self.arrays()
            signed = (1 - 2 * (arr["degree"] & 1)) * self._weights(weight) * arr["multiplicity"]
            eig = arr["eigenvalue"]
            if remove_kernel:
                keep = np.abs(eig) > ZERO_EIGENVALUE
                eig, signed = eig[keep], signed[keep]
            values, inverse = np.unique(eig, return_inverse=True)
            totals = np.bincount(inverse, weights=signed.astype(float), minlength=len(values))
            nonzero = totals != 0
            self._cache[key] = (values[nonzero], totals[nonzero])
        return self._cache[key]

    def grouped_parts(self, weight: str = "N") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct (base_part, fiber_part) pairs with their summed signed weights."""
        key = ("parts", weight)
        if key not in self._cache:
            if any(l.base_part is None or l.fiber_part is None for l in self.lines):
                raise ContractViolation("rescaling needs base/fiber annotations on every line")
            arr = self.arrays()
            signed = (1 - 2 * (arr["degree"] & 1)) * self._weights(weight) * arr["multiplicity"]
            parts = np.array([(l.base_part, l.fiber_part) for l in self.lines], dtype=float)
            pairs, inverse = np.unique(parts, axis=0, return_inverse=True)
            totals = np.bincount(inverse.ravel(), weights=signed.astype(float), minlength=len(pairs))
            nonzero = totals != 0
            self._cache[key] = (pairs[nonzero, 0], pairs[nonzero, 1], totals[nonzero])
        return self._cache[key]


def _merge(lines) -> tuple[SpectrumLine, ...]:
    counts: dict[tuple, int] = defaultdict(int)
    for line in lines:
        counts[(line.degree, line.eigenvalue, line.q_base, line.q_fiber, line.base_part, line.fiber_part)] += line.multiplicity
    return tuple(
        SpectrumLine(degree=d, eigenvalue=e, multiplicity=m, q_base=qb, q_fiber=qf, base_part=bp, fiber_part=fp)
        for (d, e, qb, qf, bp, fp), m in counts.items()
    )


def circle_hodge_spectrum(geom: CircleGeometry, max_mode: int) -> Spectrum:
    if max_mode < 1:
        raise DomainError(f"max_mode must be >= 1, got {max_mode}")
    lines = []
    for q in (0, 1):
        lines.append(SpectrumLine(q, 0.0, 1, q_base=q, q_fiber=0, base_part=0.0, fiber_part=0.0))
        for m in range(1, max_mode + 1):
            mu = base_eigenvalue(m, 0.0, geom.L)
            lines.append(SpectrumLine(q, mu, 2, q_base=q, q_fiber=0, base_part=mu, fiber_part=0.0))
    info = (("kind", "circle"), ("L", geom.L), ("max_mode", max_mode), ("base_factor", 1.0))
    return Spectrum(tuple(lines), TailModel("circle", (geom.L, max_mode)), info)


def level_count(k: int, level: int) -> int:
    """Number of occupation vectors n in N^k with |n| = level."""
    if level < 0:
        return 0
    return int(comb(level + k - 1, k - 1, exact=True))


def fiber_witten_spectrum(fiber: FiberModel) -> Spectrum:
    """Levels 2τ(|n| + q); the cutoff bounds the energy |n| + q."""
    lines = []
    for q in range(fiber.k + 1):
        for energy in range(q, fiber.cutoff + 1):
            nu = 2 * fiber.tau * energy
            mult = int(comb(fiber.k, q, exact=True)) * level_count(fiber.k, energy - q)
            lines.append(SpectrumLine(q, nu, mult, q_base=0, q_fiber=q, base_part=0.0, fiber_part=nu))
    info = (("kind", "fiber"), ("k", fiber.k), ("tau", fiber.tau), ("cutoff", fiber.cutoff))
    return Spectrum(tuple(lines), TailModel("fiber", (fiber.k, fiber.tau, fiber.cutoff)), info)


def product_spectrum(base: Spectrum, fiber: Spectrum, scaling: ScalingParams = ScalingParams()) -> Spectrum:
    if scaling.holonomy_angle != 0.0:
        raise ContractViolation("twisted product requested; use holonomy_twisted_spectrum")
    if base.meta.get("kind") != "circle":
        raise ContractViolation("product assembly needs a circle base spectrum")
    lines = []
    for b in base.lines:
        for f in fiber.lines:
            lines.append(SpectrumLine(
                degree=b.degree + f.degree,
                eigenvalue=scaling.eigenvalue(b.eigenvalue, f.eigenvalue),
                multiplicity=b.multiplicity * f.multiplicity,
                q_base=b.degree, q_fiber=f.degree,
                base_part=b.eigenvalue, fiber_part=f.eigenvalue,
            ))
    meta = {key: value for key, value in fiber.info if key != "kind"}
    meta.update(kind="product", L=base.meta["L"], max_mode=base.meta["max_mode"],
                base_factor=scaling.base_factor, fiber_factor=scaling.fiber_factor, alpha=0.0)
    return Spectrum(_merge(lines), TailModel("product", (base.tail, scaling.base_factor)), tuple(sorted(meta.items())))


@functools.lru_cache(maxsize=64)
def angular_sectors(cutoff: int) -> dict[tuple[int, int, int], int]:
    """(energy, form degree, angular momentum) -> count for the k = 2 oscillator on forms.

    Degree 0 and 2 carry orbital momentum only; dz and dz̄ add spin ±1 in degree 1.
    """
    counts: dict[tuple[int, int, int], int] = defaultdict(int)
    for energy in range(cutoff + 1):
        for q, spins in ((0, (0,)), (1, (1, -1)), (2, (0,))):
            n = energy - q
            if n < 0:
                continue
            for orbital in range(-n, n + 1, 2):
                for spin in spins:
                    counts[(energy, q, orbital + spin)] += 1
    return dict(counts)


def holonomy_twisted_spectrum(
    geom: CircleGeometry,
    fiber: FiberModel,
    alpha: float,
    max_mode: int,
    scaling: ScalingParams = ScalingParams(),
) -> Spectrum:
    """Sector ℓ of the rotation action sees base frequencies (2πm + ℓα)/L."""
    if fiber.k != 2:
        raise DomainError("rotation holonomy is implemented for k = 2 only")
    if max_mode < 1:
        raise DomainError(f"max_mode must be >= 1, got {max_mode}")
    alpha = normalize_angle(alpha)
    sectors = angular_sectors(fiber.cutoff)
    lines = []
    for (energy, q_fiber, ell), count in sectors.items():
        nu = 2 * fiber.tau * energy
        for m in range(-max_mode, max_mode + 1):
            mu = base_eigenvalue(m, ell * alpha, geom.L)
            for q_base in (0, 1):
                lines.append(SpectrumLine(
                    degree=q_base + q_fiber,
                    eigenvalue=scaling.eigenvalue(mu, nu),
                    multiplicity=count,
                    q_base=q_base, q_fiber=q_fiber,
                    base_part=mu, fiber_part=nu,
                ))
    info = (
        ("kind", "twisted" if alpha else "product"), ("L", geom.L), ("max_mode", max_mode),
        ("base_factor", scaling.base_factor), ("fiber_factor", scaling.fiber_factor),
        ("k", fiber.k), ("tau", fiber.tau), ("cutoff", fiber.cutoff), ("alpha", alpha),
    )
    log.debug("twisted spectrum alpha=%s: %d sector lines", alpha, len(lines))
    return Spectrum(_merge(lines), TailModel("product", (TailModel("circle", (geom.L, max_mode)), scaling.base_factor)), info)


def conformal_rescale(spec: Spectrum, sigma: float) -> Spectrum:
    """Spectrum of the metric g/σ², i.e. σ² times every eigenvalue."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    s2 = sigma ** 2
    lines = tuple(
        SpectrumLine(l.degree, s2 * l.eigenvalue, l.multiplicity, l.q_base, l.q_fiber, l.base_part, l.fiber_part)
        for l in spec.lines
    )
    tail = spec.tail
    if tail.kind == "product":
        tail = TailModel("product", (tail.params[0], tail.params[1] * s2))
    elif tail.kind == "circle":
        L, max_mode = tail.params
        tail = TailModel("circle", (L / sigma, max_mode))
    elif tail.kind == "fiber":
        k, tau, cutoff = tail.params
        tail = TailModel("fiber", (k, tau * s2, cutoff))
    meta = spec.meta
    if "base_factor" in meta:
        meta["base_factor"] = meta["base_factor"] * s2
    if "fiber_factor" in meta:
        meta["fiber_factor"] = meta["fiber_factor"] * s2
    return Spectrum(lines, tail, tuple(meta.items()))


def heat_supertrace(spec: Spectrum, t: float, weight: str = "one", remove_kernel: bool = False) -> HeatTrace:
    """Σ (−1)^q w(q) mult e^{−tλ} plus the truncation bound of the omitted lines."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    values, totals = spec.grouped(weight, remove_kernel)
    return HeatTrace(float(np.sum(totals * np.exp(-t * values))), spec.tail.bound(t, weight))


def scaled_heat_supertrace(spec: Spectrum, scaling: ScalingParams, t: float, weight: str = "one") -> HeatTrace:
    """heat_supertrace of the same geometry under another metric scaling.

    Eigenvalues are rebuilt from the annotations as t²(ε²μ + T²ν), so no new spectrum is
    assembled per grid point.
    """
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    mu, nu, totals = spec.grouped_parts(weight)
    value = float(np.sum(totals * np.exp(-t * scaling.eigenvalue(mu, nu))))
    tail = spec.tail
    if tail.kind == "product":
        # omitted twisted modes with ℓ ≠ 0 cancel per (m, ℓ, energy); only the unshifted vacuum sector remains
        tail = TailModel("product", (tail.params[0], scaling.base_factor))
    elif tail.kind == "circle":
        tail = TailModel("product", (tail, scaling.base_factor))
    elif tail.kind == "fiber":
        k, tau, cutoff = tail.params
        tail = TailModel("fiber", (k, tau * scaling.fiber_factor, cutoff))
    return HeatTrace(value, tail.bound(t, weight))
