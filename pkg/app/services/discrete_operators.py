"""Finite-dimensional surrogates of the base-fiber geometry.

The base circle is a node/edge cochain complex, the fiber R^k is the Witten complex
in the Hermite basis truncated by energy |n| + q, and the total Dirac operator lives
on their graded tensor product. Rotation holonomy enters at the periodic seam.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg, sparse

from app.core.errors import ContourError, ContractViolation, DomainError, NumericalRankError
from app.core.settings import (
    CONTOUR_MIN_NODES,
    CONTOUR_NODES,
    CONTOUR_X_MAX,
    DEFAULT_L,
    MAX_ASSEMBLY_DIM,
    ZERO_EIGENVALUE,
)
from app.services import clifford
from app.services.model_spectra import FiberModel, ScalingParams, Spectrum, SpectrumLine, TailModel

log = logging.getLogger(__name__)


def dense(matrix) -> np.ndarray:
    return matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)


# ---- base circle ----

@dataclass(frozen=True, eq=False)
class CircleGrid:
    N: int
    theta: np.ndarray
    metric: np.ndarray

    def __post_init__(self):
        if self.N < 8:
            raise DomainError(f"circle grid needs N >= 8 nodes, got {self.N}")
        if self.theta.shape != (self.N,) or self.metric.shape != (self.N,):
            raise ContractViolation("theta and metric samples must have one entry per node")
        if not np.all(self.metric > 0):
            raise DomainError("metric samples must be strictly positive")

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.N

    @property
    def edge_density(self) -> np.ndarray:
        # √g at edge midpoints
        root = np.sqrt(self.metric)
        return 0.5 * (root + np.roll(root, -1))

    @property
    def length(self) -> float:
        return float(np.sum(self.edge_density) * self.dtheta)


def make_circle_grid(N: int, L: float = DEFAULT_L, profile=None) -> CircleGrid:
    """Grid on [0, 2π) with metric proportional to profile(θ), rescaled to total length L."""
    if not L > 0:
        raise DomainError(f"circle length must be positive, got {L}")
    theta = np.arange(N) * (2 * math.pi / N)
    if profile is None:
        metric = np.full(N, (L / (2 * math.pi)) ** 2)
    else:
        metric = np.asarray(profile(theta), dtype=float)
        if not np.all(metric > 0):
            raise DomainError("metric profile must be strictly positive")
        metric = metric * (L / CircleGrid(N, theta, metric).length) ** 2
    return CircleGrid(N, theta, metric)


@dataclass(frozen=True, eq=False)
class DiscreteComplex:
    grid: CircleGrid
    d0: sparse.csr_matrix
    M0: sparse.dia_matrix
    M1: sparse.dia_matrix
    d_star: sparse.csr_matrix
    dirac: sparse.csr_matrix
    laplacian: sparse.csr_matrix

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def mass(self) -> np.ndarray:
        return np.concatenate([self.M0.diagonal(), self.M1.diagonal()])

    @property
    def degrees(self) -> np.ndarray:
        return np.repeat([0, 1], self.N)


def _difference(N: int, dtheta: float, seam=None):
    # (d u)_j = (u_{j+1} - u_j)/Δθ, the last edge closes through the seam
    interior = sparse.diags([-np.ones(N), np.ones(N - 1)], [0, 1], shape=(N, N), format="csr")
    closing = sparse.csr_matrix(([1.0], ([N - 1], [0])), shape=(N, N))
    if seam is None:
        return (interior + closing) / dtheta
    size = seam.shape[0]
    eye = sparse.identity(size, format="csr")
    return (sparse.kron(interior, eye) + sparse.kron(closing, sparse.csr_matrix(seam))).tocsr() / dtheta


def build_circle_complex(grid: CircleGrid) -> DiscreteComplex:
    d0 = _difference(grid.N, grid.dtheta)
    M0 = sparse.diags(np.sqrt(grid.metric) * grid.dtheta)
    M1 = sparse.diags(grid.dtheta / grid.edge_density)
    d_star = (sparse.diags(1.0 / M0.diagonal()) @ d0.T @ M1).tocsr()
    dirac = sparse.bmat([[None, d_star], [d0, None]], format="csr")
    return DiscreteComplex(grid, d0, M0, M1, d_star, dirac, (dirac @ dirac).tocsr())


# ---- fiber Witten complex ----

@dataclass(frozen=True, eq=False)
class FiberOperator:
    fiber: FiberModel
    basis_size: int
    states: tuple[tuple[tuple[int, ...], int], ...]
    energies: np.ndarray
    degrees: np.ndarray
    d: sparse.csr_matrix
    dirac: sparse.csr_matrix
    laplacian: sparse.csr_matrix
    rotation_generator: sparse.csr_matrix | None

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def ground_index(self) -> int:
        return self.states.index(((0,) * self.fiber.k, 0))

    def block(self, q: int) -> np.ndarray:
        idx = np.flatnonzero(self.degrees == q)
        return dense(self.laplacian)[np.ix_(idx, idx)]

    def blocks(self) -> dict[int, np.ndarray]:
        return {q: self.block(q) for q in range(self.fiber.k + 1)}


def _occupations(k: int, cutoff: int):
    for n in itertools.product(range(cutoff + 1), repeat=k):
        if sum(n) <= cutoff:
            yield n


def build_fiber_operator(fiber: FiberModel, basis_size: int) -> FiberOperator:
    """d_{τh} = √(2τ) Σ_j a_j ⊗ f^j∧ on Hermite states with |n| + q <= basis_size - 1."""
    if basis_size < 4:
        raise DomainError(f"basis_size must be >= 4, got {basis_size}")
    k, cutoff = fiber.k, basis_size - 1
    shape = clifford.AlgebraShape(0, k)
    ext = [clifford.wedge(shape, ("f", j + 1)).toarray() for j in range(k)]
    ints = [clifford.contraction(shape, ("f", j + 1)).toarray() for j in range(k)]

    states = tuple(
        (n, mask)
        for n in _occupations(k, cutoff)
        for mask in range(2 ** k)
        if sum(n) + bin(mask).count("1") <= cutoff
    )
    index = {state: i for i, state in enumerate(states)}
    scale = math.sqrt(2 * fiber.tau)

    rows, cols, vals = [], [], []
    for col, (n, mask) in enumerate(states):
        for j in range(k):
            if n[j] == 0 or mask >> j & 1:
                continue
            target_mask = mask | 1 << j
            lowered = n[:j] + (n[j] - 1,) + n[j + 1:]
            rows.append(index[(lowered, target_mask)])
            cols.append(col)
            vals.append(scale * math.sqrt(n[j]) * ext[j][target_mask, mask])
    dim = len(states)
    d = sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    dirac = (d + d.T).tocsr()

    generator = None
    if k == 2:
        generator = _rotation_generator(states, index, ext, ints)

    energies = np.array([sum(n) + bin(mask).count("1") for n, mask in states])
    degrees = np.array([bin(mask).count("1") for _, mask in states])
    log.debug("fiber operator k=%d tau=%s: %d states", k, fiber.tau, dim)
    return FiberOperator(fiber, basis_size, states, energies, degrees, d, dirac, (dirac @ dirac).tocsr(), generator)


def _rotation_generator(states, index, ext, ints) -> sparse.csr_matrix:
    """(a1†a2 − a2†a1) ⊗ 1 + 1 ⊗ (f¹∧ι₂ − f²∧ι₁); real antisymmetric, commutes with d_{τh}."""
    spin = ext[0] @ ints[1] - ext[1] @ ints[0]
    rows, cols, vals = [], [], []
    for col, ((n1, n2), mask) in enumerate(states):
        if n2 > 0:
            rows.append(index[((n1 + 1, n2 - 1), mask)])
            cols.append(col)
            vals.append(math.sqrt((n1 + 1) * n2))
        if n1 > 0:
            rows.append(index[((n1 - 1, n2 + 1), mask)])
            cols.append(col)
            vals.append(-math.sqrt(n1 * (n2 + 1)))
        for target in np.flatnonzero(spin[:, mask]):
            rows.append(index[((n1, n2), int(target))])
            cols.append(col)
            vals.append(float(spin[target, mask]))
    dim = len(states)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def seam_rotation(fiber_op: FiberOperator, alpha: float) -> np.ndarray:
    """Action of the fiber rotation R_α on the truncated Hermite basis."""
    if fiber_op.rotation_generator is None:
        raise DomainError("rotation holonomy is implemented for k = 2 only")
    return linalg.expm(alpha * dense(fiber_op.rotation_generator))


class FiberOracle(NamedTuple):
    spectrum: Spectrum
    ground_state_error: float
    kernel_dimension: int


def _fd_second_derivative(points: int, h: float) -> np.ndarray:
    # fourth-order central stencil, zero outside the box
    coeffs = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h * h)
    return sum(c * np.eye(points, k=offset) for c, offset in zip(coeffs, (-2, -1, 0, 1, 2)))


def fiber_fd_oracle(fiber: FiberModel, half_width: float = 8.0, points: int = 161, count: int = 10) -> FiberOracle:
    """Finite-difference spectrum of −Δ − kτ + τ²|y|² + 2τq on [−w, w]^k.

    The grid operator is a Kronecker sum of the 1-D operator, so its eigenpairs are
    sums and tensor products of the 1-D eigenpairs.
    """
    y = np.linspace(-half_width, half_width, points)
    h = y[1] - y[0]
    tau = fiber.tau
    one_d = -_fd_second_derivative(points, h) + np.diag(tau ** 2 * y ** 2 - tau)
    values, vectors = linalg.eigh(one_d)
    levels = values[: count + 2]

    raw = []
    for q in range(fiber.k + 1):
        for combo in itertools.combinations_with_replacement(range(len(levels)), fiber.k):
            orderings = len(set(itertools.permutations(combo)))
            raw.append((float(sum(levels[i] for i in combo)) + 2 * tau * q, q, orderings * math.comb(fiber.k, q)))
    raw.sort()

    lines: list[SpectrumLine] = []
    for value, q, mult in raw:
        same = [i for i, l in enumerate(lines) if l.degree == q and abs(l.eigenvalue - value) <= 1e-4 * (1 + abs(value))]
        if same:
            old = lines[same[0]]
            lines[same[0]] = SpectrumLine(q, old.eigenvalue, old.multiplicity + mult, 0, q, 0.0, old.eigenvalue)
        else:
            lines.append(SpectrumLine(q, max(value, 0.0), mult, 0, q, 0.0, max(value, 0.0)))
    lines.sort(key=lambda l: (l.eigenvalue, l.degree))
    lines = lines[:count]

    ground = vectors[:, 0] * np.sign(vectors[points // 2, 0])
    exact = np.exp(-tau * y ** 2 / 2)
    exact /= np.linalg.norm(exact)
    ground_k, exact_k = ground, exact
    for _ in range(fiber.k - 1):
        ground_k, exact_k = np.kron(ground_k, ground), np.kron(exact_k, exact)
    error = float(np.linalg.norm(ground_k - exact_k))
    kernel = sum(l.multiplicity for l in lines if l.degree == 0 and l.eigenvalue <= 2e-3 * tau)
    info = (("kind", "fiber-fd"), ("k", fiber.k), ("tau", tau), ("points", points))
    return FiberOracle(Spectrum(tuple(lines), TailModel(), info), error, kernel)


# ---- total assembly ----

@dataclass(frozen=True, eq=False)
class WittenAssembly:
    tau: float
    epsilon: float
    holonomy_angle: float
    fiber_basis_size: int
    complex: DiscreteComplex
    fiber_op: FiberOperator
    base_term: sparse.csr_matrix     # D̃_M on the tensor product, seam included
    fiber_term: sparse.csr_matrix    # (−1)^{N_M} ⊗ D_Y
    dirac: sparse.csr_matrix         # ε base_term + fiber_term
    differential: sparse.csr_matrix  # ε d_M + (−1)^{N_M} ⊗ d_{τh}
    mass: np.ndarray
    base_degrees: np.ndarray
    fiber_degrees: np.ndarray

    @property
    def dim(self) -> int:
        return self.dirac.shape[0]

    @property
    def base_dim(self) -> int:
        return 2 * self.complex.N

    @property
    def degrees(self) -> np.ndarray:
        return self.base_degrees + self.fiber_degrees

    def laplacian(self) -> sparse.csr_matrix:
        return (self.dirac @ self.dirac).tocsr()

    def symmetric(self, matrix=None) -> np.ndarray:
        """M^{1/2} X M^{-1/2}; symmetric whenever X is self-adjoint for the mass."""
        matrix = self.dirac if matrix is None else matrix
        root = np.sqrt(self.mass)
        return root[:, None] * dense(matrix) / root[None, :]


def assemble_total_dirac(complex: DiscreteComplex, fiber_op: FiberOperator, scaling: ScalingParams) -> WittenAssembly:
    N, F = complex.N, fiber_op.dim
    if 2 * N * F > MAX_ASSEMBLY_DIM:
        raise ContractViolation(f"assembly dimension {2 * N * F} exceeds {MAX_ASSEMBLY_DIM}")
    alpha = scaling.holonomy_angle
    seam = seam_rotation(fiber_op, alpha) if alpha else np.eye(F)
    eye_f = sparse.identity(F, format="csr")

    d0 = _difference(N, complex.grid.dtheta, seam)
    M0 = sparse.kron(complex.M0, eye_f)
    M1 = sparse.kron(complex.M1, eye_f)
    d_star = (sparse.diags(1.0 / M0.diagonal()) @ d0.T @ M1).tocsr()
    base_term = sparse.bmat([[None, d_star], [d0, None]], format="csr")
    base_d = sparse.bmat([[None, sparse.csr_matrix(d_star.shape)], [d0, None]], format="csr")

    grading = sparse.kron(sparse.diags(np.repeat([1.0, -1.0], N)), eye_f)
    fiber_term = (grading @ sparse.kron(sparse.identity(2 * N), fiber_op.dirac)).tocsr()
    fiber_d = (grading @ sparse.kron(sparse.identity(2 * N), fiber_op.d)).tocsr()

    eps = scaling.epsilon
    return WittenAssembly(
        tau=fiber_op.fiber.tau,
        epsilon=eps,
        holonomy_angle=alpha,
        fiber_basis_size=fiber_op.basis_size,
        complex=complex,
        fiber_op=fiber_op,
        base_term=base_term,
        fiber_term=fiber_term,
        dirac=(eps * base_term + fiber_term).tocsr(),
        differential=(eps * base_d + fiber_d).tocsr(),
        mass=np.concatenate([M0.diagonal(), M1.diagonal()]),
        base_degrees=np.repeat([0, 1], N * F),
        fiber_degrees=np.tile(fiber_op.degrees, 2 * N),
    )


def kernel_projection(fiber_op: FiberOperator, base_dim: int, mass=None) -> tuple[np.ndarray, np.ndarray]:
    """p = Id_base ⊗ |ground><ground| and its complement."""
    if mass is not None and not np.all(np.asarray(mass) > 0):
        raise NumericalRankError("mass matrix is not positive definite")
    values, vectors = linalg.eigh(dense(fiber_op.laplacian))
    gap = values[1] if len(values) > 1 else math.inf
    if abs(values[0]) > ZERO_EIGENVALUE or gap <= ZERO_EIGENVALUE:
        raise NumericalRankError(f"fiber kernel is not one-dimensional (lowest eigenvalues {values[:2]})")
    ground = vectors[:, 0] * np.sign(vectors[fiber_op.ground_index, 0])
    p = np.kron(np.eye(base_dim), np.outer(ground, ground))
    return p, np.eye(p.shape[0]) - p


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    epsilon: float
    p: np.ndarray
    p_perp: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A2_adjoint: np.ndarray
    A3: np.ndarray
    mass: np.ndarray

    @property
    def D0(self) -> np.ndarray:
        return self.A3

    def reassembled(self) -> np.ndarray:
        return self.A1 + self.A2 + self.A2_adjoint + self.A3

    def _symmetric(self, matrix) -> np.ndarray:
        root = np.sqrt(self.mass)
        return root[:, None] * matrix / root[None, :]

    def norm_A2(self) -> float:
        return float(np.linalg.norm(self._symmetric(self.A2), 2))

    def min_singular_A1(self) -> float:
        """Smallest |eigenvalue| of A1 on range p⊥."""
        values, vectors = linalg.eigh(self.p_perp)
        basis = vectors[:, values > 0.5]
        restricted = basis.T @ self._symmetric(self.A1) @ basis
        return float(np.min(np.abs(linalg.eigvalsh(0.5 * (restricted + restricted.T)))))


def block_decompose(assembly: WittenAssembly, p: np.ndarray) -> BlockDecomposition:
    scaled = dense(assembly.dirac) / assembly.epsilon
    q = np.eye(p.shape[0]) - p
    return BlockDecomposition(
        epsilon=assembly.epsilon,
        p=p,
        p_perp=q,
        A1=q @ scaled @ q,
        A2=q @ scaled @ p,
        A2_adjoint=p @ scaled @ q,
        A3=p @ scaled @ p,
        mass=assembly.mass,
    )


# ---- heat operators ----

def generalized_eigh(matrix, mass=None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a mass-self-adjoint matrix by Cholesky congruence.

    Returns (w, X) with matrix @ X = X diag(w) and X.T @ M @ X = I.
    """
    A = dense(matrix)
    M = np.eye(A.shape[0]) if mass is None else (np.diag(mass) if np.ndim(mass) == 1 else dense(mass))
    try:
        lower = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalRankError(f"mass matrix is not positive definite: {e}") from e
    S = linalg.solve_triangular(lower, (lower.T @ A).T, lower=True).T  # Lᵀ A L⁻ᵀ
    scale = max(np.linalg.norm(S, np.inf), 1.0)
    if np.linalg.norm(S - S.T, np.inf) > 1e-9 * scale:
        raise ContractViolation("matrix is not self-adjoint for the given mass")
    w, V = linalg.eigh(0.5 * (S + S.T))
    return w, linalg.solve_triangular(lower.T, V, lower=False)


def heat_operator(D2, t: float, mass=None) -> np.ndarray:
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")
    w, X = generalized_eigh(D2, mass)
    M = np.eye(X.shape[0]) if mass is None else (np.diag(mass) if np.ndim(mass) == 1 else dense(mass))
    return (X * np.exp(-t * w)) @ X.T @ M


class ContourResult(NamedTuple):
    matrix: np.ndarray
    error_bound: float
    resolvent_norm: float


def contour_heat_operator(D, t: float, b: float | None = None, x_max: float = CONTOUR_X_MAX,
                          n_nodes: int = CONTOUR_NODES) -> ContourResult:
    """e^{−tD²} = (1/2πi)∮ e^{−tλ²}(λ − D)⁻¹ dλ over the lines Im λ = ±b.

    D is real symmetric, so the upper line is the conjugate of the lower one and the
    integral reduces to (1/π) Im ∫ e^{−t(x−ib)²}(x − ib − D)⁻¹ dx.
    """
    D = dense(D).astype(float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ContractViolation("contour heat operator needs a square matrix")
    if np.linalg.norm(D - D.T, np.inf) > 1e-12 * max(np.linalg.norm(D, np.inf), 1.0):
        raise ContractViolation("contour heat operator needs a symmetric matrix")
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    if n_nodes < CONTOUR_MIN_NODES:
        raise DomainError(f"need at least {CONTOUR_MIN_NODES} quadrature nodes, got {n_nodes}")
    x = np.linspace(-x_max, x_max, n_nodes)
    h = x[1] - x[0]
    if b is None:
        b = min(math.pi / (4 * h * t), math.sqrt(6.0 / t))
    if not b > 0:
        raise DomainError(f"contour offset must be positive, got {b}")

    eye = np.eye(n)
    fine = np.zeros((n, n), dtype=complex)
    coarse = np.zeros((n, n), dtype=complex)
    worst = 0.0
    for j, xj in enumerate(x):
        z = xj - 1j * b
        resolvent = linalg.solve(z * eye - D, eye)
        if j % 32 == 0:
            worst = max(worst, float(np.linalg.norm(resolvent, 2)))
        term = np.exp(-t * z * z) * resolvent
        fine += term
        if j % 2 == 0:
            coarse += term
    if not np.all(np.isfinite(fine)) or worst > (1 + 1e-6) / b:
        raise ContourError(f"resolvent norm {worst:.3e} exceeds 1/b = {1 / b:.3e}; contour meets the spectrum")
    fine_val = (h * fine).imag / math.pi
    coarse_val = (2 * h * coarse).imag / math.pi
    truncation = math.exp(-t * (x_max ** 2 - b ** 2)) / (math.pi * b * t * x_max)
    error = float(np.max(np.abs(fine_val - coarse_val))) + truncation
    return ContourResult(fine_val, error, worst)


# ---- kernels and spectra of assemblies ----

def degree_eigenvalues(assembly: WittenAssembly) -> dict[int, np.ndarray]:
    """Eigenvalues of D² per total degree (D² preserves the degree)."""
    S = assembly.symmetric()
    S2 = S @ S
    S2 = 0.5 * (S2 + S2.T)
    degrees = assembly.degrees
    out = {}
    for q in range(int(degrees.max()) + 1):
        idx = np.flatnonzero(degrees == q)
        out[q] = np.clip(linalg.eigvalsh(S2[np.ix_(idx, idx)]), 0.0, None)
    return out


def kernel_counts(assembly: WittenAssembly, tol: float = 1e-8) -> tuple[int, ...]:
    return tuple(int(np.sum(values <= tol)) for values in degree_eigenvalues(assembly).values())


def spectrum_from_assembly(assembly: WittenAssembly, rel_tol: float = 1e-8) -> Spectrum:
    lines = []
    for q, values in degree_eigenvalues(assembly).items():
        start = 0
        values = np.sort(values)
        while start < len(values):
            stop = start + 1
            while stop < len(values) and values[stop] - values[start] <= rel_tol * max(1.0, values[start]):
                stop += 1
            lam = float(np.mean(values[start:stop]))
            lines.append(SpectrumLine(q, 0.0 if lam <= 1e-10 else lam, stop - start))
            start = stop
    info = (("kind", "assembly"), ("epsilon", assembly.epsilon), ("tau", assembly.tau),
            ("alpha", assembly.holonomy_angle), ("N", assembly.complex.N))
    return Spectrum(tuple(lines), TailModel(), info)


# ---- harmonic representatives ----

def circle_harmonics(complex: DiscreteComplex) -> dict[int, np.ndarray]:
    """Degree 0: the constant 1. Degree 1: the coclosed form with period 1."""
    grid = complex.grid
    one_form = grid.edge_density / grid.length
    return {
        0: np.concatenate([np.ones(grid.N), np.zeros(grid.N)])[:, None],
        1: np.concatenate([np.zeros(grid.N), one_form])[:, None],
    }


def assembly_harmonics(assembly: WittenAssembly) -> dict[int, np.ndarray]:
    """Base harmonics tensored with e^{−τ|y|²/2}, projected onto the numerical kernel of D².

    e^{−τ|y|²/2} has Hermite vacuum coefficient (π/τ)^{k/4}.
    """
    fiber_op = assembly.fiber_op
    vacuum = np.zeros(fiber_op.dim)
    vacuum[fiber_op.ground_index] = (math.pi / assembly.tau) ** (fiber_op.fiber.k / 4)
    candidates = {q: np.kron(h, vacuum[:, None]) for q, h in circle_harmonics(assembly.complex).items()}
    laplacian = dense(assembly.laplacian())
    out = {}
    for q, vectors in candidates.items():
        idx = np.flatnonzero(assembly.degrees == q)
        w, X = generalized_eigh(laplacian[np.ix_(idx, idx)], assembly.mass[idx])
        basis = X[:, w <= 1e-8]
        if basis.shape[1] != vectors.shape[1]:
            raise NumericalRankError(f"degree {q}: kernel dimension {basis.shape[1]}, expected {vectors.shape[1]}")
        projected = np.zeros_like(vectors)
        projected[idx] = basis @ (basis.T @ (assembly.mass[idx, None] * vectors[idx]))
        out[q] = projected
    return out
