"""Exterior and Clifford algebra on Λ(V*), V = span(e_1..e_n, f_1..f_k).

Basis words are bitmasks over the generators in the fixed order
e1..en, f1..fk and, for the doubled algebra Λ(E ⊕ Ê), then ê1..ên, f̂1..f̂k.
Matrices are integer valued so the algebra identities hold exactly.
"""
from __future__ import annotations

import functools
import re
from dataclasses import dataclass

import numpy as np
import sympy
from scipy import sparse

from app.core.errors import ContractViolation, DomainError, InvalidGeneratorError
from app.core.settings import DENSE_LIMIT, MAX_ALGEBRA_RANK, MAX_DOUBLED_RANK

_GENERATOR_RE = re.compile(r"^(h?)([ef])(\d+)$")


def parse_generator(generator) -> tuple[str, int, bool]:
    """'e1', 'f2', 'he1' or ('e', 1) -> (kind, index, hatted)."""
    if isinstance(generator, str):
        m = _GENERATOR_RE.match(generator.strip())
        if not m:
            raise InvalidGeneratorError(f"cannot parse generator {generator!r}")
        return m.group(2), int(m.group(3)), bool(m.group(1))
    if isinstance(generator, tuple) and len(generator) in (2, 3):
        kind, index = generator[0], int(generator[1])
        hatted = bool(generator[2]) if len(generator) == 3 else False
        if kind not in ("e", "f"):
            raise InvalidGeneratorError(f"unknown generator kind {kind!r}")
        return kind, index, hatted
    raise InvalidGeneratorError(f"cannot parse generator {generator!r}")


@dataclass(frozen=True)
class AlgebraShape:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 0 or self.k < 0:
            raise DomainError(f"ranks must be non-negative, got n={self.n}, k={self.k}")
        if self.n + self.k > MAX_ALGEBRA_RANK:
            raise DomainError(f"n + k = {self.n + self.k} exceeds {MAX_ALGEBRA_RANK}")

    @property
    def rank(self) -> int:
        return self.n + self.k

    def dim(self, doubled: bool = False) -> int:
        if doubled:
            if self.rank > MAX_DOUBLED_RANK:
                raise DomainError(f"doubled algebra needs n + k <= {MAX_DOUBLED_RANK}")
            return 4 ** self.rank
        return 2 ** self.rank

    def bit(self, generator, doubled: bool = False) -> int:
        kind, index, hatted = parse_generator(generator)
        limit = self.n if kind == "e" else self.k
        if not 1 <= index <= limit:
            raise InvalidGeneratorError(f"{kind}{index} out of range for shape (n={self.n}, k={self.k})")
        if hatted and not doubled:
            raise InvalidGeneratorError(f"hatted generator h{kind}{index} needs the doubled algebra")
        pos = index - 1 if kind == "e" else self.n + index - 1
        return pos + self.rank if hatted else pos

    def base_bits(self) -> int:
        return (1 << self.n) - 1

    def fiber_bits(self) -> int:
        return ((1 << self.k) - 1) << self.n


@dataclass(frozen=True)
class BasisWord:
    e_set: tuple[int, ...] = ()
    f_set: tuple[int, ...] = ()
    e_hat_set: tuple[int, ...] = ()
    f_hat_set: tuple[int, ...] = ()

    def __post_init__(self):
        for part in (self.e_set, self.f_set, self.e_hat_set, self.f_hat_set):
            if any(b <= a for a, b in zip(part, part[1:])) or any(i < 1 for i in part):
                raise InvalidGeneratorError(f"index sets must be strictly increasing, got {part}")

    @property
    def degree(self) -> int:
        return len(self.e_set) + len(self.f_set) + len(self.e_hat_set) + len(self.f_hat_set)

    @property
    def doubled(self) -> bool:
        return bool(self.e_hat_set or self.f_hat_set)

    def mask(self, shape: AlgebraShape) -> int:
        doubled = self.doubled
        m = 0
        for i in self.e_set:
            m |= 1 << shape.bit(("e", i), doubled)
        for j in self.f_set:
            m |= 1 << shape.bit(("f", j), doubled)
        for i in self.e_hat_set:
            m |= 1 << shape.bit(("e", i, True), True)
        for j in self.f_hat_set:
            m |= 1 << shape.bit(("f", j, True), True)
        return m

    @classmethod
    def from_mask(cls, shape: AlgebraShape, mask: int, doubled: bool = False) -> "BasisWord":
        if mask < 0 or mask >= shape.dim(doubled):
            raise ContractViolation(f"mask {mask} outside the basis of {shape}")
        n, m = shape.n, shape.rank
        e = tuple(i + 1 for i in range(n) if mask >> i & 1)
        f = tuple(j + 1 for j in range(shape.k) if mask >> (n + j) & 1)
        eh = tuple(i + 1 for i in range(n) if mask >> (m + i) & 1)
        fh = tuple(j + 1 for j in range(shape.k) if mask >> (m + n + j) & 1)
        return cls(e, f, eh, fh)

    def render(self) -> str:
        parts = [f"e{i}" for i in self.e_set] + [f"f{j}" for j in self.f_set]
        parts += [f"he{i}" for i in self.e_hat_set] + [f"hf{j}" for j in self.f_hat_set]
        return "^".join(parts) if parts else "1"

    @classmethod
    def parse(cls, text: str) -> "BasisWord":
        text = text.strip()
        if text == "1":
            return cls()
        sets = {("e", False): [], ("f", False): [], ("e", True): [], ("f", True): []}
        for token in text.split("^"):
            kind, index, hatted = parse_generator(token)
            sets[(kind, hatted)].append(index)
        return cls(*(tuple(sets[key]) for key in (("e", False), ("f", False), ("e", True), ("f", True))))


def _popcount(values: np.ndarray) -> np.ndarray:
    counts = np.zeros_like(values)
    v = values.copy()
    while v.any():
        counts += v & 1
        v >>= 1
    return counts


def _as_storage(matrix, dim: int):
    if dim <= DENSE_LIMIT:
        return matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    return matrix.tocsr() if sparse.issparse(matrix) else sparse.csr_matrix(matrix)


@dataclass(frozen=True, eq=False)
class ExteriorOperator:
    shape: AlgebraShape
    matrix: object
    doubled: bool = False

    def __post_init__(self):
        dim = self.shape.dim(self.doubled)
        if self.matrix.shape != (dim, dim):
            raise ContractViolation(f"matrix shape {self.matrix.shape} does not match dimension {dim}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal() if self.is_sparse else np.diagonal(self.matrix)

    def _same_space(self, other: "ExteriorOperator"):
        if not isinstance(other, ExteriorOperator):
            raise ContractViolation(f"expected ExteriorOperator, got {type(other).__name__}")
        if other.shape != self.shape or other.doubled != self.doubled:
            raise ContractViolation("operators act on different algebras")

    def _wrap(self, matrix) -> "ExteriorOperator":
        return ExteriorOperator(self.shape, _as_storage(matrix, self.dim), self.doubled)

    def __matmul__(self, other):
        if isinstance(other, ExteriorOperator):
            self._same_space(other)
            return self._wrap(self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)

    def __add__(self, other: "ExteriorOperator") -> "ExteriorOperator":
        self._same_space(other)
        return self._wrap(self.matrix + other.matrix)

    def __sub__(self, other: "ExteriorOperator") -> "ExteriorOperator":
        self._same_space(other)
        return self._wrap(self.matrix - other.matrix)

    def __neg__(self) -> "ExteriorOperator":
        return self._wrap(-self.matrix)

    def __mul__(self, scalar) -> "ExteriorOperator":
        return self._wrap(self.matrix * scalar)

    __rmul__ = __mul__

    def transpose(self) -> "ExteriorOperator":
        return self._wrap(self.matrix.T)

    def max_abs(self) -> float:
        if self.is_sparse:
            return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def equals(self, other: "ExteriorOperator", tol: float = 0.0) -> bool:
        return (self - other).is_zero(tol)

    def apply(self, word: BasisWord) -> dict[BasisWord, object]:
        column = self.matrix[:, word.mask(self.shape)]
        column = column.toarray().ravel() if sparse.issparse(column) else np.asarray(column).ravel()
        return {
            BasisWord.from_mask(self.shape, int(row), self.doubled): column[row].item()
            for row in np.flatnonzero(column)
        }

    def to_coo_text(self) -> str:
        coo = sparse.coo_matrix(self.matrix)
        order = np.lexsort((coo.col, coo.row))
        lines = []
        for idx in order:
            if coo.data[idx] == 0:
                continue
            row = BasisWord.from_mask(self.shape, int(coo.row[idx]), self.doubled).render()
            col = BasisWord.from_mask(self.shape, int(coo.col[idx]), self.doubled).render()
            lines.append(f"{row} {col} {coo.data[idx].item()}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def identity(cls, shape: AlgebraShape, doubled: bool = False) -> "ExteriorOperator":
        return diagonal_operator(shape, np.ones(shape.dim(doubled), dtype=np.int64), doubled)


def diagonal_operator(shape: AlgebraShape, values, doubled: bool = False) -> ExteriorOperator:
    dim = shape.dim(doubled)
    return ExteriorOperator(shape, _as_storage(sparse.diags(np.asarray(values), format="csr"), dim), doubled)


def _from_triplets(shape, rows, cols, data, doubled) -> ExteriorOperator:
    dim = shape.dim(doubled)
    mat = sparse.coo_matrix((data, (rows, cols)), shape=(dim, dim), dtype=np.int64).tocsr()
    return ExteriorOperator(shape, _as_storage(mat, dim), doubled)


def _masks(shape: AlgebraShape, doubled: bool) -> np.ndarray:
    return np.arange(shape.dim(doubled), dtype=np.int64)


def wedge(shape: AlgebraShape, generator, doubled: bool = False) -> ExteriorOperator:
    """ξ ∧ ·, with the sign of moving ξ past the lower generators of the word."""
    bit = shape.bit(generator, doubled)
    masks = _masks(shape, doubled)
    cols = masks[(masks >> bit & 1) == 0]
    signs = 1 - 2 * (_popcount(cols & ((1 << bit) - 1)) & 1)
    return _from_triplets(shape, cols | (1 << bit), cols, signs, doubled)


def contraction(shape: AlgebraShape, generator, doubled: bool = False) -> ExteriorOperator:
    """Interior product with the dual vector of the generator."""
    bit = shape.bit(generator, doubled)
    masks = _masks(shape, doubled)
    cols = masks[(masks >> bit & 1) == 1]
    signs = 1 - 2 * (_popcount(cols & ((1 << bit) - 1)) & 1)
    return _from_triplets(shape, cols ^ (1 << bit), cols, signs, doubled)


def clifford_left(shape: AlgebraShape, generator) -> ExteriorOperator:
    """c(ξ) = ξ∧ − ι_ξ; squares to −1."""
    return wedge(shape, generator) - contraction(shape, generator)


def clifford_right(shape: AlgebraShape, generator) -> ExteriorOperator:
    """ĉ(ξ) = ξ∧ + ι_ξ; squares to +1."""
    return wedge(shape, generator) + contraction(shape, generator)


def anticommutator(a: ExteriorOperator, b: ExteriorOperator) -> ExteriorOperator:
    return a @ b + b @ a


def number_operator(shape: AlgebraShape, kind: str = "total") -> ExteriorOperator:
    selector = {
        "total": shape.base_bits() | shape.fiber_bits(),
        "base": shape.base_bits(),
        "fiber": shape.fiber_bits(),
    }
    if kind not in selector:
        raise ContractViolation(f"unknown number operator kind {kind!r}")
    return diagonal_operator(shape, _popcount(_masks(shape, False) & selector[kind]))


def grading_operator(shape: AlgebraShape, doubled: bool = False) -> ExteriorOperator:
    return diagonal_operator(shape, 1 - 2 * (_popcount(_masks(shape, doubled)) & 1), doubled)


def supertrace(op: ExteriorOperator):
    signs = 1 - 2 * (_popcount(_masks(op.shape, op.doubled)) & 1)
    value = np.dot(signs, op.diagonal())
    return value.item()


def parity(op: ExteriorOperator) -> int:
    """+1 if op preserves form parity, -1 if it flips it, 0 if it mixes both."""
    coo = sparse.coo_matrix(op.matrix)
    keep = coo.data != 0
    if not keep.any():
        return 1
    flips = (_popcount(coo.row[keep].astype(np.int64)) + _popcount(coo.col[keep].astype(np.int64))) & 1
    if not flips.any():
        return 1
    if flips.all():
        return -1
    return 0


def supertrace_constant(shape: AlgebraShape) -> int:
    m = shape.rank
    return (-1) ** (m * (m + 1) // 2) * 2 ** m


@functools.lru_cache(maxsize=512)
def clifford_word(shape: AlgebraShape, mask: int, right: bool = False) -> ExteriorOperator:
    """c(ξ^{i1})···c(ξ^{ip}) (or ĉ) for the generators of mask in increasing order."""
    factor = clifford_right if right else clifford_left
    op = ExteriorOperator.identity(shape)
    for bit in range(shape.rank):
        if mask >> bit & 1:
            kind, index = ("e", bit + 1) if bit < shape.n else ("f", bit - shape.n + 1)
            op = op @ factor(shape, (kind, index))
    return op


@dataclass(frozen=True)
class DoubledElement:
    """An element Σ a_{W,W'} ξ^W ∧ ξ̂^{W'} of Λ(E ⊕ Ê), stored as (mask, coefficient) pairs."""

    shape: AlgebraShape
    terms: tuple[tuple[int, int], ...]

    @classmethod
    def from_mapping(cls, shape: AlgebraShape, mapping) -> "DoubledElement":
        dim = shape.dim(doubled=True)
        merged: dict[int, int] = {}
        for mask, coef in dict(mapping).items():
            mask = mask.mask(shape) if isinstance(mask, BasisWord) else int(mask)
            if not 0 <= mask < dim:
                raise ContractViolation(f"mask {mask} outside the doubled algebra")
            merged[mask] = merged.get(mask, 0) + int(coef)
        return cls(shape, tuple(sorted((m, c) for m, c in merged.items() if c != 0)))

    @property
    def top_mask(self) -> int:
        return (1 << (2 * self.shape.rank)) - 1

    def coefficient(self, mask: int) -> int:
        return dict(self.terms).get(mask, 0)


def berezin_integral(element: DoubledElement) -> int:
    """Coefficient of e^{1..n} f^{1..k} ê^{1..n} f̂^{1..k}."""
    return element.coefficient(element.top_mask)


def quantize(element: DoubledElement) -> ExteriorOperator:
    """ξ^W ∧ ξ̂^{W'} ↦ c(ξ^W) ĉ(ξ^{W'})."""
    shape = element.shape
    low = (1 << shape.rank) - 1
    op = ExteriorOperator.identity(shape) * 0
    for mask, coef in element.terms:
        op = op + (clifford_word(shape, mask & low) @ clifford_word(shape, mask >> shape.rank, right=True)) * coef
    return op


def random_doubled_element(shape: AlgebraShape, rng: np.random.Generator, terms: int = 6, max_coef: int = 3) -> DoubledElement:
    dim = shape.dim(doubled=True)
    masks = rng.integers(0, dim, size=terms)
    coefs = rng.integers(-max_coef, max_coef + 1, size=terms)
    mapping = {int(m): int(c) for m, c in zip(masks, coefs)}
    if rng.random() < 0.5:
        mapping[dim - 1] = mapping.get(dim - 1, 0) + int(rng.integers(1, max_coef + 1))
    return DoubledElement.from_mapping(shape, mapping)


# ---- Hodge star ----

def _complement_signs(shape: AlgebraShape) -> np.ndarray:
    # inversions of the permutation (I, I^c) -> (1..m)
    masks = _masks(shape, False)
    inversions = np.zeros_like(masks)
    for bit in range(shape.rank):
        below = bit - _popcount(masks & ((1 << bit) - 1))
        inversions += np.where(masks >> bit & 1 == 1, below, 0)
    return 1 - 2 * (inversions & 1)


def hodge_star(shape: AlgebraShape) -> ExteriorOperator:
    masks = _masks(shape, False)
    full = (1 << shape.rank) - 1
    return _from_triplets(shape, full ^ masks, masks, _complement_signs(shape), False)


def hodge_star_exponents(shape: AlgebraShape) -> tuple[np.ndarray, np.ndarray]:
    """Exponents (a, b) with star_{t,T}(word) = t^a T^b * star(word)."""
    masks = _masks(shape, False)
    p = _popcount(masks & shape.base_bits())
    q = _popcount(masks & shape.fiber_bits())
    return 2 * (p + q) - shape.rank, 2 * q - shape.k


def hodge_star_scaled(shape: AlgebraShape, t: float, T: float) -> ExteriorOperator:
    """Hodge star of (1/t^2)(g_M + (1/T^2) g_Y)."""
    if t <= 0 or T <= 0:
        raise DomainError(f"scales must be positive, got t={t}, T={T}")
    a, b = hodge_star_exponents(shape)
    scale = np.power(float(t), a.astype(float)) * np.power(float(T), b.astype(float))
    return hodge_star(shape) @ diagonal_operator(shape, scale)


def symbolic_hodge_star(shape: AlgebraShape):
    t, T = sympy.symbols("t T", positive=True)
    a, b = hodge_star_exponents(shape)
    flat = sympy.Matrix(hodge_star(shape).toarray().tolist())
    scale = sympy.diag(*[t ** int(ai) * T ** int(bi) for ai, bi in zip(a, b)])
    return flat * scale, t, T


def star_log_derivative(shape: AlgebraShape, variable: str = "t"):
    """star⁻¹ ∂ star as an exact sympy matrix."""
    star, t, T = symbolic_hodge_star(shape)
    var = {"t": t, "T": T}[variable]
    return (star.inv() * star.diff(var)).applyfunc(sympy.simplify), var


def star_scaling_defect(shape: AlgebraShape, variable: str = "t"):
    """star⁻¹∂_t star − (2N−n−k)/t, or star⁻¹∂_T star − (2N_Y−k)/T; the zero matrix when the identity holds."""
    derivative, var = star_log_derivative(shape, variable)
    if variable == "t":
        counts = number_operator(shape).diagonal()
        expected = sympy.diag(*[sympy.Integer(2 * int(c) - shape.rank) / var for c in counts])
    else:
        counts = number_operator(shape, "fiber").diagonal()
        expected = sympy.diag(*[sympy.Integer(2 * int(c) - shape.k) / var for c in counts])
    return (derivative - expected).applyfunc(sympy.simplify)
