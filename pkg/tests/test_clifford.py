import numpy as np
import pytest

from app.core.errors import DomainError, InvalidGeneratorError
from app.services import clifford
from app.services.clifford import AlgebraShape, BasisWord, ExteriorOperator


def generators(shape):
    return [("e", i) for i in range(1, shape.n + 1)] + [("f", j) for j in range(1, shape.k + 1)]


@pytest.mark.parametrize("n,k", [(1, 2), (3, 2)])
class TestCliffordRelations:

    def test_left_squares_to_minus_one(self, n, k):
        shape = AlgebraShape(n, k)
        identity = ExteriorOperator.identity(shape)
        for gi in generators(shape):
            for gj in generators(shape):
                anti = clifford.anticommutator(clifford.clifford_left(shape, gi), clifford.clifford_left(shape, gj))
                expected = identity * (-2 if gi == gj else 0)
                assert anti.equals(expected)

    def test_right_squares_to_plus_one(self, n, k):
        shape = AlgebraShape(n, k)
        identity = ExteriorOperator.identity(shape)
        for gi in generators(shape):
            for gj in generators(shape):
                anti = clifford.anticommutator(clifford.clifford_right(shape, gi), clifford.clifford_right(shape, gj))
                expected = identity * (2 if gi == gj else 0)
                assert anti.equals(expected)

    def test_left_and_right_anticommute(self, n, k):
        shape = AlgebraShape(n, k)
        for gi in generators(shape):
            for gj in generators(shape):
                anti = clifford.anticommutator(clifford.clifford_left(shape, gi), clifford.clifford_right(shape, gj))
                assert anti.is_zero()

    def test_only_the_top_pair_has_a_supertrace(self, n, k):
        shape = AlgebraShape(n, k)
        full = (1 << shape.rank) - 1
        constant = clifford.supertrace_constant(shape)
        for w in range(full + 1):
            for w_hat in range(full + 1):
                op = clifford.clifford_word(shape, w) @ clifford.clifford_word(shape, w_hat, right=True)
                assert clifford.supertrace(op) == (constant if w == w_hat == full else 0)

    def test_words_have_their_degree_parity(self, n, k):
        shape = AlgebraShape(n, k)
        for w in range(1 << shape.rank):
            assert clifford.parity(clifford.clifford_word(shape, w)) == (-1) ** bin(w).count("1")


def test_supertrace_constants():
    assert clifford.supertrace_constant(AlgebraShape(1, 0)) == -2
    assert clifford.supertrace_constant(AlgebraShape(1, 2)) == 8
    assert clifford.supertrace_constant(AlgebraShape(3, 2)) == -32


def test_berezin_identity_on_random_elements():
    rng = np.random.default_rng(7)
    for shape in (AlgebraShape(1, 2), AlgebraShape(2, 2)):
        constant = clifford.supertrace_constant(shape)
        for _ in range(25):
            element = clifford.random_doubled_element(shape, rng)
            assert clifford.supertrace(clifford.quantize(element)) == constant * clifford.berezin_integral(element)


def test_wedge_sign_and_contraction():
    shape = AlgebraShape(1, 2)
    e1 = BasisWord(e_set=(1,))
    assert clifford.wedge(shape, "f1").apply(e1) == {BasisWord((1,), (1,)): -1}
    assert clifford.contraction(shape, "e1").apply(e1) == {BasisWord(): 1}
    assert clifford.wedge(shape, "e1").apply(e1) == {}


def test_number_and_grading_operators():
    shape = AlgebraShape(1, 2)
    top = BasisWord((1,), (1, 2))
    assert clifford.number_operator(shape).apply(top) == {top: 3}
    assert clifford.number_operator(shape, "fiber").apply(top) == {top: 2}
    assert clifford.supertrace(clifford.grading_operator(shape)) == 2 ** shape.rank
    assert clifford.supertrace(ExteriorOperator.identity(shape)) == 0


@pytest.mark.parametrize("n,k", [(1, 0), (2, 1), (3, 2)])
def test_number_operators_split_by_direction(n, k):
    shape = AlgebraShape(n, k)
    base = clifford.number_operator(shape, "base")
    assert clifford.number_operator(shape).equals(base + clifford.number_operator(shape, "fiber"))
    # 2 N_M = n + Σ c(e_i) ĉ(e_i)
    total = ExteriorOperator.identity(shape) * n
    for i in range(1, n + 1):
        total = total + clifford.clifford_left(shape, ("e", i)) @ clifford.clifford_right(shape, ("e", i))
    assert (base * 2).equals(total)


def test_basis_word_text_round_trip():
    shape = AlgebraShape(2, 2)
    word = BasisWord.parse("e2^f1^f2")
    assert word.render() == "e2^f1^f2"
    assert BasisWord.from_mask(shape, word.mask(shape)) == word
    assert BasisWord.parse("1") == BasisWord()


def test_bad_generators_are_rejected():
    shape = AlgebraShape(1, 2)
    with pytest.raises(InvalidGeneratorError):
        clifford.wedge(shape, "e2")
    with pytest.raises(InvalidGeneratorError):
        clifford.wedge(shape, "he1")
    with pytest.raises(InvalidGeneratorError):
        clifford.parse_generator("g1")
    with pytest.raises(DomainError):
        AlgebraShape(-1, 2)


def test_operator_debug_text():
    c = clifford.clifford_left(AlgebraShape(1, 0), "e1")
    assert c.to_coo_text() == "1 e1 -1\ne1 1 1\n"


class TestHodgeStar:

    def test_scaling_identities_hold_exactly(self):
        shape = AlgebraShape(1, 2)
        for variable in ("t", "T"):
            defect = clifford.star_scaling_defect(shape, variable)
            assert all(entry == 0 for entry in defect)

    def test_exponents(self):
        shape = AlgebraShape(1, 2)
        a, b = clifford.hodge_star_exponents(shape)
        e1 = BasisWord((1,)).mask(shape)
        f1f2 = BasisWord((), (1, 2)).mask(shape)
        assert (a[e1], b[e1]) == (-1, -2)
        assert (a[f1f2], b[f1f2]) == (1, 2)

    def test_star_squares_to_plus_or_minus_one(self):
        shape = AlgebraShape(1, 2)
        star = clifford.hodge_star(shape).toarray()
        square = star @ star
        assert np.array_equal(np.abs(square), np.eye(shape.dim()))

    def test_scaled_star_values(self):
        shape = AlgebraShape(1, 2)
        star = clifford.hodge_star_scaled(shape, 2.0, 3.0).toarray()
        e1 = BasisWord((1,)).mask(shape)
        f1f2 = BasisWord((), (1, 2)).mask(shape)
        top = BasisWord((1,), (1, 2)).mask(shape)
        assert np.flatnonzero(star[:, e1]).tolist() == [f1f2]
        assert abs(star[f1f2, e1]) == pytest.approx(1 / 18)
        assert abs(star[top, 0]) == pytest.approx(1 / 72)
        assert abs(star[0, top]) == pytest.approx(72.0)

    def test_scaled_star_rejects_non_positive_scale(self):
        with pytest.raises(DomainError):
            clifford.hodge_star_scaled(AlgebraShape(1, 2), 0.0, 1.0)
