#!/usr/bin/env python3
"""Test jet arithmetic and the dense linear algebra on jets."""

import random
import sys
from fractions import Fraction
from pathlib import Path

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

from errors import ChartMismatch, NotInvertible, OrderExhausted, SingularLeadingMatrix
from jets import FLOAT, RATIONAL, Chart, Jet, ScalarMode
from linear_algebra import (characteristic_polynomial, jet_identity, jet_linear_solve, jet_matmul,
                            jet_matrix_inverse, scalar_nullspace, scalar_rank)

CHART = Chart(('x', 'y', 'z'))


def random_jet(rng: random.Random, order: int) -> Jet:
    coeffs = {}
    for _ in range(8):
        index = tuple(rng.randint(0, 2) for _ in range(3))
        if sum(index) <= order:
            coeffs[index] = Fraction(rng.randint(-5, 5), rng.randint(1, 4))
    return Jet(CHART, order, coeffs)


def test_product_and_truncation():
    """Products drop terms beyond the order."""
    a = Jet.variable(CHART, 'x', 2, 3)
    square = a * a
    assert square.coeffs == {(0, 0, 0): 4, (1, 0, 0): 4, (2, 0, 0): 1}
    cube = (Jet.variable(CHART, 'x', 0, 2)) ** 3
    assert cube.is_zero()
    assert square.order == 3

    print("✅ Jet product and truncation work")


def test_inverse_series():
    """1/(1 + dx) = 1 - dx + dx^2 - dx^3."""
    jet = Jet.variable(CHART, 'x', 1, 3)
    inverse = jet.invert()
    assert inverse.coeffs == {(0, 0, 0): 1, (1, 0, 0): -1, (2, 0, 0): 1, (3, 0, 0): -1}
    assert (jet * inverse).agrees_with(Jet.constant(CHART, 1, 3))

    try:
        Jet.variable(CHART, 'x', 0, 3).invert()
        assert False, "inverting a jet with zero constant term must fail"
    except NotInvertible:
        pass

    print("✅ Jet inverse works")


def test_partials_commute():
    """Mixed partials agree for random jets."""
    rng = random.Random(7)
    for _ in range(200):
        jet = random_jet(rng, 4)
        u, v = rng.sample(range(3), 2)
        assert jet.partial(u).partial(v).agrees_with(jet.partial(v).partial(u))
        assert jet.partial(u).order == 3

    print("✅ Partial derivatives commute")


def test_ring_axioms():
    """Associativity, commutativity and distributivity on random jets."""
    rng = random.Random(17)
    for _ in range(200):
        a, b, c = (random_jet(rng, 4) for _ in range(3))
        assert (a + b).agrees_with(b + a)
        assert (a * b).agrees_with(b * a)
        assert ((a + b) + c).agrees_with(a + (b + c))
        assert ((a * b) * c).agrees_with(a * (b * c))
        assert (a * (b + c)).agrees_with(a * b + a * c)
        assert (a - a).is_zero()

    print("✅ Jet ring axioms hold")


def test_leibniz_rule():
    rng = random.Random(19)
    for _ in range(200):
        a, b = random_jet(rng, 4), random_jet(rng, 4)
        u = rng.randrange(3)
        assert (a * b).partial(u).agrees_with(a.partial(u) * b + a * b.partial(u))

    print("✅ partial obeys the Leibniz rule")


def test_double_inverse():
    rng = random.Random(23)
    for _ in range(200):
        jet = random_jet(rng, 4)
        jet = jet - jet.constant_term() + Fraction(rng.choice([-3, -1, 1, 2]), rng.randint(1, 3))
        assert jet.invert().invert().agrees_with(jet)
        assert (jet / jet).agrees_with(Jet.constant(CHART, 1, 4))

    print("✅ invert(invert(a)) = a")


def test_square_of_exponential_start():
    """(1 + u + u^2/2)^2 = 1 + 2u + 2u^2 at order 2."""
    chart = Chart(('u',))
    jet = Jet(chart, 2, {(0,): Fraction(1), (1,): Fraction(1), (2,): Fraction(1, 2)})
    square = jet * jet
    assert square.agrees_with(Jet(chart, 2, {(0,): Fraction(1), (1,): Fraction(2), (2,): Fraction(2)}))
    assert square.order == 2

    print("✅ (1 + u + u^2/2)^2 truncates correctly")


def test_order_exhaustion():
    jet = Jet.constant(CHART, 5, 0)
    try:
        jet.partial(0)
        assert False, "differentiating an order-0 jet must fail"
    except OrderExhausted:
        pass

    print("✅ Order exhaustion is reported")


def test_capped_variable():
    """Terms above a variable's cap are dropped and its derivative budget shrinks."""
    chart = Chart(('s', 'u'), limits=(None, 1))
    u = Jet.variable(chart, 'u', 0, 4)
    square = u * u
    assert square.coeffs == {}
    assert square.valid == (None, 1)

    once = square.partial(1)
    assert once.valid == (None, 0)
    try:
        once.partial(1)
        assert False, "exhausted cap must raise"
    except OrderExhausted as e:
        assert "raise the fiber cap" in str(e)

    # the uncapped direction keeps its full budget
    assert square.partial(0).order == 3

    print("✅ Per-variable caps are tracked")


def test_mode_mismatch():
    a = Jet.constant(CHART, 1, 2, RATIONAL)
    b = Jet.constant(CHART, 1.0, 2, FLOAT)
    try:
        a + b
        assert False, "mixing scalar modes must fail"
    except ChartMismatch:
        pass

    print("✅ Mode mismatch is rejected")


def test_float_tolerance():
    mode = ScalarMode('float', 1e-9)
    assert mode.is_zero(1e-12)
    assert not mode.is_zero(1e-6)
    assert mode.equal(1.0, 1.0 + 1e-12)

    print("✅ Float comparisons use the tolerance")


def test_matrix_inverse():
    """A A^-1 = I for a jet matrix with invertible constant part."""
    rng = random.Random(11)
    order = 3
    a = []
    for i in range(2):
        row = []
        for j in range(2):
            entry = random_jet(rng, order)
            row.append(entry - entry.constant_term() + (3 if i == j else 0))
        a.append(row)
    product = jet_matmul(a, jet_matrix_inverse(a))
    identity = jet_identity(CHART, 2, order, RATIONAL)
    for i in range(2):
        for j in range(2):
            assert product[i][j].agrees_with(identity[i][j])

    print("✅ Jet matrix inverse works")


def test_linear_solve():
    x = Jet.variable(CHART, 'x', 0, 2)
    one = Jet.constant(CHART, 1, 2)
    a = [[one, x], [Jet.zero(CHART, 2), one + x]]
    b = [one, x]
    solution = jet_linear_solve(a, b)
    for row, rhs in zip(a, b):
        total = row[0] * solution[0] + row[1] * solution[1]
        assert total.agrees_with(rhs)

    # constant-term matrix [[0, 1], [1, 0]] needs a row swap
    y = Jet.variable(CHART, 'y', 0, 2)
    swapped = [[x, one + y], [one, y * y]]
    rhs = [one, Jet.zero(CHART, 2)]
    solution = jet_linear_solve(swapped, rhs)
    assert [entry.constant_term() for entry in solution] == [0, 1]
    for row, value in zip(swapped, rhs):
        assert (row[0] * solution[0] + row[1] * solution[1]).agrees_with(value)

    singular = [[x, one], [x, one]]
    try:
        jet_linear_solve(singular, b)
        assert False, "singular leading matrix must fail"
    except SingularLeadingMatrix:
        pass

    print("✅ Jet linear solve works")


def test_scalar_linear_algebra():
    matrix = [[Fraction(1), Fraction(2)], [Fraction(2), Fraction(4)]]
    assert scalar_rank(matrix, RATIONAL) == 1
    kernel = scalar_nullspace(matrix, RATIONAL)
    assert len(kernel) == 1
    assert kernel[0][0] + 2 * kernel[0][1] == 0

    # det(tI - A) for A = [[0, 1], [-1, 0]] is t^2 + 1
    rotation = [[Fraction(0), Fraction(1)], [Fraction(-1), Fraction(0)]]
    polynomial = characteristic_polynomial(rotation, RATIONAL)
    assert polynomial == [1, 0, 1]

    print("✅ Scalar linear algebra works")


if __name__ == "__main__":
    print("Testing jets...")
    print("=" * 60)

    test_product_and_truncation()
    test_inverse_series()
    test_partials_commute()
    test_ring_axioms()
    test_leibniz_rule()
    test_double_inverse()
    test_square_of_exponential_start()
    test_order_exhaustion()
    test_capped_variable()
    test_mode_mismatch()
    test_float_tolerance()
    test_matrix_inverse()
    test_linear_solve()
    test_scalar_linear_algebra()

    print("=" * 60)
    print("✅ All jet tests passed!")
