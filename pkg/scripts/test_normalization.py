#!/usr/bin/env python3
"""Test the normal frame, the invariants K_i and the projective rescaling."""

import random
import sys
from fractions import Fraction
from pathlib import Path

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

from errors import TransversalError
from expressions import parse_expression
from linear_algebra import constant_matrix
from normalization import (c_k, compute_H, compute_K, make_transversal, normalized_invariants,
                           required_input_order, schwarzian_reparametrization_check, trace_law_check,
                           triviality_test)
from ode_pair import build_pair, curvature_oracle
from problem_files import build_pair_spec, load_problem, parse_problem_file

PROBLEMS_DIR = Path(__file__).parent.parent / 'problems'


def load(name: str):
    return build_pair(load_problem(PROBLEMS_DIR / f"{name}.pair"))


def ode(rhs: str, k: int = 3):
    return build_pair(parse_problem_file(f'pair "p" {{ kind = "ode" k = {k} m = 1 F[1] = "{rhs}" }}'))


def ode_system(rhs, k: int):
    entries = ' '.join(f'F[{j + 1}] = "{expr}"' for j, expr in enumerate(rhs))
    return build_pair(parse_problem_file(f'pair "p" {{ kind = "ode" k = {k} m = {len(rhs)} {entries} }}'))


def realize(pair, assignment, report_order):
    point = pair.resolve_point(assignment)
    x, w = pair.realize(point, required_input_order('K', pair.k, report_order))
    return x, w


def test_c_k():
    assert c_k(1) == Fraction(-1, 4)
    assert c_k(2) == -1
    assert c_k(3) == Fraction(-5, 2)

    print("✅ c_k constants are correct")


def test_linear_equation_invariants():
    """x'''' = x: ad^4 V = V, so K_0 = -1 and H = 0."""
    pair = load('xiv_eq_x')
    x, w = realize(pair, {}, 1)
    trans = make_transversal(pair, x, None)
    result = compute_K(x, w, 3, trans)
    assert constant_matrix(result.K[0]) == [[-1]]
    assert result.K[0][0][0].is_constant()
    assert result.K[1][0][0].is_zero() and result.K[2][0][0].is_zero()
    assert result.H[0][0].is_zero()

    print("✅ x'''' = x gives K_0 = -1")


def test_nonzero_H():
    """x'''' = 2 x''': ad^4 V = -2 ad^3 V, so H = -2 before normalization."""
    pair = ode("2*x[3,1]")
    x, w = realize(pair, {}, 1)
    h = compute_H(x, w, 3)
    assert h[0][0].constant_term() == -2

    result = compute_K(x, w, 3, make_transversal(pair, x, None))
    assert all(entry.is_zero() for row in result.adk_residual for entry in row)

    print("✅ Normal frame removes the ad^k block")


def test_normal_frame_on_nonlinear_pair():
    pair = load('perturbed_k3')
    x, w = realize(pair, {'x[1,1]': 1}, 0)
    result = compute_K(x, w, 3, make_transversal(pair, x, None))
    assert all(entry.is_zero() for row in result.adk_residual for entry in row)
    assert constant_matrix(result.G) == [[1]]

    print("✅ Normal frame works on a nonlinear pair")


def test_transversal_choice():
    """K at the point does not depend on the transversal through it."""
    pair = load('perturbed_k3')
    x, w = realize(pair, {'x[1,1]': 1, 'x[0,1]': Fraction(1, 2)}, 0)
    along_t = compute_K(x, w, 3, make_transversal(pair, x, 't'))
    along_x = compute_K(x, w, 3, make_transversal(pair, x, 'x[0,1]'))
    for a, b in zip(along_t.K, along_x.K):
        assert constant_matrix(a) == constant_matrix(b)

    try:
        make_transversal(pair, x, 'x[2,1]')
        assert False, "X(x[2,1]) = x[3,1] vanishes here"
    except TransversalError:
        pass

    print("✅ Invariants at the point ignore the transversal")


def test_curvature_oracle():
    """For geodesic flows K_0 at the point is the curvature term."""
    spec = build_pair_spec({'name': 'g', 'kind': 'geodesic', 'm': 2, 'Gamma': {'1,2,2': 'x[0,1]'}})
    pair = build_pair(spec)
    point = pair.resolve_point({'x[1,2]': 1})
    x, w = pair.realize(point, required_input_order('K', 1, 0))
    result = compute_K(x, w, 1, make_transversal(pair, x, None))
    assert constant_matrix(result.K[0]) == [[1, 0], [0, 0]]
    assert curvature_oracle(spec, point) == [[1, 0], [0, 0]]

    rng = random.Random(5)
    names = ['x[0,1]', 'x[0,2]']
    for _ in range(5):
        gamma = {}
        for i in range(1, 3):
            for p in range(1, 3):
                for q in range(p, 3):
                    a, b, c = (rng.randint(-2, 2) for _ in range(3))
                    gamma[f"{i},{p},{q}"] = f"{a} + {b}*{names[0]} + {c}*{names[1]}"
        spec = build_pair_spec({'name': 'g', 'kind': 'geodesic', 'm': 2, 'Gamma': gamma})
        pair = build_pair(spec)
        for _ in range(3):
            assignment = {name: Fraction(rng.randint(-3, 3), rng.randint(1, 3))
                          for name in ('x[0,1]', 'x[0,2]', 'x[1,1]', 'x[1,2]')}
            point = pair.resolve_point(assignment)
            x, w = pair.realize(point, required_input_order('K', 1, 0))
            result = compute_K(x, w, 1, make_transversal(pair, x, None))
            assert constant_matrix(result.K[0]) == curvature_oracle(spec, point)

    print("✅ K_0 matches the curvature oracle")


def test_trace_law():
    """x'''' = x with f = 1 + t^2 at t = 0: both sides equal 10."""
    pair = load('xiv_eq_x')
    check = trace_law_check(pair, pair.resolve_point(), 0, parse_expression("1 + t^2"))
    assert check.right.constant_term() == 10
    assert check.left.constant_term() == 10
    assert check.holds

    print("✅ Trace law holds for x'''' = x")


def random_system(rng: random.Random, k: int, m: int):
    """x^(k+1) = F, F linear in x with t-dependent coefficients; one quadratic term when m = 1."""
    names = [f"x[{i},{j}]" for i in range(k + 1) for j in range(1, m + 1)]
    rhs = []
    for _ in range(m):
        terms = [f"({rng.randint(-2, 2)} + {rng.randint(-1, 1)}*t)*{name}" for name in rng.sample(names, 2)]
        if m == 1:
            terms.append(f"{Fraction(rng.randint(-2, 2), 2)}*{rng.choice(names)}^2")
        rhs.append(' + '.join(terms))
    return ode_system(rhs, k)


def test_trace_law_randomized():
    """tr K_(k-1) of fX to order 2 on random equations with k in {2, 3} and m in {1, 2}."""
    rng = random.Random(13)
    cases = 0
    for k in (2, 3):
        for m in (1, 2):
            for _ in range(5):
                pair = random_system(rng, k, m)
                a, b, c = rng.randint(1, 3), rng.randint(-2, 2), rng.randint(-1, 1)
                scaling = parse_expression(f"{a} + {b}*t + {c}*x[0,1] + t^2")
                point = pair.resolve_point({'x[1,1]': 1, 't': Fraction(rng.randint(-2, 2), 3)})
                check = trace_law_check(pair, point, 2, scaling)
                assert check.order == 2
                assert check.holds, (k, m, check.left, check.right)
                cases += 1
    assert cases == 20

    print("✅ Trace law holds on 20 random equations")


def test_normalized_invariants():
    pair = load('xiv_eq_x')
    report = normalized_invariants(pair, pair.resolve_point(), 0)
    assert report.K_normalized[0][0][0].constant_term() == -1
    assert not report.flat
    assert report.witness.startswith("K_0[1,1] = -1")
    assert report.gauge['f_at_point'] == 1
    assert report.gauge['Xf_at_point'] == 0

    # t-dependent middle coefficient: the rescaling kills tr K_2
    pair = ode("t*x[2,1]")
    report = normalized_invariants(pair, pair.resolve_point(), 1)
    assert not report.trace.is_zero()
    assert report.trace_normalized.is_zero()

    print("✅ Normalized invariants work")


def test_normalized_transversal_invariance():
    """Characteristic polynomials of the normalized K_i agree for t and x[0,1] as transversal."""
    rng = random.Random(21)
    monomials = ['t', 'x[0,1]', 'x[1,1]', 'x[2,1]', 'x[0,1]^2', 't*x[1,1]', 'x[1,1]*x[2,1]']
    for _ in range(5):
        terms = [f"{rng.randint(-2, 2)}*{name}" for name in rng.sample(monomials, 3)]
        pair = ode(' + '.join(terms), k=2)
        point = pair.resolve_point({'x[1,1]': 1, 'x[0,1]': Fraction(rng.randint(-2, 2), 3)})
        along_t = normalized_invariants(pair, point, 0, 't')
        along_x = normalized_invariants(pair, point, 0, 'x[0,1]')
        assert along_t.characteristic_polynomials == along_x.characteristic_polynomials

    print("✅ Normalized invariants ignore the transversal")


def test_triviality():
    pair = load('trivial_k3')
    points = [pair.resolve_point(), pair.resolve_point({'t': 1, 'x[1,1]': 2})]
    verdict = triviality_test(pair, points, 3)
    assert verdict.flat
    assert verdict.message.startswith("flat to tested order 3")

    pair = load('trivial_k2m2')
    verdict = triviality_test(pair, [pair.resolve_point({'t': 1, 'x[1,2]': -1})], 3)
    assert verdict.flat

    pair = load('xiv_eq_x')
    verdict = triviality_test(pair, [pair.resolve_point()], 0)
    assert not verdict.flat
    assert verdict.message.startswith("not flat")

    print("✅ Triviality test works")


def test_schwarzian_reparametrization():
    pair = load('xiv_eq_x')
    point = pair.resolve_point({'x[0,1]': 1})
    scaling = parse_expression("1 + t^2")
    check = schwarzian_reparametrization_check(pair, point, scaling, samples=5)
    assert len(check.samples) == 5
    assert check.holds, check.max_relative_error
    # samples sit on the X-flow: t advances with the X-time
    assert all(s.point['t'] > 0 for s in check.samples)

    pair = load('perturbed_k3')
    point = pair.resolve_point({'x[1,1]': 1})
    scaling = parse_expression("2 + t*x[0,1]")
    check = schwarzian_reparametrization_check(pair, point, scaling, samples=4, span=0.3)
    assert check.holds, check.max_relative_error

    # the time change of another speed does not match S^X(f)
    check = schwarzian_reparametrization_check(pair, point, scaling, samples=4, span=0.3,
                                               time_change=parse_expression("2 + t*x[0,1] + t^2"))
    assert not check.holds
    assert check.max_relative_error > 1e-3

    print("✅ Schwarzian matches the time change")


if __name__ == "__main__":
    print("Testing normalization...")
    print("=" * 60)

    test_c_k()
    test_linear_equation_invariants()
    test_nonzero_H()
    test_normal_frame_on_nonlinear_pair()
    test_transversal_choice()
    test_curvature_oracle()
    test_trace_law()
    test_trace_law_randomized()
    test_normalized_invariants()
    test_normalized_transversal_invariance()
    test_triviality()
    test_schwarzian_reparametrization()

    print("=" * 60)
    print("✅ All normalization tests passed!")
