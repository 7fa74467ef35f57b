#!/usr/bin/env python3
"""Test problem files, pair construction and the regularity diagnostics."""

import random
import sys
from fractions import Fraction
from pathlib import Path

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

from errors import DegeneratePair, ExpressionSyntaxError, ProblemFileError, RegularityFailure
from jets import RATIONAL
from linear_algebra import scalar_rank
from ode_pair import build_pair, equation_type_report, regularity_report, require_regular
from problem_files import equation_chart_names, load_problem, parse_problem_file

PROBLEMS_DIR = Path(__file__).parent.parent / 'problems'


def load(name: str):
    return build_pair(load_problem(PROBLEMS_DIR / f"{name}.pair"))


def test_problem_file_parsing():
    spec = load_problem(PROBLEMS_DIR / 'perturbed_k3.pair')
    assert spec.kind == 'ode'
    assert spec.k == 3 and spec.m == 1
    assert spec.variables == equation_chart_names(3, 1)
    assert spec.variables == ('t', 'x[0,1]', 'x[1,1]', 'x[2,1]', 'x[3,1]')

    geodesic = load_problem(PROBLEMS_DIR / 'geodesic.pair')
    assert geodesic.k == 1 and geodesic.m == 2
    # Gamma is symmetrized in its lower indices
    assert geodesic.gamma[0][0][1] == geodesic.gamma[0][1][0]

    print("✅ Problem files parse")


def test_problem_file_errors():
    bad = [
        'pair "a" { kind = "ode" k = 3 m = 1 F[2] = "0" }',
        'pair "a" { kind = "ode" k = 3 m = 1 F[1] = "x[4,1]" }',
        'pair "a" { kind = "ode" k = 3 m = 1 F[1] = "0.5" }',
        'pair "a" { kind = "ode" m = 1 F[1] = "0" }',
        'pair "a" { kind = "ode" k = 3 m = 1 F[1] = "0" F[1] = "1" }',
        'pair "a" { kind = "generic" m = 2 dim = 4 vars = ["t", "a", "b", "c"] '
        'X = ["1", "0", "0", "0"] V[1] = ["0", "1", "0", "0"] }',
    ]
    for text in bad:
        try:
            parse_problem_file(text)
            assert False, f"must reject: {text}"
        except ProblemFileError:
            pass

    try:
        parse_problem_file('pair "a" { kind = "ode" k = 3 m = 1 F[1] = "x[0,1] +" }')
        assert False, "malformed expression must fail"
    except ExpressionSyntaxError:
        pass

    print("✅ Problem file errors are reported")


def test_equation_pair_fields():
    """X = d_t + x1 d_x0 + x2 d_x1 + x3 d_x2 + F d_x3, V = d_x3."""
    pair = load('xiv_eq_x')
    point = pair.resolve_point({'x[0,1]': 2, 'x[1,1]': 3})
    x, v = pair.realize(point, 2)
    assert x.value_at_point() == [1, 3, 0, 0, 2]
    assert v[0].value_at_point() == [0, 0, 0, 0, 1]

    try:
        pair.resolve_point({'y': 1})
        assert False, "unknown point variable must fail"
    except ProblemFileError:
        pass

    print("✅ Equation pairs are built")


def test_equation_pairs_are_regular():
    for name in ('trivial_k3', 'xiv_eq_x', 'perturbed_k3', 'trivial_k2m2', 'geodesic'):
        pair = load(name)
        report = regularity_report(pair, pair.resolve_point(), pair.k + 1)
        assert report.regular, name
        assert report.ranks == report.expected_ranks
        assert report.ranks[-1] == pair.n

    print("✅ Equation pairs are regular")


def test_degenerate_generic():
    pair = load('degenerate_generic')
    report = regularity_report(pair, pair.resolve_point(), 3)
    assert not report.regular
    assert report.g1 == [True, False]
    assert report.failure.startswith("G1 fails at level 1")

    try:
        require_regular(pair, pair.resolve_point(), 3)
        assert False, "irregular pair must fail"
    except RegularityFailure as e:
        assert e.exit_code == 3
        assert e.report is report or e.report.failure == report.failure

    print("✅ Degenerate pair is detected")


def test_vanishing_line_field():
    spec = parse_problem_file(
        'pair "a" { kind = "generic" m = 1 dim = 4 vars = ["t", "a", "b", "c"] '
        'X = ["t", "0", "0", "0"] V[1] = ["0", "1", "0", "0"] }')
    pair = build_pair(spec)
    try:
        pair.realize(pair.resolve_point(), 2)
        assert False, "X = 0 at the point must fail"
    except DegeneratePair:
        pass

    print("✅ Vanishing line field is rejected")


def test_equation_type():
    trivial = load('generic_trivial')
    report = equation_type_report(trivial, trivial.resolve_point(), 4)
    assert report.verdict.startswith("consistent with equation type")
    assert all(level.closed for level in report.integrability)
    assert all(level.ok for level in report.characteristics)

    chain = load('trivial_k3')
    report = equation_type_report(chain, chain.resolve_point(), 4)
    assert [level.rank for level in report.characteristics] == [1, 2]
    assert all(level.ok for level in report.characteristics)
    assert len(report.integrability) == 4

    twisted = load('twisted_generic')
    report = equation_type_report(twisted, twisted.resolve_point(), 4)
    assert report.regular
    assert "G3 fails" in report.verdict
    assert not report.integrability[0].closed

    print("✅ Equation-type diagnostics work")


BASE_PAIRS = [
    # x'' = 0, y'' = 0
    (['t', 'c', 'd', 'a', 'b'], ['1', 'a', 'b', '0', '0'],
     [['0', '0', '0', '1', '0'], ['0', '0', '0', '0', '1']]),
    # regular, V not involutive
    (['t', 'a', 'b', 'c', 'd'], ['1', '0', '0', 'a', 'b'],
     [['0', '1', '0', '0', '0'], ['0', '0', '1', 'a', '0']]),
    # [X, V] = 0
    (['t', 'a', 'b', 'c', 'd'], ['1', '0', '0', '0', '0'],
     [['0', '1', '0', '0', '0'], ['0', '0', '1', '0', '0']]),
]


def generic_text(names, x, v) -> str:
    quoted = lambda items: '[' + ', '.join(f'"{item}"' for item in items) + ']'
    frame = ' '.join(f'V[{j + 1}] = {quoted(column)}' for j, column in enumerate(v))
    return (f'pair "g" {{ kind = "generic" m = {len(v)} dim = {len(names)} vars = {quoted(names)} '
            f'X = {quoted(x)} {frame} }}')


def random_third_order(rng: random.Random):
    """x''' = F as a generic pair on (t, a, b, c) with F polynomial."""
    names = ['t', 'a', 'b', 'c']
    terms = [f"{rng.randint(-2, 2)}*{a}*{b}" for a, b in (rng.sample(names, 2) for _ in range(2))]
    return names, ['1', 'b', 'c', ' + '.join(terms)], [['0', '0', '0', '1']]


def flags(pair, point):
    report = regularity_report(pair, point, pair.k + 3)
    result = (report.ranks, report.g1, report.g2)
    if not report.regular:
        return result, None
    kind = equation_type_report(pair, point, pair.k + 3)
    return result, ([level.ok for level in kind.characteristics],
                    [level.closed for level in kind.integrability])


def test_flags_ignore_frame_choice():
    """Rescaling X and recombining V leave the regularity and type flags alone."""
    rng = random.Random(37)
    for case in range(12):
        names, x, v = BASE_PAIRS[case % 3] if case % 4 else random_third_order(rng)
        m = len(v)
        scaling = f"{rng.randint(1, 3)} + {rng.randint(-1, 1)}*t + {rng.randint(-1, 1)}*{names[1]}^2"
        matrix = [[Fraction(0)]]
        while scalar_rank(matrix, RATIONAL) < m:
            matrix = [[Fraction(rng.randint(-2, 2)) for _ in range(m)] for _ in range(m)]
        # entries of the recombination may vary, the matrix stays invertible at the point
        entries = [[f"({matrix[i][j]} + {rng.randint(-1, 1)}*t*{names[2]})" for j in range(m)] for i in range(m)]
        new_x = [f"({scaling})*({c})" for c in x]
        new_v = [[' + '.join(f"{entries[i][j]}*({v[i][r]})" for i in range(m)) for r in range(len(names))]
                 for j in range(m)]

        original = build_pair(parse_problem_file(generic_text(names, x, v)))
        changed = build_pair(parse_problem_file(generic_text(names, new_x, new_v)))
        point = original.resolve_point()
        assert flags(original, point) == flags(changed, changed.resolve_point()), case

    print("✅ Regularity and type flags ignore the choice of X and V frame")


if __name__ == "__main__":
    print("Testing pairs...")
    print("=" * 60)

    test_problem_file_parsing()
    test_problem_file_errors()
    test_equation_pair_fields()
    test_equation_pairs_are_regular()
    test_degenerate_generic()
    test_vanishing_line_field()
    test_equation_type()
    test_flags_ignore_frame_choice()

    print("=" * 60)
    print("✅ All pair tests passed!")
