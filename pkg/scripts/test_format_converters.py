#!/usr/bin/env python3
"""Test format converters module."""

import random
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

from format_converters import (build_report, convert_jet, convert_scalar, convert_scalar_matrix, load_report,
                               parse_jet, parse_scalar, write_report)
from jets import Chart, Jet
from validate_schema import validate_data


def test_scalars():
    assert convert_scalar(Fraction(3, 4)) == "3/4"
    assert convert_scalar(Fraction(-2)) == "-2"
    assert convert_scalar(0.5) == 0.5
    assert parse_scalar("-7/3") == Fraction(-7, 3)
    assert convert_scalar_matrix([[Fraction(1), Fraction(0)], [Fraction(1, 2), Fraction(-1)]]) == \
        [["1", "0"], ["1/2", "-1"]]

    print("✅ Scalar conversion works")


def test_jet_format():
    """1 - t + x^2/2, zero terms dropped, graded-lex order."""
    chart = Chart(('t', 'x'))
    jet = Jet(chart, 2, {(0, 0): Fraction(1), (1, 0): Fraction(-1), (0, 2): Fraction(1, 2),
                         (1, 1): Fraction(0)})
    assert convert_jet(jet) == {
        'order': 2,
        'variables': ['t', 'x'],
        'terms': [{'multi_index': [0, 0], 'value': '1'},
                  {'multi_index': [1, 0], 'value': '-1'},
                  {'multi_index': [0, 2], 'value': '1/2'}],
    }

    print("✅ Jet format works")


def test_jet_round_trip():
    """Jets written to a report file come back with the same chart, order and coefficients."""
    rng = random.Random(11)
    chart = Chart(('t', 'x[0,1]', 'x[1,1]'))
    config = {'command': 'lemma2-check', 'input': 'a.pair', 'points': [], 'order': 3,
              'mode': 'rational', 'transversal': None, 'fiber_cap': None, 'scaling': None, 'workers': 1}
    for _ in range(10):
        coeffs = {}
        for _ in range(6):
            index = tuple(rng.randint(0, 2) for _ in range(3))
            if sum(index) <= 3:
                coeffs[index] = Fraction(rng.randint(-9, 9), rng.randint(1, 5))
        jet = Jet(chart, 3, coeffs)
        payload = {'trace_law': {'left': convert_jet(jet), 'right': convert_jet(jet), 'holds': True}}
        report = build_report(config, None, payload, [], "ok", 0)
        is_valid, errors = validate_data(report)
        assert is_valid, errors
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'report.json'
            write_report(report, path)
            back = load_report(path, jets=True)['payload']['trace_law']['left']
        assert back.chart.names == chart.names
        assert back.order == 3
        assert back.agrees_with(jet)
        assert convert_jet(back) == convert_jet(jet)

    floats = parse_jet({'order': 1, 'variables': ['t'], 'terms': [{'multi_index': [1], 'value': 0.25}]})
    assert floats.mode.kind == 'float'
    try:
        parse_jet({'order': 1, 'variables': ['t'], 'terms': [{'multi_index': [1, 0], 'value': '1'}]})
        assert False, "multi-index longer than the variable list"
    except ValueError:
        pass

    print("✅ Jets survive a write and load")


def test_report_document():
    config = {'command': 'invariants', 'input': 'xiv_eq_x.pair', 'points': [], 'order': 0,
              'mode': 'rational', 'transversal': None, 'fiber_cap': None, 'scaling': None, 'workers': 1}
    report = build_report(config, None, None, [], "parse error", 2, error="ProblemFileError: bad")
    assert report['timing'] is None
    is_valid, errors = validate_data(report)
    assert is_valid, errors

    report['exit_code'] = 'two'
    is_valid, errors = validate_data(report)
    assert not is_valid
    assert errors

    print("✅ Report document validates")


def test_write_and_load():
    config = {'command': 'check-regular', 'input': 'a.pair', 'points': [{'t': '0'}], 'order': 4,
              'mode': 'rational', 'transversal': None, 'fiber_cap': None, 'scaling': None, 'workers': 1}
    report = build_report(config, None, None, [{'stage': 'input', 'order': 4}], "ok", 0, timing=0.25)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'nested' / 'report.json'
        write_report(report, path)
        assert path.read_text(encoding='utf-8').endswith('\n')
        assert load_report(path) == report
    assert report['timing'] == {'seconds': 0.25}

    print("✅ Reports are written and loaded")


if __name__ == "__main__":
    print("Testing format converters...")
    print("=" * 60)

    test_scalars()
    test_jet_format()
    test_jet_round_trip()
    test_report_document()
    test_write_and_load()

    print("=" * 60)
    print("✅ All format converter tests passed!")
