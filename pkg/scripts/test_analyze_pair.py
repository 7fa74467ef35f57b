#!/usr/bin/env python3
"""Test the analyze_pair command line: exit codes, reports and schema validation."""

import sys
import tempfile
from pathlib import Path

# Add scripts directory to path
sys.path.insert(0, str(Path(__file__).parent))

from analyze_pair import parse_point, parse_run_config, run_command
from errors import ProblemFileError
from format_converters import load_report
from validate_schema import validate_file

PROBLEMS_DIR = Path(__file__).parent.parent / 'problems'


def run(command: str, problem: str, *extra: str):
    """Run one command with its report in a temporary directory; returns (report, code, file)."""
    tmp = Path(tempfile.mkdtemp())
    out = tmp / 'report.json'
    report, code = run_command([command, str(PROBLEMS_DIR / f"{problem}.pair"), '--out', str(out), *extra])
    return report, code, out


def test_parse_point():
    assert parse_point("t=0, x[0,1]=1/2") == {'t': '0', 'x[0,1]': '1/2'}
    assert parse_point("") == {}
    for text in ("t=", "t=1,t=2", "= 3"):
        try:
            parse_point(text)
            assert False, f"{text!r} must fail"
        except ProblemFileError:
            pass

    print("✅ Point assignments parse")


def test_default_orders():
    assert parse_run_config(['invariants', 'a.pair']).effective_order == 4
    assert parse_run_config(['cartan', 'a.pair']).effective_order == 1
    assert parse_run_config(['cartan', 'a.pair', '--order', '0']).effective_order == 0

    print("✅ Default orders are per command")


def test_check_regular():
    report, code, out = run('check-regular', 'trivial_k3')
    assert code == 0
    assert report['verdict'] == "regular at the point"
    assert report['pair']['n'] == 5
    is_valid, errors = validate_file(out)
    assert is_valid, errors

    report, code, out = run('check-regular', 'degenerate_generic')
    assert code == 3
    assert report['payload']['regularity']['regular'] is False
    assert load_report(out)['exit_code'] == 3

    print("✅ check-regular reports regularity")


def test_invariants_report():
    """x'''' = x: the normalized K_0 is the constant -1."""
    report, code, out = run('invariants', 'xiv_eq_x', '--order', '0')
    assert code == 0
    assert report['verdict'].startswith("nonzero invariant: K_0[1,1] = -1")
    k0 = report['payload']['invariants']['K_normalized'][0][0][0]
    assert k0['terms'][0] == {'multi_index': [0, 0, 0, 0, 0], 'value': '-1'}
    assert k0['variables'] == report['pair']['variables']
    assert load_report(out, jets=True)['payload']['invariants']['K_normalized'][0][0][0].constant_term() == -1
    assert report['error'] is None
    is_valid, errors = validate_file(out)
    assert is_valid, errors

    print("✅ invariants writes a valid report")


def test_gating_exit_code():
    report, code, _ = run('canonical-frame', 'geodesic')
    assert code == 5
    assert report['error'].startswith("GatingViolation")
    assert report['payload'] is None

    print("✅ Out-of-range (k, m) exits with 5")


def test_canonical_frame_defaults():
    """Nonlinear pair with default order and fiber cap."""
    report, code, out = run('canonical-frame', 'perturbed_k3')
    assert code == 0, report['error']
    assert report['config']['fiber_cap'] is None
    bundle = report['payload']['bundle']
    assert bundle['bundle_chart']['fiber_cap'] == 9
    assert bundle['structure']['checks']['structure_2']
    assert all(check['holds'] for check in bundle['normalization']['verification'].values())
    is_valid, errors = validate_file(out)
    assert is_valid, errors

    print("✅ canonical-frame runs at default settings")


def test_parse_error_exit_code():
    tmp = Path(tempfile.mkdtemp())
    bad = tmp / 'bad.pair'
    bad.write_text('pair "bad" { kind = "ode" k = 3 m = 1 F[1] = "x[0,1] +" }\n', encoding='utf-8')
    report, code = run_command(['invariants', str(bad), '--out', str(tmp / 'report.json')])
    assert code == 2
    assert report['pair'] is None
    assert report['error'].startswith("ExpressionSyntaxError")

    _, code, _ = run('invariants', 'xiv_eq_x', '--point', 't=0.5')
    assert code == 2

    _, code = run_command(['no-such-command', 'a.pair'])
    assert code == 2

    print("✅ Parse errors exit with 2")


def test_timing_is_optional():
    report, _, _ = run('check-regular', 'trivial_k3')
    assert report['timing'] is None
    report, _, _ = run('check-regular', 'trivial_k3', '--timing')
    assert report['timing']['seconds'] >= 0

    print("✅ Timing is recorded only on request")


if __name__ == "__main__":
    print("Testing analyze_pair...")
    print("=" * 60)

    test_parse_point()
    test_default_orders()
    test_check_regular()
    test_invariants_report()
    test_gating_exit_code()
    test_canonical_frame_defaults()
    test_parse_error_exit_code()
    test_timing_is_optional()

    print("=" * 60)
    print("✅ All analyze_pair tests passed!")
