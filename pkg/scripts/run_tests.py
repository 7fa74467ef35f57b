#!/usr/bin/env python3
"""
Run the test scripts of the pair analysis tools.

Usage:
    python run_tests.py                  # every module
    python run_tests.py jets bundle      # modules whose name contains a filter
    python run_tests.py --list
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

SCRIPT_DIR = Path(__file__).parent

# bottom-up: the later modules build on the earlier ones
TEST_FILES = [
    "test_jets.py",
    "test_expressions.py",
    "test_vector_fields.py",
    "test_ode_pair.py",
    "test_normalization.py",
    "test_canonical_bundle.py",
    "test_format_converters.py",
    "test_analyze_pair.py",
]


def select_tests(filters):
    if not filters:
        return list(TEST_FILES)
    return [name for name in TEST_FILES if any(f in name for f in filters)]


def run_test(test_file):
    """Run one test script; returns (passed, seconds)."""
    test_path = SCRIPT_DIR / test_file
    if not test_path.exists():
        print(f"⚠️  Test file not found: {test_file}")
        return False, 0.0

    print(f"\n{'=' * 70}")
    print(f"Running: {test_file}")
    print(f"{'=' * 70}")

    start = time.perf_counter()
    result = subprocess.run([sys.executable, str(test_path)], cwd=SCRIPT_DIR)
    return result.returncode == 0, time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description='Run the test scripts')
    parser.add_argument('filters', nargs='*', help='Run only modules whose file name contains one of these')
    parser.add_argument('--list', action='store_true', help='List the selected modules and exit')
    args = parser.parse_args()

    selected = select_tests(args.filters)
    if not selected:
        print(f"❌ No test module matches {' '.join(args.filters)}")
        sys.exit(2)
    if args.list:
        for name in selected:
            print(name)
        return

    print("=" * 70)
    print(f"RUNNING {len(selected)} OF {len(TEST_FILES)} TEST MODULES")
    print("=" * 70)

    results = [(test_file, *run_test(test_file)) for test_file in selected]

    print("\n" + "=" * 70)
    print("TEST SUMMARY")
    print("=" * 70)
    for test_file, passed, seconds in results:
        status = "✅ PASS" if passed else "❌ FAIL"
        print(f"  {status}: {test_file:<28} {seconds:8.1f}s")
    total = sum(seconds for _, _, seconds in results)
    print(f"  total {total:.1f}s")

    print("\n" + "=" * 70)
    if all(passed for _, passed, _ in results):
        print("✅ All tests passed!")
        sys.exit(0)
    print("❌ Some tests failed")
    sys.exit(1)


if __name__ == "__main__":
    main()
