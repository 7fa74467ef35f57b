#!/usr/bin/env python3
"""
Analyze a pair (X, V) from a problem file and write a JSON report.

Usage:
    python analyze_pair.py invariants ../problems/xiv_eq_x.pair --point "t=0"
    python analyze_pair.py trivial-test ../problems/trivial_k3.pair --point "t=0" --point "t=1,x[0,1]=2"
    python analyze_pair.py cartan ../problems/trivial_k2m2.pair --order 1

Exit codes: 0 success, 1 internal error, 2 parse error, 3 regularity
failure, 4 order insufficient, 5 (k, m) outside the canonical-frame range.
"""

import argparse
import logging
import re
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from canonical_bundle import build_bundle_chart, check_gating, run_canonical_bundle
from errors import DecimalInRationalMode, PairToolError, ProblemFileError, RegularityFailure
from expressions import parse_expression
from format_converters import (build_report, convert_bundle_result, convert_filtration_report,
                               convert_invariant_report, convert_pair, convert_schwarzian_check,
                               convert_trace_law, convert_triviality, write_report)
from jets import Scalar, mode_from_name
from normalization import (normalized_invariants, required_input_order, schwarzian_reparametrization_check,
                           trace_law_check, triviality_test)
from ode_pair import PairFields, build_pair, equation_type_report, regularity_report
from problem_files import build_pair_spec, load_problem
from validate_schema import REPORT_SCHEMA, validate_data

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).parent.parent
RESULTS_DIR = ROOT_DIR / 'results'

COMMANDS = ('check-regular', 'equation-type', 'invariants', 'trivial-test',
            'canonical-frame', 'cartan', 'lemma2-check', 'schwarzian-check')
BUNDLE_COMMANDS = ('canonical-frame', 'cartan')

DEFAULT_ORDER = 4
DEFAULT_BUNDLE_ORDER = 1
DEFAULT_FLOAT_TOLERANCE = 1e-9
DEFAULT_SCALING = "1 + t^2"
DEFAULT_WORKERS = 1

_ASSIGNMENT = re.compile(r"([A-Za-z_]\w*(?:\[\d+,\d+\])?)\s*=\s*([^,]+)")
_POINT = re.compile(r"\s*[A-Za-z_]\w*(?:\[\d+,\d+\])?\s*=\s*[^,=]+(?:,\s*[A-Za-z_]\w*(?:\[\d+,\d+\])?\s*=\s*[^,=]+)*\s*")


@dataclass
class RunConfig:
    command: str
    input: Path
    points: List[Dict[str, str]] = field(default_factory=list)
    order: Optional[int] = None
    mode: Optional[str] = None
    transversal: Optional[str] = None
    fiber_cap: Optional[int] = None
    out: Optional[Path] = None
    scaling: str = DEFAULT_SCALING
    workers: int = DEFAULT_WORKERS
    tolerance: float = DEFAULT_FLOAT_TOLERANCE
    timing: bool = False
    verbose: bool = False

    @property
    def effective_order(self) -> int:
        if self.order is not None:
            return self.order
        return DEFAULT_BUNDLE_ORDER if self.command in BUNDLE_COMMANDS else DEFAULT_ORDER

    def to_json(self, pair: Optional[PairFields] = None) -> Dict[str, Any]:
        return {
            'command': self.command,
            'input': self.input.name,
            'points': [dict(p) for p in self.points],
            'order': self.effective_order,
            'mode': pair.mode.kind if pair is not None else self.mode,
            'transversal': self.transversal,
            'fiber_cap': self.fiber_cap,
            'scaling': self.scaling if self.command in ('lemma2-check', 'schwarzian-check') else None,
            'workers': self.workers,
        }


def parse_point(text: str) -> Dict[str, str]:
    """'t=0, x[0,1]=1/2' -> {'t': '0', 'x[0,1]': '1/2'}"""
    if not text.strip():
        return {}
    if not _POINT.fullmatch(text):
        raise ProblemFileError(f"cannot parse point {text!r}")
    assignment: Dict[str, str] = {}
    for match in _ASSIGNMENT.finditer(text):
        name, value = match.group(1), match.group(2).strip()
        if name in assignment:
            raise ProblemFileError(f"point assigns {name} twice")
        assignment[name] = value
    return assignment


def point_value(text: str, exact: bool) -> Scalar:
    try:
        if exact:
            if re.search(r"[.eE]", text):
                raise DecimalInRationalMode(f"decimal point value {text!r} needs --mode float")
            return Fraction(text)
        return float(Fraction(text)) if '/' in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ProblemFileError(f"point value {text!r} is not a number")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Invariants, canonical frames and structure functions of pairs (X, V)')
    parser.add_argument('command', choices=COMMANDS, help='Analysis to run')
    parser.add_argument('input', type=Path, help='Problem file (.pair)')
    parser.add_argument('--point', action='append', default=[],
                        help='Point assignment, e.g. "t=0,x[0,1]=1/2" (repeatable; unassigned = 0)')
    parser.add_argument('--order', type=int, default=None,
                        help=f'Report order (default {DEFAULT_ORDER}, '
                             f'{DEFAULT_BUNDLE_ORDER} for canonical-frame and cartan)')
    parser.add_argument('--mode', choices=('rational', 'float'), default=None,
                        help='Override the scalar mode of the problem file')
    parser.add_argument('--transversal', default=None, help='Chart variable used as transversal')
    parser.add_argument('--fiber-cap', type=int, default=None,
                        help='Stored fiber degree on the bundle chart (default: sized from k, m and the order)')
    parser.add_argument('--out', type=Path, default=None,
                        help='Report path (default results/<problem>_<command>.json)')
    parser.add_argument('--scaling', default=DEFAULT_SCALING,
                        help=f'Scaling function f for lemma2-check and schwarzian-check (default "{DEFAULT_SCALING}")')
    parser.add_argument('--workers', type=int, default=DEFAULT_WORKERS,
                        help='Worker processes for trivial-test')
    parser.add_argument('--tolerance', type=float, default=DEFAULT_FLOAT_TOLERANCE,
                        help='Relative tolerance in float mode')
    parser.add_argument('--timing', action='store_true', help='Record elapsed seconds in the report')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    return parser


def parse_run_config(argv: List[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.order is not None and args.order < 0:
        raise ProblemFileError("--order must be >= 0")
    if args.fiber_cap is not None and args.fiber_cap < 1:
        raise ProblemFileError("--fiber-cap must be >= 1")
    if args.workers < 1:
        raise ProblemFileError("--workers must be >= 1")
    return RunConfig(
        command=args.command,
        input=args.input,
        points=[parse_point(p) for p in args.point],
        order=args.order,
        mode=args.mode,
        transversal=args.transversal,
        fiber_cap=args.fiber_cap,
        out=args.out,
        scaling=args.scaling,
        workers=args.workers,
        tolerance=args.tolerance,
        timing=args.timing,
        verbose=args.verbose,
    )


def load_pair(config: RunConfig) -> PairFields:
    spec = load_problem(config.input)
    if config.mode and config.mode != spec.mode.kind:
        spec = build_pair_spec({**spec.source, 'mode': config.mode})
    if not spec.mode.exact and config.tolerance != spec.mode.tolerance:
        spec = replace(spec, mode=mode_from_name('float', config.tolerance))
    return build_pair(spec)


def resolve_points(config: RunConfig, pair: PairFields) -> List[Tuple[Scalar, ...]]:
    raw = config.points or [{}]
    exact = pair.mode.exact
    return [pair.resolve_point({name: point_value(value, exact) for name, value in p.items()}) for p in raw]


def execute(config: RunConfig, pair: PairFields) -> Tuple[Dict[str, Any], List[Dict[str, Any]], str, int]:
    """Run one command. Returns (payload, audit, verdict, exit code)."""
    command = config.command
    order = config.effective_order
    points = resolve_points(config, pair)
    point = points[0]
    k, m = pair.k, pair.m

    if command == 'check-regular':
        report = regularity_report(pair, point, max(order, k + 1))
        verdict = "regular at the point" if report.regular else report.failure
        return ({'regularity': convert_filtration_report(report)}, [{'stage': 'input', 'order': report.order}],
                verdict, 0 if report.regular else RegularityFailure.exit_code)

    if command == 'equation-type':
        report = equation_type_report(pair, point, max(order, k + 2))
        return ({'regularity': convert_filtration_report(report)}, [{'stage': 'input', 'order': report.order}],
                report.verdict, 0)

    if command == 'invariants':
        report = normalized_invariants(pair, point, order, config.transversal)
        verdict = ("normalized invariants vanish to order "
                   f"{order}" if report.flat else f"nonzero invariant: {report.witness}")
        return {'invariants': convert_invariant_report(report)}, report.audit, verdict, 0

    if command == 'trivial-test':
        verdict = triviality_test(pair, points, order, config.transversal, config.workers)
        audit = [{'stage': 'normalized', 'order': required_input_order('normalized', k, order)}]
        return {'triviality': convert_triviality(verdict)}, audit, verdict.message, 0

    if command in BUNDLE_COMMANDS:
        check_gating(k, m)
        base_order = required_input_order('bundle', k, order, m)
        invariants = normalized_invariants(pair, point, 0, config.transversal, input_order=base_order)
        chart = build_bundle_chart(pair.chart, point, k, m, pair.mode, config.fiber_cap, order)
        result = run_canonical_bundle(chart, invariants.projective_field, invariants.normal_frame_fields,
                                      order, with_cartan=(command == 'cartan'))
        structure = result.structure
        audit = invariants.audit + result.audit
        if command == 'cartan':
            flat = structure.cartan['cartan_flat']
            verdict = ("Cartan connection flat at the section point" if flat
                       else f"Cartan curvature: {len(structure.cartan['residuals'])} nonzero bracket(s)")
        else:
            failed = [name for name, ok in structure.flags.items() if not ok]
            verdict = f"canonical frame built; structure functions {'flat' if structure.flat else 'not flat'}"
            if failed:
                verdict += f"; failed checks: {', '.join(failed)}"
        return {'bundle': convert_bundle_result(result)}, audit, verdict, 0

    if command == 'lemma2-check':
        check = trace_law_check(pair, point, order, parse_expression(config.scaling), config.transversal)
        verdict = (f"trace law holds to order {order}" if check.holds
                   else f"trace law fails at order {order}")
        audit = [{'stage': 'input', 'order': required_input_order('lemma2', k, order)}]
        return {'trace_law': convert_trace_law(check)}, audit, verdict, 0 if check.holds else 1

    check = schwarzian_reparametrization_check(pair, point, parse_expression(config.scaling),
                                               tolerance=max(config.tolerance, 1e-6))
    verdict = (f"Schwarzian agrees along the trajectory (max relative error {check.max_relative_error:.2e})"
               if check.holds else f"Schwarzian mismatch {check.max_relative_error:.2e}")
    return {'schwarzian': convert_schwarzian_check(check)}, [{'stage': 'input', 'order': 3}], verdict, \
        0 if check.holds else 1


def run_command(argv: List[str]) -> Tuple[Dict[str, Any], int]:
    """Parse arguments, run the command, validate and write the report.

    Returns:
        (report, exit_code)
    """
    started = time.perf_counter()
    config: Optional[RunConfig] = None
    pair: Optional[PairFields] = None
    payload, audit, error = None, [], None
    try:
        config = parse_run_config(argv)
        pair = load_pair(config)
        payload, audit, verdict, exit_code = execute(config, pair)
    except PairToolError as e:
        exit_code, verdict, error = e.exit_code, str(e), f"{type(e).__name__}: {e}"
        if isinstance(e, RegularityFailure) and e.report is not None:
            payload = {'regularity': convert_filtration_report(e.report)}
        if getattr(e, 'audit', None):
            audit = list(e.audit)
        logger.error(error)
    except SystemExit as e:
        # argparse usage errors and --help
        return {}, e.code if isinstance(e.code, int) else 2
    except Exception as e:
        exit_code, verdict, error = 1, f"internal error: {e}", f"{type(e).__name__}: {e}"
        logger.exception("internal error")

    if config is None:
        return {}, exit_code

    timing = time.perf_counter() - started if config.timing else None
    report = build_report(config.to_json(pair), convert_pair(pair) if pair is not None else None,
                          payload, audit, verdict, exit_code, timing, error)
    is_valid, errors = validate_data(report, REPORT_SCHEMA)
    if not is_valid:
        logger.error("report failed schema validation:\n" + '\n'.join(errors))
        report['exit_code'], report['error'] = 1, 'report failed schema validation'
        exit_code = 1

    out = config.out or RESULTS_DIR / f"{config.input.stem}_{config.command}.json"
    write_report(report, out)
    logger.info(f"Report written to {out}")
    return report, exit_code


def main():
    argv = sys.argv[1:]
    level = logging.DEBUG if '--verbose' in argv else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')

    report, exit_code = run_command(argv)
    if report:
        mark = "✅" if exit_code == 0 else "❌"
        print("=" * 60)
        print(f"{report['config']['command']}: {report['config']['input']}")
        print("=" * 60)
        print(f"{mark} {report['verdict']}")
    sys.exit(exit_code)


if __name__ == '__main__':
    main()
