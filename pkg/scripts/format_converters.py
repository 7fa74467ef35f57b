#!/usr/bin/env python3
"""
Format converters from computed objects to the JSON report format.

Scalars, jets, matrices and the per-command reports are converted to plain
JSON values. Rationals are written as strings "p/q" (or "p"), floats as
numbers. Jets list their terms as multi-indices over the chart variables in
graded-lexicographic order; the indices are powers of displacements from the point.
"""

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from jets import FLOAT, RATIONAL, Chart, Jet, Scalar, ScalarMode

SCHEMA_VERSION = "1"
TOOL_VERSION = "1.0.0"


def convert_scalar(value: Scalar) -> Any:
    """
    Convert a scalar to JSON.

    Fraction(3, 4) -> "3/4", Fraction(-2) -> "-2", 0.5 -> 0.5
    """
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return str(value)
    return float(value)


def parse_scalar(text: Any) -> Scalar:
    """Inverse of convert_scalar, for reading reports back."""
    if isinstance(text, str):
        return Fraction(text)
    return float(text)


def convert_jet(jet: Jet) -> Dict[str, Any]:
    """
    Convert a jet to JSON.

    Output format:
    {
        "order": 2,
        "variables": ["t", "x[0,1]"],
        "terms": [{"multi_index": [0, 0], "value": "-1"},
                  {"multi_index": [0, 1], "value": "1/2"}]
    }
    """
    terms = [{'multi_index': list(index), 'value': convert_scalar(value)}
             for index, value in jet.terms() if not jet.mode.is_zero(value)]
    return {'order': jet.order, 'variables': list(jet.chart.names), 'terms': terms}


def parse_jet(data: Dict[str, Any], mode: Optional[ScalarMode] = None) -> Jet:
    """Inverse of convert_jet. The mode follows the values unless given."""
    values = [parse_scalar(term['value']) for term in data['terms']]
    if mode is None:
        mode = FLOAT if any(isinstance(v, float) for v in values) else RATIONAL
    chart = Chart(tuple(data['variables']))
    coeffs = {}
    for term, value in zip(data['terms'], values):
        index = tuple(term['multi_index'])
        if len(index) != chart.dimension:
            raise ValueError(f"multi-index {list(index)} does not match {chart.dimension} variables")
        coeffs[index] = mode.coerce(value)
    return Jet(chart, data['order'], coeffs, mode)


def _is_jet(value: Any) -> bool:
    return isinstance(value, dict) and set(value) == {'order', 'variables', 'terms'}


def convert_matrix(matrix: Sequence[Sequence[Jet]]) -> List[List[Dict[str, Any]]]:
    return [[convert_jet(entry) for entry in row] for row in matrix]


def convert_scalar_matrix(matrix: Sequence[Sequence[Scalar]]) -> List[List[Any]]:
    return [[convert_scalar(entry) for entry in row] for row in matrix]


def convert_point(point: Dict[str, Scalar]) -> Dict[str, Any]:
    return {name: convert_scalar(value) for name, value in point.items()}


def convert_pair(pair) -> Dict[str, Any]:
    return {
        'name': pair.spec.name,
        'kind': pair.kind,
        'k': pair.k,
        'm': pair.m,
        'n': pair.n,
        'mode': pair.mode.kind,
        'variables': list(pair.chart.names),
    }


def convert_filtration_report(report) -> Dict[str, Any]:
    """FiltrationReport -> JSON, including the equation-type levels when present."""
    data: Dict[str, Any] = {
        'point': convert_point(report.point),
        'order': report.order,
        'ranks': list(report.ranks),
        'expected_ranks': list(report.expected_ranks),
        'g1': list(report.g1),
        'g2': report.g2,
        'regular': report.regular,
        'failure': report.failure,
    }
    if report.characteristics or report.integrability:
        data['characteristics'] = [
            {'level': c.level, 'rank': c.rank, 'expected': c.expected,
             'contained_in_lower': c.contained_in_lower, 'matches_candidate': c.matches_candidate}
            for c in report.characteristics]
        data['integrability'] = [
            {'level': i.level, 'closed': i.closed, 'order': i.order,
             'max_residual_terms': i.max_residual_terms}
            for i in report.integrability]
        data['verdict'] = report.verdict
    return data


def convert_invariant_report(report) -> Dict[str, Any]:
    gauge = dict(report.gauge)
    gauge['level'] = convert_scalar(gauge['level']) if gauge.get('level') is not None else None
    gauge['f_at_point'] = convert_scalar(gauge['f_at_point'])
    gauge['Xf_at_point'] = convert_scalar(gauge['Xf_at_point'])
    return {
        'point': convert_point(report.point),
        'gauge': gauge,
        'H': convert_matrix(report.H),
        'K': [convert_matrix(mat) for mat in report.K],
        'adk_residual': convert_matrix(report.adk_residual),
        'x_residual': [convert_jet(e) for e in report.x_residual],
        'trace': convert_jet(report.trace),
        'f': convert_jet(report.f) if report.f is not None else None,
        'K_normalized': [convert_matrix(mat) for mat in report.K_normalized],
        'trace_normalized': convert_jet(report.trace_normalized) if report.trace_normalized is not None else None,
        'characteristic_polynomials': [[convert_scalar(c) for c in poly]
                                       for poly in report.characteristic_polynomials],
        'flat': report.flat,
        'witness': report.witness,
    }


def convert_triviality(verdict) -> Dict[str, Any]:
    return {
        'flat': verdict.flat,
        'order': verdict.order,
        'points': [{'point': convert_point(p['point']), 'flat': p['flat'], 'witness': p['witness']}
                   for p in verdict.points],
        'witness': verdict.witness,
    }


def _pair_key(pair: Tuple[str, str]) -> str:
    return f"[{pair[0]},{pair[1]}]"


def convert_structure_report(structure) -> Dict[str, Any]:
    table = {_pair_key(pair): {name: convert_jet(jet) for name, jet in entry.items()}
             for pair, entry in structure.table.items()}
    data = {
        'frame': list(structure.names),
        'order': structure.order,
        'table': table,
        'checks': dict(structure.flags),
        'failures': list(structure.failures),
        'w': [[[convert_jet(jet) for jet in row] for row in block] for block in structure.w],
        'flat': structure.flat,
        'jacobi': structure.jacobi,
    }
    if structure.cartan is not None:
        data['cartan'] = convert_cartan(structure.cartan)
    return data


def convert_cartan(cartan: Dict[str, Any]) -> Dict[str, Any]:
    def block(entries):
        return {_pair_key(pair): {name: convert_scalar(v) for name, v in values.items()}
                for pair, values in entries.items()}

    return {
        'basis': list(cartan['basis']),
        'constants': block(cartan['constants']),
        'residuals': block(cartan['residuals']),
        'cartan_flat': cartan['cartan_flat'],
        'h_weights': [{key: (convert_scalar(v) if key != 'level' else v) for key, v in w.items()}
                      for w in cartan['h_weights']],
        'coframe': {label: [{'pair': entry['pair'], 'value': convert_scalar(entry['value'])}
                            for entry in entries]
                    for label, entries in cartan['coframe'].items()},
    }


def convert_normalization(solution) -> Dict[str, Any]:
    m = len(solution.gamma0)
    beta = {f"frame.beta[{j + 1}][{s + 1}][{t + 1}]": convert_jet(solution.beta[j][s][t])
            for j in range(m) for s in range(m) for t in range(m)}
    return {
        'beta': beta,
        'gamma0': {f"frame.gamma0[{j + 1}]": convert_jet(g) for j, g in enumerate(solution.gamma0)},
        'gamma1': {f"frame.gamma1[{j + 1}]": convert_jet(g) for j, g in enumerate(solution.gamma1)},
        'x_beta': [convert_jet(j) for j in solution.x_beta],
        'linear_map': {
            'rows': list(solution.row_labels),
            'columns': list(solution.column_labels),
            'matrix': convert_scalar_matrix(solution.linear_map),
        },
        'variant': solution.variant,
        'gamma1_decoupled': solution.gamma1_decoupled,
        'verification': {kind: dict(value) for kind, value in sorted(solution.verification.items())},
        'homogeneous': solution.homogeneous,
    }


def convert_bundle_result(result) -> Dict[str, Any]:
    bc = result.chart
    return {
        'bundle_chart': {
            'variables': list(bc.chart.names),
            'section_point': [convert_scalar(v) for v in bc.section_point],
            'fiber_cap': bc.fiber_cap,
        },
        'normalization': convert_normalization(result.solution),
        'projection_matches': result.frame.projection_matches,
        'structure': convert_structure_report(result.structure),
    }


def convert_trace_law(check) -> Dict[str, Any]:
    return {
        'point': convert_point(check.point),
        'f': convert_jet(check.f),
        'left': convert_jet(check.left),
        'right': convert_jet(check.right),
        'order': check.order,
        'holds': check.holds,
    }


def convert_schwarzian_check(check) -> Dict[str, Any]:
    return {
        'samples': [{'time': s.time, 'point': dict(s.point), 'schwarzian': s.schwarzian,
                     'reference': s.reference, 'relative_error': s.relative_error}
                    for s in check.samples],
        'max_relative_error': check.max_relative_error,
        'tolerance': check.tolerance,
        'holds': check.holds,
    }


def build_report(config: Dict[str, Any], pair: Optional[Dict[str, Any]], payload: Optional[Dict[str, Any]],
                 audit: List[Dict[str, Any]], verdict: str, exit_code: int,
                 timing: Optional[float] = None, error: Optional[str] = None) -> Dict[str, Any]:
    """Top-level report document."""
    return {
        'schema_version': SCHEMA_VERSION,
        'tool_version': TOOL_VERSION,
        'config': config,
        'pair': pair,
        'payload': payload,
        'audit': audit,
        'verdict': verdict,
        'exit_code': exit_code,
        'error': error,
        'timing': None if timing is None else {'seconds': timing},
    }


def dumps_report(report: Dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_report(report: Dict[str, Any], path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(report), encoding='utf-8')


def load_report(path: Path, jets: bool = False) -> Dict[str, Any]:
    """Read a report; with jets=True the serialized jets come back as Jet objects."""
    with open(path, 'r', encoding='utf-8') as f:
        report = json.load(f)
    return decode_jets(report) if jets else report


def decode_jets(value: Any) -> Any:
    """Replace every serialized jet in a loaded report by a Jet."""
    if _is_jet(value):
        return parse_jet(value)
    if isinstance(value, dict):
        return {key: decode_jets(item) for key, item in value.items()}
    if isinstance(value, list):
        return [decode_jets(item) for item in value]
    return value
