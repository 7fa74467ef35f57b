#!/usr/bin/env python3
"""
Problem file reader.

A problem file declares one pair:

    pair "x4_eq_x" {
      kind = "ode"
      k = 3   m = 1
      F[1] = "x[0,1]"
    }

The assignments are collected into a plain dict, validated against
data_schema.json, and turned into a PairSpec with parsed expressions.
"""

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Tuple

from errors import ExpressionSyntaxError, ProblemFileError
from expressions import (ZERO, Constant, ExpressionNode, Negation, Product, Sum, Variable,
                         free_variables, has_decimals, parse_expression, sum_nodes)
from jets import ScalarMode, mode_from_name

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"""
    (?P<space>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct>[\[\]{}=,])
""", re.VERBOSE)

INDEXED_KEYS = {'F': 1, 'Gamma': 3, 'V': 1}
SCALAR_KEYS = ('kind', 'mode', 'k', 'm', 'dim', 'vars', 'X')


@dataclass(frozen=True)
class PairSpec:
    """Validated description of a pair (X, V)."""

    name: str
    kind: str
    k: int
    m: int
    mode: ScalarMode
    variables: Tuple[str, ...]
    F: Tuple[ExpressionNode, ...] = ()
    gamma: Tuple[Tuple[Tuple[ExpressionNode, ...], ...], ...] = ()
    x_frame: Tuple[ExpressionNode, ...] = ()
    v_frame: Tuple[Tuple[ExpressionNode, ...], ...] = ()
    source: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return len(self.variables)


def equation_chart_names(k: int, m: int) -> Tuple[str, ...]:
    """Chart of the equation manifold: t, then x[i,j] with i = 0..k, j = 1..m."""
    return ('t',) + tuple(f"x[{i},{j}]" for i in range(k + 1) for j in range(1, m + 1))


def _tokens(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos, line = 0, 1
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match:
            raise ProblemFileError(f"line {line}: unexpected character {text[pos]!r}")
        kind = match.lastgroup
        if kind == 'newline':
            line += 1
        elif kind not in ('space', 'comment'):
            tokens.append((kind, match.group(), line))
        pos = match.end()
    tokens.append(('end', '', line))
    return tokens


def read_problem_assignments(text: str) -> Dict[str, Any]:
    """Collect the assignments of a problem file into a schema-shaped dict."""
    tokens = _tokens(text)
    pos = 0

    def take(kind: str = None, value: str = None):
        nonlocal pos
        token_kind, token_text, line = tokens[pos]
        if (kind and token_kind != kind) or (value and token_text != value):
            wanted = value or kind
            raise ProblemFileError(f"line {line}: expected {wanted}, found {token_text or 'end of file'!r}")
        pos += 1
        return token_text, line

    def unquote(s: str) -> str:
        return s[1:-1].replace('\\"', '"').replace('\\\\', '\\')

    take('name', 'pair')
    name, _ = take('string')
    data: Dict[str, Any] = {'name': unquote(name)}
    take('punct', '{')
    while tokens[pos][1] != '}':
        key, line = take('name')
        indices = []
        while tokens[pos][1] == '[':
            take('punct', '[')
            indices.append(take('int')[0])
            take('punct', ']')
        take('punct', '=')

        kind, text_value, _ = tokens[pos]
        if kind == 'string':
            pos += 1
            value: Any = unquote(text_value)
        elif kind == 'int':
            pos += 1
            value = int(text_value)
        elif text_value == '[':
            pos += 1
            value = []
            while tokens[pos][1] != ']':
                value.append(unquote(take('string')[0]))
                if tokens[pos][1] == ',':
                    pos += 1
            take('punct', ']')
        else:
            raise ProblemFileError(f"line {line}: missing value for {key}")

        if key in INDEXED_KEYS:
            if len(indices) != INDEXED_KEYS[key]:
                raise ProblemFileError(f"line {line}: {key} needs {INDEXED_KEYS[key]} index(es)")
            bucket = data.setdefault(key, {})
            slot = ','.join(indices)
            if slot in bucket:
                raise ProblemFileError(f"line {line}: duplicate assignment {key}[{slot}]")
            bucket[slot] = value
        else:
            if indices:
                raise ProblemFileError(f"line {line}: {key} takes no index")
            if key in data:
                raise ProblemFileError(f"line {line}: duplicate assignment {key}")
            data[key] = value
    take('punct', '}')
    if tokens[pos][0] != 'end':
        raise ProblemFileError(f"line {tokens[pos][2]}: text after the closing brace")
    return data


def _parse(text: str, where: str, mode: ScalarMode) -> ExpressionNode:
    try:
        node = parse_expression(text)
    except ExpressionSyntaxError as e:
        raise ExpressionSyntaxError(f"{where}: {e}", e.line, e.column)
    if mode.exact and has_decimals(node):
        raise ProblemFileError(f"{where}: decimal literals and named functions require mode = \"float\"")
    return node


def _check_equation_variables(node: ExpressionNode, where: str, k: int, m: int, positions_only: bool = False):
    pattern = re.compile(r"^x\[(\d+),(\d+)\]$")
    for name in sorted(free_variables(node)):
        if name == 't' and not positions_only:
            continue
        match = pattern.match(name)
        if not match:
            raise ProblemFileError(f"{where}: unknown variable {name!r}")
        i, j = int(match.group(1)), int(match.group(2))
        if positions_only and i != 0:
            raise ProblemFileError(f"{where}: Christoffel symbols may depend on positions x[0,j] only")
        if i > k:
            raise ProblemFileError(f"{where}: derivative index {i} exceeds k = {k}")
        if not 1 <= j <= m:
            raise ProblemFileError(f"{where}: component index {j} outside 1..{m}")


def _index(slot: str, bound: int, where: str) -> int:
    value = int(slot)
    if not 1 <= value <= bound:
        raise ProblemFileError(f"{where}: index {value} outside 1..{bound}")
    return value - 1


def _symmetric_part(a: ExpressionNode, b: ExpressionNode) -> ExpressionNode:
    if a == b:
        return a
    if b == ZERO:
        return Product(Constant(Fraction(1, 2)), a)
    if a == ZERO:
        return Product(Constant(Fraction(1, 2)), b)
    return Product(Constant(Fraction(1, 2)), Sum(a, b))


def geodesic_right_hand_side(gamma, m: int) -> Tuple[ExpressionNode, ...]:
    """F_i = -sum_{p,q} Gamma^i_pq x[1,p] x[1,q] for a symmetric Gamma."""
    rhs = []
    for i in range(m):
        terms = []
        for p in range(m):
            for q in range(m):
                if gamma[i][p][q] == ZERO:
                    continue
                terms.append(Product(Product(gamma[i][p][q], Variable(f"x[1,{p + 1}]")),
                                     Variable(f"x[1,{q + 1}]")))
        total = sum_nodes(terms)
        rhs.append(ZERO if total == ZERO else Negation(total))
    return tuple(rhs)


def build_pair_spec(data: Dict[str, Any]) -> PairSpec:
    """Turn schema-valid assignments into a PairSpec, checking index ranges."""
    from validate_schema import PROBLEM_SCHEMA, validate_data

    is_valid, errors = validate_data(data, PROBLEM_SCHEMA)
    if not is_valid:
        raise ProblemFileError("schema violation:\n" + '\n'.join(errors))

    name, kind = data['name'], data['kind']
    mode = mode_from_name(data.get('mode', 'rational'))

    if kind == 'ode':
        k, m = data['k'], data['m']
        F = [ZERO] * m
        for slot, text in data.get('F', {}).items():
            where = f"F[{slot}]"
            j = _index(slot, m, where)
            node = _parse(text, where, mode)
            _check_equation_variables(node, where, k, m)
            F[j] = node
        logger.debug(f"Parsed ode pair {name}: k={k}, m={m}")
        return PairSpec(name, kind, k, m, mode, equation_chart_names(k, m), F=tuple(F), source=data)

    if kind == 'geodesic':
        if data.get('k', 1) != 1:
            raise ProblemFileError("geodesic pairs have k = 1")
        m = data['m']
        raw = [[[ZERO] * m for _ in range(m)] for _ in range(m)]
        for slot, text in data.get('Gamma', {}).items():
            where = f"Gamma[{slot.replace(',', '][')}]"
            i, p, q = (_index(s, m, where) for s in slot.split(','))
            node = _parse(text, where, mode)
            _check_equation_variables(node, where, 1, m, positions_only=True)
            raw[i][p][q] = node
        gamma = tuple(tuple(tuple(_symmetric_part(raw[i][p][q], raw[i][q][p]) for q in range(m))
                            for p in range(m)) for i in range(m))
        return PairSpec(name, kind, 1, m, mode, equation_chart_names(1, m),
                        F=geodesic_right_hand_side(gamma, m), gamma=gamma, source=data)

    dim, m = data['dim'], data['m']
    variables = tuple(data['vars'])
    if len(variables) != dim or len(set(variables)) != dim:
        raise ProblemFileError(f"vars must list {dim} distinct names")
    if (dim - 1) % m or (dim - 1) // m < 2:
        raise ProblemFileError(f"dim = {dim} is not of the form (k+1)m + 1 with k >= 1 for m = {m}")
    k = (dim - 1) // m - 1
    if 'k' in data and data['k'] != k:
        raise ProblemFileError(f"k = {data['k']} disagrees with dim = {dim}, m = {m} (expected {k})")

    def frame_column(texts: List[str], where: str) -> Tuple[ExpressionNode, ...]:
        if len(texts) != dim:
            raise ProblemFileError(f"{where}: expected {dim} coefficients, got {len(texts)}")
        column = []
        for row, text in enumerate(texts):
            node = _parse(text, f"{where}[{row + 1}]", mode)
            unknown = free_variables(node) - set(variables)
            if unknown:
                raise ProblemFileError(f"{where}[{row + 1}]: unknown variable {sorted(unknown)[0]!r}")
            column.append(node)
        return tuple(column)

    x_frame = frame_column(data['X'], 'X')
    columns = data['V']
    if sorted(int(s) for s in columns) != list(range(1, m + 1)):
        raise ProblemFileError(f"V must define columns 1..{m}")
    v_frame = tuple(frame_column(columns[str(j)], f"V[{j}]") for j in range(1, m + 1))
    return PairSpec(name, kind, k, m, mode, variables, x_frame=x_frame, v_frame=v_frame, source=data)


def parse_problem_file(text: str) -> PairSpec:
    """Parse problem-file text into a validated PairSpec.

    Raises:
        ProblemFileError: on schema violations and index range errors
        ExpressionSyntaxError: on malformed coefficient expressions
    """
    return build_pair_spec(read_problem_assignments(text))


def load_problem(path: Path) -> PairSpec:
    logger.info(f"Loading problem file {path}")
    return parse_problem_file(Path(path).read_text(encoding='utf-8'))
