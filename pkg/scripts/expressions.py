#!/usr/bin/env python3
"""
Coefficient expression language.

Grammar (standard precedence, `^` binds tightest and is right-associative):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '[' INT ',' INT ']' | FUNC '(' expr ')' | '(' expr ')'

Exponents must fold to integer constants. Quotients and negations of
constants fold into a single rational constant, so `1/2` is a literal.
"""

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from errors import (DecimalInRationalMode, DivisionAtPole, ExpressionSyntaxError,
                    FunctionNeedsFloatMode, NotInvertible, UnboundVariable)
from jets import Chart, Jet, ScalarMode, RATIONAL

logger = logging.getLogger(__name__)

FUNCTIONS = ('sin', 'cos', 'exp', 'log')


# ----------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Constant:
    value: Union[Fraction, float]


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Negation:
    operand: 'ExpressionNode'


@dataclass(frozen=True)
class Sum:
    left: 'ExpressionNode'
    right: 'ExpressionNode'


@dataclass(frozen=True)
class Product:
    left: 'ExpressionNode'
    right: 'ExpressionNode'


@dataclass(frozen=True)
class Quotient:
    left: 'ExpressionNode'
    right: 'ExpressionNode'


@dataclass(frozen=True)
class Power:
    base: 'ExpressionNode'
    exponent: int


@dataclass(frozen=True)
class Function:
    name: str
    argument: 'ExpressionNode'


ExpressionNode = Union[Constant, Variable, Negation, Sum, Product, Quotient, Power, Function]

ZERO = Constant(Fraction(0))


# ----------------------------------------------------------------------
# Tokenizer

_TOKEN = re.compile(r"""
    (?P<space>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+)(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),\[\]])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = match.lastgroup
        if kind == 'newline':
            line += 1
            line_start = match.end()
        elif kind != 'space':
            tokens.append(Token(kind, match.group(), line, match.start() - line_start + 1))
        pos = match.end()
    tokens.append(Token('end', '', line, pos - line_start + 1))
    return tokens


# ----------------------------------------------------------------------
# Parser

def _constant_value(node: ExpressionNode) -> Optional[Union[Fraction, float]]:
    if isinstance(node, Constant):
        return node.value
    return None


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.current
        if token.text != text:
            found = token.text or 'end of input'
            raise ExpressionSyntaxError(f"expected {text!r}, found {found!r}", token.line, token.column)
        return self.advance()

    def parse(self) -> ExpressionNode:
        node = self.expression()
        if self.current.kind != 'end':
            token = self.current
            raise ExpressionSyntaxError(f"unexpected {token.text!r}", token.line, token.column)
        return node

    def expression(self) -> ExpressionNode:
        node = self.term()
        while self.current.text in ('+', '-'):
            op = self.advance().text
            right = self.term()
            node = Sum(node, right) if op == '+' else Sum(node, _negate(right))
        return node

    def term(self) -> ExpressionNode:
        node = self.unary()
        while self.current.text in ('*', '/'):
            op = self.advance()
            right = self.unary()
            if op.text == '*':
                node = Product(node, right)
            else:
                left_value, right_value = _constant_value(node), _constant_value(right)
                if left_value is not None and right_value is not None:
                    if right_value == 0:
                        raise ExpressionSyntaxError("division by literal zero", op.line, op.column)
                    node = Constant(left_value / right_value)
                else:
                    node = Quotient(node, right)
        return node

    def unary(self) -> ExpressionNode:
        if self.current.text == '-':
            self.advance()
            return _negate(self.unary())
        if self.current.text == '+':
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> ExpressionNode:
        base = self.atom()
        if self.current.text == '^':
            caret = self.advance()
            exponent = _constant_value(self.unary())
            if exponent is None or isinstance(exponent, float) or exponent.denominator != 1:
                raise ExpressionSyntaxError("integer exponent required", caret.line, caret.column)
            base_value = _constant_value(base)
            if base_value is not None and not (base_value == 0 and exponent < 0):
                return Constant(base_value ** int(exponent))
            return Power(base, int(exponent))
        return base

    def atom(self) -> ExpressionNode:
        token = self.current
        if token.kind == 'number':
            self.advance()
            if any(ch in token.text for ch in '.eE'):
                return Constant(float(token.text))
            return Constant(Fraction(int(token.text)))
        if token.kind == 'name':
            self.advance()
            if self.current.text == '(':
                if token.text not in FUNCTIONS:
                    raise ExpressionSyntaxError(f"unknown function {token.text!r}", token.line, token.column)
                self.advance()
                argument = self.expression()
                self.expect(')')
                return Function(token.text, argument)
            if self.current.text == '[':
                self.advance()
                first = self._index()
                self.expect(',')
                second = self._index()
                self.expect(']')
                return Variable(f"{token.text}[{first},{second}]")
            return Variable(token.text)
        if token.text == '(':
            self.advance()
            node = self.expression()
            self.expect(')')
            return node
        found = token.text or 'end of input'
        raise ExpressionSyntaxError(f"unexpected {found!r}", token.line, token.column)

    def _index(self) -> int:
        token = self.current
        if token.kind != 'number' or not token.text.isdigit():
            raise ExpressionSyntaxError("integer index expected", token.line, token.column)
        self.advance()
        return int(token.text)


def _negate(node: ExpressionNode) -> ExpressionNode:
    value = _constant_value(node)
    if value is not None:
        return Constant(-value)
    return Negation(node)


def parse_expression(text: str) -> ExpressionNode:
    """Parse expression text into an AST.

    Raises:
        ExpressionSyntaxError: with line and column of the offending token.
    """
    return _Parser(text).parse()


# ----------------------------------------------------------------------
# Printer

def _format_constant(value: Union[Fraction, float]) -> str:
    if isinstance(value, float):
        return repr(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def print_expression(node: ExpressionNode) -> str:
    """Canonical fully parenthesized text; parsing it gives back the same AST."""
    if isinstance(node, Constant):
        text = _format_constant(node.value)
        return f"({text})" if (node.value < 0 or '/' in text) else text
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Negation):
        return f"(-{print_expression(node.operand)})"
    if isinstance(node, Sum):
        return f"({print_expression(node.left)} + {print_expression(node.right)})"
    if isinstance(node, Product):
        return f"({print_expression(node.left)} * {print_expression(node.right)})"
    if isinstance(node, Quotient):
        return f"({print_expression(node.left)} / {print_expression(node.right)})"
    if isinstance(node, Power):
        return f"({print_expression(node.base)}^{node.exponent})"
    if isinstance(node, Function):
        return f"{node.name}({print_expression(node.argument)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: ExpressionNode) -> Set[str]:
    if isinstance(node, Variable):
        return {node.name}
    if isinstance(node, Constant):
        return set()
    if isinstance(node, (Negation,)):
        return free_variables(node.operand)
    if isinstance(node, Power):
        return free_variables(node.base)
    if isinstance(node, Function):
        return free_variables(node.argument)
    return free_variables(node.left) | free_variables(node.right)


def has_decimals(node: ExpressionNode) -> bool:
    if isinstance(node, Constant):
        return isinstance(node.value, float)
    if isinstance(node, Variable):
        return False
    if isinstance(node, Negation):
        return has_decimals(node.operand)
    if isinstance(node, Power):
        return has_decimals(node.base)
    if isinstance(node, Function):
        return True
    return has_decimals(node.left) or has_decimals(node.right)


# ----------------------------------------------------------------------
# Evaluation

def _taylor(name: str, c: float, order: int) -> List[float]:
    """Taylor coefficients of a named function at c."""
    coefficients = []
    if name == 'exp':
        value = math.exp(c)
        return [value / math.factorial(n) for n in range(order + 1)]
    if name in ('sin', 'cos'):
        cycle = [math.sin(c), math.cos(c), -math.sin(c), -math.cos(c)]
        shift = 0 if name == 'sin' else 1
        return [cycle[(n + shift) % 4] / math.factorial(n) for n in range(order + 1)]
    if name == 'log':
        if c <= 0:
            raise DivisionAtPole(f"log of non-positive value {c}")
        coefficients.append(math.log(c))
        for n in range(1, order + 1):
            coefficients.append((-1) ** (n + 1) / (n * c ** n))
        return coefficients
    raise ValueError(f"unknown function {name}")


def evaluate_jet(expr: ExpressionNode, point: Mapping[str, object], order: int,
                 mode: ScalarMode = RATIONAL, chart: Optional[Chart] = None) -> Jet:
    """Jet of the expression at a point.

    Every variable becomes its value at the point plus a formal displacement,
    and the AST is evaluated with jet arithmetic.

    Args:
        expr: parsed expression
        point: value of each chart variable at the base point
        order: truncation order of the result
        mode: rational or float scalars
        chart: variable ordering for the jet; defaults to the point's keys

    Returns:
        Jet of the expression at the point
    """
    if chart is None:
        chart = Chart(tuple(point.keys()))
    cache: Dict[str, Jet] = {}

    def visit(node: ExpressionNode) -> Jet:
        if isinstance(node, Constant):
            if isinstance(node.value, float) and mode.exact:
                raise DecimalInRationalMode(f"decimal literal {node.value!r} requires float mode")
            return Jet.constant(chart, node.value, order, mode)
        if isinstance(node, Variable):
            if node.name not in cache:
                if node.name not in chart.names or node.name not in point:
                    raise UnboundVariable(f"variable {node.name!r} is not bound at the point")
                cache[node.name] = Jet.variable(chart, node.name, point[node.name], order, mode)
            return cache[node.name]
        if isinstance(node, Negation):
            return -visit(node.operand)
        if isinstance(node, Sum):
            return visit(node.left) + visit(node.right)
        if isinstance(node, Product):
            return visit(node.left) * visit(node.right)
        if isinstance(node, Quotient):
            denominator = visit(node.right)
            try:
                return visit(node.left) * denominator.invert()
            except NotInvertible:
                raise DivisionAtPole(f"denominator {print_expression(node.right)} vanishes at the point")
        if isinstance(node, Power):
            base = visit(node.base)
            try:
                return base ** node.exponent
            except NotInvertible:
                raise DivisionAtPole(f"negative power of {print_expression(node.base)} at a zero")
        if isinstance(node, Function):
            if mode.exact:
                raise FunctionNeedsFloatMode(f"{node.name} requires float mode")
            argument = visit(node.argument)
            return argument.compose(_taylor(node.name, argument.constant_term(), order))
        raise TypeError(f"not an expression node: {node!r}")

    return visit(expr)


def evaluate_scalar(expr: ExpressionNode, point: Mapping[str, object], mode: ScalarMode = RATIONAL):
    """Plain pointwise value (the degree-0 coefficient)."""
    return evaluate_jet(expr, point, 0, mode).constant_term()


def sum_nodes(nodes: Sequence[ExpressionNode]) -> ExpressionNode:
    nodes = [n for n in nodes if n != ZERO]
    if not nodes:
        return ZERO
    total = nodes[0]
    for node in nodes[1:]:
        total = Sum(total, node)
    return total
