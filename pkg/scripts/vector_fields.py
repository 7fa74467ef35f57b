#!/usr/bin/env python3
"""
Vector-field germs as jets: Lie brackets, adjoint chains, frame expansions,
pointwise ranks and Cauchy characteristics.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from errors import ChartMismatch, OrderExhausted
from jets import Chart, Jet, Scalar, ScalarMode
from linear_algebra import (jet_solve_columns, scalar_nullspace, scalar_rank)

logger = logging.getLogger(__name__)


class FieldJet:
    """Vector field germ: one coefficient jet per chart direction."""

    __slots__ = ('chart', 'point', 'components', 'mode')

    def __init__(self, chart: Chart, point: Tuple, components: Sequence[Jet]):
        if len(components) != chart.dimension:
            raise ChartMismatch(f"field needs {chart.dimension} components, got {len(components)}")
        self.chart = chart
        self.point = tuple(point)
        order = min(c.order for c in components)
        self.components = tuple(c.truncate(order) for c in components)
        self.mode = components[0].mode

    @property
    def order(self) -> int:
        return self.components[0].order

    @classmethod
    def zero(cls, chart: Chart, point: Tuple, order: int, mode: ScalarMode) -> 'FieldJet':
        return cls(chart, point, [Jet.zero(chart, order, mode) for _ in range(chart.dimension)])

    @classmethod
    def coordinate(cls, chart: Chart, point: Tuple, var: int, order: int, mode: ScalarMode) -> 'FieldJet':
        """The coordinate field d/d(var)."""
        return cls(chart, point, [Jet.constant(chart, 1 if i == var else 0, order, mode)
                                  for i in range(chart.dimension)])

    def _check(self, other: 'FieldJet'):
        if self.chart != other.chart or self.point != other.point:
            raise ChartMismatch("fields live on different charts or points")

    def value_at_point(self) -> List[Scalar]:
        return [c.constant_term() for c in self.components]

    def truncate(self, order: int) -> 'FieldJet':
        if order >= self.order:
            return self
        return FieldJet(self.chart, self.point, [c.truncate(order) for c in self.components])

    def __add__(self, other: 'FieldJet') -> 'FieldJet':
        self._check(other)
        return FieldJet(self.chart, self.point, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: 'FieldJet') -> 'FieldJet':
        self._check(other)
        return FieldJet(self.chart, self.point, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> 'FieldJet':
        return FieldJet(self.chart, self.point, [-a for a in self.components])

    def scale(self, factor) -> 'FieldJet':
        """Multiply by a function (Jet) or a constant."""
        return FieldJet(self.chart, self.point, [c * factor for c in self.components])

    def apply(self, function: Jet) -> Jet:
        """Directional derivative sum_j X^j d_j f."""
        result = None
        for var, coefficient in enumerate(self.components):
            if not coefficient.coeffs:
                continue
            exact_in_var = function.valid is None or function.valid[var] is None
            if exact_in_var and not any(index[var] for index in function.coeffs):
                continue
            term = coefficient * function.partial(var)
            result = term if result is None else result + term
        order = min(self.order, function.order - 1)
        if order < 0:
            raise OrderExhausted("directional derivative of an order-0 jet")
        if result is None:
            return Jet(function.chart, order, {}, function.mode, function.valid)
        return result.truncate(order)

    def is_zero(self, order: Optional[int] = None) -> bool:
        return all(c.is_zero(order) for c in self.components)

    def agrees_with(self, other: 'FieldJet', order: Optional[int] = None) -> bool:
        return all(a.agrees_with(b, order) for a, b in zip(self.components, other.components))

    def embed(self, chart: Chart, point: Tuple, positions: Sequence[int]) -> 'FieldJet':
        """Same field on a larger chart; the new directions get zero components."""
        order = self.order
        wide = [Jet.zero(chart, order, self.mode) for _ in range(chart.dimension)]
        for v, component in enumerate(self.components):
            wide[positions[v]] = component.embed(chart, positions)
        return FieldJet(chart, point, wide)

    def __repr__(self):
        return f"FieldJet(order={self.order}, value={self.value_at_point()})"


def lie_bracket(x: FieldJet, y: FieldJet) -> FieldJet:
    """[X, Y]^i = X(Y^i) - Y(X^i); the order drops by one."""
    x._check(y)
    order = min(x.order, y.order)
    if order < 1:
        raise OrderExhausted("Lie bracket needs order >= 1")
    x, y = x.truncate(order), y.truncate(order)
    return FieldJet(x.chart, x.point, [x.apply(yi) - y.apply(xi)
                                       for xi, yi in zip(x.components, y.components)])


def ad_power(x: FieldJet, y: FieldJet, i: int) -> FieldJet:
    """i-fold bracket ad_X^i Y."""
    result = y
    for _ in range(i):
        result = lie_bracket(x, result)
    return result


def adjoint_chain(x: FieldJet, y: FieldJet, depth: int) -> List[FieldJet]:
    """[Y, ad_X Y, ..., ad_X^depth Y]."""
    chain = [y]
    for _ in range(depth):
        chain.append(lie_bracket(x, chain[-1]))
    return chain


@dataclass
class FrameExpansion:
    frame: List[FieldJet]
    target: FieldJet
    coefficients: List[Jet]

    def recombine(self) -> FieldJet:
        total = None
        for coefficient, member in zip(self.coefficients, self.frame):
            term = member.truncate(coefficient.order).scale(coefficient)
            total = term if total is None else total + term
        return total

    def residual(self) -> FieldJet:
        combined = self.recombine()
        return self.target.truncate(combined.order) - combined


def frame_matrix(frame: Sequence[FieldJet]) -> List[List[Jet]]:
    """Column a holds the components of frame member a."""
    n = frame[0].chart.dimension
    return [[member.components[i] for member in frame] for i in range(n)]


def frame_expand_many(targets: Sequence[FieldJet], frame: Sequence[FieldJet]) -> List[FrameExpansion]:
    """Expand several targets in one frame, sharing the elimination."""
    n = frame[0].chart.dimension
    if len(frame) != n:
        raise ChartMismatch(f"frame has {len(frame)} members for a {n}-dimensional chart")
    rhs = [[target.components[i] for target in targets] for i in range(n)]
    solution = jet_solve_columns(frame_matrix(frame), rhs)
    return [FrameExpansion(list(frame), target, [solution[i][t] for i in range(n)])
            for t, target in enumerate(targets)]


def frame_expand(target: FieldJet, frame: Sequence[FieldJet]) -> FrameExpansion:
    """Coefficients of target in the frame.

    Raises:
        SingularLeadingMatrix: the frame is degenerate at the point
    """
    return frame_expand_many([target], frame)[0]


def span_rank(vectors: Sequence[FieldJet]) -> int:
    """Rank of the values at the point (exact, or tolerance-based in float mode)."""
    if not vectors:
        return 0
    columns = [v.value_at_point() for v in vectors]
    rows = [[column[i] for column in columns] for i in range(len(columns[0]))]
    return scalar_rank(rows, vectors[0].mode)


def _annihilator(values: List[List[Scalar]], n: int, mode: ScalarMode) -> List[List[Scalar]]:
    """Covectors vanishing on the given vectors."""
    return scalar_nullspace(values, mode, width=n) if values else scalar_nullspace([], mode, width=n)


@dataclass
class CharacteristicSpace:
    rank: int
    basis: List[List[Scalar]]
    coefficients: List[List[Scalar]] = field(default_factory=list)


def cauchy_characteristic_rank(spanning: Sequence[FieldJet]) -> CharacteristicSpace:
    """Pointwise Cauchy characteristic of span(spanning).

    Solves for constants a with [sum_s a_s W_s, W_t](p) in span W(p) for all t,
    which at the point reduces to sum_s a_s [W_s, W_t](p) in span W(p).

    Returns:
        rank, a basis of characteristic vectors at the point, and their
        coefficient vectors in the spanning list
    """
    mode = spanning[0].mode
    n = spanning[0].chart.dimension
    r = len(spanning)
    values = [w.value_at_point() for w in spanning]
    covectors = _annihilator(values, n, mode)
    brackets = {}
    for s in range(r):
        for t in range(s + 1, r):
            value = lie_bracket(spanning[s], spanning[t]).value_at_point()
            brackets[(s, t)] = value
            brackets[(t, s)] = [-x for x in value]
    zero_vector = [mode.zero()] * n
    rows = []
    for covector in covectors:
        for t in range(r):
            row = []
            for s in range(r):
                bracket = brackets.get((s, t), zero_vector)
                row.append(sum((c * b for c, b in zip(covector, bracket)), mode.zero()))
            rows.append(row)
    solutions = scalar_nullspace(rows, mode, width=r) if rows else scalar_nullspace([], mode, width=r)
    vectors = [[sum((a[s] * values[s][i] for s in range(r)), mode.zero()) for i in range(n)] for a in solutions]
    if not vectors:
        return CharacteristicSpace(0, [], [])
    rows_of_vectors = [[v[i] for v in vectors] for i in range(n)]
    rank = scalar_rank(rows_of_vectors, mode)
    return CharacteristicSpace(rank, vectors, solutions)


@dataclass
class ClosureReport:
    """Bracket closure of a distribution at the point, to the available order."""

    rank: int
    closed: bool
    order: int
    residuals: Dict[Tuple[int, int], List[Jet]]


def complete_with_coordinates(fields: Sequence[FieldJet]) -> List[int]:
    """Coordinate directions that complete the fields to a frame at the point."""
    chart, point, mode = fields[0].chart, fields[0].point, fields[0].mode
    chosen: List[int] = []
    current = list(fields)
    rank = span_rank(current)
    for var in range(chart.dimension):
        if rank == chart.dimension:
            break
        candidate = current + [FieldJet.coordinate(chart, point, var, fields[0].order, mode)]
        new_rank = span_rank(candidate)
        if new_rank > rank:
            chosen.append(var)
            current, rank = candidate, new_rank
    return chosen


def bracket_closure(fields: Sequence[FieldJet]) -> ClosureReport:
    """Test [W_a, W_b] in span(W) as jets, a necessary condition for integrability.

    The fields must be linearly independent at the point. Brackets are
    expanded in the fields completed by coordinate directions; the
    coefficients on the completing directions are the residuals.
    """
    fields = list(fields)
    rank = span_rank(fields)
    if rank != len(fields):
        raise ValueError("bracket_closure needs fields independent at the point")
    chart, point, mode = fields[0].chart, fields[0].point, fields[0].mode
    extra = complete_with_coordinates(fields)
    order = min(f.order for f in fields) - 1
    frame = [f.truncate(order) for f in fields] + \
        [FieldJet.coordinate(chart, point, v, order, mode) for v in extra]
    pairs = [(a, b) for a in range(len(fields)) for b in range(a + 1, len(fields))]
    if not pairs:
        return ClosureReport(rank, True, order, {})
    brackets = [lie_bracket(fields[a], fields[b]) for a, b in pairs]
    expansions = frame_expand_many(brackets, frame)
    residuals = {}
    closed = True
    for pair, expansion in zip(pairs, expansions):
        tail = expansion.coefficients[len(fields):]
        residuals[pair] = tail
        if not all(c.is_zero() for c in tail):
            closed = False
    logger.debug(f"bracket closure of {len(fields)} fields at order {order}: closed={closed}")
    return ClosureReport(rank, closed, order, residuals)
