#!/usr/bin/env python3
"""
Pairs (X, V): construction from problem specs and the regularity and
equation-type diagnostics.

An ode pair is the total derivative X = d_t + sum x[i+1,j] d_x[i,j] + sum F_j d_x[k,j]
with the vertical distribution V spanned by the d_x[k,j].
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from errors import DegeneratePair, OrderExhausted, ProblemFileError, RegularityFailure
from expressions import Constant, ExpressionNode, Variable, evaluate_jet
from jets import Chart, Jet, Scalar, ScalarMode
from linear_algebra import scalar_rank
from problem_files import PairSpec
from vector_fields import (FieldJet, adjoint_chain, bracket_closure, cauchy_characteristic_rank,
                           span_rank)

logger = logging.getLogger(__name__)

ONE = Constant(1)
NULL = Constant(0)


@dataclass(frozen=True)
class PairFields:
    """Coefficient expressions of X and of the V frame over a fixed chart."""

    spec: PairSpec
    chart: Chart
    x_exprs: Tuple[ExpressionNode, ...]
    v_exprs: Tuple[Tuple[ExpressionNode, ...], ...]
    k: int
    m: int

    @property
    def n(self) -> int:
        return self.chart.dimension

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def mode(self) -> ScalarMode:
        return self.spec.mode

    def resolve_point(self, assignment: Optional[Mapping[str, object]] = None) -> Tuple[Scalar, ...]:
        """Point as a tuple in chart order; unassigned coordinates default to 0."""
        assignment = dict(assignment or {})
        unknown = set(assignment) - set(self.chart.names)
        if unknown:
            raise ProblemFileError(f"point assigns unknown variable {sorted(unknown)[0]!r}")
        return tuple(self.mode.coerce(assignment.get(name, 0)) for name in self.chart.names)

    def point_dict(self, point: Tuple[Scalar, ...]) -> Dict[str, Scalar]:
        return dict(zip(self.chart.names, point))

    def _jet(self, expr: ExpressionNode, point: Tuple[Scalar, ...], order: int, cache: Dict) -> Jet:
        if expr in cache:
            return cache[expr]
        if isinstance(expr, Constant):
            jet = Jet.constant(self.chart, expr.value, order, self.mode)
        elif isinstance(expr, Variable) and expr.name in self.chart.names:
            var = self.chart.index(expr.name)
            jet = Jet.variable(self.chart, var, point[var], order, self.mode)
        else:
            jet = evaluate_jet(expr, self.point_dict(point), order, self.mode, self.chart)
        cache[expr] = jet
        return jet

    def realize(self, point: Tuple[Scalar, ...], order: int) -> Tuple[FieldJet, List[FieldJet]]:
        """Jets of X and of the V frame at the point.

        Raises:
            DegeneratePair: X vanishes at the point
        """
        cache: Dict = {}
        x = FieldJet(self.chart, point, [self._jet(e, point, order, cache) for e in self.x_exprs])
        if all(self.mode.is_zero(v) for v in x.value_at_point()):
            raise DegeneratePair("line field X vanishes at the point")
        v = [FieldJet(self.chart, point, [self._jet(e, point, order, cache) for e in column])
             for column in self.v_exprs]
        return x, v


def build_equation_pair(spec: PairSpec) -> PairFields:
    """Total derivative X_F and vertical frame V_F of x^(k+1) = F."""
    if spec.kind not in ('ode', 'geodesic'):
        raise ValueError(f"build_equation_pair needs an ode or geodesic spec, got {spec.kind}")
    k, m = spec.k, spec.m
    chart = Chart(spec.variables)
    x_exprs: List[ExpressionNode] = [ONE]
    for i in range(k):
        x_exprs.extend(Variable(f"x[{i + 1},{j}]") for j in range(1, m + 1))
    x_exprs.extend(spec.F)
    top = [chart.index(f"x[{k},{j}]") for j in range(1, m + 1)]
    v_exprs = tuple(tuple(ONE if var == top[j] else NULL for var in range(chart.dimension))
                    for j in range(m))
    return PairFields(spec, chart, tuple(x_exprs), v_exprs, k, m)


def build_generic_pair(spec: PairSpec) -> PairFields:
    if spec.kind != 'generic':
        raise ValueError(f"build_generic_pair needs a generic spec, got {spec.kind}")
    if len(spec.x_frame) != spec.dim or any(len(c) != spec.dim for c in spec.v_frame):
        raise ValueError("frame expressions do not match the declared dimension")
    return PairFields(spec, Chart(spec.variables), spec.x_frame, spec.v_frame, spec.k, spec.m)


def build_pair(spec: PairSpec) -> PairFields:
    if spec.kind == 'generic':
        return build_generic_pair(spec)
    return build_equation_pair(spec)


@dataclass
class CharacteristicLevel:
    level: int
    rank: int
    expected: int
    contained_in_lower: bool
    matches_candidate: bool

    @property
    def ok(self) -> bool:
        return self.rank == self.expected and self.contained_in_lower and self.matches_candidate


@dataclass
class IntegrabilityLevel:
    level: int
    closed: bool
    order: int
    max_residual_terms: int


@dataclass
class FiltrationReport:
    point: Dict[str, Scalar]
    order: int
    k: int
    m: int
    n: int
    ranks: List[int]
    expected_ranks: List[int]
    g1: List[bool]
    g2: bool
    failure: Optional[str] = None
    characteristics: List[CharacteristicLevel] = field(default_factory=list)
    integrability: List[IntegrabilityLevel] = field(default_factory=list)
    verdict: Optional[str] = None

    @property
    def regular(self) -> bool:
        return all(self.g1) and self.g2


def _filtration_members(x: FieldJet, chains: List[List[FieldJet]], level: int,
                        include_x: bool = True) -> List[FieldJet]:
    members = [x] if include_x else []
    for i in range(level + 1):
        members.extend(chain[i] for chain in chains)
    return members


def regularity_report(pair: PairFields, point: Tuple[Scalar, ...], order: int) -> FiltrationReport:
    """Ranks of V^0 .. V^k at the point and the regularity verdicts."""
    k, m, n = pair.k, pair.m, pair.n
    if order < k + 1:
        raise OrderExhausted(f"regularity needs order >= {k + 1}, got {order}")
    x, v = pair.realize(point, order)
    chains = [adjoint_chain(x, vj, k) for vj in v]
    ranks = [span_rank(_filtration_members(x, chains, i)) for i in range(k + 1)]
    expected = [(i + 1) * m + 1 for i in range(k + 1)]
    g1 = [r == e for r, e in zip(ranks, expected)]
    g2 = ranks[-1] == n
    failure = None
    for i, ok in enumerate(g1):
        if not ok:
            failure = f"G1 fails at level {i}: rank {ranks[i]} (expected {expected[i]})"
            break
    if failure is None and not g2:
        failure = f"G2 fails: rank {ranks[-1]} (expected {n})"
    logger.info(f"Ranks at point: {ranks} (expected {expected})")
    return FiltrationReport(pair.point_dict(point), order, k, m, n, ranks, expected, g1, g2, failure)


def require_regular(pair: PairFields, point: Tuple[Scalar, ...], order: int) -> FiltrationReport:
    report = regularity_report(pair, point, max(order, pair.k + 1))
    if not report.regular:
        raise RegularityFailure(report.failure, report)
    return report


def _value_rank(vectors: List[List[Scalar]], mode: ScalarMode) -> int:
    if not vectors:
        return 0
    return scalar_rank([[v[i] for v in vectors] for i in range(len(vectors[0]))], mode)


def equation_type_report(pair: PairFields, point: Tuple[Scalar, ...], order: int) -> FiltrationReport:
    """Pointwise necessary conditions for being locally of equation type.

    For each i < k - 1 the Cauchy characteristic of V^(i+1) is compared with the
    candidate W^i = span(V, ..., ad^i V); every W^i is tested for bracket
    closure to the available jet order.
    """
    report = require_regular(pair, point, order)
    k, m, mode = pair.k, pair.m, pair.mode
    x, v = pair.realize(point, max(order, k + 1))
    chains = [adjoint_chain(x, vj, k) for vj in v]

    for i in range(k - 1):
        upper = _filtration_members(x, chains, i + 1)
        space = cauchy_characteristic_rank(upper)
        lower = [f.value_at_point() for f in _filtration_members(x, chains, i)]
        candidate = [f.value_at_point() for f in _filtration_members(x, chains, i, include_x=False)]
        contained = _value_rank(lower + space.basis, mode) == _value_rank(lower, mode)
        matches = (_value_rank(candidate + space.basis, mode) == _value_rank(candidate, mode) == space.rank)
        report.characteristics.append(CharacteristicLevel(i, space.rank, (i + 1) * m, contained, matches))

    for i in range(k + 1):
        closure = bracket_closure(_filtration_members(x, chains, i, include_x=False))
        terms = max((len(c.coeffs) for tail in closure.residuals.values() for c in tail), default=0)
        report.integrability.append(IntegrabilityLevel(i, closure.closed, closure.order, terms))

    failures = []
    for level in report.integrability:
        if not level.closed:
            failures.append(f"G3 fails: W^{level.level} not involutive to order {level.order}")
            break
    for level in report.characteristics:
        if not level.ok:
            failures.append(f"G4 fails at level {level.level}: Ch rank {level.rank} "
                            f"(expected {level.expected})")
            break
    if failures:
        report.verdict = '; '.join(failures)
    else:
        report.verdict = ("consistent with equation type at this point to tested order "
                          "(necessary-condition check)")
    logger.info(report.verdict)
    return report


def curvature_oracle(spec: PairSpec, point: Tuple[Scalar, ...]) -> List[List[Scalar]]:
    """Matrix O[j][i] = sum_pq R^j_ipq x[1,p] x[1,q] straight from the Christoffel symbols.

    Row index is the upper index, column the lower one, matching the K matrices.
    """
    if spec.kind != 'geodesic':
        raise ValueError("curvature_oracle needs a geodesic spec")
    m, mode = spec.m, spec.mode
    chart = Chart(spec.variables)
    values = dict(zip(chart.names, point))
    positions = [chart.index(f"x[0,{i + 1}]") for i in range(m)]
    velocity = [values[f"x[1,{p + 1}]"] for p in range(m)]

    gamma = [[[evaluate_jet(spec.gamma[j][p][q], values, 1, mode, chart) for q in range(m)]
              for p in range(m)] for j in range(m)]
    value = [[[g.constant_term() for g in row] for row in plane] for plane in gamma]

    def derivative(j, p, q, i):
        return gamma[j][p][q].partial(positions[i]).constant_term()

    zero = mode.zero()
    oracle = [[zero] * m for _ in range(m)]
    for j in range(m):
        for i in range(m):
            total = zero
            for p in range(m):
                for q in range(m):
                    r_value = derivative(j, p, q, i) - derivative(j, i, p, q)
                    for r in range(m):
                        r_value += value[j][i][r] * value[r][p][q] - value[r][i][p] * value[j][r][q]
                    total += r_value * velocity[p] * velocity[q]
            oracle[j][i] = total
    return oracle
