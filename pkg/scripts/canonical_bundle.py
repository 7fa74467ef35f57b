#!/usr/bin/env python3
"""
Canonical frame on the bundle B(X, V) and its structure functions.

The bundle chart extends the base chart by fiber coordinates u0 = 1/F0,
u1 = F1/F0 and the m x m matrix G. In these coordinates every fundamental
field and the lifted X are polynomial:

    F^0    = -u0 d/du0 - u1 d/du1
    F^1    = d/du1
    G^p_q  = sum_j G^j_q d/dG^j_p
    X      = u0 X_base + 2 u0 u1 d/du0 + u1^2 d/du1 - k u1 sum G^l_p d/dG^l_p

Everything is evaluated at the section point u0 = 1, u1 = 0, G = Id over the
base point.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from errors import GatingViolation, OrderExhausted, SingularLeadingMatrix
from jets import Chart, Jet, Scalar, ScalarMode
from linear_algebra import JetMatrix, jet_linear_solve, jet_matrix_inverse, scalar_inverse, scalar_rank
from vector_fields import FieldJet, adjoint_chain, frame_expand_many, lie_bracket, span_rank

logger = logging.getLogger(__name__)

GATING_RANGE = "k>2 or k=2 and m>1"


def check_gating(k: int, m: int):
    if not (k > 2 or (k == 2 and m > 1)):
        raise GatingViolation(f"canonical frame needs {GATING_RANGE}; got k={k}, m={m}")


def top_condition_level(m: int) -> int:
    """Bracket level of the F-normalizing condition: V^2 for m > 1, V^3 for m = 1."""
    return 2 if m > 1 else 3


def bundle_base_order(k: int, m: int, report_order: int) -> int:
    """Order of the lifted X and reference frame for structure functions at report_order."""
    return report_order + k + 3 + max(top_condition_level(m) + 1, k)


def required_fiber_cap(k: int, m: int, report_order: int) -> int:
    """Fiber degree consumed by the adjoint chains of the lifted X, which carries a factor u0."""
    return report_order + k + top_condition_level(m) + 2


@dataclass(frozen=True)
class BundleChart:
    base: Chart
    chart: Chart
    k: int
    m: int
    base_point: Tuple[Scalar, ...]
    fiber_cap: int
    mode: ScalarMode

    @property
    def n(self) -> int:
        return self.base.dimension

    @property
    def u0(self) -> int:
        return self.n

    @property
    def u1(self) -> int:
        return self.n + 1

    def g(self, a: int, b: int) -> int:
        """Index of the fiber coordinate G^a_b (0-based a, b)."""
        return self.n + 2 + a * self.m + b

    @property
    def section_point(self) -> Tuple[Scalar, ...]:
        one, zero = self.mode.one(), self.mode.zero()
        fiber = [one, zero] + [one if a == b else zero for a in range(self.m) for b in range(self.m)]
        return tuple(self.base_point) + tuple(fiber)

    def coordinate(self, var: int, order: int) -> Jet:
        return Jet.variable(self.chart, var, self.section_point[var], order, self.mode)

    def lift(self, base_field: FieldJet, order: Optional[int] = None) -> FieldJet:
        if order is not None:
            base_field = base_field.truncate(order)
        return base_field.embed(self.chart, self.section_point, list(range(self.n)))

    def field(self, components: Dict[int, Jet], order: int) -> FieldJet:
        comps = [components.get(v, Jet.zero(self.chart, order, self.mode)) for v in range(self.chart.dimension)]
        return FieldJet(self.chart, self.section_point, comps)


def build_bundle_chart(base: Chart, base_point: Tuple[Scalar, ...], k: int, m: int, mode: ScalarMode,
                       fiber_cap: Optional[int] = None, report_order: int = 0) -> BundleChart:
    """Chart of B(X, V) over the base chart. Without fiber_cap the cap is sized for report_order."""
    check_gating(k, m)
    if fiber_cap is None:
        fiber_cap = required_fiber_cap(k, m, report_order)
    fiber = ('u0', 'u1') + tuple(f"G[{a + 1},{b + 1}]" for a in range(m) for b in range(m))
    names = base.names + fiber
    limits = (None,) * base.dimension + (fiber_cap,) * len(fiber)
    chart = Chart(names, limits)
    logger.info(f"Bundle chart: {base.dimension} base + {len(fiber)} fiber variables, fiber cap {fiber_cap}")
    return BundleChart(base, chart, k, m, tuple(base_point), fiber_cap, mode)


def g_name(p: int, q: int) -> str:
    return f"G^{p + 1}_{q + 1}"


def v_name(i: int, j: int) -> str:
    return f"V^{i}_{j + 1}"


def fundamental_fields(bc: BundleChart, order: int) -> Dict[str, FieldJet]:
    """G^p_q, F^0, F^1 as polynomial fields on the bundle chart."""
    m = bc.m
    fields: Dict[str, FieldJet] = {}
    for p in range(m):
        for q in range(m):
            fields[g_name(p, q)] = bc.field({bc.g(j, p): bc.coordinate(bc.g(j, q), order) for j in range(m)}, order)
    fields['F^0'] = bc.field({bc.u0: -bc.coordinate(bc.u0, order), bc.u1: -bc.coordinate(bc.u1, order)}, order)
    fields['F^1'] = bc.field({bc.u1: Jet.constant(bc.chart, 1, order, bc.mode)}, order)
    return fields


def euler_field(bc: BundleChart, order: int) -> FieldJet:
    """sum_{l,p} G^l_p d/dG^l_p, equal to sum_j G^j_j."""
    return bc.field({bc.g(a, b): bc.coordinate(bc.g(a, b), order)
                     for a in range(bc.m) for b in range(bc.m)}, order)


def lift_canonical_X(bc: BundleChart, x_projective: FieldJet, order: int) -> FieldJet:
    """Canonical X on the bundle from a projective field on the base."""
    lifted = bc.lift(x_projective, order)
    u0 = bc.coordinate(bc.u0, order)
    u1 = bc.coordinate(bc.u1, order)
    components = {i: u0 * lifted.components[i] for i in range(bc.n)}
    components[bc.u0] = u0 * u1 * 2
    components[bc.u1] = u1 * u1
    for a in range(bc.m):
        for b in range(bc.m):
            components[bc.g(a, b)] = u1 * bc.coordinate(bc.g(a, b), order) * (-bc.k)
    return bc.field(components, order)


def reference_frame(bc: BundleChart, v_normal: Sequence[FieldJet], order: int) -> List[FieldJet]:
    """R_j = sum_p G^p_j V_p: the horizontal part of V^0_j."""
    lifted = [bc.lift(v, order) for v in v_normal]
    frame = []
    for j in range(bc.m):
        components = {}
        for i in range(bc.n):
            total = None
            for p in range(bc.m):
                term = bc.coordinate(bc.g(p, j), order) * lifted[p].components[i]
                total = term if total is None else total + term
            components[i] = total
        frame.append(bc.field(components, order))
    return frame


# ----------------------------------------------------------------------
# Normalization conditions

Row = Tuple


def _row_level(row: Row) -> int:
    return {'w2': 1, 'w3': 1, 'w4': 2, 'w4b': 3}[row[0]]


def row_label(row: Row) -> str:
    kind, *idx = row
    one = [i + 1 for i in idx]
    if kind == 'w2':
        return f"C^1{one[2]}_{one[0]}{one[1]}1"
    if kind == 'w3':
        return f"sum_p C^1p_p{one[0]}0"
    level = 2 if kind == 'w4' else 3
    return f"sum_q C^{level}q_{one[0]}q{level}"


@dataclass
class NormalizationSolution:
    beta: List[List[List[Jet]]]
    gamma0: List[Jet]
    gamma1: List[Jet]
    x_beta: List[Jet]
    v0: List[FieldJet]
    linear_map: List[List[Scalar]]
    row_labels: List[str]
    column_labels: List[str]
    variant: str
    gamma1_decoupled: bool
    verification: Dict[str, Dict[str, object]]
    homogeneous: bool


class _ConditionSystem:
    """Evaluates the normalization conditions for a given ansatz of V^0."""

    def __init__(self, bc: BundleChart, x_bold: FieldJet, reference: List[FieldJet],
                 fundamentals: Dict[str, FieldJet]):
        self.bc = bc
        self.x_bold = x_bold
        self.reference = reference
        self.fundamentals = fundamentals
        self._inverse: Dict[int, JetMatrix] = {}
        m = bc.m
        self.step1 = [('w2', p, q, r) for p in range(m) for q in range(m) for r in range(m)]
        self.step1 += [('w4', p) if m > 1 else ('w4b', p) for p in range(m)]
        self.step2 = [('w3', q) for q in range(m)]
        self.columns = ([('beta', j, s, t) for j in range(m) for s in range(m) for t in range(m)]
                        + [('gamma0', j) for j in range(m)] + [('gamma1', j) for j in range(m)])

    def base_inverse(self, order: int) -> JetMatrix:
        """Inverse of the base-component matrix of (X, A^0, ..., A^k), A^i = ad^i_X R."""
        if order not in self._inverse:
            bc = self.bc
            depth_order = order + bc.k
            x = self.x_bold.truncate(depth_order)
            chains = [adjoint_chain(x, r.truncate(depth_order), bc.k) for r in self.reference]
            members = [x] + [chains[j][i] for i in range(bc.k + 1) for j in range(bc.m)]
            matrix = [[member.components[row].truncate(order) for member in members] for row in range(bc.n)]
            self._inverse[order] = jet_matrix_inverse(matrix)
            logger.debug(f"base-component inverse computed at order {order}")
        return self._inverse[order]

    def ansatz(self, unknowns: Dict[Tuple, Jet], order: int) -> List[FieldJet]:
        """V^0_j = R_j + <beta_j, G> + gamma_j0 F^0 + gamma_j1 F^1."""
        bc, m = self.bc, self.bc.m
        fields = []
        for j in range(m):
            total = self.reference[j].truncate(order)
            for s in range(m):
                for t in range(m):
                    coefficient = unknowns.get(('beta', j, s, t))
                    if coefficient is not None and coefficient.coeffs:
                        total = total + self.fundamentals[g_name(t, s)].truncate(order).scale(coefficient)
            for name, key in (('F^0', 'gamma0'), ('F^1', 'gamma1')):
                coefficient = unknowns.get((key, j))
                if coefficient is not None and coefficient.coeffs:
                    total = total + self.fundamentals[name].truncate(order).scale(coefficient)
            fields.append(total)
        return fields

    def evaluate(self, v0: List[FieldJet], rows: Sequence[Row],
                 inverse_at: Callable[[int], JetMatrix]) -> Dict[Row, Jet]:
        """Condition values: V-coefficients of [V^0_p, V^i_q] read off base components."""
        bc, m, n = self.bc, self.bc.m, self.bc.n
        depth = max(_row_level(row) for row in rows)
        x = self.x_bold.truncate(v0[0].order)
        chains = [adjoint_chain(x, v, depth) for v in v0]
        brackets: Dict[Tuple[int, int, int], FieldJet] = {}

        def bracket(p, q, level):
            key = (p, q, level)
            if key not in brackets:
                brackets[key] = lie_bracket(v0[p], chains[q][level])
            return brackets[key]

        def coefficient(b: FieldJet, index: int) -> Jet:
            order = b.order
            if all(not b.components[s].coeffs for s in range(n)):
                return Jet.zero(bc.chart, order, bc.mode)
            inverse = inverse_at(order)
            total = None
            for s in range(n):
                if b.components[s].coeffs and inverse[index][s].coeffs:
                    term = inverse[index][s] * b.components[s]
                    total = term if total is None else total + term
            return total.truncate(order) if total is not None else Jet.zero(bc.chart, order, bc.mode)

        values = {}
        for row in rows:
            kind = row[0]
            if kind == 'w2':
                _, p, q, r = row
                values[row] = coefficient(bracket(p, q, 1), 1 + m + r)
            elif kind == 'w3':
                _, q = row
                parts = [coefficient(bracket(p, q, 1), 1 + p) for p in range(m)]
                values[row] = _sum(parts)
            else:
                _, p = row
                level = _row_level(row)
                parts = [coefficient(bracket(p, q, level), 1 + level * m + q) for q in range(m)]
                values[row] = _sum(parts)
        return values

    def trial_columns(self, columns: Sequence[Tuple], rows: Sequence[Row], known: Dict[Tuple, Jet],
                      order: int, target: int) -> JetMatrix:
        """Coefficient functions of the given unknowns in the rows, as jets.

        The rows are affine in each unknown modulo (X, G, F), so setting one
        unknown to the constant 1 isolates its coefficient.
        """
        chart, mode = self.bc.chart, self.bc.mode
        baseline = self.evaluate(self.ansatz(known, order), rows, self.base_inverse)
        matrix = [[None] * len(columns) for _ in rows]
        for c, column in enumerate(columns):
            trial = dict(known)
            trial[column] = Jet.constant(chart, 1, order, mode)
            values = self.evaluate(self.ansatz(trial, order), rows, self.base_inverse)
            for r, row in enumerate(rows):
                matrix[r][c] = (values[row] - baseline[row]).truncate(target)
        logger.debug(f"evaluated {len(columns)} coefficient column(s) at order {target}")
        return matrix

    def linear_map(self) -> Tuple[List[List[Scalar]], List[Row]]:
        """Constant coefficients of the conditions in the unknowns, from constant trial unknowns."""
        bc = self.bc
        rows = self.step1 + self.step2
        order = max(_row_level(row) for row in rows) + 1
        inverse = self.base_inverse(0)

        def at(order_needed):
            return [[entry.truncate(0) for entry in row] for row in inverse]

        baseline = self.evaluate(self.ansatz({}, order), rows, at)
        matrix = [[bc.mode.zero()] * len(self.columns) for _ in rows]
        for c, column in enumerate(self.columns):
            trial = {column: Jet.constant(bc.chart, 1, order, bc.mode)}
            values = self.evaluate(self.ansatz(trial, order), rows, at)
            for r, row in enumerate(rows):
                matrix[r][c] = values[row].constant_term() - baseline[row].constant_term()
        return matrix, rows


def _sum(parts: Sequence[Jet]) -> Jet:
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def _index_variant(matrix, rows, columns, m: int, mode: ScalarMode) -> str:
    """Which index placement of the gamma_0 terms the computed first condition realizes."""
    bracket_ok, displayed_ok = True, True
    for r_index, row in enumerate(rows):
        if row[0] != 'w2':
            continue
        _, p, q, r = row
        for c_index, column in enumerate(columns):
            if column[0] != 'gamma0':
                continue
            j = column[1]
            value = matrix[r_index][c_index]
            bracket = -((1 if (j == p and r == q) else 0) + (1 if (j == q and r == p) else 0))
            displayed = -((1 if (j == p and r == p) else 0) + (1 if (j == q and r == q) else 0))
            bracket_ok &= mode.equal(value, bracket)
            displayed_ok &= mode.equal(value, displayed)
    if bracket_ok and displayed_ok:
        return 'both'
    if bracket_ok:
        return 'bracket'
    if displayed_ok:
        return 'displayed'
    return 'neither'


def solve_normalization_system(bc: BundleChart, x_bold: FieldJet, v_normal: Sequence[FieldJet],
                               report_order: int) -> NormalizationSolution:
    """beta, gamma_0 from the first conditions, then gamma_1, and the assembled V^0.

    All condition values are frame coefficients of computed brackets. The
    coefficients of the unknowns are read off with constant trial unknowns:
    at order 0 for the reported linear map, as jets for the solve.
    """
    k, m, mode = bc.k, bc.m, bc.mode
    r = report_order
    reference_order = bundle_base_order(k, m, r)
    if x_bold.order < reference_order or min(v.order for v in v_normal) < reference_order:
        raise OrderExhausted(f"bundle normalization needs base jets of order {reference_order}")
    fundamentals = fundamental_fields(bc, reference_order)
    reference = reference_frame(bc, v_normal, reference_order)
    system = _ConditionSystem(bc, x_bold, reference, fundamentals)

    matrix, rows = system.linear_map()
    columns = system.columns
    n1 = len(system.step1)
    first_cols = [c for c, col in enumerate(columns) if col[0] in ('beta', 'gamma0')]
    gamma1_cols = [c for c, col in enumerate(columns) if col[0] == 'gamma1']
    m1 = [[matrix[i][c] for c in first_cols] for i in range(n1)]
    m2 = [[matrix[n1 + i][c] for c in gamma1_cols] for i in range(len(system.step2))]
    if scalar_rank(m1, mode) < len(m1) or scalar_rank(m2, mode) < len(m2):
        raise SingularLeadingMatrix("normalization system is singular at the section point")
    decoupled = all(mode.is_zero(matrix[i][c]) for i in range(n1) for c in gamma1_cols)

    # step 1: beta and gamma_0
    order1 = r + k + 3
    base = system.ansatz({}, reference_order)
    c1 = system.evaluate(base, system.step1, system.base_inverse)
    c1 = [c1[row].truncate(order1) for row in system.step1]
    first_columns = [columns[c] for c in first_cols]
    if all(value.is_zero() for value in c1):
        first = [Jet.zero(bc.chart, order1, mode) for _ in first_columns]
    else:
        coefficients = system.trial_columns(first_columns, system.step1, {}, reference_order, order1)
        first = jet_linear_solve(coefficients, [-value for value in c1])
    unknowns = {column: value for column, value in zip(first_columns, first)}
    logger.info(f"Solved beta and gamma_0 to order {first[0].order}")

    # step 2: gamma_1 from the residual that already contains X(beta)
    c2 = system.evaluate(system.ansatz(unknowns, order1), system.step2, system.base_inverse)
    c2 = [c2[row] for row in system.step2]
    gamma1_columns = [columns[c] for c in gamma1_cols]
    order2 = min(value.order for value in c2)
    if all(value.is_zero() for value in c2):
        second = [Jet.zero(bc.chart, order2, mode) for _ in gamma1_columns]
    else:
        coefficients = system.trial_columns(gamma1_columns, system.step2, unknowns, order1, order2)
        second = jet_linear_solve(coefficients, [-value for value in c2])
    for column, value in zip(gamma1_columns, second):
        unknowns[column] = value
    logger.info(f"Solved gamma_1 to order {second[0].order}")

    final_order = r + k + 1
    final = {key: value.truncate(final_order) for key, value in unknowns.items()}
    v0 = system.ansatz(final, final_order)

    x_trunc = x_bold.truncate(order1)
    x_beta = [_sum([x_trunc.apply(unknowns[('beta', q, p, p)]) for p in range(m)]) for q in range(m)]

    verification = {}
    values = system.evaluate(v0, system.step1 + system.step2, system.base_inverse)
    groups: Dict[str, List[Jet]] = {}
    for row, value in values.items():
        groups.setdefault(row[0], []).append(value)
    for kind, jets in groups.items():
        verification[kind] = {'holds': all(j.is_zero() for j in jets), 'order': min(j.order for j in jets)}

    euler = euler_field(bc, order1)
    homogeneous = True
    for value in unknowns.values():
        if value.order < 1:
            continue
        if not euler.apply(value).agrees_with(value.truncate(value.order - 1)):
            homogeneous = False
            break

    beta = [[[final[('beta', j, s, t)] for t in range(m)] for s in range(m)] for j in range(m)]
    return NormalizationSolution(
        beta=beta,
        gamma0=[final[('gamma0', j)] for j in range(m)],
        gamma1=[final[('gamma1', j)] for j in range(m)],
        x_beta=[xb.truncate(final_order) for xb in x_beta],
        v0=v0,
        linear_map=matrix,
        row_labels=[row_label(row) for row in rows],
        column_labels=[_column_label(col) for col in columns],
        variant=_index_variant(matrix, rows, columns, m, mode),
        gamma1_decoupled=decoupled,
        verification=verification,
        homogeneous=homogeneous,
    )


def _column_label(column: Tuple) -> str:
    if column[0] == 'beta':
        _, j, s, t = column
        return f"frame.beta[{j + 1}][{s + 1}][{t + 1}]"
    return f"frame.{column[0]}[{column[1] + 1}]"


# ----------------------------------------------------------------------
# Canonical frame and structure functions

@dataclass
class CanonicalFrame:
    names: List[str]
    fields: List[FieldJet]
    chart: BundleChart
    order: int
    projection_matches: bool


def canonical_frame(bc: BundleChart, x_bold: FieldJet, solution: NormalizationSolution,
                    v_normal: Sequence[FieldJet], report_order: int) -> CanonicalFrame:
    """(G^p_q, F^0, F^1, X, V^0, ..., V^k) with V^i = ad^i_X V^0, truncated for one more bracket."""
    k, m = bc.k, bc.m
    order = report_order + 1
    fundamentals = fundamental_fields(bc, order)
    names = [g_name(p, q) for p in range(m) for q in range(m)] + ['F^0', 'F^1', 'X']
    fields = [fundamentals[name] for name in names[:-1]] + [x_bold.truncate(order)]
    x = x_bold.truncate(solution.v0[0].order)
    chains = [adjoint_chain(x, v, k) for v in solution.v0]
    for i in range(k + 1):
        for j in range(m):
            names.append(v_name(i, j))
            fields.append(chains[j][i].truncate(order))
    if span_rank(fields) != len(fields):
        raise SingularLeadingMatrix("canonical frame is degenerate at the section point")

    projection_matches = all(
        bc.mode.equal(solution.v0[j].components[i].constant_term(), v_normal[j].components[i].constant_term())
        for j in range(m) for i in range(bc.n))
    return CanonicalFrame(names, fields, bc, report_order, projection_matches)


@dataclass
class StructureReport:
    names: List[str]
    order: int
    table: Dict[Tuple[str, str], Dict[str, Jet]]
    flags: Dict[str, bool]
    w: List[List[List[Jet]]]
    flat: bool
    jacobi: Optional[bool] = None
    cartan: Optional[Dict[str, object]] = None
    failures: List[str] = field(default_factory=list)


def _expected_relations(k: int, m: int) -> Dict[str, Dict[Tuple[str, str], Dict[str, int]]]:
    delta = lambda a, b: 1 if a == b else 0
    groups: Dict[str, Dict[Tuple[str, str], Dict[str, int]]] = {
        'structure_0': {}, 'structure_1': {}, 'structure_2': {}, 'adjoint_chain': {}}
    g_names = [(p, q) for p in range(m) for q in range(m)]
    for p, q in g_names:
        for s, t in g_names:
            if (p, q) >= (s, t):
                continue
            value = {}
            if delta(p, t):
                value[g_name(s, q)] = value.get(g_name(s, q), 0) + 1
            if delta(s, q):
                value[g_name(p, t)] = value.get(g_name(p, t), 0) - 1
            groups['structure_0'][(g_name(p, q), g_name(s, t))] = {c: v for c, v in value.items() if v}
        groups['structure_0'][(g_name(p, q), 'F^0')] = {}
        groups['structure_0'][(g_name(p, q), 'F^1')] = {}
        groups['structure_1'][(g_name(p, q), 'X')] = {}
        for i in range(k + 1):
            for j in range(m):
                groups['structure_2'][(g_name(p, q), v_name(i, j))] = {v_name(i, q): 1} if p == j else {}
    groups['structure_0'][('F^0', 'F^1')] = {'F^1': 1}
    groups['structure_1'][('F^0', 'X')] = {'X': -1}
    f1x = {'F^0': -2}
    for j in range(m):
        f1x[g_name(j, j)] = -k
    groups['structure_1'][('F^1', 'X')] = f1x
    for i in range(k + 1):
        for j in range(m):
            groups['structure_2'][('F^0', v_name(i, j))] = {v_name(i, j): -i} if i else {}
            groups['structure_2'][('F^1', v_name(i, j))] = {v_name(i - 1, j): i * (i - 1 - k)} if i else {}
            if i < k:
                groups['adjoint_chain'][('X', v_name(i, j))] = {v_name(i + 1, j): 1}
    return groups


def _matches(entry: Dict[str, Jet], expected: Dict[str, int], order: int, mode: ScalarMode) -> bool:
    for name, jet in entry.items():
        target = expected.get(name, 0)
        if not mode.equal(jet.constant_term(), mode.coerce(target)) or not jet.is_constant(order):
            return False
    for name, value in expected.items():
        if name not in entry and value != 0:
            return False
    return True


def structure_functions(frame: CanonicalFrame) -> StructureReport:
    """Expand every [E_a, E_b] in the frame; verify the structure relations and flatness."""
    bc, names, fields = frame.chart, frame.names, frame.fields
    k, m, mode = bc.k, bc.m, bc.mode
    order = frame.order
    pairs = [(a, b) for a in range(len(fields)) for b in range(a + 1, len(fields))]
    logger.info(f"Computing {len(pairs)} brackets of the canonical frame at order {order}")
    brackets = [lie_bracket(fields[a], fields[b]) for a, b in pairs]
    expansions = frame_expand_many(brackets, [f.truncate(order) for f in fields])

    table: Dict[Tuple[str, str], Dict[str, Jet]] = {}
    for (a, b), expansion in zip(pairs, expansions):
        entry = {names[c]: coefficient for c, coefficient in enumerate(expansion.coefficients)
                 if not coefficient.is_zero()}
        table[(names[a], names[b])] = entry

    flags = {}
    failures = []
    for group, relations in _expected_relations(k, m).items():
        ok = True
        for pair_names, expected in relations.items():
            if not _matches(table[pair_names], expected, order, mode):
                ok = False
                failures.append(f"{group}: [{pair_names[0]}, {pair_names[1]}]")
        flags[group] = ok

    w = []
    for i in range(k + 1):
        block = []
        for l in range(m):
            row = []
            for j in range(m):
                entry = table[('X', v_name(k, j))]
                row.append(entry.get(v_name(i, l), Jet.zero(bc.chart, order, mode)))
            block.append(row)
        w.append(block)

    constant = all(jet.is_constant(order) for entry in table.values() for jet in entry.values())
    w_zero = all(jet.is_zero() for block in w for row in block for jet in row)
    flat = constant and w_zero

    report = StructureReport(names, order, table, flags, w, flat, failures=failures)
    report.jacobi = _jacobi_on_constants(report, mode)
    return report


def constant_tensor(report: StructureReport, mode: ScalarMode) -> List[List[List[Scalar]]]:
    """c[z][x][y] = constant term of the E_z coefficient of [E_x, E_y]."""
    names = report.names
    size = len(names)
    index = {name: i for i, name in enumerate(names)}
    zero = mode.zero()
    c = [[[zero] * size for _ in range(size)] for _ in range(size)]
    for (a, b), entry in report.table.items():
        x, y = index[a], index[b]
        for name, jet in entry.items():
            value = jet.constant_term()
            c[index[name]][x][y] = value
            c[index[name]][y][x] = -value
    return c


def _jacobi_on_constants(report: StructureReport, mode: ScalarMode) -> bool:
    c = constant_tensor(report, mode)
    size = len(report.names)
    nonzero = [[[z for z in range(size) if c[z][x][y] != 0] for y in range(size)] for x in range(size)]
    for a in range(size):
        for b in range(a + 1, size):
            for d in range(b + 1, size):
                total = [mode.zero()] * size
                for x, y, z in ((a, b, d), (b, d, a), (d, a, b)):
                    for w_index in nonzero[x][y]:
                        coefficient = c[w_index][x][y]
                        for out in nonzero[w_index][z]:
                            total[out] += coefficient * c[out][w_index][z]
                if not all(mode.is_zero(t) for t in total):
                    return False
    return True


# ----------------------------------------------------------------------
# Cartan connection

def _basis_change(report: StructureReport, k: int, m: int, mode: ScalarMode,
                  divided: bool) -> Tuple[List[str], List[List[Scalar]]]:
    """Columns of P hold (H, Y, X, W or V, G) in the old frame coordinates."""
    old = {name: i for i, name in enumerate(report.names)}
    size = len(report.names)
    zero, one = mode.zero(), mode.one()
    columns = []
    h = [zero] * size
    h[old['F^0']] = mode.coerce(2)
    for j in range(m):
        h[old[g_name(j, j)]] = mode.coerce(k)
    columns.append(h)
    for name in ('F^1', 'X'):
        column = [zero] * size
        column[old[name]] = one
        columns.append(column)
    new_names = ['H', 'Y', 'X']
    for i in range(k + 1):
        for j in range(m):
            column = [zero] * size
            factor = Fraction(1, math.factorial(i)) if divided else Fraction(1)
            column[old[v_name(i, j)]] = mode.coerce(factor)
            columns.append(column)
            new_names.append(f"W^{i}_{j + 1}" if divided else v_name(i, j))
    for p in range(m):
        for q in range(m):
            column = [zero] * size
            column[old[g_name(p, q)]] = one
            columns.append(column)
            new_names.append(g_name(p, q))
    p_matrix = [[columns[c][r] for c in range(size)] for r in range(size)]
    return new_names, p_matrix


def _transform(c_old, p_matrix, mode: ScalarMode):
    size = len(p_matrix)
    inverse = scalar_inverse(p_matrix, mode)
    support = [[x for x in range(size) if p_matrix[x][a] != 0] for a in range(size)]
    c_new = [[[mode.zero()] * size for _ in range(size)] for _ in range(size)]
    for a in range(size):
        for b in range(size):
            if a == b:
                continue
            vector = [mode.zero()] * size
            for x in support[a]:
                for y in support[b]:
                    factor = p_matrix[x][a] * p_matrix[y][b]
                    for z in range(size):
                        if c_old[z][x][y] != 0:
                            vector[z] += factor * c_old[z][x][y]
            for c in range(size):
                c_new[c][a][b] = sum((inverse[c][z] * vector[z] for z in range(size) if vector[z] != 0),
                                     mode.zero())
    return c_new


def model_constants(k: int, m: int, mode: ScalarMode) -> Dict[Tuple[str, str], Dict[str, Scalar]]:
    """Brackets of the model algebra sl(2) + (translations + gl(m)) in the basis (H, Y, X, W, G)."""
    relations: Dict[Tuple[str, str], Dict[str, Scalar]] = {}

    def put(a, b, c, value):
        if value:
            relations.setdefault((a, b), {})[c] = mode.coerce(value)
            relations.setdefault((b, a), {})[c] = mode.coerce(-value)

    put('X', 'Y', 'H', 1)
    put('H', 'X', 'X', -2)
    put('H', 'Y', 'Y', 2)
    for i in range(k + 1):
        for j in range(m):
            w = f"W^{i}_{j + 1}"
            if i < k:
                put('X', w, f"W^{i + 1}_{j + 1}", i + 1)
            if i > 0:
                put('Y', w, f"W^{i - 1}_{j + 1}", -(k - i + 1))
            put('H', w, w, k - 2 * i)
            for p in range(m):
                for q in range(m):
                    if p == j:
                        put(g_name(p, q), w, f"W^{i}_{q + 1}", 1)
    for p in range(m):
        for q in range(m):
            for s in range(m):
                for t in range(m):
                    if (p, q) >= (s, t):
                        continue
                    if p == t:
                        put(g_name(p, q), g_name(s, t), g_name(s, q), 1)
                    if s == q:
                        put(g_name(p, q), g_name(s, t), g_name(p, t), -1)
    return relations


def cartan_report(report: StructureReport, k: int, m: int, mode: ScalarMode) -> Dict[str, object]:
    """Constants in the (H, Y, X, W, G) basis against the model algebra, plus the coframe."""
    c_old = constant_tensor(report, mode)
    names, p_matrix = _basis_change(report, k, m, mode, divided=True)
    c_new = _transform(c_old, p_matrix, mode)
    model = model_constants(k, m, mode)
    size = len(names)

    constants: Dict[Tuple[str, str], Dict[str, Scalar]] = {}
    residuals: Dict[Tuple[str, str], Dict[str, Scalar]] = {}
    for a in range(size):
        for b in range(a + 1, size):
            computed = {names[c]: c_new[c][a][b] for c in range(size) if not mode.is_zero(c_new[c][a][b])}
            if computed:
                constants[(names[a], names[b])] = computed
            expected = model.get((names[a], names[b]), {})
            diff = {}
            for name in set(computed) | set(expected):
                value = computed.get(name, mode.zero()) - expected.get(name, mode.zero())
                if not mode.is_zero(value):
                    diff[name] = value
            if diff:
                residuals[(names[a], names[b])] = diff

    h_index = names.index('H')
    weights = []
    for i in range(k + 1):
        w_index = names.index(f"W^{i}_1")
        weights.append({'level': i, 'computed': c_new[w_index][h_index][w_index],
                        'model': mode.coerce(k - 2 * i), 'trace_free': mode.coerce(-2 * i)})

    coframe_names, p2 = _basis_change(report, k, m, mode, divided=False)
    c_frame = _transform(c_old, p2, mode)
    labels = ['coframe.alpha', 'coframe.beta', 'coframe.gamma']
    labels += [f"coframe.theta[{i}][{j + 1}]" for i in range(k + 1) for j in range(m)]
    labels += [f"coframe.omega[{p + 1}][{q + 1}]" for p in range(m) for q in range(m)]
    coframe = {}
    for c, label in enumerate(labels):
        entries = []
        for a in range(size):
            for b in range(a + 1, size):
                value = c_frame[c][a][b]
                if not mode.is_zero(value):
                    entries.append({'pair': [coframe_names[a], coframe_names[b]], 'value': -value})
        coframe[label] = entries

    return {
        'basis': names,
        'constants': constants,
        'residuals': residuals,
        'cartan_flat': not residuals,
        'h_weights': weights,
        'coframe': coframe,
    }


@dataclass
class BundleResult:
    chart: BundleChart
    solution: NormalizationSolution
    frame: CanonicalFrame
    structure: StructureReport
    audit: List[Dict[str, object]]


def run_canonical_bundle(bc: BundleChart, x_projective: FieldJet, v_normal: Sequence[FieldJet],
                         report_order: int, with_cartan: bool = False) -> BundleResult:
    """Lift, normalize, assemble the canonical frame and compute its structure functions."""
    reference_order = bundle_base_order(bc.k, bc.m, report_order)
    audit = [{'stage': 'bundle reference', 'order': reference_order}]
    x_bold = lift_canonical_X(bc, x_projective, reference_order)
    solution = solve_normalization_system(bc, x_bold, v_normal, report_order)
    audit.append({'stage': 'V^0', 'order': solution.v0[0].order})
    frame = canonical_frame(bc, x_bold, solution, v_normal, report_order)
    structure = structure_functions(frame)
    audit.append({'stage': 'structure functions', 'order': structure.order})
    if with_cartan:
        structure.cartan = cartan_report(structure, bc.k, bc.m, bc.mode)
    return BundleResult(bc, solution, frame, structure, audit)
