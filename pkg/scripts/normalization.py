#!/usr/bin/env python3
"""
Normalization pipeline along the line field X.

- transport_jet solves X(u) = A u + b as full jets, given u on a transversal
- the normal frame V = W G kills the ad^k block of ad_X^(k+1) V
- K_0 .. K_(k-1) from  ad^(k+1) V + (ad^(k-1) V) K_(k-1) + ... + V K_0 = 0
- projective rescaling f X with tr K_(k-1)^(fX) = 0
- normalized invariants and the triviality test
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from tqdm import tqdm

from errors import NotInvertible, OrderExhausted, TransversalError
from expressions import ExpressionNode, evaluate_jet, evaluate_scalar
from jets import FLOAT, Jet, Scalar, ScalarMode
from linear_algebra import (JetMatrix, characteristic_polynomial, constant_matrix, jet_identity,
                            jet_matmul, jet_trace)
from ode_pair import PairFields, build_pair, require_regular
from vector_fields import FieldJet, adjoint_chain, frame_expand_many

logger = logging.getLogger(__name__)


def c_k(k: int) -> Fraction:
    """c_k = -k(k+1)(k+2)/24."""
    return Fraction(-k * (k + 1) * (k + 2), 24)


@dataclass(frozen=True)
class TransversalSpec:
    variable: str = 't'
    level: Optional[Scalar] = None


def default_transversal(pair: PairFields, x: FieldJet) -> TransversalSpec:
    """t for equation pairs, else the first variable along which X does not vanish."""
    if pair.kind in ('ode', 'geodesic'):
        name = 't'
    else:
        values = x.value_at_point()
        candidates = [v for v, value in enumerate(values) if not pair.mode.is_zero(value)]
        if not candidates:
            raise TransversalError("X vanishes at the point; no transversal exists")
        name = pair.chart.names[candidates[0]]
    var = pair.chart.index(name)
    return TransversalSpec(name, x.point[var])


def make_transversal(pair: PairFields, x: FieldJet, name: Optional[str]) -> TransversalSpec:
    if name is None:
        return default_transversal(pair, x)
    if name not in pair.chart.names:
        raise TransversalError(f"transversal {name!r} is not a chart variable")
    var = pair.chart.index(name)
    if pair.mode.is_zero(x.value_at_point()[var]):
        raise TransversalError(f"X({name}) vanishes at the point")
    return TransversalSpec(name, x.point[var])


# ----------------------------------------------------------------------
# Transport along X

def transport_jet(x: FieldJet, a: Optional[JetMatrix], b: Optional[JetMatrix], initial: JetMatrix,
                  trans: TransversalSpec, order: Optional[int] = None) -> JetMatrix:
    """Jets of the solution of X(U) = A U + B with U given on the transversal.

    U is d x c (a scalar is 1 x 1). Dividing by X(tau) makes the tau component
    of X equal to one; the tau^(a+1) coefficients then come from the tau^a part
    of the residual X(U) - A U - B, whose leading term is (a+1) u_(a+1).

    Raises:
        TransversalError: X(tau) vanishes at the point
    """
    chart = x.chart
    tau = chart.index(trans.variable)
    try:
        inverse = x.components[tau].invert()
    except NotInvertible:
        raise TransversalError(f"X({trans.variable}) vanishes at the point")
    x_hat = x.scale(inverse)
    a_hat = [[entry * inverse for entry in row] for row in a] if a is not None else None
    b_hat = [[entry * inverse for entry in row] for row in b] if b is not None else None

    bound = x_hat.order
    for matrix in (a_hat, b_hat):
        if matrix is not None:
            bound = min(bound, min(e.order for row in matrix for e in row))
    target = min(bound + 1, min(e.order for row in initial for e in row))
    if order is not None:
        target = min(target, order)

    rows, cols = len(initial), len(initial[0])
    u = [[entry.drop_variable(tau).truncate(target) for entry in row] for row in initial]
    for degree in range(target):
        residual = []
        for i in range(rows):
            row = []
            for c in range(cols):
                value = x_hat.apply(u[i][c])
                if a_hat is not None:
                    for s in range(rows):
                        if a_hat[i][s].coeffs and u[s][c].coeffs:
                            value = value - a_hat[i][s] * u[s][c]
                if b_hat is not None:
                    value = value - b_hat[i][c]
                row.append(value.truncate(target - 1))
            residual.append(row)
        u = [[u[i][c] - residual[i][c].antiderivative_slice(tau, degree) for c in range(cols)]
             for i in range(rows)]
    logger.debug(f"transported {rows}x{cols} system to order {target} along {trans.variable}")
    return u


# ----------------------------------------------------------------------
# Expansion of ad^(k+1)

@dataclass
class TopExpansion:
    """Coefficients of ad_X^(k+1) V_j in the frame (X, V, ad V, ..., ad^k V)."""

    blocks: List[JetMatrix]
    x_row: List[Jet]
    chains: List[List[FieldJet]]

    @property
    def order(self) -> int:
        return self.x_row[0].order


def expand_top(x: FieldJet, v: Sequence[FieldJet], k: int) -> TopExpansion:
    m = len(v)
    chains = [adjoint_chain(x, vj, k + 1) for vj in v]
    frame = [x] + [chains[j][s] for s in range(k + 1) for j in range(m)]
    expansions = frame_expand_many([chains[j][k + 1] for j in range(m)], frame)
    blocks = [[[expansions[j].coefficients[1 + s * m + a] for j in range(m)] for a in range(m)]
              for s in range(k + 1)]
    x_row = [expansions[j].coefficients[0] for j in range(m)]
    return TopExpansion(blocks, x_row, chains)


def compute_H(x: FieldJet, w: Sequence[FieldJet], k: int) -> JetMatrix:
    """ad^k block of ad_X^(k+1) W expanded in (X, W, ..., ad^k W)."""
    return expand_top(x, w, k).blocks[k]


def apply_frame(w: Sequence[FieldJet], g: JetMatrix) -> List[FieldJet]:
    """V_j = sum_a W_a G^a_j."""
    m = len(w)
    order = min(e.order for row in g for e in row)
    frame = []
    for j in range(m):
        total = None
        for a in range(m):
            term = w[a].truncate(order).scale(g[a][j])
            total = term if total is None else total + term
        frame.append(total)
    return frame


def normal_frame(x: FieldJet, w: Sequence[FieldJet], k: int, trans: TransversalSpec) -> Tuple[JetMatrix, JetMatrix]:
    """G with H G + (k+1) X(G) = 0 and G = Id on the transversal; returns (G, H)."""
    m = len(w)
    h = compute_H(x, w, k)
    a = [[entry.scale(Fraction(-1, k + 1) if x.mode.exact else -1.0 / (k + 1)) for entry in row] for row in h]
    order = min(e.order for row in h for e in row) + 1
    identity = jet_identity(x.chart, m, order, x.mode)
    g = transport_jet(x, a, None, identity, trans)
    return g, h


@dataclass
class KResult:
    H: JetMatrix
    G: JetMatrix
    V: List[FieldJet]
    K: List[JetMatrix]
    adk_residual: JetMatrix
    x_residual: List[Jet]
    trace: Jet

    @property
    def order(self) -> int:
        return self.trace.order


def compute_K(x: FieldJet, w: Sequence[FieldJet], k: int, trans: TransversalSpec) -> KResult:
    """K_i = -(ad^i block) of ad^(k+1) V in the normal frame V = W G."""
    g, h = normal_frame(x, w, k, trans)
    v = apply_frame(w, g)
    top = expand_top(x, v, k)
    k_matrices = [[[-entry for entry in row] for row in top.blocks[i]] for i in range(k)]
    trace = jet_trace(k_matrices[k - 1])
    logger.debug(f"K computed to order {trace.order}")
    return KResult(h, g, v, k_matrices, top.blocks[k], top.x_row, trace)


# ----------------------------------------------------------------------
# Rescaling

def schwarzian(x: FieldJet, f: Jet) -> Jet:
    """S^X(f) = 2 f X^2(f) - X(f)^2."""
    xf = x.apply(f)
    return f * x.apply(xf) * 2 - xf * xf


def trace_transform_check(x: FieldJet, w: Sequence[FieldJet], k: int, f: Jet,
                          trans: TransversalSpec) -> Tuple[Jet, Jet]:
    """Left: tr K_(k-1) of fX. Right: f^2 tr K_(k-1)^X - m c_k S^X(f)."""
    if f.mode.is_zero(f.constant_term()):
        raise NotInvertible("scaling function vanishes at the point")
    m = len(w)
    left = compute_K(x.scale(f), w, k, trans).trace
    base = compute_K(x, w, k, trans).trace
    coefficient = m * c_k(k) if x.mode.exact else float(m * c_k(k))
    right = f * f * base - schwarzian(x, f) * coefficient
    order = min(left.order, right.order)
    return left.truncate(order), right.truncate(order)


def projective_scaling(x: FieldJet, trace: Jet, k: int, m: int, trans: TransversalSpec) -> Jet:
    """f = h^2 where X^2(h) = tr K_(k-1) h / (4 m c_k), h = 1 and X(h) = 0 on the transversal."""
    factor = 1 / (4 * m * c_k(k))
    q = trace.scale(factor if x.mode.exact else float(factor))
    chart, mode = x.chart, x.mode
    order = q.order + 1
    zero = Jet.zero(chart, order, mode)
    one = Jet.constant(chart, 1, order, mode)
    a = [[Jet.zero(chart, q.order, mode), Jet.constant(chart, 1, q.order, mode)], [q, Jet.zero(chart, q.order, mode)]]
    solution = transport_jet(x, a, None, [[one], [zero]], trans)
    h = solution[0][0]
    return h * h


# ----------------------------------------------------------------------
# Full pipeline

def required_input_order(stage: str, k: int, report_order: int, m: int = 1) -> int:
    """Input jet order needed for the stage's output to reach report_order."""
    if stage == 'regularity':
        return max(report_order, k + 1)
    if stage in ('K', 'lemma2'):
        return report_order + 2 * k + 1
    if stage == 'normalized':
        return report_order + 4 * k + 1
    if stage == 'schwarzian':
        return report_order + 2
    if stage == 'bundle':
        from canonical_bundle import bundle_base_order
        return bundle_base_order(k, m, report_order) + 3 * k
    raise ValueError(f"unknown stage {stage}")


@dataclass
class InvariantReport:
    point: Dict[str, Scalar]
    transversal: TransversalSpec
    gauge: Dict[str, object]
    H: JetMatrix
    K: List[JetMatrix]
    adk_residual: JetMatrix
    x_residual: List[Jet]
    trace: Jet
    f: Optional[Jet] = None
    K_normalized: List[JetMatrix] = field(default_factory=list)
    trace_normalized: Optional[Jet] = None
    adk_residual_normalized: Optional[JetMatrix] = None
    characteristic_polynomials: List[List[Scalar]] = field(default_factory=list)
    flat: Optional[bool] = None
    witness: Optional[str] = None
    audit: List[Dict[str, object]] = field(default_factory=list)
    projective_field: Optional[FieldJet] = None
    normal_frame_fields: List[FieldJet] = field(default_factory=list)


def _truncate_matrix(matrix: JetMatrix, order: int) -> JetMatrix:
    return [[entry.truncate(order) for entry in row] for row in matrix]


def first_nonzero_entry(matrices: Sequence[JetMatrix], order: int) -> Optional[Tuple[int, int, int]]:
    for i, matrix in enumerate(matrices):
        for a, row in enumerate(matrix):
            for j, entry in enumerate(row):
                if not entry.is_zero(order):
                    return i, a, j
    return None


def normalized_invariants(pair: PairFields, point: Tuple[Scalar, ...], report_order: int,
                          transversal: Optional[str] = None, input_order: Optional[int] = None) -> InvariantReport:
    """K for X, the projective scaling f, and K for fX in its normal frame, with gauge record."""
    k, m = pair.k, pair.m
    needed = required_input_order('normalized', k, report_order)
    order = max(needed, input_order or 0)
    require_regular(pair, point, k + 1)
    x, w = pair.realize(point, order)
    trans = make_transversal(pair, x, transversal)
    audit = [{'stage': 'input', 'order': order}]

    base = compute_K(x, w, k, trans)
    audit.append({'stage': 'H', 'order': min(e.order for row in base.H for e in row)})
    audit.append({'stage': 'normal frame G', 'order': min(e.order for row in base.G for e in row)})
    audit.append({'stage': 'K', 'order': base.order})

    f = projective_scaling(x, base.trace, k, m, trans)
    audit.append({'stage': 'projective scaling f', 'order': f.order})
    scaled_x = x.scale(f)
    scaled = compute_K(scaled_x, w, k, trans)
    audit.append({'stage': 'normalized K', 'order': scaled.order})
    if scaled.order < report_order:
        raise OrderExhausted(f"normalized K reached order {scaled.order} < {report_order}", audit)

    r = report_order
    k_norm = [_truncate_matrix(mat, r) for mat in scaled.K]
    xf = x.apply(f)
    gauge = {
        'transversal': trans.variable,
        'level': trans.level,
        'f_at_point': f.constant_term(),
        'Xf_at_point': xf.constant_term(),
        'G_at_point_is_identity': constant_matrix(scaled.G) == constant_matrix(
            jet_identity(x.chart, m, 0, x.mode)),
    }
    charpolys = [characteristic_polynomial(constant_matrix(mat), x.mode) for mat in k_norm]
    hit = first_nonzero_entry(k_norm, r)
    witness = None
    if hit is not None:
        i, a, j = hit
        witness = f"K_{i}[{a + 1},{j + 1}] = {k_norm[i][a][j].constant_term()} + ... at order {r}"

    return InvariantReport(
        point=pair.point_dict(point),
        transversal=trans,
        gauge=gauge,
        H=_truncate_matrix(base.H, r),
        K=[_truncate_matrix(mat, r) for mat in base.K],
        adk_residual=_truncate_matrix(base.adk_residual, r),
        x_residual=[e.truncate(r) for e in base.x_residual],
        trace=base.trace.truncate(r),
        f=f.truncate(r),
        K_normalized=k_norm,
        trace_normalized=scaled.trace.truncate(r),
        adk_residual_normalized=_truncate_matrix(scaled.adk_residual, r),
        characteristic_polynomials=charpolys,
        flat=hit is None,
        witness=witness,
        audit=audit,
        projective_field=scaled_x,
        normal_frame_fields=scaled.V,
    )


def _triviality_task(args) -> Dict[str, object]:
    pair, point, report_order, transversal = args
    report = normalized_invariants(pair, point, report_order, transversal)
    return {'point': report.point, 'flat': report.flat, 'witness': report.witness}


@dataclass
class TrivialityVerdict:
    flat: bool
    order: int
    points: List[Dict[str, object]]
    witness: Optional[str] = None

    @property
    def message(self) -> str:
        if self.flat:
            return f"flat to tested order {self.order} at all {len(self.points)} points"
        return f"not flat: {self.witness}"


def triviality_test(pair: PairFields, points: Sequence[Tuple[Scalar, ...]], report_order: int,
                    transversal: Optional[str] = None, workers: int = 1) -> TrivialityVerdict:
    """Flat iff every normalized K_i vanishes to the given order at every sample point."""
    tasks = [(pair, point, report_order, transversal) for point in points]
    logger.info(f"Testing triviality at {len(tasks)} point(s) with {workers} worker(s)")
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(tqdm(executor.map(_triviality_task, tasks), total=len(tasks), desc="Points"))
    else:
        results = [_triviality_task(task) for task in tqdm(tasks, desc="Points", disable=len(tasks) < 2)]
    witness = None
    for result in results:
        if not result['flat']:
            witness = f"{result['witness']} at point {result['point']}"
            break
    return TrivialityVerdict(witness is None, report_order, results, witness)


# ----------------------------------------------------------------------
# Rescaling checks

@dataclass
class TraceLawCheck:
    """tr K_(k-1) of fX against f^2 tr K_(k-1)^X - m c_k S^X(f)."""

    point: Dict[str, Scalar]
    f: Jet
    left: Jet
    right: Jet
    order: int

    @property
    def holds(self) -> bool:
        return self.left.agrees_with(self.right, self.order)


def trace_law_check(pair: PairFields, point: Tuple[Scalar, ...], report_order: int, scaling: ExpressionNode,
                    transversal: Optional[str] = None) -> TraceLawCheck:
    k = pair.k
    order = required_input_order('lemma2', k, report_order)
    require_regular(pair, point, k + 1)
    x, w = pair.realize(point, order)
    trans = make_transversal(pair, x, transversal)
    f = evaluate_jet(scaling, pair.point_dict(point), order, pair.mode, pair.chart)
    left, right = trace_transform_check(x, w, k, f, trans)
    if left.order < report_order:
        raise OrderExhausted(f"trace law reached order {left.order} < {report_order}",
                             [{'stage': 'input', 'order': order}, {'stage': 'tr K', 'order': left.order}])
    logger.info(f"Trace law compared to order {report_order}")
    return TraceLawCheck(pair.point_dict(point), f.truncate(report_order), left.truncate(report_order),
                         right.truncate(report_order), report_order)


@dataclass
class SchwarzianSample:
    time: float
    point: Dict[str, float]
    schwarzian: float
    reference: float

    @property
    def relative_error(self) -> float:
        return abs(self.schwarzian - self.reference) / max(1.0, abs(self.reference))


@dataclass
class SchwarzianCheck:
    samples: List[SchwarzianSample]
    tolerance: float

    @property
    def max_relative_error(self) -> float:
        return max(s.relative_error for s in self.samples)

    @property
    def holds(self) -> bool:
        return self.max_relative_error <= self.tolerance


# central 5-point stencils on offsets -2h .. 2h
_FIRST_DIFF = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_SECOND_DIFF = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def schwarzian_reparametrization_check(pair: PairFields, point: Tuple[Scalar, ...], scaling: ExpressionNode,
                                       samples: int = 10, span: float = 0.5, tolerance: float = 1e-6,
                                       step: float = 1e-2,
                                       time_change: Optional[ExpressionNode] = None) -> SchwarzianCheck:
    """Compare S^X(f) with 2 phi'''/phi' - 3 (phi''/phi')^2 of the integrated time change.

    The trajectory y(s) of gX and the X-time phi(s) with phi' = g(y(s)) are
    integrated together; g is time_change and defaults to the scaling f.
    phi'' and phi''' come from finite differences of phi' on the dense output.
    S^X(f) is evaluated at the point reached by flowing X alone for time
    phi(s) from the start.
    """
    time_change = scaling if time_change is None else time_change
    float_pair = build_pair(dataclasses.replace(pair.spec, mode=FLOAT))
    names = float_pair.chart.names

    def values(y):
        return dict(zip(names, (float(v) for v in y)))

    def x_rhs(_, y):
        at = values(y)
        return [evaluate_scalar(e, at, FLOAT) for e in float_pair.x_exprs]

    def speed(y) -> float:
        return evaluate_scalar(time_change, values(y), FLOAT)

    def time_change_rhs(_, z):
        y = z[:-1]
        g = speed(y)
        return [g * c for c in x_rhs(None, y)] + [g]

    start = np.array([float(v) for v in point])
    if FLOAT.is_zero(speed(start)):
        raise NotInvertible("time change speed vanishes at the start point")
    times = np.linspace(2 * step, span, samples)
    flow = solve_ivp(time_change_rhs, (0.0, span + 3 * step), np.append(start, 0.0), method='DOP853',
                     dense_output=True, rtol=1e-12, atol=1e-14)
    if not flow.success:
        raise OrderExhausted(f"trajectory integration failed: {flow.message}")

    offsets = step * np.arange(-2, 3)
    references = []
    x_times = []
    for s in times:
        stencil = flow.sol(s + offsets)
        phi1 = np.array([speed(stencil[:-1, j]) for j in range(len(offsets))])
        if FLOAT.is_zero(phi1[2]):
            raise NotInvertible("time change speed vanishes along the trajectory")
        phi2 = float(_FIRST_DIFF @ phi1) / step
        phi3 = float(_SECOND_DIFF @ phi1) / step ** 2
        references.append(2 * phi3 / phi1[2] - 3 * (phi2 / phi1[2]) ** 2)
        x_times.append(float(flow.sol(s)[-1]))

    # phi is monotone, so the X-times are ordered along the flow
    x_flow = solve_ivp(x_rhs, (0.0, x_times[-1]), start, method='DOP853', t_eval=x_times,
                       rtol=1e-12, atol=1e-14)
    if not x_flow.success:
        raise OrderExhausted(f"trajectory integration failed: {x_flow.message}")

    results = []
    for i, (time, reference) in enumerate(zip(times, references)):
        sample = tuple(float(v) for v in x_flow.y[:, i])
        x, _ = float_pair.realize(sample, 3)
        f = evaluate_jet(scaling, values(sample), 3, FLOAT, float_pair.chart)
        results.append(SchwarzianSample(float(time), values(sample),
                                        schwarzian(x, f).constant_term(), reference))
    check = SchwarzianCheck(results, tolerance)
    logger.info(f"Schwarzian check: max relative error {check.max_relative_error:.3e} over {samples} samples")
    return check
