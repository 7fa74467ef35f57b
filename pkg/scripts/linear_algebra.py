#!/usr/bin/env python3
"""
Linear algebra over the jet ring and over scalars.

Jet systems are solved by Gauss-Jordan elimination with pivots chosen on the
constant-term matrix. Scalar ranks and null spaces are exact over Fractions in
rational mode and go through scipy in float mode.
"""

import logging
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from errors import SingularLeadingMatrix
from jets import Chart, Jet, Scalar, ScalarMode

logger = logging.getLogger(__name__)

JetMatrix = List[List[Jet]]
ScalarMatrix = List[List[Scalar]]


# ----------------------------------------------------------------------
# Jet matrices

def jet_identity(chart: Chart, size: int, order: int, mode: ScalarMode) -> JetMatrix:
    return [[Jet.constant(chart, 1 if i == j else 0, order, mode) for j in range(size)]
            for i in range(size)]


def jet_zeros(chart: Chart, rows: int, cols: int, order: int, mode: ScalarMode) -> JetMatrix:
    return [[Jet.zero(chart, order, mode) for _ in range(cols)] for _ in range(rows)]


def jet_matmul(a: JetMatrix, b: JetMatrix) -> JetMatrix:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = a[i][0] * b[0][j]
            for s in range(1, inner):
                if a[i][s].coeffs and b[s][j].coeffs:
                    acc = acc + a[i][s] * b[s][j]
                else:
                    acc = acc.truncate(min(a[i][s].order, b[s][j].order))
            row.append(acc)
        out.append(row)
    return out


def jet_trace(matrix: JetMatrix) -> Jet:
    total = matrix[0][0]
    for i in range(1, len(matrix)):
        total = total + matrix[i][i]
    return total


def constant_matrix(matrix: JetMatrix) -> ScalarMatrix:
    return [[entry.constant_term() for entry in row] for row in matrix]


def _choose_pivot(rows: List[List[Jet]], col: int, start: int, mode: ScalarMode) -> Optional[int]:
    candidates = [r for r in range(start, len(rows)) if not mode.is_zero(rows[r][col].constant_term())]
    if not candidates:
        return None
    if mode.exact:
        # fewest stored terms keeps intermediate jets sparse
        return min(candidates, key=lambda r: (len(rows[r][col].coeffs), r))
    return max(candidates, key=lambda r: (abs(rows[r][col].constant_term()), -r))


def jet_solve_columns(a: JetMatrix, b: JetMatrix) -> JetMatrix:
    """Solve A X = B for a square jet matrix A and an n x c right-hand side B.

    All entries are truncated to the common order first; the solution has that order.

    Raises:
        SingularLeadingMatrix: when the constant-term matrix of A is singular.
    """
    n = len(a)
    if any(len(row) != n for row in a) or len(b) != n:
        raise ValueError("jet_solve_columns needs a square system")
    cols = len(b[0]) if n else 0
    order = min(entry.order for row in list(a) + list(b) for entry in row)
    mode = a[0][0].mode
    chart = a[0][0].chart

    if all(not entry.coeffs for row in b for entry in row):
        _check_leading(a, mode)
        return jet_zeros(chart, n, cols, order, mode)

    work = [[entry.truncate(order) for entry in a[i]] + [entry.truncate(order) for entry in b[i]]
            for i in range(n)]
    width = n + cols
    for col in range(n):
        pivot = _choose_pivot(work, col, col, mode)
        if pivot is None:
            raise SingularLeadingMatrix(f"constant-term matrix is singular in column {col}")
        work[col], work[pivot] = work[pivot], work[col]
        inverse = work[col][col].invert()
        work[col] = [work[col][j] * inverse if j > col else work[col][j] for j in range(width)]
        for r in range(n):
            if r == col:
                continue
            factor = work[r][col]
            if not factor.coeffs:
                continue
            row = work[r]
            for j in range(col + 1, width):
                if work[col][j].coeffs:
                    row[j] = row[j] - factor * work[col][j]
            row[col] = Jet.zero(chart, order, mode)
    return [row[n:] for row in work]


def jet_linear_solve(a: JetMatrix, b: Sequence[Jet]) -> List[Jet]:
    """Solve A x = b over the jet ring."""
    solution = jet_solve_columns(a, [[entry] for entry in b])
    return [row[0] for row in solution]


def jet_matrix_inverse(a: JetMatrix) -> JetMatrix:
    n = len(a)
    order = min(entry.order for row in a for entry in row)
    identity = jet_identity(a[0][0].chart, n, order, a[0][0].mode)
    return jet_solve_columns(a, identity)


def _check_leading(a: JetMatrix, mode: ScalarMode):
    if scalar_rank(constant_matrix(a), mode) < len(a):
        raise SingularLeadingMatrix("constant-term matrix is singular")


# ----------------------------------------------------------------------
# Scalar matrices

def _exact_echelon(matrix: ScalarMatrix) -> Tuple[List[List[Fraction]], List[int]]:
    rows = [[Fraction(x) for x in row] for row in matrix]
    if not rows:
        return rows, []
    width = len(rows[0])
    pivots = []
    r = 0
    for c in range(width):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        lead = rows[r][c]
        rows[r] = [x / lead for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                factor = rows[i][c]
                rows[i] = [x - factor * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def scalar_rank(matrix: ScalarMatrix, mode: ScalarMode) -> int:
    """Rank of a scalar matrix: exact elimination, or pivoted QR with relative tolerance."""
    if not matrix or not matrix[0]:
        return 0
    if mode.exact:
        return len(_exact_echelon(matrix)[1])
    array = np.array(matrix, dtype=float)
    _, r, _ = scipy.linalg.qr(array, pivoting=True, mode='economic')
    diagonal = np.abs(np.diag(r))
    if diagonal.size == 0 or diagonal[0] == 0.0:
        return 0
    return int(np.sum(diagonal > mode.tolerance * diagonal[0]))


def scalar_nullspace(matrix: ScalarMatrix, mode: ScalarMode, width: Optional[int] = None) -> List[List[Scalar]]:
    """Basis of {a : M a = 0} as a list of vectors."""
    if not matrix:
        n = width or 0
        return [[mode.one() if i == j else mode.zero() for i in range(n)] for j in range(n)]
    n = len(matrix[0])
    if mode.exact:
        rows, pivots = _exact_echelon(matrix)
        free = [c for c in range(n) if c not in pivots]
        basis = []
        for f in free:
            vector = [Fraction(0)] * n
            vector[f] = Fraction(1)
            for r, p in enumerate(pivots):
                vector[p] = -rows[r][f]
            basis.append(vector)
        return basis
    array = np.array(matrix, dtype=float)
    null = scipy.linalg.null_space(array, rcond=mode.tolerance)
    return [list(map(float, null[:, j])) for j in range(null.shape[1])]


def scalar_solve(matrix: ScalarMatrix, rhs: Sequence[Scalar], mode: ScalarMode) -> List[Scalar]:
    """Solve a square nonsingular scalar system."""
    n = len(matrix)
    if mode.exact:
        augmented = [list(matrix[i]) + [rhs[i]] for i in range(n)]
        rows, pivots = _exact_echelon(augmented)
        if pivots[:n] != list(range(n)):
            raise SingularLeadingMatrix("scalar system is singular")
        return [rows[i][n] for i in range(n)]
    return list(map(float, scipy.linalg.solve(np.array(matrix, dtype=float), np.array(rhs, dtype=float))))


def scalar_matmul(a: ScalarMatrix, b: ScalarMatrix) -> ScalarMatrix:
    return [[sum((a[i][s] * b[s][j] for s in range(len(b))), 0 * a[i][0]) for j in range(len(b[0]))]
            for i in range(len(a))]


def scalar_inverse(matrix: ScalarMatrix, mode: ScalarMode) -> ScalarMatrix:
    n = len(matrix)
    columns = [scalar_solve(matrix, [mode.one() if i == j else mode.zero() for i in range(n)], mode)
               for j in range(n)]
    return [[columns[j][i] for j in range(n)] for i in range(n)]


def characteristic_polynomial(matrix: ScalarMatrix, mode: ScalarMode) -> List[Scalar]:
    """Coefficients [1, c1, ..., cn] of det(lambda I - M), highest degree first.

    Exact Faddeev-LeVerrier recursion in rational mode, numpy.poly otherwise.
    """
    n = len(matrix)
    if not mode.exact:
        return [float(c) for c in np.poly(np.array(matrix, dtype=float))]
    m = [[Fraction(x) for x in row] for row in matrix]
    coefficients = [Fraction(1)]
    aux = [[Fraction(0)] * n for _ in range(n)]
    for step in range(1, n + 1):
        product = scalar_matmul(m, aux) if step > 1 else [[Fraction(0)] * n for _ in range(n)]
        aux = [[product[i][j] + (coefficients[-1] if i == j else 0) for j in range(n)] for i in range(n)]
        trace = sum(sum(m[i][s] * aux[s][i] for s in range(n)) for i in range(n))
        coefficients.append(-trace / step)
    return coefficients
