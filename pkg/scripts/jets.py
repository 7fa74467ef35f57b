#!/usr/bin/env python3
"""
Sparse truncated multivariate Taylor series (jets).

A jet stores the Taylor coefficients of a function at a point, in the
displacements of the chart variables, up to a valid truncation order.
Coefficients are exact Fractions in rational mode and binary64 floats in
float mode.

Charts may carry per-variable degree limits. Monomials beyond a limit are not
stored, and each jet remembers the degree in every limited variable up to
which its coefficients are still exact.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from errors import ChartMismatch, DecimalInRationalMode, NotInvertible, OrderExhausted

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
Scalar = Union[Fraction, float]


@dataclass(frozen=True)
class ScalarMode:
    """Exact rationals or binary64 floats with a relative comparison tolerance."""

    kind: str = 'rational'
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.kind not in ('rational', 'float'):
            raise ValueError(f"Unknown scalar mode: {self.kind}")

    @property
    def exact(self) -> bool:
        return self.kind == 'rational'

    def coerce(self, value) -> Scalar:
        """Convert an int, Fraction, string or float into this mode's scalar."""
        if self.exact:
            if isinstance(value, float):
                raise DecimalInRationalMode(f"float value {value!r} in rational mode")
            return Fraction(value)
        return float(value)

    def is_zero(self, value: Scalar, scale: float = 1.0) -> bool:
        if self.exact:
            return value == 0
        return abs(value) <= self.tolerance * max(1.0, scale)

    def equal(self, a: Scalar, b: Scalar) -> bool:
        if self.exact:
            return a == b
        return abs(a - b) <= self.tolerance * max(1.0, abs(a), abs(b))

    def zero(self) -> Scalar:
        return Fraction(0) if self.exact else 0.0

    def one(self) -> Scalar:
        return Fraction(1) if self.exact else 1.0


RATIONAL = ScalarMode('rational')
FLOAT = ScalarMode('float')


def mode_from_name(name: str, tolerance: float = 1e-9) -> ScalarMode:
    if name == 'rational':
        return RATIONAL
    return ScalarMode('float', tolerance)


def degree(index: MultiIndex) -> int:
    return sum(index)


def graded_lex_key(index: MultiIndex) -> Tuple[int, Tuple[int, ...]]:
    """Total order: by degree, then lexicographically with earlier variables first."""
    return (sum(index), tuple(-e for e in index))


@dataclass(frozen=True)
class Chart:
    """Ordered variable names plus optional per-variable stored-degree limits."""

    names: Tuple[str, ...]
    limits: Optional[Tuple[Optional[int], ...]] = None

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"Duplicate chart variables: {self.names}")
        if self.limits is not None and len(self.limits) != len(self.names):
            raise ValueError("Chart limits must match the variable count")

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ChartMismatch(f"Variable {name!r} is not in chart {self.names}")

    @property
    def capped(self) -> Tuple[Tuple[int, int], ...]:
        if self.limits is None:
            return ()
        return tuple((v, lim) for v, lim in enumerate(self.limits) if lim is not None)

    def unit(self, var: int) -> MultiIndex:
        return tuple(1 if i == var else 0 for i in range(len(self.names)))

    def origin(self) -> MultiIndex:
        return (0,) * len(self.names)


Validity = Optional[Tuple[Optional[int], ...]]


def _merge_validity(a: Validity, b: Validity, dropped: Iterable[int], chart: Chart) -> Validity:
    dropped = set(dropped)
    if a is None and b is None and not dropped:
        return None
    n = chart.dimension
    out = []
    for v in range(n):
        candidates = []
        if a is not None and a[v] is not None:
            candidates.append(a[v])
        if b is not None and b[v] is not None:
            candidates.append(b[v])
        if v in dropped:
            candidates.append(chart.limits[v])
        out.append(min(candidates) if candidates else None)
    if all(x is None for x in out):
        return None
    return tuple(out)


class Jet:
    """Truncated Taylor expansion of a scalar function at a point."""

    __slots__ = ('chart', 'order', 'coeffs', 'mode', 'valid', '_terms')

    def __init__(self, chart: Chart, order: int, coeffs: Optional[Dict[MultiIndex, Scalar]] = None,
                 mode: ScalarMode = RATIONAL, valid: Validity = None):
        if order < 0:
            raise OrderExhausted("jet order dropped below zero")
        self.chart = chart
        self.order = order
        self.mode = mode
        dropped = set()
        cleaned = {}
        capped = chart.capped
        for index, value in (coeffs or {}).items():
            if value == 0 or sum(index) > order:
                continue
            over = [v for v, lim in capped if index[v] > lim]
            if over:
                dropped.update(over)
                continue
            cleaned[index] = value
        self.coeffs = cleaned
        self.valid = _merge_validity(valid, None, dropped, chart) if (valid or dropped) else None
        self._terms = None

    # ------------------------------------------------------------------
    # Constructors

    @classmethod
    def constant(cls, chart: Chart, value, order: int, mode: ScalarMode = RATIONAL) -> 'Jet':
        value = mode.coerce(value)
        return cls(chart, order, {chart.origin(): value}, mode)

    @classmethod
    def zero(cls, chart: Chart, order: int, mode: ScalarMode = RATIONAL) -> 'Jet':
        return cls(chart, order, {}, mode)

    @classmethod
    def variable(cls, chart: Chart, var: Union[int, str], value, order: int,
                 mode: ScalarMode = RATIONAL) -> 'Jet':
        """Coordinate function: its value at the point plus the formal displacement."""
        if isinstance(var, str):
            var = chart.index(var)
        coeffs = {chart.origin(): mode.coerce(value)}
        if order >= 1:
            coeffs[chart.unit(var)] = mode.one()
        return cls(chart, order, coeffs, mode)

    # ------------------------------------------------------------------
    # Inspection

    def constant_term(self) -> Scalar:
        return self.coeffs.get(self.chart.origin(), self.mode.zero())

    def terms(self) -> List[Tuple[MultiIndex, Scalar]]:
        """Stored terms sorted graded-lexicographically."""
        return [(index, value) for _, index, value in self._sorted()]

    def _sorted(self):
        if self._terms is None:
            self._terms = sorted(((sum(i), i, c) for i, c in self.coeffs.items()),
                                 key=lambda t: graded_lex_key(t[1]))
        return self._terms

    def is_zero(self, order: Optional[int] = None) -> bool:
        limit = self.order if order is None else order
        return all(self.mode.is_zero(c) for i, c in self.coeffs.items() if sum(i) <= limit)

    def is_constant(self, order: Optional[int] = None) -> bool:
        limit = self.order if order is None else order
        return all(self.mode.is_zero(c) for i, c in self.coeffs.items() if 0 < sum(i) <= limit)

    def agrees_with(self, other: 'Jet', order: Optional[int] = None) -> bool:
        """True when both jets have the same coefficients up to the common order."""
        self._check(other)
        limit = min(self.order, other.order)
        if order is not None:
            limit = min(limit, order)
        keys = set(self.coeffs) | set(other.coeffs)
        zero = self.mode.zero()
        for index in keys:
            if sum(index) > limit:
                continue
            if not self.mode.equal(self.coeffs.get(index, zero), other.coeffs.get(index, zero)):
                return False
        return True

    def __repr__(self):
        shown = ', '.join(f"{list(i)}: {c}" for i, c in self.terms()[:6])
        more = ' ...' if len(self.coeffs) > 6 else ''
        return f"Jet(order={self.order}, {{{shown}{more}}})"

    # ------------------------------------------------------------------
    # Arithmetic

    def _check(self, other: 'Jet'):
        if self.chart is not other.chart and self.chart != other.chart:
            raise ChartMismatch("jets live on different charts")
        if self.mode != other.mode:
            raise ChartMismatch("jets use different scalar modes")

    def _lift(self, other) -> 'Jet':
        if isinstance(other, Jet):
            self._check(other)
            return other
        return Jet.constant(self.chart, other, self.order, self.mode)

    def __add__(self, other) -> 'Jet':
        other = self._lift(other)
        order = min(self.order, other.order)
        coeffs = dict(self.coeffs)
        for index, value in other.coeffs.items():
            coeffs[index] = coeffs.get(index, 0) + value
        return Jet(self.chart, order, coeffs, self.mode,
                   _merge_validity(self.valid, other.valid, (), self.chart))

    __radd__ = __add__

    def __neg__(self) -> 'Jet':
        return Jet(self.chart, self.order, {i: -c for i, c in self.coeffs.items()}, self.mode, self.valid)

    def __sub__(self, other) -> 'Jet':
        return self + (-self._lift(other))

    def __rsub__(self, other) -> 'Jet':
        return self._lift(other) + (-self)

    def scale(self, factor) -> 'Jet':
        factor = self.mode.coerce(factor)
        if factor == 0:
            return Jet(self.chart, self.order, {}, self.mode, self.valid)
        return Jet(self.chart, self.order, {i: c * factor for i, c in self.coeffs.items()}, self.mode, self.valid)

    def __mul__(self, other) -> 'Jet':
        if not isinstance(other, Jet):
            return self.scale(other)
        self._check(other)
        order = min(self.order, other.order)
        validity = _merge_validity(self.valid, other.valid, (), self.chart)
        if not self.coeffs or not other.coeffs:
            return Jet(self.chart, order, {}, self.mode, validity)
        left = self._sorted()
        right = other._sorted()
        if len(left) > len(right):
            left, right = right, left
        capped = self.chart.capped
        out: Dict[MultiIndex, Scalar] = {}
        dropped = set()
        for da, ia, ca in left:
            budget = order - da
            if budget < 0:
                break
            for db, ib, cb in right:
                if db > budget:
                    break
                key = tuple(x + y for x, y in zip(ia, ib))
                if capped:
                    over = [v for v, lim in capped if key[v] > lim]
                    if over:
                        dropped.update(over)
                        continue
                out[key] = out.get(key, 0) + ca * cb
        if dropped:
            validity = _merge_validity(validity, None, dropped, self.chart)
        return Jet(self.chart, order, out, self.mode, validity)

    __rmul__ = __mul__

    def __truediv__(self, other) -> 'Jet':
        if isinstance(other, Jet):
            return self * other.invert()
        other = self.mode.coerce(other)
        if other == 0:
            raise NotInvertible("division by zero scalar")
        return self.scale(1 / other)

    def __pow__(self, exponent: int) -> 'Jet':
        if not isinstance(exponent, int):
            raise TypeError("jets only support integer powers")
        if exponent < 0:
            return self.invert() ** (-exponent)
        result = Jet.constant(self.chart, 1, self.order, self.mode)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def invert(self) -> 'Jet':
        """Multiplicative inverse via the geometric series of the non-constant part."""
        c = self.constant_term()
        if self.mode.is_zero(c):
            raise NotInvertible("jet has vanishing constant term")
        inv_c = 1 / c
        q = (self - c).scale(inv_c)
        result = Jet.constant(self.chart, inv_c, self.order, self.mode)
        if not q.coeffs:
            return Jet(self.chart, self.order, result.coeffs, self.mode, self.valid)
        power = Jet.constant(self.chart, inv_c, self.order, self.mode)
        neg_q = -q
        for _ in range(self.order):
            power = power * neg_q
            if not power.coeffs:
                break
            result = result + power
        return result

    def partial(self, var: int) -> 'Jet':
        """Formal partial derivative in one chart variable; order drops by one."""
        if self.order == 0:
            raise OrderExhausted(f"cannot differentiate an order-0 jet in {self.chart.names[var]}")
        valid = self.valid
        if valid is not None and valid[var] is not None:
            if valid[var] == 0:
                raise OrderExhausted(
                    f"degree cap in {self.chart.names[var]} exhausted; raise the fiber cap")
            valid = tuple(x - 1 if (v == var and x is not None) else x for v, x in enumerate(valid))
        coeffs = {}
        for index, value in self.coeffs.items():
            e = index[var]
            if e == 0:
                continue
            lowered = index[:var] + (e - 1,) + index[var + 1:]
            coeffs[lowered] = value * e
        return Jet(self.chart, self.order - 1, coeffs, self.mode, valid)

    def truncate(self, order: int) -> 'Jet':
        if order >= self.order:
            return self
        return Jet(self.chart, order, self.coeffs, self.mode, self.valid)

    def antiderivative_slice(self, var: int, power: int) -> 'Jet':
        """Terms with exponent `power` in `var`, integrated once in that variable.

        The result has order one higher than this jet.
        """
        coeffs = {}
        for index, value in self.coeffs.items():
            if index[var] != power:
                continue
            raised = index[:var] + (power + 1,) + index[var + 1:]
            coeffs[raised] = value / (power + 1) if self.mode.exact else value / float(power + 1)
        return Jet(self.chart, self.order + 1, coeffs, self.mode, self.valid)

    def drop_variable(self, var: int) -> 'Jet':
        """Terms that do not involve `var` (restriction to the hyperplane var = point value)."""
        coeffs = {i: c for i, c in self.coeffs.items() if i[var] == 0}
        return Jet(self.chart, self.order, coeffs, self.mode, self.valid)

    def compose(self, taylor: Sequence[Scalar]) -> 'Jet':
        """Compose with a univariate function given its Taylor coefficients at the constant term."""
        c = self.constant_term()
        h = self - c
        result = Jet.constant(self.chart, taylor[0], self.order, self.mode)
        power = Jet.constant(self.chart, 1, self.order, self.mode)
        for n in range(1, min(self.order, len(taylor) - 1) + 1):
            power = power * h
            if not power.coeffs:
                break
            result = result + power.scale(taylor[n])
        return result

    def embed(self, chart: Chart, positions: Sequence[int]) -> 'Jet':
        """Same function on a larger chart; variable v moves to positions[v]."""
        n = chart.dimension
        coeffs = {}
        for index, value in self.coeffs.items():
            wide = [0] * n
            for v, e in enumerate(index):
                wide[positions[v]] = e
            coeffs[tuple(wide)] = value
        valid = None
        if self.valid is not None:
            wide_valid = [None] * n
            for v, x in enumerate(self.valid):
                wide_valid[positions[v]] = x
            valid = tuple(wide_valid)
        return Jet(chart, self.order, coeffs, self.mode, valid)
