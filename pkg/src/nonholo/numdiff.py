"""Forward-mode automatic differentiation on scalars.

A DualScalar carries a value plus a tuple of partial derivatives with respect
to the independent variables introduced by one ``lift`` call. Lifts nest:
every lift opens a fresh perturbation level, and arithmetic between scalars
from different levels treats the lower level as a constant, so derivatives of
functions that internally take derivatives come out right without any special
casing at the call site.

Everything here is pure and first order. Supported primitives: +, -, *, /,
power, sin, cos, tan, exp, log, sqrt and unary minus. Evaluating a primitive
outside its domain raises DomainError naming the primitive.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, SingularMatrixError, WidthMismatchError

_NUM = (int, float)


def float_core(x):
    """Strip all dual layers off a scalar and return the underlying float."""
    while isinstance(x, DualScalar):
        x = x.value
    return x


class DualScalar:
    """Value plus one level of partial derivatives.

    ``partials`` has one slot per independent variable of the lift that
    created this level; entries (and ``value``) may themselves be duals of a
    lower level when lifts are nested.
    """

    __slots__ = ("value", "partials", "level")

    def __init__(self, value, partials, level=1):
        self.value = value
        self.partials = partials if isinstance(partials, tuple) else tuple(partials)
        self.level = level

    @property
    def width(self) -> int:
        return len(self.partials)

    def _check(self, other: "DualScalar"):
        if len(self.partials) != len(other.partials):
            raise WidthMismatchError(
                f"partials widths differ: {len(self.partials)} vs {len(other.partials)}"
            )

    def __repr__(self):
        return f"DualScalar({self.value!r}, {self.partials!r}, level={self.level})"

    def __neg__(self):
        return DualScalar(-self.value, tuple(-p for p in self.partials), self.level)

    def __add__(self, other):
        if isinstance(other, DualScalar):
            if other.level == self.level:
                self._check(other)
                return DualScalar(
                    self.value + other.value,
                    tuple(a + b for a, b in zip(self.partials, other.partials)),
                    self.level,
                )
            if other.level > self.level:
                return DualScalar(self + other.value, other.partials, other.level)
            return DualScalar(self.value + other, self.partials, self.level)
        if isinstance(other, _NUM):
            return DualScalar(self.value + other, self.partials, self.level)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            if other.level == self.level:
                self._check(other)
                return DualScalar(
                    self.value - other.value,
                    tuple(a - b for a, b in zip(self.partials, other.partials)),
                    self.level,
                )
            if other.level > self.level:
                return DualScalar(
                    self - other.value,
                    tuple(-p for p in other.partials),
                    other.level,
                )
            return DualScalar(self.value - other, self.partials, self.level)
        if isinstance(other, _NUM):
            return DualScalar(self.value - other, self.partials, self.level)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _NUM):
            return DualScalar(
                other - self.value, tuple(-p for p in self.partials), self.level
            )
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            if other.level == self.level:
                self._check(other)
                sv, ov = self.value, other.value
                return DualScalar(
                    sv * ov,
                    tuple(a * ov + sv * b for a, b in zip(self.partials, other.partials)),
                    self.level,
                )
            if other.level > self.level:
                return DualScalar(
                    self * other.value,
                    tuple(self * p for p in other.partials),
                    other.level,
                )
            return DualScalar(
                self.value * other,
                tuple(p * other for p in self.partials),
                self.level,
            )
        if isinstance(other, _NUM):
            return DualScalar(
                self.value * other,
                tuple(p * other for p in self.partials),
                self.level,
            )
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)


def divide(num, den):
    """num / den with an explicit zero-denominator domain check."""
    if isinstance(den, DualScalar):
        if float_core(den.value) == 0.0:
            raise DomainError("division", "division by zero")
        if isinstance(num, DualScalar):
            if num.level == den.level:
                num._check(den)
                q = divide(num.value, den.value)
                return DualScalar(
                    q,
                    tuple(
                        divide(a - q * b, den.value)
                        for a, b in zip(num.partials, den.partials)
                    ),
                    num.level,
                )
            if num.level > den.level:
                return DualScalar(
                    divide(num.value, den),
                    tuple(divide(p, den) for p in num.partials),
                    num.level,
                )
            # num belongs to a lower level: constant relative to den's seeds
            q = divide(num, den.value)
            return DualScalar(
                q,
                tuple(divide(-(q * b), den.value) for b in den.partials),
                den.level,
            )
        q = divide(num, den.value)
        return DualScalar(
            q,
            tuple(divide(-(q * b), den.value) for b in den.partials),
            den.level,
        )
    # den is a plain number
    if den == 0.0:
        raise DomainError("division", "division by zero")
    if isinstance(num, DualScalar):
        return DualScalar(
            divide(num.value, den),
            tuple(divide(p, den) for p in num.partials),
            num.level,
        )
    return num / den


def power(base, exponent):
    """base ** exponent.

    Plain-number exponents use the monomial rule (integer exponents permit
    negative bases); dual exponents go through exp(exponent * log(base)) and
    therefore require a positive base.
    """
    if isinstance(exponent, DualScalar):
        return exp(exponent * log(base))
    e = float(exponent)
    if not isinstance(base, DualScalar):
        return _float_pow(base, e)
    core = float_core(base.value)
    if core < 0.0 and not e.is_integer():
        raise DomainError("power", "negative base with non-integer exponent")
    if e == 0.0:
        return 1.0
    if e == 1.0:
        return base
    if core == 0.0:
        if e < 0.0:
            raise DomainError("power", "zero base with negative exponent")
        if e < 1.0:
            raise DomainError("power", "derivative of x^e unbounded at 0 for e < 1")
    val = power(base.value, e)
    slope = power(base.value, e - 1.0) * e
    return DualScalar(
        val, tuple(slope * p for p in base.partials), base.level
    )


def _float_pow(b, e):
    b = float(b)
    if b < 0.0 and not e.is_integer():
        raise DomainError("power", "negative base with non-integer exponent")
    if b == 0.0 and e < 0.0:
        raise DomainError("power", "zero base with negative exponent")
    try:
        return b**e
    except OverflowError:
        raise DomainError("power", "overflow") from None


def sin(x):
    if isinstance(x, DualScalar):
        c = cos(x.value)
        return DualScalar(sin(x.value), tuple(c * p for p in x.partials), x.level)
    return math.sin(x)


def cos(x):
    if isinstance(x, DualScalar):
        s = sin(x.value)
        return DualScalar(cos(x.value), tuple(-(s * p) for p in x.partials), x.level)
    return math.cos(x)


def tan(x):
    if isinstance(x, DualScalar):
        t = tan(x.value)
        sec2 = 1.0 + t * t
        return DualScalar(t, tuple(sec2 * p for p in x.partials), x.level)
    return math.tan(x)


def exp(x):
    if isinstance(x, DualScalar):
        v = exp(x.value)
        return DualScalar(v, tuple(v * p for p in x.partials), x.level)
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError("exp", "overflow") from None


def log(x):
    if float_core(x) <= 0.0:
        raise DomainError("log", "argument must be positive")
    if isinstance(x, DualScalar):
        return DualScalar(
            log(x.value), tuple(divide(p, x.value) for p in x.partials), x.level
        )
    return math.log(x)


def sqrt(x):
    core = float_core(x)
    if core < 0.0:
        raise DomainError("sqrt", "argument must be nonnegative")
    if isinstance(x, DualScalar):
        if core == 0.0:
            raise DomainError("sqrt", "derivative unbounded at 0")
        v = sqrt(x.value)
        half = divide(0.5, v)
        return DualScalar(v, tuple(half * p for p in x.partials), x.level)
    return math.sqrt(x)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
}


def lift(values):
    """Lift a vector of scalars to duals with unit-basis partials.

    The lift opens a fresh perturbation level one above the deepest level
    present in ``values``; constants keep zero partials implicitly by never
    being lifted.
    """
    vals = list(values)
    level = 1 + max(
        (v.level for v in vals if isinstance(v, DualScalar)), default=0
    )
    w = len(vals)
    out = []
    for i, v in enumerate(vals):
        if isinstance(v, _NUM):
            v = float(v)
        seeds = tuple(1.0 if j == i else 0.0 for j in range(w))
        out.append(DualScalar(v, seeds, level))
    return out


def gradient(f, x):
    """Return (f(x), grad f(x)) for a scalar map on R^w, exact to roundoff."""
    xs = [float(v) for v in x]
    out = f(lift(xs))
    if isinstance(out, DualScalar):
        return float(out.value), np.asarray(out.partials, dtype=float)
    return float(out), np.zeros(len(xs))


def jacobian(F, x):
    """Row i is the gradient of the i-th component of F at x."""
    xs = [float(v) for v in x]
    outs = F(lift(xs))
    rows = []
    for comp in outs:
        if isinstance(comp, DualScalar):
            rows.append(list(comp.partials))
        else:
            rows.append([0.0] * len(xs))
    return np.asarray(rows, dtype=float).reshape(len(rows), len(xs))


def directional(f, x, v):
    """Return (f(x), df(x)[v]) using a single-direction dual pass."""
    duals = [DualScalar(float(a), (float(b),)) for a, b in zip(x, v)]
    out = f(duals)
    if isinstance(out, DualScalar):
        return float(out.value), float(out.partials[0])
    return float(out), 0.0


# ---------------------------------------------------------------------------
# Small dense linear algebra over generic scalars (floats or duals). Sizes in
# this package never exceed 2n x 2n with n <= 10, so direct elimination with
# partial pivoting is both adequate and differentiation-friendly.
# ---------------------------------------------------------------------------


def solve_linear(a_rows, b):
    """Solve A x = b by Gaussian elimination with partial pivoting.

    ``b`` may be a vector (list) or a matrix (list of rows); the result has
    the same shape. Pivoting compares the float cores so the routine works
    unchanged on nested duals.
    """
    n = len(a_rows)
    a = [list(row) for row in a_rows]
    vector = n > 0 and not isinstance(b[0], (list, tuple))
    if vector:
        rhs = [[v] for v in b]
    else:
        rhs = [list(row) for row in b]
    scale = max((abs(float_core(e)) for row in a for e in row), default=0.0)
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    for col in range(n):
        piv, best = col, abs(float_core(a[col][col]))
        for r in range(col + 1, n):
            mag = abs(float_core(a[r][col]))
            if mag > best:
                piv, best = r, mag
        if best <= 1e-14 * scale:
            raise SingularMatrixError(f"singular matrix (pivot {best:.3e})")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            rhs[col], rhs[piv] = rhs[piv], rhs[col]
        pv = a[col][col]
        for r in range(col + 1, n):
            f = divide(a[r][col], pv)
            if float_core(f) == 0.0 and not isinstance(f, DualScalar):
                continue
            for c in range(col + 1, n):
                a[r][c] = a[r][c] - f * a[col][c]
            a[r][col] = 0.0
            for c in range(len(rhs[0])):
                rhs[r][c] = rhs[r][c] - f * rhs[col][c]
    for col in range(n - 1, -1, -1):
        pv = a[col][col]
        for c in range(len(rhs[0])):
            acc = rhs[col][c]
            for j in range(col + 1, n):
                acc = acc - a[col][j] * rhs[j][c]
            rhs[col][c] = divide(acc, pv)
    if vector:
        return [row[0] for row in rhs]
    return rhs


def mat_vec(m, v):
    return [sum_prod(row, v) for row in m]


def sum_prod(u, v):
    acc = u[0] * v[0]
    for a, b in zip(u[1:], v[1:]):
        acc = acc + a * b
    return acc


def mat_mul(a, b):
    cols = list(zip(*b))
    return [[sum_prod(row, col) for col in cols] for row in a]


def transpose(m):
    return [list(col) for col in zip(*m)]
