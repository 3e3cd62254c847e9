"""Forward-mode dual numbers that work on scalars, numpy arrays and on each other.

Nesting (a Dual whose parts are Duals) gives mixed second derivatives, which is
what the commutator checks need. Every function in this module accepts plain
floats/arrays too, so physics code can be written once and evaluated either way.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """a + b·ε with ε² = 0. Parts may be floats, arrays or Duals."""

    __slots__ = ("re", "du")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, re, du=0.0):
        self.re = re
        self.du = du

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.re + o.re, self.du + o.du)
        return Dual(self.re + o, self.du)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.re - o.re, self.du - o.du)
        return Dual(self.re - o, self.du)

    def __rsub__(self, o):
        return Dual(o - self.re, -self.du)

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.re * o.re, self.re * o.du + self.du * o.re)
        return Dual(self.re * o, self.du * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            q = self.re / o.re
            return Dual(q, (self.du - q * o.du) / o.re)
        return Dual(self.re / o, self.du / o)

    def __rtruediv__(self, o):
        q = o / self.re
        return Dual(q, -q * self.du / self.re)

    def __pow__(self, n):
        if isinstance(n, Dual):
            return exp(n * log(self))
        if n == 0:
            return Dual(self.re ** 0, self.du * 0.0)
        return Dual(self.re ** n, n * self.re ** (n - 1) * self.du)

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"


def real(x):
    """Innermost real part."""
    while isinstance(x, Dual):
        x = x.re
    return x


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.re)
        return Dual(s, x.du / (2.0 * s))
    return np.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.du)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.re), x.du / x.re)
    return np.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.du)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.du)
    return np.cos(x)


def fabs(x):
    """|x| with the derivative sign taken from the innermost real part."""
    if isinstance(x, Dual):
        return x * np.sign(real(x))
    return np.abs(x)


def where(mask, a, b):
    """Elementwise select that threads through dual parts."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        ar, ad = (a.re, a.du) if isinstance(a, Dual) else (a, 0.0 * a)
        br, bd = (b.re, b.du) if isinstance(b, Dual) else (b, 0.0 * b)
        return Dual(where(mask, ar, br), where(mask, ad, bd))
    return np.where(mask, a, b)


def seed(x, direction):
    """Lift a point to a dual point along a tangent direction."""
    return [Dual(xi, di) for xi, di in zip(x, direction)]


def derivative(fun, x, direction):
    """Directional derivative of fun at x along direction (both sequences)."""
    out = fun(seed(x, direction))
    return out.du if isinstance(out, Dual) else 0.0 * real(x[0])
