"""Two-tangent forward-mode scalars over numpy arrays.

A ``Dual2`` carries a value lane and two independent tangent lanes; seeding
the tangents of T1 and T2 with d(log T)=T and running a simulator unchanged
propagates d/d(log T1) and d/d(log T2) alongside the value.  Lanes may be
real or complex arrays of any shape; arithmetic follows numpy broadcasting.
The ``d*`` helpers below accept either plain arrays or duals so simulation
code can be written once for both paths.
"""

from __future__ import annotations

import numpy as np


def _lane(x, shape, dtype):
    a = np.asarray(x)
    if a.shape != shape or a.dtype != dtype:
        a = np.broadcast_to(a, shape).astype(dtype, copy=True)
    elif not a.flags.writeable:
        a = a.copy()
    return a


class Dual2:
    """value + two tangents, elementwise over numpy arrays."""

    __slots__ = ("val", "d1", "d2")

    # make ndarray <op> Dual2 defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, val, d1=0.0, d2=0.0):
        val = np.asarray(val)
        dtype = np.result_type(val, np.asarray(d1), np.asarray(d2))
        self.val = val.astype(dtype, copy=False)
        self.d1 = _lane(d1, val.shape, dtype)
        self.d2 = _lane(d2, val.shape, dtype)

    # -- structure ---------------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def dtype(self):
        return self.val.dtype

    def copy(self):
        return Dual2(self.val.copy(), self.d1.copy(), self.d2.copy())

    def __getitem__(self, idx):
        return Dual2(self.val[idx], self.d1[idx], self.d2[idx])

    def __setitem__(self, idx, other):
        if isinstance(other, Dual2):
            self.val[idx] = other.val
            self.d1[idx] = other.d1
            self.d2[idx] = other.d2
        else:
            self.val[idx] = other
            self.d1[idx] = 0.0
            self.d2[idx] = 0.0

    def __repr__(self):
        return f"Dual2(val={self.val!r})"

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val + other.val, self.d1 + other.d1, self.d2 + other.d2)
        return Dual2(self.val + other, self.d1, self.d2)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val - other.val, self.d1 - other.d1, self.d2 - other.d2)
        return Dual2(self.val - other, self.d1, self.d2)

    def __rsub__(self, other):
        return Dual2(other - self.val, -self.d1, -self.d2)

    def __neg__(self):
        return Dual2(-self.val, -self.d1, -self.d2)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val * other.val,
                         self.val * other.d1 + self.d1 * other.val,
                         self.val * other.d2 + self.d2 * other.val)
        return Dual2(self.val * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            inv = 1.0 / other.val
            q = self.val * inv
            return Dual2(q, (self.d1 - q * other.d1) * inv, (self.d2 - q * other.d2) * inv)
        return Dual2(self.val / other, self.d1 / other, self.d2 / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        q = other * inv
        return Dual2(q, -q * self.d1 * inv, -q * self.d2 * inv)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("Dual2 powers support integer exponents only")
        g = n * self.val ** (n - 1)
        return Dual2(self.val ** n, g * self.d1, g * self.d2)

    # comparisons act on the value lane (for validation code paths)
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    # -- elementwise functions ---------------------------------------------
    def exp(self):
        e = np.exp(self.val)
        return Dual2(e, e * self.d1, e * self.d2)

    def log(self):
        return Dual2(np.log(self.val), self.d1 / self.val, self.d2 / self.val)

    def sqrt(self):
        s = np.sqrt(self.val)
        g = 0.5 / s
        return Dual2(s, g * self.d1, g * self.d2)

    def sin(self):
        return Dual2(np.sin(self.val), np.cos(self.val) * self.d1,
                     np.cos(self.val) * self.d2)

    def cos(self):
        return Dual2(np.cos(self.val), -np.sin(self.val) * self.d1,
                     -np.sin(self.val) * self.d2)

    def conj(self):
        # tangents are w.r.t. real parameters, so conjugation is lane-wise
        return Dual2(np.conj(self.val), np.conj(self.d1), np.conj(self.d2))

    @property
    def real(self):
        return Dual2(self.val.real, self.d1.real, self.d2.real)

    @property
    def imag(self):
        return Dual2(self.val.imag, self.d1.imag, self.d2.imag)


def _value(x):
    return x.val if isinstance(x, Dual2) else x


def value_of(x):
    """Value lane of a dual, or the input itself."""
    return _value(x)


def is_dual(x) -> bool:
    return isinstance(x, Dual2)


def seed_log_tangents(t1, t2):
    """Duals for (t1, t2) with unit tangents in (log t1, log t2)."""
    return Dual2(float(t1), d1=float(t1)), Dual2(float(t2), d2=float(t2))


# -- dispatch helpers: accept plain arrays or Dual2 --------------------------

def dexp(x):
    return x.exp() if isinstance(x, Dual2) else np.exp(x)


def dlog(x):
    return x.log() if isinstance(x, Dual2) else np.log(x)


def dsin(x):
    return x.sin() if isinstance(x, Dual2) else np.sin(x)


def dcos(x):
    return x.cos() if isinstance(x, Dual2) else np.cos(x)


def dsqrt(x):
    return x.sqrt() if isinstance(x, Dual2) else np.sqrt(x)


def dconj(x):
    return x.conj() if isinstance(x, Dual2) else np.conj(x)


def dsum(x, axis=None):
    if isinstance(x, Dual2):
        return Dual2(np.sum(x.val, axis=axis), np.sum(x.d1, axis=axis),
                     np.sum(x.d2, axis=axis))
    return np.sum(x, axis=axis)


def droll(x, shift, axis):
    if isinstance(x, Dual2):
        return Dual2(np.roll(x.val, shift, axis), np.roll(x.d1, shift, axis),
                     np.roll(x.d2, shift, axis))
    return np.roll(x, shift, axis)


def dzeros(shape, dtype=complex, dual: bool = False):
    z = np.zeros(shape, dtype=dtype)
    return Dual2(z, z.copy(), z.copy()) if dual else z


def deinsum(spec, a, b):
    """einsum with the product rule applied across dual lanes."""
    a_dual = isinstance(a, Dual2)
    b_dual = isinstance(b, Dual2)
    if not (a_dual or b_dual):
        return np.einsum(spec, a, b)
    av = a.val if a_dual else a
    bv = b.val if b_dual else b
    val = np.einsum(spec, av, bv)
    d1 = d2 = None
    if a_dual:
        d1 = np.einsum(spec, a.d1, bv)
        d2 = np.einsum(spec, a.d2, bv)
    if b_dual:
        t1 = np.einsum(spec, av, b.d1)
        t2 = np.einsum(spec, av, b.d2)
        d1 = t1 if d1 is None else d1 + t1
        d2 = t2 if d2 is None else d2 + t2
    return Dual2(val, d1, d2)


def dstack_diag3(e_xy, e_xy2, e_z):
    """Length-3 diagonal (exy, exy, ez) as an array or dual of matching kind."""
    if isinstance(e_xy, Dual2) or isinstance(e_z, Dual2):
        to = lambda x: x if isinstance(x, Dual2) else Dual2(x)
        a, b, c = to(e_xy), to(e_xy2), to(e_z)
        return Dual2(np.stack([a.val, b.val, c.val], axis=-1),
                     np.stack([a.d1, b.d1, c.d1], axis=-1),
                     np.stack([a.d2, b.d2, c.d2], axis=-1))
    return np.stack([e_xy, e_xy2, e_z], axis=-1)
