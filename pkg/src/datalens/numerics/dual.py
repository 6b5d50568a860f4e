"""Tiny forward-mode layer over numpy.

A :class:`Dual` carries a value and a tangent array of the same shape. The
network code is written once against the helpers in this module; fed plain
ndarrays it computes values, fed Duals it also propagates directional
derivatives. Running the hand-written backward pass on Duals is
forward-over-reverse differentiation, which yields exact Hessian-vector
products.

Only the operations the model family needs are supported: sums, products,
contractions, fixed-index gathers/scatters and the softmax.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class Dual:
    __slots__ = ("val", "tan")
    # keep ndarray from swallowing mixed expressions
    __array_ufunc__ = None

    def __init__(self, val, tan):
        self.val = np.asarray(val, dtype=np.float64)
        self.tan = np.asarray(tan, dtype=np.float64)

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tan + other.tan)
        return Dual(self.val + other, self.tan)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.tan - other.tan)
        return Dual(self.val - other, self.tan)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.tan)

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.tan * other.val + self.val * other.tan)
        return Dual(self.val * other, self.tan * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            raise TypeError("division by a Dual is not supported")
        return Dual(self.val / other, self.tan / other)

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.tan[idx])

    def reshape(self, *shape):
        return Dual(self.val.reshape(*shape), self.tan.reshape(*shape))

    def transpose(self, *axes):
        return Dual(self.val.transpose(*axes), self.tan.transpose(*axes))

    def sum(self, axis=None, keepdims=False):
        return Dual(self.val.sum(axis=axis, keepdims=keepdims),
                    self.tan.sum(axis=axis, keepdims=keepdims))

    def __repr__(self):
        return f"Dual(shape={self.val.shape})"


def value(x):
    return x.val if isinstance(x, Dual) else x


def tangent(x):
    return x.tan if isinstance(x, Dual) else np.zeros_like(x)


def linear(fn: Callable[[np.ndarray], np.ndarray], x):
    """Apply a fixed linear map to a value or Dual."""
    if isinstance(x, Dual):
        return Dual(fn(x.val), fn(x.tan))
    return fn(x)


def einsum(subscripts: str, a, b):
    """Two-operand einsum with the product rule."""
    if isinstance(a, Dual) and isinstance(b, Dual):
        return Dual(
            np.einsum(subscripts, a.val, b.val, optimize=True),
            np.einsum(subscripts, a.tan, b.val, optimize=True)
            + np.einsum(subscripts, a.val, b.tan, optimize=True),
        )
    if isinstance(a, Dual):
        return Dual(np.einsum(subscripts, a.val, b, optimize=True),
                    np.einsum(subscripts, a.tan, b, optimize=True))
    if isinstance(b, Dual):
        return Dual(np.einsum(subscripts, a, b.val, optimize=True),
                    np.einsum(subscripts, a, b.tan, optimize=True))
    return np.einsum(subscripts, a, b, optimize=True)


def softmax(z, axis: int = -1):
    """Row softmax; tangent is J_softmax applied to the input tangent."""
    zv = value(z)
    shifted = zv - zv.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    if isinstance(z, Dual):
        t = p * (z.tan - (p * z.tan).sum(axis=axis, keepdims=True))
        return Dual(p, t)
    return p


def log_softmax(z, axis: int = -1):
    zv = value(z)
    shifted = zv - zv.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    if isinstance(z, Dual):
        p = np.exp(out)
        return Dual(out, z.tan - (p * z.tan).sum(axis=axis, keepdims=True))
    return out
