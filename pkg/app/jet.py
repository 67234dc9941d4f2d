"""Second-order forward-mode jets evaluated over a batch of points.

A ``Jet`` carries the value, gradient and (optionally) Hessian of one scalar
quantity at N points in R^d. Arithmetic follows the truncated Taylor rules, so a
field written with ordinary operators returns exact derivatives up to the
rounding of the elementary operations.

Hessians are assembled only from symmetric pieces (``a*H``, ``g g^T`` and
``g h^T + h g^T``), so the stored matrices are symmetric bit for bit.
"""

from dataclasses import dataclass

import numpy as np

type Operand = Jet | float | int


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, :, None] * b[:, None, :]


@dataclass(frozen=True, slots=True)
class Jet:
    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, d)
    hess: np.ndarray | None = None  # (N, d, d)

    # numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    @classmethod
    def variables(cls, points: np.ndarray, order: int = 1) -> list["Jet"]:
        """Seed one jet per coordinate of ``points`` (shape (N, d))."""
        if order not in (1, 2):
            raise ValueError(f"Jet order must be 1 or 2, got {order}")

        count, dim = points.shape
        identity = np.eye(dim)
        hess = np.zeros((count, dim, dim)) if order == 2 else None
        return [
            cls(np.array(points[:, k], dtype=float), np.broadcast_to(identity[k], (count, dim)), hess)
            for k in range(dim)
        ]

    @classmethod
    def constant(cls, value: float, like: "Jet") -> "Jet":
        hess = None if like.hess is None else np.zeros_like(like.hess)
        return cls(np.full_like(like.value, float(value)), np.zeros_like(like.grad), hess)

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    @property
    def dim(self) -> int:
        return self.grad.shape[1]

    def _chain(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray | None) -> "Jet":
        """Compose with a scalar function given its value and first two derivatives at ``self.value``."""
        grad = f1[:, None] * self.grad
        if self.hess is None:
            return Jet(f0, grad)
        assert f2 is not None
        hess = f1[:, None, None] * self.hess + f2[:, None, None] * _outer(self.grad, self.grad)
        return Jet(f0, grad, hess)

    def _check_order(self, other: "Jet") -> None:
        if self.order != other.order:
            raise ValueError(f"Cannot combine jets of order {self.order} and {other.order}")

    def __add__(self, other: Operand) -> "Jet":
        if isinstance(other, Jet):
            self._check_order(other)
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.value + other.value, self.grad + other.grad, hess)
        return Jet(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.value, -self.grad, None if self.hess is None else -self.hess)

    def __sub__(self, other: Operand) -> "Jet":
        return self + (-other)

    def __rsub__(self, other: Operand) -> "Jet":
        return (-self) + other

    def __mul__(self, other: Operand) -> "Jet":
        if not isinstance(other, Jet):
            scale = float(other)
            return Jet(scale * self.value, scale * self.grad, None if self.hess is None else scale * self.hess)

        self._check_order(other)
        a, b = self, other
        value = a.value * b.value
        grad = a.value[:, None] * b.grad + b.value[:, None] * a.grad
        if a.hess is None:
            return Jet(value, grad)

        hess = (
            a.value[:, None, None] * b.hess
            + b.value[:, None, None] * a.hess
            + (_outer(a.grad, b.grad) + _outer(b.grad, a.grad))
        )
        return Jet(value, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        inv = 1.0 / v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other: Operand) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def __rtruediv__(self, other: Operand) -> "Jet":
        return self.reciprocal() * float(other)

    def __pow__(self, exponent: float) -> "Jet":
        p = float(exponent)
        if p == 0.0:
            return Jet.constant(1.0, self)
        if p == 1.0:
            return self
        if p == 2.0:
            return self * self

        v = self.value
        f0 = np.power(v, p)
        f1 = p * np.power(v, p - 1.0)
        f2 = p * (p - 1.0) * np.power(v, p - 2.0) if self.hess is not None else None
        return self._chain(f0, f1, f2)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(c, -s, -c)

    def sqrt(self) -> "Jet":
        return self**0.5

    def is_finite(self) -> np.ndarray:
        """Row mask of points where value, gradient and Hessian are all finite."""
        mask = np.isfinite(self.value) & np.all(np.isfinite(self.grad), axis=1)
        if self.hess is not None:
            mask &= np.all(np.isfinite(self.hess), axis=(1, 2))
        return mask
