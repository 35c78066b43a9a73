"""Square matrices of formal series."""

from __future__ import annotations

from typing import Callable, Sequence

from .weyl import FormalSeries, ModelConfig, series_mul, to_mpq

Product = Callable[[FormalSeries, FormalSeries], FormalSeries]


class MatrixSeries:
    """An ``N x N`` matrix with :class:`FormalSeries` entries."""

    __slots__ = ("model", "rows")

    def __init__(self, model: ModelConfig, rows: Sequence[Sequence[FormalSeries]]):
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("matrix must be square and non-empty")
        for r in rows:
            for e in r:
                if e.model != model:
                    raise ValueError("entry lives on a different model")
        self.model = model
        self.rows = tuple(tuple(r) for r in rows)

    @property
    def N(self) -> int:
        return len(self.rows)

    @classmethod
    def zeros(cls, model: ModelConfig, n: int) -> "MatrixSeries":
        z = model.zero()
        return cls(model, [[z] * n for _ in range(n)])

    @classmethod
    def identity(cls, model: ModelConfig, n: int) -> "MatrixSeries":
        return cls.scalar(model.one(), n)

    @classmethod
    def scalar(cls, s: FormalSeries, n: int) -> "MatrixSeries":
        z = s.model.zero()
        return cls(s.model, [[s if i == j else z for j in range(n)] for i in range(n)])

    @classmethod
    def parse(cls, model: ModelConfig, entries: Sequence[Sequence[str]]) -> "MatrixSeries":
        return cls(model, [[model.parse(e) if isinstance(e, str) else model.const(e)
                            for e in row] for row in entries])

    @classmethod
    def unit(cls, model: ModelConfig, n: int, i: int, j: int, s: FormalSeries | None = None):
        z = model.zero()
        s = model.one() if s is None else s
        return cls(model, [[s if (a, b) == (i, j) else z for b in range(n)] for a in range(n)])

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def map(self, fn: Callable[[FormalSeries], FormalSeries]) -> "MatrixSeries":
        return MatrixSeries(self.model, [[fn(e) for e in r] for r in self.rows])

    def _check(self, other: "MatrixSeries"):
        if not isinstance(other, MatrixSeries):
            raise TypeError("expected a MatrixSeries")
        if other.model != self.model or other.N != self.N:
            raise ValueError("matrix shapes or models differ")

    def __add__(self, other):
        if not isinstance(other, MatrixSeries):
            other = MatrixSeries.scalar(self.model.const(other), self.N)
        self._check(other)
        return MatrixSeries(self.model, [[a + b for a, b in zip(r, s)]
                                         for r, s in zip(self.rows, other.rows)])

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda e: -e)

    def __sub__(self, other):
        if not isinstance(other, MatrixSeries):
            other = MatrixSeries.scalar(self.model.const(other), self.N)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "MatrixSeries":
        if isinstance(c, FormalSeries):
            return self.map(lambda e: series_mul(c, e))
        c = to_mpq(c)
        return self.map(lambda e: e.scale(c))

    def __mul__(self, other):
        if isinstance(other, MatrixSeries):
            return self.matmul(other)
        return self.scale(other)

    def __rmul__(self, c):
        return self.scale(c)

    def matmul(self, other: "MatrixSeries", mul: Product = series_mul) -> "MatrixSeries":
        self._check(other)
        n = self.N
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = [mul(self.rows[i][k], other.rows[k][j]) for k in range(n)
                       if not self.rows[i][k].is_zero() and not other.rows[k][j].is_zero()]
                row.append(_add_all(self.model, acc))
            out.append(row)
        return MatrixSeries(self.model, out)

    def trace(self) -> FormalSeries:
        return _add_all(self.model, [self.rows[i][i] for i in range(self.N)])

    def is_zero(self) -> bool:
        return all(e.is_zero() for r in self.rows for e in r)

    def __eq__(self, other):
        if not isinstance(other, MatrixSeries):
            return NotImplemented
        return self.model == other.model and self.rows == other.rows

    __hash__ = None

    def entries(self):
        for i, r in enumerate(self.rows):
            for j, e in enumerate(r):
                yield i, j, e

    def __str__(self) -> str:
        return "[" + "; ".join(", ".join(str(e) for e in r) for r in self.rows) + "]"

    __repr__ = __str__


def _add_all(model: ModelConfig, items) -> FormalSeries:
    items = [s for s in items if not s.is_zero()]
    if not items:
        return model.zero()
    if len(items) == 1:
        return items[0]
    import numpy as np
    return FormalSeries(model, np.concatenate([s.keys for s in items]),
                        np.concatenate([s.coefs for s in items]))


def as_matrix(x, n: int | None = None) -> MatrixSeries:
    if isinstance(x, MatrixSeries):
        return x
    if isinstance(x, FormalSeries):
        return MatrixSeries.scalar(x, n or 1)
    raise TypeError("expected a FormalSeries or MatrixSeries")


def graded_commutator(a: MatrixSeries, b: MatrixSeries, mul: Product = series_mul) -> MatrixSeries:
    """``ab - (-1)^{|a||b|} ba`` for homogeneous form degrees.

    Inhomogeneous inputs are split by form degree.
    """
    out = MatrixSeries.zeros(a.model, a.N)
    for pa, ma in _by_parity(a):
        for pb, mb in _by_parity(b):
            ab = ma.matmul(mb, mul)
            ba = mb.matmul(ma, mul)
            out = out + (ab + ba if pa and pb else ab - ba)
    return out


def _by_parity(m: MatrixSeries):
    even = m.map(lambda e: e.select(_parity(e) == 0))
    odd = m.map(lambda e: e.select(_parity(e) == 1))
    out = []
    if not even.is_zero():
        out.append((0, even))
    if not odd.is_zero():
        out.append((1, odd))
    return out


def _parity(e: FormalSeries):
    from .weyl import _popcount
    return _popcount(e.parts["mask"]) & 1
