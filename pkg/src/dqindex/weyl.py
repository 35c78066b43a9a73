"""Truncated formal Weyl-type series on flat local models.

A series lives on a :class:`ModelConfig` and is a finite sum of monomials

    c * x^a * y^b * th_S * h^k * t^m

with exact rational ``c``.  ``x`` are base coordinates (on the torus model
they are Laurent variables ``u`` and derivatives are Euler derivations
``u d/du``), ``y`` are even fiber coordinates, ``th`` are the odd generators
``dx^i``, ``h`` is the deformation parameter and ``t`` a path parameter.

Truncation drops every monomial with ``|b| > Y_max``, ``k > H_max``,
``m > T_max`` or (when ``W_max`` is set) filtration weight ``2k + |b| >
W_max``.  Each of these is an ideal for the products used here, so the
truncated arithmetic is exact in every degree that is kept.  Base exponents
are never truncated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import gmpy2
import numpy as np
from gmpy2 import mpq

from . import _kernels

__all__ = [
    "ModelConfig",
    "Monomial",
    "FormalSeries",
    "ParseError",
    "TruncationError",
    "series_mul",
    "delta",
    "delta_inv",
    "chi",
    "hodge_residual",
    "filtration_weight",
    "base_derive",
    "fiber_derive",
    "theta_mul",
    "theta_derive",
    "de_rham",
    "to_mpq",
]

_KINDS = ("plane", "torus")


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int, token: str):
        super().__init__(f"{message} at line {line}, column {column} (token {token!r})")
        self.line = line
        self.column = column
        self.token = token


class TruncationError(ValueError):
    """A monomial does not fit the model's truncation bounds."""


def to_mpq(c) -> mpq:
    if isinstance(c, mpq):
        return c
    if isinstance(c, bool):
        raise TypeError("bool is not a coefficient")
    if isinstance(c, (int, np.integer)):
        return mpq(int(c))
    if isinstance(c, Fraction):
        return mpq(c.numerator, c.denominator)
    if isinstance(c, str):
        return mpq(c)
    if isinstance(c, type(gmpy2.mpz(0))):
        return mpq(c)
    raise TypeError(f"cannot use {type(c).__name__} as an exact coefficient")


@dataclass(frozen=True)
class _Layout:
    d: int
    base_bits: int
    fiber_bits: int
    h_bits: int
    t_bits: int

    @property
    def base_offset(self) -> int:
        return 1 << (self.base_bits - 1)

    def base_shift(self, i: int) -> int:
        return i * self.base_bits

    def fiber_shift(self, i: int) -> int:
        return self.d * self.base_bits + i * self.fiber_bits

    @property
    def h_shift(self) -> int:
        return self.d * (self.base_bits + self.fiber_bits)

    @property
    def t_shift(self) -> int:
        return self.h_shift + self.h_bits

    @property
    def mask_shift(self) -> int:
        return self.t_shift + self.t_bits

    @property
    def key_offset(self) -> int:
        off = self.base_offset
        return sum(off << self.base_shift(i) for i in range(self.d))

    @property
    def fiber_field(self) -> int:
        return ((1 << (self.d * self.fiber_bits)) - 1) << self.fiber_shift(0)


@dataclass(frozen=True)
class ModelConfig:
    """Truncation data and geometry of a flat local model."""

    kind: str
    d: int
    Y_max: int = 6
    H_max: int = 4
    T_max: int = 0
    N: int = 1
    X_max: int | None = None
    K_max: int | None = None
    W_max: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        for name in ("Y_max", "H_max", "T_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.W_max is not None and self.W_max < 0:
            raise ValueError("W_max must be non-negative")
        if self.kind == "torus" and self.X_max is not None:
            raise ValueError("the torus model takes K_max, not X_max")
        if self.kind == "plane" and self.K_max is not None:
            raise ValueError("the plane model takes X_max, not K_max")
        if self.layout.base_bits < 4:
            raise ValueError("truncation bounds too large to pack into 64-bit keys")

    @property
    def base_cutoff(self) -> int:
        if self.kind == "plane":
            return 4 if self.X_max is None else self.X_max
        return 3 if self.K_max is None else self.K_max

    @property
    def laurent(self) -> bool:
        return self.kind == "torus"

    @property
    def base_name(self) -> str:
        return "u" if self.laurent else "x"

    @cached_property
    def layout(self) -> _Layout:
        fb = max(1, self.Y_max.bit_length())
        hb = max(1, self.H_max.bit_length())
        tb = max(1, self.T_max.bit_length())
        rest = 63 - self.d * fb - hb - tb - self.d
        bb = min(16, rest // self.d) if rest > 0 else 0
        return _Layout(self.d, bb, fb, hb, tb)

    @cached_property
    def _limits(self):
        lay = self.layout
        wmax = -1 if self.W_max is None else self.W_max
        lo = -lay.base_offset
        hi = lay.base_offset - 1
        return (self.Y_max, self.H_max, self.T_max, wmax, lo, hi,
                lay.key_offset, self.d)

    def replace(self, **changes) -> "ModelConfig":
        data = {k: getattr(self, k) for k in
                ("kind", "d", "Y_max", "H_max", "T_max", "N", "X_max", "K_max", "W_max")}
        data.update(changes)
        return ModelConfig(**data)

    # convenience constructors -------------------------------------------------

    def zero(self) -> "FormalSeries":
        return FormalSeries(self, np.zeros(0, np.int64), np.zeros(0, dtype=object), True)

    def const(self, c) -> "FormalSeries":
        return FormalSeries.from_terms(self, {Monomial.unit(self.d): c})

    def one(self) -> "FormalSeries":
        return self.const(1)

    def gen(self, name: str) -> "FormalSeries":
        return self.parse(name)

    def parse(self, text: str) -> "FormalSeries":
        return _Parser(self, text).parse()


@dataclass(frozen=True, order=True)
class Monomial:
    base: tuple[int, ...]
    fiber: tuple[int, ...]
    forms: tuple[int, ...] = ()
    hbar: int = 0
    t: int = 0

    @staticmethod
    def unit(d: int) -> "Monomial":
        return Monomial((0,) * d, (0,) * d)

    @property
    def fiber_degree(self) -> int:
        return sum(self.fiber)

    @property
    def form_degree(self) -> int:
        return len(self.forms)

    def render(self, model: ModelConfig) -> str:
        parts = []
        bn = model.base_name
        for i, e in enumerate(self.base):
            if e:
                parts.append(f"{bn}{i + 1}" + (f"^{e}" if e != 1 else ""))
        for i, e in enumerate(self.fiber):
            if e:
                parts.append(f"y{i + 1}" + (f"^{e}" if e != 1 else ""))
        parts.extend(f"th{i + 1}" for i in self.forms)
        if self.hbar:
            parts.append("h" + (f"^{self.hbar}" if self.hbar != 1 else ""))
        if self.t:
            parts.append("t" + (f"^{self.t}" if self.t != 1 else ""))
        return "*".join(parts)


def filtration_weight(m: Monomial) -> int:
    return 2 * m.hbar + m.fiber_degree


def _check_fits(model: ModelConfig, m: Monomial) -> bool:
    """True if ``m`` is kept by truncation; raises if it is malformed."""
    d = model.d
    if len(m.base) != d or len(m.fiber) != d:
        raise ValueError("monomial dimension does not match the model")
    if any(e < 0 for e in m.fiber) or m.hbar < 0 or m.t < 0:
        raise ValueError("negative fiber, h or t exponent")
    if not model.laurent and any(e < 0 for e in m.base):
        raise ValueError("negative base exponent on the plane model")
    if len(set(m.forms)) != len(m.forms) or any(not 0 <= i < d for i in m.forms):
        raise ValueError("invalid odd generators")
    off = model.layout.base_offset
    if any(not -off <= e < off for e in m.base):
        raise _kernels.BaseOverflow("base exponent out of packed range")
    if m.fiber_degree > model.Y_max or m.hbar > model.H_max or m.t > model.T_max:
        return False
    if model.W_max is not None and filtration_weight(m) > model.W_max:
        return False
    return True


class FormalSeries:
    """Immutable truncated series with exact rational coefficients."""

    __slots__ = ("model", "keys", "coefs", "_parts")

    def __init__(self, model: ModelConfig, keys: np.ndarray, coefs: np.ndarray,
                 canonical: bool = False):
        self.model = model
        if not canonical:
            keys, coefs = _kernels.combine(np.asarray(keys, dtype=np.int64), coefs)
        self.keys = keys
        self.coefs = coefs
        self._parts = None

    # construction --------------------------------------------------------

    @classmethod
    def from_terms(cls, model: ModelConfig, terms: Mapping[Monomial, object] | Iterable):
        items = terms.items() if isinstance(terms, Mapping) else terms
        keys, coefs = [], []
        lay = model.layout
        for m, c in items:
            if not isinstance(m, Monomial):
                raise TypeError("terms must be keyed by Monomial")
            forms = tuple(m.forms)
            sign = _sort_sign(forms)
            m = Monomial(tuple(m.base), tuple(m.fiber), tuple(sorted(forms)), m.hbar, m.t)
            c = to_mpq(c)
            if not _check_fits(model, m) or c == 0:
                continue
            keys.append(_pack_one(lay, m))
            coefs.append(-c if sign else c)
        return cls(model, np.array(keys, dtype=np.int64), _obj(coefs))

    def terms(self) -> Iterator[tuple[Monomial, mpq]]:
        p = self.parts
        for n in range(len(self.keys)):
            mask = int(p["mask"][n])
            yield (Monomial(tuple(int(e) for e in p["base"][n]),
                            tuple(int(e) for e in p["fiber"][n]),
                            tuple(i for i in range(self.model.d) if mask >> i & 1),
                            int(p["h"][n]), int(p["t"][n])),
                   self.coefs[n])

    def to_dict(self) -> dict[Monomial, mpq]:
        return dict(self.terms())

    @property
    def parts(self) -> dict[str, np.ndarray]:
        if self._parts is None:
            self._parts = _unpack(self.model.layout, self.keys)
        return self._parts

    def _kernel_view(self):
        p = self.parts
        return (self.keys, p["base"], p["fdeg"], p["h"], p["t"], p["mask"])

    # arithmetic ----------------------------------------------------------

    def _same(self, other: "FormalSeries"):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        if other.model != self.model:
            raise ValueError("series live on different models")
        return other

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return FormalSeries(self.model, np.concatenate([self.keys, other.keys]),
                            np.concatenate([self.coefs, other.coefs]))

    __radd__ = __add__

    def __neg__(self):
        return FormalSeries(self.model, self.keys, -self.coefs, True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FormalSeries):
            return series_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def scale(self, c) -> "FormalSeries":
        c = to_mpq(c)
        if c == 0:
            return self.model.zero()
        return FormalSeries(self.model, self.keys, self.coefs * c, True)

    def _coerce(self, other):
        if isinstance(other, FormalSeries):
            return self._same(other)
        try:
            return self.model.const(other)
        except TypeError:
            return NotImplemented

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, mpq)):
            other = self.model.const(other)
        if not isinstance(other, FormalSeries):
            return NotImplemented
        return (self.model == other.model and np.array_equal(self.keys, other.keys)
                and bool(np.all(self.coefs == other.coefs)))

    __hash__ = None

    def is_zero(self) -> bool:
        return len(self.keys) == 0

    def __len__(self) -> int:
        return len(self.keys)

    # selection and small helpers ------------------------------------------

    def select(self, keep: np.ndarray) -> "FormalSeries":
        keep = np.asarray(keep, dtype=np.bool_)
        return FormalSeries(self.model, self.keys[keep], self.coefs[keep], True)

    def weight(self) -> np.ndarray:
        p = self.parts
        return 2 * p["h"] + p["fdeg"]

    def truncate(self, weight: int) -> "FormalSeries":
        """Keep terms of filtration weight at most ``weight``."""
        return self.select(self.weight() <= weight)

    def hbar_part(self, k: int) -> "FormalSeries":
        """Coefficient of ``h^k`` (with ``h`` removed)."""
        lay = self.model.layout
        sel = self.parts["h"] == k
        return FormalSeries(self.model, self.keys[sel] - (k << lay.h_shift),
                            self.coefs[sel], True)

    def form_degree_part(self, k: int) -> "FormalSeries":
        return self.select(_popcount(self.parts["mask"]) == k)

    def form_degrees(self) -> set[int]:
        return set(int(v) for v in _popcount(self.parts["mask"]))

    def fiber_zero(self) -> "FormalSeries":
        """Restriction ``y = 0`` (odd generators kept)."""
        return self.select(self.parts["fdeg"] == 0)

    def at_t(self, value) -> "FormalSeries":
        """Substitute a rational value for ``t``."""
        v = to_mpq(value)
        lay = self.model.layout
        tt = self.parts["t"]
        pw = np.array([v ** int(e) for e in tt], dtype=object) if len(tt) else _obj([])
        return FormalSeries(self.model, self.keys - (tt << lay.t_shift), self.coefs * pw)

    def d_dt(self) -> "FormalSeries":
        lay = self.model.layout
        tt = self.parts["t"]
        sel = tt > 0
        return FormalSeries(self.model, self.keys[sel] - (1 << lay.t_shift),
                            self.coefs[sel] * tt[sel].astype(object))

    def mul_t(self, k: int = 1) -> "FormalSeries":
        lay = self.model.layout
        sel = self.parts["t"] + k <= self.model.T_max
        return FormalSeries(self.model, self.keys[sel] + (k << lay.t_shift),
                            self.coefs[sel], True)

    def mul_h(self, k: int = 1) -> "FormalSeries":
        lay = self.model.layout
        p = self.parts
        sel = p["h"] + k <= self.model.H_max
        if self.model.W_max is not None:
            sel &= 2 * (p["h"] + k) + p["fdeg"] <= self.model.W_max
        return FormalSeries(self.model, self.keys[sel] + (k << lay.h_shift),
                            self.coefs[sel], True)

    def recast(self, model: ModelConfig) -> "FormalSeries":
        """Re-express on another model of the same kind and dimension."""
        if model.kind != self.model.kind or model.d != self.model.d:
            raise ValueError("recast needs the same kind and dimension")
        if model == self.model:
            return self
        return FormalSeries.from_terms(model, self.terms())

    def base_support(self) -> np.ndarray:
        return self.parts["base"]

    def __repr__(self) -> str:
        return f"FormalSeries({self.model.kind}, d={self.model.d}: {self})"

    def __str__(self) -> str:
        if self.is_zero():
            return "0"
        out = []
        for m, c in sorted(self.terms(), key=lambda mc: _print_order(mc[0])):
            body = m.render(self.model)
            mag = abs(c)
            if not body:
                s = _fmt(mag)
            elif mag == 1:
                s = body
            else:
                s = f"{_fmt(mag)}*{body}"
            if not out:
                out.append(s if c > 0 else f"-{s}")
            else:
                out.append((" + " if c > 0 else " - ") + s)
        return "".join(out)


def _print_order(m: Monomial):
    return (m.hbar, m.t, m.form_degree, m.fiber_degree, m.forms,
            tuple(-e for e in m.fiber), sum(abs(e) for e in m.base),
            tuple(-e for e in m.base))


def _fmt(c: mpq) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _obj(values) -> np.ndarray:
    arr = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        arr[i] = v
    return arr


def _sort_sign(forms: tuple[int, ...]) -> bool:
    inv = sum(1 for i in range(len(forms)) for j in range(i + 1, len(forms))
              if forms[i] > forms[j])
    return bool(inv & 1)


def _pack_one(lay: _Layout, m: Monomial) -> int:
    key = 0
    for i, e in enumerate(m.base):
        key |= (e + lay.base_offset) << lay.base_shift(i)
    for i, e in enumerate(m.fiber):
        key |= e << lay.fiber_shift(i)
    key |= m.hbar << lay.h_shift
    key |= m.t << lay.t_shift
    for i in m.forms:
        key |= 1 << (lay.mask_shift + i)
    return key


def _unpack(lay: _Layout, keys: np.ndarray) -> dict[str, np.ndarray]:
    d = lay.d
    bm = (1 << lay.base_bits) - 1
    fm = (1 << lay.fiber_bits) - 1
    base = np.empty((len(keys), d), dtype=np.int64)
    fiber = np.empty((len(keys), d), dtype=np.int64)
    for i in range(d):
        base[:, i] = ((keys >> lay.base_shift(i)) & bm) - lay.base_offset
        fiber[:, i] = (keys >> lay.fiber_shift(i)) & fm
    return {
        "base": base,
        "fiber": fiber,
        "fdeg": fiber.sum(axis=1),
        "h": (keys >> lay.h_shift) & ((1 << lay.h_bits) - 1),
        "t": (keys >> lay.t_shift) & ((1 << lay.t_bits) - 1),
        "mask": (keys >> lay.mask_shift) & ((1 << d) - 1),
    }


def _popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).copy()
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def _below(mask: np.ndarray, i: int) -> np.ndarray:
    """Number of odd generators with index below ``i``."""
    return _popcount(mask & ((1 << i) - 1))


def _signed(values: np.ndarray, neg: np.ndarray) -> np.ndarray:
    out = values.astype(object)
    out[neg] = -out[neg]
    return out


# ------------------------------------------------------------------ products


def series_mul(a: FormalSeries, b: FormalSeries, *, h_shift: int = 0) -> FormalSeries:
    """Graded-commutative product ``a * b``, optionally times ``h^h_shift``."""
    if a.model != b.model:
        raise ValueError("series live on different models")
    model = a.model
    if a.is_zero() or b.is_zero():
        return model.zero()
    key_extra = h_shift << model.layout.h_shift
    keys, ia, ib, neg = _kernels.product_pairs(
        a._kernel_view(), b._kernel_view(), model._limits, h_shift, key_extra)
    coefs = a.coefs[ia] * b.coefs[ib]
    if np.any(neg):
        coefs[neg] = -coefs[neg]
    return FormalSeries(model, keys, coefs)


def _check_index(model: ModelConfig, i: int) -> None:
    if not 0 <= i < model.d:
        raise IndexError(f"coordinate index {i} out of range for d={model.d}")


def base_derive(i: int, f: FormalSeries) -> FormalSeries:
    """``d/dx^i`` on the plane, the Euler derivation ``u^i d/du^i`` on the torus."""
    model = f.model
    _check_index(model, i)
    e = f.parts["base"][:, i]
    sel = e != 0
    if model.laurent:
        return FormalSeries(model, f.keys[sel], f.coefs[sel] * e[sel].astype(object), True)
    lay = model.layout
    return FormalSeries(model, f.keys[sel] - (1 << lay.base_shift(i)),
                        f.coefs[sel] * e[sel].astype(object))


def fiber_derive(i: int, f: FormalSeries) -> FormalSeries:
    model = f.model
    _check_index(model, i)
    e = f.parts["fiber"][:, i]
    sel = e > 0
    lay = model.layout
    return FormalSeries(model, f.keys[sel] - (1 << lay.fiber_shift(i)),
                        f.coefs[sel] * e[sel].astype(object))


def fiber_mul(i: int, f: FormalSeries) -> FormalSeries:
    """Multiply by ``y^i`` (truncating)."""
    model = f.model
    p = f.parts
    sel = p["fdeg"] + 1 <= model.Y_max
    if model.W_max is not None:
        sel &= 2 * p["h"] + p["fdeg"] + 1 <= model.W_max
    lay = model.layout
    return FormalSeries(model, f.keys[sel] + (1 << lay.fiber_shift(i)), f.coefs[sel], True)


def theta_mul(i: int, f: FormalSeries) -> FormalSeries:
    """Left multiplication by the odd generator ``th^i``."""
    model = f.model
    _check_index(model, i)
    mask = f.parts["mask"]
    sel = (mask >> i) & 1 == 0
    lay = model.layout
    sign = (_below(mask[sel], i) & 1).astype(np.bool_)
    c = f.coefs[sel].copy()
    c[sign] = -c[sign]
    return FormalSeries(model, f.keys[sel] + (1 << (lay.mask_shift + i)), c)


def theta_derive(i: int, f: FormalSeries) -> FormalSeries:
    """Left derivative ``d/dth^i``."""
    model = f.model
    _check_index(model, i)
    mask = f.parts["mask"]
    sel = (mask >> i) & 1 == 1
    lay = model.layout
    sign = (_below(mask[sel], i) & 1).astype(np.bool_)
    c = f.coefs[sel].copy()
    c[sign] = -c[sign]
    return FormalSeries(model, f.keys[sel] - (1 << (lay.mask_shift + i)), c)


def _sum(model: ModelConfig, parts: list[FormalSeries]) -> FormalSeries:
    parts = [p for p in parts if not p.is_zero()]
    if not parts:
        return model.zero()
    return FormalSeries(model, np.concatenate([p.keys for p in parts]),
                        np.concatenate([p.coefs for p in parts]))


def delta(a: FormalSeries) -> FormalSeries:
    """``delta = th^i d/dy^i``; odd, squares to zero."""
    return _sum(a.model, [theta_mul(i, fiber_derive(i, a)) for i in range(a.model.d)])


def delta_inv(a: FormalSeries) -> FormalSeries:
    """Contracting homotopy ``y^k d/dth^k`` divided by total degree ``p + q``.

    Terms of fiber degree ``p`` and form degree ``q`` with ``p + q = 0`` are
    sent to zero.
    """
    model = a.model
    parts = []
    for k in range(model.d):
        parts.append(fiber_mul(k, theta_derive(k, a)))
    raw = _sum(model, parts)
    if raw.is_zero():
        return raw
    p = raw.parts
    tot = p["fdeg"] + _popcount(p["mask"])  # unchanged by y^k d/dth^k
    inv = np.array([mpq(1, int(n)) for n in tot], dtype=object)
    return FormalSeries(model, raw.keys, raw.coefs * inv, True)


def chi(a: FormalSeries) -> FormalSeries:
    """Restriction ``y = th = 0``."""
    p = a.parts
    return a.select((p["fdeg"] == 0) & (p["mask"] == 0))


def hodge_residual(a: FormalSeries) -> FormalSeries:
    """``a - chi(a) - delta(delta_inv(a)) - delta_inv(delta(a))``.

    ``delta_inv`` raises fiber degree by one, so the composite is evaluated on
    a model with one extra fiber degree of room before mapping back.
    """
    model = a.model
    room = model.replace(Y_max=model.Y_max + 1,
                         W_max=None if model.W_max is None else model.W_max + 1)
    b = a.recast(room)
    r = b - chi(b) - delta(delta_inv(b)) - delta_inv(delta(b))
    return r.recast(model)


def de_rham(a: FormalSeries) -> FormalSeries:
    """Base exterior derivative ``th^i d/dx^i`` (Euler derivations on the torus)."""
    return _sum(a.model, [theta_mul(i, base_derive(i, a)) for i in range(a.model.d)])


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<name>[A-Za-z]+\d*)|(?P<op>[-+*^()]))")


class _Parser:
    """Recursive descent over ``expr := term (('+'|'-') term)*``.

    ``term := ['-'] factor ('*' factor)*``, ``factor := atom ['^' ['-'] int]``,
    ``atom := rational | generator | '(' expr ')'``.
    """

    def __init__(self, model: ModelConfig, text: str):
        self.model = model
        self.text = text
        self.tokens = self._lex(text)
        self.pos = 0

    def _lex(self, text):
        out = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(text, i)
            if not m or m.end() == i:
                self._fail("unexpected character", i, text[i])
            kind = m.lastgroup
            start = m.start(kind)
            out.append((kind, m.group(kind), start))
            i = m.end()
        out.append(("end", "", len(text)))
        return out

    def _fail(self, msg, offset, token):
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        raise ParseError(msg, line, col, token)

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> FormalSeries:
        if self.peek()[0] == "end":
            self._fail("empty expression", 0, "")
        s = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            self._fail("unexpected token", off, val)
        return s

    def expr(self):
        acc = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self):
        neg = False
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            neg = True
        acc = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            acc = acc * self.factor()
        return -acc if neg else acc

    def factor(self):
        kind, val, off = self.peek()
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            k, v, o = self.take()
            if k != "num" or "/" in v:
                self._fail("exponent must be an integer", o, v)
            e = sign * int(v)
            return self._power(base, e, kind, val, off)
        return base

    def _power(self, base, e, kind, val, off):
        if e < 0:
            if kind != "name" or not self._is_base_gen(val) or not self.model.laurent:
                self._fail("negative exponent only allowed on torus base generators", off, val)
            i = int(val[1:]) - 1
            m = Monomial.unit(self.model.d)
            b = list(m.base)
            b[i] = e
            return FormalSeries.from_terms(self.model, {Monomial(tuple(b), m.fiber): 1})
        out = self.model.one()
        for _ in range(e):
            out = out * base
        return out

    def _is_base_gen(self, name):
        return re.fullmatch(r"[xu]\d+", name) is not None

    def atom(self):
        kind, val, off = self.take()
        model = self.model
        if kind == "num":
            return model.const(mpq(val))
        if kind == "op" and val == "(":
            s = self.expr()
            k, v, o = self.take()
            if v != ")":
                self._fail("expected ')'", o, v)
            return s
        if kind != "name":
            self._fail("unexpected token", off, val)
        d = model.d
        m = Monomial.unit(d)
        if val == "h":
            return FormalSeries.from_terms(model, {Monomial(m.base, m.fiber, (), 1, 0): 1})
        if val == "t":
            return FormalSeries.from_terms(model, {Monomial(m.base, m.fiber, (), 0, 1): 1})
        mm = re.fullmatch(r"(x|u|y|th)(\d+)", val)
        if not mm:
            self._fail("unknown generator", off, val)
        g, idx = mm.group(1), int(mm.group(2)) - 1
        if not 0 <= idx < d:
            self._fail("generator index out of range", off, val)
        if g in ("x", "u") and g != model.base_name:
            self._fail(f"use {model.base_name}<i> for base coordinates on this model", off, val)
        if g in ("x", "u"):
            b = list(m.base)
            b[idx] = 1
            return FormalSeries.from_terms(model, {Monomial(tuple(b), m.fiber): 1})
        if g == "y":
            f = list(m.fiber)
            f[idx] = 1
            return FormalSeries.from_terms(model, {Monomial(m.base, tuple(f)): 1})
        return FormalSeries.from_terms(model, {Monomial(m.base, m.fiber, (idx,)): 1})
