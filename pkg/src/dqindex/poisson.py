"""Polyvector and form calculus on the base, and zeroth Poisson homology.

Polyvectors are stored as series in odd variables ``xi_i`` standing for
``d/dx^i`` (on the torus: the Euler fields ``u_i d/du_i``).  The odd
generators of :class:`~dqindex.weyl.FormalSeries` are reused for ``xi``, so
a bivector ``pi^{12} d_1 ^ d_2`` is the series ``pi12*th1*th2``.  Forms use
the same generators for ``dx^i`` (``du_i/u_i`` on the torus).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
from .weyl import (FormalSeries, ModelConfig, Monomial, _popcount, _sum,
                   base_derive, de_rham, series_mul, theta_derive, theta_mul)

__all__ = [
    "NotPoisson",
    "Polyvector",
    "DifferentialForm",
    "schouten",
    "lichnerowicz",
    "koszul",
    "de_rham",
    "contract",
    "poisson_bracket",
    "hp0_reduce",
    "hp_dim",
    "standard_pi",
]


class NotPoisson(ValueError):
    """The bivector does not satisfy [pi, pi] = 0."""


def _check_base(f: FormalSeries, what: str) -> None:
    p = f.parts
    if (p["fdeg"] != 0).any() or (p["t"] != 0).any():
        raise ValueError(f"{what} must not contain fiber or t content")


@dataclass(frozen=True, eq=False)
class Polyvector:
    """A polyvector field; ``series`` uses odd generators as ``xi_i``."""

    series: FormalSeries

    def __post_init__(self):
        _check_base(self.series, "polyvector")

    @classmethod
    def from_components(cls, model: ModelConfig, comps: Mapping[tuple[int, ...], object]):
        parts = []
        for idx, f in comps.items():
            if list(idx) != sorted(set(idx)):
                raise ValueError("polyvector components are indexed by ascending tuples")
            if isinstance(f, str):
                f = model.parse(f)
            elif not isinstance(f, FormalSeries):
                f = model.const(f)
            for i in reversed(idx):
                f = theta_mul(i, f)
            parts.append(f)
        return cls(_sum(model, parts))

    @property
    def model(self) -> ModelConfig:
        return self.series.model

    @property
    def degrees(self) -> set[int]:
        return self.series.form_degrees()

    @property
    def degree(self) -> int:
        degs = self.degrees
        if len(degs) > 1:
            raise ValueError("inhomogeneous polyvector")
        return degs.pop() if degs else 0

    def components(self) -> dict[tuple[int, ...], FormalSeries]:
        out: dict[tuple[int, ...], list] = {}
        for m, c in self.series.terms():
            bare = Monomial(m.base, m.fiber, (), m.hbar, m.t)
            out.setdefault(m.forms, []).append((bare, c))
        return {k: FormalSeries.from_terms(self.model, v) for k, v in sorted(out.items())}

    def __add__(self, other):
        return Polyvector(self.series + other.series)

    def __sub__(self, other):
        return Polyvector(self.series - other.series)

    def __neg__(self):
        return Polyvector(-self.series)

    def scale(self, c):
        return Polyvector(self.series.scale(c) if not isinstance(c, FormalSeries)
                          else series_mul(c, self.series))

    def __eq__(self, other):
        return isinstance(other, Polyvector) and self.series == other.series

    __hash__ = None

    def is_zero(self) -> bool:
        return self.series.is_zero()

    def __str__(self):
        return str(self.series).replace("th", "xi")


@dataclass(frozen=True, eq=False)
class DifferentialForm:
    """A base differential form; odd generators are ``dx^i``."""

    series: FormalSeries

    def __post_init__(self):
        _check_base(self.series, "differential form")

    @property
    def model(self):
        return self.series.model

    def __add__(self, other):
        return DifferentialForm(self.series + other.series)

    def __sub__(self, other):
        return DifferentialForm(self.series - other.series)

    def __eq__(self, other):
        return isinstance(other, DifferentialForm) and self.series == other.series

    __hash__ = None

    def is_zero(self) -> bool:
        return self.series.is_zero()

    def __str__(self):
        return str(self.series)


def _right_xi_derive(i: int, f: FormalSeries) -> FormalSeries:
    """Right derivative in ``xi_i``: sign from the generators to the right of ``i``."""
    left = theta_derive(i, f)
    # left and right derivatives differ by (-1)^{k-1} on degree-k monomials
    deg = _popcount(left.parts["mask"])
    flip = (deg & 1).astype(np.bool_)
    c = left.coefs.copy()
    c[flip] = -c[flip]
    return FormalSeries(left.model, left.keys, c, True)


def _schouten_series(P: FormalSeries, Q: FormalSeries) -> FormalSeries:
    model = P.model
    parts = []
    for i in range(model.d):
        a = _right_xi_derive(i, P)
        if not a.is_zero():
            parts.append(series_mul(a, base_derive(i, Q)))
        b = theta_derive(i, Q)
        if not b.is_zero():
            parts.append(-series_mul(base_derive(i, P), b))
    return _sum(model, parts)


def schouten(P: Polyvector, Q: Polyvector) -> Polyvector:
    """Schouten-Nijenhuis bracket; ``[X, f] = X(f)`` and ``[X, Y]`` is the Lie bracket."""
    if P.model != Q.model:
        raise ValueError("polyvectors live on different models")
    return Polyvector(_schouten_series(P.series, Q.series))


def _require_poisson(pi: Polyvector) -> None:
    if pi.degrees - {2}:
        raise NotPoisson("expected a bivector")
    if not schouten(pi, pi).is_zero():
        raise NotPoisson("[pi, pi] != 0")


def lichnerowicz(pi: Polyvector, P: Polyvector) -> Polyvector:
    _require_poisson(pi)
    return schouten(pi, P)


def poisson_bracket(pi: Polyvector, f: FormalSeries, g: FormalSeries) -> FormalSeries:
    """``{f, g} = pi(df, dg) = sum_{i<j} pi^{ij}(d_i f d_j g - d_j f d_i g)``."""
    out = []
    for (i, j), c in pi.components().items():
        out.append(series_mul(c, series_mul(base_derive(i, f), base_derive(j, g))
                              - series_mul(base_derive(j, f), base_derive(i, g))))
    return _sum(f.model, out)


def contract(pi: Polyvector, w: FormalSeries) -> FormalSeries:
    """``i_pi`` for a bivector: ``sum_{i<j} pi^{ij} d/dth^j d/dth^i``."""
    out = []
    for (i, j), c in pi.components().items():
        out.append(series_mul(c, theta_derive(j, theta_derive(i, w))))
    return _sum(w.model, out)


def koszul(pi: Polyvector, w: DifferentialForm | FormalSeries, *, check: bool = True):
    """``L_pi = i_pi d - d i_pi``."""
    if check:
        _require_poisson(pi)
    s = w.series if isinstance(w, DifferentialForm) else w
    out = contract(pi, de_rham(s)) - de_rham(contract(pi, s))
    return DifferentialForm(out) if isinstance(w, DifferentialForm) else out


def standard_pi(model: ModelConfig) -> Polyvector:
    """``d_1 ^ d_2 + d_3 ^ d_4 + ...`` (constant in the Euler frame on the torus)."""
    comps = {(2 * k, 2 * k + 1): 1 for k in range(model.d // 2)}
    return Polyvector.from_components(model, comps)


# ------------------------------------------------------------------ HP_0


def _function_basis(model: ModelConfig, cutoff: int) -> list[tuple[int, ...]]:
    d = model.d
    if model.laurent:
        return list(itertools.product(range(-cutoff, cutoff + 1), repeat=d))
    return [e for e in itertools.product(range(cutoff + 1), repeat=d) if sum(e) <= cutoff]


def _size(model: ModelConfig, e: tuple[int, ...]) -> int:
    return max((abs(v) for v in e), default=0) if model.laurent else sum(e)


def _strip_hbar(pi: Polyvector) -> Polyvector:
    hs = set(int(h) for h in pi.series.parts["h"])
    if len(hs) > 1:
        raise ValueError("per-order reduction needs pi homogeneous in h")
    k = hs.pop() if hs else 0
    return Polyvector(pi.series.hbar_part(k)) if k else pi


def _pi_signature(pi: Polyvector):
    s = pi.series
    return (s.model, s.keys.tobytes(), tuple(str(c) for c in s.coefs))


def _pi_extent(pi: Polyvector) -> tuple[int, int]:
    """(smallest coefficient degree, largest mode size) of pi's components."""
    base = pi.series.parts["base"]
    if len(base) == 0:
        return 0, 0
    if pi.model.laurent:
        return 0, int(np.abs(base).max())
    return int(base.sum(axis=1).min()), 0


class _Reducer:
    """Reduced row echelon form of the image of L_pi on 1-forms."""

    def __init__(self, pi: Polyvector, cutoff: int):
        model = pi.model
        self.model = model
        self.cutoff = cutoff
        pmin, pmode = _pi_extent(pi)
        src = cutoff + 1 - (pmin - 1) if not model.laurent else cutoff + pmode
        rows = []
        for e in _function_basis(model, src):
            for k in range(model.d):
                mono = Monomial(tuple(e), (0,) * model.d, (k,))
                img = koszul(pi, FormalSeries.from_terms(model, {mono: 1}), check=False)
                vec = {m.base: c for m, c in img.terms() if m.hbar == 0}
                if vec:
                    rows.append(vec)
        # pivot order: monomials outside the cutoff first, then larger size,
        # then lexicographically larger exponents
        def rank_key(e):
            return (_size(model, e) > cutoff, _size(model, e), e)
        self.rank_key = rank_key
        self.pivots: dict[tuple[int, ...], dict] = {}
        for vec in rows:
            vec = self._reduce(vec)
            if not vec:
                continue
            piv = max(vec, key=rank_key)
            inv = 1 / vec[piv]
            vec = {m: c * inv for m, c in vec.items()}
            # keep the echelon form fully reduced
            for p, other in self.pivots.items():
                c = other.get(piv)
                if c:
                    for m, v in vec.items():
                        nv = other.get(m, 0) - c * v
                        if nv:
                            other[m] = nv
                        else:
                            other.pop(m, None)
            self.pivots[piv] = vec
        self.inside = [p for p in self.pivots if _size(model, p) <= cutoff]

    def _reduce(self, vec: dict) -> dict:
        vec = dict(vec)
        for piv in sorted((m for m in vec if m in self.pivots), key=self.rank_key, reverse=True):
            c = vec.get(piv)
            if not c:
                continue
            for m, v in self.pivots[piv].items():
                nv = vec.get(m, 0) - c * v
                if nv:
                    vec[m] = nv
                else:
                    vec.pop(m, None)
        return vec

    def reduce(self, vec: dict) -> dict:
        # a fully reduced echelon form needs only one pass over pivots present
        out = dict(vec)
        changed = True
        while changed:
            changed = False
            for piv in [m for m in out if m in self.pivots]:
                c = out.get(piv)
                if not c:
                    continue
                changed = True
                for m, v in self.pivots[piv].items():
                    nv = out.get(m, 0) - c * v
                    if nv:
                        out[m] = nv
                    else:
                        out.pop(m, None)
        return out


@lru_cache(maxsize=64)
def _reducer_cached(sig, cutoff: int, pi_holder):
    return _Reducer(pi_holder.pi, cutoff)


class _Holder:
    __slots__ = ("pi", "sig")

    def __init__(self, pi):
        self.pi = pi
        self.sig = _pi_signature(pi)

    def __hash__(self):
        return hash(self.sig)

    def __eq__(self, other):
        return self.sig == other.sig


def _reducer(pi: Polyvector, cutoff: int) -> _Reducer:
    h = _Holder(pi)
    return _reducer_cached(h.sig, cutoff, h)


def hp0_reduce(f: FormalSeries, pi: Polyvector) -> FormalSeries:
    """Canonical representative of ``f`` in ``functions / L_pi(1-forms)``, order by order in h."""
    _require_poisson(pi)
    _check_base(f, "hp0_reduce input")
    if f.form_degrees() - {0}:
        raise ValueError("hp0_reduce expects a function")
    model = f.model
    pi1 = _strip_hbar(pi)
    if f.is_zero():
        return f
    cutoff = max(model.base_cutoff, max(_size(model, tuple(int(v) for v in e))
                                       for e in f.parts["base"]))
    red = _reducer(pi1, cutoff)
    out = []
    for k in sorted(set(int(h) for h in f.parts["h"])):
        vec = {m.base: c for m, c in f.hbar_part(k).terms()}
        vec = red.reduce(vec)
        terms = {Monomial(b, (0,) * model.d, (), k): c for b, c in vec.items()}
        out.append(FormalSeries.from_terms(model, terms))
    return _sum(model, out)


def hp_dim(pi: Polyvector) -> int:
    """Dimension of the functions within the model cutoff modulo the image of L_pi."""
    _require_poisson(pi)
    model = pi.model
    cutoff = model.base_cutoff
    pi1 = _strip_hbar(pi)
    if pi1.is_zero():
        return len(_function_basis(model, cutoff))
    red = _reducer(pi1, cutoff)
    return len(_function_basis(model, cutoff)) - len(red.inside)
