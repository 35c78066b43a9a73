"""Star products on base functions, the fiberwise product, and idempotents.

A star product is stored as its bidifferential expansion
``a * b = ab + sum_k h^k sum coef * d^alpha(a) * d^beta(b)``.  On the torus
the derivatives are the Euler derivations ``u^i d/du^i``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from math import factorial
from typing import Callable

from gmpy2 import mpq

from .hochschild import Cochain
from .matrix import MatrixSeries, as_matrix
from .poisson import Polyvector
from .weyl import (FormalSeries, ModelConfig, base_derive, fiber_derive,
                   series_mul)

__all__ = [
    "StarProduct",
    "moyal_star",
    "moyal_torus",
    "star_mul",
    "mat_star_mul",
    "naturality_check",
    "fiber_product",
    "diamond",
    "mat_diamond",
    "mat_neumann_inverse",
    "mat_binomial_invsqrt",
    "idempotent_lift",
    "idempotent_path",
    "path_derivative_residual",
    "path_sandwich_residual",
    "principal_symbol",
    "ch00",
]

Alpha = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class StarProduct:
    """``terms[k]`` lists ``(coef, alpha, beta)`` for the ``h^k`` bidifferential operator."""

    model: ModelConfig
    terms: tuple[tuple[int, tuple[tuple[FormalSeries, Alpha, Alpha], ...]], ...]
    pi1: tuple[tuple[mpq, ...], ...] | None = None
    name: str = "custom"

    def B(self, k: int):
        for kk, items in self.terms:
            if kk == k:
                return items
        return ()

    @property
    def orders(self) -> range:
        return range(1, self.model.H_max + 1)

    def constant_coefficients(self) -> bool:
        for _, items in self.terms:
            for c, _, _ in items:
                p = c.parts
                if len(c) > 1 or (len(c) == 1 and (p["base"].any() or p["fdeg"].any()
                                                    or p["mask"].any() or p["h"].any())):
                    return False
        return True

    def __call__(self, a, b):
        if isinstance(a, MatrixSeries) or isinstance(b, MatrixSeries):
            return mat_star_mul(a, b, self)
        return star_mul(a, b, self)


def _constant_pi(pi1: Polyvector) -> tuple[tuple[mpq, ...], ...]:
    model = pi1.model
    d = model.d
    mat = [[mpq(0)] * d for _ in range(d)]
    if pi1.is_zero():
        return tuple(tuple(r) for r in mat)
    if pi1.degree != 2:
        raise ValueError("expected a bivector")
    for (i, j), f in pi1.components().items():
        p = f.parts
        if len(f) != 1 or p["base"].any() or p["fdeg"].any() or p["h"].any() or p["t"].any():
            raise ValueError("Moyal product needs constant coefficients")
        c = f.coefs[0]
        mat[i][j] = c
        mat[j][i] = -c
    return tuple(tuple(r) for r in mat)


def _moyal_terms(model: ModelConfig, pi: tuple[tuple[mpq, ...], ...]):
    """Expand ``(pi^{ij} d_i (x) d_j)^k / (2^k k!)`` for ``k = 1..H_max``."""
    d = model.d
    linear = [(i, j, pi[i][j]) for i in range(d) for j in range(d) if pi[i][j] != 0]
    zero = (0,) * d
    power = {(zero, zero): mpq(1)}
    out = []
    for k in range(1, model.H_max + 1):
        nxt = defaultdict(lambda: mpq(0))
        for (a, b), c in power.items():
            for i, j, p in linear:
                na = a[:i] + (a[i] + 1,) + a[i + 1:]
                nb = b[:j] + (b[j] + 1,) + b[j + 1:]
                nxt[(na, nb)] += c * p
        power = {key: v for key, v in nxt.items() if v != 0}
        norm = mpq(1, 2 ** k * factorial(k))
        items = tuple((model.const(c * norm), a, b) for (a, b), c in sorted(power.items()))
        out.append((k, items))
    return tuple(out)


def moyal_star(pi1: Polyvector) -> StarProduct:
    """Moyal product for a constant bivector (plane or torus)."""
    pi = _constant_pi(pi1)
    model = pi1.model
    return StarProduct(model, _moyal_terms(model, pi), pi, "moyal")


def moyal_torus(pi1: Polyvector) -> StarProduct:
    """Moyal product with Euler derivations on Laurent polynomials."""
    if not pi1.model.laurent:
        raise ValueError("moyal_torus needs a torus model")
    return moyal_star(pi1)


def _require_base(a: FormalSeries, what: str):
    p = a.parts
    if p["fdeg"].any() or p["mask"].any():
        raise ValueError(f"{what}: star products act on base functions (no y or odd content)")


def _derivs(f: FormalSeries, alpha: Alpha, cache: dict, derive) -> FormalSeries:
    hit = cache.get(alpha)
    if hit is not None:
        return hit
    # build from the largest cached lower multi-index
    i = next((i for i, a in enumerate(alpha) if a), None)
    if i is None:
        cache[alpha] = f
        return f
    lower = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
    out = derive(i, _derivs(f, lower, cache, derive))
    cache[alpha] = out
    return out


def _bidiff(a: FormalSeries, b: FormalSeries, s: StarProduct, derive) -> FormalSeries:
    model = a.model
    parts = [series_mul(a, b)]
    ca: dict = {}
    cb: dict = {}
    for k, items in s.terms:
        for coef, al, be in items:
            da = _derivs(a, al, ca, derive)
            if da.is_zero():
                continue
            db = _derivs(b, be, cb, derive)
            if db.is_zero():
                continue
            p = series_mul(da, db, h_shift=k)
            if p.is_zero():
                continue
            if len(coef) == 1 and not coef.parts["base"].any():
                p = p.scale(coef.coefs[0])
            else:
                p = series_mul(coef, p)
            parts.append(p)
    from .weyl import _sum
    return _sum(model, parts)


def star_mul(a: FormalSeries, b: FormalSeries, s: StarProduct) -> FormalSeries:
    _require_base(a, "star_mul")
    _require_base(b, "star_mul")
    return _bidiff(a, b, s, base_derive)


def mat_star_mul(A, B, s: StarProduct) -> MatrixSeries:
    n = max(x.N for x in (A, B) if isinstance(x, MatrixSeries))
    return as_matrix(A, n).matmul(as_matrix(B, n), lambda x, y: star_mul(x, y, s))


def naturality_check(s: StarProduct) -> bool:
    """Each ``B_k`` differentiates at most ``k`` times in each argument."""
    for k, items in s.terms:
        for _, al, be in items:
            if sum(al) > k or sum(be) > k:
                return False
    return True


def _require_flat(s: StarProduct, fed):
    if fed is not None and not fed.flat_connection:
        raise ValueError("the fiberwise product is only available with a flat connection")
    if not s.constant_coefficients():
        raise ValueError("the fiberwise product needs constant coefficients")


def fiber_product(s: StarProduct, fed=None, N: int = 1) -> Cochain:
    """The product ``a <> b``: the same series acting in the fiber variables."""
    _require_flat(s, fed)
    model = s.model
    zero = (0,) * model.d
    items = []
    for i in range(N):
        for j in range(N):
            for l in range(N):
                items.append((model.one(), zero, i, j, ((i, l, zero), (l, j, zero)), 1))
                for k, terms in s.terms:
                    hk = model.parse(f"h^{k}") if k <= model.H_max else model.zero()
                    if hk.is_zero():
                        continue
                    for coef, al, be in terms:
                        items.append((hk, zero, i, j, ((i, l, al), (l, j, be)), coef.coefs[0]))
    return Cochain.from_terms(model, N, items)


def diamond(a: FormalSeries, b: FormalSeries, s: StarProduct) -> FormalSeries:
    """Fiberwise product of two series (forms allowed)."""
    return _bidiff(a, b, s, fiber_derive)


def mat_diamond(A, B, s: StarProduct) -> MatrixSeries:
    n = max(x.N for x in (A, B) if isinstance(x, MatrixSeries))
    return as_matrix(A, n).matmul(as_matrix(B, n), lambda x, y: diamond(x, y, s))


# ------------------------------------------------------------ power series


def _entry_mul(prod) -> Callable[[FormalSeries, FormalSeries], FormalSeries]:
    if isinstance(prod, StarProduct):
        return lambda x, y: _bidiff(x, y, prod, base_derive)
    if prod is None:
        return series_mul
    return prod


def _weight_zero_part(Z: MatrixSeries) -> MatrixSeries:
    return Z.map(lambda e: e.select(e.weight() == 0))


def _power_series(Z: MatrixSeries, coefs: Callable[[int], mpq], prod) -> MatrixSeries:
    if not _weight_zero_part(Z).is_zero():
        raise ValueError("series argument must have filtration weight at least 1")
    mul = _entry_mul(prod)
    model = Z.model
    out = MatrixSeries.identity(model, Z.N)
    power = MatrixSeries.identity(model, Z.N)
    for k in range(1, model.Y_max + 2 * model.H_max + 2):
        power = power.matmul(Z, mul)
        if power.is_zero():
            break
        out = out + power.scale(coefs(k))
    return out


def mat_neumann_inverse(A: MatrixSeries, prod=None) -> MatrixSeries:
    """``(I + Z)^{-1} = sum (-Z)^k``; requires ``Z`` of positive filtration weight."""
    A = as_matrix(A)
    Z = A - MatrixSeries.identity(A.model, A.N)
    return _power_series(Z, lambda k: mpq(-1) ** k, prod)


def _binom_half(k: int) -> mpq:
    c = mpq(1)
    for j in range(k):
        c *= (mpq(-1, 2) - j) / (j + 1)
    return c


def mat_binomial_invsqrt(Z: MatrixSeries, prod=None) -> MatrixSeries:
    """``(I + Z)^{-1/2} = sum binom(-1/2, k) Z^k``."""
    return _power_series(as_matrix(Z), _binom_half, prod)


# ------------------------------------------------------------ idempotents


def _is_principal_only(q: MatrixSeries) -> bool:
    for _, _, e in q.entries():
        p = e.parts
        if p["fdeg"].any() or p["mask"].any() or p["h"].any() or p["t"].any():
            return False
    return True


def _lift_formula(q: MatrixSeries, s: StarProduct) -> MatrixSeries:
    model = q.model
    half = MatrixSeries.identity(model, q.N).scale(mpq(1, 2))
    qq = mat_star_mul(q, q, s)
    inv = mat_binomial_invsqrt((qq - q).scale(4), s)
    return half + mat_star_mul(q - half, inv, s)


def idempotent_lift(q, s: StarProduct) -> MatrixSeries:
    """Star idempotent with principal part ``q``."""
    q = as_matrix(q)
    if not _is_principal_only(q):
        raise ValueError("q must be a matrix of base functions without h")
    if q.matmul(q) != q:
        raise ValueError("q is not a pointwise idempotent")
    return _lift_formula(q, s)


def idempotent_path(P: MatrixSeries, Q: MatrixSeries, s: StarProduct) -> MatrixSeries:
    """Idempotents ``P_t`` with ``P_0 = P`` and ``P_1 = Q`` (polynomial in ``t``)."""
    model = P.model
    if model.T_max < model.H_max:
        raise ValueError("idempotent paths need T_max >= H_max")
    if principal_symbol(P) != principal_symbol(Q):
        raise ValueError("P and Q have different principal parts")
    P0 = P + (Q - P).map(lambda e: e.mul_t(1))
    return _lift_formula(P0, s)


def path_derivative_residual(Pt: MatrixSeries, s: StarProduct) -> MatrixSeries:
    """``d_t P - [P, P*dP - dP*P]``; zero along any idempotent path."""
    dP = Pt.map(lambda e: e.d_dt())
    inner = mat_star_mul(Pt, dP, s) - mat_star_mul(dP, Pt, s)
    comm = mat_star_mul(Pt, inner, s) - mat_star_mul(inner, Pt, s)
    return dP - comm


def path_sandwich_residual(Pt: MatrixSeries, s: StarProduct) -> MatrixSeries:
    """``P * d_t P * P``; zero along any idempotent path."""
    dP = Pt.map(lambda e: e.d_dt())
    return mat_star_mul(mat_star_mul(Pt, dP, s), Pt, s)


def principal_symbol(P) -> MatrixSeries:
    return as_matrix(P).map(lambda e: e.hbar_part(0))


def ch00(P) -> FormalSeries:
    """Lowest Chern character component: the matrix trace."""
    return as_matrix(P).trace()
