"""Seeded random samples for property checks (monomials, series, chains, cochains)."""

from __future__ import annotations

import random
from typing import Sequence

from gmpy2 import mpq

from . import hochschild as hh
from .matrix import MatrixSeries
from .weyl import FormalSeries, ModelConfig, Monomial


def rational(rng: random.Random, span: int = 5) -> mpq:
    num = rng.randint(-span, span) or 1
    return mpq(num, rng.randint(1, 3))


def monomial(rng: random.Random, model: ModelConfig, *, fiber: int | None = None,
             forms: int | None = None, hbar: int = 0, base: int = 2) -> Monomial:
    d = model.d
    fdeg = rng.randint(0, model.Y_max) if fiber is None else fiber
    fib = [0] * d
    for _ in range(fdeg):
        fib[rng.randrange(d)] += 1
    lo = -base if model.laurent else 0
    b = tuple(rng.randint(lo, base) for _ in range(d))
    k = rng.randint(0, d) if forms is None else forms
    fm = tuple(sorted(rng.sample(range(d), k)))
    return Monomial(b, tuple(fib), fm, hbar)


def series(rng: random.Random, model: ModelConfig, terms: int = 3, **kw) -> FormalSeries:
    items = [(monomial(rng, model, **kw), rational(rng)) for _ in range(terms)]
    return _fit(model, items)


def _fit(model: ModelConfig, items) -> FormalSeries:
    from .weyl import _check_fits
    return FormalSeries.from_terms(model, [(m, c) for m, c in items if _check_fits(model, m)])


def base_function(rng: random.Random, model: ModelConfig, terms: int = 3,
                  degree: int = 2, hbar: int = 0) -> FormalSeries:
    items = []
    for _ in range(terms):
        lo = -degree if model.laurent else 0
        b = tuple(rng.randint(lo, degree) for _ in range(model.d))
        items.append((Monomial(b, (0,) * model.d, (), rng.randint(0, hbar)), rational(rng)))
    return _fit(model, items)


def matrix(rng: random.Random, model: ModelConfig, N: int, terms: int = 2, **kw) -> MatrixSeries:
    return MatrixSeries(model, [[series(rng, model, rng.randint(0, terms), **kw)
                                 for _ in range(N)] for _ in range(N)])


def chain(rng: random.Random, model: ModelConfig, n: int, N: int = 1, cap: int | None = None,
          max_fiber: int = 2) -> hh.Chain:
    """Sum of two decomposable ``n``-chains with small random entries."""
    out = hh.Chain(model, N, cap=cap)
    for _ in range(2):
        ents = [matrix(rng, model, N, 2, fiber=rng.randint(0, max_fiber),
                       forms=rng.choice([0, 0, 1])) for _ in range(n + 1)]
        out = out + hh.Chain.from_tensor(model, ents, cap)
    return out


def cochain(rng: random.Random, model: ModelConfig, arity: int, N: int = 1,
            terms: int = 2, forms: int | None = None, max_order: int = 2) -> hh.Cochain:
    """Random normalized cochain: every argument is differentiated at least once."""
    d = model.d
    items = []
    for _ in range(terms):
        k = rng.randint(0, 1) if forms is None else forms
        fm = tuple(sorted(rng.sample(range(d), k)))
        pref = FormalSeries.from_terms(model, [(Monomial((0,) * d, (0,) * d, fm), 1)])
        beta = _multi(rng, d, rng.randint(0, 2))
        args = []
        for _ in range(arity):
            al = _multi(rng, d, rng.randint(1, max_order))
            args.append((rng.randrange(N), rng.randrange(N), al))
        items.append((pref, beta, rng.randrange(N), rng.randrange(N), tuple(args), rational(rng)))
    return hh.Cochain.from_terms(model, N, items)


def _multi(rng: random.Random, d: int, total: int) -> tuple[int, ...]:
    e = [0] * d
    for _ in range(total):
        e[rng.randrange(d)] += 1
    return tuple(e)


def pick(rng: random.Random, seq: Sequence):
    return seq[rng.randrange(len(seq))]


def conjugated_idempotent(rng: random.Random, model: ModelConfig, N: int, rank: int = 1,
                          factors: int = 2, degree: int = 1) -> MatrixSeries:
    """``g diag(1,..,1,0,..,0) g^-1`` with ``g`` a product of elementary unipotents.

    Each factor ``I + f E_ij`` has inverse ``I - f E_ij``, so entries stay
    (Laurent) polynomials in the base.
    """
    one = MatrixSeries.identity(model, N)
    g, gi = one, one
    for _ in range(factors):
        i, j = rng.sample(range(N), 2)
        f = base_function(rng, model, 1, degree)
        if f.is_zero():
            continue
        E = MatrixSeries.unit(model, N, i, j, f)
        g = g.matmul(one + E)
        gi = (one - E).matmul(gi)
    e = MatrixSeries(model, [[model.one() if r == c and r < rank else model.zero()
                              for c in range(N)] for r in range(N)])
    return g.matmul(e).matmul(gi)
