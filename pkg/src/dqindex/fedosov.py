"""Fedosov differential ``D = nabla - delta + A`` and its companions.

Derivations of the fiber algebra are stored as vector fields
``V = sum_k V^k d/dy^k`` whose components are series (usually 1-forms).
A derivation is determined by its values on the generators ``y^k``, which
is how the recursion for ``A`` is set up: requiring ``D^2 y^k = 0`` and
applying ``delta_inv`` gives

    A^k = delta_inv(R^k + nabla(A^k) + A(nabla y^k) + A(A^k)),

with ``R^k = nabla(nabla(y^k))``, solved degree by degree in ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .matrix import MatrixSeries, graded_commutator
from .weyl import (FormalSeries, ModelConfig, de_rham, delta, delta_inv,
                   fiber_derive, fiber_mul, series_mul, theta_mul, _sum)

__all__ = [
    "TorsionError",
    "NonConvergence",
    "VectorField",
    "Fedosov",
    "build_A",
    "apply_D",
    "flat_lift",
    "lift_chain",
    "gamma_E",
    "solve_DE",
    "exact_part",
]


class TorsionError(ValueError):
    """Christoffel symbols are not symmetric in the lower indices."""


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class VectorField:
    """Fiberwise derivation ``sum_k comps[k] d/dy^k``."""

    comps: tuple[FormalSeries, ...]

    def __call__(self, a: FormalSeries) -> FormalSeries:
        model = a.model
        return _sum(model, [series_mul(c, fiber_derive(k, a))
                            for k, c in enumerate(self.comps) if not c.is_zero()])

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.comps)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(-c for c in self.comps))


def _as_series(model: ModelConfig, v) -> FormalSeries:
    if isinstance(v, FormalSeries):
        return v
    if isinstance(v, str):
        return model.parse(v)
    return model.const(v)


def _is_base_only(f: FormalSeries) -> bool:
    p = f.parts
    return bool((p["fdeg"] == 0).all() and (p["mask"] == 0).all()
                and (p["h"] == 0).all() and (p["t"] == 0).all())


def exact_part(a, drop: int = 1):
    """Part of ``a`` unaffected by truncation after ``drop`` weight-lowering steps.

    Operators such as ``delta`` lower fiber degree, so a composite of ``drop``
    of them is exact only below the cutoffs minus ``drop``.
    """
    if isinstance(a, MatrixSeries):
        return a.map(lambda e: exact_part(e, drop))
    model = a.model
    p = a.parts
    keep = p["fdeg"] <= model.Y_max - drop
    if model.W_max is not None:
        keep &= 2 * p["h"] + p["fdeg"] <= model.W_max - drop
    return a.select(keep)


class Fedosov:
    """Fedosov data on a model: Christoffel symbols, ``A`` and optionally ``gamma^E``."""

    def __init__(self, model: ModelConfig, christoffel=None, *, A: VectorField | None = None,
                 gamma: MatrixSeries | None = None):
        self.model = model
        d = model.d
        z = model.zero()
        if christoffel is None:
            gam = [[[z] * d for _ in range(d)] for _ in range(d)]
        else:
            gam = [[[_as_series(model, christoffel[k][i][j]) for j in range(d)]
                    for i in range(d)] for k in range(d)]
        for k in range(d):
            for i in range(d):
                for j in range(d):
                    if not _is_base_only(gam[k][i][j]):
                        raise ValueError("Christoffel symbols must be functions on the base")
                    if gam[k][i][j] != gam[k][j][i]:
                        raise TorsionError(f"Gamma^{k + 1}_{{{i + 1}{j + 1}}} is not symmetric")
        if model.kind == "torus" and any(not g.is_zero() for r in gam for row in r for g in row):
            raise ValueError("nonzero Christoffel symbols are not supported on the torus")
        self.christoffel = gam
        # Gamma as a vector field: sum_{i,j} th^i Gamma^k_ij y^j d/dy^k
        comps = []
        for k in range(d):
            parts = []
            for i in range(d):
                for j in range(d):
                    g = gam[k][i][j]
                    if not g.is_zero():
                        parts.append(theta_mul(i, fiber_mul(j, g)))
            comps.append(_sum(model, parts))
        self.gamma_field = VectorField(tuple(comps))
        self.flat_connection = self.gamma_field.is_zero()
        self.A = build_A(self) if A is None else A
        self.gamma = gamma

    # derivations ----------------------------------------------------------

    def nabla(self, a: FormalSeries) -> FormalSeries:
        out = de_rham(a)
        if not self.flat_connection:
            out = out - self.gamma_field(a)
        return out

    def D(self, a):
        """Fedosov differential on a series or (with ``gamma^E``) on a matrix."""
        if isinstance(a, MatrixSeries):
            out = a.map(self._D_scalar)
            if self.gamma is not None:
                out = out + graded_commutator(self.gamma, a)
            return out
        return self._D_scalar(a)

    def _D_scalar(self, a: FormalSeries) -> FormalSeries:
        out = self.nabla(a) - delta(a)
        if not self.A.is_zero():
            out = out + self.A(a)
        return out

    def with_gamma(self, gamma: MatrixSeries) -> "Fedosov":
        return Fedosov(self.model, self.christoffel, A=self.A, gamma=gamma)


def _iterate(step, start, limit: int, what: str):
    cur = start
    for _ in range(limit):
        nxt = step(cur)
        if nxt == cur:
            return cur
        cur = nxt
    raise NonConvergence(f"{what} did not stabilise after {limit} iterations")


def _iteration_bound(model: ModelConfig) -> int:
    # every pass fixes at least one more fiber degree
    return model.Y_max + 2 * model.H_max + 3


def build_A(fed: Fedosov) -> VectorField:
    """Solve for the fiber vector field ``A`` making ``D`` square to zero."""
    model = fed.model
    d = model.d
    if fed.flat_connection:
        return VectorField(tuple(model.zero() for _ in range(d)))
    nabla_y = [fed.nabla(model.parse(f"y{k + 1}")) for k in range(d)]
    curv = [fed.nabla(v) for v in nabla_y]

    def step(comps):
        A = VectorField(comps)
        return tuple(delta_inv(curv[k] + fed.nabla(comps[k]) + A(nabla_y[k]) + A(comps[k]))
                     for k in range(d))

    zero = tuple(model.zero() for _ in range(d))
    return VectorField(_iterate(step, zero, _iteration_bound(model), "A"))


def apply_D(fed: Fedosov, a):
    return fed.D(a)


def flat_lift(fed: Fedosov, f):
    """The D-flat section with ``chi = f``: iterate ``a = f + delta_inv((nabla + A + ad gamma) a)``."""
    if isinstance(f, MatrixSeries):
        def step(a):
            corr = a.map(lambda e: fed.nabla(e) + fed.A(e))
            if fed.gamma is not None:
                corr = corr + graded_commutator(fed.gamma, a)
            return f + corr.map(delta_inv)
        return _iterate(step, f, _iteration_bound(fed.model), "flat lift")
    if f.form_degrees() - {0}:
        raise ValueError("flat_lift expects a function (form degree 0)")
    return _iterate(lambda a: f + delta_inv(fed.nabla(a) + fed.A(a)), f,
                    _iteration_bound(fed.model), "flat lift")


def lift_chain(fed: Fedosov, entries: Sequence):
    """Entrywise flat lift of a tensor ``a0 (x) ... (x) an`` of functions or matrices."""
    from .hochschild import Chain

    lifted = [flat_lift(fed, e) for e in entries]
    n = max((e.N for e in lifted if isinstance(e, MatrixSeries)), default=1)
    return Chain.from_tensor(fed.model, [e if isinstance(e, MatrixSeries)
                                         else MatrixSeries.scalar(e, n) for e in lifted])


def gamma_E(fed: Fedosov, connection_form) -> MatrixSeries:
    """Iterate ``gamma = Gamma^E + delta_inv(nabla gamma + A(gamma) + gamma*gamma)``.

    ``connection_form[i]`` is the ``N x N`` matrix of functions multiplying ``dx^i``.
    """
    model = fed.model
    mats = []
    for i, m in enumerate(connection_form):
        if not isinstance(m, MatrixSeries):
            m = MatrixSeries(model, [[_as_series(model, e) for e in row] for row in m])
        for _, _, e in m.entries():
            if not _is_base_only(e):
                raise ValueError("connection form entries must be functions on the base")
        mats.append(m.map(lambda e, i=i: theta_mul(i, e)))
    Gamma = mats[0]
    for m in mats[1:]:
        Gamma = Gamma + m

    def step(g):
        corr = g.map(lambda e: fed.nabla(e) + fed.A(e)) + g.matmul(g)
        return Gamma + corr.map(delta_inv)

    return _iterate(step, Gamma, _iteration_bound(model), "gamma^E")


def solve_DE(fed: Fedosov, P):
    """Solve ``D^E S = P`` for ``P`` of positive form degree with ``D^E P = 0``.

    Iterates ``S = -delta_inv P + delta_inv(nabla S + A(S) + [gamma, S])``.
    """
    is_mat = isinstance(P, MatrixSeries)
    items = [e for _, _, e in P.entries()] if is_mat else [P]
    if any(0 in e.form_degrees() for e in items if not e.is_zero()):
        raise ValueError("solve_DE needs a right-hand side of positive form degree")
    check = exact_part(fed.D(P))
    if not (check.is_zero()):
        raise ValueError("right-hand side is not D-closed")
    if is_mat:
        base = -P.map(delta_inv)

        def step(S):
            corr = S.map(lambda e: fed.nabla(e) + fed.A(e))
            if fed.gamma is not None:
                corr = corr + graded_commutator(fed.gamma, S)
            return base + corr.map(delta_inv)
    else:
        base = -delta_inv(P)

        def step(S):
            return base + delta_inv(fed.nabla(S) + fed.A(S))
    return _iterate(step, base, _iteration_bound(fed.model), "solve_DE")
