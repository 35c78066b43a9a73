"""Maurer-Cartan elements, twisting and gauge action over the engine's DGLAs.

Three algebras are registered: polyvectors with the Schouten bracket,
fiberwise Hochschild cochains with the Gerstenhaber bracket, and
matrix-valued forms with the graded commutator.  Chains form a module over
the cochains through ``act_R``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from gmpy2 import mpq

from . import hochschild as hh
from .matrix import MatrixSeries, graded_commutator
from .poisson import Polyvector, schouten
from .weyl import ModelConfig, _popcount, series_mul

__all__ = [
    "DGLAHandle",
    "ModuleHandle",
    "NotMaurerCartan",
    "polyvector_dgla",
    "cochain_dgla",
    "matrix_dgla",
    "chain_module",
    "mc_residual",
    "twist_differential",
    "gauge_act",
    "semidirect_twist",
]


class NotMaurerCartan(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DGLAHandle:
    kind: str
    model: ModelConfig
    bracket: Callable[[Any, Any], Any]
    d: Callable[[Any], Any]
    degrees: Callable[[Any], set]
    zero: Any
    differential: str = "zero"

    def is_zero(self, x) -> bool:
        return x.is_zero()

    def scale(self, x, c):
        return x.scale(c)


@dataclass(frozen=True, eq=False)
class ModuleHandle:
    """A DG module over a :class:`DGLAHandle` with its own differential."""

    algebra: DGLAHandle
    d: Callable[[Any], Any]
    action: Callable[[Any, Any], Any]


def polyvector_dgla(model: ModelConfig) -> DGLAHandle:
    """Polyvectors, degree = number of indices minus one, zero differential."""
    zero = Polyvector(model.zero())
    return DGLAHandle("polyvector", model, schouten, lambda x: zero,
                      lambda x: {k - 1 for k in x.degrees}, zero)


def cochain_dgla(model: ModelConfig, N: int = 1, prod: hh.Cochain | None = None,
                 fedosov: bool = False) -> DGLAHandle:
    """Fiberwise cochains; the differential is ``[prod, .]`` (plus ``D`` if asked).

    ``prod=None`` with ``fedosov=False`` gives the zero differential.
    """
    zero = hh.Cochain(model, N)
    if prod is None and not fedosov:
        d = lambda x: zero  # noqa: E731
        name = "zero"
    else:
        def d(x):
            out = zero
            if prod is not None:
                out = out + hh.hoch_codiff(x, prod)
            if fedosov:
                out = out + hh.cochain_D(x)
            return out
        name = "+".join(n for n, on in (("D", fedosov), ("d_prod", prod is not None)) if on)

    def degs(x):
        return {x.degree_of(k) for k in x.terms}
    return DGLAHandle("cochain", model, hh.gerstenhaber, d, degs, zero, name)


def matrix_dgla(model: ModelConfig, N: int, mul=None, fed=None) -> DGLAHandle:
    """Matrix-valued forms with the graded commutator of ``mul`` and optional Fedosov ``D``."""
    mul = series_mul if mul is None else mul
    zero = MatrixSeries.zeros(model, N)
    if fed is None:
        d = lambda x: zero  # noqa: E731
        name = "zero"
    else:
        d = fed.D
        name = "D"

    def degs(x):
        return {int(v) for _, _, e in x.entries() for v in _popcount(e.parts["mask"])}
    return DGLAHandle("matrix", model, lambda a, b: graded_commutator(a, b, mul), d,
                      degs, zero, name)


def chain_module(model: ModelConfig, N: int = 1, prod: hh.Cochain | None = None,
                 fedosov: bool = False) -> ModuleHandle:
    """Chains over the cochain DGLA; the differential is ``b`` for ``prod`` (plus ``D``)."""
    L = cochain_dgla(model, N, prod, fedosov)

    def d(c):
        out = hh.Chain(model, N, cap=c.cap)
        if prod is not None:
            out = out + hh.hoch_boundary(c, prod)
        if fedosov:
            out = out + hh.chain_D(c)
        return out
    return ModuleHandle(L, d, hh.act_R)


def _require_degree(x, L: DGLAHandle, want: int, what: str):
    degs = L.degrees(x)
    if degs and degs != {want}:
        raise ValueError(f"{what} must have degree {want}, found {sorted(degs)}")


def mc_residual(alpha, L: DGLAHandle):
    """``d alpha + 1/2 [alpha, alpha]``."""
    _require_degree(alpha, L, 1, "Maurer-Cartan element")
    return L.d(alpha) + L.bracket(alpha, alpha).scale(mpq(1, 2))


def _require_mc(alpha, L):
    if not mc_residual(alpha, L).is_zero():
        raise NotMaurerCartan("element does not satisfy the Maurer-Cartan equation")


def twist_differential(alpha, x, L: DGLAHandle):
    """``d x + [alpha, x]``."""
    _require_mc(alpha, L)
    return L.d(x) + L.bracket(alpha, x)


def _nilpotent_bound(model: ModelConfig) -> int:
    return model.Y_max + 2 * model.H_max + model.d + 2


def gauge_act(xi, alpha, L: DGLAHandle):
    """``alpha + f(ad_xi)(d xi + [alpha, xi])`` with ``f(x) = (e^x - 1)/x``, ``ad_xi = [., xi]``."""
    _require_degree(xi, L, 0, "gauge element")
    _require_degree(alpha, L, 1, "Maurer-Cartan element")
    term = L.d(xi) + L.bracket(alpha, xi)
    out = alpha + term
    for n in range(2, _nilpotent_bound(L.model) + 2):
        if term.is_zero():
            return out
        term = L.bracket(term, xi).scale(mpq(1, n))
        out = out + term
    if not term.is_zero():
        from .fedosov import NonConvergence
        raise NonConvergence("[., xi] is not nilpotent within the truncation")
    return out


def semidirect_twist(alpha, L: DGLAHandle, M: ModuleHandle) -> Callable:
    """Module differential twisted by an MC element: ``c -> d_M c + alpha . c``."""
    _require_mc(alpha, L)

    def d(c):
        return M.d(c) + M.action(alpha, c)
    return d
