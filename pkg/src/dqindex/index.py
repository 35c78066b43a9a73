"""Quantum and classical index densities of an idempotent, and the homotopy between them.

Given a pointwise idempotent ``q`` the geometric side builds

* ``Gamma^q = q dq - dq q``,
* ``B^q``: the Maurer-Cartan 1-form with ``D q + [B^q, q] = 0``,
* ``U`` with ``D U = U <> B^q``, and the flat idempotent ``Q = U <> q <> U^-1``,

whose restriction ``Q0 = Q|_{y=0}`` is a star idempotent lifting ``q``.  The
algebraic side lifts ``q`` directly.  Both are pushed to ``HP_0`` by
``trd``; the chain ``psi`` witnesses that ``Q`` and
``Q~ = exp(R_{B^q})(q)`` are homologous.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from gmpy2 import mpq

from . import hochschild as hh
from .fedosov import Fedosov, exact_part, flat_lift, _iterate, _iteration_bound
from .matrix import MatrixSeries, as_matrix, graded_commutator
from .poisson import Polyvector, hp0_reduce, standard_pi
from .starprod import (StarProduct, ch00, fiber_product, idempotent_lift, mat_diamond,
                       mat_neumann_inverse, mat_star_mul, moyal_star, principal_symbol,
                       star_mul)
from .weyl import FormalSeries, ModelConfig, de_rham, delta_inv

__all__ = [
    "IndexInstance",
    "IndexResult",
    "IndexMismatch",
    "make_instance",
    "gamma_q",
    "bq_iterate",
    "bq_mc_residual",
    "lemma_residual",
    "u_iterate",
    "build_Q",
    "q_tilde",
    "q_tilde_action",
    "psi_homotopy",
    "homotopy_residual",
    "trd",
    "trace_defect",
    "quantum_index",
    "classical_index",
    "index_compare",
]


HOMOTOPY_CAP = 4


class IndexMismatch(AssertionError):
    """A pipeline residual or an index comparison came out nonzero."""


@dataclass(frozen=True, eq=False)
class IndexInstance:
    model: ModelConfig
    star: StarProduct
    q: MatrixSeries
    fed: Fedosov
    pi1: Polyvector

    @property
    def N(self) -> int:
        return self.q.N

    def diamond(self, a, b) -> MatrixSeries:
        return mat_diamond(a, b, self.star)

    def D(self, a):
        return self.fed.D(a)


def _check_idempotent(q: MatrixSeries):
    for _, _, e in q.entries():
        p = e.parts
        if p["fdeg"].any() or p["mask"].any() or p["h"].any() or p["t"].any():
            raise ValueError("q must be a matrix of base functions")
    if q.matmul(q) != q:
        raise ValueError("q is not a pointwise idempotent")


def make_instance(model: ModelConfig, q, pi1: Polyvector | None = None) -> IndexInstance:
    """Flat instance with the Moyal product of a constant bivector (default standard)."""
    q = as_matrix(q)
    _check_idempotent(q)
    pi1 = standard_pi(model) if pi1 is None else pi1
    return IndexInstance(model, moyal_star(pi1), q, Fedosov(model), pi1)


def _require_flat(inst: IndexInstance):
    if not inst.fed.flat_connection:
        raise ValueError("index computations need a flat instance")


def gamma_q(q: MatrixSeries) -> MatrixSeries:
    """``q dq - dq q``; satisfies ``dq + [Gamma^q, q] = 0``."""
    q = as_matrix(q)
    _check_idempotent(q)
    dq = q.map(de_rham)
    return q.matmul(dq) - dq.matmul(q)


def _half_bracket_self(B: MatrixSeries, inst: IndexInstance) -> MatrixSeries:
    # for an odd B, 1/2 [B, B] = B <> B
    return graded_commutator(B, B, lambda a, b: _dia(a, b, inst)).scale(mpq(1, 2))


def _dia(a, b, inst):
    from .starprod import diamond
    return diamond(a, b, inst.star)


def bq_iterate(inst: IndexInstance) -> MatrixSeries:
    """Fixpoint of ``B = Gamma^q + delta_inv(nabla B + A(B) + 1/2 [B, B])``."""
    _require_flat(inst)
    G = gamma_q(inst.q)
    fed = inst.fed

    def step(B):
        corr = B.map(lambda e: fed.nabla(e) + fed.A(e)) + _half_bracket_self(B, inst)
        return G + corr.map(delta_inv)
    return _iterate(step, G, _iteration_bound(inst.model), "B^q")


def bq_mc_residual(Bq: MatrixSeries, inst: IndexInstance) -> MatrixSeries:
    """``D B + 1/2 [B, B]`` on the part unaffected by truncation."""
    return exact_part(inst.D(Bq) + _half_bracket_self(Bq, inst))


def lemma_residual(q: MatrixSeries, Bq: MatrixSeries, inst: IndexInstance) -> MatrixSeries:
    """``D q + [B^q, q]``."""
    q = as_matrix(q)
    comm = graded_commutator(Bq, q, lambda a, b: _dia(a, b, inst))
    return exact_part(inst.D(q) + comm)


def u_iterate(inst: IndexInstance, Bq: MatrixSeries) -> MatrixSeries:
    """Fixpoint of ``U = I + delta_inv(nabla U + A(U) - U <> B^q)``."""
    _require_flat(inst)
    fed = inst.fed
    one = MatrixSeries.identity(inst.model, inst.N)

    def step(U):
        corr = U.map(lambda e: fed.nabla(e) + fed.A(e)) - inst.diamond(U, Bq)
        return one + corr.map(delta_inv)
    return _iterate(step, one, _iteration_bound(inst.model), "U")


def u_residual(U: MatrixSeries, Bq: MatrixSeries, inst: IndexInstance) -> MatrixSeries:
    """``D U - U <> B^q``."""
    return exact_part(inst.D(U) - inst.diamond(U, Bq))


def _u_inverse(U: MatrixSeries, inst: IndexInstance) -> MatrixSeries:
    return mat_neumann_inverse(U, lambda a, b: _dia(a, b, inst))


def build_Q(inst: IndexInstance, q: MatrixSeries, U: MatrixSeries, *, check: bool = True):
    """``Q = U <> q <> U^-1`` and its fiber-zero part ``Q0``."""
    Ui = _u_inverse(U, inst)
    Q = inst.diamond(inst.diamond(U, as_matrix(q)), Ui)
    Q0 = Q.map(lambda e: e.fiber_zero())
    if check:
        res = _q_residuals(inst, Q, Q0)
        bad = {k: v for k, v in res.items() if not v.is_zero()}
        if bad:
            raise IndexMismatch(f"Q residuals nonzero: {sorted(bad)}")
    return Q, Q0


def _q_residuals(inst: IndexInstance, Q: MatrixSeries, Q0: MatrixSeries) -> dict:
    return {
        "DQ": exact_part(inst.D(Q)),
        "Q<>Q-Q": inst.diamond(Q, Q) - Q,
        "Q0*Q0-Q0": mat_star_mul(Q0, Q0, inst.star) - Q0,
        "Q-lift(Q0)": Q - flat_lift(inst.fed, Q0),
        "sigma(Q0)-q": principal_symbol(Q0) - inst.q,
    }


# ------------------------------------------------------------------ chains


def _sign_pattern(n: int) -> int:
    # (-1)^k for n = 2k and n = 2k+1
    return -1 if (n // 2) % 2 else 1


def _psi_sign(n: int) -> int:
    # (-1)^k for n = 2k, -(-1)^k for n = 2k+1: with the chain sign convention
    # fixed by the boundary formula, this is the sign that makes psi a homotopy
    return _sign_pattern(n) * (-1) ** n


def q_tilde(q, Bq: MatrixSeries, cap: int | None = None) -> hh.Chain:
    """``sum_k (-1)^k (q (x) B^{2k} + q (x) B^{2k+1})`` up to the form-degree cap."""
    model = Bq.model
    q = as_matrix(q, Bq.N)
    out = hh.Chain(model, Bq.N, cap=cap)
    for n in range(model.d + 1):
        out = out + hh.Chain.from_tensor(model, [q] + [Bq] * n, cap, _sign_pattern(n))
    return out


def q_tilde_action(q, Bq: MatrixSeries, cap: int | None = None) -> hh.Chain:
    """``exp(R_{B^q})(q)`` through the generic action."""
    model = Bq.model
    g = hh.Cochain.element(Bq)
    c = hh.Chain.from_tensor(model, [as_matrix(q, Bq.N)], cap)
    out = c
    term = c
    for k in range(1, model.d + 2):
        term = hh.act_R(g, term).scale(mpq(1, k))
        if term.is_zero():
            break
        out = out + term
    return out


def psi_homotopy(q, Bq: MatrixSeries, U: MatrixSeries, inst: IndexInstance,
                 cap: int | None = None) -> hh.Chain:
    """``sum_k (-1)^k (U (x) B^{2k} (x) qU^-1 - U (x) B^{2k+1} (x) qU^-1)``."""
    model = inst.model
    qUi = inst.diamond(as_matrix(q, inst.N), _u_inverse(U, inst))
    out = hh.Chain(model, inst.N, cap=cap)
    for n in range(model.d + 1):
        out = out + hh.Chain.from_tensor(model, [U] + [Bq] * n + [qUi], cap, _psi_sign(n))
    return out


def homotopy_residual(Q: MatrixSeries, Qt: hh.Chain, psi: hh.Chain,
                      inst: IndexInstance) -> hh.Chain:
    """``(Q - Q~) - (D psi + b psi)`` below the weight cap minus one."""
    cap = psi.cap
    Qc = hh.Chain.from_tensor(inst.model, [Q], cap)
    prod = fiber_product(inst.star, inst.fed, inst.N)
    rhs = hh.chain_D(psi) + hh.hoch_boundary(psi, prod)
    return (Qc - Qt - rhs).truncate(cap - 1)


# ------------------------------------------------------------------ densities


def _check_supported(model: ModelConfig, pi1: Polyvector):
    if model.kind not in ("plane", "torus"):
        raise ValueError(f"trace density not available on {model.kind!r}")
    from .starprod import _constant_pi
    _constant_pi(pi1)


def trd(a: FormalSeries, pi1: Polyvector) -> FormalSeries:
    """Trace density: the class of ``a`` in ``HP_0`` of ``h pi1``, order by order in ``h``."""
    _check_supported(a.model, pi1)
    return hp0_reduce(a, pi1)


def trace_defect(star: StarProduct, pi1: Polyvector, pairs) -> list:
    """``trd([a, b]_*)`` for each sample pair; all zero when ``trd`` is a trace."""
    out = []
    for a, b in pairs:
        c = star_mul(a, b, star) - star_mul(b, a, star)
        out.append(trd(c, pi1))
    return out


def quantum_index(P: MatrixSeries, star: StarProduct, pi1: Polyvector) -> FormalSeries:
    """``trd(ch00(P))`` for a star idempotent ``P``."""
    P = as_matrix(P)
    if mat_star_mul(P, P, star) != P:
        raise ValueError("P is not a star idempotent")
    return trd(ch00(P), pi1)


@dataclass
class IndexResult:
    lift: MatrixSeries
    second_lift: MatrixSeries
    Bq: MatrixSeries
    U: MatrixSeries
    Q: MatrixSeries
    Q0: MatrixSeries
    quantum: FormalSeries
    quantum_second: FormalSeries
    classical: FormalSeries
    residuals: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.quantum == self.classical and self.quantum == self.quantum_second
                and all(_is_zero(v) for v in self.residuals.values()))


def _is_zero(v) -> bool:
    return v.is_zero() if hasattr(v, "is_zero") else v == 0


def _geometric(inst: IndexInstance):
    Bq = bq_iterate(inst)
    U = u_iterate(inst, Bq)
    Q, Q0 = build_Q(inst, inst.q, U, check=False)
    return Bq, U, Q, Q0


def classical_index(q, inst: IndexInstance) -> FormalSeries:
    """Index density through ``B^q``, ``U`` and ``Q0``."""
    q = as_matrix(q)
    if q != inst.q:
        inst = IndexInstance(inst.model, inst.star, q, inst.fed, inst.pi1)
    Bq, U, Q, Q0 = _geometric(inst)
    res = {"B^q MC": bq_mc_residual(Bq, inst), "Dq+[B,q]": lemma_residual(q, Bq, inst),
           "DU-U<>B": u_residual(U, Bq, inst)}
    res.update(_q_residuals(inst, Q, Q0))
    bad = sorted(k for k, v in res.items() if not v.is_zero())
    if bad:
        raise IndexMismatch(f"pipeline residuals nonzero: {bad}")
    return trd(ch00(Q0), inst.pi1)


def _second_lift(P: MatrixSeries, star: StarProduct) -> MatrixSeries:
    """Conjugate ``P`` by ``I + h K`` for a fixed off-diagonal ``K``."""
    model = P.model
    N = P.N
    rows = [[model.zero() for _ in range(N)] for _ in range(N)]
    h = model.parse("h")
    for i in range(N):
        rows[i][(i + 1) % N] = h
        rows[i][i] = rows[i][i] + model.parse("h^2") if model.H_max >= 2 else rows[i][i]
    G = MatrixSeries.identity(model, N) + MatrixSeries(model, rows)
    Gi = mat_neumann_inverse(G, star)
    return mat_star_mul(mat_star_mul(G, P, star), Gi, star)


def index_compare(inst: IndexInstance, *, homotopy_cap: int | None = None) -> IndexResult:
    """Run both routes, a second lift, and the full residual ledger.

    ``homotopy_cap`` bounds the chain weight used for the homotopy identity
    (default ``min(4, weight cap)``: the chain count grows steeply with it).
    """
    _require_flat(inst)
    times = {}
    t0 = time.perf_counter()
    P = idempotent_lift(inst.q, inst.star)
    P2 = _second_lift(P, inst.star)
    times["lift"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    Bq, U, Q, Q0 = _geometric(inst)
    times["geometric"] = time.perf_counter() - t0

    res = {
        "B^q MC": bq_mc_residual(Bq, inst),
        "Dq+[B,q]": lemma_residual(inst.q, Bq, inst),
        "DU-U<>B": u_residual(U, Bq, inst),
        "P*P-P": mat_star_mul(P, P, inst.star) - P,
        "P'*P'-P'": mat_star_mul(P2, P2, inst.star) - P2,
    }
    res.update(_q_residuals(inst, Q, Q0))

    t0 = time.perf_counter()
    cap = homotopy_cap
    if cap is None:
        cap = min(HOMOTOPY_CAP, hh._default_cap(inst.model))
    Qt = q_tilde(inst.q, Bq, cap)
    psi = psi_homotopy(inst.q, Bq, U, inst, cap)
    res["Q~-exp(R_B)q"] = Qt - q_tilde_action(inst.q, Bq, cap)
    res["homotopy"] = homotopy_residual(Q, Qt, psi, inst)
    times["homotopy"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    qi = trd(ch00(P), inst.pi1)
    qi2 = trd(ch00(P2), inst.pi1)
    ci = trd(ch00(Q0), inst.pi1)
    times["trd"] = time.perf_counter() - t0
    return IndexResult(P, P2, Bq, U, Q, Q0, qi, qi2, ci, res, times)
