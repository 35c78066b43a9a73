"""Verification suites: named exact-residual checks over a scenario.

A check is a thunk returning a residual (anything with ``is_zero``, or an
int).  It passes iff the residual is zero.  Check ids are globally unique;
per-input checks carry the input name in brackets, e.g.
``bq_mc_residual[q1]``.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

from . import hochschild as hh
from . import sampling as smp
from .dgla import chain_module, cochain_dgla, gauge_act, mc_residual, polyvector_dgla, \
    semidirect_twist, twist_differential
from .fedosov import Fedosov, exact_part, flat_lift, gamma_E, solve_DE
from .index import IndexInstance, _second_lift, index_compare, trd
from .matrix import MatrixSeries
from .poisson import Polyvector, hp_dim, koszul, lichnerowicz, schouten, standard_pi
from .scenario import SUITES, Scenario
from .starprod import fiber_product, idempotent_lift, idempotent_path, \
    mat_star_mul, moyal_star, moyal_torus, naturality_check, path_derivative_residual, \
    path_sandwich_residual, principal_symbol, star_mul
from .weyl import FormalSeries, ModelConfig, Monomial, chi, delta, delta_inv, hodge_residual

ANCHORS: dict[str, tuple[str, str]] = {
    # weyl
    "delta_squared": ("weyl", "nilpotency of the fiber contraction: delta^2 = 0"),
    "delta_inv_squared": ("weyl", "nilpotency of the homotopy: (delta^-1)^2 = 0"),
    "hodge": ("weyl", "Hodge decomposition a = chi(a) + delta delta^-1 a + delta^-1 delta a"),
    # fedosov
    "fedosov_d_squared": ("fedosov", "flatness of the Fedosov connection: D^2 = 0"),
    "flat_lift": ("fedosov", "flat sections: D(lift f) = 0 and chi(lift f) = f"),
    "solve_de_roundtrip": ("fedosov", "acyclicity of D in positive form degree: D(solve P) = P"),
    "gamma_e_flat": ("fedosov", "flatness of the twisted connection D^E = D + [gamma^E, .]"),
    "solve_de_twisted": ("fedosov", "acyclicity of D^E in positive form degree"),
    # poisson
    "pi_jacobi": ("poisson", "Poisson condition [pi, pi] = 0 for the Schouten bracket"),
    "koszul_squared": ("poisson", "Koszul differential L_pi = i_pi d - d i_pi squares to zero"),
    "lichnerowicz_squared": ("poisson", "Lichnerowicz differential [pi, .] squares to zero"),
    "hp_dim": ("poisson", "dimension of zeroth Poisson homology within the model cutoff"),
    # hochschild
    "codiff_squared": ("hochschild", "Hochschild codifferential [prod, .] squares to zero"),
    "boundary_squared": ("hochschild", "Hochschild boundary b squares to zero"),
    "gerstenhaber_jacobi": ("hochschild", "graded Jacobi identity for the Gerstenhaber bracket"),
    "action_homomorphism": ("hochschild", "chains form a module: R_[P,Q] = [R_P, R_Q]"),
    "boundary_action": ("hochschild", "compatibility of b with the action: [b, R_P] = R_dP"),
    "fedosov_action": ("hochschild", "compatibility of D with the action: [D, R_P] = R_DP"),
    "trace_chain_map": ("hochschild", "matrix trace tr is a chain map for b and D"),
    "cotrace_chain_map": ("hochschild", "cotrace is a cochain map for the codifferential"),
    "twisted_trace_chain_map": ("hochschild",
                                "twisted trace tr o exp(R_gamma) intertwines D^E + b with D + b"),
    # star
    "star_associativity": ("star", "associativity of the Moyal star product mod h^(H_max+1)"),
    "star_naturality": ("star", "naturality: B_k has differential order at most k per argument"),
    "torus_trace": ("star", "integration kills star commutators: constant mode of [u^k, u^l] = 0"),
    "lift_idempotent": ("star", "closed lifting formula gives a star idempotent with symbol q"),
    "path_idempotent": ("star", "idempotent path between two lifts is idempotent in t"),
    "path_endpoints": ("star", "idempotent path starts and ends at the two lifts"),
    "path_derivative": ("star", "derivative identity dP/dt = [[dP/dt, P], P] along the path"),
    "path_sandwich": ("star", "path derivative is off-diagonal: P dP/dt P = 0"),
    # dgla
    "star_mc": ("dgla", "the deformation Pi = diamond - mu is a Maurer-Cartan element"),
    "twist_is_star_codiff": ("dgla", "twisting the codifferential by Pi gives [diamond, .]"),
    "twist_squared": ("dgla", "the twisted differential squares to zero"),
    "gauge_preserves_mc": ("dgla", "gauge action exp(xi) maps Maurer-Cartan elements to themselves"),
    "gauge_inverse": ("dgla", "gauge action by -xi inverts the action by xi"),
    "semidirect_boundary": ("dgla", "twisting the chain module by Pi gives the boundary of diamond"),
    "polyvector_mc": ("dgla", "h pi is Maurer-Cartan for polyvectors with the Schouten bracket"),
    "polyvector_gauge": ("dgla", "polyvector gauge action preserves the Maurer-Cartan equation"),
    # index
    "bq_mc_residual": ("index", "Maurer-Cartan equation D B + B diamond B = 0 for the "
                                "connection form B^q of an idempotent"),
    "lemma_residual": ("index", "covariant constancy of the idempotent: D q + [B^q, q] = 0"),
    "u_flatness": ("index", "gauge transformation to the flat section: D U = U diamond B^q"),
    "dq_zero": ("index", "Q = U q U^-1 is D-flat"),
    "q_diamond_idempotent": ("index", "Q is a fiberwise diamond idempotent"),
    "q0_star_idempotent": ("index", "fiber-zero part Q0 of Q is a star idempotent"),
    "q_flat_lift": ("index", "Q is the flat lift of its fiber-zero part Q0"),
    "q_principal_symbol": ("index", "principal symbol of Q0 recovers q"),
    "quantum_lift_idempotent": ("index", "closed-formula lift is a star idempotent"),
    "second_lift_idempotent": ("index", "conjugated second lift is a star idempotent"),
    "q_tilde_action": ("index", "the chain Q~ equals exp(R_B)(q) for the generic action"),
    "homotopy_residual": ("index", "homotopy Q - Q~ = (D + b) psi between the two chain "
                                   "representatives"),
    "index_equality": ("index", "algebraic index theorem: quantum index density equals the "
                                "classical one in HP_0"),
    "lift_independence": ("index", "quantum index density does not depend on the lift"),
    "index_rank": ("index", "index density equals rank(q) times the class of 1 in HP_0"),
}


class UnknownCheck(KeyError):
    pass


def explain(check: str) -> str:
    base = check.split("[", 1)[0]
    if base not in ANCHORS:
        raise UnknownCheck(check)
    suite, anchor = ANCHORS[base]
    return f"{check} ({suite}): {anchor}"


class _Text:
    """A nonzero residual that is not a series (e.g. a failed boolean)."""

    def __init__(self, text: str):
        self.text = text

    def is_zero(self) -> bool:
        return False

    def __str__(self):
        return self.text


class _Zero:
    def is_zero(self) -> bool:
        return True

    def __str__(self):
        return "0"


ZERO = _Zero()


def is_zero(r) -> bool:
    return r == 0 if isinstance(r, int) else r.is_zero()


def first_nonzero(residuals: Iterable):
    """First nonzero residual, or zero.  Summing would let samples cancel."""
    for r in residuals:
        if not is_zero(r):
            return r
    return ZERO


@dataclass
class CheckResult:
    id: str
    status: str
    residual: str
    millis: int

    def as_dict(self, timings: bool) -> dict:
        return {"id": self.id, "paper_anchor": ANCHORS[self.id.split("[", 1)[0]][1],
                "status": self.status, "residual": self.residual,
                "millis": self.millis if timings else None}


def run_check(cid: str, thunk: Callable) -> CheckResult:
    t0 = time.perf_counter()
    try:
        r = thunk()
        status = "pass" if is_zero(r) else "fail"
        text = "0" if status == "pass" else str(r)
    except Exception as e:  # reported, never swallowed silently
        status, text = "error", f"{type(e).__name__}: {e}"
    return CheckResult(cid, status, text, int(round(1000 * (time.perf_counter() - t0))))


def suite_rng(sc: Scenario, suite: str) -> random.Random:
    return random.Random(f"{sc.seed}/{suite}")


# ------------------------------------------------------------------ helpers


def _star(pi1: Polyvector):
    return moyal_torus(pi1) if pi1.model.laurent else moyal_star(pi1)


def _pi(sc: Scenario, model: ModelConfig | None = None) -> Polyvector:
    model = sc.model if model is None else model
    pi = sc.star_pi or sc.poisson_pi
    if pi is None:
        return standard_pi(model)
    return pi if pi.model == model else Polyvector(pi.series.recast(model))


def _gen(model: ModelConfig, i: int) -> str:
    return f"{model.base_name}{i}"


def _spanning(model: ModelConfig, fiber: int = 2) -> list[FormalSeries]:
    """Monomials of fiber degree <= ``fiber``, form degree <= 1, base degree <= 1."""
    d = model.d
    out = []
    bases = [(0,) * d] + [tuple(int(k == i) for k in range(d)) for i in range(d)]
    fibs = [f for f in _exponents(d, min(fiber, model.Y_max))]
    forms = [()] + [(i,) for i in range(d)]
    for b in bases:
        for f in fibs:
            for fm in forms:
                out.append(FormalSeries.from_terms(model, [(Monomial(b, f, fm), 1)]))
    return out


def _exponents(d: int, top: int):
    if d == 0:
        yield ()
        return
    for k in range(top + 1):
        for rest in _exponents(d - 1, top - k):
            yield (k,) + rest


def _small_model(model: ModelConfig, Y: int, H: int) -> ModelConfig:
    Y = min(model.Y_max, Y)
    H = min(model.H_max, H)
    return ModelConfig(model.kind, model.d, Y_max=Y, H_max=H, N=model.N,
                       X_max=model.X_max, K_max=model.K_max, W_max=Y)


# ------------------------------------------------------------------ suites


def suite_weyl(sc: Scenario, rng: random.Random):
    m = sc.model
    samples = [smp.series(rng, m, 1) for _ in range(sc.samples)]
    return [
        ("delta_squared", lambda: first_nonzero(delta(delta(a)) for a in samples)),
        ("delta_inv_squared", lambda: first_nonzero(delta_inv(delta_inv(a)) for a in samples)),
        ("hodge", lambda: first_nonzero(hodge_residual(a) for a in samples)),
    ]


def suite_fedosov(sc: Scenario, rng: random.Random):
    m = sc.model
    fed = Fedosov(m, sc.christoffel)
    span = _spanning(m) + [smp.series(rng, m, 2, forms=rng.randint(0, 1))
                           for _ in range(sc.samples)]
    funcs = [smp.base_function(rng, m, 3) for _ in range(max(3, sc.samples // 4))]
    srcs = [smp.series(rng, m, 2, forms=0, fiber=rng.randint(1, 2), hbar=0)
            for _ in range(max(3, sc.samples // 4))]

    def lifts():
        for f in funcs:
            a = flat_lift(fed, f)
            yield exact_part(fed.D(a))
            yield chi(a) - f

    def roundtrip(fd, items):
        for b in items:
            P = fd.D(b)  # D-closed below the cutoff; truncating it would break that
            S = solve_DE(fd, P)
            yield exact_part(fd.D(S) - P)

    out = [
        ("fedosov_d_squared", lambda: first_nonzero(exact_part(fed.D(fed.D(a)), 2) for a in span)),
        ("flat_lift", lambda: first_nonzero(lifts())),
        ("solve_de_roundtrip", lambda: first_nonzero(roundtrip(fed, srcs))),
    ]
    if sc.gamma_E is not None:
        N = sc.gamma_E[0].N

        @lru_cache(None)
        def fedE():
            return fed.with_gamma(gamma_E(fed, sc.gamma_E))
        mats = [smp.matrix(rng, m, N, 2, forms=rng.randint(0, 1)) for _ in range(sc.samples // 2)]
        srcE = [smp.matrix(rng, m, N, 2, forms=0, fiber=1) for _ in range(3)]
        out += [
            ("gamma_e_flat", lambda: first_nonzero(exact_part(fedE().D(fedE().D(a)), 2)
                                                   for a in mats)),
            ("solve_de_twisted", lambda: first_nonzero(roundtrip(fedE(), srcE))),
        ]
    return out


def suite_poisson(sc: Scenario, rng: random.Random):
    m = sc.model
    pi = _pi(sc)
    forms = [smp.series(rng, m, 3, fiber=0) for _ in range(sc.samples)]
    pvs = [Polyvector(smp.series(rng, m, 3, fiber=0)) for _ in range(sc.samples)]
    out = [
        ("pi_jacobi", lambda: schouten(pi, pi)),
        ("koszul_squared", lambda: first_nonzero(koszul(pi, koszul(pi, w)) for w in forms)),
        ("lichnerowicz_squared",
         lambda: first_nonzero(lichnerowicz(pi, lichnerowicz(pi, P)) for P in pvs)),
    ]
    if sc.hp_dim is not None:
        out.append(("hp_dim", lambda: hp_dim(pi) - sc.hp_dim))
    return out


def _contract_model(sc: Scenario) -> ModelConfig:
    return _small_model(sc.model, 6, 1)


def _default_connection(model: ModelConfig, N: int) -> list[MatrixSeries]:
    """``gamma^E`` with one nilpotent off-diagonal entry ``x1`` in the last direction."""
    z = model.zero()
    mats = [MatrixSeries.zeros(model, N) for _ in range(model.d)]
    rows = [[z] * N for _ in range(N)]
    rows[0][N - 1] = model.parse(_gen(model, 1))
    mats[-1] = MatrixSeries(model, rows)
    return mats


def suite_hochschild(sc: Scenario, rng: random.Random):
    m = _contract_model(sc)
    N = max(2, m.N)
    cap = 5
    s = _star(_pi(sc, m))
    F1 = fiber_product(s, None, 1)
    FN = fiber_product(s, None, N)
    mu1 = hh.product_cochain(m, 1)
    muN = hh.product_cochain(m, N)
    k = max(2, sc.samples // 5)

    def cochains(forms):
        return [smp.cochain(rng, m, rng.randint(1, 2), N, 2, forms=forms) for _ in range(k)]
    P0, P1 = cochains(0), cochains(1)
    scalars = [smp.cochain(rng, m, rng.randint(0, 2), 1, 2) for _ in range(k)]
    chains = [smp.chain(rng, m, rng.randint(1, 2), N, cap, 1) for _ in range(k)]

    def deg(P):
        ds = {P.degree_of(t) for t in P.terms}
        return ds.pop() if len(ds) == 1 else 0

    def bF(c):
        return hh.hoch_boundary(c, FN if c.N == N else F1)

    def commutator(A, B, pa, pb, c):
        sign = -1 if pa * pb % 2 else 1
        return A(B(c)) - B(A(c)).scale(sign)

    def jacobi():
        for A, B, S in zip(P0 + P1, P1 + P0, reversed(P1 + P0)):
            pa, pb = deg(A), deg(B)
            g = hh.gerstenhaber
            yield (g(A, g(B, S)) - g(g(A, B), S)
                   - g(B, g(A, S)).scale(-1 if pa * pb % 2 else 1))

    def hom():
        for A, B in zip(P0 + P1, P1 + P0):
            for c in chains[:2]:
                lhs = hh.act_R(hh.gerstenhaber(A, B), c)
                yield (lhs - commutator(lambda z: hh.act_R(A, z), lambda z: hh.act_R(B, z),
                                        deg(A), deg(B), c)).truncate(cap)

    def bact():
        for A in P0 + P1:
            for c in chains[:2]:
                lhs = hh.act_R(hh.hoch_codiff(A, FN), c)
                yield lhs - commutator(bF, lambda z: hh.act_R(A, z), 1, deg(A), c)

    def dact():
        for A in P0 + P1:
            for c in chains[:2]:
                lhs = hh.act_R(hh.cochain_D(A), c)
                r = commutator(hh.chain_D, lambda z: hh.act_R(A, z), 1, deg(A), c)
                yield (lhs - r).truncate(cap - 1)

    def trmap():
        for c in chains:
            yield hh.trace_chain(bF(c)) - bF(hh.trace_chain(c))
            yield hh.trace_chain(hh.hoch_boundary(c, muN)) - hh.hoch_boundary(
                hh.trace_chain(c), mu1)
            yield hh.trace_chain(hh.chain_D(c)) - hh.chain_D(hh.trace_chain(c))

    def cotrmap():
        for P in scalars:
            for prod1, prodN in ((mu1, muN), (F1, FN)):
                yield (hh.cotrace(hh.hoch_codiff(P, prod1), N)
                       - hh.hoch_codiff(hh.cotrace(P, N), prodN))

    def twmap():
        base = Fedosov(m)
        conn = sc.gamma_E if sc.gamma_E is not None and sc.gamma_E[0].N == N else None
        conn = _default_connection(m, N) if conn is None else [c.map(lambda e: e.recast(m)) for c in conn]
        g = gamma_E(base, conn)
        for c in chains[:2]:
            lhs = hh.trace_tw(hh.chain_D(c, gamma=g) + hh.hoch_boundary(c, muN), g)
            tc = hh.trace_tw(c, g)
            yield (lhs - hh.chain_D(tc) - hh.hoch_boundary(tc, mu1)).truncate(cap - 1)

    return [
        ("codiff_squared", lambda: first_nonzero(hh.hoch_codiff(hh.hoch_codiff(P, FN), FN)
                                                 for P in P0 + P1)),
        ("boundary_squared", lambda: first_nonzero(bF(bF(c)) for c in chains)),
        ("gerstenhaber_jacobi", lambda: first_nonzero(jacobi())),
        ("action_homomorphism", lambda: first_nonzero(hom())),
        ("boundary_action", lambda: first_nonzero(bact())),
        ("fedosov_action", lambda: first_nonzero(dact())),
        ("trace_chain_map", lambda: first_nonzero(trmap())),
        ("cotrace_chain_map", lambda: first_nonzero(cotrmap())),
        ("twisted_trace_chain_map", lambda: first_nonzero(twmap())),
    ]


def _mode_pairs(K: int, d: int):
    modes = list(_box(d, K))
    return [(a, b) for a in modes for b in modes]


def _box(d: int, K: int):
    if d == 0:
        yield ()
        return
    for k in range(-K, K + 1):
        for rest in _box(d - 1, K):
            yield (k,) + rest


def torus_trace_residual(s, K: int):
    """Constant modes of ``u^k * u^l - u^l * u^k`` for ``|k_i|, |l_i| <= K``."""
    m = s.model
    d = m.d
    mono = {k: FormalSeries.from_terms(m, [(Monomial(k, (0,) * d), 1)]) for k in _box(d, K)}
    for a, b in _mode_pairs(K, d):
        if tuple(x + y for x, y in zip(a, b)) != (0,) * d:
            continue  # other modes have no constant term
        c = star_mul(mono[a], mono[b], s) - star_mul(mono[b], mono[a], s)
        p = c.parts
        yield c.select((p["base"] == 0).all(axis=1))


def suite_star(sc: Scenario, rng: random.Random):
    m = sc.model
    s = _star(_pi(sc))
    trip = [[smp.base_function(rng, m, 2, 2) for _ in range(3)] for _ in range(max(2, sc.samples // 4))]

    def assoc():
        for a, b, c in trip:
            yield star_mul(star_mul(a, b, s), c, s) - star_mul(a, star_mul(b, c, s), s)

    out = [
        ("star_associativity", lambda: first_nonzero(assoc())),
        ("star_naturality", lambda: ZERO if naturality_check(s) else _Text("not natural")),
    ]
    if m.laurent:
        out.append(("torus_trace", lambda: first_nonzero(torus_trace_residual(s, m.base_cutoff))))
    for name in sc.idempotents:
        out += _idempotent_checks(name, sc.inputs[name], s)
    return out


def _idempotent_checks(name: str, q: MatrixSeries, s):
    @lru_cache(None)
    def lifts():
        P = idempotent_lift(q, s)
        return P, _second_lift(P, s)

    @lru_cache(None)
    def path():
        P, P2 = lifts()
        return idempotent_path(P2, P, s)

    def lift_res():
        P, _ = lifts()
        return first_nonzero([mat_star_mul(P, P, s) - P, principal_symbol(P) - q])

    def ends():
        P, P2 = lifts()
        Pt = path()
        return first_nonzero([Pt.map(lambda e: e.at_t(0)) - P2, Pt.map(lambda e: e.at_t(1)) - P])

    return [
        (f"lift_idempotent[{name}]", lift_res),
        (f"path_idempotent[{name}]", lambda: mat_star_mul(path(), path(), s) - path()),
        (f"path_endpoints[{name}]", ends),
        (f"path_derivative[{name}]", lambda: path_derivative_residual(path(), s)),
        (f"path_sandwich[{name}]", lambda: path_sandwich_residual(path(), s)),
    ]


def suite_dgla(sc: Scenario, rng: random.Random):
    m = _small_model(sc.model, 5, 2).replace(W_max=None)
    x = m.parse
    s = _star(_pi(sc, m))
    mu = hh.product_cochain(m)
    F = fiber_product(s)
    Pi = F - mu
    L = cochain_dgla(m, 1, mu)
    Mod = chain_module(m, 1, mu)
    k = max(2, sc.samples // 5)
    xs = [smp.cochain(rng, m, rng.randint(1, 2), 1, 2, forms=0) for _ in range(k)]
    h = x("h")
    gauges = []
    for _ in range(k):
        items = [(h, smp._multi(rng, m.d, rng.randint(0, 2)), 0, 0,
                  ((0, 0, smp._multi(rng, m.d, rng.randint(1, 2))),), smp.rational(rng))
                 for _ in range(2)]
        gauges.append(hh.Cochain.from_terms(m, 1, items))
    chains = [smp.chain(rng, m, rng.randint(1, 2), 1, None, 2) for _ in range(k)]
    PL = polyvector_dgla(m)
    pi_h = _pi(sc, m).scale(h)
    vfs = [Polyvector(series_h(m, rng)) for _ in range(k)]

    return [
        ("star_mc", lambda: mc_residual(Pi, L)),
        ("twist_is_star_codiff", lambda: first_nonzero(
            twist_differential(Pi, P, L) - hh.hoch_codiff(P, F) for P in xs)),
        ("twist_squared", lambda: first_nonzero(
            twist_differential(Pi, twist_differential(Pi, P, L), L) for P in xs)),
        ("gauge_preserves_mc", lambda: first_nonzero(
            mc_residual(gauge_act(xi, Pi, L), L) for xi in gauges)),
        ("gauge_inverse", lambda: first_nonzero(
            gauge_act(xi, gauge_act(-xi, Pi, L), L) - Pi for xi in gauges)),
        ("semidirect_boundary", lambda: first_nonzero(
            semidirect_twist(Pi, L, Mod)(c) - hh.hoch_boundary(c, F) for c in chains)),
        ("polyvector_mc", lambda: mc_residual(pi_h, PL)),
        ("polyvector_gauge", lambda: first_nonzero(
            mc_residual(gauge_act(v, pi_h, PL), PL) for v in vfs)),
    ]


def series_h(m: ModelConfig, rng: random.Random) -> FormalSeries:
    """``h`` times a random vector field (one odd generator per term)."""
    items = []
    for _ in range(2):
        mono = smp.monomial(rng, m, fiber=0, forms=1, hbar=1, base=2)
        items.append((mono, smp.rational(rng)))
    return smp._fit(m, items)


def _rank(q: MatrixSeries) -> int:
    tr = q.trace()
    p = tr.parts
    if tr.is_zero():
        return 0
    if p["base"].any() or len(tr) != 1:
        raise ValueError("trace of q is not a constant")
    return int(next(iter(tr.terms()))[1])


def suite_index(sc: Scenario, rng: random.Random):
    m = sc.model
    pi = _pi(sc)
    out = []
    for name in sc.idempotents:
        out += _index_checks(name, sc.inputs[name], m, pi)
    return out


_INDEX_KEYS = {
    "bq_mc_residual": "B^q MC",
    "lemma_residual": "Dq+[B,q]",
    "u_flatness": "DU-U<>B",
    "dq_zero": "DQ",
    "q_diamond_idempotent": "Q<>Q-Q",
    "q0_star_idempotent": "Q0*Q0-Q0",
    "q_flat_lift": "Q-lift(Q0)",
    "q_principal_symbol": "sigma(Q0)-q",
    "quantum_lift_idempotent": "P*P-P",
    "second_lift_idempotent": "P'*P'-P'",
    "q_tilde_action": "Q~-exp(R_B)q",
    "homotopy_residual": "homotopy",
}


def _index_checks(name: str, q: MatrixSeries, m: ModelConfig, pi: Polyvector):
    @lru_cache(None)
    def result():
        from .index import _check_idempotent
        _check_idempotent(q)
        inst = IndexInstance(m, _star(pi), q, Fedosov(m), pi)
        return index_compare(inst)

    out = [(f"{cid}[{name}]", lambda key=key: result().residuals[key])
           for cid, key in _INDEX_KEYS.items()]
    out += [
        (f"index_equality[{name}]", lambda: result().quantum - result().classical),
        (f"lift_independence[{name}]", lambda: result().quantum - result().quantum_second),
        (f"index_rank[{name}]",
         lambda: result().quantum - trd(m.const(_rank(q)), pi)),
    ]
    return out


SUITE_FUNCS: dict[str, Callable] = {
    "weyl": suite_weyl,
    "fedosov": suite_fedosov,
    "poisson": suite_poisson,
    "hochschild": suite_hochschild,
    "star": suite_star,
    "dgla": suite_dgla,
    "index": suite_index,
}
assert tuple(SUITE_FUNCS) == SUITES


def run_suite(sc: Scenario, name: str) -> list[CheckResult]:
    checks = SUITE_FUNCS[name](sc, suite_rng(sc, name))
    results = [run_check(cid, thunk) for cid, thunk in checks]
    return sorted(results, key=lambda r: r.id)
