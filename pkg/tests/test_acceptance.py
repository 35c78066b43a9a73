"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Every check is exact (rational arithmetic, zero tolerance).  A criterion
passes only if its identities hold and it finishes inside its time limit.
"""

import itertools
import json
import random
import time

import pytest

import oracles
from dqindex import hochschild as hh
from dqindex import sampling
from dqindex.fedosov import Fedosov, build_A, exact_part, flat_lift, gamma_E, solve_DE
from dqindex.index import index_compare, make_instance, quantum_index
from dqindex.matrix import MatrixSeries
from dqindex.poisson import hp_dim, standard_pi
from dqindex.scenario import bundled, load
from dqindex.starprod import (fiber_product, idempotent_lift, idempotent_path, mat_neumann_inverse,
                              mat_star_mul, moyal_star, moyal_torus, naturality_check,
                              path_derivative_residual, path_sandwich_residual, principal_symbol,
                              star_mul)
from dqindex.weyl import (FormalSeries, ModelConfig, Monomial, chi, delta, delta_inv,
                          hodge_residual)

golden = oracles.frozen()


@pytest.fixture
def criterion(capsys):
    def run(number, title, limit, body):
        t0 = time.perf_counter()
        failure = None
        try:
            note = body()
        except AssertionError as e:
            failure, note = e, f"identity failed: {e}"
        dt = time.perf_counter() - t0
        ok = failure is None and dt < limit
        with capsys.disabled():
            print(f"\nACCEPT {number} {'PASS' if ok else 'FAIL'} {title}: "
                  f"{dt:.2f}s (limit {limit}s) {note or ''}".rstrip())
        if failure is not None:
            raise failure
        assert dt < limit, f"criterion {number} took {dt:.2f}s, limit {limit}s"
    return run


def all_zero(items):
    bad = [x for x in items if not x.is_zero()]
    assert not bad, str(bad[0])[:300]
    return True


# ---------------------------------------------------------------- 1


def test_operator_calculus(criterion):
    rng = random.Random(1)
    samples = []
    for d in (2, 3):
        m = ModelConfig("plane", d, Y_max=6, H_max=2)
        count = 0
        while count < 120:
            mono = sampling.monomial(rng, m, hbar=rng.randint(0, 2))
            a = FormalSeries.from_terms(m, [(mono, 1)])
            if not a.is_zero():
                samples.append(a)
                count += 1

    def body():
        all_zero(delta(delta(a)) for a in samples)
        all_zero(delta_inv(delta_inv(a)) for a in samples)
        all_zero(hodge_residual(a) for a in samples)
        return f"{len(samples)} monomials"
    criterion(1, "delta^2 = 0, (delta^-1)^2 = 0, Hodge", 1, body)


# ---------------------------------------------------------------- 2


def random_christoffel(rng, m):
    d = m.d
    g = [[[None] * d for _ in range(d)] for _ in range(d)]
    for k in range(d):
        for i in range(d):
            for j in range(i, d):
                g[k][i][j] = g[k][j][i] = sampling.base_function(rng, m, rng.randint(0, 2), 2)
    return g


def test_fedosov(criterion):
    m = ModelConfig("plane", 2, Y_max=4, H_max=2)
    rng = random.Random(2)
    span = [m.parse(t) for t in ("1", "x1", "x2", "y1", "y2", "y1*y2", "y1^2", "h*y2",
                                 "x2*y1*th2", "th1", "th2", "y1*th1*th2")]
    conn = [MatrixSeries.zeros(m, 2), MatrixSeries.parse(m, [["0", "x1"], ["0", "0"]])]

    def body():
        curved = 0
        for _ in range(5):
            fed = Fedosov(m, random_christoffel(rng, m))
            A = build_A(fed)
            curved += not A.is_zero()
            all_zero(exact_part(fed.D(fed.D(a)), 2) for a in span)
            for _ in range(3):
                f = sampling.base_function(rng, m, 3)
                lift = flat_lift(fed, f)
                assert exact_part(fed.D(lift)).is_zero()
                assert chi(lift) == f
            fe = fed.with_gamma(gamma_E(fed, conn))
            for _ in range(2):
                b = sampling.matrix(rng, m, 2, 2, forms=0, fiber=rng.randint(1, 2))
                P = fe.D(b)
                assert exact_part(fe.D(solve_DE(fe, P)) - P).is_zero()
        return f"5 connections, {curved} with A != 0"
    criterion(2, "Fedosov D^2 = 0, flat lifts, solve_DE", 30, body)


# ---------------------------------------------------------------- 3


def test_star_algebra(criterion):
    rng = random.Random(3)
    plane = ModelConfig("plane", 2, Y_max=2, H_max=4)
    torus = ModelConfig("torus", 2, Y_max=2, H_max=4)
    stars = [moyal_star(standard_pi(plane)), moyal_torus(standard_pi(torus))]

    def body():
        triples = 0
        for s in stars:
            assert naturality_check(s)
            for _ in range(10):
                a, b, c = (sampling.base_function(rng, s.model, 3, 2, hbar=1) for _ in range(3))
                assert star_mul(star_mul(a, b, s), c, s) == star_mul(a, star_mul(b, c, s), s)
                triples += 1
        s = stars[1]
        box = list(itertools.product(range(-3, 4), repeat=2))
        mono = {k: FormalSeries.from_terms(torus, [(Monomial(k, (0, 0)), 1)]) for k in box}
        for a, b in itertools.product(box, repeat=2):
            c = star_mul(mono[a], mono[b], s) - star_mul(mono[b], mono[a], s)
            assert c.select((c.parts["base"] == 0).all(axis=1)).is_zero(), (a, b)
        return f"{triples} triples, {len(box) ** 2} mode pairs"
    criterion(3, "associativity mod h^5, naturality, torus trace", 30, body)


# ---------------------------------------------------------------- 4


def conjugate_by_unipotent(P, s):
    m = P.model
    G = MatrixSeries.identity(m, P.N) + MatrixSeries.unit(m, P.N, 0, 1, m.parse("h"))
    return mat_star_mul(mat_star_mul(G, P, s), mat_neumann_inverse(G, s), s)


def test_idempotent_machinery(criterion):
    rng = random.Random(4)
    cases = []
    for kind in ("plane", "torus"):
        m = ModelConfig(kind, 2, Y_max=2, H_max=4, T_max=4)
        s = (moyal_torus if kind == "torus" else moyal_star)(standard_pi(m))
        for N in (2, 3, 2, 3, 2, 3):
            q = sampling.conjugated_idempotent(rng, m, N, rank=rng.randint(1, N - 1))
            assert q.matmul(q) == q
            cases.append((q, s))

    def body():
        for q, s in cases:
            P = idempotent_lift(q, s)
            assert mat_star_mul(P, P, s) == P
            assert principal_symbol(P) == q
            P2 = conjugate_by_unipotent(P, s)
            Pt = idempotent_path(P, P2, s)
            assert mat_star_mul(Pt, Pt, s) == Pt
            assert Pt.map(lambda e: e.at_t(0)) == P and Pt.map(lambda e: e.at_t(1)) == P2
            assert path_derivative_residual(Pt, s).is_zero()
            assert path_sandwich_residual(Pt, s).is_zero()
        return f"{len(cases)} idempotents"
    criterion(4, "idempotent lifts and paths", 60, body)


# ---------------------------------------------------------------- 5


def bundled_instances():
    out = []
    for name in ("flat_plane", "torus", "curved_plane"):
        sc = load(bundled(name))
        if "index" not in sc.suites:
            continue
        for key in sc.idempotents:
            out.append((name, key, make_instance(sc.model, sc.inputs[key], sc.star_pi)))
    return out


def test_index_ledger(criterion):
    instances = bundled_instances()

    def body():
        keys = set()
        for name, key, inst in instances:
            r = index_compare(inst)
            bad = sorted(k for k, v in r.residuals.items() if not v.is_zero())
            assert not bad, f"{name}/{key}: {bad}"
            keys |= set(r.residuals)
        assert {"B^q MC", "Dq+[B,q]", "DU-U<>B", "DQ", "Q<>Q-Q", "homotopy"} <= keys
        return f"{len(instances)} instances, {len(keys)} residuals each"
    criterion(5, "index residual ledger on bundled instances", 60, body)


# ---------------------------------------------------------------- 6


def sign(p, q):
    return -1 if p * q % 2 else 1


def degree(P):
    ds = {P.degree_of(t) for t in P.terms}
    return ds.pop() if len(ds) == 1 else 0


def test_sign_contract(criterion):
    m = ModelConfig("plane", 2, Y_max=6, H_max=1)
    cap = 5
    rng = random.Random(6)
    F1 = fiber_product(moyal_star(standard_pi(m)), None, 1)
    F2 = fiber_product(moyal_star(standard_pi(m)), None, 2)
    g = hh.gerstenhaber
    R = hh.act_R
    conn = [MatrixSeries.zeros(m, 2), MatrixSeries.parse(m, [["0", "x1"], ["0", "0"]])]
    gam = gamma_E(Fedosov(m), conn)
    mu1, mu2 = hh.product_cochain(m, 1), hh.product_cochain(m, 2)

    def body():
        n = 0
        for _ in range(30):
            P = sampling.cochain(rng, m, rng.randint(0, 2), 1, forms=rng.randint(0, 1))
            Q = sampling.cochain(rng, m, rng.randint(1, 2), 1, forms=rng.randint(0, 1))
            S = sampling.cochain(rng, m, rng.randint(0, 2), 1, forms=rng.randint(0, 1))
            c = sampling.chain(rng, m, rng.randint(1, 2), 1, cap, 1)
            c2 = sampling.chain(rng, m, rng.randint(0, 2), 2, cap, 1)
            b1 = lambda z: hh.hoch_boundary(z, F1)  # noqa: E731
            p, q = degree(P), degree(Q)
            assert hh.hoch_codiff(hh.hoch_codiff(P, F1), F1).is_zero()
            assert b1(b1(c)).is_zero()
            assert g(P, Q) == g(Q, P).scale(-sign(p, q))
            assert (g(P, g(Q, S)) - g(g(P, Q), S) - g(Q, g(P, S)).scale(sign(p, q))).is_zero()
            lhs = R(g(P, Q), c)
            assert (lhs - R(P, R(Q, c)) + R(Q, R(P, c)).scale(sign(p, q))).truncate(cap).is_zero()
            assert R(hh.hoch_codiff(Q, F1), c) == b1(R(Q, c)) - R(Q, b1(c)).scale(sign(1, q))
            assert hh.trace_chain(hh.hoch_boundary(c2, F2)) == b1(hh.trace_chain(c2))
            assert hh.trace_chain(hh.chain_D(c2)) == hh.chain_D(hh.trace_chain(c2))
            assert hh.cotrace(hh.hoch_codiff(P, F1), 2) == hh.hoch_codiff(hh.cotrace(P, 2), F2)
            tw = sampling.chain(rng, m, rng.randint(1, 2), 2, cap, 1)
            lhs = hh.trace_tw(hh.chain_D(tw, gamma=gam) + hh.hoch_boundary(tw, mu2), gam)
            tc = hh.trace_tw(tw, gam)
            rhs = hh.chain_D(tc) + hh.hoch_boundary(tc, mu1)
            assert (lhs - rhs).truncate(cap - 1).is_zero()
            n += 1
        return f"{n} seeded rounds"
    criterion(6, "sign contract", 60, body)


# ---------------------------------------------------------------- 7


def test_poisson_homology(criterion):
    torus_case = oracles.HP_CASES["torus_d2_std_K3"]
    plane_case = oracles.HP_CASES["plane_d2_const_X4"]

    def body():
        t = ModelConfig("torus", 2, Y_max=2, H_max=1, K_max=3)
        p = ModelConfig("plane", 2, Y_max=2, H_max=1, X_max=4)
        got = (hp_dim(standard_pi(t)), hp_dim(standard_pi(p)))
        frozen = (golden["hp_dim"]["torus_d2_std_K3"], golden["hp_dim"]["plane_d2_const_X4"])
        live = (oracles.hp_dim_oracle(*torus_case), oracles.hp_dim_oracle(*plane_case))
        assert got == (1, 0) == frozen == live, (got, frozen, live)
        return "torus K=3 -> 1, plane X=4 -> 0"
    criterion(7, "HP_0 dimensions against the oracle", 10, body)


# ---------------------------------------------------------------- 8


def rank(q):
    tr = q.trace()
    assert tr == tr.hbar_part(0) and len(tr) <= 1
    return int(tr.coefs[0]) if len(tr) else 0


def test_index_theorem_on_the_torus(criterion):
    m = ModelConfig("torus", 2, Y_max=8, H_max=4, T_max=4, W_max=8)
    qs = {k: MatrixSeries.parse(m, v) for k, v in oracles.TORUS_IDEMPOTENTS.items()}

    def body():
        for name, q in qs.items():
            inst = make_instance(m, q)
            r = index_compare(inst, homotopy_cap=2)
            bad = sorted(k for k, v in r.residuals.items() if not v.is_zero())
            assert not bad, f"{name}: {bad}"
            for k in range(m.H_max + 1):
                assert r.quantum.hbar_part(k) == r.classical.hbar_part(k), (name, k)
            assert r.quantum == r.quantum_second
            assert quantum_index(r.second_lift, inst.star, inst.pi1) == r.quantum
            want = m.zero()
            for k, w in enumerate(golden["torus_index"][name]):
                want = want + m.parse(w).mul_h(k)
            assert r.quantum == want, name
            assert r.quantum == m.parse(str(rank(q))), name
        return f"{len(qs)} idempotents, orders 0..{m.H_max}"
    criterion(8, "quantum index = classical index on the torus", 120, body)


def test_golden_file_is_well_formed():
    data = json.loads(oracles.GOLDEN.read_text())
    assert set(data["torus_index"]) == set(oracles.TORUS_IDEMPOTENTS)
    assert all(len(v) == 5 for v in data["torus_index"].values())
