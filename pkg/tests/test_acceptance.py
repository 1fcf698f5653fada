"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as they are produced and again in the terminal summary.
Where a criterion asks for agreement with a published closed form that is
wrong, the criterion line reports FAIL with the diagnosis, the corrected form
is asserted, and the published form is kept as a strict xfail.
"""

from __future__ import annotations

import random
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import pytest

from adlerpva import dispersionless as disp
from adlerpva.adler import (
    affine_operator, check_closure, induce_bracket_generic, verify_adler, verify_s_adler,
)
from adlerpva.cli import bundled_scenarios, main
from adlerpva.diffalg import ZERO, DiffAlgebra, DiffPoly, is_total_derivative
from adlerpva.hierarchy import (
    check_involution, check_lenard_magri, conserved_density, generator_flows, gl2_diagonal_scenario,
    gl2_nilpotent_scenario,
)
from adlerpva.identities import (
    check_density_brackets, check_qc_residue_exact, check_residue_adjoint, check_trace_residue_symmetry,
)
from adlerpva.lambda_bracket import check_pva
from adlerpva.psido import (
    MatPsiDO, PsiDO, compose_matrices, delta_root_family, quasideterminant, quasideterminant_blocks,
)

from conftest import U, V

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, seconds: float, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}"
    RESULTS[n] = line
    print(line)


# -- random inputs ------------------------------------------------------------------------------

RATIONALS = [Fraction(x) for x in (-2, -1, 1, 2, 3)] + [Fraction(1, 2), Fraction(-3, 4)]


def rand_poly(rng: random.Random, gens, terms: int = 2, order: int = 1, degree: int = 2) -> DiffPoly:
    out = ZERO
    for _ in range(rng.randint(0, terms)):
        t = DiffPoly.const(rng.choice(RATIONALS))
        for _ in range(rng.randint(0, degree)):
            t = t * DiffPoly.var(rng.choice(gens), rng.randint(0, order))
        out = out + t
    return out


def rand_psido(rng: random.Random, top: int, floor: int, gens=(U, V)) -> PsiDO:
    return PsiDO({d: rand_poly(rng, gens) for d in range(top, floor - 1, -1)}, floor)


def rand_matrix(rng: random.Random, n: int, top: int, floor: int) -> MatPsiDO:
    return MatPsiDO([[rand_psido(rng, top, floor) for _ in range(n)] for _ in range(n)])


def rand_monic_3x3(rng: random.Random) -> MatPsiDO:
    """𝟙∂ + Q with Q an exact order-zero matrix, so every principal block is invertible."""
    rows = []
    for i in range(3):
        row = []
        for j in range(3):
            c = {0: rand_poly(rng, (U, V))}
            if i == j:
                c[1] = DiffPoly.const(1)
            row.append(PsiDO(c))
        rows.append(row)
    return MatPsiDO(rows)


def _det(m: list[list[Fraction]]) -> Fraction:
    if len(m) == 1:
        return m[0][0]
    return m[0][0] * m[1][1] - m[0][1] * m[1][0]


def _matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def _inv2(m):
    d = _det(m)
    return [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]


# -- 1. affine operators ----------------------------------------------------------------------------

def test_criterion_1_affine_adler():
    rng = random.Random(1)
    worst, cases, ok = 0.0, 0, True
    for N in (2, 3):
        for _ in range(3):
            S = [[rng.choice(RATIONALS + [Fraction(0)]) for _ in range(N)] for _ in range(N)]
            A, T0, T1 = affine_operator(N, S)
            t = time.perf_counter()
            rep = verify_adler(A, T0 + T1, (-3, 2), 2)
            dt = time.perf_counter() - t
            worst = max(worst, dt)
            cases += 1
            ok = ok and rep.passed and rep.checked > 0 and dt < 10
    record(1, ok, worst, f"{cases} affine cases over gl2 and gl3, window [-3, 2], lambda <= 2; slowest case shown")
    assert ok


# -- 2. generic operators ---------------------------------------------------------------------------

def test_criterion_2_generic_tables():
    t = time.perf_counter()
    ok = True
    parts = []
    for M, N in ((1, 1), (2, 1), (3, 1), (1, 2)):
        G = induce_bracket_generic(M, N, differential_only=False, floor=-12)
        lo = -3 if N == 1 else -2
        gens = [g for g in G.generators if G.index[g][0] >= lo]
        pva = check_pva(G.T0, gens).passed and check_pva(G.T1, gens).passed
        eye = [[1 if i == j else 0 for j in range(N)] for i in range(N)]
        adl = (verify_adler(G.operator, G.T0, (-3, M))).passed and \
            verify_s_adler(G.operator, G.T1, eye, (-3, M)).passed
        parts.append(f"({M},{N}) pva={'ok' if pva else 'FAIL'} adler={'ok' if adl else 'FAIL'}")
        ok = ok and pva and adl
    dt = time.perf_counter() - t
    ok = ok and dt < 60
    record(2, ok, dt, "; ".join(parts))
    assert ok


# -- 3. diagonal gl2 --------------------------------------------------------------------------------

PRINTED_T2 = {
    "q12": "(q12'' - 2*q12'*(q11 - q22) - q12*(q11' - q22') + q12*(q11 - q22)^2 - 2*q12^2*q21)",
    "q21": "(-q21'' - 2*q21'*(q11 - q22) - q21*(q11' - q22') - q21*(q11 - q22)^2 + 2*q12*q21^2)",
}


@pytest.fixture(scope="module")
def diagonal():
    alg = DiffAlgebra()
    s = DiffPoly.var(alg.declare("s", invertible=True, constant=True))
    setup = gl2_diagonal_scenario(s, -7)
    for g in setup.generators:
        alg.add(g)
    return alg, setup


def _diagonal_printed_t2(alg, setup) -> bool:
    f2 = {g.name: v for g, v in generator_flows(setup, 2).items()}
    return all(f2[g] == alg.parse(f"{b}/s") for g, b in PRINTED_T2.items())


def test_criterion_3_diagonal_gl2(diagonal):
    alg, setup = diagonal
    t = time.perf_counter()
    p = alg.parse
    checks = {}
    checks["h1"] = is_total_derivative(conserved_density(setup, 1) - p("q12*q21/s"))
    checks["h2"] = is_total_derivative(conserved_density(setup, 2)
                                       - p("(-q12'*q21 + q12*q21*(q11 - q22))/s^2"))
    f1 = {g.name: v for g, v in generator_flows(setup, 1).items()}
    f2 = {g.name: v for g, v in generator_flows(setup, 2).items()}
    checks["t1 flows"] = (f1["q12"] == p("(q12' - q12*(q11 - q22))/s")
                          and f1["q21"] == p("(q21' + q21*(q11 - q22))/s"))
    checks["t2 flows (corrected)"] = all(f2[g] == p(f"-{b}/s^2") for g, b in PRINTED_T2.items())
    checks["dq11 = dq22 = 0"] = all(f[g] == ZERO for f in (f1, f2) for g in ("q11", "q22"))
    rep = check_lenard_magri(setup, 0, p("q21"))
    checks["n=0 probe q21 mismatch"] = (not rep.passed and rep.mismatches[0].expected == ZERO
                                        and rep.mismatches[0].got == p("q21"))
    checks["involution m,n <= 4"] = all(check_involution(setup, m, n) for m in range(5) for n in range(5))
    printed = _diagonal_printed_t2(alg, setup)
    dt = time.perf_counter() - t
    attained = all(checks.values()) and dt < 120
    detail = ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items())
    if not printed:
        detail += "; published t2 flows do NOT match: the computed flows are -1/s^2 times the displayed brackets, not 1/s"
    record(3, attained and printed, dt, detail)
    assert attained


@pytest.mark.xfail(strict=True, reason="published t2 flows carry 1/s; the computed prefactor is -1/s^2")
def test_criterion_3_published_t2_flows(diagonal):
    assert _diagonal_printed_t2(*diagonal)


# -- 4. nilpotent gl2 -------------------------------------------------------------------------------

_Q21_COMMON = (
    "(q21' - q21*(q11 - q22))/(2*q12^(1/2))"
    " + (3*(q11 - q22)^2*q12' - 6*(q11' - q22')*q12' - 2*(q11 - q22)*q12'')/(16*q12^(5/2))"
    " + 5*((q11 - q22)*q12'^2 + 4*q12'*q12'')/(32*q12^(7/2)) - 35*q12'^3/(64*q12^(9/2))"
)
Q21_PUBLISHED = _Q21_COMMON + " + (2*q12'*q21 - (q11 - q22)^3 + 2*(q11'' - q22'') - q12''')/(8*q12^(3/2))"
Q21_CORRECTED = (_Q21_COMMON + " + (2*q12'*q21 - (q11 - q22)^3 + 2*(q11'' - q22''))/(8*q12^(3/2))"
                 " - q12'''/(8*q12^(5/2))")
DIFF_FLOW = ("q21*q12^(1/2) + ((q11 - q22)^2 + 2*(q11' - q22'))/(4*q12^(1/2))"
             " - (q12'' + 2*(q11 - q22)*q12')/(4*q12^(3/2)) + 7*q12'^2/(16*q12^(5/2))")


@pytest.fixture(scope="module")
def nilpotent():
    t = time.perf_counter()
    setup = gl2_nilpotent_scenario(-7)
    alg = DiffAlgebra(list(setup.generators))
    flows = {g.name: v for g, v in generator_flows(setup, 1).items()}
    return alg, setup, flows, time.perf_counter() - t


def test_criterion_4_nilpotent_gl2(nilpotent):
    alg, setup, f, build = nilpotent
    t = time.perf_counter()
    p = alg.parse
    B = setup.B.entries[0][0]
    checks = {
        "b1": B.coeff(1) == p("q12^(-1/2)"),
        "b0": B.coeff(0) == p("(q11 + q22)/(2*q12^(1/2)) - q12'/(4*q12^(3/2))"),
        "b-1": B.coeff(-1) == p("-q21*q12^(1/2)/2 - ((q11 - q22)^2 + 2*(q11' - q22'))/(8*q12^(1/2))"
                                " + (2*(q11 - q22)*q12' + q12'')/(8*q12^(3/2)) - 7*q12'^2/(32*q12^(5/2))"),
        "h1 = -2 b-1": conserved_density(setup, 1) == B.coeff(-1).scale(-2),
        "dq12 = 0": f["q12"] == ZERO,
        "d(q11+q22) = 0": f["q11"] + f["q22"] == ZERO,
        "d(q11-q22)": f["q11"] - f["q22"] == p(DIFF_FLOW),
        "dq21 (corrected)": f["q21"] == p(Q21_CORRECTED),
    }
    printed = f["q21"] == p(Q21_PUBLISHED)
    dt = build + time.perf_counter() - t
    attained = all(checks.values()) and dt < 300
    detail = ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items())
    if not printed:
        detail += ("; published dq21 does NOT match: its q12''' term belongs under q12^(5/2), "
                   "not inside the q12^(3/2) group")
    record(4, attained and printed, dt, detail)
    assert attained


@pytest.mark.xfail(strict=True, reason="the published q12''' term sits under q12^(3/2); it belongs under q12^(5/2)")
def test_criterion_4_published_q21_flow(nilpotent):
    alg, _, f, _ = nilpotent
    assert f["q21"] == alg.parse(Q21_PUBLISHED)


# -- 5. quasideterminant properties -----------------------------------------------------------------

NESTED = [([0, 1], [0]), ([0, 1], [1]), ([0, 2], [0]), ([0, 2], [2]), ([1, 2], [1]), ([1, 2], [2]),
          ([0, 1], [0, 1]), ([0, 2], [0, 2])]


def _random_ij(rng: random.Random):
    while True:
        M = rng.choice([1, 2])
        I = [[Fraction(rng.randint(-2, 2)) for _ in range(M)] for _ in range(3)]
        J = [[Fraction(rng.randint(-2, 2)) for _ in range(3)] for _ in range(M)]
        if _det(_matmul(J, I)) != 0:
            return I, J


def test_criterion_5_quasideterminants():
    rng = random.Random(5)
    floor = -3
    t = time.perf_counter()
    bad_h = bad_s = 0
    for _ in range(200):
        A = rand_monic_3x3(rng)
        I, I1 = rng.choice(NESTED)
        inner = quasideterminant_blocks(A, I, I, floor - 2)
        pos = [I.index(x) for x in I1]
        if not quasideterminant_blocks(A, I1, I1, floor).agrees_with(
                quasideterminant_blocks(inner, pos, pos, floor), floor):
            bad_h += 1
        Im, Jm = _random_ij(rng)
        IJ = _matmul(Im, Jm)
        lhs = quasideterminant(A + MatPsiDO.constant_matrix(IJ), Im, Jm, floor)
        rhs = quasideterminant(A, Im, Jm, floor) + MatPsiDO.identity(len(Jm))
        if not lhs.agrees_with(rhs, floor):
            bad_s += 1
    dt = time.perf_counter() - t
    ok = bad_h == 0 and bad_s == 0 and dt < 120
    record(5, ok, dt, f"200 random 3x3 operators: hereditary failures {bad_h}, shift-by-IJ failures {bad_s}")
    assert ok


# -- 6. closure properties --------------------------------------------------------------------------

def test_criterion_6_closure():
    rng = random.Random(6)
    t = time.perf_counter()
    scalar = {(M, d): induce_bracket_generic(M, 1, d, -10) for M in (1, 2) for d in (True, False)}
    matrix = induce_bracket_generic(1, 2, True)
    failures = 0
    for k in range(50):
        if k % 5 == 4:
            G = matrix
            while True:
                P = [[Fraction(rng.randint(-2, 2)) for _ in range(2)] for _ in range(2)]
                Q = [[Fraction(rng.randint(-2, 2)) for _ in range(2)] for _ in range(2)]
                if _det(P) and _det(Q):
                    break
            A = MatPsiDO.constant_matrix(P) * G.operator * MatPsiDO.constant_matrix(Q)
            lead_inv = _inv2(_matmul(P, Q))
            while True:
                I = [[Fraction(rng.randint(-2, 2))] for _ in range(2)]
                J = [[Fraction(rng.randint(-2, 2)) for _ in range(2)]]
                if _matmul(_matmul(J, lead_inv), I)[0][0]:
                    break
            rows, cols = [rng.randint(0, 1)], [rng.randint(0, 1)]
        else:
            G = scalar[(rng.choice([1, 2]), rng.choice([True, False]))]
            A = G.operator.scale(rng.choice(RATIONALS))
            I, J = [[rng.choice(RATIONALS)]], [[rng.choice(RATIONALS)]]
            rows, cols = [0], [0]
        if not check_closure(A, G.T0, rows, cols, I, J, -3).passed:
            failures += 1
    dt = time.perf_counter() - t
    ok = failures == 0
    record(6, ok, dt, f"50 random Adler-type operators: submatrix, adjoint, inverse (opposite bracket), "
                      f"quasideterminant; failures {failures}")
    assert ok


# -- 7. dispersionless ------------------------------------------------------------------------------

def _dkp_flow_checks(setup):
    u = {g.name: DiffPoly.var(g) for g in setup.generators}
    U_ = lambda j: u["u_0" if j == 0 else f"u_m{-j}"]  # noqa: E731
    dL, zL = setup.A.truncate(-6).derive_coeffs(), setup.A.dz()
    Z = disp.ZSeries
    mul = disp.multiply
    t1 = dL - mul(zL, Z.constant(U_(0).derive()))
    tail2 = Z({1: U_(0).derive(), 0: U_(-1).derive() + U_(0) * U_(0).derive()}).scale(2)
    t2_fixed = mul(Z({1: 2, 0: U_(0).scale(2)}), dL) - mul(zL, tail2)
    t2_published = mul(Z({1: 2, 0: U_(0)}), dL) - mul(zL, tail2)
    pre3 = Z({2: 3, 1: U_(0).scale(6), 0: (U_(-1) + U_(0) * U_(0)).scale(3)})
    tail3 = Z({2: U_(0).derive().scale(3), 1: (U_(-1).derive() + U_(0) * U_(0).derive().scale(2)).scale(3),
               0: (U_(-2).scale(3) + U_(0) * U_(-1).scale(6) + U_(0) * U_(0) * U_(0)).derive()})
    t3 = mul(pre3, dL) - mul(zL, tail3)
    f = {n: disp.disp_flow(setup, n) for n in (1, 2, 3)}
    return U_, {
        "t1": f[1].agrees_with(t1, -4),
        "t2 (corrected prefactor)": f[2].agrees_with(t2_fixed, -4),
        "t3": f[3].agrees_with(t3, -4),
    }, f[2].agrees_with(t2_published, -4)


@pytest.fixture(scope="module")
def dkp():
    return disp.dkp_setup(12)


def test_criterion_7_dispersionless(dkp):
    t = time.perf_counter()
    checks = {}
    pva = True
    for M in (1, 2, 3):
        for laurent in (True, False):
            D = disp.disp_brackets_generic(M, laurent, 10)
            gens = [g for g in D.generators if D.index[g] >= -2]
            pva = pva and check_pva(D.T0, gens).passed and check_pva(D.T1, gens).passed
    checks["generic pairs PVA, M <= 3"] = pva
    U_, flows, published_t2 = _dkp_flow_checks(dkp)
    h = {1: -U_(-1), 2: -(U_(-2) + U_(0) * U_(-1)),
         3: -(U_(-3) + U_(0) * U_(-2).scale(2) + U_(-1) * U_(-1) + U_(0) * U_(0) * U_(-1))}
    checks["h1..h3"] = all(is_total_derivative(disp.disp_density(dkp, n) - v) for n, v in h.items())
    checks.update(flows)
    checks["Benney k = -1..-3"] = all(
        disp.benney_rhs(dkp, k) == (U_(k - 1).derive() - U_(k + 1) * U_(-1).derive().scale(k + 1)).scale(2)
        for k in (-1, -2, -3))
    checks["Lenard-Magri n <= 3"] = all(
        disp.check_disp_lenard_magri(dkp, n, probe).passed
        for n in range(4) for probe in (U_(-1), U_(-2), -1, -2))
    dt = time.perf_counter() - t
    attained = all(checks.values()) and dt < 60
    detail = ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in checks.items())
    if not published_t2:
        detail += "; published dL/dt2 does NOT match: the prefactor (2z + u0) must be 2z + 2u0"
    record(7, attained and published_t2, dt, detail)
    assert attained


@pytest.mark.xfail(strict=True, reason="the published t2 prefactor (2z + u0) should be 2z + 2u0")
def test_criterion_7_published_dkp_t2(dkp):
    assert _dkp_flow_checks(dkp)[2]


# -- 8. square roots of ∂𝟙₂ -------------------------------------------------------------------------

def _rand_constant_psido(rng: random.Random, nonzero: bool) -> PsiDO:
    while True:
        c = {d: rng.choice([0, 0, 1, -1, 2, Fraction(1, 2)]) for d in range(rng.randint(0, 1), -2, -1)}
        p = PsiDO(c)
        if not nonzero or not p.is_zero():
            return p


def test_criterion_8_delta_roots():
    rng = random.Random(8)
    floor = -4
    t = time.perf_counter()
    bad = 0
    target = MatPsiDO([[PsiDO.d(1), 0], [0, PsiDO.d(1)]])
    for _ in range(20):
        D = delta_root_family(_rand_constant_psido(rng, False), _rand_constant_psido(rng, True), floor - 10)
        sq = compose_matrices(D, D)
        if not (D.trace().is_zero() and sq.floor is not None and sq.floor <= floor
                and sq.agrees_with(target, floor)):
            bad += 1
    dt = time.perf_counter() - t
    record(8, bad == 0, dt, f"20 random constant (alpha, beta): failures {bad}, trace and square checked")
    assert bad == 0


# -- 9. residue identities --------------------------------------------------------------------------

def test_criterion_9_residue_identities():
    rng = random.Random(9)
    t = time.perf_counter()
    fails = {"residue-adjoint": 0, "trace-residue symmetry": 0, "density brackets": 0, "qc residue": 0}
    diag = {s: gl2_diagonal_scenario(s, -7) for s in (Fraction(1), Fraction(-2), Fraction(1, 3))}
    dkp = disp.dkp_setup(12)
    dkp_gens = [g for g in dkp.generators if g.name in ("u_0", "u_m1", "u_m2")]
    for k in range(100):
        A, B = rand_psido(rng, rng.randint(0, 2), -4), rand_psido(rng, rng.randint(0, 2), -4)
        if not check_residue_adjoint(A, B).passed:
            fails["residue-adjoint"] += 1
        X, Y = rand_matrix(rng, 2, 1, -3), rand_matrix(rng, 2, 1, -3)
        if not check_trace_residue_symmetry(X, Y).passed:
            fails["trace-residue symmetry"] += 1
        n = rng.randint(1, 3)
        if k % 2:
            setup = diag[rng.choice(sorted(diag))]
            a = rand_poly(rng, setup.generators) or DiffPoly.var(setup.generators[0])
            rep = check_density_brackets(setup.T0, setup.A, setup.root_power(n - setup.K),
                                         conserved_density(setup, n), a)
        else:
            a = rand_poly(rng, dkp_gens) or DiffPoly.var(dkp_gens[1])
            rep = check_density_brackets(dkp.T0, dkp.A, dkp.root_power(n - dkp.K),
                                         disp.disp_density(dkp, n), a, shifted=False)
        if not rep.passed:
            fails["density brackets"] += 1
        Za = disp.ZSeries({d: rand_poly(rng, (U, V)) for d in range(2, -3, -1)})
        Zb = disp.ZSeries({d: rand_poly(rng, (U, V)) for d in range(2, -3, -1)})
        if not check_qc_residue_exact(Za, Zb).passed:
            fails["qc residue"] += 1
    dt = time.perf_counter() - t
    ok = not any(fails.values())
    record(9, ok, dt, "100 random instances each; failures " + ", ".join(f"{k} {v}" for k, v in fails.items()))
    assert ok


# -- 10. determinism --------------------------------------------------------------------------------

def test_criterion_10_determinism():
    t = time.perf_counter()
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in bundled_scenarios():
            a, b = Path(tmp) / f"{name}.a", Path(tmp) / f"{name}.b"
            for out in (a, b):
                assert main(["run", name, "-o", str(out), "--format", "text,structured,latex"]) == 0
            for f in sorted(a.iterdir()):
                if f.read_bytes() != (b / f.name).read_bytes():
                    differing.append(f"{name}/{f.name}")
            if sorted(p.name for p in a.iterdir()) != sorted(p.name for p in b.iterdir()):
                differing.append(f"{name} file set")
    dt = time.perf_counter() - t
    ok = not differing
    record(10, ok, dt, f"{len(bundled_scenarios())} bundled scenarios rerun; differing artifacts: "
                       f"{', '.join(differing) or 'none'}")
    assert ok
