from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from adlerpva.adler import (
    adler_rhs, affine_operator, affine_tables, check_closure, induce_bracket_generic,
    verify_adler, verify_biadler, verify_s_adler,
)
from adlerpva.diffalg import DiffAlgebra, DiffPoly
from adlerpva.lambda_bracket import BracketTable, LambdaPoly, bracket, check_pva
from adlerpva.psido import MatPsiDO, PsiDO, invert

rationals = st.sampled_from([Fraction(0), Fraction(1), Fraction(-1), Fraction(2), Fraction(1, 2),
                             Fraction(-3, 4)])


def _scalar_d_plus_u():
    alg = DiffAlgebra()
    u = alg.declare("u")
    return u, PsiDO({1: 1, 0: DiffPoly.var(u)})


def _names(T: BracketTable) -> dict:
    return {g.name: g for g in T.generators}


# -- the affine operators ---------------------------------------------------------------------

def test_affine_operator_layout():
    A, T0, _ = affine_operator(2)
    q = _names(T0)
    assert A.entries[0][0] == PsiDO({1: 1, 0: DiffPoly.var(q["q11"])})
    # entry (i, j) carries q_ji
    assert A.entries[0][1] == PsiDO({0: DiffPoly.var(q["q21"])})


def test_affine_second_table_for_diagonal_s():
    s = Fraction(5, 2)
    _, T1 = affine_tables(2, [[s, 0], [0, 0]])
    nonzero = {(a.name, b.name): v for (a, b), v in T1.explicit_entries().items() if not v.is_zero()}
    assert nonzero == {("q12", "q21"): LambdaPoly.const(s), ("q21", "q12"): LambdaPoly.const(-s)}


def test_affine_second_table_for_nilpotent_s():
    # the factor added to A is [[0, -1], [0, 0]], its transpose is S
    _, T1 = affine_tables(2, [[0, 0], [-1, 0]])
    nonzero = {(a.name, b.name): v for (a, b), v in T1.explicit_entries().items() if not v.is_zero()}
    assert nonzero[("q11", "q21")] == LambdaPoly.const(1)
    assert nonzero[("q21", "q22")] == LambdaPoly.const(1)
    assert ("q12", "q22") not in nonzero


@settings(max_examples=6)
@given(st.lists(rationals, min_size=4, max_size=4))
def test_affine_gl2_is_adler_type(flat):
    S = [flat[:2], flat[2:]]
    A, T0, T1 = affine_operator(2, S)
    assert verify_adler(A, T0 + T1, (-3, 2), 2).passed


def test_affine_gl3_is_adler_type():
    S = [[1, 0, Fraction(1, 2)], [0, -2, 0], [3, 0, 0]]
    A, T0, T1 = affine_operator(3, S)
    assert verify_adler(A, T0 + T1, (-3, 2), 2).passed


def test_affine_rhs_is_the_s_bracket_at_the_origin():
    A, T0, T1 = affine_operator(2, [[2, 0], [1, -1]])
    q = _names(T0)
    R = adler_rhs(A, (0, 1, 1, 0), (-3, 2))
    expect = bracket(T0 + T1, DiffPoly.var(q["q21"]), DiffPoly.var(q["q12"]))
    assert R[(0, 0)] == expect
    assert all(v.is_zero() for key, v in R.coeffs.items() if key != (0, 0))


def test_identity_plus_q_is_s_adler_type():
    S = [[1, 2], [0, -1]]
    A, T0, _ = affine_operator(2)
    _, T1 = affine_tables(2, S)
    # with A + εX, X = S^t
    X = [[S[j][i] for j in range(2)] for i in range(2)]
    assert verify_s_adler(A, T1, X, (-3, 2)).passed
    assert verify_biadler(A, T0, T1, X, (-3, 2)).passed


def test_constant_matrix_has_zero_rhs():
    A = MatPsiDO.constant_matrix([[1, 2], [Fraction(1, 3), 0]])
    for idx in [(0, 0, 0, 0), (0, 1, 1, 0), (1, 1, 0, 1)]:
        assert adler_rhs(A, idx, (-3, 2)).is_zero()


# -- the scalar operator ∂ + u ------------------------------------------------------------------

def test_d_plus_u_rhs_and_verdicts():
    u, L = _scalar_d_plus_u()
    R = adler_rhs(L, (0, 0, 0, 0), (-3, 2))
    assert R[(0, 0)] == LambdaPoly.lam()
    assert all(v.is_zero() for key, v in R.coeffs.items() if key != (0, 0))
    good = BracketTable([u], {(u, u): LambdaPoly.lam()})
    assert verify_adler(L, good, (-3, 4)).passed
    bad = verify_adler(L, BracketTable([u], {(u, u): LambdaPoly.const(1)}), (-3, 2))
    assert not bad.passed
    first = bad.mismatches[0].where
    assert (first["z"], first["w"]) == (0, 0)


def test_both_expansions_agree_for_differential_operators():
    alg = DiffAlgebra()
    u, v = alg.declare("u"), alg.declare("v")
    L = PsiDO({2: 1, 1: DiffPoly.var(u), 0: DiffPoly.var(v)})
    for idx in [(0, 0, 0, 0)]:
        zs = adler_rhs(L, idx, (-3, 3), "z")
        ws = adler_rhs(L, idx, (-3, 3), "w")
        assert zs.coeffs == ws.coeffs


# -- induced brackets of generic operators ------------------------------------------------------

def test_generic_first_order_scalar():
    G = induce_bracket_generic(1, 1, differential_only=True)
    u0 = DiffPoly.var(G.gen(0))
    assert bracket(G.T0, u0, u0) == LambdaPoly.lam()
    assert bracket(G.T1, u0, u0).is_zero()


def test_generic_first_order_matrix_matches_affine():
    G = induce_bracket_generic(1, 2, differential_only=True)
    A, T0, _ = affine_operator(2)
    q = _names(T0)
    # generic entry (a, b) of order zero corresponds to q_ba
    to_q = {G.gen(0, a, b): DiffPoly.var(q[f"q{b + 1}{a + 1}"]) for a in range(2) for b in range(2)}
    for g1, x in to_q.items():
        for g2, y in to_q.items():
            induced = G.T0.entry(g1, g2)
            mapped = LambdaPoly({k: c.subs(to_q) for k, c in induced.coeffs.items()})
            assert mapped == bracket(T0, x, y)


@pytest.mark.parametrize("M,differential", [(1, True), (2, True), (3, True), (1, False)])
def test_generic_scalar_tables_are_pvas(M, differential):
    G = induce_bracket_generic(M, 1, differential_only=differential, floor=-10)
    gens = G.generators if differential else [g for g in G.generators if G.index[g][0] >= -2]
    assert check_pva(G.T0, gens).passed
    assert check_pva(G.T1, gens).passed


def test_generic_operator_reverifies():
    G = induce_bracket_generic(2, 1, differential_only=False, floor=-10)
    assert verify_adler(G.operator, G.T0, (-3, 2)).passed
    assert verify_s_adler(G.operator, G.T1, [[1]], (-3, 2)).passed


def test_generic_rejects_bad_orders():
    with pytest.raises(ValueError):
        induce_bracket_generic(0, 1)


# -- closure under standard constructions -------------------------------------------------------

def test_closure_scalar_pseudodifferential():
    G = induce_bracket_generic(2, 1, differential_only=False, floor=-10)
    rep = check_closure(G.operator.scale(3), G.T0, [0], [0], [[2]], [[1]])
    assert rep.passed
    assert rep.notes == ["submatrix: pass", "adjoint: pass", "inverse: pass", "quasideterminant: pass"]


def test_closure_matrix_with_constant_frames():
    G = induce_bracket_generic(1, 2, differential_only=True)
    P = MatPsiDO.constant_matrix([[1, 2], [0, 1]])
    Q = MatPsiDO.constant_matrix([[1, 0], [Fraction(-1, 2), 3]])
    rep = check_closure(P * G.operator * Q, G.T0, [0], [1], [[1], [1]], [[1, -1]])
    assert rep.passed


def test_inverse_needs_the_opposite_bracket():
    u, L = _scalar_d_plus_u()
    T = BracketTable([u], {(u, u): LambdaPoly.lam()})
    Linv = invert(L, -6)
    assert verify_adler(Linv, T.negated(), (-3, 0)).passed
    assert not verify_adler(Linv, T, (-3, 0)).passed
