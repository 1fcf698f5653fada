from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from adlerpva.diffalg import DiffPoly
from adlerpva.dispersionless import ZSeries, disp_density, dkp_setup
from adlerpva.hierarchy import conserved_density, gl2_diagonal_scenario
from adlerpva.identities import (
    check_density_brackets, check_qc_residue_exact, check_residue_adjoint, check_trace_residue_symmetry,
    residue_with_adjoint, residue_with_shift,
)
from adlerpva.lambda_bracket import LambdaPoly
from adlerpva.psido import PsiDO, TruncationError

from conftest import P, matrices, polys, psidos

SETUPS = {s: gl2_diagonal_scenario(s, -7) for s in (Fraction(1), Fraction(-2), Fraction(1, 3))}
DKP = dkp_setup(12)
DKP_GENS = tuple(g for g in DKP.generators if g.name in ("u_0", "u_m1", "u_m2"))


@given(psidos(1, -4), psidos(1, -4))
def test_residue_adjoint_identity(A, B):
    assert check_residue_adjoint(A, B).passed


def test_residue_pairing_is_not_symmetric():
    # Res A(z+λ+∂) B(z) for A = ∂², B = u∂⁻² is 2uλ + 2u', the swapped order gives -2uλ
    A = PsiDO({2: 1})
    B = PsiDO({-2: P("u")})
    assert residue_with_adjoint(A, B) == residue_with_shift(A, B) == LambdaPoly({1: P("2*u"), 0: P("2*u'")})
    assert residue_with_shift(B, A) == LambdaPoly({1: P("-2*u")})


@settings(max_examples=25)
@given(matrices(2, 1, -3), matrices(2, 1, -3))
def test_trace_residue_symmetry(A, B):
    assert check_trace_residue_symmetry(A, B).passed


@given(psidos(1, -3), psidos(1, -3))
def test_trace_residue_symmetry_scalar(A, B):
    assert check_trace_residue_symmetry(A, B).passed


@st.composite
def diagonal_instances(draw):
    setup = SETUPS[draw(st.sampled_from(sorted(SETUPS)))]
    n = draw(st.integers(1, 3))
    probe = draw(polys(gens=tuple(setup.generators), max_terms=2, max_order=1, max_degree=2,
                       allow_zero=False))
    return setup, n, probe


@settings(max_examples=25)
@given(diagonal_instances())
def test_density_bracket_identities(inst):
    setup, n, a = inst
    P = setup.root_power(n - setup.K)
    h = conserved_density(setup, n)
    assert check_density_brackets(setup.T0, setup.A, P, h, a).passed


def test_density_bracket_identity_rejects_the_wrong_power():
    setup = SETUPS[Fraction(1)]
    q21 = next(g for g in setup.generators if g.name == "q21")
    h = conserved_density(setup, 2)
    good = check_density_brackets(setup.T0, setup.A, setup.root_power(1), h, DiffPoly.var(q21))
    bad = check_density_brackets(setup.T0, setup.A, setup.root_power(2), h, DiffPoly.var(q21))
    assert good.passed and not bad.passed


@settings(max_examples=25)
@given(st.integers(1, 3), polys(gens=DKP_GENS, max_terms=2, max_order=1, max_degree=2, allow_zero=False))
def test_dispersionless_density_bracket_identities(n, a):
    P = DKP.root_power(n - DKP.K)
    h = disp_density(DKP, n)
    assert check_density_brackets(DKP.T0, DKP.A, P, h, a, shifted=False).passed


@st.composite
def zseries(draw):
    return ZSeries({d: draw(polys(max_terms=2, max_order=1, max_degree=2)) for d in range(2, -3, -1)})


@given(zseries(), zseries())
def test_qc_residue_is_exact(A, B):
    assert check_qc_residue_exact(A, B).passed


@pytest.mark.parametrize("floor", [-1, -2])
def test_residue_adjoint_refuses_shallow_inputs(floor):
    A = PsiDO({3: 1}, None)
    B = PsiDO({0: 1}, floor)
    with pytest.raises(TruncationError):
        residue_with_shift(A, B)
