"""Residue identities behind the conserved densities, each as a pair of routes.

Every function here computes two sides of an identity by different means and
returns a Report, so a property test can compare them on random inputs.
"""

from __future__ import annotations

from .diffalg import ZERO, DiffPoly, is_total_derivative
from .lambda_bracket import BracketTable, LambdaPoly, bracket
from .psido import LaurentSeries, PsiDO, TruncationError, adjoint, binom, compose_matrices, as_matrix
from .report import Report


def _need(A: LaurentSeries, lo: int, what: str) -> None:
    if A.floor is not None and lo < A.floor:
        raise TruncationError(f"{what} is needed down to degree {lo} but is known only to {A.floor}")


def residue_with_adjoint(A: PsiDO, B: PsiDO) -> LambdaPoly:
    """Res_z A(z) B*(λ-z), with B* computed as an operator and both symbols expanded in large z."""
    if A.order is None or B.order is None:
        return LambdaPoly()
    # only degrees r >= -1 - ord A reach the residue
    lo = -1 - A.order
    Bs = adjoint(B, lo if B.floor is None else B.floor)
    _need(Bs, lo, "the adjoint")
    out: dict = {}
    for p, a in A.coeffs.items():
        for r, c in Bs.coeffs.items():
            k = p + r + 1  # (λ - z)^r = Σ_k C(r, k) λ^k (-z)^(r-k)
            if k < 0:
                continue
            term = (a * c).scale(binom(r, k) * (-1 if (r - k) % 2 else 1))
            out[k] = out[k] + term if k in out else term
    return LambdaPoly._raw(out)


def residue_with_shift(A: PsiDO, B: PsiDO) -> LambdaPoly:
    """Res_z A(z+λ+∂) B(z), with (z+λ+∂)^p acting on the coefficients of B."""
    if A.order is None or B.order is None:
        return LambdaPoly()
    _need(A, -1 - B.order, "the left factor")
    _need(B, -1 - A.order, "the right factor")
    out = LambdaPoly()
    for p, a in A.coeffs.items():
        for q, b in B.coeffs.items():
            t = p + q + 1
            if t < 0:
                continue
            out = out + LambdaPoly.const(b).shift_apply(t).scale(a.scale(binom(p, t)))
    return out


def check_residue_adjoint(A: PsiDO, B: PsiDO) -> Report:
    rep = Report("residue-adjoint")
    lhs, rhs = residue_with_adjoint(A, B), residue_with_shift(A, B)
    rep.checked += 1
    if lhs != rhs:
        rep.add({"identity": "Res A(z) B*(λ-z) = Res A(z+λ+∂) B(z)"}, lhs, rhs)
    return rep


def check_trace_residue_symmetry(A, B) -> Report:
    """∫Res tr(A∘B) = ∫Res tr(B∘A)."""
    A, B = as_matrix(A), as_matrix(B)
    rep = Report("trace-residue-symmetry")
    d = compose_matrices(A, B).trace().residue() - compose_matrices(B, A).trace().residue()
    rep.checked += 1
    if not is_total_derivative(d):
        rep.add({"identity": "∫Res tr(AB) = ∫Res tr(BA)"}, ZERO, d)
    return rep


# -- density brackets -------------------------------------------------------

def _grid(A) -> list[list[LaurentSeries]]:
    if isinstance(A, LaurentSeries):
        return [[A]]
    return as_matrix(A).entries


def _coefficient_pairs(A, P):
    """Yield (A_ij;p, p, P_ji;q, q) for the pairs that reach the z^-1 coefficient."""
    A, P = _grid(A), _grid(P)
    n = len(A)
    for i in range(n):
        for j in range(n):
            Aij, Pji = A[i][j], P[j][i]
            if Aij.order is None or Pji.order is None:
                continue
            _need(Aij, -1 - Pji.order, "the operator")
            _need(Pji, -1 - Aij.order, "the root power")
            for p, a in Aij.coeffs.items():
                for q, b in Pji.coeffs.items():
                    if p + q + 1 >= 0:
                        yield a, p, b, q


def density_bracket_left(T: BracketTable, A, P, a, shifted: bool = True) -> DiffPoly:
    """-Σ Res_z {A_ij(z+x) _x a} (|_{x=∂} P_ji(z)), P = B^(n-K).

    With shifted=False, A(z) is used in place of A(z+x), the commutative symbol case.
    """
    out = ZERO
    for c, p, b, q in _coefficient_pairs(A, P):
        br = bracket(T, c, a)
        if not br:
            continue
        ts = [p + q + 1] if shifted else ([0] if p + q == -1 else [])
        for t in ts:
            scale = binom(p, t) if shifted else 1
            for r, cr in br.coeffs.items():
                out = out + (cr * b.derive(t + r)).scale(scale)
    return -out


def density_bracket_right(T: BracketTable, A, P, a, shifted: bool = True) -> DiffPoly:
    """-Σ Res_z {a _λ A_ij(z+x)}|_{λ=0} (|_{x=∂} P_ji(z)); equal to ∫{a λ h}|_{λ=0} modulo ∂."""
    out = ZERO
    for c, p, b, q in _coefficient_pairs(A, P):
        d = bracket(T, a, c).at_zero()
        if not d:
            continue
        if shifted:
            t = p + q + 1
            out = out + (d * b.derive(t)).scale(binom(p, t))
        elif p + q == -1:
            out = out + d * b
    return -out


def check_density_brackets(T: BracketTable, A, P, h: DiffPoly, a, shifted: bool = True) -> Report:
    """Both density-bracket identities for h = h_n and P = B^(n-K).

    The first, {h λ a}|_{λ=0}, is compared exactly; the second, ∫{a λ h}|_{λ=0},
    modulo total derivatives.
    """
    rep = Report("density-brackets")
    lhs = bracket(T, h, a).at_zero()
    rhs = density_bracket_left(T, A, P, a, shifted)
    rep.checked += 1
    if lhs != rhs:
        rep.add({"side": "{h λ a} at λ=0", "probe": str(a)}, rhs, lhs)
    lhs2 = bracket(T, a, h).at_zero()
    rhs2 = density_bracket_right(T, A, P, a, shifted)
    rep.checked += 1
    if not is_total_derivative(lhs2 - rhs2):
        rep.add({"side": "∫{a λ h} at λ=0", "probe": str(a)}, rhs2, lhs2)
    return rep


def check_qc_residue_exact(A, B) -> Report:
    """∫Res_z {A, B}_qc = 0."""
    from .dispersionless import qc_bracket

    rep = Report("qc-residue")
    r = qc_bracket(A, B).residue()
    rep.checked += 1
    if not is_total_derivative(r):
        rep.add({"identity": "∫Res {A, B}_qc = 0"}, ZERO, r)
    return rep
