from __future__ import annotations

import sys
from fractions import Fraction

from hypothesis import HealthCheck, settings, strategies as st

from adlerpva.diffalg import DiffAlgebra, DiffPoly
from adlerpva.psido import MatPsiDO, PsiDO

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

ALG = DiffAlgebra()
U = ALG.declare("u")
V = ALG.declare("v")
Q = ALG.declare("q", fractional=True)


def P(text: str) -> DiffPoly:
    return ALG.parse(text)


scalars = st.sampled_from([Fraction(x) for x in (-3, -2, -1, 1, 2, 3)] + [Fraction(1, 2), Fraction(-2, 3)])


@st.composite
def polys(draw, gens=(U, V), max_terms: int = 3, max_order: int = 2, max_degree: int = 2,
          allow_zero: bool = True) -> DiffPoly:
    out = DiffPoly()
    for _ in range(draw(st.integers(0 if allow_zero else 1, max_terms))):
        term = DiffPoly.const(draw(scalars))
        for _ in range(draw(st.integers(0, max_degree))):
            g = draw(st.sampled_from(gens))
            term = term * DiffPoly.var(g, draw(st.integers(0, max_order)))
        out = out + term
    if not allow_zero and not out:
        out = DiffPoly.var(gens[0])
    return out


@st.composite
def psidos(draw, top: int = 1, floor: int = -3, monic: bool = False, gens=(U, V),
           max_degree: int = 1, exact: bool = False) -> PsiDO:
    """Random operator with terms from degree ``top`` down to ``floor``.

    With exact=True the result has no truncation tail.
    """
    coeffs = {}
    for d in range(top - (1 if monic else 0), floor - 1, -1):
        coeffs[d] = draw(polys(gens=gens, max_terms=2, max_order=1, max_degree=max_degree))
    if monic:
        coeffs[top] = DiffPoly.const(1)
    return PsiDO(coeffs, None if exact else floor)


@st.composite
def constant_psidos(draw, top: int = 1, bottom: int = -1, nonzero: bool = False) -> PsiDO:
    coeffs = {d: draw(st.sampled_from([0, 0, 1, -1, 2, Fraction(1, 2)])) for d in range(top, bottom - 1, -1)}
    if nonzero and not any(coeffs.values()):
        coeffs[top] = 1
    return PsiDO(coeffs)


@st.composite
def matrices(draw, n: int = 2, top: int = 1, floor: int = -3, monic: bool = False, gens=(U, V),
             exact: bool = False) -> MatPsiDO:
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if monic and i == j:
                row.append(draw(psidos(top, floor, True, gens, exact=exact)))
            else:
                row.append(draw(psidos(top - 1 if monic else top, floor, False, gens, exact=exact)))
        rows.append(row)
    return MatPsiDO(rows)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
