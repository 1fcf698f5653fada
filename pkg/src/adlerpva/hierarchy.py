"""Conserved densities, Lax flows, involution and Lenard–Magri checks, gl₂ scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .adler import affine_operator, affine_tables
from .diffalg import ZERO, DiffAlgebra, DiffPoly, Generator, as_poly, is_total_derivative
from .lambda_bracket import BracketTable, action
from .psido import MatPsiDO, PsiDO, as_matrix, compose_matrices, invert, kth_root, quasideterminant
from .report import Report


def canonical_factorization(S) -> tuple[list[list], list[list]]:
    """S = IJ with I: im(S) -> F^N (reduced column basis) and J: F^N -> im(S).

    The columns of I are the reduced row echelon rows of S^t, so I has an
    identity block at the pivot rows and J is S restricted to those rows.
    """
    n, m = len(S), len(S[0])
    rows = [[as_poly(S[i][j]) for i in range(n)] for j in range(m)]  # S^t
    pivots: list[int] = []
    r = 0
    for c in range(n):
        p = next((k for k in range(r, m) if rows[k][c]), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = rows[r][c].inverse()
        rows[r] = [x * inv for x in rows[r]]
        for k in range(m):
            if k != r and rows[k][c]:
                f = rows[k][c]
                rows[k] = [x - f * y for x, y in zip(rows[k], rows[r])]
        pivots.append(c)
        r += 1
    basis = rows[:r]
    I = [[basis[k][i] for k in range(r)] for i in range(n)]
    J = [[as_poly(S[p][j]) for j in range(m)] for p in pivots]
    return I, J


@dataclass
class HierarchySetup:
    """Operator A of Adler type, a K-th root B, the bracket pair and a truncation depth."""

    A: MatPsiDO
    K: int
    B: MatPsiDO
    T0: BracketTable
    T1: BracketTable | None
    floor: int
    generators: list[Generator]
    parent: MatPsiDO | None = None
    name: str = ""
    _powers: dict = field(default_factory=dict, repr=False)

    def probes(self) -> list[tuple[tuple[int, int, int], DiffPoly]]:
        """Coefficients of A, which generate the subalgebra 𝒱₁."""
        out = []
        for i, row in enumerate(self.A.entries):
            for j, e in enumerate(row):
                for d in sorted(e.coeffs, reverse=True):
                    c = e.coeffs[d]
                    if not c.is_constant():
                        out.append(((i, j, d), c))
        return out

    def root_power(self, n: int) -> MatPsiDO:
        hit = self._powers.get(n)
        if hit is not None:
            return hit
        if n == 0:
            out = MatPsiDO.identity(self.A.rows)
        elif n < 0:
            out = _power(self.inverse_root(), -n)
        else:
            out = _power(self.B, n)
        self._powers[n] = out
        return out

    def inverse_root(self) -> MatPsiDO:
        hit = self._powers.get("inv")
        if hit is None:
            m = self.B.order or 0
            hit = as_matrix(invert(_scalar_or_matrix(self.B), self.floor - 2 * m))
            self._powers["inv"] = hit
        return hit


def _scalar_or_matrix(X: MatPsiDO):
    return X.entries[0][0] if X.shape == (1, 1) else X


def _power(X: MatPsiDO, n: int) -> MatPsiDO:
    out = X
    for _ in range(n - 1):
        out = compose_matrices(out, X)
    return out


def conserved_density(setup: HierarchySetup, n: int) -> DiffPoly:
    """h_{n,B} = (-K/|n|) Res tr B^n, and h_0 = 0."""
    if n == 0:
        return ZERO
    P = setup.root_power(n)
    return P.trace().residue().scale(Fraction(-setup.K, abs(n)))


def flow(setup: HierarchySetup, n: int) -> MatPsiDO:
    """[(B^n)_+, A], the Lax form of dA/dt_n."""
    if n == 0:
        return MatPsiDO.zeros(setup.A.rows, setup.A.cols)
    P = setup.root_power(n).positive_part()
    return compose_matrices(P, setup.A) - compose_matrices(setup.A, P)


def generator_flows(setup: HierarchySetup, n: int, table: BracketTable | None = None,
                    generators: Sequence[Generator] | None = None) -> dict:
    """du/dt_n = {∫h_n, u} for every generator u (first bracket unless given)."""
    T = setup.T0 if table is None else table
    h = conserved_density(setup, n)
    gens = setup.generators if generators is None else generators
    return {g: action(T, h, DiffPoly.var(g)) for g in gens}


def check_flow_consistency(setup: HierarchySetup, n: int) -> Report:
    """The generator flows induce the Lax flow on the coefficients of A."""
    from .lambda_bracket import evolve

    rep = Report("flow-consistency")
    char = generator_flows(setup, n)
    lax = flow(setup, n)
    floor = lax.floor
    for (i, j, d), c in setup.probes():
        if floor is not None and d < floor:
            continue
        rep.checked += 1
        got = evolve(c, char)
        exp = lax.entries[i][j].coeff(d)
        if got != exp:
            rep.add({"entry": (i + 1, j + 1), "degree": d}, exp, got)
    return rep


def check_involution(setup: HierarchySetup, m: int, n: int) -> bool:
    """{∫h_m, ∫h_n} = 0 under each bracket of the setup."""
    hm, hn = conserved_density(setup, m), conserved_density(setup, n)
    for T in (setup.T0, setup.T1):
        if T is None:
            continue
        if not is_total_derivative(action(T, hm, hn)):
            return False
    return True


def check_lenard_magri(setup: HierarchySetup, n: int, probe) -> Report:
    """{∫h_n, u}₀ = {∫h_{n+K}, u}₁ (= the Lax flow when u is a coefficient of A).

    ``probe`` is a DiffPoly or an index (i, j, d) of a coefficient of A.
    """
    if setup.T1 is None:
        raise ValueError("the setup has no second bracket")
    rep = Report("lenard-magri")
    lax = None
    if isinstance(probe, tuple):
        i, j, d = probe
        u = setup.A.entries[i][j].coeff(d)
        lax = flow(setup, n).entries[i][j].coeff(d)
        where = {"n": n, "entry": (i + 1, j + 1), "degree": d}
    else:
        u = as_poly(probe)
        where = {"n": n, "probe": str(u)}
    lhs = action(setup.T0, conserved_density(setup, n), u)
    rhs = action(setup.T1, conserved_density(setup, n + setup.K), u)
    rep.checked += 1
    if lhs != rhs:
        rep.add({**where, "pair": "h_n under 0 vs h_(n+K) under 1"}, lhs, rhs)
    if lax is not None:
        rep.checked += 1
        if lhs != lax:
            rep.add({**where, "pair": "h_n under 0 vs Lax"}, lax, lhs)
    return rep


def span_dimension(densities: Sequence[DiffPoly]) -> int:
    """Dimension of the span of the classes ∫h in 𝒱/∂𝒱 (desk-scale linear algebra)."""
    from .diffalg import variational_derivative

    vecs: list[dict] = []
    for h in densities:
        v = {}
        for g in sorted(as_poly(h).generators(), key=lambda x: x.name):
            if g.constant:
                continue
            for mono, c in variational_derivative(h, g).items():
                v[(g.name, mono)] = c
        vecs.append(v)
    keys = sorted({k for v in vecs for k in v}, key=repr)
    rows = [[v.get(k, ZERO) for k in keys] for v in vecs]
    return _rank(rows)


def _rank(rows: list[list]) -> int:
    rows = [list(r) for r in rows]
    rank, col = 0, 0
    ncols = len(rows[0]) if rows else 0
    while rank < len(rows) and col < ncols:
        p = next((k for k in range(rank, len(rows)) if rows[k][col]), None)
        if p is None:
            col += 1
            continue
        rows[rank], rows[p] = rows[p], rows[rank]
        pivot = rows[rank][col]
        for k in range(rank + 1, len(rows)):
            if rows[k][col]:
                f = rows[k][col] / pivot
                rows[k] = [x - f * y for x, y in zip(rows[k], rows[rank])]
        rank += 1
        col += 1
    return rank


# -- the two gl₂ scenarios -----------------------------------------------------

def _gl2_pieces(X, fractional: Sequence[str] = ()):
    """A = 𝟙∂ + Q, the table pair for the family A + εX, and the factorization X = IJ."""
    S = [[X[j][i] for j in range(2)] for i in range(2)]  # X plays the role of S^t
    A, T0, _ = affine_operator(2, None, fractional)
    _, T1 = affine_tables(2, S, fractional)
    I, J = canonical_factorization(X)
    return A, T0, T1, I, J


def gl2_diagonal_scenario(s=1, floor: int = -4) -> HierarchySetup:
    """X = diag(s, 0): L = |A|_IJ = (1/s)|A|₁₁ and K = 1.

    ``s`` may be a nonzero rational or a symbolic constant (a DiffPoly).
    """
    A, T0, T1, I, J = _gl2_pieces([[s, 0], [0, 0]])
    L = quasideterminant(A, I, J, floor)
    return HierarchySetup(L, 1, L, T0, T1, floor, list(T0.generators), parent=A,
                          name="gl2-diagonal")


def gl2_nilpotent_scenario(floor: int = -7) -> HierarchySetup:
    """X = [[0, -1], [0, 0]]: L = |A|_IJ, a second-order differential operator, and B = √L.

    q12 is declared fractional so that √q12 lies in the algebra.  The
    quasideterminant is computed as a truncated series; its tail below ∂⁰ is
    checked to vanish down to the working depth and then dropped, since L is
    a differential operator.
    """
    A, T0, T1, I, J = _gl2_pieces([[0, -1], [0, 0]], fractional=("q12",))
    L = _drop_below(quasideterminant(A, I, J, floor + 1), 0)
    B = as_matrix(kth_root(_scalar_or_matrix(L), 2, floor))
    return HierarchySetup(L, 2, B, T0, T1, floor, list(T0.generators), parent=A,
                          name="gl2-nilpotent")


def _drop_below(L: MatPsiDO, degree: int) -> MatPsiDO:
    rows = []
    for r in L.entries:
        row = []
        for e in r:
            if any(d < degree and c for d, c in e.coeffs.items()):
                raise ValueError("operator has a nonzero tail below the requested degree")
            row.append(PsiDO({d: c for d, c in e.coeffs.items() if d >= degree}))
        rows.append(row)
    return MatPsiDO(rows)
