"""Adler identities: both sides as truncated series in z, w, and their comparison.

The right-hand side of the Adler identity for entries (i, j, h, k) is

    A_hj(w+λ+∂) ι_z(z-w-λ-∂)^{-1} |_{x=∂} A_ik(z-λ-x)  -  A_hj(z) ι_z(z-w-λ-∂)^{-1} A_ik(w)

(the reflected symbol |_{x=∂}A(z-λ-x) equals the adjoint symbol A*(λ-z)).
Every shift by λ+∂ can carry a formal weight ℏ; tracking powers of ℏ gives
the ℏ-deformed identity used by the dispersionless module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

from .diffalg import ONE, ZERO, DiffAlgebra, DiffPoly, Generator, as_poly
from .lambda_bracket import BracketTable, LambdaPoly, bracket
from .psido import MatPsiDO, PsiDO, TruncationError, as_matrix, binom, invert, quasideterminant
from .report import Report

_UNIT = PsiDO.constant(1)


def _shifted(g: DiffPoly, m: int, cache: dict) -> LambdaPoly:
    key = (id(g), m)
    hit = cache.get(key)
    if hit is None:
        hit = LambdaPoly.const(g).shift_apply(m)
        cache[key] = (hit, g)
        return hit
    return hit[0]


def _acc(out: dict, e: int, term: LambdaPoly) -> None:
    cur = out.get(e)
    out[e] = term if cur is None else cur + term


def term_shifted(F: PsiDO, G: PsiDO, a: int, b: int, hbar_max: int | None = None) -> dict:
    """z^a w^b coefficient of F(w+ℏX) ι_z(z-w-ℏX)^{-1} |_{x=∂} G(z-ℏλ-ℏx), X = λ+∂.

    Returns a dict ℏ-power -> LambdaPoly.
    """
    out: dict = {}
    oF, oG = F.order, G.order
    if oF is None or oG is None:
        return out
    cache: dict = {}
    l = 0
    while a + l + 1 <= oG:
        s = 0
        while True:
            r = a + l + 1 + s
            if r > oG:
                break
            cs = binom(r, s)
            if cs:
                g = G.coeff(r)
                if g:
                    if s % 2:
                        cs = -cs
                    for t in range(0, oF - b + l + 1):
                        e = t + s
                        if hbar_max is not None and e > hbar_max:
                            break
                        p = b - l + t
                        f = F.coeff(p)
                        if not f:
                            continue
                        ct = binom(p + l, t)
                        if not ct:
                            continue
                        _acc(out, e, _shifted(g, e, cache).scale(f.scale(ct * cs)))
            s += 1
        l += 1
    return out


def term_plain(F: PsiDO, G: PsiDO, a: int, b: int, hbar_max: int | None = None) -> dict:
    """z^a w^b coefficient of F(z) ι_z(z-w-ℏX)^{-1} G(w), as ℏ-power -> LambdaPoly."""
    out: dict = {}
    oF, oG = F.order, G.order
    if oF is None or oG is None:
        return out
    cache: dict = {}
    for p in range(a + 1, oF + 1):
        f = F.coeff(p)
        if not f:
            continue
        l = p - a - 1
        for t in range(0, l + 1):
            if hbar_max is not None and t > hbar_max:
                break
            q = b - l + t
            if q > oG:
                break
            g = G.coeff(q)
            if not g:
                continue
            _acc(out, t, _shifted(g, t, cache).scale(f.scale(binom(l, t))))
    return out


def _total(graded: dict) -> LambdaPoly:
    acc = LambdaPoly()
    for v in graded.values():
        acc = acc + v
    return acc


def _diff(x: dict, y: dict) -> dict:
    out = dict(x)
    for e, v in y.items():
        _acc(out, e, -v)
    return out


def _scaled(x: dict, c) -> dict:
    return {e: v.scale(c) for e, v in x.items()} if c else {}


def adler_rhs_coefficient(A: MatPsiDO, idx: tuple[int, int, int, int], a: int, b: int,
                          hbar_max: int | None = None, graded: bool = False):
    i, j, h, k = idx
    F, G = A.entries[h][j], A.entries[i][k]
    out = _diff(term_shifted(F, G, a, b, hbar_max), term_plain(F, G, a, b, hbar_max))
    return out if graded else _total(out)


def s_adler_rhs_coefficient(A: MatPsiDO, S, idx: tuple[int, int, int, int], a: int, b: int,
                            hbar_max: int | None = None, graded: bool = False):
    """RHS of the S-Adler identity: the ε-linear part of the Adler RHS for A + εS.

    ``S`` is the constant matrix added to A; its entries may be rationals or
    symbolic constants.
    """
    i, j, h, k = idx
    s_ik = as_poly(S[i][k])
    s_hj = as_poly(S[h][j])
    out: dict = {}
    if s_ik:
        F = A.entries[h][j]
        part = _diff(term_shifted(F, _UNIT, a, b, hbar_max), term_plain(F, _UNIT, a, b, hbar_max))
        out = _scaled(part, s_ik)
    if s_hj:
        G = A.entries[i][k]
        part = _diff(term_shifted(_UNIT, G, a, b, hbar_max), term_plain(_UNIT, G, a, b, hbar_max))
        for e, v in _scaled(part, s_hj).items():
            _acc(out, e, v)
    return out if graded else _total(out)


def _coeff_w_expansion(F: PsiDO, G: PsiDO, a: int, b: int) -> LambdaPoly:
    """Same RHS with ι_w (both entries must be differential operators)."""
    for X in (F, G):
        if X.floor is not None or any(d < 0 for d in X.coeffs):
            raise ValueError("the ι_w expansion is implemented for differential operators only")
    acc = LambdaPoly()
    oF, oG = F.order, G.order
    if oF is None or oG is None:
        return acc
    cache: dict = {}
    # F(w+X) * (-sum_l z^l (w+X)^{-l-1}) * G reflected
    for r, g in G.coeffs.items():
        for s in range(r + 1):
            l = a - r + s
            if l < 0:
                continue
            cs = binom(r, s) * (-1 if s % 2 else 1)
            for p, f in F.coeffs.items():
                n = p - l - 1
                t = n - b
                if t < 0:
                    continue
                ct = binom(n, t)
                if ct:
                    acc = acc - _shifted(g, t + s, cache).scale(f.scale(ct * cs))
    # - F(z) * (-sum_l z^l (w+X)^{-l-1}) * G(w)
    for p, f in F.coeffs.items():
        l = a - p
        if l < 0:
            continue
        n = -l - 1
        for q, g in G.coeffs.items():
            t = q + n - b
            if t < 0:
                continue
            ct = binom(n, t)
            if ct:
                acc = acc + _shifted(g, t, cache).scale(f.scale(ct))
    return acc


@dataclass
class BiSeries:
    """Coefficients (z-power, w-power) -> LambdaPoly over a window, ι_z convention."""

    zrange: tuple[int, int]
    wrange: tuple[int, int]
    coeffs: dict = field(default_factory=dict)
    expansion: str = "z"

    def __getitem__(self, key: tuple[int, int]) -> LambdaPoly:
        return self.coeffs.get(key, LambdaPoly())

    def is_zero(self) -> bool:
        return all(v.is_zero() for v in self.coeffs.values())


def _window(window, A: MatPsiDO) -> tuple[tuple[int, int], tuple[int, int]]:
    if window is None:
        hi = (A.order or 0) + 1
        return (-3, hi), (-3, hi)
    if isinstance(window[0], (tuple, list)):
        return tuple(window[0]), tuple(window[1])
    return (window[0], window[1]), (window[0], window[1])


def adler_rhs(A, idx: tuple[int, int, int, int], window=None, expansion: str = "z") -> BiSeries:
    A = as_matrix(A)
    zr, wr = _window(window, A)
    out = BiSeries(zr, wr, expansion=expansion)
    i, j, h, k = idx
    for a in range(zr[0], zr[1] + 1):
        for b in range(wr[0], wr[1] + 1):
            if expansion == "z":
                out.coeffs[(a, b)] = adler_rhs_coefficient(A, idx, a, b)
            else:
                F, G = A.entries[h][j], A.entries[i][k]
                out.coeffs[(a, b)] = _coeff_w_expansion(F, G, a, b)
    return out


def _compare(rep: Report, where: dict, lhs: LambdaPoly, rhs: LambdaPoly, lam_max: int | None) -> None:
    rep.checked += 1
    degs = set(lhs.coeffs) | set(rhs.coeffs)
    for d in sorted(degs):
        if lam_max is not None and d > lam_max:
            continue
        x, y = rhs.coeff(d), lhs.coeff(d)
        if x != y:
            rep.add({**where, "lambda": d}, x, y)


def _entry_label(idx: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(x + 1 for x in idx)


def verify_adler(A, T: BracketTable, window=None, lam_max: int | None = None) -> Report:
    """Compare {A_ij(z) λ A_hk(w)} with the Adler RHS over the window."""
    A = as_matrix(A)
    zr, wr = _window(window, A)
    rep = Report("adler")
    n, m = A.shape
    for i, j, h, k in product(range(n), range(m), range(n), range(m)):
        for a in range(zr[0], zr[1] + 1):
            ca = A.entries[i][j].coeff(a)
            for b in range(wr[0], wr[1] + 1):
                cb = A.entries[h][k].coeff(b)
                lhs = bracket(T, ca, cb)
                rhs = adler_rhs_coefficient(A, (i, j, h, k), a, b)
                _compare(rep, {"entry": _entry_label((i, j, h, k)), "z": a, "w": b}, lhs, rhs, lam_max)
    return rep


def verify_s_adler(A, T1: BracketTable, S, window=None, lam_max: int | None = None) -> Report:
    A = as_matrix(A)
    zr, wr = _window(window, A)
    rep = Report("s-adler")
    n, m = A.shape
    for i, j, h, k in product(range(n), range(m), range(n), range(m)):
        for a in range(zr[0], zr[1] + 1):
            ca = A.entries[i][j].coeff(a)
            for b in range(wr[0], wr[1] + 1):
                cb = A.entries[h][k].coeff(b)
                lhs = bracket(T1, ca, cb)
                rhs = s_adler_rhs_coefficient(A, S, (i, j, h, k), a, b)
                _compare(rep, {"entry": _entry_label((i, j, h, k)), "z": a, "w": b}, lhs, rhs, lam_max)
    return rep


def verify_biadler(A, T0: BracketTable, T1: BracketTable, S=None, window=None,
                   lam_max: int | None = None) -> Report:
    """A is Adler for T0 and S-Adler for T1 (S defaults to the identity)."""
    A = as_matrix(A)
    if S is None:
        S = [[1 if x == y else 0 for y in range(A.cols)] for x in range(A.rows)]
    rep = Report("bi-adler")
    rep.merge(verify_adler(A, T0, window, lam_max))
    rep.merge(verify_s_adler(A, T1, S, window, lam_max))
    return rep


def check_closure(A, T: BracketTable, rows: Sequence[int], cols: Sequence[int], I, J,
                  floor: int = -3, lam_max: int | None = None) -> Report:
    """Adler-type operators stay Adler-type under the standard constructions.

    Checks, over z, w windows from ``floor`` up, that the submatrix A_{rows,cols},
    the adjoint A*, and the quasideterminant |A|_IJ are of Adler type for T and
    that A^{-1} is of Adler type for the opposite bracket -T.
    """
    A = as_matrix(A)
    rep = Report("closure")

    def run(label: str, build, table: BracketTable) -> None:
        # the RHS at z^a w^b reads coefficients below the window; deepen until it is covered
        last: Exception | None = None
        for extra in range(0, 12, 2):
            try:
                X = as_matrix(build(floor - extra))
                sub = verify_adler(X, table, (floor, (X.order or 0) + 1), lam_max)
                break
            except TruncationError as exc:
                last = exc
        else:
            raise TruncationError(f"{label} not reachable above floor {floor}: {last}")
        for m in sub.mismatches:
            m.where = {"construction": label, **m.where}
        rep.merge(sub)
        rep.notes.append(f"{label}: {'pass' if sub.passed else 'FAIL'}")

    run("submatrix", lambda _: A.submatrix(rows, cols), T)
    run("adjoint", lambda _: A.adjoint(A.floor), T)
    run("inverse", lambda f: invert(A, f), T.negated())
    run("quasideterminant", lambda f: quasideterminant(A, I, J, f), T)
    return rep


# -- example operators ---------------------------------------------------------

def affine_generators(N: int, fractional: Sequence[str] = ()) -> list[Generator]:
    """Generators q_ij; names listed in ``fractional`` admit rational exponents."""
    out = []
    for i in range(N):
        for j in range(N):
            name = f"q{i + 1}{j + 1}"
            frac = name in fractional
            out.append(Generator(name, invertible=frac, fractional=frac))
    return out


def affine_tables(N: int, S, fractional: Sequence[str] = ()) -> tuple[BracketTable, BracketTable]:
    """{q_ij λ q_hk}_0 = δ_jh q_ik - δ_ki q_hj + δ_jh δ_ik λ and {·}_1 = tr(S^t[a, b])."""
    gens = affine_generators(N, fractional)
    q = {(i, j): DiffPoly.var(gens[i * N + j]) for i in range(N) for j in range(N)}
    e0, e1 = {}, {}
    for i, j, h, k in product(range(N), repeat=4):
        val = ZERO
        if j == h:
            val = val + q[(i, k)]
        if k == i:
            val = val - q[(h, j)]
        lp = LambdaPoly.const(val)
        if j == h and i == k:
            lp = lp + LambdaPoly.lam()
        if lp:
            e0[(gens[i * N + j], gens[h * N + k])] = lp
        c = ZERO
        if j == h:
            c = c + as_poly(S[i][k])
        if k == i:
            c = c - as_poly(S[h][j])
        if c:
            e1[(gens[i * N + j], gens[h * N + k])] = LambdaPoly.const(c)
    return BracketTable(gens, e0, name="affine0"), BracketTable(gens, e1, name="affine1")


def affine_operator(N: int, S=None, fractional: Sequence[str] = ()
                    ) -> tuple[MatPsiDO, BracketTable, BracketTable]:
    """A_S = 𝟙∂ + sum q_ji E_ij + S^t with the affine tables; entry (i, j) is δ_ij∂ + q_ji + S_ji."""
    if S is None:
        S = [[0] * N for _ in range(N)]
    gens = affine_generators(N, fractional)
    rows = []
    for i in range(N):
        row = []
        for j in range(N):
            c = {0: DiffPoly.var(gens[j * N + i]) + as_poly(S[j][i])}
            if i == j:
                c[1] = ONE
            row.append(PsiDO(c))
        rows.append(row)
    T0, T1 = affine_tables(N, S, fractional)
    return MatPsiDO(rows), T0, T1


def generic_name(j: int, a: int, b: int, N: int) -> str:
    idx = f"m{-j}" if j < 0 else str(j)
    return f"u_{idx}" if N == 1 else f"u_{idx}_{a + 1}{b + 1}"


@dataclass
class GenericAdler:
    """The generic operator 𝟙∂^M + sum_j U_j ∂^j and its induced brackets."""

    M: int
    N: int
    operator: MatPsiDO
    T0: BracketTable
    T1: BracketTable
    generators: list[Generator]
    index: dict  # Generator -> (j, a, b)

    def gen(self, j: int, a: int = 0, b: int = 0) -> Generator:
        for g, key in self.index.items():
            if key == (j, a, b):
                return g
        raise KeyError((j, a, b))

    def algebra(self) -> DiffAlgebra:
        return DiffAlgebra(self.generators)


def generic_operator(M: int, N: int, differential_only: bool = False, floor: int = -6):
    """Operator with generator coefficients u_{j;ab}, j from 0 (or ``floor``) to M-1."""
    lo = 0 if differential_only else floor
    gens, index = [], {}
    for j in range(M - 1, lo - 1, -1):
        for a in range(N):
            for b in range(N):
                g = Generator(generic_name(j, a, b, N))
                gens.append(g)
                index[g] = (j, a, b)
    entries = []
    for a in range(N):
        row = []
        for b in range(N):
            c = {j: DiffPoly.var(g) for g, (j, x, y) in index.items() if (x, y) == (a, b)}
            if a == b:
                c[M] = ONE
            row.append(PsiDO(c, None if differential_only else floor))
        entries.append(row)
    return MatPsiDO(entries), gens, index


def induce_bracket_generic(M: int, N: int, differential_only: bool = False, floor: int = -6,
                           S=None) -> GenericAdler:
    """Read both brackets off the Adler and S-Adler identities of the generic operator.

    Entries of the truncated (pseudodifferential) tables are produced on demand;
    those needing coefficients below ``floor`` raise TruncationError.
    """
    if M < 1 or N < 1:
        raise ValueError("need M >= 1 and N >= 1")
    L, gens, index = generic_operator(M, N, differential_only, floor)
    if S is None:
        S = [[1 if x == y else 0 for y in range(N)] for x in range(N)]

    def rule0(g1: Generator, g2: Generator) -> LambdaPoly:
        p, i, j = index[g1]
        q, h, k = index[g2]
        return adler_rhs_coefficient(L, (i, j, h, k), p, q)

    def rule1(g1: Generator, g2: Generator) -> LambdaPoly:
        p, i, j = index[g1]
        q, h, k = index[g2]
        return s_adler_rhs_coefficient(L, S, (i, j, h, k), p, q)

    T0 = BracketTable(gens, rule=rule0, name=f"generic0[{M},{N}]")
    T1 = BracketTable(gens, rule=rule1, name=f"generic1[{M},{N}]")
    return GenericAdler(M, N, L, T0, T1, gens, index)
