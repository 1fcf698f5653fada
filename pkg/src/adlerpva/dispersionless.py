"""Dispersionless limit: commutative symbols, the quasi-classical bracket,
dispersionless (bi-)Adler identities, the closed-form generic bracket pairs and the dKP hierarchy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

from .adler import generic_name, term_plain, term_shifted
from .diffalg import ONE, ZERO, AlgebraError, DiffPoly, Generator, as_poly, is_total_derivative
from .lambda_bracket import BracketTable, LambdaPoly, action, bracket
from .psido import LaurentSeries, NotInvertibleError, TruncationError, fmax, _product_floor
from .report import Report

_LAM = LambdaPoly.lam()


class ZSeries(LaurentSeries):
    """Truncated Laurent series in a commuting symbol z; ``*`` is the plain product."""

    __slots__ = ()

    @classmethod
    def z(cls, k: int = 1) -> "ZSeries":
        return cls._raw({k: ONE}, None)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, DiffPoly)):
            return self.scale(other)
        if isinstance(other, ZSeries):
            return multiply(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def dz(self) -> "ZSeries":
        """∂_z, lowering every power by one."""
        fl = None if self.floor is None else self.floor - 1
        return ZSeries._raw({d - 1: v.scale(d) for d, v in self.coeffs.items() if d}, fl)

    def power(self, n: int, floor: int | None = None) -> "ZSeries":
        if n < 0:
            return invert_z(self, floor).power(-n, floor)
        out = ZSeries.constant(1)
        for _ in range(n):
            out = multiply(out, self, floor)
        return out

    def subs(self, mapping) -> "ZSeries":
        return self.map_coeffs(lambda v: v.subs(mapping))

    def __str__(self) -> str:
        return format_zseries(self)

    def __repr__(self) -> str:
        return f"ZSeries({format_zseries(self)})"

    def latex(self) -> str:
        return latex_zseries(self)


def multiply(A: ZSeries, B: ZSeries, floor: int | None = None) -> ZSeries:
    fl = fmax(_product_floor(A, B), floor)
    out: dict = {}
    for i, a in A.coeffs.items():
        for j, b in B.coeffs.items():
            d = i + j
            if fl is not None and d < fl:
                continue
            p = a * b
            out[d] = out[d] + p if d in out else p
    return ZSeries._raw(out, fl)


def invert_z(A: ZSeries, floor: int | None) -> ZSeries:
    N = A.order
    if N is None:
        raise NotInvertibleError("zero series")
    try:
        inv_lead = A.coeffs[N].inverse()
    except AlgebraError as exc:
        raise NotInvertibleError(f"leading coefficient {A.coeffs[N]} is not invertible") from exc
    if floor is None:
        if A.floor is None and len(A.coeffs) == 1:
            return ZSeries._raw({-N: inv_lead}, None)
        raise TruncationError("exact inverse is an infinite series; pass a floor")
    if A.floor is not None and A.floor > 2 * N + floor:
        raise TruncationError(f"inverse to floor {floor} needs the series down to {2 * N + floor}")
    C = {-N: inv_lead}
    for d in range(-N - 1, floor - 1, -1):
        r = ZERO
        for i, a in A.coeffs.items():
            c = C.get(N + d - i)
            if c is not None and i != N:
                r = r + a * c
        if r:
            C[d] = -(inv_lead * r)
    return ZSeries._raw(C, floor)


def kth_root_z(A: ZSeries, K: int, floor: int) -> ZSeries:
    """B with B^K = A (commutative product), principal root of the leading coefficient."""
    if K == 0:
        raise ValueError("K must be nonzero")
    if K < 0:
        M = A.order or 0
        return kth_root_z(invert_z(A, floor - (-K - 1) * M // -K), -K, floor)
    M = A.order
    if M is None or M % K:
        raise ValueError(f"degree {M} is not divisible by {K}")
    m = M // K
    try:
        b_lead = A.coeffs[M].root(K)
        inv_den = (b_lead ** (K - 1)).scale(K).inverse()
    except AlgebraError as exc:
        raise NotInvertibleError(f"leading coefficient has no usable {K}-th root") from exc
    need = (K - 1) * m + floor
    if A.floor is not None and A.floor > need:
        raise TruncationError(f"root to floor {floor} needs the series down to {need}")
    B = {m: b_lead}
    for d in range(m - 1, floor - 1, -1):
        k = (K - 1) * m + d
        P = ZSeries._raw(dict(B), None)
        known = P.power(K).coeffs.get(k, ZERO) if K > 1 else ZERO
        b = (A.coeff(k) - known) * inv_den
        if b:
            B[d] = b
    return ZSeries._raw(B, floor)


def qc_bracket(A: ZSeries, B: ZSeries) -> ZSeries:
    """{A, B}_qc = (∂_z A) ∂B - (∂_z B) ∂A."""
    return multiply(A.dz(), B.derive_coeffs()) - multiply(B.dz(), A.derive_coeffs())


# -- dispersionless Adler identities ------------------------------------------

def _lp_mul_shift(f: DiffPoly, g: DiffPoly) -> LambdaPoly:
    """f (λ+∂) g."""
    return LambdaPoly._raw({1: f * g, 0: f * g.derive()})


def disp_rhs_pair(F: LaurentSeries, G: LaurentSeries, a: int, b: int) -> LambdaPoly:
    """z^a w^b coefficient of ι_z(z-w)^{-1}(∂_w-∂_z)P + ι_z(z-w)^{-2}(P - Q),

    P = F(w)(λ+∂)G(z), Q = F(z)(λ+∂)G(w).
    """
    acc = LambdaPoly()
    oG, oF = G.order, F.order
    if oG is None or oF is None:
        return acc
    n = 0
    while a + n + 1 <= oG:
        p = b - n + 1
        if p <= oF:
            f, g = F.coeff(p), G.coeff(a + n + 1)
            if f and g and p:
                acc = acc + _lp_mul_shift(f, g).scale(p)
        q = a + n + 2
        if q <= oG:
            f, g = F.coeff(b - n), G.coeff(q)
            if f and g:
                acc = acc - _lp_mul_shift(f, g).scale(q)
                acc = acc + _lp_mul_shift(f, g).scale(n + 1)
        n += 1
    n = 0
    while a + n + 2 <= oF:
        f, g = F.coeff(a + n + 2), G.coeff(b - n) if b - n <= oG else ZERO
        if f and g:
            acc = acc - _lp_mul_shift(f, g).scale(n + 1)
        n += 1
    return acc


def _entries(A):
    if isinstance(A, LaurentSeries):
        return [[A]]
    return A


_ONE_Z = ZSeries.constant(1)


def disp_adler_rhs_coefficient(A, idx, a: int, b: int) -> LambdaPoly:
    E = _entries(A)
    i, j, h, k = idx
    return disp_rhs_pair(E[h][j], E[i][k], a, b)


def disp_s_adler_rhs_coefficient(A, S, idx, a: int, b: int) -> LambdaPoly:
    """ε-linear part of the dispersionless Adler RHS for A + εS."""
    E = _entries(A)
    i, j, h, k = idx
    acc = LambdaPoly()
    s_hj, s_ik = as_poly(S[h][j]), as_poly(S[i][k])
    if s_hj:
        acc = acc + disp_rhs_pair(_ONE_Z, E[i][k], a, b).scale(s_hj)
    if s_ik:
        acc = acc + disp_rhs_pair(E[h][j], _ONE_Z, a, b).scale(s_ik)
    return acc


def _window(window, E) -> tuple[tuple[int, int], tuple[int, int]]:
    if window is None:
        hi = max((e.order or 0) for r in E for e in r) + 1
        return (-3, hi), (-3, hi)
    if isinstance(window[0], (tuple, list)):
        return tuple(window[0]), tuple(window[1])
    return (window[0], window[1]), (window[0], window[1])


def _verify(A, T: BracketTable, window, rhs, kind: str) -> Report:
    E = _entries(A)
    zr, wr = _window(window, E)
    rep = Report(kind)
    n, m = len(E), len(E[0])
    for i, j, h, k in product(range(n), range(m), range(n), range(m)):
        for a in range(zr[0], zr[1] + 1):
            ca = E[i][j].coeff(a)
            for b in range(wr[0], wr[1] + 1):
                cb = E[h][k].coeff(b)
                lhs = bracket(T, ca, cb)
                exp = rhs((i, j, h, k), a, b)
                rep.checked += 1
                if lhs != exp:
                    rep.add({"entry": (i + 1, j + 1, h + 1, k + 1), "z": a, "w": b}, exp, lhs)
    return rep


def verify_disp_adler(A, T: BracketTable, window=None) -> Report:
    return _verify(A, T, window, lambda idx, a, b: disp_adler_rhs_coefficient(A, idx, a, b),
                   "disp-adler")


def verify_disp_biadler(A, T0: BracketTable, T1: BracketTable, window=None, S=None) -> Report:
    E = _entries(A)
    if S is None:
        S = [[1 if x == y else 0 for y in range(len(E[0]))] for x in range(len(E))]
    rep = Report("disp-bi-adler")
    rep.merge(verify_disp_adler(A, T0, window))
    rep.merge(_verify(A, T1, window,
                      lambda idx, a, b: disp_s_adler_rhs_coefficient(A, S, idx, a, b),
                      "disp-s-adler"))
    return rep


def hbar_adler_rhs_coefficient(A: LaurentSeries, a: int, b: int) -> dict:
    """The scalar ℏ-Adler RHS at z^a w^b to first order in ℏ: {0: ..., 1: ...}."""
    x = term_shifted(A, A, a, b, hbar_max=1)
    y = term_plain(A, A, a, b, hbar_max=1)
    out = {}
    for e in (0, 1):
        out[e] = x.get(e, LambdaPoly()) - y.get(e, LambdaPoly())
    return out


def verify_hbar_adler_mod2(A: LaurentSeries, T: BracketTable, window=None) -> Report:
    """ℏ-Adler identity modulo ℏ² for the bracket ℏ·T (T the dispersionless bracket)."""
    E = [[A]]
    zr, wr = _window(window, E)
    rep = Report("hbar-adler")
    for a in range(zr[0], zr[1] + 1):
        ca = A.coeff(a)
        for b in range(wr[0], wr[1] + 1):
            cb = A.coeff(b)
            rhs = hbar_adler_rhs_coefficient(A, a, b)
            rep.checked += 2
            if rhs[0]:
                rep.add({"z": a, "w": b, "hbar": 0}, LambdaPoly(), rhs[0])
            lhs = bracket(T, ca, cb)
            if lhs != rhs[1]:
                rep.add({"z": a, "w": b, "hbar": 1}, rhs[1], lhs)
    return rep


# -- closed-form generic bracket pairs ------------------------------------------

@dataclass
class DispGeneric:
    """Generic symbol L(z) = z^M + sum u_j z^j with the closed-form bracket pair."""

    M: int
    laurent: bool
    depth: int
    symbol: ZSeries
    T0: BracketTable
    T1: BracketTable
    generators: list[Generator]
    index: dict  # Generator -> j

    def u(self, j: int) -> DiffPoly:
        if j == self.M:
            return ONE
        if j > self.M or (not self.laurent and j < 0):
            return ZERO
        if j < -self.depth:
            raise TruncationError(f"u_{j} lies below the declared depth {-self.depth}")
        return DiffPoly.var(self.gen(j))

    def gen(self, j: int) -> Generator:
        return Generator(generic_name(j, 0, 0, 1))


def disp_brackets_generic(M: int, laurent: bool = True, depth: int = 10) -> DispGeneric:
    """The first and second generic brackets on u_j, j < M, Laurent or polynomial.

    In the Laurent case the generators are truncated at u_{-depth}.
    """
    if M < 1:
        raise ValueError("need M >= 1")
    lo = -depth if laurent else 0
    gens = [Generator(generic_name(j, 0, 0, 1)) for j in range(M - 1, lo - 1, -1)]
    index = {g: j for g, j in zip(gens, range(M - 1, lo - 1, -1))}
    symbol = ZSeries({M: ONE, **{j: DiffPoly.var(g) for g, j in index.items()}},
                     lo if laurent else None)
    D = DispGeneric(M, laurent, depth, symbol, None, None, gens, index)  # type: ignore[arg-type]

    def rule0(g1: Generator, g2: Generator) -> LambdaPoly:
        i, j = index[g1], index[g2]
        u = D.u
        acc = _lp_mul_shift(u(j + 1), u(i + 1)).scale(j + 1)
        top = M - i - 2
        if not laurent:
            top = min(top, j)
        for l in range(0, top + 1):
            acc = acc + _lp_mul_shift(u(j - l), u(i + l + 2)).scale(j - i)
            p = u(j - l) * u(i + l + 2)
            acc = acc - LambdaPoly._raw({1: p.scale(2 * (l + 1)), 0: p.derive().scale(l + 1)})
        return acc

    def rule1(g1: Generator, g2: Generator) -> LambdaPoly:
        i, j = index[g1], index[g2]
        if i >= 0 and j >= 0 and i + j + 2 <= M:
            sign = -1
        elif laurent and i <= -1 and j <= -1:
            sign = 1
        else:
            return LambdaPoly()
        p = D.u(i + j + 2)
        # ((i+1)(λ+∂) + (j+1)λ) p
        return LambdaPoly._raw({1: p.scale(sign * (i + j + 2)), 0: p.derive().scale(sign * (i + 1))})

    kind = "laurent" if laurent else "polynomial"
    D.T0 = BracketTable(gens, rule=rule0, name=f"disp0[{M},{kind}]")
    D.T1 = BracketTable(gens, rule=rule1, name=f"disp1[{M},{kind}]")
    return D


def matrix_linear_disp(N: int) -> tuple[list[list[ZSeries]], BracketTable, BracketTable]:
    """L(z) = 𝟙z + (u_ij) with {u_ij λ u_hk}_0 = δ_hj δ_ik λ and zero second bracket."""
    gens = [Generator(f"u_{i + 1}{j + 1}") for i in range(N) for j in range(N)]
    E = []
    for i in range(N):
        row = []
        for j in range(N):
            c = {0: DiffPoly.var(gens[i * N + j])}
            if i == j:
                c[1] = ONE
            row.append(ZSeries(c))
        E.append(row)
    entries = {}
    for i, j, h, k in product(range(N), repeat=4):
        if h == j and i == k:
            entries[(gens[i * N + j], gens[h * N + k])] = _LAM
    return E, BracketTable(gens, entries, name="disp0-matrix"), BracketTable(gens, {}, name="zero")


# -- hierarchy -----------------------------------------------------------------

@dataclass
class DispSetup:
    A: ZSeries
    K: int
    B: ZSeries
    T0: BracketTable
    T1: BracketTable | None
    floor: int
    generators: list[Generator]
    _powers: dict = field(default_factory=dict, repr=False)

    def root_power(self, n: int) -> ZSeries:
        hit = self._powers.get(n)
        if hit is None:
            if n >= 0:
                hit = self.B.power(n)
            else:
                m = self.B.order or 0
                hit = invert_z(self.B, self.floor - 2 * m).power(-n)
            self._powers[n] = hit
        return hit


def disp_setup(D: DispGeneric, floor: int | None = None) -> DispSetup:
    """A = L(z) of the generic table pair, K = M, B its M-th root."""
    fl = -D.depth if floor is None else floor
    B = D.symbol if D.M == 1 else kth_root_z(D.symbol, D.M, fl - (D.M - 1))
    return DispSetup(D.symbol, D.M, B, D.T0, D.T1, fl, list(D.generators))


def disp_density(setup: DispSetup, n: int) -> DiffPoly:
    """h_n = (-K/|n|) Res_z B(z)^n, and h_0 = 0."""
    if n == 0:
        return ZERO
    return setup.root_power(n).residue().scale(Fraction(-setup.K, abs(n)))


def disp_flow(setup: DispSetup, n: int) -> ZSeries:
    """{(B^n)_+, A}_qc."""
    if n == 0:
        return ZSeries()
    return qc_bracket(setup.root_power(n).positive_part(), setup.A)


def disp_generator_flows(setup: DispSetup, n: int, table: BracketTable | None = None,
                         generators: Sequence[Generator] | None = None) -> dict:
    T = setup.T0 if table is None else table
    h = disp_density(setup, n)
    gens = setup.generators if generators is None else generators
    return {g: action(T, h, DiffPoly.var(g)) for g in gens}


def check_disp_involution(setup: DispSetup, m: int, n: int) -> bool:
    hm, hn = disp_density(setup, m), disp_density(setup, n)
    for T in (setup.T0, setup.T1):
        if T is not None and not is_total_derivative(action(T, hm, hn)):
            return False
    return True


def check_disp_lenard_magri(setup: DispSetup, n: int, probe: int | DiffPoly) -> Report:
    """{∫h_n, u}₀ = {∫h_{n+K}, u}₁ = {(B^n)_+, A}_qc, probe = z-power of a coefficient of A or a DiffPoly."""
    if setup.T1 is None:
        raise ValueError("the setup has no second bracket")
    rep = Report("disp-lenard-magri")
    lax = None
    if isinstance(probe, int):
        u = setup.A.coeff(probe)
        lax = disp_flow(setup, n).coeff(probe) if n else ZERO
        where = {"n": n, "degree": probe}
    else:
        u = as_poly(probe)
        where = {"n": n, "probe": str(u)}
    lhs = action(setup.T0, disp_density(setup, n), u)
    rhs = action(setup.T1, disp_density(setup, n + setup.K), u)
    rep.checked += 1
    if lhs != rhs:
        rep.add({**where, "pair": "h_n under 0 vs h_(n+K) under 1"}, lhs, rhs)
    if lax is not None:
        rep.checked += 1
        if lhs != lax:
            rep.add({**where, "pair": "h_n under 0 vs Lax"}, lax, lhs)
    return rep


def dkp_setup(depth: int = 10) -> DispSetup:
    """L(z) = z + sum_{i<=0} u_i z^i with the Laurent generic pair for M = 1."""
    return disp_setup(disp_brackets_generic(1, True, depth))


def benney_rhs(setup: DispSetup, k: int) -> DiffPoly:
    """du_k/dt_2 with u_0 = 0, read off the Lax form."""
    u0 = setup.generators[0]
    return disp_flow(setup, 2).coeff(k).subs({u0: ZERO})


# -- formatting -----------------------------------------------------------------

def format_zseries(A: ZSeries) -> str:
    parts = [f"({A.coeffs[d]}) * z^{d}" for d in sorted(A.coeffs, reverse=True)]
    if A.floor is not None:
        parts.append(f"O(z^{A.floor - 1})")
    return " + ".join(parts) if parts else "0"


def latex_zseries(A: ZSeries) -> str:
    parts = []
    for d in sorted(A.coeffs, reverse=True):
        c = A.coeffs[d].latex()
        zp = "" if d == 0 else ("z" if d == 1 else f"z^{{{d}}}")
        if not zp:
            parts.append(f"\\left({c}\\right)")
        elif c == "1":
            parts.append(zp)
        else:
            parts.append(f"\\left({c}\\right){zp}")
    if A.floor is not None:
        parts.append(f"O(z^{{{A.floor - 1}}})")
    return " + ".join(parts) if parts else "0"
