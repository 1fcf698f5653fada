"""λ-brackets: tables on generators, the master formula, PVA axiom checks."""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

from .diffalg import ZERO, DiffAlgebra, DiffPoly, Generator, as_poly, is_total_derivative
from .psido import binom
from .report import Report


class UndeclaredGeneratorError(KeyError):
    pass


class LambdaPoly:
    """Polynomial in λ with DiffPoly coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping[int, object] | None = None):
        out = {}
        for k, v in (coeffs or {}).items():
            v = as_poly(v)
            if v:
                if k < 0:
                    raise ValueError("negative λ power")
                out[int(k)] = v
        self.coeffs: dict[int, DiffPoly] = out

    @classmethod
    def _raw(cls, coeffs: dict) -> "LambdaPoly":
        obj = cls.__new__(cls)
        obj.coeffs = {k: v for k, v in coeffs.items() if v}
        return obj

    @classmethod
    def const(cls, p) -> "LambdaPoly":
        return cls._raw({0: as_poly(p)})

    @classmethod
    def lam(cls, k: int = 1) -> "LambdaPoly":
        return cls._raw({k: DiffPoly.const(1)})

    @property
    def degree(self) -> int:
        return max(self.coeffs) if self.coeffs else -1

    def coeff(self, k: int) -> DiffPoly:
        return self.coeffs.get(k, ZERO)

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def at_zero(self) -> DiffPoly:
        return self.coeffs.get(0, ZERO)

    def __add__(self, other: "LambdaPoly") -> "LambdaPoly":
        if not isinstance(other, LambdaPoly):
            return NotImplemented
        if not other.coeffs:
            return self
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return LambdaPoly._raw(out)

    def __neg__(self) -> "LambdaPoly":
        return LambdaPoly._raw({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other: "LambdaPoly") -> "LambdaPoly":
        return self + (-other)

    def scale(self, c) -> "LambdaPoly":
        c = as_poly(c)
        return LambdaPoly._raw({k: c * v for k, v in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, DiffPoly)):
            return self.scale(other)
        if isinstance(other, LambdaPoly):
            out: dict = {}
            for a, x in self.coeffs.items():
                for b, y in other.coeffs.items():
                    out[a + b] = out[a + b] + x * y if a + b in out else x * y
            return LambdaPoly._raw(out)
        return NotImplemented

    __rmul__ = __mul__

    def shift_apply(self, n: int) -> "LambdaPoly":
        """(λ+∂)^n applied to self, ∂ acting on the coefficients."""
        if n == 0:
            return self
        out: dict = {}
        for k, x in self.coeffs.items():
            for t in range(n + 1):
                xt = x.derive(t)
                if not xt:
                    break
                term = xt.scale(binom(n, t))
                d = n - t + k
                out[d] = out[d] + term if d in out else term
        return LambdaPoly._raw(out)

    def reflect(self) -> "LambdaPoly":
        """|_{x=∂} P(-λ-x): replace λ with -λ-∂, ∂ acting on the coefficients."""
        out = LambdaPoly._raw({})
        for k, x in self.coeffs.items():
            out = out + neg_shift(x, k)
        return out

    def derive_coeffs(self) -> "LambdaPoly":
        return LambdaPoly._raw({k: v.derive() for k, v in self.coeffs.items()})

    def map_coeffs(self, f: Callable[[DiffPoly], DiffPoly]) -> "LambdaPoly":
        return LambdaPoly._raw({k: f(v) for k, v in self.coeffs.items()})

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, DiffPoly)):
            other = LambdaPoly.const(other)
        if not isinstance(other, LambdaPoly):
            return NotImplemented
        return self.coeffs == other.coeffs

    __hash__ = None  # type: ignore[assignment]

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs, reverse=True):
            c = self.coeffs[k]
            if k == 0:
                parts.append(f"({c})")
            else:
                lam = "lambda" if k == 1 else f"lambda^{k}"
                parts.append(lam if c == 1 else f"({c}) * {lam}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"LambdaPoly({str(self)!r})"

    def latex(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for k in sorted(self.coeffs, reverse=True):
            c = self.coeffs[k]
            lam = "" if k == 0 else ("\\lambda" if k == 1 else f"\\lambda^{{{k}}}")
            if not lam:
                body = c.latex()
            elif c == 1:
                body = lam
            elif c == -1:
                body = f"-{lam}"
            else:
                body = f"\\left({c.latex()}\\right) {lam}"
            if parts and body.startswith("-"):
                parts.append(f"- {body[1:]}")
            else:
                parts.append(f"+ {body}" if parts else body)
        return " ".join(parts)


def neg_shift(x: DiffPoly, m: int) -> LambdaPoly:
    """(-λ-∂)^m x as a LambdaPoly."""
    out: dict = {}
    sign = -1 if m % 2 else 1
    for t in range(m + 1):
        xt = x.derive(t)
        if not xt:
            break
        out[m - t] = xt.scale(sign * binom(m, t))
    return LambdaPoly._raw(out)


def parse_lambda_poly(text: str, algebra: DiffAlgebra, line: int = 1, column: int = 1) -> LambdaPoly:
    """Parse a polynomial in ``lambda`` (or ``λ``) with DiffPoly coefficients."""
    lam_gen = Generator("lambda", constant=True)
    alg = DiffAlgebra(algebra)
    if "lambda" not in alg:
        alg.add(lam_gen)
    else:
        lam_gen = alg["lambda"]
    p = alg.parse(text.replace("λ", "lambda"), line, column)
    out: dict = {}
    for mono, c in p.terms.items():
        k = 0
        rest = []
        for var, e in mono:
            if var[0] == lam_gen:
                if not isinstance(e, int) or e < 0:
                    from .diffalg import ParseError
                    raise ParseError("lambda must appear with a non-negative integer power", line, column)
                k = e
            else:
                rest.append((var, e))
        term = DiffPoly._raw({tuple(rest): c})
        out[k] = out[k] + term if k in out else term
    return LambdaPoly._raw(out)


class BracketTable:
    """λ-brackets {u_i λ u_j} on ordered pairs of declared generators.

    Entries may be given explicitly or produced on demand by ``rule`` (used for
    tables on infinitely many generators, truncated at a declared depth).
    Absent entries are zero.
    """

    def __init__(self, generators: Iterable[Generator], entries: Mapping | None = None,
                 rule: Callable[[Generator, Generator], LambdaPoly] | None = None,
                 name: str = ""):
        self.generators: tuple[Generator, ...] = tuple(generators)
        self._declared = set(self.generators)
        self._entries: dict = {}
        self._rule = rule
        self.name = name
        for (a, b), v in (entries or {}).items():
            if a not in self._declared or b not in self._declared:
                raise UndeclaredGeneratorError(f"entry ({a.name}, {b.name}) uses an undeclared generator")
            v = v if isinstance(v, LambdaPoly) else LambdaPoly.const(v)
            if v:
                self._entries[(a, b)] = v
        self._explicit = set(self._entries)

    def declares(self, g: Generator) -> bool:
        return g in self._declared

    def entry(self, a: Generator, b: Generator) -> LambdaPoly:
        key = (a, b)
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        if a not in self._declared or b not in self._declared:
            bad = a if a not in self._declared else b
            raise UndeclaredGeneratorError(f"generator {bad.name} is not declared in the table")
        if self._rule is None:
            return _ZERO_LP
        v = self._rule(a, b)
        self._entries[key] = v
        return v

    def explicit_entries(self) -> dict:
        return {k: self._entries[k] for k in self._explicit}

    def negated(self) -> "BracketTable":
        return self.scaled(-1)

    def scaled(self, c) -> "BracketTable":
        base = self
        return BracketTable(self.generators, rule=lambda a, b: base.entry(a, b).scale(c),
                            name=f"{c}*{self.name}")

    def __add__(self, other: "BracketTable") -> "BracketTable":
        gens = list(self.generators) + [g for g in other.generators if g not in self._declared]
        left, right = self, other

        def rule(a, b):
            x = left.entry(a, b) if left.declares(a) and left.declares(b) else _ZERO_LP
            y = right.entry(a, b) if right.declares(a) and right.declares(b) else _ZERO_LP
            return x + y

        return BracketTable(gens, rule=rule, name=f"{self.name}+{other.name}")


_ZERO_LP = LambdaPoly._raw({})


def _check_declared(T: BracketTable, p: DiffPoly) -> None:
    for g in p.generators():
        if not g.constant and not T.declares(g):
            raise UndeclaredGeneratorError(f"generator {g.name} is not declared in the table")


def bracket(T: BracketTable, f, g) -> LambdaPoly:
    """{f λ g} by the master formula."""
    f, g = as_poly(f), as_poly(g)
    _check_declared(T, f)
    _check_declared(T, g)
    pf = f.partials()
    pg = g.partials()
    if not pf or not pg:
        return _ZERO_LP
    X: dict = {}
    for (gi, m), d in pf.items():
        term = neg_shift(d, m)
        X[gi] = X[gi] + term if gi in X else term
    targets = {gj for (gj, _) in pg}
    W: dict = {}
    for gj in targets:
        acc = _ZERO_LP
        for gi, x in X.items():
            H = T.entry(gi, gj)
            for p, c in H.coeffs.items():
                acc = acc + x.shift_apply(p).scale(c)
        if acc:
            W[gj] = acc
    out = _ZERO_LP
    for (gj, n), d in pg.items():
        w = W.get(gj)
        if w is not None:
            out = out + w.shift_apply(n).scale(d)
    return out


# -- PVA axioms --------------------------------------------------------------

def check_skewsymmetry(T: BracketTable, generators: Sequence[Generator] | None = None) -> Report:
    gens = list(T.generators if generators is None else generators)
    rep = Report("skewsymmetry")
    for a, b in product(gens, repeat=2):
        got = T.entry(b, a)
        want = -T.entry(a, b).reflect()
        rep.checked += 1
        if got != want:
            rep.add({"pair": (b.name, a.name)}, want, got)
    return rep


class BiLambdaPoly:
    """Polynomial in two formal variables λ, μ."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict | None = None):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v}

    def add_term(self, p: int, q: int, v: DiffPoly) -> None:
        if not v:
            return
        key = (p, q)
        cur = self.coeffs.get(key)
        s = v if cur is None else cur + v
        if s:
            self.coeffs[key] = s
        else:
            self.coeffs.pop(key, None)

    def __sub__(self, other: "BiLambdaPoly") -> "BiLambdaPoly":
        out = BiLambdaPoly(dict(self.coeffs))
        for (p, q), v in other.coeffs.items():
            out.add_term(p, q, -v)
        return out

    def is_zero(self) -> bool:
        return not self.coeffs

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        return " + ".join(f"({v}) * lambda^{p} mu^{q}" for (p, q), v in sorted(self.coeffs.items()))


def jacobi_defect(T: BracketTable, a: Generator, b: Generator, c: Generator) -> BiLambdaPoly:
    """{a λ {b μ c}} - {b μ {a λ c}} - {{a λ b}_{λ+μ} c} as a polynomial in λ, μ."""
    ua, ub, uc = (DiffPoly.var(x) for x in (a, b, c))
    out = BiLambdaPoly()
    for q, cq in T.entry(b, c).coeffs.items():
        for p, v in bracket(T, ua, cq).coeffs.items():
            out.add_term(p, q, v)
    for p, dp in T.entry(a, c).coeffs.items():
        for q, v in bracket(T, ub, dp).coeffs.items():
            out.add_term(p, q, -v)
    for p, ep in T.entry(a, b).coeffs.items():
        for r, v in bracket(T, ep, uc).coeffs.items():
            for s in range(r + 1):
                out.add_term(p + s, r - s, -v.scale(binom(r, s)))
    return out


def check_jacobi(T: BracketTable, generators: Sequence[Generator] | None = None) -> Report:
    gens = list(T.generators if generators is None else generators)
    rep = Report("jacobi")
    for a, b, c in product(gens, repeat=3):
        rep.checked += 1
        defect = jacobi_defect(T, a, b, c)
        if not defect.is_zero():
            rep.add({"triple": (a.name, b.name, c.name)}, 0, defect)
    return rep


def check_pva(T: BracketTable, generators: Sequence[Generator] | None = None) -> Report:
    rep = Report("pva")
    rep.merge(check_skewsymmetry(T, generators))
    rep.merge(check_jacobi(T, generators))
    return rep


# -- local functionals ---------------------------------------------------------

class Functional:
    """Class of a density modulo total derivatives."""

    __slots__ = ("density",)

    def __init__(self, density):
        self.density = as_poly(density)

    def __eq__(self, other) -> bool:
        if isinstance(other, Functional):
            other = other.density
        other = as_poly(other)
        return is_total_derivative(self.density - other)

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other: "Functional") -> "Functional":
        return Functional(self.density + other.density)

    def __sub__(self, other: "Functional") -> "Functional":
        return Functional(self.density - other.density)

    def __neg__(self) -> "Functional":
        return Functional(-self.density)

    def is_zero(self) -> bool:
        return is_total_derivative(self.density)

    def __str__(self) -> str:
        return f"∫({self.density})"


def _density(F) -> DiffPoly:
    return F.density if isinstance(F, Functional) else as_poly(F)


def action(T: BracketTable, F, g) -> DiffPoly:
    """{∫f, g} = {f λ g} at λ = 0."""
    return bracket(T, _density(F), g).at_zero()


def functional_bracket(T: BracketTable, F, G) -> Functional:
    return Functional(bracket(T, _density(F), _density(G)).at_zero())


def evolve(p, characteristic: Mapping[Generator, DiffPoly]) -> DiffPoly:
    """Evolutionary derivation with du/dt = characteristic[u], applied to p."""
    p = as_poly(p)
    out = ZERO
    for (gen, n), d in p.partials().items():
        ch = characteristic.get(gen)
        if ch is not None:
            out = out + d * as_poly(ch).derive(n)
    return out
