"""Exact differential polynomial algebras.

A :class:`DiffPoly` is a finite sum of monomials in the jet variables
``u^{(n)}`` of a set of generators, with exact rational coefficients.
Generators can be declared invertible (negative exponents allowed on the
order-0 variable) or fractional (rational exponents allowed on the order-0
variable).  Constant generators behave as symbolic parameters: their
derivative is zero and lambda-brackets never see them.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

Exp = Union[int, Fraction]
Scalar = Union[int, Fraction]


class AlgebraError(ValueError):
    """An operation left the declared algebra (bad exponent, non-unit inverse, ...)."""


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class Generator(NamedTuple):
    name: str
    invertible: bool = False
    fractional: bool = False
    constant: bool = False


Var = tuple  # (Generator, order)
Monomial = tuple  # sorted tuple of (Var, Exp)


def _norm_exp(e) -> Exp:
    if isinstance(e, Fraction) and e.denominator == 1:
        return int(e.numerator)
    return e


def _check_factor(var: Var, e: Exp) -> None:
    gen, order = var
    if e == 0:
        raise AlgebraError("zero exponent stored")
    if gen.constant and order > 0:
        raise AlgebraError(f"constant generator {gen.name} has no derivatives")
    integral = isinstance(e, int)
    if integral and e > 0:
        return
    if order > 0:
        raise AlgebraError(f"exponent {e} on derived variable {gen.name}^({order})")
    if not integral and not gen.fractional:
        raise AlgebraError(f"rational exponent {e} on non-fractional generator {gen.name}")
    if e < 0 and not gen.invertible:
        raise AlgebraError(f"negative exponent {e} on non-invertible generator {gen.name}")


@lru_cache(maxsize=1 << 18)
def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    out = []
    i = j = 0
    n1, n2 = len(m1), len(m2)
    while i < n1 and j < n2:
        v1, e1 = m1[i]
        v2, e2 = m2[j]
        if v1 == v2:
            e = _norm_exp(e1 + e2)
            if e != 0:
                out.append((v1, e))
            i += 1
            j += 1
        elif v1 < v2:
            out.append(m1[i])
            i += 1
        else:
            out.append(m2[j])
            j += 1
    out.extend(m1[i:])
    out.extend(m2[j:])
    return tuple(out)


def _mono_from_dict(d: Mapping) -> Monomial:
    return tuple(sorted((v, _norm_exp(e)) for v, e in d.items() if e != 0))


@lru_cache(maxsize=1 << 17)
def _mono_derive(m: Monomial) -> tuple:
    """Leibniz rule on one monomial: tuple of (monomial, integer-or-rational factor)."""
    out: dict = {}
    for idx, (var, e) in enumerate(m):
        gen, order = var
        if gen.constant:
            continue
        d = dict(m)
        if e == 1:
            del d[var]
        else:
            d[var] = _norm_exp(e - 1)
        nxt = (gen, order + 1)
        d[nxt] = d.get(nxt, 0) + 1
        mono = _mono_from_dict(d)
        out[mono] = out.get(mono, 0) + e
    return tuple((k, c) for k, c in out.items() if c != 0)


@lru_cache(maxsize=1 << 17)
def _mono_partials(m: Monomial) -> tuple:
    """All first partials of a monomial: tuple of (var, monomial, factor)."""
    out = []
    for var, e in m:
        if var[0].constant:
            continue
        d = dict(m)
        if e == 1:
            del d[var]
        else:
            d[var] = _norm_exp(e - 1)
        out.append((var, _mono_from_dict(d), e))
    return tuple(out)


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    raise TypeError(f"not an exact scalar: {c!r}")


class DiffPoly:
    """Immutable element of a (localized) differential polynomial algebra."""

    __slots__ = ("_t", "_hash", "_derivs", "_partials")

    def __init__(self, terms: Mapping | None = None):
        clean: dict = {}
        if terms:
            for mono, c in terms.items():
                c = _as_fraction(c)
                if c == 0:
                    continue
                if isinstance(mono, dict):
                    mono = _mono_from_dict(mono)
                else:
                    mono = _mono_from_dict(dict(mono))
                for var, e in mono:
                    _check_factor(var, e)
                clean[mono] = clean.get(mono, 0) + c
            clean = {m: c for m, c in clean.items() if c != 0}
        self._t = clean
        self._hash = None
        self._derivs = None
        self._partials = None

    @classmethod
    def _raw(cls, terms: dict) -> "DiffPoly":
        obj = cls.__new__(cls)
        obj._t = terms
        obj._hash = None
        obj._derivs = None
        obj._partials = None
        return obj

    @classmethod
    def const(cls, c: Scalar) -> "DiffPoly":
        c = _as_fraction(c)
        return cls._raw({(): c} if c else {})

    @classmethod
    def var(cls, gen: Generator, order: int = 0, exponent: Exp = 1) -> "DiffPoly":
        exponent = _norm_exp(Fraction(exponent)) if not isinstance(exponent, int) else exponent
        _check_factor((gen, order), exponent)
        return cls._raw({(((gen, order), exponent),): Fraction(1)})

    # -- inspection -------------------------------------------------------
    @property
    def terms(self) -> dict:
        return self._t

    def items(self) -> list:
        return sorted(self._t.items())

    def __bool__(self) -> bool:
        return bool(self._t)

    def is_zero(self) -> bool:
        return not self._t

    def is_constant(self) -> bool:
        return not self._t or (len(self._t) == 1 and () in self._t)

    def constant_term(self) -> Fraction:
        return self._t.get((), Fraction(0))

    def as_constant(self) -> Fraction:
        if not self.is_constant():
            raise AlgebraError(f"not a constant: {self}")
        return self.constant_term()

    def is_monomial(self) -> bool:
        return len(self._t) == 1

    def variables(self) -> set:
        return {v for m in self._t for v, _ in m}

    def generators(self) -> set:
        return {v[0] for v in self.variables()}

    def order_in(self, gen: Generator) -> int:
        """Highest derivative order of ``gen`` present, or -1 if absent."""
        return max((v[1] for m in self._t for v, _ in m if v[0] == gen), default=-1)

    def is_localized(self) -> bool:
        return any(not (isinstance(e, int) and e > 0) for m in self._t for _, e in m)

    def coefficient(self, mono: Monomial) -> Fraction:
        return self._t.get(mono, Fraction(0))

    # -- equality ---------------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, DiffPoly):
            return self._t == other._t
        if isinstance(other, (int, Fraction)):
            return self._t == ({(): Fraction(other)} if other else {})
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._t.items()))
        return self._hash

    # -- ring operations --------------------------------------------------
    def __add__(self, other) -> "DiffPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not other._t:
            return self
        if not self._t:
            return other
        out = dict(self._t)
        for m, c in other._t.items():
            s = out.get(m)
            if s is None:
                out[m] = c
            else:
                s += c
                if s:
                    out[m] = s
                else:
                    del out[m]
        return DiffPoly._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly._raw({m: -c for m, c in self._t.items()})

    def __sub__(self, other) -> "DiffPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "DiffPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def scale(self, c: Scalar) -> "DiffPoly":
        c = _as_fraction(c)
        if c == 0:
            return ZERO
        if c == 1:
            return self
        return DiffPoly._raw({m: v * c for m, v in self._t.items()})

    def __mul__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, DiffPoly):
            return NotImplemented
        a, b = self._t, other._t
        if not a or not b:
            return ZERO
        if len(a) < len(b):
            a, b = b, a
        out: dict = {}
        get = out.get
        for m2, c2 in b.items():
            for m1, c1 in a.items():
                m = _mono_mul(m1, m2)
                out[m] = get(m, 0) + c1 * c2
        return DiffPoly._raw({m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            if other == 0:
                raise ZeroDivisionError("division by zero")
            return self.scale(Fraction(1) / Fraction(other))
        if isinstance(other, DiffPoly):
            return self * other.inverse()
        return NotImplemented

    def __rtruediv__(self, other) -> "DiffPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return other * self.inverse()

    def __pow__(self, e) -> "DiffPoly":
        if isinstance(e, int) and e >= 0:
            result = ONE
            base = self
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        return self._monomial_power(Fraction(e))

    def _monomial_power(self, e: Fraction) -> "DiffPoly":
        if len(self._t) != 1:
            raise AlgebraError(f"power {e} of a non-monomial: {self}")
        (mono, c), = self._t.items()
        c_pow = _rational_power(c, e)
        if c_pow is None:
            raise AlgebraError(f"coefficient {c} has no rational power {e}")
        factors = {}
        for var, x in mono:
            nx = _norm_exp(x * e)
            _check_factor(var, nx)
            factors[var] = nx
        return DiffPoly._raw({_mono_from_dict(factors): c_pow})

    def inverse(self) -> "DiffPoly":
        """Multiplicative inverse; only nonzero monomials in unit factors have one."""
        if not self._t:
            raise ZeroDivisionError("inverse of zero")
        return self._monomial_power(Fraction(-1))

    def is_unit(self) -> bool:
        try:
            self.inverse()
        except AlgebraError:
            return False
        return True

    def root(self, k: int) -> "DiffPoly":
        """Principal k-th root of a monomial."""
        return self._monomial_power(Fraction(1, k))

    # -- calculus ---------------------------------------------------------
    def derive(self, k: int = 1) -> "DiffPoly":
        if k == 0:
            return self
        if self._derivs is None:
            self._derivs = [self]
        derivs = self._derivs
        while len(derivs) <= k:
            derivs.append(_derive_once(derivs[-1]))
        return derivs[k]

    def partials(self) -> dict:
        """Map jet variable -> first partial derivative (constant generators skipped)."""
        if self._partials is None:
            acc: dict = {}
            for m, c in self._t.items():
                for var, mono, e in _mono_partials(m):
                    d = acc.setdefault(var, {})
                    d[mono] = d.get(mono, 0) + c * e
            self._partials = {
                v: DiffPoly._raw({m: c for m, c in d.items() if c}) for v, d in acc.items()
            }
        return self._partials

    def partial(self, gen: Generator, order: int = 0) -> "DiffPoly":
        return self.partials().get((gen, order), ZERO)

    def subs(self, mapping: Mapping[Generator, "DiffPoly"]) -> "DiffPoly":
        """Substitute generators by differential polynomials (jets follow by ∂)."""
        cache: dict = {}
        out = ZERO
        for m, c in self._t.items():
            term = DiffPoly.const(c)
            for (gen, order), e in m:
                if gen in mapping:
                    key = (gen, order)
                    if key not in cache:
                        cache[key] = _coerce(mapping[gen]).derive(order)
                    base = cache[key]
                    term = term * (base ** e if isinstance(e, int) and e >= 0 else base._monomial_power(Fraction(e)))
                else:
                    term = term * DiffPoly._raw({(((gen, order), e),): Fraction(1)})
                if not term:
                    break
            out = out + term
        return out

    # -- text -------------------------------------------------------------
    def __str__(self) -> str:
        if not self._t:
            return "0"
        parts = []
        for i, (m, c) in enumerate(sorted(self._t.items())):
            neg = c < 0
            a = -c if neg else c
            if not m:
                body = _fmt_rational(a)
            elif a == 1:
                body = " * ".join(_fmt_factor(v, e) for v, e in m)
            else:
                body = _fmt_rational(a) + " * " + " * ".join(_fmt_factor(v, e) for v, e in m)
            if i == 0:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append((" - " if neg else " + ") + body)
        return "".join(parts)

    def __repr__(self) -> str:
        return f"DiffPoly({str(self)!r})"

    def latex(self) -> str:
        if not self._t:
            return "0"
        out = []
        for i, (m, c) in enumerate(sorted(self._t.items())):
            neg = c < 0
            body = _latex_term(-c if neg else c, m)
            if i == 0:
                out.append(("-" if neg else "") + body)
            else:
                out.append((" - " if neg else " + ") + body)
        return "".join(out)


def _derive_once(p: DiffPoly) -> DiffPoly:
    out: dict = {}
    get = out.get
    for m, c in p._t.items():
        for mono, e in _mono_derive(m):
            out[mono] = get(mono, 0) + c * e
    return DiffPoly._raw({m: c for m, c in out.items() if c})


def _rational_power(c: Fraction, e: Fraction) -> Fraction | None:
    if e.denominator == 1:
        return c ** int(e)
    k = e.denominator
    num, den = c.numerator, c.denominator
    sign = 1
    if num < 0:
        if k % 2 == 0:
            return None
        sign, num = -1, -num
    rn, rd = _iroot(num, k), _iroot(den, k)
    if rn is None or rd is None:
        return None
    return (Fraction(sign * rn, rd)) ** e.numerator


def _iroot(n: int, k: int) -> int | None:
    if n < 2:
        return n
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    lo, hi = 0, n
    while lo <= hi:
        mid = (lo + hi) // 2
        p = mid**k
        if p == n:
            return mid
        if p < n:
            lo = mid + 1
        else:
            hi = mid - 1
    return None


def _coerce(x) -> DiffPoly | None:
    if isinstance(x, DiffPoly):
        return x
    if isinstance(x, (int, Fraction)):
        return DiffPoly.const(x)
    return None


def as_poly(x) -> DiffPoly:
    p = _coerce(x)
    if p is None:
        raise TypeError(f"cannot interpret {x!r} as a differential polynomial")
    return p


ZERO = DiffPoly._raw({})
ONE = DiffPoly._raw({(): Fraction(1)})


# -- formatting helpers --------------------------------------------------

def _fmt_rational(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _fmt_var(var: Var) -> str:
    gen, n = var
    if n <= 3:
        return gen.name + "'" * n
    return f"{gen.name}[{n}]"


def _fmt_factor(var: Var, e: Exp) -> str:
    s = _fmt_var(var)
    if e == 1:
        return s
    if isinstance(e, int) and e > 0:
        return f"{s}^{e}"
    return f"{s}^({_fmt_rational(Fraction(e))})"


_NAME_DIGITS = re.compile(r"^([A-Za-z]+)(\d+)$")
_NAME_SUB = re.compile(r"^([A-Za-z]+)_(.+)$")


def latex_name(name: str) -> str:
    m = _NAME_DIGITS.match(name)
    if m:
        return f"{m.group(1)}_{{{m.group(2)}}}"
    m = _NAME_SUB.match(name)
    if m:
        parts = m.group(2).split("_")
        parts = ["-" + p[1:] if re.fullmatch(r"m\d+", p) else p for p in parts]
        return f"{m.group(1)}_{{{';'.join(parts)}}}"
    return name


def _latex_var(var: Var) -> str:
    gen, n = var
    base = latex_name(gen.name)
    if n == 0:
        return base
    if n <= 3:
        return base + "'" * n
    return f"{base}^{{({n})}}"


def _latex_power(var: Var, e: Exp) -> str:
    s = _latex_var(var)
    if e == 1:
        return s
    if var[1] > 0:
        s = f"({s})"
    return f"{s}^{{{_fmt_rational(Fraction(e))}}}"


def _latex_term(c: Fraction, mono: Monomial) -> str:
    pos = [(v, e) for v, e in mono if e > 0]
    neg = [(v, -e) for v, e in mono if e < 0]
    num = str(c.numerator)
    den_parts = [] if c.denominator == 1 else [str(c.denominator)]
    den_parts += [_latex_power(v, e) for v, e in neg]
    pos_s = " ".join(_latex_power(v, e) for v, e in pos)
    if den_parts:
        frac = f"\\frac{{{num}}}{{{' '.join(den_parts)}}}"
        return frac + (" " + pos_s if pos_s else "")
    if not pos_s:
        return num
    return pos_s if c == 1 else f"{num} {pos_s}"


# -- calculus on DiffPoly -------------------------------------------------

def derive(p: DiffPoly, k: int = 1) -> DiffPoly:
    return as_poly(p).derive(k)


def partial(p: DiffPoly, gen: Generator, order: int = 0) -> DiffPoly:
    p = as_poly(p)
    if order > 0 and gen.fractional:
        for m in p.terms:
            for (g, n), e in m:
                if g == gen and n == order and not isinstance(e, int):
                    raise AlgebraError("partial in a rational-exponent derived variable")
    return p.partial(gen, order)


def variational_derivative(p: DiffPoly, gen: Generator) -> DiffPoly:
    """Euler operator: sum over n of (-∂)^n ∂p/∂gen^{(n)}."""
    p = as_poly(p)
    out = ZERO
    for (g, n), dp in p.partials().items():
        if g != gen:
            continue
        term = dp.derive(n)
        out = out + (term if n % 2 == 0 else -term)
    return out


def integrate(p: DiffPoly) -> DiffPoly | None:
    """Return F with ∂F = p, or None when p is not a total derivative.

    Works by peeling off the top jet variable: if p = ∂F then p is linear in
    the highest derivative g^{(n)} of any generator g, and its coefficient is
    ∂F/∂g^{(n-1)}.  Integrating that coefficient in g^{(n-1)} and subtracting
    the derivative lowers the order of g, so the loop terminates.  The
    procedure decides membership in ∂V for the localized algebras supported
    here as well (a leftover 1/g in the order-0 variable means a logarithm,
    which the algebra does not contain).
    """
    p = as_poly(p)
    antiderivative = ZERO
    while p:
        orders: dict = {}
        for m in p.terms:
            for (g, n), _ in m:
                if not g.constant and n > orders.get(g, -1):
                    orders[g] = n
        tops = [(n, g) for g, n in orders.items() if n >= 1]
        if not tops:
            return None
        n, g = max(tops, key=lambda t: (t[0], t[1].name))
        top = (g, n)
        lin: dict = {}
        for m, c in p.terms.items():
            d = dict(m)
            e = d.get(top, 0)
            if e == 0:
                continue
            if e != 1:
                return None
            del d[top]
            mono = _mono_from_dict(d)
            lin[mono] = lin.get(mono, 0) + c
        a = DiffPoly._raw(lin)
        for h in a.generators():
            if h.constant:
                continue
            bound = orders.get(h, -1) - 1
            if a.order_in(h) > bound:
                return None
        below = (g, n - 1)
        g_terms: dict = {}
        for m, c in a.terms.items():
            d = dict(m)
            e = d.get(below, 0) + 1
            if e == 0:
                return None
            d[below] = e
            mono = _mono_from_dict(d)
            g_terms[mono] = g_terms.get(mono, 0) + c / e
        step = DiffPoly._raw({m: c for m, c in g_terms.items() if c})
        antiderivative = antiderivative + step
        p = p - step.derive()
    return antiderivative


def is_total_derivative(p: DiffPoly) -> bool:
    return integrate(p) is not None


def euler_test(p: DiffPoly) -> bool:
    """Variational criterion: every δp/δu vanishes and p has no constant term.

    Exact on polynomial algebras; on localized ones it is necessary but not
    sufficient (∂q/q passes it without being a total derivative).
    """
    p = as_poly(p)
    if p.constant_term() != 0:
        return False
    gens = {g for g in p.generators() if not g.constant}
    return all(variational_derivative(p, g).is_zero() for g in gens)


# -- algebra context and parsing -----------------------------------------

class DiffAlgebra:
    """Registry of generators with unique names; parses text into DiffPoly."""

    def __init__(self, generators: Iterable[Generator] = ()):
        self._gens: dict[str, Generator] = {}
        for g in generators:
            self.add(g)

    def add(self, gen: Generator) -> Generator:
        if gen.fractional and not gen.invertible:
            raise AlgebraError(f"fractional generator {gen.name} must be invertible")
        if gen.constant and gen.fractional:
            raise AlgebraError(f"constant generator {gen.name} cannot be fractional")
        if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", gen.name):
            raise AlgebraError(f"bad generator name {gen.name!r}")
        old = self._gens.get(gen.name)
        if old is not None and old != gen:
            raise AlgebraError(f"generator {gen.name} already declared with other flags")
        self._gens[gen.name] = gen
        return gen

    def declare(self, name: str, invertible: bool = False, fractional: bool = False,
                constant: bool = False) -> Generator:
        return self.add(Generator(name, invertible or fractional, fractional, constant))

    def __getitem__(self, name: str) -> Generator:
        return self._gens[name]

    def __contains__(self, name: str) -> bool:
        return name in self._gens

    def __iter__(self) -> Iterator[Generator]:
        return iter(self._gens.values())

    @property
    def generators(self) -> list[Generator]:
        return list(self._gens.values())

    def merged(self, other: "DiffAlgebra") -> "DiffAlgebra":
        out = DiffAlgebra(self)
        for g in other:
            out.add(g)
        return out

    def gen(self, name: str, order: int = 0) -> DiffPoly:
        return DiffPoly.var(self._gens[name], order)

    def parse(self, text: str, line: int = 1, column: int = 1) -> DiffPoly:
        return _Parser(text, self, line, column).parse()


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<primes>'+)|(?P<op>[-+*/^()\[\]]))"
)


class _Parser:
    def __init__(self, text: str, algebra: DiffAlgebra, line: int, column: int):
        self.text = text
        self.alg = algebra
        self.line = line
        self.col0 = column
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise self.error("unexpected character", pos + (len(text[pos:]) - len(text[pos:].lstrip())))
            kind = m.lastgroup
            start = m.start(kind)
            self.toks.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def error(self, msg: str, pos: int | None = None) -> ParseError:
        if pos is None:
            pos = self.toks[self.i][2] if self.i < len(self.toks) else len(self.text)
        return ParseError(msg, self.line, self.col0 + pos)

    def peek(self) -> tuple[str, str, int] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, value: str | None = None, kind: str | None = None) -> tuple[str, str, int]:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of input")
        if (value is not None and t[1] != value) or (kind is not None and t[0] != kind):
            raise self.error(f"expected {value or kind}, found {t[1]!r}")
        self.i += 1
        return t

    def at(self, value: str) -> bool:
        t = self.peek()
        return t is not None and t[0] == "op" and t[1] == value

    def parse(self) -> DiffPoly:
        if not self.toks:
            raise self.error("empty expression", 0)
        p = self.expr()
        if self.peek() is not None:
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self) -> DiffPoly:
        sign = 1
        if self.at("-") or self.at("+"):
            sign = -1 if self.take()[1] == "-" else 1
        acc = self.term().scale(sign)
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self) -> DiffPoly:
        acc = self.power()
        while self.at("*") or self.at("/"):
            op = self.take()[1]
            pos = self.peek()[2] if self.peek() else len(self.text)
            rhs = self.power()
            if op == "*":
                acc = acc * rhs
            else:
                try:
                    acc = acc * rhs.inverse()
                except (AlgebraError, ZeroDivisionError) as exc:
                    raise self.error(f"cannot divide: {exc}", pos) from None
        return acc

    def power(self) -> DiffPoly:
        base = self.atom()
        if self.at("^"):
            self.take()
            pos = self.peek()[2] if self.peek() else len(self.text)
            e = self.exponent()
            try:
                return base ** e
            except AlgebraError as exc:
                raise self.error(str(exc), pos) from None
        return base

    def exponent(self) -> Exp:
        if self.at("("):
            self.take()
            sign = 1
            if self.at("-") or self.at("+"):
                sign = -1 if self.take()[1] == "-" else 1
            num = int(self.take(kind="num")[1])
            den = 1
            if self.at("/"):
                self.take()
                den = int(self.take(kind="num")[1])
                if den == 0:
                    raise self.error("zero denominator")
            self.take(")")
            return _norm_exp(Fraction(sign * num, den))
        sign = 1
        if self.at("-"):
            self.take()
            sign = -1
        return sign * int(self.take(kind="num")[1])

    def atom(self) -> DiffPoly:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of input")
        kind, val, pos = t
        if kind == "num":
            self.i += 1
            return DiffPoly.const(int(val))
        if kind == "name":
            self.i += 1
            if val not in self.alg:
                raise self.error(f"undeclared generator {val!r}", pos)
            gen = self.alg[val]
            order = 0
            nt = self.peek()
            if nt is not None and nt[0] == "primes" and nt[2] == pos + len(val):
                self.i += 1
                order = len(nt[1])
            elif nt is not None and nt[1] == "[" and nt[2] == pos + len(val):
                self.i += 1
                order = int(self.take(kind="num")[1])
                self.take("]")
            try:
                return DiffPoly.var(gen, order)
            except AlgebraError as exc:
                raise self.error(str(exc), pos) from None
        if val == "(":
            self.i += 1
            p = self.expr()
            self.take(")")
            return p
        raise self.error(f"unexpected token {val!r}", pos)
