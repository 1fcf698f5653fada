"""Truncated pseudodifferential operators over a differential algebra.

An operator is a Laurent series ``sum a_k ∂^k`` with coefficients on the
left.  ``floor`` is the lowest degree whose coefficient is known; ``None``
means the operator is exact (every coefficient below the listed ones is
zero).  Each operation derives the floor of its result from the floors and
orders of its inputs, so no identity is ever checked below the depth at
which both sides are valid.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence

from .diffalg import (
    ONE,
    ZERO,
    AlgebraError,
    DiffAlgebra,
    DiffPoly,
    ParseError,
    as_poly,
)


class TruncationError(ValueError):
    """A requested depth cannot be reached from the available truncation."""


class NotInvertibleError(ValueError):
    pass


@lru_cache(maxsize=None)
def binom(n: int, k: int) -> int:
    """Generalized binomial coefficient n(n-1)...(n-k+1)/k! for integer n, k >= 0."""
    if k < 0:
        return 0
    if n >= 0 and k > n:
        return 0
    num = 1
    for i in range(k):
        num *= n - i
    den = 1
    for i in range(2, k + 1):
        den *= i
    return num // den


def fmax(a: int | None, b: int | None) -> int | None:
    """Max where None stands for minus infinity (an exact, untruncated series)."""
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


class LaurentSeries:
    """Shared storage for PsiDO and ZSeries: degree -> DiffPoly plus a floor."""

    __slots__ = ("coeffs", "floor")

    def __init__(self, coeffs: dict | None = None, floor: int | None = None):
        out = {}
        for d, v in (coeffs or {}).items():
            v = as_poly(v)
            if v and (floor is None or d >= floor):
                out[int(d)] = v
        self.coeffs: dict[int, DiffPoly] = out
        self.floor = floor

    @classmethod
    def _raw(cls, coeffs: dict, floor: int | None):
        obj = cls.__new__(cls)
        if floor is not None:
            coeffs = {d: v for d, v in coeffs.items() if d >= floor and v}
        else:
            coeffs = {d: v for d, v in coeffs.items() if v}
        obj.coeffs = coeffs
        obj.floor = floor
        return obj

    @classmethod
    def constant(cls, c, degree: int = 0):
        return cls._raw({degree: as_poly(c)}, None)

    @property
    def order(self) -> int | None:
        return max(self.coeffs) if self.coeffs else None

    def order_bound(self) -> int | None:
        """Upper bound on the true order (unknown tail included); None for exact zero."""
        if self.coeffs:
            return max(self.coeffs)
        if self.floor is None:
            return None
        return self.floor - 1

    def is_exact(self) -> bool:
        return self.floor is None

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, d: int) -> DiffPoly:
        if self.floor is not None and d < self.floor:
            raise TruncationError(f"coefficient of degree {d} is below the floor {self.floor}")
        return self.coeffs.get(d, ZERO)

    def leading(self) -> DiffPoly:
        if not self.coeffs:
            raise ValueError("zero series has no leading coefficient")
        return self.coeffs[self.order]

    def truncate(self, floor: int | None):
        return type(self)._raw(dict(self.coeffs), fmax(self.floor, floor))

    def _binary(self, other, sign: int):
        if not isinstance(other, LaurentSeries):
            other = type(self).constant(other)
        out = dict(self.coeffs)
        for d, v in other.coeffs.items():
            if sign < 0:
                v = -v
            out[d] = out[d] + v if d in out else v
        return type(self)._raw(out, fmax(self.floor, other.floor))

    def __add__(self, other):
        if not isinstance(other, (LaurentSeries, DiffPoly, int, Fraction)):
            return NotImplemented
        return self._binary(other, 1)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if not isinstance(other, (LaurentSeries, DiffPoly, int, Fraction)):
            return NotImplemented
        return self._binary(other, -1)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return type(self)._raw({d: -v for d, v in self.coeffs.items()}, self.floor)

    def scale(self, c) -> "LaurentSeries":
        """Left multiplication of every coefficient by a scalar or DiffPoly."""
        c = as_poly(c)
        return type(self)._raw({d: c * v for d, v in self.coeffs.items()}, self.floor)

    def map_coeffs(self, f: Callable[[DiffPoly], DiffPoly]):
        return type(self)._raw({d: f(v) for d, v in self.coeffs.items()}, self.floor)

    def derive_coeffs(self, k: int = 1):
        return self.map_coeffs(lambda v: v.derive(k))

    def positive_part(self):
        if self.floor is not None and self.floor > 0:
            raise TruncationError("positive part needs the floor at or below degree 0")
        return type(self)._raw({d: v for d, v in self.coeffs.items() if d >= 0}, None)

    def negative_part(self):
        return type(self)._raw({d: v for d, v in self.coeffs.items() if d < 0}, self.floor)

    def residue(self) -> DiffPoly:
        if self.floor is not None and self.floor > -1:
            raise TruncationError("truncation too shallow for the residue")
        return self.coeffs.get(-1, ZERO)

    def agrees_with(self, other: "LaurentSeries", floor: int | None = None) -> bool:
        """Coefficientwise equality above the common valid depth."""
        lo = fmax(fmax(self.floor, other.floor), floor)
        degs = set(self.coeffs) | set(other.coeffs)
        for d in degs:
            if lo is not None and d < lo:
                continue
            if self.coeffs.get(d, ZERO) != other.coeffs.get(d, ZERO):
                return False
        return True

    def difference_degrees(self, other: "LaurentSeries", floor: int | None = None) -> list[int]:
        lo = fmax(fmax(self.floor, other.floor), floor)
        degs = sorted(set(self.coeffs) | set(other.coeffs), reverse=True)
        return [d for d in degs if (lo is None or d >= lo)
                and self.coeffs.get(d, ZERO) != other.coeffs.get(d, ZERO)]

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, DiffPoly)):
            other = type(self).constant(other)
        if not isinstance(other, LaurentSeries):
            return NotImplemented
        return self.floor == other.floor and self.coeffs == other.coeffs

    __hash__ = None  # type: ignore[assignment]

    def generators(self) -> set:
        out = set()
        for v in self.coeffs.values():
            out |= v.generators()
        return out


# -- scalar operators ---------------------------------------------------------

def _product_floor(A: LaurentSeries, B: LaurentSeries) -> int | None:
    fl = None
    ob, oa = B.order_bound(), A.order_bound()
    if A.floor is not None and ob is not None:
        fl = fmax(fl, A.floor + ob)
    if B.floor is not None and oa is not None:
        fl = fmax(fl, oa + B.floor)
    return fl


def _coeff_of_product(A: dict, B: dict, k: int, skip: tuple | None = None) -> DiffPoly:
    """Coefficient of ∂^k in (sum A) ∘ (sum B) for dicts of coefficients.

    ``skip`` names a (i, j) pair whose t = 0 contribution is left out.
    """
    acc: DiffPoly = ZERO
    for i, a in A.items():
        for j, b in B.items():
            t = i + j - k
            if t < 0:
                continue
            if skip is not None and t == 0 and (i, j) == skip:
                continue
            c = binom(i, t)
            if not c:
                continue
            bt = b.derive(t)
            if bt:
                acc = acc + (a * bt).scale(c)
    return acc


class PsiDO(LaurentSeries):
    """Scalar pseudodifferential operator, ``*`` is composition."""

    __slots__ = ()

    @classmethod
    def d(cls, k: int = 1) -> "PsiDO":
        return cls._raw({k: ONE}, None)

    def compose(self, other: "PsiDO", floor: int | None = None) -> "PsiDO":
        return compose(self, other, floor)

    def __mul__(self, other):
        if isinstance(other, PsiDO):
            return compose(self, other)
        if isinstance(other, (DiffPoly, int, Fraction)):
            return compose(self, PsiDO.constant(other))
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (DiffPoly, int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def power(self, n: int, floor: int | None = None) -> "PsiDO":
        if n < 0:
            return invert(self, floor).power(-n, floor)
        result = PsiDO.constant(1)
        for _ in range(n):
            result = compose(result, self, floor)
        return result

    def adjoint(self, floor: int | None = None) -> "PsiDO":
        return adjoint(self, floor)

    def __str__(self) -> str:
        return format_psido(self)

    def __repr__(self) -> str:
        return f"PsiDO({format_psido(self)!r})"

    def latex(self) -> str:
        return latex_psido(self)


def compose(A: PsiDO, B: PsiDO, floor: int | None = None) -> PsiDO:
    """Composition via the symbol rule (A∘B)(z) = A(z+∂)B(z)."""
    final = fmax(_product_floor(A, B), floor)
    if final is None:
        if any(i < 0 for i in A.coeffs) and any(not b.is_constant() for b in B.coeffs.values()):
            raise TruncationError("exact composition is an infinite series; pass a floor")
    out: dict[int, DiffPoly] = {}
    for i, a in A.coeffs.items():
        for j, b in B.coeffs.items():
            t = 0
            while True:
                d = i + j - t
                if final is not None and d < final:
                    break
                if i >= 0 and t > i:
                    break
                bt = b.derive(t)
                if not bt:
                    break
                c = binom(i, t)
                term = (a * bt).scale(c)
                out[d] = out[d] + term if d in out else term
                t += 1
    return PsiDO._raw(out, final)


def adjoint(A: PsiDO, floor: int | None = None) -> PsiDO:
    """Formal adjoint A* = sum (-∂)^n ∘ a_n."""
    final = fmax(A.floor, floor)
    if final is None and any(n < 0 and not a.is_constant() for n, a in A.coeffs.items()):
        raise TruncationError("exact adjoint is an infinite series; pass a floor")
    out: dict[int, DiffPoly] = {}
    for n, a in A.coeffs.items():
        sign = -1 if n % 2 else 1
        t = 0
        while True:
            d = n - t
            if final is not None and d < final:
                break
            if n >= 0 and t > n:
                break
            at = a.derive(t)
            if not at:
                break
            term = at.scale(sign * binom(n, t))
            out[d] = out[d] + term if d in out else term
            t += 1
    return PsiDO._raw(out, final)


def _invert_scalar(A: PsiDO, floor: int | None) -> PsiDO:
    N = A.order
    if N is None:
        raise NotInvertibleError("zero operator")
    lead = A.coeffs[N]
    try:
        inv_lead = lead.inverse()
    except AlgebraError as exc:
        raise NotInvertibleError(f"leading coefficient {lead} is not invertible") from exc
    if floor is None:
        if A.floor is None and len(A.coeffs) == 1 and (N == 0 or lead.is_constant()):
            return PsiDO._raw({-N: inv_lead}, None)
        raise TruncationError("exact inverse is an infinite series; pass a floor")
    if A.floor is not None and A.floor > 2 * N + floor:
        raise TruncationError(
            f"inverse to floor {floor} needs the operator down to {2 * N + floor}, have {A.floor}")
    C = {-N: inv_lead}
    for d in range(-N - 1, floor - 1, -1):
        r = _coeff_of_product(A.coeffs, C, N + d)
        if r:
            C[d] = -(inv_lead * r)
    return PsiDO._raw(C, floor)


def _root_scalar(A: PsiDO, K: int, floor: int) -> PsiDO:
    M = A.order
    if M is None or M % K:
        raise ValueError(f"order {M} is not divisible by {K}")
    m = M // K
    lead = A.coeffs[M]
    try:
        b_lead = lead.root(K)
        inv_den = (b_lead ** (K - 1)).scale(K).inverse()
    except AlgebraError as exc:
        raise NotInvertibleError(f"leading coefficient {lead} has no usable {K}-th root") from exc
    need = (K - 1) * m + floor
    if A.floor is not None and A.floor > need:
        raise TruncationError(f"root to floor {floor} needs the operator down to {need}")
    B = {m: b_lead}
    for d in range(m - 1, floor - 1, -1):
        k = (K - 1) * m + d
        P = PsiDO._raw(dict(B), None)
        if K == 1:
            known = ZERO
        else:
            X = P
            for _ in range(K - 2):
                X = compose(X, P, k - m)
            known = _coeff_of_product(X.coeffs, P.coeffs, k)
        b = (A.coeff(k) - known) * inv_den
        if b:
            B[d] = b
    return PsiDO._raw(B, floor)


# -- matrices -----------------------------------------------------------------

Grid = list  # list[list[DiffPoly]]


def _grid_mul(X: Grid, Y: Grid) -> Grid:
    n, m, p = len(X), len(Y), len(Y[0]) if Y else 0
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = ZERO
            for k in range(m):
                a, b = X[i][k], Y[k][j]
                if a and b:
                    acc = acc + a * b
            row.append(acc)
        out.append(row)
    return out


def _grid_det(X: Grid) -> DiffPoly:
    n = len(X)
    if n == 1:
        return X[0][0]
    if n == 2:
        return X[0][0] * X[1][1] - X[0][1] * X[1][0]
    acc = ZERO
    for j in range(n):
        if not X[0][j]:
            continue
        minor = [row[:j] + row[j + 1:] for row in X[1:]]
        term = X[0][j] * _grid_det(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def grid_inverse(X: Grid) -> Grid:
    n = len(X)
    if any(len(r) != n for r in X):
        raise NotInvertibleError("non-square leading matrix")
    det = _grid_det(X)
    try:
        inv_det = det.inverse()
    except (AlgebraError, ZeroDivisionError) as exc:
        raise NotInvertibleError(f"leading matrix determinant {det} is not a unit") from exc
    if n == 1:
        return [[inv_det]]
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(X) if k != i]
            c = _grid_det(minor)
            adj[j][i] = c * inv_det if (i + j) % 2 == 0 else -(c * inv_det)
    return adj


class MatPsiDO:
    """Rectangular matrix of PsiDO entries, ``*`` is composition."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Sequence]):
        rows = []
        for r in entries:
            rows.append([e if isinstance(e, PsiDO) else PsiDO.constant(e) for e in r])
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("matrix must be a complete non-empty grid")
        self.entries: list[list[PsiDO]] = rows

    @classmethod
    def identity(cls, n: int) -> "MatPsiDO":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, n: int, m: int | None = None) -> "MatPsiDO":
        return cls([[0] * (n if m is None else m) for _ in range(n)])

    @classmethod
    def constant_matrix(cls, grid: Sequence[Sequence]) -> "MatPsiDO":
        return cls([[PsiDO.constant(as_poly(x) if not isinstance(x, DiffPoly) else x) for x in r] for r in grid])

    @classmethod
    def from_coeff_grids(cls, grids: dict, rows: int, cols: int, floor: int | None) -> "MatPsiDO":
        return cls([[PsiDO._raw({d: g[i][j] for d, g in grids.items()}, floor)
                     for j in range(cols)] for i in range(rows)])

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, ij: tuple[int, int]) -> PsiDO:
        i, j = ij
        return self.entries[i][j]

    def all_entries(self) -> Iterable[PsiDO]:
        for r in self.entries:
            yield from r

    @property
    def floor(self) -> int | None:
        fl = None
        for e in self.all_entries():
            fl = fmax(fl, e.floor)
        return fl

    @property
    def order(self) -> int | None:
        orders = [e.order for e in self.all_entries() if e.order is not None]
        return max(orders) if orders else None

    def coeff_grid(self, d: int) -> Grid:
        return [[e.coeff(d) for e in r] for r in self.entries]

    def degrees(self) -> set[int]:
        out = set()
        for e in self.all_entries():
            out |= set(e.coeffs)
        return out

    def is_exact(self) -> bool:
        return self.floor is None

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.all_entries())

    def map(self, f: Callable[[PsiDO], PsiDO]) -> "MatPsiDO":
        return MatPsiDO([[f(e) for e in r] for r in self.entries])

    def truncate(self, floor: int | None) -> "MatPsiDO":
        return self.map(lambda e: e.truncate(floor))

    def __add__(self, other):
        if isinstance(other, MatPsiDO):
            if other.shape != self.shape:
                raise ValueError("shape mismatch")
            return MatPsiDO([[a + b for a, b in zip(r, s)] for r, s in zip(self.entries, other.entries)])
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, MatPsiDO):
            if other.shape != self.shape:
                raise ValueError("shape mismatch")
            return MatPsiDO([[a - b for a, b in zip(r, s)] for r, s in zip(self.entries, other.entries)])
        return NotImplemented

    def __neg__(self):
        return self.map(lambda e: -e)

    def scale(self, c) -> "MatPsiDO":
        return self.map(lambda e: e.scale(c))

    def compose(self, other: "MatPsiDO", floor: int | None = None) -> "MatPsiDO":
        return compose_matrices(self, other, floor)

    def __mul__(self, other):
        if isinstance(other, MatPsiDO):
            return compose_matrices(self, other)
        return NotImplemented

    def adjoint(self, floor: int | None = None) -> "MatPsiDO":
        return MatPsiDO([[adjoint(self.entries[j][i], floor) for j in range(self.rows)]
                         for i in range(self.cols)])

    def transpose(self) -> "MatPsiDO":
        return MatPsiDO([[self.entries[j][i] for j in range(self.rows)] for i in range(self.cols)])

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> "MatPsiDO":
        return MatPsiDO([[self.entries[i][j] for j in cols] for i in rows])

    def positive_part(self) -> "MatPsiDO":
        return self.map(lambda e: e.positive_part())

    def negative_part(self) -> "MatPsiDO":
        return self.map(lambda e: e.negative_part())

    def trace(self) -> PsiDO:
        if self.rows != self.cols:
            raise ValueError("trace of a non-square matrix")
        acc = PsiDO._raw({}, None)
        for i in range(self.rows):
            acc = acc + self.entries[i][i]
        return acc

    def residue(self) -> Grid:
        return [[e.residue() for e in r] for r in self.entries]

    def agrees_with(self, other: "MatPsiDO", floor: int | None = None) -> bool:
        return self.shape == other.shape and all(
            a.agrees_with(b, floor) for r, s in zip(self.entries, other.entries) for a, b in zip(r, s))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatPsiDO):
            return NotImplemented
        return self.entries == other.entries

    __hash__ = None  # type: ignore[assignment]

    def __str__(self) -> str:
        return format_matrix(self)

    def __repr__(self) -> str:
        return f"MatPsiDO({self.rows}x{self.cols})"

    def latex(self) -> str:
        return latex_matrix(self)

    def generators(self) -> set:
        out = set()
        for e in self.all_entries():
            out |= e.generators()
        return out


def as_matrix(A) -> MatPsiDO:
    if isinstance(A, MatPsiDO):
        return A
    if isinstance(A, PsiDO):
        return MatPsiDO([[A]])
    return MatPsiDO.constant_matrix(A)


def compose_matrices(A: MatPsiDO, B: MatPsiDO, floor: int | None = None) -> MatPsiDO:
    if A.cols != B.rows:
        raise ValueError(f"cannot compose {A.shape} with {B.shape}")
    out = []
    for i in range(A.rows):
        row = []
        for j in range(B.cols):
            acc = None
            for k in range(A.cols):
                a, b = A.entries[i][k], B.entries[k][j]
                term = compose(a, b, floor)
                acc = term if acc is None else acc + term
            row.append(acc)
        out.append(row)
    return MatPsiDO(out)


def _mat_coeff_of_product(A: dict, C: dict, k: int, n: int, p: int, m: int) -> Grid:
    """Coefficient grid of ∂^k in A∘C, for dicts degree -> grid (n×m and m×p)."""
    acc = [[ZERO] * p for _ in range(n)]
    for i, a in A.items():
        for j, c in C.items():
            t = i + j - k
            if t < 0:
                continue
            b = binom(i, t)
            if not b:
                continue
            cd = [[x.derive(t) for x in r] for r in c] if t else c
            prod = _grid_mul(a, cd)
            for x in range(n):
                for y in range(p):
                    v = prod[x][y]
                    if v:
                        acc[x][y] = acc[x][y] + v.scale(b)
    return acc


def _grids_of(A: MatPsiDO) -> dict:
    return {d: A.coeff_grid(d) for d in sorted(A.degrees())}


def _invert_common_order(A: MatPsiDO, floor: int) -> MatPsiDO:
    n = A.rows
    N = A.order
    if A.floor is not None and A.floor > 2 * N + floor:
        raise TruncationError(
            f"inverse to floor {floor} needs the operator down to {2 * N + floor}, have {A.floor}")
    lead = A.coeff_grid(N)
    Linv = grid_inverse(lead)
    Ag = _grids_of(A)
    C = {-N: Linv}
    for d in range(-N - 1, floor - 1, -1):
        R = _mat_coeff_of_product(Ag, C, N + d, n, n, n)
        if any(x for r in R for x in r):
            C[d] = [[-x for x in r] for r in _grid_mul(Linv, R)]
    return MatPsiDO.from_coeff_grids(C, n, n, floor)


def _invert_matrix(A: MatPsiDO, floor: int | None) -> MatPsiDO:
    if A.rows != A.cols:
        raise NotInvertibleError("only square matrices are invertible")
    n = A.rows
    row_orders = []
    for r in A.entries:
        orders = [e.order for e in r if e.order is not None]
        if not orders:
            raise NotInvertibleError("zero row")
        row_orders.append(max(orders))
    if floor is None:
        if A.is_exact() and all(len(e.coeffs) <= 1 for e in A.all_entries()) and A.degrees() <= {0}:
            inv = grid_inverse(A.coeff_grid(0))
            return MatPsiDO.from_coeff_grids({0: inv}, n, n, None)
        raise TruncationError("exact inverse is an infinite series; pass a floor")
    if len(set(row_orders)) == 1:
        return _invert_common_order(A, floor)
    # row-shift to a common order 0: P = diag(∂^{-r_i}) ∘ A, A^{-1} = P^{-1} ∘ diag(∂^{-r_i})
    p_floor = floor + min(row_orders)
    P = MatPsiDO([[compose(PsiDO.d(-row_orders[i]), e, p_floor) for e in r]
                  for i, r in enumerate(A.entries)])
    Pinv = _invert_common_order(P, p_floor)
    return MatPsiDO([[compose(Pinv.entries[i][j], PsiDO.d(-row_orders[j]), floor) for j in range(n)]
                     for i in range(n)])


def invert(A, floor: int | None = None):
    """Inverse of a scalar or square matrix operator, valid down to ``floor``."""
    if isinstance(A, PsiDO):
        return _invert_scalar(A, floor)
    return _invert_matrix(A, floor)


def _root_matrix(A: MatPsiDO, K: int, floor: int) -> MatPsiDO:
    n = A.rows
    M = A.order
    if A.rows != A.cols or M is None or M % K:
        raise ValueError(f"order {M} is not divisible by {K}")
    lead = A.coeff_grid(M)
    ident = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    if lead != ident:
        raise NotInvertibleError("matrix roots need leading term equal to the identity")
    m = M // K
    need = (K - 1) * m + floor
    if A.floor is not None and A.floor > need:
        raise TruncationError(f"root to floor {floor} needs the operator down to {need}")
    B = {m: ident}
    inv_k = Fraction(1, K)
    for d in range(m - 1, floor - 1, -1):
        k = (K - 1) * m + d
        P = MatPsiDO.from_coeff_grids(B, n, n, None)
        if K == 1:
            known = [[ZERO] * n for _ in range(n)]
        else:
            X = P
            for _ in range(K - 2):
                X = compose_matrices(X, P, k - m)
            known = _mat_coeff_of_product(_grids_of(X), B, k, n, n, n)
        target = A.coeff_grid(k)
        B[d] = [[(target[i][j] - known[i][j]).scale(inv_k) for j in range(n)] for i in range(n)]
    return MatPsiDO.from_coeff_grids(B, n, n, floor)


def kth_root(A, K: int, floor: int):
    """B with B^K = A; the leading coefficient is the principal root.

    Negative K gives the |K|-th root of the inverse.
    """
    if K == 0:
        raise ValueError("K must be nonzero")
    if K < 0:
        K = -K
        M = A.order or 0
        inv_floor = floor - (K - 1) * M // K
        A = invert(A, inv_floor)
    if isinstance(A, PsiDO):
        return _root_scalar(A, K, floor)
    return _root_matrix(A, K, floor)


def power(A, n: int, floor: int | None = None):
    if n < 0:
        return power(invert(A, floor), -n, floor)
    if isinstance(A, PsiDO):
        return A.power(n, floor)
    result = MatPsiDO.identity(A.rows)
    for _ in range(n):
        result = compose_matrices(result, A, floor)
    return result


# -- quasideterminants --------------------------------------------------------

def selector_columns(n: int, idx: Sequence[int]) -> list[list[int]]:
    """n×|idx| matrix whose columns are the unit vectors e_i, i in idx."""
    return [[1 if i == k else 0 for k in idx] for i in range(n)]


def selector_rows(n: int, idx: Sequence[int]) -> list[list[int]]:
    return [[1 if j == k else 0 for j in range(n)] for k in idx]


def quasideterminant(A: MatPsiDO, I, J, floor: int) -> MatPsiDO:
    """Generalized quasideterminant (J A^{-1} I)^{-1} valid down to ``floor``."""
    Im = as_matrix(I)
    Jm = as_matrix(J)
    if Im.rows != A.cols or Jm.cols != A.rows or Im.cols != Jm.rows:
        raise ValueError("incompatible shapes for the quasideterminant")
    order = A.order or 0
    depth = floor - 2 * order
    last: Exception | None = None
    for _ in range(8):
        try:
            Ainv = invert(A, depth)
            X = compose_matrices(compose_matrices(Jm, Ainv), Im)
            if X.rows == 1:
                return MatPsiDO([[invert(X.entries[0][0], floor)]])
            return invert(X, floor)
        except TruncationError as exc:
            last = exc
            if A.floor is not None and depth <= A.floor - 2 * order:
                break
            depth -= 2
    raise TruncationError(f"quasideterminant not reachable at floor {floor}: {last}")


def quasideterminant_blocks(A: MatPsiDO, rows: Sequence[int], cols: Sequence[int], floor: int) -> MatPsiDO:
    """|A|_{IJ} = A_IJ - A_IJc (A_IcJc)^{-1} A_IcJ for index sets (rows I, columns J)."""
    rc = [i for i in range(A.rows) if i not in rows]
    cc = [j for j in range(A.cols) if j not in cols]
    if not rc:
        return A.submatrix(rows, cols).truncate(floor)
    inner = A.submatrix(rc, cc)
    depth = floor - 2 * (A.order or 0)
    inv = invert(inner, depth) if inner.rows > 1 else MatPsiDO([[invert(inner.entries[0][0], depth)]])
    corr = compose_matrices(compose_matrices(A.submatrix(rows, cc), inv, floor), A.submatrix(rc, cols), floor)
    return (A.submatrix(rows, cols) - corr).truncate(floor)


def delta_root_family(alpha: PsiDO, beta: PsiDO, floor: int) -> MatPsiDO:
    """Trace-free 2×2 square root of ∂·𝟙 built from constant-coefficient α, β."""
    for x in (alpha, beta):
        if any(not c.is_constant() for c in x.coeffs.values()):
            raise ValueError("α and β must have constant coefficients")
    if beta.is_zero():
        raise NotInvertibleError("β must be nonzero")
    depth = floor - 2 * abs(alpha.order or 0) - 2 * abs(beta.order or 0) - 2
    binv = invert(beta, depth)
    lower = compose(binv, PsiDO.d(1) - compose(alpha, alpha, depth), depth)
    return MatPsiDO([[alpha.truncate(floor), beta.truncate(floor)],
                     [lower.truncate(floor), (-alpha).truncate(floor)]])


def trace_residue(A: MatPsiDO) -> DiffPoly:
    """Res tr A."""
    if isinstance(A, PsiDO):
        return A.residue()
    return A.trace().residue()


# -- text formats -------------------------------------------------------------

def format_psido(A: PsiDO) -> str:
    parts = [f"({A.coeffs[d]}) * d^{d}" for d in sorted(A.coeffs, reverse=True)]
    if A.floor is not None:
        parts.append(f"O(d^{A.floor - 1})")
    return " + ".join(parts) if parts else "0"


_SPLIT = re.compile(r"\s*\+\s*")


def parse_psido(text: str, algebra: DiffAlgebra, line: int = 1, column: int = 1,
                symbol: str = "d", cls=None):
    """Inverse of :func:`format_psido`; also accepts bare ``d^k`` and ``d`` terms.

    ``symbol`` and ``cls`` let the same grammar read commutative z-series.
    """
    cls = PsiDO if cls is None else cls
    coeffs: dict[int, DiffPoly] = {}
    floor = None
    sym = re.escape(symbol)
    for start, chunk in _top_level_terms(text):
        col = column + start
        s = chunk.strip()
        m = re.fullmatch(rf"O\({sym}\^(-?\d+)\)", s)
        if m:
            floor = int(m.group(1)) + 1
            continue
        m = re.fullmatch(rf"(?:\((?P<c>.*)\)\s*\*\s*)?{sym}(?:\^(?P<k>-?\d+|\(-?\d+\)))?", s, re.S)
        if m:
            k = int(m.group("k").strip("()")) if m.group("k") else 1
            c = algebra.parse(m.group("c"), line, col + 1) if m.group("c") is not None else ONE
            coeffs[k] = coeffs.get(k, ZERO) + c
            continue
        if s == "0":
            continue
        c = algebra.parse(s, line, col)
        coeffs[0] = coeffs.get(0, ZERO) + c
    return cls(coeffs, floor)


def _top_level_terms(text: str) -> list[tuple[int, str]]:
    out = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "+" and depth == 0 and text[start:i].strip():
            out.append((start, text[start:i]))
            start = i + 1
    if text[start:].strip():
        out.append((start, text[start:]))
    return out


def latex_psido(A: PsiDO) -> str:
    if not A.coeffs and A.floor is None:
        return "0"
    parts = []
    for d in sorted(A.coeffs, reverse=True):
        c = A.coeffs[d]
        op = "" if d == 0 else ("\\partial" if d == 1 else f"\\partial^{{{d}}}")
        if c == 1 and op:
            parts.append(op)
        elif c.is_monomial() and not c.is_constant() or (c.is_constant() and not op):
            parts.append(f"{c.latex()} {op}".strip())
        else:
            parts.append(f"\\left({c.latex()}\\right) {op}".strip())
    if A.floor is not None:
        parts.append(f"O(\\partial^{{{A.floor - 1}}})")
    return " + ".join(parts)


def format_matrix(A: MatPsiDO) -> str:
    return "\n".join(f"[{i + 1},{j + 1}] {format_psido(e)}"
                     for i, r in enumerate(A.entries) for j, e in enumerate(r))


def latex_matrix(A: MatPsiDO) -> str:
    rows = [" & ".join(latex_psido(e) for e in r) for r in A.entries]
    return "\\begin{pmatrix} " + " \\\\ ".join(rows) + " \\end{pmatrix}"
