"""Scenario-driven command line front end.

Usage::

    adlerpva run SCENARIO [-o DIR] [--format text,structured,latex]
                          [--floor N] [--window LO HI] [--expect-file FILE]
    adlerpva list

The scenario grammar is documented in ``docs/scenario-format.md``.
Exit status: 0 all tasks as expected, 1 verification mismatch,
2 usage or parse error, 3 truncation too shallow.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from . import adler, dispersionless as disp, hierarchy as hier
from .diffalg import ZERO, AlgebraError, DiffAlgebra, DiffPoly, Generator, ParseError, integrate, is_total_derivative
from .lambda_bracket import BracketTable, check_jacobi, check_skewsymmetry, parse_lambda_poly
from .psido import MatPsiDO, PsiDO, as_matrix, TruncationError, format_psido, latex_psido, parse_psido, quasideterminant, kth_root
from .report import Report

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_TRUNCATION = 0, 1, 2, 3


class ScenarioError(Exception):
    """A scenario that parses but does not make sense (bad reference, bad value)."""

    def __init__(self, message: str, line: int = 0, column: int = 1):
        super().__init__(message)
        self.line = line
        self.column = column


# -- scenario file ---------------------------------------------------------------

@dataclass
class Entry:
    key: str
    value: str
    line: int
    column: int  # column of the value


@dataclass
class Section:
    kind: str
    name: str
    line: int
    entries: list[Entry] = field(default_factory=list)

    def get(self, key: str, default: str | None = None) -> str | None:
        for e in self.entries:
            if e.key == key:
                return e.value
        return default

    def entry(self, key: str) -> Entry | None:
        for e in self.entries:
            if e.key == key:
                return e
        return None

    def require(self, key: str) -> Entry:
        e = self.entry(key)
        if e is None:
            raise ScenarioError(f"[{self.kind} {self.name}] needs '{key}'", self.line)
        return e

    def prefixed(self, prefix: str) -> list[Entry]:
        return [e for e in self.entries if e.key.split()[0] == prefix]


_SECTION = re.compile(r"\[\s*([A-Za-z][\w-]*)(?:\s+([A-Za-z0-9][\w.-]*))?\s*\]\s*$")


def parse_scenario_text(text: str) -> list[Section]:
    sections: list[Section] = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.lstrip()
        col = len(line) - len(stripped) + 1
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ParseError("malformed section header", n, col)
            sections.append(Section(m.group(1), m.group(2) or "", n))
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", n, col)
        if not sections:
            raise ParseError("entry outside of any section", n, col)
        key, value = stripped.split("=", 1)
        vcol = col + len(key) + 1 + (len(value) - len(value.lstrip()))
        key = " ".join(key.split())
        if not key:
            raise ParseError("empty key", n, col)
        sections[-1].entries.append(Entry(key, value.strip(), n, vcol))
    return sections


def _int(e: Entry) -> int:
    try:
        return int(e.value)
    except ValueError:
        raise ParseError(f"expected an integer, got {e.value!r}", e.line, e.column) from None


def _int_range(e: Entry) -> list[int]:
    """``1..3``, ``-3..-1`` or a space separated list."""
    v = e.value
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", v)
    try:
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            return list(range(a, b + 1)) if a <= b else list(range(a, b - 1, -1))
        return [int(x) for x in v.split()]
    except ValueError:
        raise ParseError(f"expected integers, got {v!r}", e.line, e.column) from None


def _flag(e: Entry | None, default: bool = False) -> bool:
    if e is None:
        return default
    v = e.value.lower()
    if v in ("yes", "true", "1", "on"):
        return True
    if v in ("no", "false", "0", "off"):
        return False
    raise ParseError(f"expected yes/no, got {e.value!r}", e.line, e.column)


# -- the loaded scenario --------------------------------------------------------

@dataclass
class TaskResult:
    name: str
    kind: str
    status: str  # "pass", "fail", "info"
    expected: str  # "pass" or "fail"
    items: list[tuple[str, str, str]] = field(default_factory=list)  # (label, text, latex)
    report: Report | None = None

    @property
    def ok(self) -> bool:
        if self.status == "info":
            return True
        return self.status == self.expected


class Scenario:
    def __init__(self, sections: list[Section], floor: int | None = None,
                 window: tuple[int, int] | None = None):
        self.sections = sections
        self.floor_override = floor
        self.window_override = window
        self.algebra = DiffAlgebra()
        self.meta = next((s for s in sections if s.kind == "scenario"), Section("scenario", "", 0))
        self.name = self.meta.get("name", "scenario")
        self.objects: dict[tuple[str, str], object] = {}
        self._by_name = {}
        for s in sections:
            if s.kind in ("operator", "table", "setup", "task"):
                key = (s.kind, s.name)
                if key in self._by_name:
                    raise ScenarioError(f"duplicate [{s.kind} {s.name}]", s.line)
                self._by_name[key] = s
        for s in sections:
            if s.kind == "algebra":
                self._declare(s)
            elif s.kind not in ("scenario", "operator", "table", "setup", "task"):
                raise ParseError(f"unknown section [{s.kind}]", s.line, 1)
        self._validate()

    _REFS = {"operator": "operator", "of": "operator", "table": "table", "table0": "table",
             "table1": "table", "setup": "setup"}

    def _validate(self) -> None:
        """Check references and parse explicit entries before running anything."""
        for s in self.sections:
            if s.kind in ("scenario", "algebra"):
                continue
            if s.entry("kind") is None:
                raise ScenarioError(f"[{s.kind} {s.name}] needs 'kind'", s.line)
            for e in s.entries:
                target = self._REFS.get(e.key)
                if target and (target, e.value) not in self._by_name:
                    raise ScenarioError(f"unknown {target} {e.value!r}", e.line, e.column)
        for s in self.sections:
            if s.kind in ("operator", "table") and s.get("kind") in ("explicit", "explicit-z"):
                self.get(s.kind, Entry("", s.name, s.line, 1))

    # algebra
    def _declare(self, s: Section) -> None:
        # a name may appear under several keys, e.g. both constants and invertible
        keys = {"generators": None, "invertible": "invertible", "fractional": "fractional",
                "constants": "constant"}
        flags: dict[str, dict] = {}
        where: dict[str, Entry] = {}
        for e in s.entries:
            if e.key not in keys:
                raise ParseError(f"unknown algebra key {e.key!r}", e.line, 1)
            for name in e.value.split():
                flags.setdefault(name, {})
                where.setdefault(name, e)
                if keys[e.key]:
                    flags[name][keys[e.key]] = True
        for name, f in flags.items():
            try:
                self.algebra.declare(name, **f)
            except AlgebraError as exc:
                e = where[name]
                raise ParseError(str(exc), e.line, e.column) from None

    def adopt(self, gens) -> None:
        """Make builder-made generators parseable in later entries."""
        for g in gens:
            try:
                self.algebra.add(g)
            except AlgebraError as exc:
                raise ScenarioError(str(exc)) from None

    def poly(self, e: Entry, text: str | None = None) -> DiffPoly:
        return self.algebra.parse(e.value if text is None else text, e.line, e.column)

    def matrix(self, e: Entry) -> list[list[DiffPoly]]:
        rows = [r.split() for r in e.value.split(";")]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ParseError("matrix rows must have equal length", e.line, e.column)
        return [[self.algebra.parse(x, e.line, e.column) for x in r] for r in rows]

    @property
    def floor(self) -> int:
        if self.floor_override is not None:
            return self.floor_override
        e = self.meta.entry("floor")
        return _int(e) if e else -4

    def window(self, s: Section) -> tuple[int, int]:
        if self.window_override is not None:
            return self.window_override
        e = s.entry("window") or self.meta.entry("window")
        if e is None:
            return (-3, 2)
        v = _int_range(e) if ".." not in e.value else None
        if v is None or len(v) != 2:
            raise ParseError("window needs two integers 'lo hi'", e.line, e.column)
        return (v[0], v[1])

    def section(self, kind: str, name: str, line: int = 0) -> Section:
        s = self._by_name.get((kind, name))
        if s is None:
            raise ScenarioError(f"unknown {kind} {name!r}", line)
        return s

    def get(self, kind: str, e: Entry):
        key = (kind, e.value)
        if key not in self.objects:
            s = self.section(kind, e.value, e.line)
            self.objects[key] = _BUILDERS[kind](self, s)
        return self.objects[key]

    @property
    def tasks(self) -> list[Section]:
        return [s for s in self.sections if s.kind == "task"]


# -- builders -------------------------------------------------------------------

_GENERIC_CACHE: dict = {}
_DISP_CACHE: dict = {}


def _generic(sc: Scenario, s: Section):
    M = _int(s.require("order"))
    N = _int(s.entry("size")) if s.entry("size") else 1
    diff = _flag(s.entry("differential"), False)
    depth = _int(s.entry("depth")) if s.entry("depth") else -sc.floor + 2
    key = (M, N, diff, depth)
    if key not in _GENERIC_CACHE:
        _GENERIC_CACHE[key] = adler.induce_bracket_generic(M, N, diff, -depth)
    G = _GENERIC_CACHE[key]
    sc.adopt(G.generators)
    return G


def _disp_generic(sc: Scenario, s: Section):
    M = _int(s.require("order"))
    laurent = _flag(s.entry("laurent"), True)
    depth = _int(s.entry("depth")) if s.entry("depth") else 12
    key = (M, laurent, depth)
    if key not in _DISP_CACHE:
        _DISP_CACHE[key] = disp.disp_brackets_generic(M, laurent, depth)
    D = _DISP_CACHE[key]
    sc.adopt(D.generators)
    return D


def _fractional_names(s: Section) -> tuple[str, ...]:
    return tuple((s.get("fractional") or "").split())


def build_operator(sc: Scenario, s: Section):
    kind = s.require("kind").value
    if kind == "affine":
        N = _int(s.require("size"))
        S = sc.matrix(s.require("S")) if s.entry("S") else None
        A, T0, T1 = adler.affine_operator(N, S, _fractional_names(s))
        sc.adopt(T0.generators)
        return A
    if kind == "generic":
        return _generic(sc, s).operator
    if kind == "disp-generic":
        return _disp_generic(sc, s).symbol
    if kind == "disp-matrix":
        E, _, _ = disp.matrix_linear_disp(_int(s.require("size")))
        sc.adopt(g for r in E for e in r for g in e.generators())
        return E
    if kind == "explicit":
        rows = _int(s.require("rows"))
        cols = _int(s.entry("cols")) if s.entry("cols") else rows
        grid = [[None] * cols for _ in range(rows)]
        for e in s.prefixed("entry"):
            parts = e.key.split()
            if len(parts) != 3:
                raise ParseError("expected 'entry i j = operator'", e.line, 1)
            i, j = int(parts[1]) - 1, int(parts[2]) - 1
            if not (0 <= i < rows and 0 <= j < cols):
                raise ParseError("entry index out of range", e.line, 1)
            grid[i][j] = parse_psido(e.value, sc.algebra, e.line, e.column)
        return MatPsiDO([[x if x is not None else PsiDO() for x in r] for r in grid])
    if kind == "explicit-z":
        e = s.require("symbol")
        return parse_psido(e.value, sc.algebra, e.line, e.column, symbol="z", cls=disp.ZSeries)
    if kind == "quasideterminant":
        A = sc.get("operator", s.require("of"))
        I, J = sc.matrix(s.require("I")), sc.matrix(s.require("J"))
        return quasideterminant(A, I, J, _int(s.entry("floor")) if s.entry("floor") else sc.floor)
    e = s.require("kind")
    raise ParseError(f"unknown operator kind {kind!r}", e.line, e.column)


def build_table(sc: Scenario, s: Section) -> BracketTable:
    kind = s.require("kind").value
    part = s.get("part", "0")
    if kind == "affine":
        N = _int(s.require("size"))
        S = sc.matrix(s.require("S")) if s.entry("S") else [[0] * N for _ in range(N)]
        T0, T1 = adler.affine_tables(N, S, _fractional_names(s))
        sc.adopt(T0.generators)
        return {"0": T0, "1": T1, "sum": T0 + T1}[part]
    if kind == "induced":
        G = _generic(sc, s)
        return G.T0 if part == "0" else G.T1
    if kind == "disp-generic":
        D = _disp_generic(sc, s)
        return D.T0 if part == "0" else D.T1
    if kind == "disp-matrix":
        _, T0, T1 = disp.matrix_linear_disp(_int(s.require("size")))
        sc.adopt(T0.generators)
        return T0 if part == "0" else T1
    if kind == "explicit":
        names = (s.get("generators") or "").split()
        gens = [sc.algebra[n] for n in names] if names else [g for g in sc.algebra if not g.constant]
        entries = {}
        for e in s.prefixed("bracket"):
            parts = e.key.split()
            if len(parts) != 3 or parts[1] not in sc.algebra or parts[2] not in sc.algebra:
                raise ParseError("expected 'bracket a b = lambda-polynomial' with declared generators",
                                 e.line, 1)
            entries[(sc.algebra[parts[1]], sc.algebra[parts[2]])] = parse_lambda_poly(
                e.value, sc.algebra, e.line, e.column)
        # pairs given in one order only are completed by skewsymmetry
        for (a, b), v in list(entries.items()):
            if (b, a) not in entries:
                entries[(b, a)] = -v.reflect()
        return BracketTable(gens, entries, name=s.name)
    e = s.require("kind")
    raise ParseError(f"unknown table kind {kind!r}", e.line, e.column)


def build_setup(sc: Scenario, s: Section):
    kind = s.require("kind").value
    floor = _int(s.entry("floor")) if s.entry("floor") else sc.floor
    if sc.floor_override is not None:
        floor = sc.floor_override
    if kind == "gl2-diagonal":
        e = s.entry("s")
        sval = sc.poly(e) if e else 1
        H = hier.gl2_diagonal_scenario(sval, floor)
        sc.adopt(H.generators)
        return H
    if kind == "gl2-nilpotent":
        H = hier.gl2_nilpotent_scenario(floor)
        sc.adopt(H.generators)
        return H
    if kind == "quasideterminant":
        A = sc.get("operator", s.require("operator"))
        X = sc.matrix(s.require("shift"))
        K = _int(s.entry("root")) if s.entry("root") else 1
        I, J = hier.canonical_factorization(X)
        L = quasideterminant(A, I, J, floor + (K - 1))
        B = L if K == 1 else as_matrix(kth_root(L.entries[0][0] if L.shape == (1, 1) else L, K, floor))
        T0 = sc.get("table", s.require("table0"))
        T1 = sc.get("table", s.require("table1")) if s.entry("table1") else None
        return hier.HierarchySetup(L, K, B, T0, T1, floor, list(T0.generators), parent=A, name=s.name)
    if kind == "dispersionless":
        D = _disp_generic(sc, s)
        return disp.disp_setup(D, -D.depth)
    e = s.require("kind")
    raise ParseError(f"unknown setup kind {kind!r}", e.line, e.column)


_BUILDERS: dict[str, Callable] = {"operator": build_operator, "table": build_table, "setup": build_setup}


# -- tasks ---------------------------------------------------------------------

def _expected_outcome(s: Section) -> str:
    e = s.entry("expect")
    if e is None:
        return "pass"
    if e.value not in ("pass", "fail"):
        raise ParseError("expect must be 'pass' or 'fail'", e.line, e.column)
    return e.value


def _report_items(rep: Report) -> list[tuple[str, str, str]]:
    items = [("checked", str(rep.checked), str(rep.checked)),
             ("mismatches", str(len(rep.mismatches)), str(len(rep.mismatches)))]
    for m in rep.mismatches:
        loc = ", ".join(f"{k}={v}" for k, v in m.where.items())
        items.append((f"mismatch {loc}", f"expected {m.expected}; got {m.got}",
                      f"\\text{{expected }} {_tex(m.expected)} \\text{{; got }} {_tex(m.got)}"))
    return items


def _tex(x) -> str:
    return x.latex() if hasattr(x, "latex") else str(x)


def _verification(s: Section, rep: Report) -> TaskResult:
    return TaskResult(s.name, s.require("kind").value, "pass" if rep.passed else "fail",
                      _expected_outcome(s), _report_items(rep), rep)


def _golden(sc: Scenario, s: Section, extra: list[Entry], label: str) -> list[Entry]:
    return [e for e in s.prefixed("expect") + extra if e.key.split()[0] == "expect"
            and len(e.key.split()) > 1 and e.key.split()[1] == label]


def _compare_golden(sc: Scenario, res: TaskResult, golden: dict, values: dict,
                    modulo_derivatives: bool) -> None:
    """Compare computed values against ``expect`` lines; mismatches flip the task to fail."""
    rep = res.report or Report(res.kind)
    for key, (e, text) in sorted(golden.items()):
        exp = sc.poly(e, text)
        got = values.get(key)
        rep.checked += 1
        if got is None:
            rep.add({"value": " ".join(map(str, key))}, exp, "not computed")
            continue
        diff = got - exp
        ok = is_total_derivative(diff) or diff.is_zero() if modulo_derivatives else diff.is_zero()
        if not ok:
            rep.add({"value": " ".join(map(str, key))}, exp, got)
    res.report = rep
    if rep.checked:
        res.status = "pass" if rep.passed else "fail"
        res.items.append(("golden values checked", str(rep.checked), str(rep.checked)))
        for m in rep.mismatches:
            loc = ", ".join(f"{k}={v}" for k, v in m.where.items())
            res.items.append((f"golden mismatch {loc}", f"expected {m.expected}; got {m.got}",
                              f"\\text{{expected }} {_tex(m.expected)}"))


def _gen_latex(g: Generator) -> str:
    from .diffalg import latex_name
    return latex_name(g.name)


def run_task(sc: Scenario, s: Section, extra: list[Entry]) -> TaskResult:
    kind = s.require("kind").value
    if kind in ("verify-adler", "verify-s-adler", "verify-biadler"):
        A = sc.get("operator", s.require("operator"))
        lam = _int(s.entry("lambda_max")) if s.entry("lambda_max") else None
        w = sc.window(s)
        if kind == "verify-adler":
            rep = adler.verify_adler(A, sc.get("table", s.require("table")), w, lam)
        else:
            Sx = sc.matrix(s.require("S")) if s.entry("S") else None
            if kind == "verify-s-adler":
                if Sx is None:
                    Sx = [[1 if i == j else 0 for j in range(A.cols)] for i in range(A.rows)]
                rep = adler.verify_s_adler(A, sc.get("table", s.require("table")), Sx, w, lam)
            else:
                rep = adler.verify_biadler(A, sc.get("table", s.require("table0")),
                                           sc.get("table", s.require("table1")), Sx, w, lam)
        return _verification(s, rep)
    if kind in ("disp-verify-adler", "disp-verify-biadler", "hbar-adler"):
        A = sc.get("operator", s.require("operator"))
        w = sc.window(s)
        if kind == "disp-verify-adler":
            rep = disp.verify_disp_adler(A, sc.get("table", s.require("table")), w)
        elif kind == "disp-verify-biadler":
            rep = disp.verify_disp_biadler(A, sc.get("table", s.require("table0")),
                                           sc.get("table", s.require("table1")), w)
        else:
            rep = disp.verify_hbar_adler_mod2(A, sc.get("table", s.require("table")), w)
        return _verification(s, rep)
    if kind == "pva":
        T = sc.get("table", s.require("table"))
        names = (s.get("generators") or "").split()
        gens = [sc.algebra[n] for n in names] if names else None
        rep = Report("pva")
        rep.merge(check_skewsymmetry(T, gens))
        rep.merge(check_jacobi(T, gens))
        return _verification(s, rep)
    if kind == "densities":
        H = sc.get("setup", s.require("setup"))
        ns = _int_range(s.require("n"))
        dens = _density_fn(H)
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        values = {}
        for n in ns:
            h = dens(H, n)
            values[(n,)] = h
            res.items.append((f"h_{n}", str(h), f"h_{{{n}}} = {h.latex()}"))
        golden = {}
        for e in _golden(sc, s, extra, "density"):
            golden[(int(e.key.split()[2]),)] = (e, None)
        _compare_golden(sc, res, golden, values, modulo_derivatives=True)
        return res
    if kind == "flows":
        H = sc.get("setup", s.require("setup"))
        ns = _int_range(s.require("n"))
        names = (s.get("generators") or "").split()
        gens = [sc.algebra[n] for n in names] if names else list(H.generators)
        flows = hier.generator_flows if isinstance(H, hier.HierarchySetup) else disp.disp_generator_flows
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        values = {}
        for n in ns:
            fl = flows(H, n, generators=gens)
            for g in gens:
                v = fl[g]
                values[(n, g.name)] = v
                res.items.append((f"d{g.name}/dt_{n}", str(v),
                                  f"\\frac{{d {_gen_latex(g)}}}{{dt_{{{n}}}}} = {v.latex()}"))
        golden = {}
        for e in _golden(sc, s, extra, "flow"):
            parts = e.key.split()
            golden[(int(parts[2]), parts[3])] = (e, None)
        _compare_golden(sc, res, golden, values, modulo_derivatives=False)
        return res
    if kind == "lax":
        H = sc.get("setup", s.require("setup"))
        ns = _int_range(s.require("n"))
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        for n in ns:
            if isinstance(H, hier.HierarchySetup):
                F = hier.flow(H, n)
                for i, r in enumerate(F.entries):
                    for j, x in enumerate(r):
                        res.items.append((f"[(B^{n})_+, A] entry {i + 1},{j + 1}", format_psido(x),
                                          latex_psido(x)))
            else:
                F = disp.disp_flow(H, n)
                res.items.append((f"dA/dt_{n}", str(F), F.latex()))
        return res
    if kind == "involution":
        H = sc.get("setup", s.require("setup"))
        ns = _int_range(s.require("n"))
        check = hier.check_involution if isinstance(H, hier.HierarchySetup) else disp.check_disp_involution
        rep = Report("involution")
        for m in ns:
            for n in ns:
                rep.checked += 1
                if not check(H, m, n):
                    rep.add({"m": m, "n": n}, "total derivative", "not a total derivative")
        return _verification(s, rep)
    if kind == "lenard-magri":
        H = sc.get("setup", s.require("setup"))
        ns = _int_range(s.require("n"))
        probes_e = s.require("probes")
        rep = Report("lenard-magri")
        if isinstance(H, hier.HierarchySetup):
            lm = hier.check_lenard_magri
            if probes_e.value == "coefficients":
                probes = [p for p, _ in H.probes() if H.A.floor is None or p[2] >= H.A.floor]
            else:
                probes = [sc.poly(probes_e, x) for x in probes_e.value.split()]
        else:
            lm = disp.check_disp_lenard_magri
            if probes_e.value == "coefficients":
                probes = [d for d in sorted(H.A.coeffs, reverse=True) if d < H.K and d >= -3]
            else:
                probes = [sc.poly(probes_e, x) for x in probes_e.value.split()]
        for n in ns:
            for p in probes:
                rep.merge(lm(H, n, p))
        return _verification(s, rep)
    if kind == "benney":
        H = sc.get("setup", s.require("setup"))
        ks = _int_range(s.require("k"))
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        values = {}
        for k in ks:
            v = disp.benney_rhs(H, k)
            values[(k,)] = v
            name = adler.generic_name(k, 0, 0, 1)
            res.items.append((f"d{name}/dt_2", str(v), f"\\frac{{d u_{{{k}}}}}{{dt_{{2}}}} = {v.latex()}"))
        golden = {}
        for e in _golden(sc, s, extra, "benney"):
            golden[(int(e.key.split()[2]),)] = (e, None)
        _compare_golden(sc, res, golden, values, modulo_derivatives=False)
        return res
    if kind == "root":
        H = sc.get("setup", s.require("setup"))
        ds = _int_range(s.require("degrees"))
        B = H.B.entries[0][0] if isinstance(H, hier.HierarchySetup) else H.B
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        values = {}
        for d in ds:
            c = B.coeff(d)
            values[(d,)] = c
            res.items.append((f"b_{d}", str(c), f"b_{{{d}}} = {c.latex()}"))
        golden = {(int(e.key.split()[2]),): (e, None) for e in _golden(sc, s, extra, "coefficient")}
        _compare_golden(sc, res, golden, values, modulo_derivatives=False)
        return res
    if kind == "brackets":
        T = sc.get("table", s.require("table"))
        names = (s.get("generators") or "").split()
        gens = [sc.algebra[n] for n in names] if names else list(T.generators)
        res = TaskResult(s.name, kind, "info", _expected_outcome(s))
        for a in gens:
            for b in gens:
                v = T.entry(a, b)
                res.items.append((f"{{{a.name} lambda {b.name}}}", str(v),
                                  f"\\{{{_gen_latex(a)}\\,{{}}_\\lambda\\,{_gen_latex(b)}\\}} = {v.latex()}"))
        return res
    e = s.require("kind")
    raise ParseError(f"unknown task kind {kind!r}", e.line, e.column)


def _density_fn(H):
    return hier.conserved_density if isinstance(H, hier.HierarchySetup) else disp.disp_density


# -- emitters ------------------------------------------------------------------

def emit_text(sc: Scenario, r: TaskResult) -> str:
    lines = [f"scenario: {sc.name}", f"task: {r.name}", f"kind: {r.kind}", f"status: {r.status}"]
    if r.status != "info":
        lines.append(f"expected: {r.expected}")
    for label, text, _ in r.items:
        lines.append(f"{label}: {text}")
    return "\n".join(lines) + "\n"


def emit_structured(sc: Scenario, r: TaskResult) -> str:
    data = {
        "scenario": sc.name,
        "task": r.name,
        "kind": r.kind,
        "status": r.status,
        "expected": r.expected,
        "items": [{"label": label, "value": text} for label, text, _ in r.items],
    }
    if r.report is not None:
        data["report"] = r.report.to_dict()
    return json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def emit_latex(sc: Scenario, r: TaskResult) -> str:
    out = [f"% scenario {sc.name}, task {r.name} ({r.kind}): {r.status}"]
    if r.kind in ("densities", "flows", "benney", "root", "lax", "brackets"):
        out.append("\\begin{align*}")
        body = []
        for label, _, tex in r.items:
            if label.startswith("golden") or label in ("checked", "mismatches"):
                continue
            body.append(tex.replace(" = ", " &= ", 1) if " = " in tex else f"{label} &= {tex}")
        out.append(" \\\\\n".join(body))
        out.append("\\end{align*}")
    else:
        out.append(f"\\text{{{r.kind}: {r.status}}}")
        for label, _, tex in r.items:
            out.append(f"% {label}: {tex}")
    return "\n".join(out) + "\n"


_EMITTERS = {"text": (emit_text, "txt"), "structured": (emit_structured, "json"),
             "latex": (emit_latex, "tex")}


# -- entry point ---------------------------------------------------------------

def load_expect_file(path: Path) -> dict[str, list[Entry]]:
    """Expectation lines grouped by task name: ``[task NAME]`` sections of ``expect ...`` entries."""
    out: dict[str, list[Entry]] = {}
    for s in parse_scenario_text(path.read_text()):
        if s.kind != "task":
            raise ParseError("expect files contain only [task NAME] sections", s.line, 1)
        out.setdefault(s.name, []).extend(s.entries)
    return out


def run(path: Path, output_dir: Path | None, formats: list[str], floor: int | None = None,
        window: tuple[int, int] | None = None, expect_file: Path | None = None,
        out=sys.stdout) -> int:
    text = path.read_text()
    sections = parse_scenario_text(text)
    sc = Scenario(sections, floor, window)
    extra = load_expect_file(expect_file) if expect_file else {}
    results = []
    for s in sc.tasks:
        results.append(run_task(sc, s, extra.get(s.name, [])))
    if output_dir is not None and results:
        output_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        for fmt in formats:
            fn, ext = _EMITTERS[fmt]
            body = fn(sc, r)
            if output_dir is not None:
                (output_dir / f"{r.name}.{ext}").write_text(body)
        mark = "ok" if r.ok else "UNEXPECTED"
        out.write(f"{r.name}: {r.status} (expected {r.expected if r.status != 'info' else 'info'}) {mark}\n")
        if output_dir is None and "text" in formats:
            out.write(emit_text(sc, r))
    return EXIT_OK if all(r.ok for r in results) else EXIT_MISMATCH


def bundled_scenarios() -> list[str]:
    base = resources.files("adlerpva") / "scenarios"
    return sorted(p.name for p in base.iterdir() if p.name.endswith(".scn"))


def _resolve(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    base = resources.files("adlerpva") / "scenarios"
    cand = base / name
    if not cand.is_file() and not name.endswith(".scn"):
        cand = base / f"{name}.scn"
    if cand.is_file():
        return Path(str(cand))
    raise FileNotFoundError(name)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="adlerpva", description="Adler identities and integrable hierarchies")
    sub = ap.add_subparsers(dest="cmd", required=True)
    rp = sub.add_parser("run", help="run a scenario file (or a bundled scenario by name)")
    rp.add_argument("scenario")
    rp.add_argument("-o", "--output-dir", type=Path)
    rp.add_argument("--format", default="text",
                    help="comma separated list of text, structured, latex")
    rp.add_argument("--floor", type=int, help="override the truncation depth")
    rp.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"),
                    help="override the z, w window of verification tasks")
    rp.add_argument("--expect-file", type=Path)
    sub.add_parser("list", help="list bundled scenarios")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.cmd == "list":
        for n in bundled_scenarios():
            print(n)
        return EXIT_OK
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    formats = ["structured" if f == "json" else f for f in formats]
    bad = [f for f in formats if f not in _EMITTERS]
    if bad or not formats:
        print(f"adlerpva: unknown format {', '.join(bad) or '(none)'}", file=sys.stderr)
        return EXIT_USAGE
    try:
        path = _resolve(args.scenario)
    except FileNotFoundError:
        print(f"adlerpva: no such scenario: {args.scenario}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(path, args.output_dir, formats, args.floor,
                   tuple(args.window) if args.window else None, args.expect_file)
    except ParseError as exc:
        print(f"{path}:{exc.line}:{exc.column}: parse error: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"{path}:{exc.line}:{exc.column}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AlgebraError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TruncationError as exc:
        print(f"adlerpva: truncation too shallow: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION


if __name__ == "__main__":
    sys.exit(main())
