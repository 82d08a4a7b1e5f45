"""Unrolling of bounded formulas into quantifier-free linear arithmetic."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Union

from ..ltlk import (
    BOOLEAN,
    INTEGER,
    Always,
    And,
    BoolAtom,
    Bottom,
    Eventually,
    Formula,
    Implies,
    Last,
    LinearAtom,
    LtlkError,
    Next,
    Not,
    Or,
    Top,
    Until,
    VariableUniverse,
    compare,
    variables,
)

log = logging.getLogger(__name__)

SExpr = Union[str, tuple]

SMT_SORT = {"real": "Real", "integer": "Int", "boolean": "Bool"}


def symbol(name: str, k: int) -> str:
    return f"{name}__{k}"


@dataclass(frozen=True)
class ConstraintSystem:
    K: int
    universe: VariableUniverse
    declarations: tuple[tuple[str, str], ...]  # (symbol, SMT sort)
    assertions: tuple[SExpr, ...]
    logic: str

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.declarations)

    def referenced(self) -> set[str]:
        out: set[str] = set()
        declared = set(self.symbols)
        stack = list(self.assertions)
        while stack:
            e = stack.pop()
            if isinstance(e, tuple):
                stack.extend(e)
            elif e in declared:
                out.add(e)
        return out


def _real_lit(q: Fraction) -> str:
    mag = abs(q)
    body = f"{mag.numerator}.0" if mag.denominator == 1 else f"(/ {mag.numerator}.0 {mag.denominator}.0)"
    return f"(- {body})" if q < 0 else body


def _int_lit(n: int) -> str:
    return f"(- {-n})" if n < 0 else str(n)


def _nary(op: str, args: list, unit: str) -> SExpr:
    args = [a for a in args if a != unit]
    if not args:
        return unit
    return args[0] if len(args) == 1 else (op, *args)


class _Unroller:
    def __init__(self, universe: VariableUniverse, K: int):
        self.universe = universe
        self.K = K
        self.labels: dict[tuple[Formula, int], str] = {}
        self.label_ids: dict[Formula, int] = {}
        self.definitions: list[SExpr] = []

    def _label(self, phi: Formula, k: int) -> str:
        ident = self.label_ids.setdefault(phi, len(self.label_ids))
        return f"_L{ident}__{k}"

    def lit(self, phi: Formula, k: int) -> SExpr:
        if isinstance(phi, Top):
            return "true"
        if isinstance(phi, Bottom):
            return "false"
        if isinstance(phi, Last):
            return "true" if k == self.K else "false"
        if isinstance(phi, BoolAtom):
            return symbol(phi.name, k)
        if isinstance(phi, LinearAtom):
            return self.atom(phi, k)
        if isinstance(phi, Not):
            inner = self.lit(phi.arg, k)
            if inner == "true":
                return "false"
            if inner == "false":
                return "true"
            return ("not", inner)
        if isinstance(phi, Next):
            return self.lit(phi.arg, min(k + 1, self.K))
        key = (phi, k)
        hit = self.labels.get(key)
        if hit is not None:
            return hit
        body = self._body(phi, k)
        name = self._label(phi, k)
        self.labels[key] = name
        self.definitions.append(("=", name, body))
        return name

    def _body(self, phi: Formula, k: int) -> SExpr:
        K = self.K
        if isinstance(phi, And):
            return _nary("and", [self.lit(a, k) for a in phi.args], "true")
        if isinstance(phi, Or):
            return _nary("or", [self.lit(a, k) for a in phi.args], "false")
        if isinstance(phi, Implies):
            return ("=>", self.lit(phi.left, k), self.lit(phi.right, k))
        if isinstance(phi, Until):
            # later instants first keeps the recursion depth at the formula depth
            for i in range(K, k, -1):
                self.lit(phi, i)
            if k == K:
                return self.lit(phi.right, k)
            return ("or", self.lit(phi.right, k), ("and", self.lit(phi.left, k), self.lit(phi, k + 1)))
        if isinstance(phi, Eventually):
            for i in range(K, k, -1):
                self.lit(phi, i)
            if k == K:
                return self.lit(phi.arg, k)
            return ("or", self.lit(phi.arg, k), self.lit(phi, k + 1))
        if isinstance(phi, Always):
            for i in range(K, k, -1):
                self.lit(phi, i)
            if k == K:
                return self.lit(phi.arg, k)
            return ("and", self.lit(phi.arg, k), self.lit(phi, k + 1))
        raise TypeError(f"not a formula: {phi!r}")

    def atom(self, a: LinearAtom, k: int) -> SExpr:
        merged: dict[str, Fraction] = {}
        for c, t in zip(a.coeffs, a.terms):
            s = symbol(t.name, min(k + t.nexts, self.K))
            merged[s] = merged.get(s, Fraction(0)) + c
        merged = {s: c for s, c in merged.items() if c != 0}
        if not merged:
            return "true" if compare(Fraction(0), a.rel, a.const) else "false"
        sorts = {t.name: self.universe.sort_of(t.name) for t in a.terms}
        integral = all(s == INTEGER for s in sorts.values())
        const = a.const
        if integral:
            scale = lcm(*(c.denominator for c in merged.values()), const.denominator)
            merged = {s: c * scale for s, c in merged.items()}
            const = const * scale
            lit = lambda q: _int_lit(int(q))
            ref = lambda s: s
        else:
            int_syms = {symbol(n, j) for n, srt in sorts.items() if srt == INTEGER for j in range(self.K + 1)}
            lit = _real_lit
            ref = lambda s: ("to_real", s) if s in int_syms else s
        terms = []
        for s, c in merged.items():
            terms.append(ref(s) if c == 1 else ("*", lit(c), ref(s)))
        lhs = terms[0] if len(terms) == 1 else ("+", *terms)
        return (a.rel, lhs, lit(const))


def encode(phi: Formula, K: int, universe: VariableUniverse) -> ConstraintSystem:
    """Unroll ``phi`` over instants ``0..K``; satisfiable iff some trace satisfies it at 0."""
    if K < 1:
        raise ValueError("horizon must be at least 1")
    for name in variables(phi):
        if name not in universe:
            raise LtlkError(f"formula mentions undeclared variable {name!r}")
    unbounded = [d.name for d in universe.decls if d.sort == INTEGER and not d.bounded]
    if unbounded:
        log.warning("integer variables without bounds (%s): finite-domain completeness does not apply",
                    ", ".join(unbounded))
    u = _Unroller(universe, K)
    top = u.lit(phi, 0)
    declarations = [(symbol(d.name, k), SMT_SORT[d.sort]) for d in universe.decls for k in range(K + 1)]
    declarations += [(name, "Bool") for name in u.labels.values()]
    bounds: list[SExpr] = []
    for d in universe.decls:
        if d.sort == BOOLEAN:
            continue
        if d.sort == INTEGER:
            low = None if d.low is None else _int_lit(math.ceil(d.low))
            high = None if d.high is None else _int_lit(math.floor(d.high))
        else:
            low = None if d.low is None else _real_lit(d.low)
            high = None if d.high is None else _real_lit(d.high)
        for k in range(K + 1):
            s = symbol(d.name, k)
            if low is not None:
                bounds.append((">=", s, low))
            if high is not None:
                bounds.append(("<=", s, high))
    sorts = {d.sort for d in universe.decls}
    if "real" in sorts and INTEGER in sorts:
        logic = "QF_LIRA"
    elif "real" in sorts:
        logic = "QF_LRA"
    else:
        logic = "QF_LIA"
    assertions = tuple(bounds) + tuple(u.definitions) + (top,)
    return ConstraintSystem(K, universe, tuple(declarations), assertions, logic)
