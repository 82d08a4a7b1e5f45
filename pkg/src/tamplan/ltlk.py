"""Bounded-prefix LTL with arithmetic temporal terms.

Formulas are immutable trees. ``eval_formula`` is the reference semantics used
as the oracle for everything the encoder and planner produce.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

REAL = "real"
INTEGER = "integer"
BOOLEAN = "boolean"
SORTS = (REAL, INTEGER, BOOLEAN)

RELATIONS = ("<=", "<", "=", ">", ">=")

Value = Union[Fraction, int, bool]


class LtlkError(Exception):
    pass


class ParseError(LtlkError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UndeclaredVariable(LtlkError):
    def __init__(self, name: str):
        super().__init__(f"undeclared variable {name!r}")
        self.name = name


def as_fraction(x) -> Fraction:
    if isinstance(x, bool):
        raise TypeError("boolean is not a number")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(x)
    return Fraction(str(x))


# --------------------------------------------------------------------------
# variables and traces


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
_KEYWORDS = {"X", "U", "F", "G", "true", "false", "last"}


@dataclass(frozen=True)
class VarDecl:
    name: str
    sort: str
    low: Fraction | None = None
    high: Fraction | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name) or self.name in _KEYWORDS:
            raise LtlkError(f"invalid variable name {self.name!r}")
        if self.sort not in SORTS:
            raise LtlkError(f"unknown sort {self.sort!r}")
        if self.sort == BOOLEAN and (self.low is not None or self.high is not None):
            raise LtlkError(f"boolean variable {self.name!r} cannot have bounds")
        for attr in ("low", "high"):
            v = getattr(self, attr)
            if v is not None:
                object.__setattr__(self, attr, as_fraction(v))
        if self.low is not None and self.high is not None and self.low > self.high:
            raise LtlkError(f"bounds of {self.name!r} are inverted")

    @property
    def bounded(self) -> bool:
        return self.low is not None and self.high is not None

    def admits(self, value) -> bool:
        if self.sort == BOOLEAN:
            return isinstance(value, bool)
        if isinstance(value, bool):
            return False
        if self.sort == INTEGER and Fraction(value).denominator != 1:
            return False
        if self.low is not None and value < self.low:
            return False
        if self.high is not None and value > self.high:
            return False
        return True


@dataclass(frozen=True)
class VariableUniverse:
    decls: tuple[VarDecl, ...] = ()

    def __post_init__(self):
        names = [d.name for d in self.decls]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise LtlkError(f"duplicate variable names: {dup}")

    @classmethod
    def of(cls, *specs) -> "VariableUniverse":
        """Build from ``(name, sort)`` or ``(name, sort, low, high)`` tuples."""
        return cls(tuple(VarDecl(*s) if not isinstance(s, VarDecl) else s for s in specs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.decls)

    def __contains__(self, name: str) -> bool:
        return any(d.name == name for d in self.decls)

    def __getitem__(self, name: str) -> VarDecl:
        for d in self.decls:
            if d.name == name:
                return d
        raise UndeclaredVariable(name)

    def sort_of(self, name: str) -> str:
        return self[name].sort

    def extended(self, *decls: VarDecl) -> "VariableUniverse":
        return VariableUniverse(self.decls + tuple(decls))


def coerce_value(decl: VarDecl, value) -> Value:
    if decl.sort == BOOLEAN:
        if not isinstance(value, bool):
            raise LtlkError(f"{decl.name}: expected boolean, got {value!r}")
        return value
    if isinstance(value, bool):
        raise LtlkError(f"{decl.name}: expected number, got boolean")
    q = as_fraction(value)
    if decl.sort == INTEGER:
        if q.denominator != 1:
            raise LtlkError(f"{decl.name}: expected integer, got {value!r}")
        return int(q)
    return q


@dataclass(frozen=True)
class BoundedTrace:
    """Valuations for steps ``0..K`` of every variable in ``universe``."""

    universe: VariableUniverse
    steps: tuple[Mapping[str, Value], ...]

    def __post_init__(self):
        if not self.steps:
            raise LtlkError("a bounded trace needs at least one step")
        fixed = []
        for k, step in enumerate(self.steps):
            row = {}
            for decl in self.universe.decls:
                if decl.name not in step:
                    raise LtlkError(f"step {k} does not assign {decl.name!r}")
                v = coerce_value(decl, step[decl.name])
                if not decl.admits(v):
                    raise LtlkError(f"step {k}: {decl.name}={v} outside its domain")
                row[decl.name] = v
            fixed.append(_FrozenRow(row))
        object.__setattr__(self, "steps", tuple(fixed))

    @classmethod
    def from_columns(cls, universe: VariableUniverse, columns: Mapping[str, Sequence]) -> "BoundedTrace":
        lengths = {len(v) for v in columns.values()}
        if len(lengths) != 1:
            raise LtlkError("columns have different lengths")
        (n,) = lengths
        return cls(universe, tuple({name: columns[name][k] for name in columns} for k in range(n)))

    @property
    def K(self) -> int:
        return len(self.steps) - 1

    def value(self, name: str, k: int) -> Value:
        return self.steps[k][name]

    def column(self, name: str) -> list[Value]:
        return [s[name] for s in self.steps]

    def appended(self, step: Mapping[str, Value]) -> "BoundedTrace":
        return BoundedTrace(self.universe, self.steps + (step,))


class _FrozenRow(dict):
    def __hash__(self):
        return hash(tuple(sorted(self.items())))

    def _readonly(self, *a, **kw):
        raise TypeError("trace rows are immutable")

    __setitem__ = __delitem__ = update = pop = popitem = clear = setdefault = _readonly


# --------------------------------------------------------------------------
# syntax


@dataclass(frozen=True)
class TemporalTerm:
    name: str
    nexts: int = 0

    def __post_init__(self):
        if self.nexts < 0:
            raise LtlkError("a temporal term cannot have a negative next count")

    def __str__(self):
        return "X " * self.nexts + self.name


class Formula:
    """Base class of the formula AST."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)

    # operator sugar for building formulas in code
    def __and__(self, other: "Formula") -> "Formula":
        return And((self, other))

    def __or__(self, other: "Formula") -> "Formula":
        return Or((self, other))

    def __invert__(self) -> "Formula":
        return Not(self)

    def __rshift__(self, other: "Formula") -> "Formula":
        return Implies(self, other)


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True)
class Last(Formula):
    pass


TRUE = Top()
FALSE = Bottom()
LAST = Last()


@dataclass(frozen=True)
class BoolAtom(Formula):
    name: str


@dataclass(frozen=True)
class LinearAtom(Formula):
    """``sum(coeffs[i] * terms[i]) rel const``."""

    coeffs: tuple[Fraction, ...]
    terms: tuple[TemporalTerm, ...]
    rel: str
    const: Fraction

    def __post_init__(self):
        if len(self.coeffs) != len(self.terms) or not self.terms:
            raise LtlkError("a linear atom needs matching, non-empty coefficient and term vectors")
        if self.rel not in RELATIONS:
            raise LtlkError(f"unknown relation {self.rel!r}")
        object.__setattr__(self, "coeffs", tuple(as_fraction(c) for c in self.coeffs))
        object.__setattr__(self, "const", as_fraction(self.const))


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    arg: Formula


@dataclass(frozen=True)
class Always(Formula):
    arg: Formula


def linear(pairs: Iterable[tuple[object, TemporalTerm | str]], rel: str, const) -> Formula:
    """Linear atom from ``(coefficient, term)`` pairs, merging repeated terms.

    Degenerate atoms whose coefficients all cancel collapse to TRUE/FALSE.
    """
    merged: dict[TemporalTerm, Fraction] = {}
    for c, t in pairs:
        if isinstance(t, str):
            t = TemporalTerm(t)
        merged[t] = merged.get(t, Fraction(0)) + as_fraction(c)
    merged = {t: c for t, c in merged.items() if c != 0}
    if not merged:
        return TRUE if compare(Fraction(0), rel, as_fraction(const)) else FALSE
    return LinearAtom(tuple(merged.values()), tuple(merged.keys()), rel, as_fraction(const))


def var(name: str, nexts: int = 0) -> TemporalTerm:
    return TemporalTerm(name, nexts)


def eq(name: str, value, nexts: int = 0) -> Formula:
    """``name = value``; for booleans the literal ``name`` / ``!name``."""
    if isinstance(value, bool):
        atom = BoolAtom(name)
        if nexts:
            for _ in range(nexts):
                atom = Next(atom)
        return atom if value else Not(atom)
    return linear([(1, TemporalTerm(name, nexts))], "=", value)


def conj(*args: Formula) -> Formula:
    flat = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        elif isinstance(a, Top):
            continue
        else:
            flat.append(a)
    if any(isinstance(a, Bottom) for a in flat):
        return FALSE
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*args: Formula) -> Formula:
    flat = []
    for a in args:
        if isinstance(a, Or):
            flat.extend(a.args)
        elif isinstance(a, Bottom):
            continue
        else:
            flat.append(a)
    if any(isinstance(a, Top) for a in flat):
        return TRUE
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def children(phi: Formula) -> tuple[Formula, ...]:
    if isinstance(phi, (Not, Next, Eventually, Always)):
        return (phi.arg,)
    if isinstance(phi, (And, Or)):
        return phi.args
    if isinstance(phi, (Implies, Until)):
        return (phi.left, phi.right)
    return ()


def variables(phi: Formula) -> set[str]:
    out: set[str] = set()
    stack = [phi]
    while stack:
        f = stack.pop()
        if isinstance(f, BoolAtom):
            out.add(f.name)
        elif isinstance(f, LinearAtom):
            out.update(t.name for t in f.terms)
        stack.extend(children(f))
    return out


def is_temporal(phi: Formula) -> bool:
    stack = [phi]
    while stack:
        f = stack.pop()
        if isinstance(f, (Next, Until, Eventually, Always, Last)):
            return True
        if isinstance(f, LinearAtom) and any(t.nexts for t in f.terms):
            return True
        stack.extend(children(f))
    return False


def normalize(phi: Formula) -> Formula:
    """Flatten nested And/Or and drop degenerate arities; used for round-trip checks."""
    if isinstance(phi, And):
        return conj(*(normalize(a) for a in phi.args))
    if isinstance(phi, Or):
        return disj(*(normalize(a) for a in phi.args))
    if isinstance(phi, Not):
        return Not(normalize(phi.arg))
    if isinstance(phi, Next):
        return Next(normalize(phi.arg))
    if isinstance(phi, Eventually):
        return Eventually(normalize(phi.arg))
    if isinstance(phi, Always):
        return Always(normalize(phi.arg))
    if isinstance(phi, Implies):
        return Implies(normalize(phi.left), normalize(phi.right))
    if isinstance(phi, Until):
        return Until(normalize(phi.left), normalize(phi.right))
    return phi


# --------------------------------------------------------------------------
# printing


def _num(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _atom_text(a: LinearAtom) -> str:
    parts = []
    for i, (c, t) in enumerate(zip(a.coeffs, a.terms)):
        if i == 0:
            parts.append(f"{_num(c)}*{t}")
        elif c < 0:
            parts.append(f" - {_num(-c)}*{t}")
        else:
            parts.append(f" + {_num(c)}*{t}")
    return f"{''.join(parts)} {a.rel} {_num(a.const)}"


def to_text(phi: Formula) -> str:
    """Fully parenthesized surface syntax; ``parse_formula`` inverts it."""
    if isinstance(phi, Top):
        return "true"
    if isinstance(phi, Bottom):
        return "false"
    if isinstance(phi, Last):
        return "last"
    if isinstance(phi, BoolAtom):
        return phi.name
    if isinstance(phi, LinearAtom):
        return f"({_atom_text(phi)})"
    if isinstance(phi, Not):
        return f"!{to_text(phi.arg)}"
    if isinstance(phi, Next):
        return f"X {to_text(phi.arg)}"
    if isinstance(phi, Eventually):
        return f"F {to_text(phi.arg)}"
    if isinstance(phi, Always):
        return f"G {to_text(phi.arg)}"
    if isinstance(phi, And):
        if not phi.args:
            return "true"
        return "(" + " && ".join(to_text(a) for a in phi.args) + ")"
    if isinstance(phi, Or):
        if not phi.args:
            return "false"
        return "(" + " || ".join(to_text(a) for a in phi.args) + ")"
    if isinstance(phi, Implies):
        return f"({to_text(phi.left)} -> {to_text(phi.right)})"
    if isinstance(phi, Until):
        return f"({to_text(phi.left)} U {to_text(phi.right)})"
    raise TypeError(f"not a formula: {phi!r}")


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<op>->|&&|\|\||<=|>=|[<>=!()+\-*/])
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, s, line, col))
        for ch in s:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, text: str, universe: VariableUniverse):
        self.toks = _tokenize(text)
        self.i = 0
        self.universe = universe

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self) -> Formula:
        phi = self.implication()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return phi

    # precedence: unary > U > && > || > ->  (-> is right associative)
    def implication(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        args = [self.conjunction()]
        while self.accept("||"):
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self) -> Formula:
        args = [self.until()]
        while self.accept("&&"):
            args.append(self.until())
        return args[0] if len(args) == 1 else And(tuple(args))

    def until(self) -> Formula:
        left = self.unary()
        if self.accept("U"):
            return Until(left, self.until())
        return left

    def unary(self) -> Formula:
        start = self.i
        try:
            return self.atom()
        except _Backtrack:
            self.i = start
        tok = self.tok
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("X"):
            return Next(self.unary())
        if self.accept("F"):
            return Eventually(self.unary())
        if self.accept("G"):
            return Always(self.unary())
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.accept("last"):
            return LAST
        if self.accept("("):
            phi = self.implication()
            if not self.accept(")"):
                found = self.tok.text or "end of input"
                raise self.error(f"unbalanced parenthesis opened at line {tok.line}, "
                                 f"column {tok.col}; found {found!r}")
            return phi
        if tok.kind == "ident":
            self.i += 1
            decl = self._decl(tok)
            if decl.sort != BOOLEAN:
                raise self.error(f"{tok.text!r} is {decl.sort}-valued and needs a relation", tok)
            return BoolAtom(tok.text)
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}", tok)

    def _decl(self, tok: _Tok) -> VarDecl:
        if tok.text not in self.universe:
            raise UndeclaredVariable(tok.text)
        return self.universe[tok.text]

    # linear atoms: lin rel lin.  Raises _Backtrack when the input is not an atom.
    def atom(self) -> Formula:
        lhs = self.linexpr()
        if self.tok.kind == "op" and self.tok.text in RELATIONS:
            rel = self.tok.text
            self.i += 1
        else:
            raise _Backtrack
        try:
            rhs = self.linexpr()
        except _Backtrack:
            raise self.error("expected an arithmetic expression after the relation")
        pairs = list(lhs[0]) + [(-c, t) for c, t in rhs[0]]
        return linear(pairs, rel, rhs[1] - lhs[1])

    def linexpr(self):
        pairs: list[tuple[Fraction, TemporalTerm]] = []
        const = Fraction(0)
        sign = 1
        while True:
            if self.accept("-"):
                sign = -sign
                continue
            coeff, term = self.product()
            if term is None:
                const += sign * coeff
            else:
                pairs.append((sign * coeff, term))
            if self.accept("+"):
                sign = 1
            elif self.accept("-"):
                sign = -1
            else:
                return pairs, const

    def product(self):
        coeff = Fraction(1)
        term = None
        seen = False
        while True:
            if self.tok.kind == "num":
                coeff *= self.number()
                seen = True
            elif self.tok.text == "X" or (self.tok.kind == "ident" and self.tok.text not in _KEYWORDS):
                if term is not None:
                    raise self.error("nonlinear product of variables")
                term = self.term()
                seen = True
            else:
                raise _Backtrack
            if not self.accept("*"):
                return coeff, term

    def number(self) -> Fraction:
        q = Fraction(self.tok.text)
        self.i += 1
        if self.tok.text == "/" and self.toks[self.i + 1].kind == "num":
            self.i += 1
            q /= Fraction(self.tok.text)
            self.i += 1
        return q

    def term(self) -> TemporalTerm:
        nexts = 0
        while self.tok.text == "X" and self.tok.kind == "ident":
            nexts += 1
            self.i += 1
        tok = self.tok
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            raise _Backtrack
        decl = self._decl(tok)
        if decl.sort == BOOLEAN:
            raise _Backtrack
        self.i += 1
        return TemporalTerm(tok.text, nexts)


def parse_formula(text: str, universe: VariableUniverse) -> Formula:
    """Parse surface syntax such as ``G (x <= 3) && F (X x = 1)``."""
    return _Parser(text, universe).parse()


# --------------------------------------------------------------------------
# semantics


def compare(lhs, rel: str, rhs) -> bool:
    if rel == "<=":
        return lhs <= rhs
    if rel == "<":
        return lhs < rhs
    if rel == "=":
        return lhs == rhs
    if rel == ">":
        return lhs > rhs
    if rel == ">=":
        return lhs >= rhs
    raise LtlkError(f"unknown relation {rel!r}")


def eval_term(term: TemporalTerm, trace: BoundedTrace, k: int) -> Value:
    if not 0 <= k <= trace.K:
        raise LtlkError(f"instant {k} outside [0, {trace.K}]")
    return trace.value(term.name, min(k + term.nexts, trace.K))


def eval_formula(phi: Formula, trace: BoundedTrace, k: int = 0) -> bool:
    if not 0 <= k <= trace.K:
        raise LtlkError(f"instant {k} outside [0, {trace.K}]")
    return _Evaluator(trace).holds(phi, k)


def satisfies_prefix(phi: Formula, trace: BoundedTrace) -> bool:
    return eval_formula(phi, trace, 0)


class _Evaluator:
    def __init__(self, trace: BoundedTrace):
        self.trace = trace
        self.K = trace.K
        self.memo: dict[tuple[int, int], bool] = {}

    def holds(self, phi: Formula, k: int) -> bool:
        key = (id(phi), k)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._holds(phi, k)
        return hit

    def _holds(self, phi: Formula, k: int) -> bool:
        K = self.K
        if isinstance(phi, Top):
            return True
        if isinstance(phi, Bottom):
            return False
        if isinstance(phi, Last):
            return k == K
        if isinstance(phi, BoolAtom):
            return self.trace.value(phi.name, k)
        if isinstance(phi, LinearAtom):
            total = sum(c * eval_term(t, self.trace, k) for c, t in zip(phi.coeffs, phi.terms))
            return compare(total, phi.rel, phi.const)
        if isinstance(phi, Not):
            return not self.holds(phi.arg, k)
        if isinstance(phi, And):
            return all(self.holds(a, k) for a in phi.args)
        if isinstance(phi, Or):
            return any(self.holds(a, k) for a in phi.args)
        if isinstance(phi, Implies):
            return not self.holds(phi.left, k) or self.holds(phi.right, k)
        if isinstance(phi, Next):
            # the last state loops on itself
            return self.holds(phi.arg, min(k + 1, K))
        if isinstance(phi, Until):
            return any(
                self.holds(phi.right, i) and all(self.holds(phi.left, j) for j in range(k, i))
                for i in range(k, K + 1)
            )
        if isinstance(phi, Eventually):
            return any(self.holds(phi.arg, i) for i in range(k, K + 1))
        if isinstance(phi, Always):
            return all(self.holds(phi.arg, i) for i in range(k, K + 1))
        raise TypeError(f"not a formula: {phi!r}")
