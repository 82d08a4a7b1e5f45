"""Exact feasibility of small systems of linear inequalities.

Fourier-Motzkin elimination over ``Fraction``; strict and non-strict rows are
tracked separately so open and closed regions are decided without tolerances.
The planner only ever asks questions in one or two unknowns, where the
quadratic growth of elimination is harmless.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Ineq:
    """``coeffs . x < bound`` when ``strict`` else ``coeffs . x <= bound``."""

    coeffs: tuple[Fraction, ...]
    bound: Fraction
    strict: bool = False

    @classmethod
    def of(cls, coeffs: Sequence, bound, strict: bool = False) -> "Ineq":
        return cls(tuple(Fraction(c) for c in coeffs), Fraction(bound), strict)


def _normalized(row: Ineq) -> Ineq:
    # scale so the first nonzero coefficient has magnitude 1; lets duplicates collapse
    for c in row.coeffs:
        if c != 0:
            s = abs(c)
            return Ineq(tuple(x / s for x in row.coeffs), row.bound / s, row.strict)
    return row


def _dedupe(rows: Iterable[Ineq]) -> list[Ineq]:
    best: dict[tuple[Fraction, ...], Ineq] = {}
    for r in rows:
        r = _normalized(r)
        cur = best.get(r.coeffs)
        if cur is None or r.bound < cur.bound or (r.bound == cur.bound and r.strict and not cur.strict):
            best[r.coeffs] = r
    return list(best.values())


def feasible(rows: Sequence[Ineq], nvars: int | None = None) -> bool:
    """True iff some real point satisfies every row."""
    rows = list(rows)
    if nvars is None:
        nvars = len(rows[0].coeffs) if rows else 0
    for r in rows:
        if len(r.coeffs) != nvars:
            raise ValueError("rows have inconsistent dimension")
    for v in reversed(range(nvars)):
        pos, neg, rest = [], [], []
        for r in rows:
            c = r.coeffs[v]
            (pos if c > 0 else neg if c < 0 else rest).append(r)
        for p in pos:
            for n in neg:
                sp, sn = p.coeffs[v], -n.coeffs[v]
                coeffs = tuple(a / sp + b / sn for a, b in zip(p.coeffs, n.coeffs))
                rest.append(Ineq(coeffs, p.bound / sp + n.bound / sn, p.strict or n.strict))
        rows = _dedupe(rest)
    for r in rows:
        if r.strict and not r.bound > 0:
            return False
        if not r.strict and r.bound < 0:
            return False
    return True


def bounded(rows: Sequence[Ineq], nvars: int) -> bool:
    """True iff the recession cone of a nonempty system is ``{0}``.

    The cone is scale invariant, so it is nontrivial iff it meets one of the
    half-spaces ``x_i >= 1`` or ``x_i <= -1``.
    """
    cone = [Ineq(r.coeffs, Fraction(0), False) for r in rows]
    for i in range(nvars):
        for sign in (1, -1):
            unit = [Fraction(0)] * nvars
            unit[i] = Fraction(-sign)
            if feasible(cone + [Ineq(tuple(unit), Fraction(-1))], nvars):
                return False
    return True
