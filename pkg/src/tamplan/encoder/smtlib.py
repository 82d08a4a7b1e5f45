"""SMT-LIB 2 text: emission of constraint systems and parsing of solver responses."""

from __future__ import annotations

from fractions import Fraction

from .compile import ConstraintSystem, SExpr


class SExprError(ValueError):
    pass


def render(e: SExpr) -> str:
    if isinstance(e, tuple):
        return "(" + " ".join(render(x) for x in e) + ")"
    return e


def emit_smtlib(cs: ConstraintSystem) -> str:
    lines = [
        "(set-option :produce-models true)",
        f"(set-logic {cs.logic})",
    ]
    lines += [f"(declare-fun {name} () {sort})" for name, sort in cs.declarations]
    lines += [f"(assert {render(a)})" for a in cs.assertions]
    lines += ["(check-sat)", "(get-model)", ""]
    return "\n".join(lines)


def tokenize(text: str) -> list[str]:
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            out.append(ch)
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            out.append(text[i:j + 1])
            i = j + 1
        elif ch == "|":
            j = text.index("|", i + 1)
            out.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"':
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_all(text: str) -> list[SExpr]:
    toks = tokenize(text)
    pos = 0
    result = []

    def one():
        nonlocal pos
        if pos >= len(toks):
            raise SExprError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise SExprError("unbalanced parenthesis")
                if toks[pos] == ")":
                    pos += 1
                    return tuple(items)
                items.append(one())
        if t == ")":
            raise SExprError("unexpected ')'")
        return t

    while pos < len(toks):
        result.append(one())
    return result


def eval_value(e: SExpr):
    """Value of a model term: numerals, decimals, ``-``, ``/``, ``to_real`` and booleans."""
    if isinstance(e, str):
        if e == "true":
            return True
        if e == "false":
            return False
        try:
            return Fraction(e)
        except ValueError:
            raise SExprError(f"not a value: {e}") from None
    if not e:
        raise SExprError("empty term")
    head, *args = e
    vals = [eval_value(a) for a in args]
    if head == "-" and len(vals) == 1:
        return -vals[0]
    if head == "-":
        return vals[0] - sum(vals[1:])
    if head == "+":
        return sum(vals)
    if head == "/" and len(vals) == 2:
        return Fraction(vals[0]) / vals[1]
    if head == "to_real" and len(vals) == 1:
        return vals[0]
    raise SExprError(f"unsupported model term {render(e)}")


def parse_model(exprs) -> dict[str, object]:
    """Collect ``define-fun`` entries from a ``get-model`` response (any nesting)."""
    model = {}
    stack = list(exprs)
    while stack:
        e = stack.pop()
        if not isinstance(e, tuple) or not e:
            continue
        if e[0] == "define-fun":
            if len(e) != 5 or e[2] != ():
                raise SExprError(f"unsupported definition {render(e)}")
            name, sort, body = e[1], e[3], e[4]
            v = eval_value(body)
            if sort == "Int":
                if not isinstance(v, Fraction) or v.denominator != 1:
                    raise SExprError(f"non-integer value for {name}")
                v = int(v)
            model[name.strip("|")] = v
        else:
            stack.extend(e)
    return model
