"""Parsing of linear expressions and constraints written as text.

Accepted expression syntax: signed terms joined by ``+``/``-``, where each
term is a number, a name, or ``number [*] name``. Names may contain letters,
digits and ``_ ~ . [ ]`` but may not start with a digit or a period.
"""

from __future__ import annotations

import re

from .problem import Constraint, LinearExpr, abs_le

_NUMBER = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(
    rf"\s*(?:(?P<num>{_NUMBER})|(?P<inf>(?i:infinity|inf)\b)|(?P<name>[A-Za-z_~\[\]][A-Za-z0-9_~.\[\]]*)"
    r"|(?P<op>[-+*]))"
)
_SENSE = re.compile(r"<=|>=|==|=<|=>|=|<|>")
_SENSE_CANON = {"<=": "<=", "=<": "<=", "<": "<=", ">=": ">=", "=>": ">=", ">": ">=", "==": "==", "=": "=="}


class ParseError(ValueError):
    pass


def tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r} in {text!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def parse_number(text: str) -> float:
    t = text.strip().lower()
    sign = 1.0
    if t[:1] in "+-":
        sign = -1.0 if t[0] == "-" else 1.0
        t = t[1:].strip()
    if t in ("inf", "infinity"):
        return sign * float("inf")
    try:
        return sign * float(t)
    except ValueError:
        raise ParseError(f"not a number: {text!r}") from None


def parse_linear(text: str) -> LinearExpr:
    """Parse ``"3 x - 2.5*y + 4"`` into a :class:`LinearExpr`."""
    tokens = tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    terms: dict[str, float] = {}
    constant = 0.0
    i = 0
    expect_term = True
    sign = 1.0
    while i < len(tokens):
        kind, val = tokens[i]
        if kind == "op" and val in "+-":
            sign *= -1.0 if val == "-" else 1.0
            expect_term = True
            i += 1
            continue
        if not expect_term:
            raise ParseError(f"missing operator before {val!r} in {text!r}")
        coef = sign
        if kind in ("num", "inf"):
            coef *= parse_number(val)
            i += 1
            if i < len(tokens) and tokens[i] == ("op", "*"):
                i += 1
                if i >= len(tokens) or tokens[i][0] != "name":
                    raise ParseError(f"expected a name after '*' in {text!r}")
            if i < len(tokens) and tokens[i][0] == "name":
                name = tokens[i][1]
                terms[name] = terms.get(name, 0.0) + coef
                i += 1
            else:
                constant += coef
        elif kind == "name":
            terms[val] = terms.get(val, 0.0) + coef
            i += 1
        else:
            raise ParseError(f"unexpected {val!r} in {text!r}")
        sign = 1.0
        expect_term = False
    if expect_term:
        raise ParseError(f"expression ends with an operator: {text!r}")
    return LinearExpr(terms, constant)


def split_sense(text: str) -> tuple[str, str, str]:
    """Split ``"lhs <= rhs"`` into its three parts (sense canonicalized)."""
    m = _SENSE.search(text)
    if not m:
        raise ParseError(f"no comparison operator in {text!r}")
    if _SENSE.search(text, m.end()):
        raise ParseError(f"more than one comparison operator in {text!r}")
    return text[:m.start()], _SENSE_CANON[m.group()], text[m.end():]


def parse_constraint(text: str, name: str = "") -> Constraint:
    """Parse ``"x + y <= 3"`` or ``"abs(x - y) <= 1"``."""
    stripped = text.strip()
    m = re.fullmatch(r"abs\s*\((.*)\)\s*<=(.*)", stripped)
    if m:
        return abs_le(parse_linear(m.group(1)), parse_linear(m.group(2)), name)
    lhs, sense, rhs = split_sense(stripped)
    return Constraint(parse_linear(lhs), sense, parse_linear(rhs), name)
