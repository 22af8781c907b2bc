"""Writer and reader for the textual LP file format.

Variable and row names are escaped into the format's safe subset: any
character outside ``[A-Za-z0-9_]`` becomes ``~HH`` (its hex code point, or
``~{HHHH}`` beyond one byte), as does a leading digit or a leading ``e``/``E``
that a reader could mistake for an exponent. Decoding reverses it exactly.
"""

from __future__ import annotations

import math
import re

from ..linparse import ParseError, parse_linear, parse_number
from ..problem import (
    BINARY,
    CONTINUOUS,
    INTEGER,
    MAXIMIZE,
    MINIMIZE,
    Constraint,
    LinearExpr,
)
from .model import Milp

_SAFE = re.compile(r"[A-Za-z0-9_]")
_TERMS_PER_LINE = 8


def escape_name(name: str) -> str:
    out = []
    for i, ch in enumerate(name):
        risky_start = i == 0 and (ch.isdigit() or ch in "eE")
        if _SAFE.fullmatch(ch) and not risky_start:
            out.append(ch)
        elif ord(ch) < 256:
            out.append(f"~{ord(ch):02X}")
        else:
            out.append(f"~{{{ord(ch):X}}}")
    return "".join(out) if out else "~"


def unescape_name(text: str) -> str:
    if text == "~":
        return ""

    def repl(m):
        return chr(int(m.group(1) or m.group(2), 16))

    return re.sub(r"~(?:\{([0-9A-Fa-f]+)\}|([0-9A-Fa-f]{2}))", repl, text)


def format_number(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _format_terms(terms: dict[str, float], constant: float = 0.0) -> list[str]:
    pieces = []
    for k, (name, coef) in enumerate(terms.items()):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = escape_name(name) if mag == 1.0 else f"{format_number(mag)} {escape_name(name)}"
        if k == 0:
            pieces.append(body if sign == "+" else f"- {body}")
        else:
            pieces.append(f"{sign} {body}")
    if constant:
        c = format_number(abs(constant))
        pieces.append((("- " if constant < 0 else "+ ") if pieces else ("-" if constant < 0 else "")) + c)
    return pieces


def _wrap(prefix: str, pieces: list[str], suffix: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(pieces), 1), _TERMS_PER_LINE):
        chunk = " ".join(pieces[k:k + _TERMS_PER_LINE])
        lines.append(("   " if k else prefix) + chunk)
    lines[-1] += suffix
    return lines


def export_lp_format(milp: Milp) -> str:
    names = milp.names
    lines = ["\\ written by cnma", "Maximize" if milp.sense == MAXIMIZE else "Minimize"]
    obj = _format_terms(milp.objective.terms, milp.objective.constant)
    if not milp.objective.terms:
        obj = [f"0 {escape_name(names[0])}"] + obj if names else ["0"]
    lines += _wrap(" obj: ", obj)

    lines.append("Subject To")
    used = set()
    for i, con in enumerate(milp.constraints):
        for row in con.linearized():
            diff = row.lhs - row.rhs
            label = row.name if row.name and row.name not in used else f"r{i}"
            while label in used:
                label += "_"
            used.add(label)
            pieces = _format_terms(diff.terms)
            if not pieces:
                pieces = [f"0 {escape_name(names[0])}"]
            sense = "=" if row.sense == "==" else row.sense
            lines += _wrap(f" {escape_name(label)}: ", pieces, f" {sense} {format_number(-diff.constant)}")

    lines.append("Bounds")
    for v in milp.vars:
        n = escape_name(v.name)
        if v.kind == BINARY and v.lower == 0 and v.upper == 1:
            continue
        if v.lower == v.upper:
            lines.append(f" {n} = {format_number(v.lower)}")
        elif math.isinf(v.lower) and math.isinf(v.upper):
            lines.append(f" {n} free")
        elif math.isinf(v.upper):
            lines.append(f" {n} >= {format_number(v.lower)}")
        else:
            lines.append(f" {format_number(v.lower)} <= {n} <= {format_number(v.upper)}")

    generals = [escape_name(v.name) for v in milp.vars if v.kind == INTEGER]
    if generals:
        lines.append("Generals")
        lines += _wrap(" ", generals)
    binaries = [escape_name(v.name) for v in milp.vars if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        lines += _wrap(" ", binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


_SECTIONS = {
    "maximize": "max", "maximum": "max", "max": "max", "maximise": "max",
    "minimize": "min", "minimum": "min", "min": "min", "minimise": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "gen": "gen", "integers": "gen",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "end": "end",
}
_ROW = re.compile(r"^\s*(?:([^:<>=]+?)\s*:)?\s*(.*?)\s*(<=|>=|=<|=>|=|<|>)\s*(\S+)\s*$")


def _decode_expr(text: str) -> LinearExpr:
    e = parse_linear(text)
    return LinearExpr({unescape_name(k): v for k, v in e.terms.items()}, e.constant)


def read_lp_format(text: str) -> Milp:
    """Parse LP-format text (as written by :func:`export_lp_format`) into a Milp."""
    section = None
    sense = None
    chunks: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "gen": [], "bin": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key is not None:
            if key in ("max", "min"):
                sense = MAXIMIZE if key == "max" else MINIMIZE
                section = "obj"
            elif key == "end":
                section = "done"
            else:
                section = key
            continue
        if section is None or section == "done":
            raise ParseError(f"content outside a section: {line!r}")
        chunks[section].append(line)
    if sense is None:
        raise ParseError("missing Maximize/Minimize section")

    order: list[str] = []
    seen = set()

    def touch(names):
        for n in names:
            if n not in seen:
                seen.add(n)
                order.append(n)

    obj_text = " ".join(chunks["obj"])
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    objective = _decode_expr(obj_text)
    touch(objective.terms)

    rows = []
    pending = ""
    for line in chunks["st"]:
        pending = f"{pending} {line}".strip()
        m = _ROW.match(pending)
        if not m:
            continue
        try:
            rhs = parse_number(m.group(4))
        except ParseError:
            continue
        label, body, op = m.group(1), m.group(2), m.group(3)
        sense_row = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">=", "=": "=="}.get(op, op)
        expr = _decode_expr(body)
        touch(expr.terms)
        rows.append(Constraint(LinearExpr(expr.terms), sense_row,
                               LinearExpr.const(rhs - expr.constant),
                               unescape_name(label) if label else ""))
        pending = ""
    if pending:
        raise ParseError(f"incomplete constraint: {pending!r}")

    bounds: dict[str, list[float]] = {}
    for line in chunks["bounds"]:
        parts = re.split(r"\s*(<=|>=|=<|=>|=|<|>)\s*", line.strip())
        if len(parts) == 1:
            m = re.fullmatch(r"(\S+)\s+free", line.strip(), re.IGNORECASE)
            if not m:
                raise ParseError(f"bad bound line {line!r}")
            name = unescape_name(m.group(1))
            bounds[name] = [-math.inf, math.inf]
        elif len(parts) == 3:
            a, op, b = parts
            try:
                val, name, flipped = parse_number(b), unescape_name(a), False
            except ParseError:
                val, name, flipped = parse_number(a), unescape_name(b), True
            lo, hi = bounds.setdefault(name, [0.0, math.inf])
            if op in ("=",):
                bounds[name] = [val, val]
            elif (op in ("<=", "=<", "<")) != flipped:
                bounds[name] = [lo, val]
            else:
                bounds[name] = [val, hi]
        elif len(parts) == 5:
            lo_t, _, n, _, hi_t = parts
            bounds[unescape_name(n)] = [parse_number(lo_t), parse_number(hi_t)]
        else:
            raise ParseError(f"bad bound line {line!r}")
        touch([name if len(parts) != 5 else unescape_name(parts[2])])

    generals = [unescape_name(t) for line in chunks["gen"] for t in line.split()]
    binaries = [unescape_name(t) for line in chunks["bin"] for t in line.split()]
    touch(generals)
    touch(binaries)
    gen_set, bin_set = set(generals), set(binaries)

    milp = Milp(sense=sense)
    for name in order:
        if name in bin_set:
            lo, hi = bounds.get(name, [0.0, 1.0])
            milp.add_var(name, BINARY, max(lo, 0.0), min(hi, 1.0))
        else:
            lo, hi = bounds.get(name, [0.0, math.inf])
            milp.add_var(name, INTEGER if name in gen_set else CONTINUOUS, lo, hi)
    for row in rows:
        milp.add_constraint(row)
    milp.objective = objective
    return milp
