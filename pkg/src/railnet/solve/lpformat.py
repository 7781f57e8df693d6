"""CPLEX-style LP text for models, and ``name value`` solution files."""

from __future__ import annotations

import re
import warnings
from fractions import Fraction

from railnet.milp import EQ, GE, LE, MilpModel
from railnet.solve.result import MilpSolution, SolveStatus

_LINE_WIDTH = 200
_SENSES = {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}


class LPFormatError(ValueError):
    pass


class SolutionFormatError(ValueError):
    pass


def format_number(value) -> str:
    """Exact decimal text for ints and terminating fractions."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise LPFormatError(f"coefficient {value} has no finite decimal form")
    places = max(twos, fives)
    scaled = value * 10**places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip("0").rstrip(".")


def _expression(terms, names, constant=0) -> list[str]:
    tokens: list[str] = []
    for v, c in terms:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if tokens or sign == "-":
            tokens.append(sign)
        if mag != 1:
            tokens.append(format_number(mag))
        tokens.append(names[v])
    if constant or not tokens:
        if tokens or constant < 0:
            tokens.append("-" if constant < 0 else "+")
        tokens.append(format_number(abs(constant)))
    return tokens


def _wrap(head: str, tokens: list[str]) -> list[str]:
    lines, cur = [], head
    for tok in tokens:
        if len(cur) + 1 + len(tok) > _LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    lines.append(cur)
    return lines


def emit_model_text(model: MilpModel) -> str:
    """Deterministic LP text; row names are ``<tag>_<n>``."""
    names = [v.name for v in model.variables]
    out = [
        "\\ railnet network design model",
        f"\\ big_m {model.big_m}",
        f"\\ qualified_trains {int(model.qualified_trains)}",
        "Minimize",
    ]
    obj_terms = [(v.id, v.objective) for v in model.variables if v.objective != 0]
    out += _wrap(" obj:", _expression(obj_terms, names, model.objective_constant))
    out.append("Subject To")
    counters: dict[str, int] = {}
    for c in model.constraints:
        counters[c.tag] = counters.get(c.tag, 0) + 1
        tokens = _expression(c.terms, names) + [c.sense, format_number(c.rhs)]
        out += _wrap(f" {c.tag}_{counters[c.tag]}:", tokens)
    out.append("Bounds")
    for v in model.variables:
        out.append(f" {v.lo} <= {v.name} <= {v.hi}")
    binaries = [v.name for v in model.variables if v.binary]
    generals = [v.name for v in model.variables if not v.binary]
    if binaries:
        out.append("Binaries")
        out += _wrap("", binaries)
    if generals:
        out.append("Generals")
        out += _wrap("", generals)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTION_RE = re.compile(
    r"^(minimize|minimise|minimum|min|maximize|maximise|maximum|max|subject to|such that|st|s\.t\.|bounds|bound|"
    r"binaries|binary|bin|generals|general|gen|integers|end)$",
    re.IGNORECASE,
)


def _section_of(word: str) -> str:
    w = word.lower()
    if w.startswith("min"):
        return "min"
    if w.startswith("max"):
        return "max"
    if w in ("subject to", "such that", "st", "s.t."):
        return "st"
    if w.startswith("bound"):
        return "bounds"
    if w.startswith("bin"):
        return "bin"
    if w.startswith("gen") or w == "integers":
        return "gen"
    return "end"


def _is_number(tok: str) -> bool:
    try:
        Fraction(tok)
        return True
    except ValueError:
        return False


def _parse_linear(tokens: list[str]):
    """Tokens -> ([(name, coef)], constant)."""
    terms: list[tuple[str, Fraction]] = []
    constant = Fraction(0)
    sign, coef = 1, None
    for tok in tokens:
        if tok in ("+", "-"):
            sign = -sign if tok == "-" else sign
            continue
        if _is_number(tok):
            if coef is not None:
                constant += sign * coef
                sign = 1
            coef = Fraction(tok)
            continue
        terms.append((tok, sign * (coef if coef is not None else 1)))
        sign, coef = 1, None
    if coef is not None:
        constant += sign * coef
    return terms, constant


def _num(value: Fraction):
    return value.numerator if value.denominator == 1 else value


def import_model_text(text: str) -> MilpModel:
    """Parse LP text written by :func:`emit_model_text` (and similar plain LP files)."""
    big_m, qualified = 0, False
    sections: dict[str, list[str]] = {"min": [], "st": [], "bounds": [], "bin": [], "gen": []}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            meta = line[1:].split()
            if len(meta) == 2 and meta[0] == "big_m":
                big_m = int(meta[1])
            elif len(meta) == 2 and meta[0] == "qualified_trains":
                qualified = meta[1] == "1"
            continue
        if not line:
            continue
        if _SECTION_RE.match(line):
            current = _section_of(line)
            if current == "max":
                raise LPFormatError("only minimisation models are supported")
            if current == "end":
                break
            continue
        if current is None:
            raise LPFormatError(f"text before the objective section: {line!r}")
        if raw[:1].isspace() and sections[current] and current in ("min", "st") and ":" not in line.split()[0]:
            sections[current][-1] += " " + line
        else:
            sections[current].append(line)

    order: list[str] = []
    bounds: dict[str, tuple[Fraction, Fraction]] = {}
    for line in sections["bounds"]:
        toks = line.split()
        if len(toks) == 5 and toks[1] in ("<=", "=<") and toks[3] in ("<=", "=<"):
            name, lo, hi = toks[2], Fraction(toks[0]), Fraction(toks[4])
        elif len(toks) == 3 and toks[1] == "=":
            name, lo, hi = toks[0], Fraction(toks[2]), Fraction(toks[2])
        elif len(toks) == 3 and toks[1] in ("<=", "=<"):
            name, lo, hi = toks[0], bounds.get(toks[0], (Fraction(0), None))[0], Fraction(toks[2])
        elif len(toks) == 3 and toks[1] in (">=", "=>"):
            name, lo, hi = toks[0], Fraction(toks[2]), bounds.get(toks[0], (None, None))[1]
        else:
            raise LPFormatError(f"unsupported bound line {line!r}")
        if name not in bounds:
            order.append(name)
        bounds[name] = (lo, hi)
    binaries = {n for line in sections["bin"] for n in line.split()}
    generals = {n for line in sections["gen"] for n in line.split()}

    obj_text = " ".join(sections["min"])
    if ":" in obj_text.split()[0] if obj_text else False:
        obj_text = obj_text.split(":", 1)[1]
    obj_terms, obj_const = _parse_linear(obj_text.split())

    rows = []
    for line in sections["st"]:
        head, _, body = line.partition(":")
        toks = body.split()
        sense_at = next((i for i, t in enumerate(toks) if t in _SENSES), None)
        if sense_at is None or sense_at != len(toks) - 2:
            raise LPFormatError(f"malformed row {line!r}")
        terms, const = _parse_linear(toks[:sense_at])
        rhs = Fraction(toks[-1]) - const
        tag = re.sub(r"_\d+$", "", head.strip())
        rows.append((terms, _SENSES[toks[sense_at]], rhs, tag))

    for name, _ in obj_terms + [t for r in rows for t in r[0]]:
        if name not in bounds and name not in order:
            order.append(name)
    for name in sorted(binaries | generals):
        if name not in order:
            order.append(name)

    model = MilpModel(big_m=big_m, qualified_trains=qualified, objective_constant=_num(obj_const))
    objective = {}
    for name, c in obj_terms:
        objective[name] = objective.get(name, 0) + c
    for name in order:
        binary = name in binaries
        lo, hi = bounds.get(name, (Fraction(0), Fraction(1) if binary else None))
        if hi is None:
            raise LPFormatError(f"variable {name} has no finite upper bound")
        model.add_variable(name, binary, _num(lo), _num(hi), _num(Fraction(objective.get(name, 0))))
    for terms, sense, rhs, tag in rows:
        model.add_constraint([(model.var(n).id, _num(c)) for n, c in terms], sense, _num(rhs), tag)
    return model


def import_solution(text: str, model: MilpModel, *, tolerance: float = 1e-6) -> MilpSolution:
    """Read ``<name> <value>`` lines; ``#`` starts a comment."""
    values: dict[str, Fraction] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 2:
            raise SolutionFormatError(f"line {lineno}: expected '<name> <value>', got {raw!r}")
        name, val = toks
        try:
            value = Fraction(val)
        except ValueError:
            raise SolutionFormatError(f"line {lineno}: bad value {val!r}") from None
        if not model.has_var(name):
            raise SolutionFormatError(f"line {lineno}: unknown variable {name}")
        values[name] = value
    missing = [v.name for v in model.variables if v.name not in values]
    if missing:
        warnings.warn(f"{len(missing)} variable(s) missing from solution, set to 0: {', '.join(missing[:5])}")
    vec = []
    for v in model.variables:
        x = values.get(v.name, Fraction(0))
        nearest = round(x)
        vec.append(nearest if abs(x - nearest) <= tolerance else x)
    return MilpSolution(
        status=SolveStatus.FEASIBLE,
        values=vec,
        objective=model.objective_value(vec),
    )
