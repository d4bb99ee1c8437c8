"""Model description language: parsing and serialization.

Statements relate constructs and observed variables with four operators:

    ``=~``  measured-by   (latent variable, factor loadings)
    ``<~``  composed-of   (composite, weights)
    ``~``   regressed-on  (structural coefficient)
    ``~~``  covaries-with (variance / covariance)

Each statement occupies one logical line (newline or ``;`` terminated);
``#`` starts a comment.  A right-hand-side term may carry a premultiplier:
a number fixes the parameter, the reserved token ``free`` removes a default
fixing, and any other token attaches a label (identical labels impose an
equality constraint).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MEASURED_BY = "=~"
COMPOSED_OF = "<~"
REGRESSED_ON = "~"
COVARIES_WITH = "~~"

# Longest first so "=~" is not read as "~".
_OPERATORS = (MEASURED_BY, COMPOSED_OF, COVARIES_WITH, REGRESSED_ON)

_NAME_RE = re.compile(r"[A-Za-z_.][A-Za-z0-9_.]*")
_RESERVED_FREE = "free"


class ModelSyntaxError(ValueError):
    """Malformed model source, with 1-based line/column position."""

    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Term:
    """One right-hand-side entry of a statement."""

    name: str
    fixed: float | None = None
    label: str | None = None
    force_free: bool = False

    def __post_init__(self):
        if self.fixed is not None and self.force_free:
            raise ValueError(f"term {self.name!r}: fixed value and free-override are exclusive")

    def to_text(self):
        if self.fixed is not None:
            return f"{self.fixed:g}*{self.name}"
        if self.force_free:
            return f"free*{self.name}"
        if self.label is not None:
            return f"{self.label}*{self.name}"
        return self.name


@dataclass(frozen=True)
class Statement:
    lhs: str
    op: str
    rhs: tuple[Term, ...]

    def to_text(self):
        return f"{self.lhs} {self.op} " + " + ".join(t.to_text() for t in self.rhs)


@dataclass
class ModelSpec:
    """Parsed model: an ordered list of statements."""

    statements: list[Statement] = field(default_factory=list)

    @property
    def latent_names(self):
        return [s.lhs for s in self.statements if s.op == MEASURED_BY]

    @property
    def composite_names(self):
        return [s.lhs for s in self.statements if s.op == COMPOSED_OF]

    def measurement_block(self, construct):
        for s in self.statements:
            if s.lhs == construct and s.op in (MEASURED_BY, COMPOSED_OF):
                return s
        return None

    def to_text(self):
        return "\n".join(s.to_text() for s in self.statements)

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.statements == other.statements


def _strip_comment(line):
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def _parse_term(text, lineno, col):
    text = text.strip()
    if not text:
        raise ModelSyntaxError("empty term", lineno, col)
    if "*" in text:
        pre, _, name = text.partition("*")
        pre = pre.strip()
        name = name.strip()
        if "*" in name:
            raise ModelSyntaxError(f"multiple '*' in term {text!r}", lineno, col)
        if not _NAME_RE.fullmatch(name):
            raise ModelSyntaxError(f"invalid variable name {name!r}", lineno, col)
        try:
            return Term(name, fixed=float(pre))
        except ValueError:
            pass
        if pre.lower() == _RESERVED_FREE:
            return Term(name, force_free=True)
        if not _NAME_RE.fullmatch(pre):
            raise ModelSyntaxError(f"invalid premultiplier {pre!r}", lineno, col)
        return Term(name, label=pre)
    if not _NAME_RE.fullmatch(text):
        raise ModelSyntaxError(f"invalid variable name {text!r}", lineno, col)
    return Term(text)


_OP_RE = re.compile("|".join(re.escape(op) for op in _OPERATORS))


def _parse_statement(line, lineno):
    m = _OP_RE.search(line)
    if m is None:
        raise ModelSyntaxError(f"no operator found in {line.strip()!r}", lineno)
    op = m.group(0)
    op_pos = m.start()
    lhs = line[:op_pos].strip()
    if not _NAME_RE.fullmatch(lhs):
        raise ModelSyntaxError(f"invalid left-hand side {lhs!r}", lineno, 1)
    rest = line[op_pos + len(op) :]
    if not rest.strip():
        raise ModelSyntaxError("empty right-hand side", lineno, op_pos + len(op) + 1)
    terms = []
    col = op_pos + len(op) + 1
    for chunk in rest.split("+"):
        terms.append(_parse_term(chunk, lineno, col))
        col += len(chunk) + 1
    return Statement(lhs, op, tuple(terms))


def parse_model(source: str) -> ModelSpec:
    """Parse model source text into a validated :class:`ModelSpec`."""
    statements = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = _strip_comment(raw)
        for piece in line.split(";"):
            if piece.strip():
                statements.append(_parse_statement(piece, lineno))
    spec = ModelSpec(statements)
    _validate(spec)
    return spec


def _validate(spec):
    seen_block = {}
    indicator_of = {}
    for s in spec.statements:
        if s.op not in (MEASURED_BY, COMPOSED_OF):
            continue
        if s.lhs in seen_block:
            raise ModelSyntaxError(
                f"construct {s.lhs!r} has more than one measurement block", 1
            )
        seen_block[s.lhs] = s.op
        for t in s.rhs:
            if t.name in indicator_of:
                prev = indicator_of[t.name]
                raise ModelSyntaxError(
                    f"indicator {t.name!r} appears in blocks for both "
                    f"{prev!r} and {s.lhs!r}; an indicator may belong to "
                    "exactly one measurement or composite block",
                    1,
                )
            indicator_of[t.name] = s.lhs
    for name, op in seen_block.items():
        if name in indicator_of:
            raise ModelSyntaxError(
                f"{name!r} is both a construct and an indicator", 1
            )
