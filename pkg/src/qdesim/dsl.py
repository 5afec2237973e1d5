"""QDE model files: s-expression parser, validator and serializer.

File layout (``.qde``, UTF-8, ``;`` starts a line comment)::

    (model NAME
      (vars (x (0 xmsy Q xmax)) ...)
      (constraints ((add dx h R) (0 0 0) (0 MSY Rmsy)) ...)
      (relevant x h)
      (init (x (xmsy Q) dec) ...))

Constraint heads follow the usual QSIM spelling: ``add``, ``d/dt``, ``U-``,
``cornot`` and monotonic functions written ``M+-``, ``(M++)`` or ``(M - + +)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .qcore import ModelError, QDir, QMag, QuantitySpace, Sign

ADD, DDT, MONO, UMINUS, EXCLUDE = "add", "d/dt", "M", "U-", "cornot"
_ARITY = {ADD: 3, DDT: 2, UMINUS: 2}
_MONO_RE = re.compile(r"^M[+-]+$")
ZERO_LANDMARK = "0"


class ParseError(ModelError):
    """Syntax or semantic error with a 1-based source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message, self.line, self.col = message, line, col
        super().__init__(f"line {line}, col {col}: {message}")


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    args: tuple[str, ...]
    cv: tuple[tuple[str, ...], ...] = ()
    signature: tuple[Sign, ...] = ()
    source: str = field(default="", compare=False, repr=False)
    line: int = field(default=0, compare=False, repr=False)

    @property
    def arity(self) -> int:
        return len(self.args)

    def head_text(self) -> str:
        if self.kind == MONO:
            return "M" + "".join("+" if s == Sign.POS else "-" for s in self.signature)
        return self.kind

    def text(self) -> str:
        head = f"({self.head_text()} {' '.join(self.args)})"
        return "(" + " ".join([head] + [f"({' '.join(t)})" for t in self.cv]) + ")"


@dataclass(frozen=True)
class InitSpec:
    mag: QMag
    dir: QDir | None = None


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


@dataclass(frozen=True)
class QdeModel:
    name: str
    variables: Mapping[str, QuantitySpace]
    constraints: tuple[ConstraintSpec, ...]
    relevant: tuple[str, ...] = ()
    init: Mapping[str, InitSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", dict(self.variables))
        object.__setattr__(self, "init", dict(self.init))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "relevant", tuple(self.relevant))

    def __hash__(self) -> int:
        return hash((self.name, tuple(self.variables), self.constraints))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.variables)

    def index(self, var: str) -> int:
        try:
            return self.names.index(var)
        except ValueError:
            raise ModelError(f"unknown variable {var!r}") from None

    def space(self, var: str) -> QuantitySpace:
        try:
            return self.variables[var]
        except KeyError:
            raise ModelError(f"unknown variable {var!r}") from None

    @property
    def spaces(self) -> tuple[QuantitySpace, ...]:
        return tuple(self.variables.values())


# --------------------------------------------------------------------------
# reader


@dataclass
class _Atom:
    text: str
    line: int
    col: int


@dataclass
class _List:
    items: list
    line: int
    col: int


def _tokens(text: str) -> Iterator[tuple[str, int, int]]:
    line, col, i, n = 1, 1, 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col, i = line + 1, 1, i + 1
        elif c.isspace():
            col, i = col + 1, i + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c, line, col
            col, i = col + 1, i + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            yield text[i:j], line, col
            col, i = col + (j - i), j


def _read(text: str) -> _List:
    """Read exactly one top-level list; iterative so deep nesting cannot overflow."""
    stack: list[_List] = []
    top: _List | None = None
    last = (1, 1)
    for tok, line, col in _tokens(text):
        last = (line, col)
        if top is not None:
            raise ParseError("unexpected content after the model form", line, col)
        if tok == "(":
            stack.append(_List([], line, col))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            if stack:
                stack[-1].items.append(done)
            else:
                top = done
        elif not stack:
            raise ParseError(f"expected '(' but found {tok!r}", line, col)
        else:
            stack[-1].items.append(_Atom(tok, line, col))
    if stack:
        raise ParseError("unterminated '(' (missing ')')", stack[-1].line, stack[-1].col)
    if top is None:
        raise ParseError("empty document: expected (model ...)", *last)
    return top


def _atom(node, what: str) -> str:
    if not isinstance(node, _Atom):
        raise ParseError(f"expected {what}, found a list", node.line, node.col)
    return node.text


def _list(node, what: str) -> _List:
    if not isinstance(node, _List):
        raise ParseError(f"expected {what} list, found {node.text!r}", node.line, node.col)
    return node


def _keyword(node: _List, word: str) -> bool:
    return bool(node.items) and isinstance(node.items[0], _Atom) and node.items[0].text == word


def _mono_signature(text: str, node) -> tuple[Sign, ...]:
    if not _MONO_RE.match(text):
        raise ParseError(f"malformed monotonic constraint head {text!r}", node.line, node.col)
    return tuple(Sign.POS if ch == "+" else Sign.NEG for ch in text[1:])


def _constraint_head(node: _List) -> tuple[str, tuple[Sign, ...]]:
    if isinstance(node, _List):
        parts = [_atom(a, "monotonic sign") for a in node.items]
        return MONO, _mono_signature("".join(parts), node)
    text = node.text
    if text in (ADD, DDT, UMINUS, EXCLUDE):
        return text, ()
    if text.startswith("M"):
        return MONO, _mono_signature(text, node)
    raise ParseError(f"unknown constraint type {text!r}", node.line, node.col)


def _constraint(node, source: str) -> ConstraintSpec:
    node = _list(node, "constraint")
    if not node.items:
        raise ParseError("empty constraint", node.line, node.col)
    head = _list(node.items[0], "constraint head")
    if len(head.items) < 2:
        raise ParseError("constraint head needs a type and arguments", head.line, head.col)
    kind, signature = _constraint_head(head.items[0])
    args = tuple(_atom(a, "variable name") for a in head.items[1:])
    cvs = []
    for tup in node.items[1:]:
        tup = _list(tup, "corresponding-value tuple")
        if not tup.items:
            raise ParseError("empty corresponding-value tuple", tup.line, tup.col)
        cvs.append(tuple(_atom(a, "landmark name") for a in tup.items))
    return ConstraintSpec(kind, args, tuple(cvs), signature, source=source, line=node.line)


def _source_slice(text: str, node: _List) -> str:
    lines = text.splitlines()
    if 0 < node.line <= len(lines):
        return lines[node.line - 1].strip()
    return ""


def _region(node, space: QuantitySpace) -> QMag:
    if isinstance(node, _Atom):
        return QMag.at(space.index(node.text))
    parts = [_atom(a, "landmark name") for a in node.items]
    if len(parts) != 2:
        raise ParseError("interval needs exactly two landmarks", node.line, node.col)
    i, j = space.index(parts[0]), space.index(parts[1])
    if j != i + 1:
        raise ParseError(f"({parts[0]} {parts[1]}) does not join adjacent landmarks", node.line, node.col)
    return QMag.between(i)


def parse_model(text: str | bytes, *, validate: bool = True) -> QdeModel:
    """Parse a ``.qde`` document; raises :class:`ParseError` with a position on any defect."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(text)[: exc.start]
            line = head.count(b"\n") + 1
            col = exc.start - (head.rfind(b"\n") + 1) + 1
            raise ParseError(f"invalid UTF-8 ({exc.reason})", line, col) from None
    root = _read(text)
    if not _keyword(root, "model") or len(root.items) < 2:
        raise ParseError("document must start with (model NAME ...)", root.line, root.col)
    name = _atom(root.items[1], "model name")

    variables: dict[str, QuantitySpace] = {}
    constraints: list[ConstraintSpec] = []
    relevant: tuple[str, ...] = ()
    init_nodes: list[_List] = []
    seen: set[str] = set()
    for section in root.items[2:]:
        section = _list(section, "section")
        if not section.items or not isinstance(section.items[0], _Atom):
            raise ParseError("section must start with a keyword", section.line, section.col)
        key = section.items[0].text
        if key in seen:
            raise ParseError(f"duplicate ({key} ...) section", section.line, section.col)
        seen.add(key)
        body = section.items[1:]
        if key == "vars":
            for decl in body:
                decl = _list(decl, "variable declaration")
                if len(decl.items) != 2:
                    raise ParseError("variable declaration is (NAME (landmark ...))", decl.line, decl.col)
                var = _atom(decl.items[0], "variable name")
                lms = _list(decl.items[1], "landmark")
                names = tuple(_atom(a, "landmark name") for a in lms.items)
                if var in variables:
                    raise ParseError(f"duplicate variable {var!r}", decl.line, decl.col)
                try:
                    variables[var] = QuantitySpace(names)
                except ModelError as exc:
                    raise ParseError(str(exc), lms.line, lms.col) from None
        elif key == "constraints":
            constraints.extend(_constraint(c, _source_slice(text, c)) for c in body)
        elif key == "relevant":
            relevant = tuple(_atom(a, "variable name") for a in body)
        elif key == "init":
            init_nodes = [_list(n, "initial value") for n in body]
        else:
            raise ParseError(f"unknown section {key!r}", section.line, section.col)
    for key in ("vars", "constraints"):
        if key not in seen:
            raise ParseError(f"missing ({key} ...) section", root.line, root.col)

    init: dict[str, InitSpec] = {}
    for node in init_nodes:
        if len(node.items) not in (2, 3):
            raise ParseError("initial value is (VAR region [dir])", node.line, node.col)
        var = _atom(node.items[0], "variable name")
        if var not in variables:
            raise ParseError(f"initial value for undeclared variable {var!r}", node.line, node.col)
        if var in init:
            raise ParseError(f"duplicate initial value for {var!r}", node.line, node.col)
        try:
            mag = _region(node.items[1], variables[var])
            d = QDir.parse(_atom(node.items[2], "direction")) if len(node.items) == 3 else None
        except ParseError:
            raise
        except ModelError as exc:
            raise ParseError(str(exc), node.line, node.col) from None
        init[var] = InitSpec(mag, d)

    model = QdeModel(name, variables, tuple(constraints), relevant, init)
    if validate:
        for diag in validate_model(model):
            if diag.severity == "error":
                line = next((c.line for c in constraints if diag.location == _where(c, constraints)), root.line)
                raise ParseError(diag.message, line, 1)
    return model


# --------------------------------------------------------------------------
# validation


def _where(c: ConstraintSpec, constraints: Sequence[ConstraintSpec]) -> str:
    return f"constraint {constraints.index(c) + 1} {c.text()}"


def validate_model(m: QdeModel) -> list[Diagnostic]:
    """Return all invariant violations; an empty list means the model is usable."""
    out: list[Diagnostic] = []

    def err(loc: str, msg: str) -> None:
        out.append(Diagnostic("error", loc, msg))

    used: set[str] = set()
    for c in m.constraints:
        loc = _where(c, m.constraints)
        unknown = [a for a in c.args if a not in m.variables]
        for a in unknown:
            err(loc, f"undeclared variable {a!r}")
        used.update(c.args)
        expected = _ARITY.get(c.kind)
        if c.kind == MONO:
            expected = len(c.signature) + 1
            if any(s not in (Sign.POS, Sign.NEG) for s in c.signature) or not c.signature:
                err(loc, "monotonic signature must be a nonempty sequence of + and -")
        if expected is not None and c.arity != expected:
            err(loc, f"{c.head_text()} takes {expected} arguments, got {c.arity}")
        if c.kind == EXCLUDE and c.arity < 2:
            err(loc, "cornot needs at least two arguments")
        if c.kind not in (ADD, DDT, MONO, UMINUS, EXCLUDE):
            err(loc, f"unknown constraint kind {c.kind!r}")
        for tup in c.cv:
            if len(tup) != c.arity:
                err(loc, f"corresponding-value tuple {tup} has arity {len(tup)}, expected {c.arity}")
                continue
            for var, lm in zip(c.args, tup):
                if var in m.variables and lm not in m.variables[var]:
                    err(loc, f"unknown landmark {lm!r} for variable {var!r}")
        if unknown or (expected is not None and c.arity != expected):
            continue
        if c.kind == DDT:
            deriv = m.variables[c.args[1]]
            if ZERO_LANDMARK not in deriv:
                err(loc, f"derivative variable {c.args[1]!r} has no landmark '0'")
        if c.kind == UMINUS:
            if not c.cv:
                err(loc, "U- needs its critical point as the first corresponding-value tuple")
            elif len(c.cv[0]) == 2 and c.cv[0][0] in m.variables[c.args[0]]:
                xs = m.variables[c.args[0]]
                k = xs.index(c.cv[0][0])
                if k in (0, len(xs.landmarks) - 1):
                    err(loc, f"critical landmark {c.cv[0][0]!r} is not interior to {c.args[0]!r}")
    for var in m.variables:
        if var not in used:
            err(f"variable {var}", f"variable {var!r} appears in no constraint")
    for var in m.relevant:
        if var not in m.variables:
            err("relevant", f"undeclared relevant variable {var!r}")
    for var, spec in m.init.items():
        if var not in m.variables:
            err("init", f"initial value for undeclared variable {var!r}")
        elif not m.variables[var].valid(spec.mag):
            err("init", f"initial magnitude of {var!r} outside its quantity space")
    return out


# --------------------------------------------------------------------------
# writer


def _init_text(space: QuantitySpace, spec: InitSpec) -> str:
    if spec.mag.is_landmark:
        region = space.landmarks[spec.mag.landmark]
    else:
        lo, hi = spec.mag.bounds
        region = f"({space.landmarks[lo]} {space.landmarks[hi]})"
    return region if spec.dir is None else f"{region} {spec.dir.word}"


def serialize_model(m: QdeModel) -> str:
    """Deterministic text form; ``parse_model(serialize_model(m)) == m``."""
    lines = [f"(model {m.name}", "  (vars"]
    lines += [f"    ({v} ({' '.join(s.landmarks)}))" for v, s in m.variables.items()]
    lines[-1] += ")"
    lines.append("  (constraints")
    lines += [f"    {c.text()}" for c in m.constraints]
    lines[-1] += ")"
    if m.relevant:
        lines.append(f"  (relevant {' '.join(m.relevant)})")
    if m.init:
        lines.append("  (init")
        lines += [f"    ({v} {_init_text(m.variables[v], m.init[v])})" for v in m.variables if v in m.init]
        lines[-1] += ")"
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def load_model(path) -> QdeModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())
