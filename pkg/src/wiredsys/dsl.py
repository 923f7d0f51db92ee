"""A small declarative language for models: types, boxes, wirings,
behaviors, contracts, time contracts, knowledge databases, tests and attacks.

Example::

    type Bool = fin {0, 1}
    box NOT (in: Bool; out: Bool)
    moore flip for NOT {
      states {a, b}; init a;
      update { (a, (0)) -> b; (a, (1)) -> a; (b, (0)) -> b; (b, (1)) -> a; }
      readout { a -> (1); b -> (0); }
    }

Statements end at their closing brace or at an optional ``;``. ``#``
starts a comment that runs to the end of the line. Finite labels are kept
as the exact token text (identifiers or numbers); matrix entries and
interval bounds are floats.

``parse_model`` produces a ``Model``, a list of declaration records that
compares structurally (source positions are ignored). ``render_model``
prints the canonical text. ``typecheck_model`` resolves references and
returns diagnostics; ``Workspace`` builds the runtime objects.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import contracts as ct
from . import security as sec
from . import temporal as tm
from .behavior import FiniteFunction, LinearFunction, LTISystem, MooreMachine, input_space
from .wiring import (
    FinSet,
    InnerIn,
    InnerOut,
    Interface,
    LinSpace,
    OuterIn,
    OuterOut,
    WiringDiagram,
    substitute,
    validate_diagram,
)

__all__ = [
    "Diagnostic",
    "DSLError",
    "Model",
    "parse_model",
    "render_model",
    "typecheck_model",
    "Workspace",
    "parse_value",
    "format_float",
]


# -- diagnostics ------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    col: int
    message: str
    related: tuple = ()  # ((line, col, note), ...)

    def __str__(self):
        s = f"{self.line}:{self.col}: {self.severity}: {self.message}"
        for line, col, note in self.related:
            s += f"\n  {line}:{col}: note: {note}"
        return s


class DSLError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


Loc = tuple  # (line, col)


def _loc_field():
    return field(default=(0, 0), compare=False, repr=False)


# -- syntax tree ------------------------------------------------------------


@dataclass(frozen=True)
class PortRef:
    owner: str  # "outer" or an inner alias
    side: str  # "in" or "out"
    index: int
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class ConstRef:
    value: str
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class Connection:
    target: PortRef
    source: Any  # PortRef or ConstRef
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class TypeDecl:
    name: str
    kind: str  # "fin" or "lin"
    labels: tuple = ()
    dim: int = 0
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class BoxDecl:
    name: str
    inputs: tuple
    outputs: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class WiringDecl:
    name: str
    inner: tuple  # ((alias, box name), ...)
    outer: str
    connections: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class ImplementDecl:
    box: str
    wiring: str
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class MooreDecl:
    name: str
    box: str
    states: tuple
    init: str
    update: tuple  # (((state, inputs), next), ...)
    readout: tuple  # ((state, outputs), ...)
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class LtiDecl:
    name: str
    box: str
    A: tuple
    B: tuple
    C: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class FnDecl:
    name: str
    box: str
    table: tuple  # ((inputs, outputs), ...)
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class LinFnDecl:
    name: str
    box: str
    C: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class SystemDecl:
    name: str
    wiring: str
    parts: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class Subset:
    """Either a label set (``labels``) or a union of closed intervals (``spans``)."""

    labels: tuple | None = None
    spans: tuple | None = None


@dataclass(frozen=True)
class PortSubset:
    side: str
    index: int
    coord: int | None
    subset: Subset
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class ContractDecl:
    name: str
    box: str
    kind: str  # "rel" or "indep"
    pairs: tuple = ()
    entries: tuple = ()
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class TimeContractDecl:
    name: str
    box: str
    kind: str  # "lift", "window" or "implies"
    of: str = ""
    assume: PortSubset | None = None
    guarantee: PortSubset | None = None
    delay: int = 1
    pattern: tuple = ()
    response: str = ""
    within: int = 0
    horizon: int = 8
    samples: tuple = ()  # ((side, index, values), ...)
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class KbDecl:
    name: str
    box: str
    entries: tuple
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class TestDecl:
    name: str
    box: str
    kind: str  # "terminal", "trace" or "iotable"
    init: Any = None
    inputs: tuple = ()
    horizon: int = 0
    loc: Loc = _loc_field()


@dataclass(frozen=True)
class AttackDecl:
    name: str
    wiring: str
    uses: tuple
    rewrites: tuple  # ((alias, system), ...)
    rewires: tuple  # Connections
    loc: Loc = _loc_field()


KINDS = {
    TypeDecl: "type",
    BoxDecl: "box",
    WiringDecl: "wiring",
    ImplementDecl: "implement",
    MooreDecl: "behavior",
    LtiDecl: "behavior",
    FnDecl: "behavior",
    LinFnDecl: "behavior",
    SystemDecl: "behavior",
    ContractDecl: "contract",
    TimeContractDecl: "timecontract",
    KbDecl: "kb",
    TestDecl: "test",
    AttackDecl: "attack",
}


@dataclass
class Model:
    decls: list = field(default_factory=list)

    def __eq__(self, other):
        return isinstance(other, Model) and self.decls == other.decls

    def of_kind(self, kind: str) -> dict:
        return {getattr(d, "name", getattr(d, "box", None)): d for d in self.decls if KINDS[type(d)] == kind}

    def lookup(self, kind: str, name: str):
        return self.of_kind(kind).get(name)


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<arrow><-|->)
  | (?P<num>[-+]?(?:inf\b|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))
  | (?P<ident>[^\W\d]\w*'*)
  | (?P<punct>[{}()\[\],;:=.∪|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DSLError([Diagnostic("error", line, pos - line_start + 1,
                                       f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            toks.append(Tok(kind, s, line, pos - line_start + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rfind("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # basic helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def loc(self) -> Loc:
        return (self.tok.line, self.tok.col)

    def error(self, msg, tok: Tok = None):
        tok = tok or self.tok
        raise DSLError([Diagnostic("error", tok.line, tok.col, msg)])

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text) -> Tok:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what="name") -> str:
        if self.tok.kind != "ident":
            self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t.text

    def label(self) -> str:
        if self.tok.kind not in ("ident", "num"):
            self.error(f"expected a value label, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t.text

    def number(self) -> float:
        if self.tok.kind != "num":
            self.error(f"expected a number, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return float(t.text)

    def integer(self) -> int:
        t = self.tok
        v = self.number()
        if v != int(v) or not re.fullmatch(r"[-+]?\d+", t.text):
            self.error("expected an integer", t)
        return int(v)

    def comma_list(self, item, close: str) -> tuple:
        out = []
        while not self.at(close):
            out.append(item())
            if not self.accept(","):
                break
        self.expect(close)
        return tuple(out)

    # literals
    def label_tuple(self) -> tuple:
        self.expect("(")
        return self.comma_list(self.label, ")")

    def matrix(self) -> tuple:
        self.expect("[")
        if self.at("["):
            return self.comma_list(lambda: (self.expect("["), self.comma_list(self.number, "]"))[1], "]")
        return self.comma_list(self.number, "]")

    def value(self):
        if self.accept("("):
            return tuple(self.comma_list(self.value, ")"))
        if self.accept("["):
            return ("list",) + tuple(self.comma_list(self.value, "]"))
        return self.label()

    def subset(self) -> Subset:
        if self.accept("{"):
            return Subset(labels=self.comma_list(self.label, "}"))
        spans = []
        while True:
            self.expect("[")
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            spans.append((lo, hi))
            if not (self.accept("∪") or self.accept("|")):
                break
        return Subset(spans=tuple(spans))

    def port_sel(self):
        """``in[k]`` or ``out[k]`` with an optional ``[c]`` coordinate."""
        loc = self.loc()
        side = self.ident("in or out")
        if side not in ("in", "out"):
            self.error("expected in or out")
        self.expect("[")
        k = self.integer()
        self.expect("]")
        c = None
        if self.accept("["):
            c = self.integer()
            self.expect("]")
        return side, k, c, loc

    def port_ref(self) -> PortRef:
        loc = self.loc()
        owner = self.ident("box alias or outer")
        self.expect(".")
        side = self.ident("in or out")
        if side not in ("in", "out"):
            self.error("expected in or out after '.'")
        self.expect("[")
        k = self.integer()
        self.expect("]")
        return PortRef(owner, side, k, loc)

    def connection(self, allow_const: bool) -> Connection:
        loc = self.loc()
        tgt = self.port_ref()
        self.expect("<-")
        if self.at("const"):
            cloc = self.loc()
            self.i += 1
            if not allow_const:
                self.error("constant sources are only allowed in attack rewirings", self.toks[self.i - 1])
            src = ConstRef(self.label(), cloc)
        else:
            src = self.port_ref()
        return Connection(tgt, src, loc)

    # statements
    def model(self) -> Model:
        decls = []
        while self.tok.kind != "eof":
            if self.accept(";"):
                continue
            decls.append(self.statement())
        return Model(decls)

    def statement(self):
        loc = self.loc()
        kw = self.tok.text
        handler = getattr(self, f"stmt_{kw}", None) if self.tok.kind == "ident" else None
        if handler is None:
            self.error(f"expected a declaration, found {self.tok.text!r}")
        self.i += 1
        return handler(loc)

    def stmt_type(self, loc):
        name = self.ident()
        self.expect("=")
        kind = self.ident("fin or lin")
        if kind == "fin":
            self.expect("{")
            return TypeDecl(name, "fin", labels=self.comma_list(self.label, "}"), loc=loc)
        if kind == "lin":
            return TypeDecl(name, "lin", dim=self.integer(), loc=loc)
        self.error("a type is 'fin {...}' or 'lin k'")

    def stmt_box(self, loc):
        name = self.ident()
        self.expect("(")
        self.expect("in")
        self.expect(":")
        ins = []
        while self.tok.kind == "ident":
            ins.append(self.ident())
            if not self.accept(","):
                break
        self.expect(";")
        self.expect("out")
        self.expect(":")
        outs = []
        while self.tok.kind == "ident":
            outs.append(self.ident())
            if not self.accept(","):
                break
        self.expect(")")
        return BoxDecl(name, tuple(ins), tuple(outs), loc)

    def stmt_wiring(self, loc):
        name = self.ident()
        self.expect(":")
        self.expect("[")

        def inner():
            a = self.ident("box")
            if self.accept(":"):
                return (a, self.ident("box"))
            return (a, a)

        boxes = self.comma_list(inner, "]")
        self.expect("->")
        outer = self.ident("outer box")
        self.expect("{")
        conns = []
        while not self.accept("}"):
            conns.append(self.connection(False))
            if not self.at("}"):
                self.expect(";")
        return WiringDecl(name, boxes, outer, tuple(conns), loc)

    def stmt_implement(self, loc):
        box = self.ident("box")
        self.expect("by")
        return ImplementDecl(box, self.ident("wiring"), loc)

    def stmt_moore(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("{")
        states, init, update, readout = None, None, [], []
        while not self.accept("}"):
            part = self.ident("states, init, update or readout")
            if part == "states":
                self.expect("{")
                states = self.comma_list(self.label, "}")
            elif part == "init":
                init = self.label()
            elif part == "update":
                self.expect("{")
                while not self.accept("}"):
                    self.expect("(")
                    s = self.label()
                    self.expect(",")
                    x = self.label_tuple()
                    self.expect(")")
                    self.expect("->")
                    update.append(((s, x), self.label()))
                    self.accept(";")
            elif part == "readout":
                self.expect("{")
                while not self.accept("}"):
                    s = self.label()
                    self.expect("->")
                    readout.append((s, self.label_tuple()))
                    self.accept(";")
            else:
                self.error(f"unknown moore section {part!r}", self.toks[self.i - 1])
            self.accept(";")
        if states is None:
            self.error("moore block needs a states section", self.toks[self.i - 1])
        return MooreDecl(name, box, states, init if init is not None else states[0] if states else "",
                         tuple(update), tuple(readout), loc)

    def _matrices(self, names):
        self.expect("{")
        got = {}
        while not self.accept("}"):
            t = self.tok
            key = self.ident("matrix name")
            if key not in names:
                self.error(f"unexpected matrix {key!r}", t)
            self.expect("=")
            got[key] = self.matrix()
            self.accept(";")
        for k in names:
            if k not in got:
                self.error(f"missing matrix {k}", self.toks[self.i - 1])
        return got

    def stmt_lti(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        m = self._matrices(("A", "B", "C"))
        return LtiDecl(name, box, m["A"], m["B"], m["C"], loc)

    def stmt_linfn(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        return LinFnDecl(name, box, self._matrices(("C",))["C"], loc)

    def stmt_fn(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("{")
        self.expect("table")
        self.expect("{")
        rows = []
        while not self.accept("}"):
            x = self.label_tuple()
            self.expect("->")
            rows.append((x, self.label_tuple()))
            self.accept(";")
        self.accept(";")
        self.expect("}")
        return FnDecl(name, box, tuple(rows), loc)

    def stmt_system(self, loc):
        name = self.ident()
        self.expect("=")
        w = self.ident("wiring")
        self.expect("(")
        parts = self.comma_list(self.ident, ")")
        return SystemDecl(name, w, parts, loc)

    def stmt_contract(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("=")
        kind = self.ident("rel or indep")
        self.expect("{")
        if kind == "rel":
            pairs = []
            while not self.accept("}"):
                self.expect("(")
                xs = []
                while not self.at(";"):
                    xs.append(self.label())
                    if not self.accept(","):
                        break
                self.expect(";")
                ys = self.comma_list(self.label, ")")
                pairs.append((tuple(xs), ys))
                if not self.at("}"):
                    self.expect(",")
            return ContractDecl(name, box, "rel", pairs=tuple(pairs), loc=loc)
        if kind == "indep":
            entries = []
            while not self.accept("}"):
                side, k, c, ploc = self.port_sel()
                self.expect(":")
                entries.append(PortSubset(side, k, c, self.subset(), ploc))
                self.accept(";")
            return ContractDecl(name, box, "indep", entries=tuple(entries), loc=loc)
        self.error("a contract is 'rel {...}' or 'indep {...}'", self.toks[self.i - 2])

    def _port_pred(self) -> PortSubset:
        side, k, c, ploc = self.port_sel()
        self.expect("in")
        return PortSubset(side, k, c, self.subset(), ploc)

    def _samples(self):
        side, k, _, _ = self.port_sel()
        self.expect("=")
        self.expect("{")
        return (side, k, self.comma_list(self.number, "}"))

    def stmt_timecontract(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("=")
        kind = self.ident("lift, window or implies")
        self.expect("(")
        args = {"samples": []}
        if kind == "lift":
            args["of"] = self.ident("contract")
            self.accept(",")
        while not self.accept(")"):
            if self.at("in") or self.at("out"):
                args["samples"].append(self._samples())
            else:
                t = self.tok
                key = self.ident("argument")
                self.expect("=")
                if key in ("assume", "guarantee"):
                    args[key] = self._port_pred()
                elif key in ("delay", "within", "horizon"):
                    args[key] = self.integer()
                elif key == "pattern":
                    args[key] = self.label_tuple()
                elif key == "response":
                    args[key] = self.label()
                else:
                    self.error(f"unknown argument {key!r}", t)
            if not self.at(")"):
                self.expect(",")
        if kind not in ("lift", "window", "implies"):
            self.error(f"unknown time contract {kind!r}")
        args["samples"] = tuple(args["samples"])
        return TimeContractDecl(name, box, kind, loc=loc, **args)

    def stmt_kb(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("{")
        return KbDecl(name, box, self.comma_list(self.ident, "}"), loc)

    def stmt_test(self, loc):
        name = self.ident()
        self.expect("for")
        box = self.ident("box")
        self.expect("=")
        kind = self.ident("terminal, trace or iotable")
        if kind == "terminal":
            return TestDecl(name, box, kind, loc=loc)
        self.expect("(")
        args = {}
        while not self.accept(")"):
            t = self.tok
            key = self.ident("argument")
            self.expect("=")
            if key == "init":
                args["init"] = self.value()
            elif key == "inputs":
                v = self.value()
                if not (isinstance(v, tuple) and v and v[0] == "list"):
                    self.error("inputs must be a list [...]", t)
                args["inputs"] = tuple(x if isinstance(x, tuple) else (x,) for x in v[1:])
            elif key == "horizon":
                args["horizon"] = self.integer()
            else:
                self.error(f"unknown argument {key!r}", t)
            if not self.at(")"):
                self.expect(",")
        if kind not in ("trace", "iotable"):
            self.error(f"unknown test kind {kind!r}")
        return TestDecl(name, box, kind, loc=loc, **args)

    def stmt_attack(self, loc):
        name = self.ident()
        self.expect("on")
        w = self.ident("wiring")
        self.expect("{")
        uses, rewrites, rewires = (), [], []
        while not self.accept("}"):
            t = self.tok
            part = self.ident("use, rewrite or rewire")
            if part == "use":
                items = [self.ident()]
                while self.accept(","):
                    items.append(self.ident())
                uses = tuple(items)
            elif part == "rewrite":
                alias = self.ident("box alias")
                self.expect("with")
                rewrites.append((alias, self.ident("behavior")))
            elif part == "rewire":
                self.expect("{")
                while not self.accept("}"):
                    rewires.append(self.connection(True))
                    if not self.at("}"):
                        self.expect(";")
            else:
                self.error(f"unknown attack clause {part!r}", t)
            self.accept(";")
        return AttackDecl(name, w, uses, tuple(rewrites), tuple(rewires), loc)


def parse_model(text: str) -> Model:
    """Parse model text; raises ``DSLError`` with located diagnostics."""
    return _Parser(text).model()


def parse_value(text: str):
    """Parse a single value (label, tuple or list) as written in the language."""
    p = _Parser(text)
    v = p.value()
    if p.tok.kind != "eof":
        p.error("trailing input after value")
    return v


# -- rendering --------------------------------------------------------------


def format_float(x: float) -> str:
    """Shortest decimal that reads back to the same float."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _labels(xs) -> str:
    return ", ".join(xs)


def _matrix(m) -> str:
    if m and isinstance(m[0], tuple):
        return "[" + ", ".join("[" + ", ".join(format_float(v) for v in row) + "]" for row in m) + "]"
    return "[" + ", ".join(format_float(v) for v in m) + "]"


def _subset(s: Subset) -> str:
    if s.labels is not None:
        return "{" + _labels(s.labels) + "}"
    return " ∪ ".join(f"[{format_float(a)}, {format_float(b)}]" for a, b in s.spans)


def _sel(p: PortSubset) -> str:
    return f"{p.side}[{p.index}]" + (f"[{p.coord}]" if p.coord is not None else "")


def _value(v) -> str:
    if isinstance(v, tuple):
        if v and v[0] == "list":
            return "[" + ", ".join(_value(x) for x in v[1:]) + "]"
        return "(" + ", ".join(_value(x) for x in v) + ")"
    return str(v)


def _ref(r) -> str:
    if isinstance(r, ConstRef):
        return f"const {r.value}"
    return f"{r.owner}.{r.side}[{r.index}]"


def _render(d) -> str:
    if isinstance(d, TypeDecl):
        if d.kind == "fin":
            return f"type {d.name} = fin {{{_labels(d.labels)}}}"
        return f"type {d.name} = lin {d.dim}"
    if isinstance(d, BoxDecl):
        return f"box {d.name} (in: {', '.join(d.inputs)}; out: {', '.join(d.outputs)})"
    if isinstance(d, WiringDecl):
        inner = ", ".join(a if a == b else f"{a}: {b}" for a, b in d.inner)
        body = "".join(f"  {_ref(c.target)} <- {_ref(c.source)};\n" for c in d.connections)
        return f"wiring {d.name} : [{inner}] -> {d.outer} {{\n{body}}}"
    if isinstance(d, ImplementDecl):
        return f"implement {d.box} by {d.wiring}"
    if isinstance(d, MooreDecl):
        up = "".join(f"    ({s}, ({_labels(x)})) -> {t};\n" for (s, x), t in d.update)
        ro = "".join(f"    {s} -> ({_labels(y)});\n" for s, y in d.readout)
        return (f"moore {d.name} for {d.box} {{\n  states {{{_labels(d.states)}}};\n  init {d.init};\n"
                f"  update {{\n{up}  }}\n  readout {{\n{ro}  }}\n}}")
    if isinstance(d, LtiDecl):
        return (f"lti {d.name} for {d.box} {{\n  A = {_matrix(d.A)};\n  B = {_matrix(d.B)};\n"
                f"  C = {_matrix(d.C)};\n}}")
    if isinstance(d, LinFnDecl):
        return f"linfn {d.name} for {d.box} {{ C = {_matrix(d.C)}; }}"
    if isinstance(d, FnDecl):
        rows = "".join(f"    ({_labels(x)}) -> ({_labels(y)});\n" for x, y in d.table)
        return f"fn {d.name} for {d.box} {{\n  table {{\n{rows}  }}\n}}"
    if isinstance(d, SystemDecl):
        return f"system {d.name} = {d.wiring}({', '.join(d.parts)})"
    if isinstance(d, ContractDecl):
        if d.kind == "rel":
            body = ",\n".join(f"  ({_labels(x)}; {_labels(y)})" for x, y in d.pairs)
            return f"contract {d.name} for {d.box} = rel {{\n{body}\n}}" if body else \
                f"contract {d.name} for {d.box} = rel {{}}"
        body = "".join(f"  {_sel(e)}: {_subset(e.subset)};\n" for e in d.entries)
        return f"contract {d.name} for {d.box} = indep {{\n{body}}}"
    if isinstance(d, TimeContractDecl):
        args = []
        if d.kind == "lift":
            args.append(d.of)
        elif d.kind == "window":
            args.append(f"assume={_sel(d.assume)} in {_subset(d.assume.subset)}")
            args.append(f"guarantee={_sel(d.guarantee)} in {_subset(d.guarantee.subset)}")
            args.append(f"delay={d.delay}")
        else:
            args.append(f"pattern=({_labels(d.pattern)})")
            args.append(f"response={d.response}")
            args.append(f"within={d.within}")
        args.append(f"horizon={d.horizon}")
        for side, k, vals in d.samples:
            args.append(f"{side}[{k}]={{{', '.join(format_float(v) for v in vals)}}}")
        return f"timecontract {d.name} for {d.box} = {d.kind}({', '.join(args)})"
    if isinstance(d, KbDecl):
        return f"kb {d.name} for {d.box} {{ {', '.join(d.entries)} }}"
    if isinstance(d, TestDecl):
        if d.kind == "terminal":
            return f"test {d.name} for {d.box} = terminal"
        if d.kind == "iotable":
            return f"test {d.name} for {d.box} = iotable(horizon={d.horizon})"
        args = []
        if d.init is not None:
            args.append(f"init={_value(d.init)}")
        args.append("inputs=" + _value(("list",) + tuple(d.inputs)))
        return f"test {d.name} for {d.box} = trace({', '.join(args)})"
    if isinstance(d, AttackDecl):
        lines = []
        if d.uses:
            lines.append(f"  use {', '.join(d.uses)};")
        lines += [f"  rewrite {a} with {s};" for a, s in d.rewrites]
        if d.rewires:
            lines.append("  rewire {")
            lines += [f"    {_ref(c.target)} <- {_ref(c.source)};" for c in d.rewires]
            lines.append("  }")
        return f"attack {d.name} on {d.wiring} {{\n" + "\n".join(lines) + "\n}"
    raise TypeError(f"cannot render {type(d).__name__}")


def render_model(m: Model) -> str:
    """Canonical text of ``m``; parsing it gives back an equal model."""
    return "".join(_render(d) + "\n" for d in m.decls)


# -- checking and building --------------------------------------------------


class _Fail(Exception):
    def __init__(self, loc, msg, related=()):
        self.loc, self.msg, self.related = loc, msg, tuple(related)


class Workspace:
    """Resolves a model's names into runtime objects, caching as it goes."""

    def __init__(self, model: Model):
        self.model = model
        self._cache: dict = {}
        self._building: set = set()

    # lookups
    def _decl(self, kind, name, loc):
        d = self.model.lookup(kind, name)
        if d is None:
            raise _Fail(loc, f"unknown {kind} {name!r}")
        return d

    def _memo(self, key, build):
        if key in self._cache:
            return self._cache[key]
        if key in self._building:
            raise _Fail((0, 0), f"{key[0]} {key[1]!r} is defined in terms of itself")
        self._building.add(key)
        try:
            v = build()
        finally:
            self._building.discard(key)
        self._cache[key] = v
        return v

    def port_type(self, name, loc=(0, 0)):
        def build():
            d = self._decl("type", name, loc)
            try:
                return FinSet(d.name, d.labels) if d.kind == "fin" else LinSpace(d.dim)
            except ValueError as e:
                raise _Fail(d.loc, str(e))
        return self._memo(("type", name), build)

    def interface(self, name, loc=(0, 0)) -> Interface:
        def build():
            d = self._decl("box", name, loc)
            return Interface(d.name, tuple(self.port_type(t, d.loc) for t in d.inputs),
                             tuple(self.port_type(t, d.loc) for t in d.outputs))
        return self._memo(("box", name), build)

    def diagram(self, name, loc=(0, 0)) -> WiringDiagram:
        return self._memo(("wiring", name), lambda: self._build_wiring(self._decl("wiring", name, loc)))

    def _build_wiring(self, d: WiringDecl) -> WiringDiagram:
        aliases = {}
        for b, (alias, box) in enumerate(d.inner):
            if alias in aliases or alias == "outer":
                raise _Fail(d.loc, f"inner alias {alias!r} is used twice" if alias != "outer"
                            else "'outer' cannot name an inner box")
            aliases[alias] = b
        inner = [self.interface(box, d.loc) for _, box in d.inner]
        inner = [Interface(alias, x.inputs, x.outputs) if alias != box else x
                 for (alias, box), x in zip(d.inner, inner)]
        outer = self.interface(d.outer, d.loc)
        in_src = [[None] * len(x.inputs) for x in inner]
        out_src = [None] * len(outer.outputs)
        first = {}
        for c in d.connections:
            t, s = c.target, c.source
            if t.owner == "outer":
                if t.side != "out":
                    raise _Fail(t.loc, "outer inputs cannot be targets; they are sources")
                if not 0 <= t.index < len(outer.outputs):
                    raise _Fail(t.loc, f"{d.outer} has no output {t.index}")
            else:
                if t.owner not in aliases:
                    raise _Fail(t.loc, f"{t.owner!r} is not an inner box of {d.name}")
                if t.side != "in":
                    raise _Fail(t.loc, "inner outputs cannot be targets; they are sources")
                if not 0 <= t.index < len(inner[aliases[t.owner]].inputs):
                    raise _Fail(t.loc, f"{t.owner} has no input {t.index}")
            key = (t.owner, t.index)
            if key in first:
                raise _Fail(t.loc, f"{_ref(t)} has two sources", [(*first[key], "first source here")])
            first[key] = t.loc
            if s.owner == "outer":
                if s.side != "in":
                    raise _Fail(s.loc, "outer outputs cannot be sources")
                src = OuterIn(s.index)
            else:
                if s.owner not in aliases:
                    raise _Fail(s.loc, f"{s.owner!r} is not an inner box of {d.name}")
                if s.side != "out":
                    raise _Fail(s.loc, "inner inputs cannot be sources")
                src = InnerOut(aliases[s.owner], s.index)
            if t.owner == "outer":
                out_src[t.index] = src
            else:
                in_src[aliases[t.owner]][t.index] = src
        for b, srcs in enumerate(in_src):
            for p, s in enumerate(srcs):
                if s is None:
                    raise _Fail(d.loc, f"{d.inner[b][0]}.in[{p}] has no source")
        for j, s in enumerate(out_src):
            if s is None:
                raise _Fail(d.loc, f"outer.out[{j}] has no source")
        w = WiringDiagram(tuple(inner), outer, tuple(map(tuple, in_src)), tuple(out_src))
        problems = validate_diagram(w)
        if problems:
            raise _Fail(d.loc, f"wiring {d.name}: " + "; ".join(problems))
        return w

    def implementations(self) -> dict:
        return {d.box: d.wiring for d in self.model.decls if isinstance(d, ImplementDecl)}

    def flatten(self, name, depth: int | None = None, with_boxes: bool = False):
        """Open up every inner box with a declared implementation, ``depth`` levels deep.

        With ``with_boxes`` also return the declared box name of every inner box.
        """
        impl = self.implementations()
        w = self.diagram(name)
        boxes = [box for _, box in self._decl("wiring", name, (0, 0)).inner]
        level = 0
        while depth is None or level < depth:
            changed = False
            b = len(boxes) - 1
            new_boxes = list(boxes)
            while b >= 0:
                if boxes[b] in impl:
                    child_name = impl[boxes[b]]
                    child = self.diagram(child_name)
                    w = substitute(w, b, child)
                    new_boxes[b : b + 1] = [box for _, box in self._decl("wiring", child_name, (0, 0)).inner]
                    changed = True
                b -= 1
            boxes = new_boxes
            if not changed:
                break
            level += 1
            if level > 64:
                raise _Fail((0, 0), "implementations nest too deeply (cycle?)")
        return (w, boxes) if with_boxes else w

    def behavior(self, name, loc=(0, 0)):
        return self._memo(("behavior", name), lambda: self._build_behavior(self._decl("behavior", name, loc)))

    def _build_behavior(self, d):
        if isinstance(d, SystemDecl):
            w = self.diagram(d.wiring, d.loc)
            if len(d.parts) != len(w.inner):
                raise _Fail(d.loc, f"{d.wiring} has {len(w.inner)} inner boxes, {len(d.parts)} parts given")
            parts = [self.behavior(p, d.loc) for p in d.parts]
            for b, (p, sys) in enumerate(zip(d.parts, parts)):
                if sys.interface.ports() != w.inner[b].ports():
                    raise _Fail(d.loc, f"part {p!r} does not fit inner box {w.inner[b].name}")
            return sec.compose_system(w, parts)
        iface = self.interface(d.box, d.loc)
        if isinstance(d, MooreDecl):
            if not iface.is_finite():
                raise _Fail(d.loc, f"moore {d.name}: box {d.box} has linear ports")
            update, readout = {}, {}
            for (s, x), t in d.update:
                if (s, x) in update:
                    raise _Fail(d.loc, f"moore {d.name}: two update rows for ({s}, ({_labels(x)}))")
                update[(s, x)] = t
            for s, y in d.readout:
                readout[s] = y
            m = MooreMachine(iface, d.states, update, readout, d.init)
            problems = m.check()
            if problems:
                raise _Fail(d.loc, f"moore {d.name}: " + "; ".join(problems))
            return m
        if isinstance(d, FnDecl):
            if not iface.is_finite():
                raise _Fail(d.loc, f"fn {d.name}: box {d.box} has linear ports")
            table = dict(d.table)
            missing = [x for x in input_space(iface.inputs) if x not in table]
            if missing:
                raise _Fail(d.loc, f"fn {d.name}: missing rows for {missing[:3]}")
            for x, y in d.table:
                if len(x) != len(iface.inputs) or any(v not in p for v, p in zip(x, iface.inputs)):
                    raise _Fail(d.loc, f"fn {d.name}: ({_labels(x)}) is not an input tuple")
                if len(y) != len(iface.outputs) or any(v not in p for v, p in zip(y, iface.outputs)):
                    raise _Fail(d.loc, f"fn {d.name}: ({_labels(y)}) is not an output tuple")
            return FiniteFunction(iface, table)
        if not iface.is_linear():
            raise _Fail(d.loc, f"{d.name}: box {d.box} has finite ports")
        try:
            if isinstance(d, LtiDecl):
                return LTISystem(iface, np.array(d.A, float), np.array(d.B, float), np.array(d.C, float))
            return LinearFunction(iface, np.array(d.C, float))
        except ValueError as e:
            raise _Fail(d.loc, f"{d.name}: matrix shapes do not fit box {d.box}: {e}")

    def system(self, name, loc=(0, 0)):
        """A behavior as a stateful system (functions are embedded)."""
        return sec._as_system(self.behavior(name, loc))

    def _port_subset(self, iface, e: PortSubset):
        ports = iface.inputs if e.side == "in" else iface.outputs
        if not 0 <= e.index < len(ports):
            raise _Fail(e.loc, f"{iface.name} has no {e.side}put {e.index}")
        p = ports[e.index]
        if isinstance(p, FinSet):
            if e.subset.labels is None or e.coord is not None:
                raise _Fail(e.loc, f"{e.side}[{e.index}] is finite; give a label set")
            bad = [v for v in e.subset.labels if v not in p]
            if bad:
                raise _Fail(e.loc, f"labels {bad} are not in {p.name}")
            return p, frozenset(e.subset.labels)
        if e.subset.spans is None:
            raise _Fail(e.loc, f"{e.side}[{e.index}] is linear; give intervals")
        if e.coord is not None and not 0 <= e.coord < p.dim:
            raise _Fail(e.loc, f"{e.side}[{e.index}] has no coordinate {e.coord}")
        return p, ct.Intervals(e.subset.spans)

    def contract(self, name, loc=(0, 0)):
        return self._memo(("contract", name), lambda: self._build_contract(self._decl("contract", name, loc)))

    def _build_contract(self, d: ContractDecl):
        iface = self.interface(d.box, d.loc)
        if d.kind == "rel":
            if not iface.is_finite():
                raise _Fail(d.loc, f"relation contract {d.name} needs finite ports")
            for x, y in d.pairs:
                if len(x) != len(iface.inputs) or len(y) != len(iface.outputs) or any(
                        v not in p for v, p in zip(x + y, iface.inputs + iface.outputs)):
                    raise _Fail(d.loc, f"({_labels(x)}; {_labels(y)}) is not a value pair of {d.box}")
            return ct.FiniteRelation(iface, frozenset(d.pairs))
        ins = [ct.full_subset(p) for p in iface.inputs]
        outs = [ct.full_subset(p) for p in iface.outputs]
        for e in d.entries:
            p, s = self._port_subset(iface, e)
            target = ins if e.side == "in" else outs
            if isinstance(p, FinSet):
                target[e.index] = s
            else:
                coords = list(target[e.index])
                for c in ([e.coord] if e.coord is not None else range(p.dim)):
                    coords[c] = s
                target[e.index] = tuple(coords)
        return ct.Independent(iface, ins, outs)

    def time_contract(self, name, loc=(0, 0)):
        return self._memo(("timecontract", name),
                          lambda: self._build_time(self._decl("timecontract", name, loc)))

    def _graphs(self, iface, samples, d):
        def values(side, ports):
            got = {k: v for s, k, v in samples if s == side}
            per = []
            for k, p in enumerate(ports):
                if isinstance(p, FinSet):
                    per.append(p.labels)
                elif k in got and p.dim == 1:
                    per.append(tuple(got[k]))
                else:
                    raise _Fail(d.loc, f"{side}[{k}] is linear; declare samples {side}[{k}]={{...}}")
            import itertools
            return list(itertools.product(*per))
        return (tm.complete_graph(values("in", iface.inputs)),
                tm.complete_graph(values("out", iface.outputs)))

    def _build_time(self, d: TimeContractDecl):
        iface = self.interface(d.box, d.loc)
        if d.kind == "lift":
            r = self.contract(d.of, d.loc)
            if r.interface.ports() != iface.ports():
                raise _Fail(d.loc, f"contract {d.of} is not for box {d.box}")
            ins = {k: v for s, k, v in d.samples if s == "in"}
            outs = {k: v for s, k, v in d.samples if s == "out"}
            try:
                c = tm.lift_static(r, ins, outs, d.horizon)
            except ValueError as e:
                raise _Fail(d.loc, str(e))
            return tm.TimeContract(c.in_graph, c.out_graph, c.membership, d.horizon, d.name)
        g_in, g_out = self._graphs(iface, d.samples, d)
        if d.kind == "window":
            if d.assume is None or d.guarantee is None:
                raise _Fail(d.loc, "window needs assume= and guarantee=")
            if d.assume.side != "in" or d.guarantee.side != "out":
                raise _Fail(d.loc, "window assumes on an input and guarantees on an output")
            pa, sa = self._port_subset(iface, d.assume)
            pg, sg = self._port_subset(iface, d.guarantee)
            ka, kg = d.assume.index, d.guarantee.index
            c = tm.window_contract(g_in, g_out, lambda a: ct._in_subset(pa, sa, a[ka]),
                                   lambda b: ct._in_subset(pg, sg, b[kg]), d.delay, d.horizon)
            return tm.TimeContract(g_in, g_out, c.membership, d.horizon, d.name)
        if len(iface.inputs) != 1 or len(iface.outputs) != 1 or not iface.is_finite():
            raise _Fail(d.loc, "implies contracts are for boxes with one finite input and output")
        if any(v not in iface.inputs[0] for v in d.pattern) or d.response not in iface.outputs[0]:
            raise _Fail(d.loc, "pattern or response value is outside the port type")
        pat = tuple((v,) for v in d.pattern)
        c = tm.implies_contract(g_in, g_out, pat, (d.response,), d.within, d.horizon)
        return tm.TimeContract(g_in, g_out, c.membership, d.horizon, d.name)

    def kb(self, name, loc=(0, 0)) -> sec.KnowledgeDatabase:
        def build():
            d = self._decl("kb", name, loc)
            iface = self.interface(d.box, d.loc)
            entries = []
            for e in d.entries:
                s = self.system(e, d.loc)
                if s.interface.ports() != iface.ports():
                    raise _Fail(d.loc, f"kb entry {e!r} does not inhabit {d.box}")
                entries.append((e, s))
            return sec.KnowledgeDatabase(iface, entries)
        return self._memo(("kb", name), build)

    def test(self, name, loc=(0, 0)) -> sec.Test:
        def build():
            d = self._decl("test", name, loc)
            iface = self.interface(d.box, d.loc)
            if d.kind == "terminal":
                t = sec.terminal_test(d.name)
            elif d.kind == "iotable":
                if not iface.is_finite():
                    raise _Fail(d.loc, "io-table tests need finite ports")
                t = sec.iotable_test(d.horizon, d.name)
            else:
                inputs = [convert_input(iface, x, d.loc) for x in d.inputs]
                t = sec.trace_test(inputs, None if d.init is None else convert_state(d.init), d.name)
            return sec.Test(t.name, t.observe, iface)
        return self._memo(("test", name), build)

    def attack(self, name, loc=(0, 0)):
        """``(diagram, behaviors, plan)`` for an attack declaration."""
        d = self._decl("attack", name, loc)
        w = self.diagram(d.wiring, d.loc)
        wd = self._decl("wiring", d.wiring, d.loc)
        if len(d.uses) != len(w.inner):
            raise _Fail(d.loc, f"attack {d.name}: 'use' lists {len(d.uses)} behaviors for "
                               f"{len(w.inner)} inner boxes")
        behaviors = [self.behavior(u, d.loc) for u in d.uses]
        for b, (u, s) in enumerate(zip(d.uses, behaviors)):
            if s.interface.ports() != w.inner[b].ports():
                raise _Fail(d.loc, f"{u!r} does not fit inner box {wd.inner[b][0]}")
        aliases = {a: b for b, (a, _) in enumerate(wd.inner)}
        rewrites = {}
        for alias, sys in d.rewrites:
            if alias not in aliases:
                raise _Fail(d.loc, f"{alias!r} is not an inner box of {d.wiring}")
            rewrites[aliases[alias]] = self.behavior(sys, d.loc)
        rewires = {}
        for c in d.rewires:
            t, s = c.target, c.source
            if t.owner == "outer":
                if t.side != "out":
                    raise _Fail(t.loc, "outer inputs cannot be rewired targets")
                key = OuterOut(t.index)
            elif t.owner in aliases and t.side == "in":
                key = InnerIn(aliases[t.owner], t.index)
            else:
                raise _Fail(t.loc, f"{_ref(t)} is not a rewirable input")
            if isinstance(s, ConstRef):
                src = sec.Const(s.value)
                ptype = (w.inner[key.box].inputs[key.port] if isinstance(key, InnerIn)
                         else w.outer.outputs[key.index]) if _in_range(w, key) else None
                if isinstance(ptype, LinSpace):
                    src = sec.Const(float(s.value))
            elif s.owner == "outer" and s.side == "in":
                src = OuterIn(s.index)
            elif s.owner in aliases and s.side == "out":
                src = InnerOut(aliases[s.owner], s.index)
            else:
                raise _Fail(s.loc, f"{_ref(s)} cannot be a source")
            rewires[key] = src
        plan = sec.AttackPlan(rewrites, rewires)
        try:
            sec.rewired_diagram(w, rewires, behaviors)
        except (ValueError, IndexError) as e:
            raise _Fail(d.loc, f"attack {d.name}: {e}")
        return w, behaviors, plan


def _in_range(w, key) -> bool:
    if isinstance(key, InnerIn):
        return key.box < len(w.inner) and key.port < len(w.inner[key.box].inputs)
    return key.index < len(w.outer.outputs)


def convert_state(v):
    """A parsed value as a state: tuples stay tuples, lists become float arrays."""
    if isinstance(v, tuple):
        if v and v[0] == "list":
            return np.array([float(x) for x in v[1:]])
        return tuple(convert_state(x) for x in v)
    return v


def convert_input(iface: Interface, x: tuple, loc=(0, 0)):
    """One input step: a label tuple for finite boxes, a float vector for linear ones."""
    if iface.is_linear():
        try:
            vec = np.array([float(v) for v in x])
        except (TypeError, ValueError):
            raise _Fail(loc, f"input {x!r} is not numeric")
        if vec.shape != (iface.in_dim,):
            raise _Fail(loc, f"input {x!r} does not have {iface.in_dim} coordinates")
        return vec
    if len(x) != len(iface.inputs) or any(v not in p for v, p in zip(x, iface.inputs)):
        raise _Fail(loc, f"input {x!r} does not fit the box")
    return tuple(x)


def typecheck_model(m: Model) -> list[Diagnostic]:
    """Resolve every declaration; return all problems found."""
    diags = []
    seen = {}
    for d in m.decls:
        kind = KINDS[type(d)]
        name = d.box if isinstance(d, ImplementDecl) else d.name
        if (kind, name) in seen:
            diags.append(Diagnostic("error", *d.loc, f"{kind} {name!r} is declared twice",
                                    ((*seen[(kind, name)], "first declaration"),)))
        else:
            seen[(kind, name)] = d.loc
    ws = Workspace(m)
    builders = {
        TypeDecl: ws.port_type,
        BoxDecl: ws.interface,
        WiringDecl: ws.diagram,
        ContractDecl: ws.contract,
        TimeContractDecl: ws.time_contract,
        KbDecl: ws.kb,
        TestDecl: ws.test,
        AttackDecl: ws.attack,
    }
    for d in m.decls:
        try:
            if isinstance(d, ImplementDecl):
                box = ws.interface(d.box, d.loc)
                w = ws.diagram(d.wiring, d.loc)
                if w.outer.ports() != box.ports():
                    raise _Fail(d.loc, f"wiring {d.wiring} does not implement box {d.box}")
            elif KINDS[type(d)] == "behavior":
                ws.behavior(d.name, d.loc)
            else:
                builders[type(d)](d.name, d.loc)
        except _Fail as f:
            loc = f.loc if f.loc != (0, 0) else d.loc
            diag = Diagnostic("error", *loc, f.msg, f.related)
            if diag not in diags:
                diags.append(diag)
    return diags


def load_model(text: str) -> tuple[Model | None, list[Diagnostic]]:
    """Parse and check; returns the model (or None) and all diagnostics."""
    try:
        m = parse_model(text)
    except DSLError as e:
        return None, e.diagnostics
    return m, typecheck_model(m)
