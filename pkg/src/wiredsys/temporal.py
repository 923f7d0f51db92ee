"""Discrete-time signals on graph-typed wires and time contracts.

A wire carrying values from a finite set ``A`` is turned into the complete
graph ``K(A)``: one vertex per value and one edge per ordered pair. A
length-``n`` section is a path with ``n`` edges, i.e. a signal observed at
times ``0..n``. Sections restrict to sub-windows and glue at a shared
vertex.

A time contract gives, for every window length ``n``, a set of allowed
(input section, output section) pairs. Its membership is an executable
predicate; exhaustive checks are bounded by a horizon.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Sequence

from .contracts import StaticContract, contains
from .wiring import FinSet

__all__ = [
    "FinGraph",
    "Section",
    "TimeContract",
    "ClosureReport",
    "complete_graph",
    "section_from_values",
    "paths",
    "restrict_section",
    "glue_sections",
    "lift_static",
    "window_contract",
    "implies_contract",
    "exactly_one_contract",
    "time_membership",
    "check_restriction_closed",
]


@dataclass(frozen=True)
class FinGraph:
    vertices: tuple
    edges: tuple  # (label, source vertex, target vertex)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise ValueError("repeated vertices")
        labels = [e[0] for e in self.edges]
        if len(set(labels)) != len(labels):
            raise ValueError("repeated edge labels")
        for lab, s, t in self.edges:
            if s not in vs or t not in vs:
                raise ValueError(f"edge {lab!r} has an undeclared endpoint")

    def edge(self, label):
        for e in self.edges:
            if e[0] == label:
                return e
        raise KeyError(label)

    def out_edges(self, v) -> list:
        return [e for e in self.edges if e[1] == v]


@dataclass(frozen=True)
class Section:
    """A path of ``len(edges)`` edges through ``vertices``."""

    graph: FinGraph = field(repr=False, compare=False)
    vertices: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(self.vertices) != len(self.edges) + 1:
            raise ValueError("a section of length n has n + 1 vertices")
        for i, lab in enumerate(self.edges):
            _, s, t = self.graph.edge(lab)
            if (s, t) != (self.vertices[i], self.vertices[i + 1]):
                raise ValueError(f"edge {lab!r} does not run from vertex {i} to vertex {i + 1}")

    @property
    def length(self) -> int:
        return len(self.edges)

    def __len__(self):
        return self.length


def complete_graph(values: Iterable[Hashable]) -> FinGraph:
    """``K(A)``: vertices ``A``, one edge ``(a, b)`` per ordered pair."""
    vs = tuple(values)
    return FinGraph(vs, tuple(((a, b), a, b) for a in vs for b in vs))


def section_from_values(graph: FinGraph, values: Sequence) -> Section:
    """The section of ``K(A)`` visiting ``values`` in order."""
    values = tuple(values)
    if not values:
        raise ValueError("a section visits at least one vertex")
    return Section(graph, values, tuple(zip(values, values[1:])))


def paths(graph: FinGraph, n: int) -> Iterator[Section]:
    """Every section of length ``n`` in ``graph``."""
    def extend(vs, es):
        if len(es) == n:
            yield Section(graph, vs, es)
            return
        for lab, _, t in graph.out_edges(vs[-1]):
            yield from extend(vs + (t,), es + (lab,))

    for v in graph.vertices:
        yield from extend((v,), ())


def restrict_section(s: Section, p: int, m: int) -> Section:
    """The sub-path of length ``m`` starting at vertex ``p``."""
    if p < 0 or m < 0 or p + m > s.length:
        raise IndexError(f"cannot restrict a length-{s.length} section to [{p}, {p + m}]")
    return Section(s.graph, s.vertices[p : p + m + 1], s.edges[p : p + m])


def glue_sections(x: Section, y: Section) -> Section:
    if x.vertices[-1] != y.vertices[0]:
        raise ValueError(f"cannot glue: {x.vertices[-1]!r} != {y.vertices[0]!r}")
    return Section(x.graph, x.vertices + y.vertices[1:], x.edges + y.edges)


Membership = Callable[[tuple, tuple], bool]


@dataclass(frozen=True)
class TimeContract:
    """Allowed (input, output) signal pairs per window length.

    ``membership`` receives the two vertex sequences (of equal length
    ``n + 1``). ``horizon`` bounds exhaustive checks.
    """

    in_graph: FinGraph = field(repr=False)
    out_graph: FinGraph = field(repr=False)
    membership: Membership = field(repr=False, compare=False)
    horizon: int = 8
    name: str = ""


def time_membership(c: TimeContract, x: Section, y: Section) -> bool:
    if x.length != y.length:
        raise ValueError(f"sections have lengths {x.length} and {y.length}")
    return bool(c.membership(x.vertices, y.vertices))


def _port_values(ports, samples) -> list:
    per_port = []
    for i, p in enumerate(ports):
        if isinstance(p, FinSet):
            per_port.append(p.labels)
        else:
            if samples is None or i not in samples:
                raise ValueError(f"linear port {i} needs a finite sample grid")
            vals = tuple(samples[i])
            if p.dim != 1:
                vals = tuple(tuple(v) for v in vals)
            per_port.append(vals)
    return list(itertools.product(*per_port))


def lift_static(r: StaticContract, in_samples=None, out_samples=None, horizon: int = 8) -> TimeContract:
    """Lift a static contract pointwise: every instant must be related by ``r``.

    Vertices are tuples of per-port values. Linear ports need a sample grid,
    given as ``{port index: values}``.
    """
    g_in = complete_graph(_port_values(r.interface.inputs, in_samples))
    g_out = complete_graph(_port_values(r.interface.outputs, out_samples))

    def member(a, b):
        return all(contains(r, x, y) for x, y in zip(a, b))

    return TimeContract(g_in, g_out, member, horizon, "lift")


def window_contract(in_graph, out_graph, assume: Callable, guarantee: Callable, delay: int = 1,
                    horizon: int = 8) -> TimeContract:
    """``assume(a_i)`` implies ``guarantee(b_{i+delay})`` wherever ``i + delay`` is in the window."""

    def member(a, b):
        n = len(a) - 1
        return all(guarantee(b[i + delay]) for i in range(n + 1) if i + delay <= n and assume(a[i]))

    return TimeContract(in_graph, out_graph, member, horizon, "window")


def implies_contract(in_graph, out_graph, pattern: Sequence, response, within: int,
                     horizon: int = 8) -> TimeContract:
    """After the input shows ``pattern`` at ``i..i+L-1``, some output in
    ``i+L .. i+L+within-1`` equals ``response``.

    An occurrence whose whole response window does not fit in the section
    imposes nothing.
    """
    pattern = tuple(pattern)
    L = len(pattern)

    def member(a, b):
        n = len(a) - 1
        for i in range(n + 1):
            if i + L + within - 1 > n:
                break
            if tuple(a[i : i + L]) == pattern and response not in b[i + L : i + L + within]:
                return False
        return True

    return TimeContract(in_graph, out_graph, member, horizon, "implies")


def exactly_one_contract(in_graph, out_graph, value, horizon: int = 8) -> TimeContract:
    """Exactly one output in the window equals ``value``; not restriction closed."""

    def member(a, b):
        return sum(1 for v in b if v == value) == 1

    return TimeContract(in_graph, out_graph, member, horizon, "exactly-one")


@dataclass
class ClosureReport:
    closed: bool
    checked: int = 0
    counterexample: tuple | None = None  # (n, a, b, p, m)


def _pairs(c: TimeContract, n: int):
    ins = list(itertools.product(c.in_graph.vertices, repeat=n + 1))
    outs = list(itertools.product(c.out_graph.vertices, repeat=n + 1))
    for a in ins:
        for b in outs:
            yield a, b


def check_restriction_closed(c: TimeContract, N: int, exhaustive: bool = False) -> ClosureReport:
    """Check that restricting an allowed pair to a sub-window stays allowed.

    Sections are enumerated as vertex sequences over the complete graphs of
    the contract's carriers, for every length ``n <= N``. By default only
    the two one-step restrictions (drop the first or last instant) are
    checked; every restriction is a chain of these, so closure under them
    at all lengths up to ``N`` gives closure under every ``(p, m)``.
    ``exhaustive=True`` checks every ``(p, m)`` directly.
    """
    if N > c.horizon:
        raise ValueError(f"N = {N} exceeds the contract horizon {c.horizon}")
    report = ClosureReport(True)
    for n in range(1, N + 1):
        if exhaustive:
            windows = [(p, m) for m in range(n) for p in range(n - m + 1)]
        else:
            windows = [(0, n - 1), (1, n - 1)]
        for a, b in _pairs(c, n):
            if not c.membership(a, b):
                continue
            for p, m in windows:
                report.checked += 1
                if not c.membership(a[p : p + m + 1], b[p : p + m + 1]):
                    report.closed = False
                    report.counterexample = (n, a, b, p, m)
                    return report
    return report
