"""Attacker-side reasoning about composed systems.

An attacker holds a knowledge database of candidate systems for a box and a
collection of tests, i.e. observation procedures. Running the same tests on
the target and on every candidate and keeping the candidates that agree is
the filtering step; with enough tests the survivors are exactly the
candidates that behave like the target.

Attacks come in two kinds. A rewrite replaces the behavior inside some boxes
and recomposes. A rewire changes where some ports get their values and
recomposes the unchanged behaviors. Cutting a wire always needs an explicit
constant source.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence, Union

import numpy as np

from .behavior import (
    FiniteFunction,
    LinearFunction,
    LTISystem,
    MooreMachine,
    embed_function,
    input_space,
    lti_apply,
    moore_apply,
    simulate,
)
from .wiring import (
    FinSet,
    InnerIn,
    InnerOut,
    Interface,
    InterfaceMismatch,
    OuterIn,
    OuterOut,
    WiringDiagram,
    validate_diagram,
)

__all__ = [
    "KnowledgeDatabase",
    "Test",
    "Const",
    "AttackPlan",
    "AttackResult",
    "EquivalenceReport",
    "terminal_test",
    "trace_test",
    "iotable_test",
    "builtin_tests",
    "run_tests",
    "observations_equal",
    "yoneda_filter",
    "behavioral_equiv",
    "equivalence_report",
    "box_index",
    "rewired_diagram",
    "compose_system",
    "apply_rewrite",
    "apply_rewire",
    "apply_attack",
    "distinguishing_input",
]

OBS_TOL = 1e-9


def _as_system(s):
    if isinstance(s, (FiniteFunction, LinearFunction)):
        return embed_function(s)
    return s


@dataclass(frozen=True)
class KnowledgeDatabase:
    interface: Interface
    entries: tuple  # of (name, system)

    def __post_init__(self):
        entries = tuple((n, _as_system(s)) for n, s in self.entries)
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("knowledge database entries need distinct names")
        for n, s in entries:
            if s.interface.ports() != self.interface.ports():
                raise InterfaceMismatch(f"entry {n!r} does not inhabit {self.interface.name}")
        object.__setattr__(self, "entries", entries)

    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def __getitem__(self, name):
        return dict(self.entries)[name]


@dataclass(frozen=True)
class Test:
    """A named, deterministic observation of a system."""

    name: str
    observe: Callable[[Any], Any] = field(compare=False, repr=False)
    interface: Interface | None = None

    def __call__(self, s):
        return self.observe(s)


def terminal_test(name: str = "terminal") -> Test:
    """Observes nothing: every system gets the same value."""
    return Test(name, lambda s: ())


def _freeze(v):
    if isinstance(v, np.ndarray):
        return tuple(float(x) for x in v.ravel())
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


def trace_test(inputs: Sequence, init=None, name: str = "trace") -> Test:
    """The output sequence from ``init`` (default: the system's own initial state)."""
    inputs = [tuple(x) if not isinstance(x, np.ndarray) else x for x in inputs]

    def observe(s):
        s = _as_system(s)
        t = simulate(s, init, inputs)
        return tuple(_freeze(y) for y in t.outputs)

    return Test(name, observe)


def iotable_test(horizon: int, name: str = "iotable") -> Test:
    """The output sequence for every input sequence of length ``<= horizon``.

    Runs from the machine's designated initial state, so machines with
    different state labels are compared by behavior only. Finite machines
    only.
    """

    def observe(s):
        s = _as_system(s)
        if not isinstance(s, MooreMachine):
            raise TypeError("the io-table test needs a finite machine")
        xs = input_space(s.interface.inputs)
        table = {(): (s.read(s.initial),)}
        frontier = [((), s.initial)]
        for _ in range(horizon):
            nxt = []
            for seq, st in frontier:
                for x in xs:
                    t = s.step(st, x)
                    table[seq + (x,)] = table[seq] + (s.read(t),)
                    nxt.append((seq + (x,), t))
            frontier = nxt
        return tuple(sorted(table.items(), key=repr))

    return Test(name, observe)


def builtin_tests(interface: Interface, horizon: int, probes: Sequence[Sequence] = ()) -> list[Test]:
    """The terminal test, one trace test per probe sequence and the io-table test."""
    tests = [terminal_test()]
    tests += [trace_test(p, name=f"trace{i}") for i, p in enumerate(probes)]
    if interface.is_finite():
        tests.append(iotable_test(horizon))
    return [Test(t.name, t.observe, interface) for t in tests]


def run_tests(s, tests: Sequence[Test]) -> dict:
    s = _as_system(s)
    record = {}
    for t in tests:
        if t.interface is not None and t.interface.ports() != s.interface.ports():
            raise InterfaceMismatch(f"test {t.name!r} is for {t.interface.name}, not {s.interface.name}")
        record[t.name] = t(s)
    return record


def observations_equal(a, b, tol: float = OBS_TOL) -> bool:
    """Structural equality with floats compared to an absolute tolerance."""
    if isinstance(a, float) or isinstance(b, float):
        try:
            return math.isclose(float(a), float(b), rel_tol=0, abs_tol=tol)
        except (TypeError, ValueError):
            return False
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(observations_equal(a[k], b[k], tol) for k in a)
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(observations_equal(x, y, tol) for x, y in zip(a, b))
    return a == b


def yoneda_filter(target_obs: Mapping, kb: KnowledgeDatabase, tests: Sequence[Test]) -> list[str]:
    """Names of the entries whose observations agree with ``target_obs`` on every test."""
    out = []
    for name, s in kb.entries:
        obs = run_tests(s, tests)
        if all(observations_equal(obs[t.name], target_obs[t.name]) for t in tests):
            out.append(name)
    return out


def _reachable(m: MooreMachine, s0) -> list:
    xs = input_space(m.interface.inputs)
    seen, order, todo = {s0}, [s0], deque([s0])
    while todo:
        s = todo.popleft()
        for x in xs:
            t = m.step(s, x)
            if t not in seen:
                seen.add(t)
                order.append(t)
                todo.append(t)
    return order


def behavioral_equiv(m1, m2, init1=None, init2=None) -> bool:
    """Pointed bisimilarity of two deterministic machines.

    Partition refinement on the disjoint union of the reachable parts:
    start from blocks of equal readout and split until successors of each
    block agree, then compare the blocks of the two start states.
    """
    m1, m2 = _as_system(m1), _as_system(m2)
    if not isinstance(m1, MooreMachine) or not isinstance(m2, MooreMachine):
        raise TypeError("behavioral_equiv compares finite machines")
    if m1.interface.ports() != m2.interface.ports():
        raise InterfaceMismatch("machines inhabit different boxes")
    s1 = m1.initial if init1 is None else init1
    s2 = m2.initial if init2 is None else init2
    xs = input_space(m1.interface.inputs)
    nodes = [(0, s) for s in _reachable(m1, s1)] + [(1, s) for s in _reachable(m2, s2)]
    machines = (m1, m2)

    def succ(node, x):
        k, s = node
        return (k, machines[k].step(s, x))

    block = {v: machines[v[0]].read(v[1]) for v in nodes}
    # Relabel readouts to small ints so the refinement loop compares cheaply.
    keys = {}
    block = {v: keys.setdefault(b, len(keys)) for v, b in block.items()}
    count = len(keys)
    while True:
        sigs = {}
        new = {}
        for v in nodes:
            sig = (block[v],) + tuple(block[succ(v, x)] for x in xs)
            new[v] = sigs.setdefault(sig, len(sigs))
        block = new
        if len(sigs) == count:
            break
        count = len(sigs)
    return block[(0, s1)] == block[(1, s2)]


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    isomorphic: bool
    notion: str = "bisimulation of reachable parts"


def _reachable_isomorphic(m1, m2, s1, s2) -> bool:
    xs = input_space(m1.interface.inputs)
    fwd, bwd = {s1: s2}, {s2: s1}
    todo = deque([(s1, s2)])
    while todo:
        a, b = todo.popleft()
        if m1.read(a) != m2.read(b):
            return False
        for x in xs:
            ta, tb = m1.step(a, x), m2.step(b, x)
            if ta in fwd or tb in bwd:
                if fwd.get(ta) != tb or bwd.get(tb) != ta:
                    return False
                continue
            fwd[ta], bwd[tb] = tb, ta
            todo.append((ta, tb))
    return True


def equivalence_report(m1, m2, init1=None, init2=None) -> EquivalenceReport:
    """Bisimilarity plus whether the reachable parts are isomorphic as machines."""
    m1, m2 = _as_system(m1), _as_system(m2)
    eq = behavioral_equiv(m1, m2, init1, init2)
    s1 = m1.initial if init1 is None else init1
    s2 = m2.initial if init2 is None else init2
    return EquivalenceReport(eq, eq and _reachable_isomorphic(m1, m2, s1, s2))


# -- attacks ---------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    """A constant source used when a rewiring cuts a wire."""

    value: Hashable


Target = Union[InnerIn, OuterOut]
Source = Union[OuterIn, InnerOut, Const]


@dataclass(frozen=True)
class AttackPlan:
    """``rewrites``: box (name or index) -> replacement system or a function of
    the old system. ``rewirings``: port -> new source, or a whole diagram."""

    rewrites: Mapping = field(default_factory=dict)
    rewirings: Union[Mapping, WiringDiagram] = field(default_factory=dict)


@dataclass
class AttackResult:
    before: Any
    after: Any
    diagram: WiringDiagram
    behaviors: list


def box_index(d: WiringDiagram, key) -> int:
    if isinstance(key, int):
        if not 0 <= key < len(d.inner):
            raise IndexError(f"box {key} out of range")
        return key
    hits = [b for b, x in enumerate(d.inner) if x.name == key]
    if len(hits) != 1:
        raise KeyError(f"box name {key!r} matches {len(hits)} inner boxes")
    return hits[0]


def _const_system(ptype, value):
    if isinstance(ptype, FinSet):
        if value not in ptype:
            raise ValueError(f"constant {value!r} is not a {ptype.name} label")
        iface = Interface(f"const[{value}]", (), (ptype,))
        return MooreMachine(iface, ("*",), {("*", ()): "*"}, {"*": (value,)})
    v = np.atleast_1d(np.asarray(value, float))
    if np.any(v != 0):
        # An LTI readout is linear in the state, so only zero is a constant.
        raise ValueError("only the zero constant can feed a linear port")
    iface = Interface("const[0]", (), (ptype,))
    return LTISystem(iface, np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((ptype.dim, 0)))


def rewired_diagram(d: WiringDiagram, rewirings, behaviors: Sequence = ()) -> tuple[WiringDiagram, list]:
    """Apply source overrides to ``d``; constants become extra inner boxes.

    Returns the new diagram and the behaviors extended with the constant
    boxes' systems.
    """
    if isinstance(rewirings, WiringDiagram):
        if [x.ports() for x in rewirings.inner] != [x.ports() for x in d.inner] or \
                rewirings.outer.ports() != d.outer.ports():
            raise InterfaceMismatch("a replacement diagram must keep the inner and outer boxes")
        new = rewirings
        problems = validate_diagram(new)
        if problems:
            raise InterfaceMismatch("; ".join(problems))
        return new, list(behaviors)
    inner = list(d.inner)
    in_src = [list(s) for s in d.in_src]
    out_src = list(d.out_src)
    extra = []
    for target, src in rewirings.items():
        if isinstance(target, InnerIn):
            want = d.inner[target.box].inputs[target.port]
        elif isinstance(target, OuterOut):
            want = d.outer.outputs[target.index]
        else:
            raise TypeError(f"{target!r} is not a rewirable port")
        if isinstance(src, Const):
            sys = _const_system(want, src.value)
            inner.append(sys.interface)
            extra.append(sys)
            src = InnerOut(len(inner) - 1, 0)
        if isinstance(target, InnerIn):
            in_src[target.box][target.port] = src
        else:
            out_src[target.index] = src
    new = WiringDiagram(tuple(inner), d.outer, tuple(map(tuple, in_src)) + tuple(() for _ in extra), tuple(out_src))
    problems = validate_diagram(new)
    if problems:
        raise InterfaceMismatch("rewired diagram is invalid: " + "; ".join(problems))
    return new, list(behaviors) + extra


def compose_system(d: WiringDiagram, behaviors: Sequence):
    """Recompose with whichever algebra fits the boxes."""
    behaviors = [_as_system(b) for b in behaviors]
    if all(isinstance(b, LTISystem) for b in behaviors) and d.outer.is_linear():
        return lti_apply(d, behaviors)
    return moore_apply(d, behaviors)


def _rewritten(d, rewrites, behaviors) -> list:
    new = list(behaviors)
    for key, repl in rewrites.items():
        b = box_index(d, key)
        sys = repl(behaviors[b]) if callable(repl) and not isinstance(
            repl, (FiniteFunction, LinearFunction)) else repl
        sys = _as_system(sys)
        if sys.interface.ports() != d.inner[b].ports():
            raise InterfaceMismatch(f"replacement for {d.inner[b].name} has the wrong ports")
        new[b] = sys
    return new


def apply_rewrite(rewrites: Mapping, d: WiringDiagram, behaviors: Sequence):
    """Replace some boxes' behaviors; return ``(new composite, old composite)``."""
    old = compose_system(d, behaviors)
    return compose_system(d, _rewritten(d, rewrites, behaviors)), old


def apply_rewire(rewirings, d: WiringDiagram, behaviors: Sequence):
    """Recompose unchanged behaviors over a rewired diagram; ``(new, old)``."""
    old = compose_system(d, behaviors)
    nd, nb = rewired_diagram(d, rewirings, behaviors)
    return compose_system(nd, nb), old


def apply_attack(plan: AttackPlan, d: WiringDiagram, behaviors: Sequence) -> AttackResult:
    """Rewrite the named boxes, then rewire, then recompose."""
    before = compose_system(d, behaviors)
    nb = _rewritten(d, plan.rewrites, behaviors)
    nd, nb = rewired_diagram(d, plan.rewirings, nb)
    return AttackResult(before, compose_system(nd, nb), nd, nb)


def distinguishing_input(m1, m2, init1=None, init2=None):
    """A shortest input sequence after which the two machines' outputs differ.

    Returns ``None`` when the pointed machines are equivalent. The empty
    sequence means the initial readouts already differ.
    """
    m1, m2 = _as_system(m1), _as_system(m2)
    if m1.interface.ports() != m2.interface.ports():
        raise InterfaceMismatch("machines inhabit different boxes")
    start = (m1.initial if init1 is None else init1, m2.initial if init2 is None else init2)
    xs = input_space(m1.interface.inputs)
    parent = {start: None}
    todo = deque([start])
    while todo:
        pair = todo.popleft()
        if m1.read(pair[0]) != m2.read(pair[1]):
            seq = []
            while parent[pair] is not None:
                pair, x = parent[pair]
                seq.append(x)
            return seq[::-1]
        for x in xs:
            nxt = (m1.step(pair[0], x), m2.step(pair[1], x))
            if nxt not in parent:
                parent[nxt] = (pair, x)
                todo.append(nxt)
    return None
