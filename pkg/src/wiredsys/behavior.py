"""Behavior algebras: Moore machines over finite wires, LTI systems over linear ones.

Both follow the same recipe. Components are placed in parallel (the
laxator), then a wiring diagram feeds each component its inputs from the
outer inputs and the other components' current readouts, and routes
readouts to the outer outputs. Composite states are tuples of component
states in inner-box order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence, Union

import numpy as np

from .wiring import (
    FinSet,
    Interface,
    InterfaceMismatch,
    WiringDiagram,
    route_inputs,
    route_outputs,
    tensor_interfaces,
    wiring_to_matrices,
)

__all__ = [
    "MooreMachine",
    "LTISystem",
    "FiniteFunction",
    "LinearFunction",
    "LinearEvaluator",
    "Trajectory",
    "input_space",
    "moore_tensor",
    "moore_apply",
    "lti_tensor",
    "lti_apply",
    "embed_function",
    "lti_to_moore",
    "compose_evaluators",
    "simulate",
    "tables_equal",
    "relabel",
]


def input_space(ports: Sequence[FinSet]) -> list[tuple]:
    """All value tuples over a list of finite ports, in lexicographic label order."""
    return list(itertools.product(*(p.labels for p in ports)))


@dataclass(frozen=True, eq=False)
class MooreMachine:
    """A finite Moore machine given by explicit tables.

    ``update[(s, x)]`` is the next state for state ``s`` and input tuple
    ``x``; ``readout[s]`` is the output tuple. ``initial`` designates the
    start state used by simulations and tests (defaults to the first state).
    """

    interface: Interface
    states: tuple
    update: Mapping[tuple, Hashable]
    readout: Mapping[Hashable, tuple]
    initial: Hashable = None

    def __post_init__(self):
        if not self.interface.is_finite():
            raise InterfaceMismatch(
                f"Moore machines need finite ports; {self.interface.name} has linear ones"
            )
        object.__setattr__(self, "states", tuple(self.states))
        if self.initial is None and self.states:
            object.__setattr__(self, "initial", self.states[0])

    @classmethod
    def from_functions(cls, interface, states, update: Callable, readout: Callable, initial=None):
        states = tuple(states)
        xs = input_space(interface.inputs)
        return cls(
            interface,
            states,
            {(s, x): update(s, x) for s in states for x in xs},
            {s: tuple(readout(s)) for s in states},
            initial,
        )

    def step(self, s, x):
        return self.update[(s, tuple(x))]

    def read(self, s) -> tuple:
        return self.readout[s]

    def check(self) -> list[str]:
        """Totality and typing problems of the tables."""
        problems = []
        known = set(self.states)
        if len(known) != len(self.states):
            problems.append("repeated state labels")
        if self.initial not in known:
            problems.append(f"initial state {self.initial!r} is not a state")
        for s in self.states:
            for x in input_space(self.interface.inputs):
                if (s, x) not in self.update:
                    problems.append(f"missing update row for state {s!r}, input {x!r}")
                elif self.update[(s, x)] not in known:
                    problems.append(f"update ({s!r}, {x!r}) leads to unknown state")
            if s not in self.readout:
                problems.append(f"missing readout for state {s!r}")
                continue
            out = self.readout[s]
            if len(out) != len(self.interface.outputs) or any(
                v not in p for v, p in zip(out, self.interface.outputs)
            ):
                problems.append(f"readout of {s!r} is not a valid output tuple: {out!r}")
        return problems


def relabel(m: MooreMachine, f: Callable) -> MooreMachine:
    """Rename states along an injective map ``f``."""
    return MooreMachine(
        m.interface,
        tuple(f(s) for s in m.states),
        {(f(s), x): f(t) for (s, x), t in m.update.items()},
        {f(s): y for s, y in m.readout.items()},
        f(m.initial),
    )


def tables_equal(m1: MooreMachine, m2: MooreMachine, state_map: Callable = None) -> bool:
    """Exact table equality, optionally after renaming ``m1``'s states."""
    if state_map is not None:
        m1 = relabel(m1, state_map)
    return (
        m1.interface.ports() == m2.interface.ports()
        and set(m1.states) == set(m2.states)
        and dict(m1.update) == dict(m2.update)
        and dict(m1.readout) == dict(m2.readout)
    )


def moore_tensor(m1: MooreMachine, m2: MooreMachine) -> MooreMachine:
    k = len(m1.interface.inputs)
    return MooreMachine.from_functions(
        tensor_interfaces(m1.interface, m2.interface),
        itertools.product(m1.states, m2.states),
        lambda st, x: (m1.step(st[0], x[:k]), m2.step(st[1], x[k:])),
        lambda st: m1.read(st[0]) + m2.read(st[1]),
        (m1.initial, m2.initial),
    )


def _check_inhabitants(d: WiringDiagram, systems: Sequence) -> None:
    if len(systems) != len(d.inner):
        raise InterfaceMismatch(f"{len(systems)} systems for {len(d.inner)} inner boxes")
    for b, (box, sys) in enumerate(zip(d.inner, systems)):
        if sys.interface.ports() != box.ports():
            raise InterfaceMismatch(
                f"box {b} is {box.name} but its system inhabits {sys.interface.name}"
            )


def moore_apply(d: WiringDiagram, machines: Sequence[MooreMachine]) -> MooreMachine:
    """The composite machine in the outer box.

    ``u'(y, s) = u(f_in(y, r(s)), s)`` and ``r'(s) = f_out(r(s))`` with
    ``s`` ranging over the product of the component state sets.
    """
    machines = [embed_function(m) if isinstance(m, FiniteFunction) else m for m in machines]
    _check_inhabitants(d, machines)

    def update(s, y):
        outs = [m.read(si) for m, si in zip(machines, s)]
        ins = route_inputs(d, y, outs)
        return tuple(m.step(si, xi) for m, si, xi in zip(machines, s, ins))

    def readout(s):
        return route_outputs(d, [m.read(si) for m, si in zip(machines, s)])

    return MooreMachine.from_functions(
        d.outer,
        itertools.product(*(m.states for m in machines)),
        update,
        readout,
        tuple(m.initial for m in machines),
    )


@dataclass(frozen=True, eq=False)
class LTISystem:
    """``s' = A s + B x``, ``y = C s`` on the ports of ``interface``."""

    interface: Interface
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        if not self.interface.is_linear():
            raise InterfaceMismatch(f"LTI systems need linear ports; {self.interface.name} has finite ones")
        A = np.atleast_2d(np.asarray(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, self.interface.in_dim)
        C = np.asarray(self.C, dtype=float).reshape(self.interface.out_dim, n)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def initial(self) -> np.ndarray:
        return np.zeros(self.n)

    def step(self, s, x) -> np.ndarray:
        return self.A @ np.asarray(s, float) + self.B @ np.asarray(x, float)

    def read(self, s) -> np.ndarray:
        return self.C @ np.asarray(s, float)

    def allclose(self, other: "LTISystem", atol=1e-12) -> bool:
        return (
            self.interface.ports() == other.interface.ports()
            and self.A.shape == other.A.shape
            and np.allclose(self.A, other.A, rtol=0, atol=atol)
            and np.allclose(self.B, other.B, rtol=0, atol=atol)
            and np.allclose(self.C, other.C, rtol=0, atol=atol)
        )


def _block_diag(*ms: np.ndarray) -> np.ndarray:
    rows = sum(m.shape[0] for m in ms)
    cols = sum(m.shape[1] for m in ms)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in ms:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def lti_tensor(*systems: LTISystem) -> LTISystem:
    return LTISystem(
        tensor_interfaces(*(s.interface for s in systems)),
        _block_diag(*(s.A for s in systems)),
        _block_diag(*(s.B for s in systems)),
        _block_diag(*(s.C for s in systems)),
    )


def lti_apply(d: WiringDiagram, systems: Sequence[LTISystem]) -> LTISystem:
    """``(A + B Af C, B Bf, Cf C)`` for the block-diagonal tensor of ``systems``."""
    systems = [embed_function(s) if isinstance(s, LinearFunction) else s for s in systems]
    _check_inhabitants(d, systems)
    t = lti_tensor(*systems) if systems else LTISystem(d.inner_tensor(), np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))
    W = wiring_to_matrices(d)
    return LTISystem(d.outer, t.A + t.B @ W.Af @ t.C, t.B @ W.Bf, W.Cf @ t.C)


@dataclass(frozen=True, eq=False)
class FiniteFunction:
    """A memoryless finite box: ``table[x]`` is the output tuple for input tuple ``x``."""

    interface: Interface
    table: Mapping[tuple, tuple]

    def __call__(self, x) -> tuple:
        return self.table[tuple(x)]


@dataclass(frozen=True, eq=False)
class LinearFunction:
    """A memoryless linear box ``y = H x``."""

    interface: Interface
    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float).reshape(self.interface.out_dim, self.interface.in_dim)
        object.__setattr__(self, "H", H)

    def __call__(self, x) -> np.ndarray:
        return self.H @ np.asarray(x, float)


def embed_function(h: Union[FiniteFunction, LinearFunction]):
    """Turn a function into a one-step-delay system whose state is the last input."""
    if isinstance(h, LinearFunction):
        k = h.interface.in_dim
        return LTISystem(h.interface, np.zeros((k, k)), np.eye(k), h.H)
    xs = input_space(h.interface.inputs)
    return MooreMachine(
        h.interface,
        tuple(xs),
        {(s, x): x for s in xs for x in xs},
        {s: tuple(h(s)) for s in xs},
    )


@dataclass(frozen=True)
class LinearEvaluator:
    """Pointwise update/readout of an LTI system, with dimension checks."""

    system: LTISystem

    def update(self, s, x) -> np.ndarray:
        s, x = np.asarray(s, float), np.asarray(x, float)
        if s.shape != (self.system.n,) or x.shape != (self.system.interface.in_dim,):
            raise ValueError(f"expected state of dim {self.system.n} and input of dim "
                             f"{self.system.interface.in_dim}, got {s.shape} and {x.shape}")
        return self.system.step(s, x)

    def readout(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        if s.shape != (self.system.n,):
            raise ValueError(f"expected state of dim {self.system.n}, got {s.shape}")
        return self.system.read(s)


def lti_to_moore(l: LTISystem) -> LinearEvaluator:
    return LinearEvaluator(l)


def _split(vec, ports):
    out, i = [], 0
    for p in ports:
        out.append(vec[i : i + p.dim])
        i += p.dim
    return out


def compose_evaluators(d: WiringDiagram, evaluators: Sequence[LinearEvaluator]):
    """Apply the general Moore composition formula to pointwise evaluators.

    Returns ``(update, readout)`` acting on the concatenated state vector.
    Uses only per-port routing, never the wiring matrices.
    """
    dims = [e.system.n for e in evaluators]
    cuts = np.cumsum([0] + dims)

    def parts(s):
        s = np.asarray(s, float)
        return [s[cuts[i] : cuts[i + 1]] for i in range(len(dims))]

    def outs(s):
        return [
            _split(e.readout(si), d.inner[b].outputs)
            for b, (e, si) in enumerate(zip(evaluators, parts(s)))
        ]

    def update(s, y):
        ins = route_inputs(d, _split(np.asarray(y, float), d.outer.inputs), outs(s))
        new = [e.update(si, np.concatenate(xi) if xi else np.zeros(0))
               for e, si, xi in zip(evaluators, parts(s), ins)]
        return np.concatenate(new) if new else np.zeros(0)

    def readout(s):
        ys = route_outputs(d, outs(s))
        return np.concatenate(ys) if ys else np.zeros(0)

    return update, readout


@dataclass
class Trajectory:
    """Inputs ``x_0..x_{T-1}``, states ``s_0..s_T`` and outputs ``r(s_0)..r(s_T)``."""

    inputs: list
    states: list
    outputs: list
    interface: Interface = field(default=None, repr=False)

    def __len__(self):
        return len(self.inputs)


def simulate(m, s0, inputs) -> Trajectory:
    """Step ``m`` from ``s0`` through ``inputs``; the first output is ``r(s0)``."""
    if s0 is None:
        s0 = m.initial
    states, outputs = [], []
    if isinstance(m, LTISystem):
        s = np.asarray(s0, float)
        if s.shape != (m.n,):
            raise TypeError(f"initial state must have dimension {m.n}")
        xs = []
        for x in inputs:
            x = np.asarray(x, float)
            if x.shape != (m.interface.in_dim,):
                raise TypeError(f"input {x!r} does not have dimension {m.interface.in_dim}")
            xs.append(x)
        inputs = xs
    else:
        s = s0
        if s not in m.readout:
            raise TypeError(f"{s0!r} is not a state of the machine")
        inputs = [tuple(x) for x in inputs]
        for x in inputs:
            if len(x) != len(m.interface.inputs) or any(v not in p for v, p in zip(x, m.interface.inputs)):
                raise TypeError(f"{x!r} is not a valid input tuple")
    states.append(s)
    outputs.append(m.read(s))
    for x in inputs:
        s = m.step(s, x)
        states.append(s)
        outputs.append(m.read(s))
    return Trajectory(list(inputs), states, outputs, m.interface)
