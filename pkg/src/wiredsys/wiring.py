"""Labeled boxes and wiring diagrams.

A wiring diagram is stored as a source assignment: every inner input port and
every outer output port names exactly one source port. Sources are outer
inputs or inner outputs. This encoding only admits maps built from
projections, duplications and permutations, so well-formedness is a data
check rather than a promise about an opaque function.

Port values are handled positionally. For finite types a value is a label;
for linear types it is a float vector of the port's dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence, Union

import numpy as np

__all__ = [
    "FinSet",
    "LinSpace",
    "PortType",
    "Interface",
    "UNIT",
    "OuterIn",
    "OuterOut",
    "InnerIn",
    "InnerOut",
    "WiringDiagram",
    "SelectionMatrices",
    "InterfaceMismatch",
    "identity_diagram",
    "tensor_interfaces",
    "tensor_diagrams",
    "compose_diagrams",
    "merge_inner",
    "drop_units",
    "substitute",
    "validate_diagram",
    "wiring_to_matrices",
    "route_inputs",
    "route_outputs",
]


class InterfaceMismatch(ValueError):
    """Raised when boxes, diagrams or inhabitants do not line up."""


@dataclass(frozen=True)
class FinSet:
    name: str
    labels: tuple[Hashable, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError(f"finite type {self.name!r} has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"finite type {self.name!r} has repeated labels")

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, value) -> bool:
        return value in self.labels


@dataclass(frozen=True)
class LinSpace:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("linear port dimension must be >= 1")

    @property
    def name(self) -> str:
        return f"R{self.dim}"


PortType = Union[FinSet, LinSpace]


@dataclass(frozen=True)
class Interface:
    name: str
    inputs: tuple[PortType, ...] = ()
    outputs: tuple[PortType, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def ports(self):
        """The pair of port lists, ignoring the name."""
        return (self.inputs, self.outputs)

    def is_unit(self) -> bool:
        return not self.inputs and not self.outputs

    def is_finite(self) -> bool:
        return all(isinstance(p, FinSet) for p in self.inputs + self.outputs)

    def is_linear(self) -> bool:
        return all(isinstance(p, LinSpace) for p in self.inputs + self.outputs)

    @property
    def in_dim(self) -> int:
        return sum(p.dim for p in self.inputs)

    @property
    def out_dim(self) -> int:
        return sum(p.dim for p in self.outputs)


UNIT = Interface("I")


@dataclass(frozen=True)
class OuterIn:
    index: int


@dataclass(frozen=True)
class OuterOut:
    index: int


@dataclass(frozen=True)
class InnerIn:
    box: int
    port: int


@dataclass(frozen=True)
class InnerOut:
    box: int
    port: int


Source = Union[OuterIn, InnerOut]


@dataclass(frozen=True)
class WiringDiagram:
    """A morphism ``inner[0] ⊗ ... ⊗ inner[-1] -> outer``.

    ``in_src[b][p]`` is the source feeding input ``p`` of inner box ``b``;
    ``out_src[j]`` is the inner output feeding outer output ``j``.
    """

    inner: tuple[Interface, ...]
    outer: Interface
    in_src: tuple[tuple[Source, ...], ...]
    out_src: tuple[InnerOut, ...]

    def __post_init__(self):
        object.__setattr__(self, "inner", tuple(self.inner))
        object.__setattr__(self, "in_src", tuple(tuple(s) for s in self.in_src))
        object.__setattr__(self, "out_src", tuple(self.out_src))

    def source_type(self, src) -> PortType:
        if isinstance(src, OuterIn):
            return self.outer.inputs[src.index]
        return self.inner[src.box].outputs[src.port]

    def inner_tensor(self) -> Interface:
        return tensor_interfaces(*self.inner)

    def same_as(self, other: "WiringDiagram") -> bool:
        """Structural equality up to interface names."""
        return (
            [x.ports() for x in self.inner] == [x.ports() for x in other.inner]
            and self.outer.ports() == other.outer.ports()
            and self.in_src == other.in_src
            and self.out_src == other.out_src
        )


@dataclass(frozen=True)
class SelectionMatrices:
    Af: np.ndarray = field(compare=False)
    Bf: np.ndarray = field(compare=False)
    Cf: np.ndarray = field(compare=False)


def validate_diagram(d: WiringDiagram) -> list[str]:
    """List every well-formedness violation of ``d``; empty means valid."""
    problems = []

    def check_source(src, where, want):
        if isinstance(src, OuterIn):
            if not 0 <= src.index < len(d.outer.inputs):
                problems.append(f"{where}: outer input {src.index} out of range")
                return
        elif isinstance(src, InnerOut):
            if not 0 <= src.box < len(d.inner):
                problems.append(f"{where}: inner box {src.box} out of range")
                return
            if not 0 <= src.port < len(d.inner[src.box].outputs):
                problems.append(f"{where}: box {src.box} has no output {src.port}")
                return
        else:
            problems.append(f"{where}: {type(src).__name__} cannot be a source")
            return
        have = d.source_type(src)
        if have != want:
            problems.append(
                f"{where}: type mismatch, source carries {have.name} but port expects {want.name}"
            )

    if len(d.in_src) != len(d.inner):
        problems.append(
            f"input assignment covers {len(d.in_src)} boxes, diagram has {len(d.inner)}"
        )
    for b, (box, srcs) in enumerate(zip(d.inner, d.in_src)):
        if len(srcs) != len(box.inputs):
            problems.append(
                f"box {b} ({box.name}): {len(srcs)} input sources for {len(box.inputs)} ports"
            )
        for p, (src, want) in enumerate(zip(srcs, box.inputs)):
            check_source(src, f"{box.name}.in[{p}]", want)
    if len(d.out_src) != len(d.outer.outputs):
        problems.append(
            f"output assignment has {len(d.out_src)} sources for {len(d.outer.outputs)} outer outputs"
        )
    for j, (src, want) in enumerate(zip(d.out_src, d.outer.outputs)):
        if not isinstance(src, InnerOut):
            problems.append(f"outer.out[{j}]: outer outputs must come from inner outputs")
            continue
        check_source(src, f"outer.out[{j}]", want)
    return problems


def identity_diagram(x: Interface) -> WiringDiagram:
    return WiringDiagram(
        inner=(x,),
        outer=x,
        in_src=(tuple(OuterIn(i) for i in range(len(x.inputs))),),
        out_src=tuple(InnerOut(0, j) for j in range(len(x.outputs))),
    )


def tensor_interfaces(*xs: Interface) -> Interface:
    xs = [x for x in xs if not x.is_unit()]
    if not xs:
        return UNIT
    if len(xs) == 1:
        return xs[0]
    return Interface(
        "⊗".join(x.name for x in xs),
        tuple(p for x in xs for p in x.inputs),
        tuple(p for x in xs for p in x.outputs),
    )


def _shift(src, boxes: int, outer_ins: int):
    if isinstance(src, OuterIn):
        return OuterIn(src.index + outer_ins)
    return InnerOut(src.box + boxes, src.port)


def tensor_diagrams(*ds: WiringDiagram) -> WiringDiagram:
    """Parallel placement; later diagrams are re-indexed past earlier ones."""
    inner, in_src, out_src = [], [], []
    n_outer_in = 0
    for d in ds:
        nb = len(inner)
        inner.extend(d.inner)
        in_src.extend(tuple(_shift(s, nb, n_outer_in) for s in srcs) for srcs in d.in_src)
        out_src.extend(_shift(s, nb, 0) for s in d.out_src)
        n_outer_in += len(d.outer.inputs)
    return WiringDiagram(
        tuple(inner), tensor_interfaces(*(d.outer for d in ds)), tuple(in_src), tuple(out_src)
    )


def compose_diagrams(g: WiringDiagram, f: WiringDiagram) -> WiringDiagram:
    """``g ∘ f`` for ``f: X -> Y`` and ``g: Y -> Z`` (``g.inner == [Y]``).

    Every source is chased at most two levels: an inner input of ``f`` fed
    by ``f``'s outer input ``i`` looks up what ``g`` feeds into its box's
    input ``i``, which is either an outer input of ``Z`` or an output of
    ``Y``, i.e. in turn an inner output of ``f``.
    """
    if len(g.inner) != 1 or g.inner[0].ports() != f.outer.ports():
        raise InterfaceMismatch(
            f"cannot compose: outer diagram's inner boxes {[x.name for x in g.inner]} "
            f"are not the single box {f.outer.name}"
        )

    def resolve(src):
        if isinstance(src, InnerOut):
            return src
        gs = g.in_src[0][src.index]
        if isinstance(gs, OuterIn):
            return gs
        return f.out_src[gs.port]

    in_src = tuple(tuple(resolve(s) for s in srcs) for srcs in f.in_src)
    out_src = tuple(f.out_src[s.port] for s in g.out_src)
    return WiringDiagram(f.inner, g.outer, in_src, out_src)


def drop_units(d: WiringDiagram) -> WiringDiagram:
    """Remove inner boxes with no ports (tensor factors equal to the unit)."""
    keep = [b for b, x in enumerate(d.inner) if not x.is_unit()]
    new_index = {b: i for i, b in enumerate(keep)}

    def re(src):
        return src if isinstance(src, OuterIn) else InnerOut(new_index[src.box], src.port)

    return WiringDiagram(
        tuple(d.inner[b] for b in keep),
        d.outer,
        tuple(tuple(re(s) for s in d.in_src[b]) for b in keep),
        tuple(re(s) for s in d.out_src),
    )


def merge_inner(d: WiringDiagram) -> WiringDiagram:
    """View ``d`` as a one-box diagram out of the tensor of its inner boxes."""
    offsets = np.cumsum([0] + [len(x.outputs) for x in d.inner])

    def flat(src):
        if isinstance(src, OuterIn):
            return src
        return InnerOut(0, int(offsets[src.box]) + src.port)

    return WiringDiagram(
        (d.inner_tensor(),),
        d.outer,
        (tuple(flat(s) for srcs in d.in_src for s in srcs),),
        tuple(flat(s) for s in d.out_src),
    )


def substitute(parent: WiringDiagram, slot: int, child: WiringDiagram) -> WiringDiagram:
    """Open up inner box ``slot`` of ``parent`` using ``child``'s decomposition.

    Equivalent to composing ``parent`` with ``id ⊗ ... ⊗ child ⊗ ... ⊗ id``
    and erasing the border of the replaced box.
    """
    if not 0 <= slot < len(parent.inner):
        raise IndexError(f"slot {slot} out of range")
    if child.outer.ports() != parent.inner[slot].ports():
        raise InterfaceMismatch(
            f"child implements {child.outer.name}, slot {slot} holds {parent.inner[slot].name}"
        )
    k = len(child.inner)

    def from_parent(src):
        if isinstance(src, OuterIn):
            return src
        if src.box < slot:
            return src
        if src.box > slot:
            return InnerOut(src.box + k - 1, src.port)
        c = child.out_src[src.port]
        return InnerOut(slot + c.box, c.port)

    def from_child(src):
        if isinstance(src, InnerOut):
            return InnerOut(slot + src.box, src.port)
        return from_parent(parent.in_src[slot][src.index])

    in_src = []
    for b, srcs in enumerate(parent.in_src):
        if b == slot:
            in_src.extend(tuple(from_child(s) for s in cs) for cs in child.in_src)
        else:
            in_src.append(tuple(from_parent(s) for s in srcs))
    inner = parent.inner[:slot] + child.inner + parent.inner[slot + 1 :]
    return WiringDiagram(inner, parent.outer, tuple(in_src), tuple(from_parent(s) for s in parent.out_src))


def _port_offsets(ports: Sequence[PortType]) -> list[int]:
    out, acc = [], 0
    for p in ports:
        out.append(acc)
        acc += p.dim
    return out


def wiring_to_matrices(d: WiringDiagram) -> SelectionMatrices:
    """0/1 matrices with ``f_in(x, y) = Af x + Bf y`` and ``f_out(x) = Cf x``.

    Coordinates are flattened in declared port order, inner boxes in
    inner-list order.
    """
    inner_in = [p for x in d.inner for p in x.inputs]
    inner_out = [p for x in d.inner for p in x.outputs]
    if not all(isinstance(p, LinSpace) for p in inner_in + inner_out + list(d.outer.inputs) + list(d.outer.outputs)):
        raise TypeError("wiring_to_matrices needs linear port types throughout")
    out_off = _port_offsets(inner_out)
    box_out_start = np.cumsum([0] + [len(x.outputs) for x in d.inner])
    outer_in_off = _port_offsets(d.outer.inputs)
    n_in = sum(p.dim for p in inner_in)
    n_out = sum(p.dim for p in inner_out)
    Af = np.zeros((n_in, n_out))
    Bf = np.zeros((n_in, d.outer.in_dim))
    Cf = np.zeros((d.outer.out_dim, n_out))

    row = 0
    for box, srcs in zip(d.inner, d.in_src):
        for port, src in zip(box.inputs, srcs):
            eye = np.eye(port.dim)
            if isinstance(src, OuterIn):
                c = outer_in_off[src.index]
                Bf[row : row + port.dim, c : c + port.dim] = eye
            else:
                c = out_off[box_out_start[src.box] + src.port]
                Af[row : row + port.dim, c : c + port.dim] = eye
            row += port.dim
    row = 0
    for port, src in zip(d.outer.outputs, d.out_src):
        c = out_off[box_out_start[src.box] + src.port]
        Cf[row : row + port.dim, c : c + port.dim] = np.eye(port.dim)
        row += port.dim
    return SelectionMatrices(Af, Bf, Cf)


def route_inputs(d: WiringDiagram, outer_in: Sequence, inner_out: Sequence[Sequence]) -> list[tuple]:
    """Evaluate ``f_in``: per inner box, the tuple of values on its inputs.

    ``outer_in`` holds one value per outer input port and ``inner_out`` one
    tuple of output values per inner box.
    """
    def value(src):
        if isinstance(src, OuterIn):
            return outer_in[src.index]
        return inner_out[src.box][src.port]

    return [tuple(value(s) for s in srcs) for srcs in d.in_src]


def route_outputs(d: WiringDiagram, inner_out: Sequence[Sequence]) -> tuple:
    """Evaluate ``f_out``: the tuple of values on the outer outputs."""
    return tuple(inner_out[s.box][s.port] for s in d.out_src)
