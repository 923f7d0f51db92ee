"""Static contracts: relations between the input and output values of a box.

Three representations are supported:

* ``FiniteRelation`` -- an explicit set of ``(input tuple, output tuple)``
  pairs over finite ports;
* ``Independent`` -- one allowed subset per port (label sets for finite
  ports, unions of closed intervals per coordinate for linear ports);
* ``LinearGraph`` -- the graph ``{(x, Hx)}`` of a linear map, which is what
  a memoryless linear box maximally satisfies.

Composition along a wiring diagram keeps every pair ``(y_in, y_out)`` for
which some choice of inner output values is consistent with the component
contract and the wiring.
"""

from __future__ import annotations

import functools
import itertools
import math
import operator
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .behavior import FiniteFunction, LinearFunction, LTISystem, MooreMachine, Trajectory, input_space
from .wiring import (
    FinSet,
    Interface,
    InterfaceMismatch,
    LinSpace,
    OuterIn,
    PortType,
    WiringDiagram,
    tensor_interfaces,
)

__all__ = [
    "Intervals",
    "FiniteRelation",
    "Independent",
    "LinearGraph",
    "StaticContract",
    "AGContract",
    "StatefulContractError",
    "Verdict",
    "full_subset",
    "contains",
    "is_empty",
    "expand",
    "contract_tensor",
    "contract_apply_finite",
    "contract_apply_independent",
    "ag_compose",
    "maximal_contract",
    "satisfies",
]


class StatefulContractError(TypeError):
    """The maximally satisfied contract is only defined for memoryless boxes."""


@dataclass(frozen=True)
class Intervals:
    """A finite union of closed real intervals, kept sorted and merged."""

    parts: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        spans = sorted((float(a), float(b)) for a, b in self.parts if a <= b)
        merged = []
        for a, b in spans:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        object.__setattr__(self, "parts", tuple(merged))

    @classmethod
    def full(cls) -> "Intervals":
        return cls(((-math.inf, math.inf),))

    @classmethod
    def closed(cls, lo, hi) -> "Intervals":
        return cls(((lo, hi),))

    def __and__(self, other: "Intervals") -> "Intervals":
        out = []
        for a, b in self.parts:
            for c, d in other.parts:
                lo, hi = max(a, c), min(b, d)
                if lo <= hi:
                    out.append((lo, hi))
        return Intervals(tuple(out))

    def __contains__(self, v) -> bool:
        return any(a <= v <= b for a, b in self.parts)

    def __bool__(self) -> bool:
        return bool(self.parts)

    def is_full(self) -> bool:
        return self.parts == ((-math.inf, math.inf),)


# A port subset is a frozenset of labels (finite port) or a tuple of
# Intervals, one per coordinate (linear port).
PortSubset = Union[frozenset, tuple]


def full_subset(p: PortType) -> PortSubset:
    if isinstance(p, FinSet):
        return frozenset(p.labels)
    return tuple(Intervals.full() for _ in range(p.dim))


def _intersect(p: PortType, a: PortSubset, b: PortSubset) -> PortSubset:
    if isinstance(p, FinSet):
        return a & b
    return tuple(x & y for x, y in zip(a, b))


def _subset_empty(p: PortType, a: PortSubset) -> bool:
    if isinstance(p, FinSet):
        return not a
    return any(not x for x in a)


def _in_subset(p: PortType, a: PortSubset, v) -> bool:
    if isinstance(p, FinSet):
        return v in a
    v = np.atleast_1d(np.asarray(v, float))
    return len(v) == p.dim and all(x in iv for x, iv in zip(v, a))


@dataclass(frozen=True)
class FiniteRelation:
    interface: Interface
    pairs: frozenset

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((tuple(x), tuple(y)) for x, y in self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class Independent:
    """Per-port allowed subsets; an empty port forces every port empty."""

    interface: Interface
    ins: tuple
    outs: tuple

    def __post_init__(self):
        ins, outs = tuple(self.ins), tuple(self.outs)
        ports = self.interface.inputs + self.interface.outputs
        if len(ins) != len(self.interface.inputs) or len(outs) != len(self.interface.outputs):
            raise InterfaceMismatch("one subset per port is required")
        norm = []
        for p, s in zip(ports, ins + outs):
            if isinstance(p, FinSet):
                s = frozenset(s)
                if not s <= frozenset(p.labels):
                    raise ValueError(f"subset {set(s)} escapes the carrier of {p.name}")
            else:
                s = tuple(s)
                if len(s) != p.dim:
                    raise ValueError(f"need {p.dim} interval sets for a {p.name} port")
            norm.append(s)
        if any(_subset_empty(p, s) for p, s in zip(ports, norm)):
            norm = [frozenset() if isinstance(p, FinSet) else tuple(Intervals() for _ in range(p.dim))
                    for p in ports]
        k = len(ins)
        object.__setattr__(self, "ins", tuple(norm[:k]))
        object.__setattr__(self, "outs", tuple(norm[k:]))

    @classmethod
    def full(cls, interface: Interface, **overrides) -> "Independent":
        """The full contract, with optional ``in0=..``/``out1=..`` overrides."""
        ins = [overrides.get(f"in{i}", full_subset(p)) for i, p in enumerate(interface.inputs)]
        outs = [overrides.get(f"out{j}", full_subset(p)) for j, p in enumerate(interface.outputs)]
        return cls(interface, ins, outs)

    @property
    def empty(self) -> bool:
        ports = self.interface.inputs + self.interface.outputs
        return any(_subset_empty(p, s) for p, s in zip(ports, self.ins + self.outs))


@dataclass(frozen=True, eq=False)
class LinearGraph:
    """The relation ``{(x, Hx)}``; membership is checked to a tolerance."""

    interface: Interface
    H: np.ndarray
    atol: float = 1e-9

    def __eq__(self, other):
        return (
            isinstance(other, LinearGraph)
            and self.interface.ports() == other.interface.ports()
            and np.array_equal(self.H, other.H)
        )

    __hash__ = None


StaticContract = Union[FiniteRelation, Independent, LinearGraph]


def _flat(values, ports) -> np.ndarray:
    parts = [np.atleast_1d(np.asarray(v, float)) for v in values]
    return np.concatenate(parts) if parts else np.zeros(0)


def _as_port_values(vec, ports):
    """Accept either one value per port or a flat vector over linear ports."""
    if isinstance(vec, np.ndarray) and all(isinstance(p, LinSpace) for p in ports):
        out, i = [], 0
        for p in ports:
            out.append(vec[i : i + p.dim])
            i += p.dim
        return out
    return list(vec)


def contains(r: StaticContract, x, y) -> bool:
    """Whether the pair (inputs ``x``, outputs ``y``) is allowed by ``r``."""
    ins, outs = r.interface.inputs, r.interface.outputs
    if isinstance(r, FiniteRelation):
        return (tuple(x), tuple(y)) in r.pairs
    x, y = _as_port_values(x, ins), _as_port_values(y, outs)
    if isinstance(r, Independent):
        return all(_in_subset(p, s, v) for p, s, v in zip(ins, r.ins, x)) and all(
            _in_subset(p, s, v) for p, s, v in zip(outs, r.outs, y)
        )
    return bool(np.allclose(r.H @ _flat(x, ins), _flat(y, outs), rtol=0, atol=r.atol))


def _contains_output(r: StaticContract, y) -> bool:
    """Whether ``y`` occurs as an output of ``r`` (the output projection)."""
    outs = r.interface.outputs
    if isinstance(r, FiniteRelation):
        return any(b == tuple(y) for _, b in r.pairs)
    if isinstance(r, Independent):
        y = _as_port_values(y, outs)
        return not r.empty and all(_in_subset(p, s, v) for p, s, v in zip(outs, r.outs, y))
    vec = _flat(_as_port_values(y, outs), outs)
    sol, *_ = np.linalg.lstsq(r.H, vec, rcond=None)
    return bool(np.allclose(r.H @ sol, vec, rtol=0, atol=r.atol))


def is_empty(r: StaticContract) -> bool:
    if isinstance(r, FiniteRelation):
        return not r.pairs
    if isinstance(r, Independent):
        return r.empty
    return False


def expand(r: StaticContract) -> FiniteRelation:
    """Enumerate an independent contract over finite ports as a relation."""
    if isinstance(r, FiniteRelation):
        return r
    if not isinstance(r, Independent) or not r.interface.is_finite():
        raise TypeError("only independent contracts over finite ports can be expanded")
    xs = itertools.product(*(sorted(s, key=repr) for s in r.ins))
    ys = list(itertools.product(*(sorted(s, key=repr) for s in r.outs)))
    return FiniteRelation(r.interface, frozenset((x, y) for x in xs for y in ys))


def contract_tensor(r1: StaticContract, r2: StaticContract) -> StaticContract:
    """Parallel placement: ``{(x1 + y1, x2 + y2) | (x1, x2) in r1, (y1, y2) in r2}``."""
    iface = tensor_interfaces(r1.interface, r2.interface)
    if isinstance(r1, Independent) and isinstance(r2, Independent):
        return Independent(iface, r1.ins + r2.ins, r1.outs + r2.outs)
    if isinstance(r1, LinearGraph) or isinstance(r2, LinearGraph):
        if isinstance(r1, LinearGraph) and isinstance(r2, LinearGraph):
            H = np.zeros((iface.out_dim, iface.in_dim))
            H[: r1.H.shape[0], : r1.H.shape[1]] = r1.H
            H[r1.H.shape[0] :, r1.H.shape[1] :] = r2.H
            return LinearGraph(iface, H)
        raise TypeError("linear graph contracts only tensor with each other")
    a, b = expand(r1), expand(r2)
    return FiniteRelation(
        iface, frozenset((x1 + y1, x2 + y2) for x1, x2 in a.pairs for y1, y2 in b.pairs)
    )


def _tensor_all(d: WiringDiagram, r) -> StaticContract:
    if isinstance(r, (list, tuple)):
        if len(r) != len(d.inner):
            raise InterfaceMismatch(f"{len(r)} contracts for {len(d.inner)} inner boxes")
        for box, c in zip(d.inner, r):
            if c.interface.ports() != box.ports():
                raise InterfaceMismatch(f"contract on {c.interface.name} placed in box {box.name}")
        acc = None
        for c in r:
            acc = c if acc is None else contract_tensor(acc, c)
        return acc if acc is not None else FiniteRelation(d.inner_tensor(), frozenset({((), ())}))
    if r.interface.ports() != d.inner_tensor().ports():
        raise InterfaceMismatch("contract does not live on the tensor of the inner boxes")
    return r


def _pieces(d: WiringDiagram, r) -> list[FiniteRelation]:
    """Per-box relations when given a list, else the one tensored relation."""
    if isinstance(r, (list, tuple)):
        if len(r) != len(d.inner):
            raise InterfaceMismatch(f"{len(r)} contracts for {len(d.inner)} inner boxes")
        for box, c in zip(d.inner, r):
            if c.interface.ports() != box.ports():
                raise InterfaceMismatch(f"contract on {c.interface.name} placed in box {box.name}")
        return [expand(c) for c in r]
    return [expand(_tensor_all(d, r))]


@functools.lru_cache(maxsize=256)
def _join_plan(d: WiringDiagram, shapes: tuple):
    """Wire bookkeeping for joining pieces of the given (inputs, outputs) sizes.

    Pieces are chosen left to right. An inner input fed by an output of an
    earlier piece becomes a lookup key into the current piece, one fed by a
    later piece is checked once that piece is chosen, and one fed by its own
    piece filters the piece up front. Inputs fed by outer inputs force the
    outer value.
    """
    in_cut = list(itertools.accumulate([0] + [n for n, _ in shapes]))
    out_cut = list(itertools.accumulate([0] + [m for _, m in shapes]))
    in_owner = [i for i in range(len(shapes)) for _ in range(in_cut[i], in_cut[i + 1])]
    out_owner = [i for i in range(len(shapes)) for _ in range(out_cut[i], out_cut[i + 1])]
    box_cut = list(itertools.accumulate([0] + [len(x.outputs) for x in d.inner]))

    keys = [[] for _ in shapes]
    later = [[] for _ in shapes]
    own = [[] for _ in shapes]
    forcing = []
    for k, src in enumerate(s for srcs in d.in_src for s in srcs):
        if isinstance(src, OuterIn):
            forcing.append((k, src.index))
            continue
        j = box_cut[src.box] + src.port
        pi, po = in_owner[k], out_owner[j]
        if pi == po:
            own[pi].append((k - in_cut[pi], j - out_cut[po]))
        elif po < pi:
            keys[pi].append((k - in_cut[pi], j))
        else:
            later[po].append((k, j - out_cut[po]))
    out_pos = tuple(box_cut[s.box] + s.port for s in d.out_src)
    return keys, later, own, tuple(forcing), out_pos


def _picker(idxs):
    """A function returning the tuple of the given positions."""
    idxs = tuple(idxs)
    if not idxs:
        return lambda t: ()
    if len(idxs) == 1:
        (i,) = idxs
        return lambda t: (t[i],)
    return operator.itemgetter(*idxs)


def _join(pieces: list[FiniteRelation], keys, later, own):
    """All wire-consistent choices of one pair per piece, as flat tuples."""
    partial = [((), ())]
    for p, piece in enumerate(pieces):
        in_key = _picker(a for a, _ in keys[p])
        table: dict[tuple, list] = {}
        for xin, xout in piece.pairs:
            if own[p] and any(xin[a] != xout[b] for a, b in own[p]):
                continue
            table.setdefault(in_key(xin), []).append((xin, xout))
        out_key = _picker(j for _, j in keys[p])
        checks = later[p]
        nxt = []
        for xin, xout in partial:
            for pin, pout in table.get(out_key(xout), ()):
                if checks and any(xin[k] != pout[b] for k, b in checks):
                    continue
                nxt.append((xin + pin, xout + pout))
        partial = nxt
    return partial


def contract_apply_finite(d: WiringDiagram, r) -> FiniteRelation:
    """Push a relation on the inner boxes through ``d``.

    ``r`` is a relation on the tensored inner box, or a list of per-box
    contracts. Each allowed inner pair ``(x_in, x_out)`` contributes
    ``(y_in, f_out(x_out))`` for every outer input tuple ``y_in`` with
    ``f_in(x_out, y_in) = x_in``; outer inputs that feed nothing are
    unconstrained. Per-box contracts are joined box by box rather than
    tensored up front, so only wire-consistent combinations are visited.
    """
    if not d.outer.is_finite() or not all(x.is_finite() for x in d.inner):
        raise TypeError("contract_apply_finite needs finite ports")
    pieces = _pieces(d, r)
    shapes = tuple((len(p.interface.inputs), len(p.interface.outputs)) for p in pieces)
    keys, later, own, forcing, out_pos = _join_plan(d, shapes)
    free = [p.labels for p in d.outer.inputs]

    result = set()
    for xin, xout in _join(pieces, keys, later, own):
        forced: dict[int, Hashable] = {}
        if any(forced.setdefault(i, xin[k]) != xin[k] for k, i in forcing):
            continue
        y2 = tuple(xout[j] for j in out_pos)
        if len(forced) == len(free):
            result.add((tuple(forced[i] for i in range(len(free))), y2))
            continue
        choices = [(forced[i],) if i in forced else free[i] for i in range(len(free))]
        for y1 in itertools.product(*choices):
            result.add((y1, y2))
    return FiniteRelation(d.outer, frozenset(result))


def contract_apply_independent(d: WiringDiagram, contracts: Sequence[Independent]) -> Independent:
    """Compose per-port contracts; the result is again per-port.

    Every source port defines a wire group: its own allowed set intersected
    with the allowed sets of all inputs it feeds. An empty group leaves no
    consistent wire value, so the composite is empty. Otherwise each outer
    input allows the intersection over the inputs it feeds and each outer
    output allows its source's group. Outer outputs that share a source
    always carry equal values; a per-port contract cannot say so, and the
    result then over-approximates the exact relation.
    """
    for box, c in zip(d.inner, contracts):
        if c.interface.ports() != box.ports():
            raise InterfaceMismatch(f"contract on {c.interface.name} placed in box {box.name}")
    if len(contracts) != len(d.inner):
        raise InterfaceMismatch(f"{len(contracts)} contracts for {len(d.inner)} inner boxes")

    outer_in = [full_subset(p) for p in d.outer.inputs]
    groups = {
        (b, j): contracts[b].outs[j] for b, box in enumerate(d.inner) for j in range(len(box.outputs))
    }
    for b, srcs in enumerate(d.in_src):
        for p, src in enumerate(srcs):
            allowed = contracts[b].ins[p]
            ptype = d.inner[b].inputs[p]
            if isinstance(src, OuterIn):
                outer_in[src.index] = _intersect(ptype, outer_in[src.index], allowed)
            else:
                key = (src.box, src.port)
                groups[key] = _intersect(ptype, groups[key], allowed)
    outs = [groups[(s.box, s.port)] for s in d.out_src]
    if any(_subset_empty(d.inner[b].outputs[j], s) for (b, j), s in groups.items()):
        outs = [frozenset() if isinstance(p, FinSet) else tuple(Intervals() for _ in range(p.dim))
                for p in d.outer.outputs]
        outer_in = [frozenset() if isinstance(p, FinSet) else tuple(Intervals() for _ in range(p.dim))
                    for p in d.outer.inputs]
        if not outs and not outer_in:
            # A box with no ports has only the trivial pair; nothing is left.
            return _EmptyUnit(d.outer)
    return Independent(d.outer, outer_in, outs)


class _EmptyUnit(Independent):
    """The empty contract on a box without ports."""

    def __init__(self, interface):
        object.__setattr__(self, "interface", interface)
        object.__setattr__(self, "ins", ())
        object.__setattr__(self, "outs", ())

    @property
    def empty(self) -> bool:
        return True


@dataclass(frozen=True)
class AGContract:
    """Assume-guarantee pair over named finite variables.

    ``assumption`` and ``guarantee`` are sets of value tuples ordered like
    ``variables``. ``inputs`` names the variables controlled by the
    environment; the rest are outputs.
    """

    variables: tuple[str, ...]
    carriers: tuple[FinSet, ...]
    inputs: frozenset
    assumption: frozenset
    guarantee: frozenset

    @classmethod
    def from_predicates(cls, variables: Mapping[str, FinSet], inputs: Iterable[str], assume, guarantee):
        names = tuple(variables)
        carriers = tuple(variables[v] for v in names)
        pts = input_space(carriers)
        return cls(
            names,
            carriers,
            frozenset(inputs),
            frozenset(p for p in pts if assume(**dict(zip(names, p)))),
            frozenset(p for p in pts if guarantee(**dict(zip(names, p)))),
        )

    @property
    def interface(self) -> Interface:
        ins = [c for v, c in zip(self.variables, self.carriers) if v in self.inputs]
        outs = [c for v, c in zip(self.variables, self.carriers) if v not in self.inputs]
        return Interface("AG", tuple(ins), tuple(outs))


def ag_compose(c1: AGContract, c2: AGContract, binding: Mapping[str, str] = None, assume_over=None):
    """Compose two assume-guarantee contracts sharing variables.

    ``binding`` maps variable names of ``c2`` onto variables of ``c1``;
    without it variables are matched by name. All variables stay in scope
    (intermediate wires are exposed). Returns ``(composite, compatible)``:

    * guarantee = ``G1 ∧ G2``;
    * assumption = the largest set ``A`` with ``A ∧ G2 ⇒ A1`` and
      ``A ∧ G1 ⇒ A2``. By default ``A`` ranges over all variables, which is
      the pointwise set ``(G2 ⇒ A1) ∧ (G1 ⇒ A2)``. With ``assume_over`` (a
      list of variable names) ``A`` may only depend on those, and is the
      set of their values for which the implications hold for every value
      of the other variables.
    """
    binding = dict(binding) if binding is not None else {v: v for v in c2.variables if v in c1.variables}
    for v2, v1 in binding.items():
        if v2 not in c2.variables or v1 not in c1.variables:
            raise KeyError(f"binding {v2!r} -> {v1!r} names an unknown variable")
    rename = {v: binding.get(v, v) for v in c2.variables}
    clash = [v for v in c2.variables if v not in binding and v in c1.variables]
    if clash:
        raise KeyError(f"unbound variables {clash} appear in both contracts")
    for v2, v1 in binding.items():
        if c2.carriers[c2.variables.index(v2)] != c1.carriers[c1.variables.index(v1)]:
            raise TypeError(f"bound variables {v2!r} and {v1!r} have different carriers")

    names = c1.variables + tuple(rename[v] for v in c2.variables if v not in binding)
    carriers = c1.carriers + tuple(c for v, c in zip(c2.variables, c2.carriers) if v not in binding)
    idx1 = [names.index(v) for v in c1.variables]
    idx2 = [names.index(rename[v]) for v in c2.variables]
    # A bound variable produced by one side is no longer an environment input.
    produced = {v for v in c1.variables if v not in c1.inputs} | {
        rename[v] for v in c2.variables if v not in c2.inputs
    }
    inputs = frozenset(
        ({v for v in c1.inputs} | {rename[v] for v in c2.inputs}) - produced
    )

    pts = input_space(carriers)
    ok = set()
    G = set()
    for p in pts:
        p1 = tuple(p[i] for i in idx1)
        p2 = tuple(p[i] for i in idx2)
        g1, g2 = p1 in c1.guarantee, p2 in c2.guarantee
        if g1 and g2:
            G.add(p)
        if (not g2 or p1 in c1.assumption) and (not g1 or p2 in c2.assumption):
            ok.add(p)

    if assume_over is None:
        A = ok
    else:
        keep = [names.index(v) for v in assume_over]
        bad = {tuple(p[i] for i in keep) for p in pts if p not in ok}
        A = {p for p in pts if tuple(p[i] for i in keep) not in bad}
    comp = AGContract(names, carriers, inputs, frozenset(A), frozenset(G))
    return comp, bool(A)


def maximal_contract(b) -> StaticContract:
    """The graph of a memoryless box: the strongest contract it satisfies."""
    if isinstance(b, FiniteFunction):
        return FiniteRelation(b.interface, frozenset((x, tuple(b(x))) for x in input_space(b.interface.inputs)))
    if isinstance(b, LinearFunction):
        return LinearGraph(b.interface, b.H.copy())
    if isinstance(b, (MooreMachine, LTISystem)):
        raise StatefulContractError(
            "the maximally satisfied static contract of a machine with memory is not defined; "
            "pass the memoryless function instead"
        )
    raise TypeError(f"cannot take the maximal contract of {type(b).__name__}")


class Verdict(NamedTuple):
    holds: bool
    step: int | None = None


def satisfies(t: Trajectory, r: StaticContract) -> Verdict:
    """Check every instantaneous pair ``(inputs[t], outputs[t])`` against ``r``.

    A trajectory from ``simulate`` has one more output than inputs; that
    last output is checked against the output projection of ``r``.
    """
    if t.interface is not None and t.interface.ports() != r.interface.ports():
        raise InterfaceMismatch("trajectory and contract live on different boxes")
    n = len(t.inputs)
    if len(t.outputs) not in (n, n + 1):
        raise ValueError("trajectory needs as many outputs as inputs, or one more")
    for i in range(n):
        if not contains(r, t.inputs[i], t.outputs[i]):
            return Verdict(False, i)
    if len(t.outputs) == n + 1 and not _contains_output(r, t.outputs[n]):
        return Verdict(False, n)
    return Verdict(True)
