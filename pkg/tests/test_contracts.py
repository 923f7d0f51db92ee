import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import CARRIERS, brute_force_apply, random_diagram, random_relation, wire_count
from wiredsys.behavior import FiniteFunction, LinearFunction, MooreMachine, Trajectory, input_space
from wiredsys.contracts import (
    AGContract,
    FiniteRelation,
    Independent,
    Intervals,
    LinearGraph,
    StatefulContractError,
    ag_compose,
    contains,
    contract_apply_finite,
    contract_apply_independent,
    contract_tensor,
    expand,
    is_empty,
    maximal_contract,
    satisfies,
)
from wiredsys.scenarios import BOOL, R1, joiner_wiring, serial_wiring, uav_contracts, uav_wiring
from wiredsys.wiring import UNIT, FinSet, InnerOut, Interface, InterfaceMismatch, WiringDiagram, identity_diagram

T = FinSet("T", ("a", "b", "c"))
B1 = Interface("B", (T,), (T,))


def test_intervals_merge_and_intersect():
    iv = Intervals(((0, 1), (0.5, 2), (5, 6)))
    assert iv.parts == ((0.0, 2.0), (5.0, 6.0))
    assert (iv & Intervals.closed(1.5, 5.5)).parts == ((1.5, 2.0), (5.0, 5.5))
    assert 5.5 in iv and 3 not in iv
    assert not Intervals.closed(3, 2)
    assert Intervals.full().is_full()


def test_independent_with_one_empty_port_is_empty():
    c = Independent(Interface("X", (BOOL, BOOL), (BOOL,)), [{0}, set()], [{1}])
    assert c.empty
    assert c.ins[0] == frozenset()


# -- tensor ----------------------------------------------------------------------


def test_tensor_with_full_unit_contract():
    r = FiniteRelation(B1, {(("a",), ("b",))})
    unit = FiniteRelation(UNIT, {((), ())})
    t = contract_tensor(r, unit)
    assert t.pairs == r.pairs


def test_tensor_sizes_multiply():
    r = FiniteRelation(B1, {(("a",), ("a",)), (("b",), ("c",))})
    s = FiniteRelation(B1, {(("a",), ("b",)), (("b",), ("b",)), (("c",), ("c",))})
    assert len(contract_tensor(r, s)) == 6


def test_independent_tensor_matches_expansion():
    X = Interface("X", (T,), (BOOL,))
    Y = Interface("Y", (BOOL,), (T, T))
    a = Independent(X, [{"a", "c"}], [{1}])
    b = Independent(Y, [{0, 1}], [{"b"}, {"a", "b"}])
    assert expand(contract_tensor(a, b)).pairs == contract_tensor(expand(a), expand(b)).pairs


def test_linear_graph_tensor_is_block_diagonal():
    a = LinearGraph(Interface("a", (R1,), (R1,)), np.array([[2.0]]))
    b = LinearGraph(Interface("b", (R1,), (R1,)), np.array([[3.0]]))
    assert np.array_equal(contract_tensor(a, b).H, np.diag([2.0, 3.0]))


# -- finite apply ---------------------------------------------------------------


def test_identity_keeps_relation():
    r = FiniteRelation(B1, {(("a",), ("b",)), (("c",), ("c",))})
    assert contract_apply_finite(identity_diagram(B1), [r]).pairs == r.pairs


def test_serial_is_relational_composition():
    d = serial_wiring(T, T, T)
    rx = FiniteRelation(d.inner[0], {(("a",), ("b",)), (("a",), ("c",)), (("b",), ("a",))})
    ry = FiniteRelation(d.inner[1], {(("b",), ("b",)), (("c",), ("a",)), (("c",), ("c",))})
    got = contract_apply_finite(d, [rx, ry]).pairs
    expect = {(x, z) for x, y in rx.pairs for y2, z in ry.pairs if y == y2}
    assert got == expect == {(("a",), ("b",)), (("a",), ("a",)), (("a",), ("c",))}


def test_joiner_against_wire_oracle():
    d = joiner_wiring()
    rx = FiniteRelation(d.inner[0], {((0,), (0,)), ((1,), (1,)), ((1,), (0,))})
    ry = FiniteRelation(d.inner[1], {((0,), (1,)), ((1,), (0,))})
    rz = FiniteRelation(d.inner[2], {((0, 0, 0), (0,)), ((1, 1, 0), (1,)), ((1, 0, 1), (1,)), ((0, 1, 1), (0,))})
    got = contract_apply_finite(d, [rx, ry, rz]).pairs
    formula = {
        ((w, u, v), z)
        for (w,), (x,) in rx.pairs
        for (u,), (y,) in ry.pairs
        for (x2, y2, v), z in rz.pairs
        if (x, y) == (x2, y2)
    }
    assert got == formula == brute_force_apply(d, [rx, ry, rz])


def test_unfed_outer_input_is_free():
    X = Interface("X", (), (BOOL,))
    d = WiringDiagram((X,), Interface("O", (T,), (BOOL,)), ((),), (InnerOut(0, 0),))
    r = FiniteRelation(X, {((), (1,))})
    got = contract_apply_finite(d, [r]).pairs
    assert got == {((t,), (1,)) for t in T.labels}


def test_apply_checks_box_types():
    with pytest.raises(InterfaceMismatch):
        contract_apply_finite(serial_wiring(T, T, T), [FiniteRelation(Interface("Q", (BOOL,), (BOOL,)), set())] * 2)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_finite_apply_matches_wire_enumeration(rng):
    d = random_diagram(rng, pool=CARRIERS)
    if wire_count(d) > 4096:
        d = random_diagram(rng, pool=CARRIERS[:2])
    rels = [random_relation(rng, x) for x in d.inner]
    assert contract_apply_finite(d, rels).pairs == brute_force_apply(d, rels)


# -- independent apply -------------------------------------------------------------


def test_all_full_gives_full():
    d = uav_wiring()
    c = contract_apply_independent(d, [Independent.full(x) for x in d.inner])
    assert all(iv.is_full() for s in c.ins + c.outs for iv in s)


def test_uav_contract_box():
    c = contract_apply_independent(uav_wiring(), uav_contracts())
    assert c.ins == ((Intervals.closed(0, 100),), (Intervals.closed(-20, 20),))
    assert c.outs == ((Intervals.closed(-35, 35),),)


def test_uav_incompatible_contracts():
    c = contract_apply_independent(uav_wiring(), uav_contracts(incompatible=True))
    assert is_empty(c)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_independent_apply_matches_finite_apply(rng):
    d = random_diagram(rng, pool=CARRIERS[1:3])
    cs = []
    for x in d.inner:
        pick = lambda p: {v for v in p.labels if rng.random() < 0.7}
        cs.append(Independent(x, [pick(p) for p in x.inputs], [pick(p) for p in x.outputs]))
    got = contract_apply_independent(d, cs)
    ref = contract_apply_finite(d, [expand(c) for c in cs])
    if is_empty(got):
        assert not ref.pairs
    elif len(set(d.out_src)) == len(d.out_src):
        assert expand(got).pairs == ref.pairs
    else:
        # outer outputs sharing a source carry equal values, which a
        # per-port contract cannot express
        assert ref.pairs <= expand(got).pairs


# -- assume-guarantee -------------------------------------------------------------


def _grid_example():
    grid = FinSet("G", (-1, 0, 1, 2))
    r1 = AGContract.from_predicates(
        {"x": grid, "y": grid, "z": grid}, ["x", "y"],
        lambda x, y, z: y != 0, lambda x, y, z: y != 0 and z == x / y)
    r2 = AGContract.from_predicates({"u": grid, "x": grid}, ["u"], lambda u, x: True, lambda u, x: x > u)
    return grid, r1, r2


def test_ag_full_contracts():
    V = FinSet("V", (0, 1))
    full = AGContract.from_predicates({"a": V, "b": V}, ["a"], lambda a, b: True, lambda a, b: True)
    other = AGContract.from_predicates({"b": V, "c": V}, ["b"], lambda b, c: True, lambda b, c: True)
    c, ok = ag_compose(full, other)
    assert ok and len(c.assumption) == len(c.guarantee) == 8


def test_ag_guarantee_is_conjunction():
    _, r1, r2 = _grid_example()
    c, ok = ag_compose(r1, r2)
    assert ok
    assert c.variables == ("x", "y", "z", "u")
    for p in itertools.product(*(g.labels for g in c.carriers)):
        x, y, z, u = p
        assert (p in c.guarantee) == (x > u and y != 0 and z == x / y)
    assert c.inputs == frozenset({"y", "u"})


def test_ag_scoped_assumption():
    _, r1, r2 = _grid_example()
    c, _ = ag_compose(r1, r2, assume_over=["u", "y"])
    for x, y, z, u in c.assumption:
        assert y != 0 or u == 2
    assert all((x, y, z, u) in c.assumption for x, y, z, u in itertools.product((-1, 0, 1, 2), repeat=4) if y != 0)


def test_ag_incompatible_pair():
    V = FinSet("V", (0, 1))
    r1 = AGContract.from_predicates({"x": V, "z": V}, ["x"], lambda x, z: x == 0, lambda x, z: True)
    r2 = AGContract.from_predicates({"u": V, "x": V}, ["u"], lambda u, x: True, lambda u, x: x == 1)
    c, ok = ag_compose(r1, r2, assume_over=["u"])
    assert not ok and not c.assumption


def test_ag_binding_renames():
    V = FinSet("V", (0, 1))
    r1 = AGContract.from_predicates({"x": V}, [], lambda x: True, lambda x: x == 1)
    r2 = AGContract.from_predicates({"w": V}, ["w"], lambda w: w == 1, lambda w: True)
    c, ok = ag_compose(r1, r2, binding={"w": "x"})
    assert c.variables == ("x",) and ok
    assert c.assumption == frozenset({(0,), (1,)})


# -- maximal contracts -----------------------------------------------------------


def test_maximal_contract_of_identity_function():
    V = FinSet("V", ("a", "b"))
    f = FiniteFunction(Interface("F", (V,), (V,)), {("a",): ("a",), ("b",): ("b",)})
    assert maximal_contract(f).pairs == {(("a",), ("a",)), (("b",), ("b",))}


def test_maximal_contract_of_linear_function():
    h = LinearFunction(Interface("H", (R1,), (R1,)), [[6.0]])
    g = maximal_contract(h)
    assert np.array_equal(g.H, [[6.0]])
    assert contains(g, [np.array([2.0])], [np.array([12.0])])
    assert not contains(g, [np.array([2.0])], [np.array([11.0])])


def test_maximal_contract_rejects_machines():
    m = MooreMachine.from_functions(Interface("X", (BOOL,), (BOOL,)), (0, 1), lambda s, x: x[0], lambda s: (s,))
    with pytest.raises(StatefulContractError):
        maximal_contract(m)


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_maximal_contract_is_natural_on_serial_wiring(rng):
    a, b, c = (rng.choice(CARRIERS) for _ in range(3))
    d = serial_wiring(a, b, c)
    f = FiniteFunction(d.inner[0], {x: (rng.choice(b.labels),) for x in input_space((a,))})
    g = FiniteFunction(d.inner[1], {x: (rng.choice(c.labels),) for x in input_space((b,))})
    gf = FiniteFunction(d.outer, {x: g(f(x)) for x in input_space((a,))})
    assert maximal_contract(gf).pairs == contract_apply_finite(d, [maximal_contract(f), maximal_contract(g)]).pairs


# -- satisfaction --------------------------------------------------------------


def _band():
    return Independent(Interface("Amp", (R1,), (R1,)), [(Intervals.closed(2, 3),)], [(Intervals.closed(10, 11),)])


def test_empty_trajectory_satisfies():
    assert satisfies(Trajectory([], [], []), _band()).holds


def test_published_section_satisfies_band():
    t = Trajectory([(2,), (2.5,), (2.7,), (3,)], [], [(10,), (11,), (11,), (11,)])
    assert satisfies(t, _band()) == (True, None)


def test_violation_reports_step():
    t = Trajectory([(2,), (2.5,), (2.7,), (3,)], [], [(10,), (11,), (9.5,), (11,)])
    assert satisfies(t, _band()) == (False, 2)


def test_final_output_checked_against_projection():
    t = Trajectory([(2,)], [], [(10,), (12,)])
    assert satisfies(t, _band()) == (False, 1)


def test_contract_interval_bounds_inclusive():
    c = _band()
    assert contains(c, [2.0], [11.0])
    assert not contains(c, [math.nextafter(3.0, 4.0)], [10.0])
