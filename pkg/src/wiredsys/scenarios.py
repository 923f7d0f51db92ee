"""Ready-made boxes, wirings and behaviors for the worked examples.

* ``uav_*``: a sensor L, controller C and longitudinal dynamics D wired
  in a loop, with L and C the "add the two inputs" linear functions and D
  the pitch dynamics (state ``(a, q, theta)``, output ``theta``).
* ``joiner``: three boxes X, Y, Z where Z reads the outputs of X and Y and
  one outer input.
* ``serial``: two boxes in a chain.
* ``security``: a boolean version of the UAV used for the attacker
  scenario. The attacker believes the sensor is one IMU, a GPS and a
  processor; in reality it has two IMUs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .behavior import FiniteFunction, LinearFunction, LTISystem, MooreMachine
from .contracts import Independent, Intervals
from .wiring import FinSet, InnerOut, Interface, LinSpace, OuterIn, WiringDiagram, substitute

R1 = LinSpace(1)
BOOL = FinSet("Bool", (0, 1))

A_D = np.array([[-0.313, 56.7, 0.0], [-0.0139, -0.426, 0.0], [0.0, 56.7, 0.0]])
B_D = np.array([[0.232], [0.0203], [0.0]])
C_D = np.array([[0.0, 0.0, 1.0]])


def uav_boxes(t=R1):
    L = Interface("L", (t, t), (t,))
    C = Interface("C", (t, t), (t,))
    D = Interface("D", (t,), (t,))
    UAV = Interface("UAV", (t, t), (t,))
    return L, C, D, UAV


def uav_wiring(t=R1) -> WiringDiagram:
    """L reads (D's output, outer input 0); C reads (L's output, outer input 1);
    D reads C's output; the outer output is D's output."""
    L, C, D, UAV = uav_boxes(t)
    return WiringDiagram(
        (L, C, D),
        UAV,
        (
            (InnerOut(2, 0), OuterIn(0)),
            (InnerOut(0, 0), OuterIn(1)),
            (InnerOut(1, 0),),
        ),
        (InnerOut(2, 0),),
    )


def uav_components():
    L, C, D, _ = uav_boxes()
    return [
        LinearFunction(L, [[1.0, 1.0]]),
        LinearFunction(C, [[1.0, 1.0]]),
        LTISystem(D, A_D, B_D, C_D),
    ]


def uav_explicit_update(s, y) -> np.ndarray:
    """The hand-expanded composite update on ``(s_L, s_C, a, q, theta)`` with input ``(e, d)``."""
    sL1, sL2, sC1, sC2, a, q, th = s
    e, d = y
    return np.array([
        th,
        e,
        sL1 + sL2,
        d,
        -0.313 * a + 56.7 * q + 0.232 * sC1 + 0.232 * sC2,
        -0.0139 * a - 0.426 * q + 0.0203 * sC1 + 0.0203 * sC2,
        56.7 * q,
    ])


def uav_contracts(incompatible: bool = False) -> list[Independent]:
    """Interval contracts: L's second input in [0, 100], C's second input in
    [-20, 20], D's output in [-35, 35], everything else free. With
    ``incompatible`` C promises outputs in [0, 1] while D accepts [2, 3]."""
    L, C, D, _ = uav_boxes()
    full = Intervals.full()
    cL = Independent(L, [(full,), (Intervals.closed(0, 100),)], [(full,)])
    cC = Independent(C, [(full,), (Intervals.closed(-20, 20),)],
                     [(Intervals.closed(0, 1),) if incompatible else (full,)])
    cD = Independent(D, [(Intervals.closed(2, 3),) if incompatible else (full,)],
                     [(Intervals.closed(-35, 35),)])
    return [cL, cC, cD]


def joiner_wiring(t: FinSet = BOOL) -> WiringDiagram:
    """X and Y each read one outer input; Z reads X, Y and the third outer input."""
    X = Interface("X", (t,), (t,))
    Y = Interface("Y", (t,), (t,))
    Z = Interface("Z", (t, t, t), (t,))
    A = Interface("A", (t, t, t), (t,))
    return WiringDiagram(
        (X, Y, Z),
        A,
        ((OuterIn(0),), (OuterIn(1),), (InnerOut(0, 0), InnerOut(1, 0), OuterIn(2))),
        (InnerOut(2, 0),),
    )


def serial_wiring(a: FinSet, b: FinSet, c: FinSet) -> WiringDiagram:
    """``X: a -> b`` followed by ``Y: b -> c``."""
    X = Interface("X", (a,), (b,))
    Y = Interface("Y", (b,), (c,))
    return WiringDiagram(
        (X, Y), Interface("XY", (a,), (c,)), ((OuterIn(0),), (InnerOut(0, 0),)), (InnerOut(1, 0),)
    )


# -- boolean attacker scenario ------------------------------------------------


def _fn(name, arity, f):
    from .behavior import input_space

    iface = Interface(name, (BOOL,) * arity, (BOOL,))
    return FiniteFunction(iface, {x: (f(*x),) for x in input_space(iface.inputs)})


def toggle(name="D") -> MooreMachine:
    """A T flip-flop: flips its state on input 1 and outputs the state."""
    iface = Interface(name, (BOOL,), (BOOL,))
    return MooreMachine.from_functions(iface, (0, 1), lambda s, x: s ^ x[0], lambda s: (s,), 0)


def delay(name="D") -> MooreMachine:
    iface = Interface(name, (BOOL,), (BOOL,))
    return MooreMachine.from_functions(iface, (0, 1), lambda s, x: x[0], lambda s: (s,), 0)


def sensor_attacker_wiring() -> WiringDiagram:
    """The attacker's view of L: one IMU, a GPS and a processor."""
    I = Interface("I'", (BOOL, BOOL), (BOOL,))
    G = Interface("G", (BOOL, BOOL), (BOOL,))
    P = Interface("P'", (BOOL, BOOL), (BOOL,))
    L = uav_boxes(BOOL)[0]
    return WiringDiagram(
        (I, G, P),
        L,
        ((OuterIn(0), OuterIn(1)), (OuterIn(0), OuterIn(1)), (InnerOut(0, 0), InnerOut(1, 0))),
        (InnerOut(2, 0),),
    )


def sensor_real_wiring() -> WiringDiagram:
    """The actual L: two IMUs reading the same wires, a GPS and a processor."""
    I1 = Interface("I1", (BOOL, BOOL), (BOOL,))
    I2 = Interface("I2", (BOOL, BOOL), (BOOL,))
    G = Interface("G", (BOOL, BOOL), (BOOL,))
    P = Interface("P", (BOOL, BOOL, BOOL), (BOOL,))
    L = uav_boxes(BOOL)[0]
    both = (OuterIn(0), OuterIn(1))
    return WiringDiagram(
        (I1, I2, G, P),
        L,
        (both, both, both, (InnerOut(0, 0), InnerOut(1, 0), InnerOut(2, 0))),
        (InnerOut(3, 0),),
    )


@dataclass
class SecurityScenario:
    real_diagram: WiringDiagram
    real_behaviors: list
    model_diagram: WiringDiagram
    model_behaviors: list
    decoys: dict  # name -> (diagram, behaviors), none equivalent to the real system
    hacked_gps: FiniteFunction


def security_scenario() -> SecurityScenario:
    AND = lambda a, b: a & b
    OR = lambda a, b: a | b
    XOR = lambda a, b: a ^ b
    uav = uav_wiring(BOOL)
    real = substitute(uav, 0, sensor_real_wiring())
    model = substitute(uav, 0, sensor_attacker_wiring())
    C = _fn("C", 2, XOR)
    D = toggle()
    real_b = [_fn("I1", 2, AND), _fn("I2", 2, AND), _fn("G", 2, OR),
              _fn("P", 3, lambda a, b, g: (a & b) ^ g), C, D]
    model_b = [_fn("I'", 2, AND), _fn("G", 2, OR), _fn("P'", 2, XOR), C, D]

    def swap(i, new):
        out = list(model_b)
        out[i] = new
        return (model, out)

    decoys = {
        "gps-and": swap(1, _fn("G", 2, AND)),
        "proc-or": swap(2, _fn("P'", 2, OR)),
        "ctrl-or": swap(3, _fn("C", 2, OR)),
        "dyn-delay": swap(4, delay()),
    }
    hacked = _fn("G", 2, lambda a, b: 1 - a)
    return SecurityScenario(real, real_b, model, model_b, decoys, hacked)
