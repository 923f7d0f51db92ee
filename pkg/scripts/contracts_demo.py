"""Static contract composition on the UAV loop and on a small grid.

The first part composes interval contracts around the UAV loop, once with
compatible bounds and once with disjoint ones. The second part composes two
assume-guarantee contracts over the grid {-1, 0, 1, 2} and reports the size
of the weakest composite assumption under the default and a restricted
variable set.

    python3 scripts/contracts_demo.py
"""

import itertools

from wiredsys.contracts import AGContract, ag_compose, contract_apply_independent, is_empty
from wiredsys.report import render_report
from wiredsys.scenarios import uav_contracts, uav_wiring
from wiredsys.wiring import FinSet

GRID = (-1, 0, 1, 2)


def snap(q):
    return min(GRID, key=lambda g: (abs(g - q), g))


def main():
    for bad in (False, True):
        c = contract_apply_independent(uav_wiring(), uav_contracts(incompatible=bad))
        label = "disjoint" if bad else "compatible"
        print(f"{label}: ins={c.ins} outs={c.outs} empty={is_empty(c)}")

    g = FinSet("Grid", GRID)
    div = AGContract.from_predicates({"x": g, "y": g, "z": g}, ["x", "y"],
                                     lambda x, y, z: y != 0, lambda x, y, z: y != 0 and z == snap(x / y))
    gt = AGContract.from_predicates({"u": g, "x": g}, ["u"], lambda u, x: True, lambda u, x: x > u)
    y_nonzero = sum(1 for p in itertools.product(GRID, repeat=4) if p[1] != 0)
    for over in (None, ("u", "y")):
        comp, ok = ag_compose(div, gt, assume_over=over)
        print(render_report({"assume_over": list(over) if over else "all", "compatible": ok,
                             "assumption_points": len(comp.assumption),
                             "guarantee_points": len(comp.guarantee),
                             "y_nonzero_points": y_nonzero}, "json"))


if __name__ == "__main__":
    main()
