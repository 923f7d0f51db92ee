"""Run the sensor-spoofing scenario end to end.

An attacker who believes the sensor is a single box probes the real drone
with a growing set of tests, narrows a knowledge base of candidate
implementations, then plans a GPS rewrite plus a rewiring that cuts one GPS
input. The attack is applied to both the believed and the real system and
the resulting composites are compared.

    python3 scripts/security_scenario.py [--horizon 6]
"""

import argparse

from wiredsys.scenarios import security_scenario
from wiredsys.security import (
    AttackPlan,
    Const,
    KnowledgeDatabase,
    apply_attack,
    behavioral_equiv,
    box_index,
    compose_system,
    distinguishing_input,
    iotable_test,
    run_tests,
    terminal_test,
    trace_test,
    yoneda_filter,
)
from wiredsys.wiring import InnerIn


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--horizon", type=int, default=6, help="length of the exhaustive I/O table test")
    args = ap.parse_args()

    sc = security_scenario()
    target = compose_system(sc.real_diagram, sc.real_behaviors)
    believed = compose_system(sc.model_diagram, sc.model_behaviors)
    entries = [("believed", believed)]
    entries += [(name, compose_system(d, bs)) for name, (d, bs) in sc.decoys.items()]
    kb = KnowledgeDatabase(target.interface, tuple(entries))
    print(f"target has {len(target.states)} states; knowledge base: {kb.names()}")

    stages = [
        [terminal_test()],
        [terminal_test(), trace_test([(0, 1), (1, 1), (1, 0)])],
        [terminal_test(), iotable_test(args.horizon)],
    ]
    for tests in stages:
        kept = yoneda_filter(run_tests(target, tests), kb, tests)
        print(f"tests {[t.name for t in tests]} keep {kept}")
    for name, sys in kb.entries:
        w = distinguishing_input(target, sys)
        print(f"  {name:>10}: " + ("equivalent" if w is None else f"differs after input {w}"))

    def plan(d):
        return AttackPlan({"G": sc.hacked_gps}, {InnerIn(box_index(d, "G"), 1): Const(0)})

    on_model = apply_attack(plan(sc.model_diagram), sc.model_diagram, sc.model_behaviors)
    on_real = apply_attack(plan(sc.real_diagram), sc.real_diagram, sc.real_behaviors)
    print("attack changes the believed system:", not behavioral_equiv(on_model.before, on_model.after))
    print("attack changes the real system:    ", not behavioral_equiv(on_real.before, on_real.after))
    print("attacked systems agree:            ", behavioral_equiv(on_model.after, on_real.after))


if __name__ == "__main__":
    main()
