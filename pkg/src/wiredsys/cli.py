"""Command-line interface: ``wiredsys <command> FILE ...``.

Exit codes: 0 success, 1 usage or internal error, 2 the model is invalid or
a verification (check, contract compatibility, satisfaction) failed.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
from pathlib import Path

import numpy as np

from . import contracts as ct
from . import security as sec
from .behavior import LTISystem, MooreMachine, Trajectory, simulate
from .dsl import DSLError, Workspace, _Fail, convert_input, convert_state, load_model, parse_value
from .report import contract_data, diagram_data, diagram_dsl, render_report, system_data, trajectory_csv, \
    trajectory_rows
from .wiring import FinSet

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args, data, text=None):
    if args.json:
        print(render_report(data, "json"))
    else:
        print(text if text is not None else render_report(data, "text"))


def _workspace(path: str) -> Workspace:
    text = Path(path).read_text(encoding="utf-8")
    model, diags = load_model(text)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise DSLError(errors)
    return Workspace(model)


def _names(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def cmd_check(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    model, diags = load_model(text)
    errors = [d for d in diags if d.severity == "error"]
    data = {
        "valid": not errors,
        "declarations": len(model.decls) if model is not None else 0,
        "diagnostics": [{"severity": d.severity, "line": d.line, "col": d.col, "message": d.message}
                        for d in diags],
    }
    if args.json:
        _emit(args, data)
    else:
        for d in diags:
            print(f"{args.file}:{d}", file=sys.stderr)
        print(f"{args.file}: {'ok' if not errors else f'{len(errors)} error(s)'}")
    return EXIT_OK if not errors else EXIT_FAIL


def cmd_flatten(args) -> int:
    ws = _workspace(args.file)
    w, boxes = ws.flatten(args.wiring, args.depth, with_boxes=True)
    _emit(args, diagram_data(w), diagram_dsl(w, f"{args.wiring}_flat", boxes).rstrip("\n"))
    return EXIT_OK


def cmd_compose(args) -> int:
    ws = _workspace(args.file)
    w = ws.diagram(args.wiring)
    parts = [ws.behavior(b) for b in _names(args.behaviors)]
    if len(parts) != len(w.inner):
        raise UsageError(f"{args.wiring} has {len(w.inner)} inner boxes, got {len(parts)} behaviors")
    for b, p in enumerate(parts):
        if p.interface.ports() != w.inner[b].ports():
            raise UsageError(f"behavior {_names(args.behaviors)[b]!r} does not fit box {w.inner[b].name}")
    _emit(args, system_data(sec.compose_system(w, parts)))
    return EXIT_OK


def _read_rows(path: str) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [[c.strip() for c in row] for row in csv.reader(fh) if row and any(c.strip() for c in row)]


def _is_header(row) -> bool:
    return all(re.fullmatch(r"[A-Za-z_]\w*", c) for c in row) and any(
        re.fullmatch(r"(t|[sxy]\d+|in\d+|x)", c) for c in row)


def _parse_init(text: str, system):
    if text in ("initial", "init", ""):
        return None
    if isinstance(system, LTISystem):
        body = text.strip("[]()")
        return convert_state(("list",) + tuple(v for v in body.split(",") if v.strip()) if body else ("list",))
    return convert_state(parse_value(text))


def cmd_simulate(args) -> int:
    ws = _workspace(args.file)
    system = ws.system(args.system)
    rows = _read_rows(args.inputs)
    if rows and _is_header(rows[0]):
        rows = rows[1:]
    if len(rows) < args.steps:
        raise UsageError(f"{args.inputs} has {len(rows)} input rows, {args.steps} steps requested")
    iface = system.interface
    inputs = [convert_input(iface, tuple(r)) for r in rows[: args.steps]]
    t = simulate(system, _parse_init(args.init, system), inputs)
    if args.json:
        header, body = trajectory_rows(t)
        _emit(args, {"columns": header, "rows": body})
    else:
        sys.stdout.write(trajectory_csv(t))
    return EXIT_OK


def cmd_contract(args) -> int:
    ws = _workspace(args.file)
    w = ws.diagram(args.wiring)
    cs = [ws.contract(c) for c in _names(args.contracts)]
    if len(cs) != len(w.inner):
        raise UsageError(f"{args.wiring} has {len(w.inner)} inner boxes, got {len(cs)} contracts")
    if all(isinstance(c, ct.Independent) for c in cs):
        r = ct.contract_apply_independent(w, cs)
    else:
        r = ct.contract_apply_finite(w, [ct.expand(c) for c in cs])
    data = contract_data(r)
    data["compatible"] = not ct.is_empty(r)
    _emit(args, data)
    return EXIT_OK if data["compatible"] else EXIT_FAIL


def _trajectory_from_csv(path, iface):
    rows = _read_rows(path)
    if not rows or not _is_header(rows[0]):
        raise UsageError("trajectory CSV needs a header row t,s..,x..,y..")
    header, rows = rows[0], rows[1:]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    inputs, outputs = [], []
    for r in rows:
        r = r + [""] * (len(header) - len(r))
        xs = tuple(r[i] for i in xcols)
        ys = tuple(r[i] for i in ycols)
        outputs.append(convert_output(iface, ys))
        if all(v == "" for v in xs):
            continue
        inputs.append(convert_input(iface, xs))
    return Trajectory(inputs, [], outputs, iface)


def convert_output(iface, ys):
    if iface.is_linear():
        return np.array([float(v) for v in ys])
    return tuple(ys)


def cmd_satisfies(args) -> int:
    ws = _workspace(args.file)
    model = ws.model
    if model.lookup("contract", args.contract) is not None:
        r = ws.contract(args.contract)
        t = _trajectory_from_csv(args.trajectory, r.interface)
        v = ct.satisfies(t, r)
        data = {"contract": args.contract, "holds": v.holds, "step": v.step}
    elif model.lookup("timecontract", args.contract) is not None:
        c = ws.time_contract(args.contract)
        decl = model.lookup("timecontract", args.contract)
        iface = ws.interface(decl.box)
        t = _trajectory_from_csv(args.trajectory, iface)
        n = len(t.inputs)
        a = [_vertex(iface.inputs, x) for x in t.inputs]
        b = [_vertex(iface.outputs, y) for y in t.outputs[:n]]
        holds = bool(c.membership(tuple(a), tuple(b))) if n else True
        data = {"contract": args.contract, "holds": holds, "length": max(n - 1, 0)}
    else:
        raise UsageError(f"no contract or time contract named {args.contract!r}")
    _emit(args, data)
    return EXIT_OK if data["holds"] else EXIT_FAIL


def _vertex(ports, value):
    if all(isinstance(p, FinSet) for p in ports):
        return tuple(value)
    return tuple(float(v) for v in value)


def cmd_probe(args) -> int:
    ws = _workspace(args.file)
    target = ws.system(args.target)
    kb = ws.kb(args.kb)
    tests = [ws.test(t) for t in _names(args.tests)]
    obs = sec.run_tests(target, tests)
    names = sec.yoneda_filter(obs, kb, tests)
    data = {"candidates": names}
    if names and isinstance(target, MooreMachine):
        data["equivalence"] = {n: sec.behavioral_equiv(target, kb[n]) for n in names}
        data["notion"] = "agreement on the supplied tests; equivalence = bisimulation of reachable parts"
    _emit(args, data)
    return EXIT_OK


def cmd_attack(args) -> int:
    ws = _workspace(args.file)
    w, behaviors, plan = ws.attack(args.plan)
    res = sec.apply_attack(plan, w, behaviors)
    data = {
        "plan": args.plan,
        "rewritten": sorted(w.inner[b].name for b in plan.rewrites),
        "rewired": len(plan.rewirings),
        "before": {"interface": res.before.interface.name, **_size(res.before)},
        "after": {"interface": res.after.interface.name, **_size(res.after)},
        "diagram": diagram_data(res.diagram),
        "note": "rewrite naturality is only checked on the wirings present in this model",
    }
    if isinstance(res.before, MooreMachine):
        seq = sec.distinguishing_input(res.before, res.after)
        if seq is None:
            data["diff"] = None
        else:
            tb = simulate(res.before, None, seq)
            ta = simulate(res.after, None, seq)
            data["diff"] = {"inputs": seq, "before": tb.outputs, "after": ta.outputs}
        if args.verify_equiv:
            rep = sec.equivalence_report(res.before, res.after)
            data["equivalent"] = rep.equivalent
            data["isomorphic"] = rep.isomorphic
            data["notion"] = rep.notion
    else:
        changed = not (res.before.n == res.after.n and res.before.allclose(res.after, 1e-9))
        data["diff"] = {"matrices_changed": changed, "tolerance": 1e-9}
        if args.verify_equiv:
            data["equivalent"] = None
            data["notion"] = "no exact equivalence decision for linear systems"
    _emit(args, data)
    return EXIT_OK


def _size(s) -> dict:
    if isinstance(s, LTISystem):
        return {"n": s.n}
    return {"states": len(s.states)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wiredsys", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    # Subcommands accept --json too; SUPPRESS keeps a flag given before the
    # subcommand from being reset.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, parents=[common])
        sp.add_argument("file")
        sp.set_defaults(fn=fn)
        return sp

    add("check", cmd_check, "parse and type-check a model")
    sp = add("flatten", cmd_flatten, "inline declared implementations into a wiring")
    sp.add_argument("--wiring", required=True)
    sp.add_argument("--depth", type=int, default=None)
    sp = add("compose", cmd_compose, "compose behaviors along a wiring")
    sp.add_argument("--wiring", required=True)
    sp.add_argument("--behaviors", required=True)
    sp = add("simulate", cmd_simulate, "simulate a system and print its trajectory as CSV")
    sp.add_argument("--system", required=True)
    sp.add_argument("--init", default="initial")
    sp.add_argument("--inputs", required=True, help="CSV file, one row of input values per step")
    sp.add_argument("--steps", type=int, required=True)
    sp = add("contract", cmd_contract, "compose contracts along a wiring")
    sp.add_argument("--wiring", required=True)
    sp.add_argument("--contracts", required=True)
    sp = add("satisfies", cmd_satisfies, "check a trajectory CSV against a contract")
    sp.add_argument("--trajectory", required=True)
    sp.add_argument("--contract", required=True)
    sp = add("probe", cmd_probe, "filter a knowledge database by test agreement with a target")
    sp.add_argument("--target", required=True)
    sp.add_argument("--kb", required=True)
    sp.add_argument("--tests", required=True)
    sp = add("attack", cmd_attack, "apply an attack plan and compare before and after")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--verify-equiv", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except DSLError as e:
        print(f"{args.file}: invalid model", file=sys.stderr)
        for d in e.diagnostics:
            print(f"{args.file}:{d}", file=sys.stderr)
        return EXIT_FAIL
    except _Fail as e:
        print(f"error: {e.msg}", file=sys.stderr)
        return EXIT_ERROR
    except (UsageError, OSError, KeyError, ValueError, TypeError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
