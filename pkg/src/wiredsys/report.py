"""Turning analysis results into JSON, plain text and CSV.

Everything goes through plain data first (dicts, lists, strings, numbers)
so that the JSON and text renderings show the same content. JSON output
has sorted keys; floats use the shortest decimal that reads back to the
same value, and integral floats print as integers.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .behavior import LTISystem, MooreMachine, Trajectory
from .contracts import FiniteRelation, Independent, LinearGraph
from .wiring import OuterIn, WiringDiagram

__all__ = [
    "render_report",
    "number",
    "machine_data",
    "lti_data",
    "system_data",
    "contract_data",
    "diagram_data",
    "diagram_dsl",
    "trajectory_csv",
    "trajectory_rows",
]


def number(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return int(x)
    return x


def _plain(v):
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (float, np.floating)):
        return number(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, frozenset):
        return sorted((_plain(x) for x in v), key=repr)
    return v


def machine_data(m: MooreMachine) -> dict:
    states = list(m.states)
    xs = sorted({x for (_, x) in m.update}, key=repr)
    return {
        "kind": "moore",
        "interface": m.interface.name,
        "states": _plain(states),
        "init": _plain(m.initial),
        "update": [
            {"state": _plain(s), "input": _plain(x), "next": _plain(m.update[(s, x)])}
            for s in states for x in xs
        ],
        "readout": [{"state": _plain(s), "output": _plain(m.readout[s])} for s in states],
    }


def lti_data(l: LTISystem) -> dict:
    return {"kind": "lti", "interface": l.interface.name, "n": l.n,
            "A": _plain(l.A), "B": _plain(l.B), "C": _plain(l.C)}


def system_data(s) -> dict:
    if isinstance(s, LTISystem):
        return lti_data(s)
    return machine_data(s)


def _subset_data(s):
    if isinstance(s, frozenset):
        return sorted(s, key=repr)
    return [[[number(a), number(b)] for a, b in iv.parts] for iv in s]


def contract_data(r) -> dict:
    if isinstance(r, FiniteRelation):
        return {"kind": "relation", "empty": not r.pairs,
                "pairs": sorted(([list(x), list(y)] for x, y in r.pairs), key=repr)}
    if isinstance(r, Independent):
        return {"kind": "independent", "empty": r.empty,
                "in": [_subset_data(s) for s in r.ins], "out": [_subset_data(s) for s in r.outs]}
    if isinstance(r, LinearGraph):
        return {"kind": "linear-graph", "H": _plain(r.H)}
    raise TypeError(f"not a contract: {type(r).__name__}")


def _aliases(d: WiringDiagram) -> list[str]:
    seen, out = {}, []
    for x in d.inner:
        n = seen.get(x.name, 0)
        seen[x.name] = n + 1
        out.append(x.name if n == 0 else f"{x.name}_{n}")
    return out


def _src(src, names) -> str:
    if isinstance(src, OuterIn):
        return f"outer.in[{src.index}]"
    return f"{names[src.box]}.out[{src.port}]"


def diagram_data(d: WiringDiagram) -> dict:
    names = _aliases(d)
    conns = [f"{names[b]}.in[{p}] <- {_src(s, names)}"
             for b, srcs in enumerate(d.in_src) for p, s in enumerate(srcs)]
    conns += [f"outer.out[{j}] <- {_src(s, names)}" for j, s in enumerate(d.out_src)]
    return {"inner": names, "boxes": [x.name for x in d.inner], "outer": d.outer.name, "connections": conns}


def diagram_dsl(d: WiringDiagram, name: str, box_names=None) -> str:
    """The diagram as a ``wiring`` declaration."""
    data = diagram_data(d)
    boxes = box_names or data["boxes"]
    inner = ", ".join(a if a == b else f"{a}: {b}" for a, b in zip(data["inner"], boxes))
    body = "".join(f"  {c};\n" for c in data["connections"])
    return f"wiring {name} : [{inner}] -> {d.outer.name} {{\n{body}}}\n"


def _leaves(v) -> list:
    if isinstance(v, np.ndarray):
        return [number(x) for x in v.ravel()]
    if isinstance(v, (tuple, list)):
        return [x for item in v for x in _leaves(item)]
    if isinstance(v, (float, np.floating)):
        return [number(v)]
    return [v]


def trajectory_rows(t: Trajectory) -> tuple[list[str], list[list]]:
    """Header ``t, s0.., x0.., y0..`` and one row per instant; the last row has no input."""
    states = [_leaves(s) for s in t.states]
    ins = [_leaves(x) for x in t.inputs]
    outs = [_leaves(y) for y in t.outputs]
    ns = len(states[0]) if states else 0
    nx = len(ins[0]) if ins else (t.interface.in_dim if t.interface is not None and t.interface.is_linear()
                                 else len(t.interface.inputs) if t.interface is not None else 0)
    ny = len(outs[0]) if outs else 0
    header = ["t"] + [f"s{i}" for i in range(ns)] + [f"x{i}" for i in range(nx)] + [f"y{i}" for i in range(ny)]
    rows = []
    for k in range(len(states)):
        x = ins[k] if k < len(ins) else [""] * nx
        rows.append([k] + states[k] + x + outs[k])
    return header, rows


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trajectory_csv(t: Trajectory) -> str:
    header, rows = trajectory_rows(t)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _text(v, indent=0) -> list[str]:
    pad = "  " * indent
    if isinstance(v, dict):
        lines = []
        for k in sorted(v):
            x = v[k]
            if isinstance(x, (dict, list)) and x and any(isinstance(i, (dict, list)) for i in
                                                         (x.values() if isinstance(x, dict) else x)):
                lines.append(f"{pad}{k}:")
                lines += _text(x, indent + 1)
            else:
                lines.append(f"{pad}{k}: {_inline(x)}")
        return lines
    if isinstance(v, list):
        return [f"{pad}- {_inline(x)}" if not isinstance(x, dict) else f"{pad}-\n" + "\n".join(_text(x, indent + 1))
                for x in v]
    return [f"{pad}{_inline(v)}"]


def _inline(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_inline(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_inline(v[k])}" for k in sorted(v)) + "}"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    return str(v)


def render_report(result, fmt: str = "text") -> str:
    """Render plain result data as ``json`` or ``text``."""
    data = _plain(result)
    if fmt == "json":
        return json.dumps(data, sort_keys=True, ensure_ascii=False)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(_text(data))
