"""DOT renderings of factor graphs, compute graphs, and analog maps.

Output is deterministic: nodes in id order, attributes in fixed order,
so identical inputs rerender byte-identically.
"""

from __future__ import annotations

from .errors import GraphError


def _quote(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render(lines: list[str]) -> str:
    if not lines:
        return "digraph g { }\n"
    return "digraph g {\n" + "\n".join("  " + l for l in lines) + "\n}\n"


def _factor_graph_dot(fg) -> str:
    lines = []
    for v in fg.variables:
        lines.append(f"v{v.id} [label={_quote(v.name)} shape=ellipse];")
    for f in fg.factors:
        lines.append(f"f{f.id} [label={_quote(f.name or f.id)} shape=box];")
    for f in fg.factors:
        for vid in f.scope:
            lines.append(f"v{vid} -> f{f.id} [dir=none];")
    return _render(lines)


def _compute_graph_dot(cg) -> str:
    lines = []
    for n in cg.nodes:
        if n.op.value == "INPUT":
            label, shape = n.label, "ellipse"
        elif n.op.value == "CONST":
            label, shape = repr(n.const_value), "plaintext"
        else:
            label, shape = n.op.value, "box"
        lines.append(f"n{n.id} [label={_quote(label)} shape={shape}];")
    for n in cg.nodes:
        for o in n.operands:
            lines.append(f"n{o} -> n{n.id};")
    for name in sorted(cg.outputs):
        lines.append(f"o_{name} [label={_quote(name)} shape=note];")
        lines.append(f"n{cg.outputs[name]} -> o_{name};")
    return _render(lines)


def _analog_map_dot(am) -> str:
    lines = []
    for inst in am.instances:
        lines.append(f"{inst.name} [label={_quote(inst.cell)} shape=box];")
    seen = set()
    for inst in am.instances:
        for port, net in sorted(inst.connections.items()):
            if net not in seen:
                seen.add(net)
                lines.append(f"net_{net} [label={_quote(net)} shape=point];")
    for inst in am.instances:
        for port, net in sorted(inst.connections.items()):
            if port.startswith("o"):
                lines.append(f"{inst.name} -> net_{net} [label={_quote(port)}];")
            else:
                lines.append(f"net_{net} -> {inst.name} [label={_quote(port)}];")
    return _render(lines)


def to_dot(obj) -> str:
    """Render a FactorGraph, ComputeGraph, or AnalogMap as DOT text."""
    if hasattr(obj, "factors") and hasattr(obj, "variables"):
        return _factor_graph_dot(obj)
    if hasattr(obj, "nodes") and hasattr(obj, "outputs"):
        return _compute_graph_dot(obj)
    if hasattr(obj, "instances"):
        return _analog_map_dot(obj)
    raise GraphError(f"cannot render {type(obj).__name__} as DOT")
