"""SPICE-dialect netlist emission and parsing.

The emitted text is deterministic: title comment, .SUBCKT blocks sorted
by name, X-lines in instance order with nets in cell port order, one
current source per stimulus rail, MEASURE comment markers naming the
read-out nets, optional directives, one .END. Currents are microamps; a
probability p rides on a rail as p * gamma * unit_current.

Plain emission writes placeholder sources (DC 0); the testbench form
sets the true rail to p * gamma and the complement rail to (1 - p) *
gamma and appends a .OP directive.

The parser accepts this dialect back: case-insensitive directives,
'+' continuation lines, '*' comments (MEASURE markers are recovered,
other comments are dropped), and it checks subckt arity, duplicate
names, and single-.END structure. parse and serialize are mutually
inverse on emitted text, byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

from .analog_map import AnalogMap
from .errors import NetlistError, UnboundInputError


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class SubcktDef:
    name: str
    ports: tuple[str, ...]
    body: tuple[str, ...]


@dataclass(frozen=True)
class Instance:
    name: str
    nets: tuple[str, ...]
    subckt: str
    params: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class CurrentSource:
    name: str
    net: str
    value: float


@dataclass(frozen=True)
class Measure:
    label: str
    net: str


@dataclass
class Netlist:
    title: str
    subckts: tuple[SubcktDef, ...]
    instances: tuple[Instance, ...]
    sources: tuple[CurrentSource, ...]
    measures: tuple[Measure, ...]
    directives: tuple[str, ...] = ()

    @property
    def nets(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for inst in self.instances:
            for net in inst.nets:
                seen.setdefault(net, None)
        for src in self.sources:
            seen.setdefault(src.net, None)
        return tuple(seen)

    def subckt_named(self, name: str) -> SubcktDef:
        for sd in self.subckts:
            if sd.name == name:
                return sd
        raise NetlistError(f"no subckt named {name}")


def build_netlist(am: AnalogMap, stimulus: dict[str, float] | None = None,
                  testbench: bool = False) -> Netlist:
    """Assemble the netlist model for a map.

    With testbench=True the stimulus (default: the map's own bindings)
    is applied as source values and a .OP directive is appended;
    otherwise sources are DC 0 placeholders.
    """
    cfg = am.cfg
    scale = cfg.gamma * cfg.unit_current
    if testbench:
        stim = dict(am.default_bindings) if stimulus is None else dict(stimulus)
        missing = sorted(set(am.inputs) - set(stim))
        if missing:
            raise UnboundInputError(
                "testbench stimulus missing inputs: " + ", ".join(missing))
        unknown = sorted(set(stim) - set(am.inputs))
        if unknown:
            raise NetlistError(
                "stimulus names not in the map: " + ", ".join(unknown))
        for name, p in stim.items():
            if not 0.0 <= p <= 1.0:
                raise NetlistError(f"stimulus {name!r} out of [0, 1]: {p}")
    subckts = []
    for name in sorted(am.subckts):
        spec = am.subckts[name]
        lines = spec.template.splitlines()
        subckts.append(SubcktDef(name=name, ports=spec.ports,
                                 body=tuple(lines[1:-1])))
    instances = []
    for inst in am.instances:
        spec = am.subckts[inst.cell]
        nets = tuple(inst.connections[p] for p in spec.ports)
        instances.append(Instance(name=inst.name, nets=nets,
                                  subckt=inst.cell, params=inst.params))
    sources = []
    for k, name in enumerate(sorted(am.inputs)):
        v = stim[name] * scale if testbench else 0.0
        sources.append(CurrentSource(f"Iin{k}", am.inputs[name], v))
        comp = am.input_complements.get(name)
        if comp is not None:
            vb = (1.0 - stim[name]) * scale if testbench else 0.0
            sources.append(CurrentSource(f"Iib{k}", comp, vb))
    measures = tuple(Measure(name, am.outputs[name])
                     for name in sorted(am.outputs))
    title = (f"mpforge netlist gamma={_fmt(cfg.gamma)} "
             f"unit_current={_fmt(cfg.unit_current)} "
             f"splines={cfg.spline_count}")
    return Netlist(title=title, subckts=tuple(subckts),
                   instances=tuple(instances), sources=tuple(sources),
                   measures=measures,
                   directives=(".OP",) if testbench else ())


def serialize_netlist(nl: Netlist) -> str:
    lines = [f"* {nl.title}"]
    for sd in nl.subckts:
        lines.append(f".SUBCKT {sd.name} {' '.join(sd.ports)}")
        lines.extend(sd.body)
        lines.append(".ENDS")
    for inst in nl.instances:
        parts = [inst.name, *inst.nets, inst.subckt]
        parts += [f"{k}={_fmt(v)}" for k, v in inst.params]
        lines.append(" ".join(parts))
    for src in nl.sources:
        lines.append(f"{src.name} 0 {src.net} DC {_fmt(src.value)}")
    for m in nl.measures:
        lines.append(f"* MEASURE {m.label} {m.net}")
    lines.extend(nl.directives)
    lines.append(".END")
    return "\n".join(lines) + "\n"


def emit_spice(am: AnalogMap) -> str:
    """Netlist text with placeholder stimulus sources."""
    return serialize_netlist(build_netlist(am))


def emit_testbench(am: AnalogMap,
                   stimulus: dict[str, float] | None = None) -> str:
    """Netlist text with live stimulus values and an operating-point run."""
    return serialize_netlist(build_netlist(am, stimulus, testbench=True))


def _logical_lines(text: str):
    """Join '+' continuations; yield (line_number, line) pairs."""
    out: list[tuple[int, str]] = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if stripped.startswith("+"):
            if not out:
                raise NetlistError("continuation with no previous line", line=i)
            n, prev = out[-1]
            out[-1] = (n, prev + " " + stripped[1:].strip())
        else:
            out.append((i, line))
    return out


def parse_spice(text: str) -> Netlist:
    lines = _logical_lines(text)
    if not lines or not lines[0][1].startswith("*"):
        raise NetlistError("first line must be the title comment", line=1)
    title = lines[0][1][1:].strip()
    subckts: list[SubcktDef] = []
    instances: list[Instance] = []
    sources: list[CurrentSource] = []
    measures: list[Measure] = []
    directives: list[str] = []
    seen_subckts: dict[str, SubcktDef] = {}
    seen_names: set[str] = set()
    in_subckt: tuple[int, str, tuple[str, ...]] | None = None
    body: list[str] = []
    ended = False
    for n, line in lines[1:]:
        stripped = line.strip()
        if not stripped:
            continue
        upper = stripped.upper()
        if in_subckt is not None:
            if upper == ".ENDS":
                ln, name, ports = in_subckt
                sd = SubcktDef(name=name, ports=ports, body=tuple(body))
                subckts.append(sd)
                seen_subckts[name] = sd
                in_subckt, body = None, []
            elif upper.startswith(".SUBCKT"):
                raise NetlistError("nested .SUBCKT", line=n)
            else:
                body.append(line)
            continue
        if ended:
            raise NetlistError("content after .END", line=n)
        if stripped.startswith("*"):
            tokens = stripped[1:].split()
            if len(tokens) == 3 and tokens[0] == "MEASURE":
                measures.append(Measure(label=tokens[1], net=tokens[2]))
            continue
        if upper.startswith(".SUBCKT"):
            tokens = stripped.split()
            if len(tokens) < 3:
                raise NetlistError("subckt needs a name and ports", line=n)
            name = tokens[1]
            if name in seen_subckts:
                raise NetlistError(f"duplicate subckt {name}", line=n)
            in_subckt = (n, name, tuple(tokens[2:]))
            continue
        if upper == ".END":
            ended = True
            continue
        if stripped.startswith("."):
            directives.append(stripped)
            continue
        tokens = stripped.split()
        kind = tokens[0][0].upper()
        if kind == "X":
            name = tokens[0]
            if name in seen_names:
                raise NetlistError(f"duplicate instance {name}", line=n)
            seen_names.add(name)
            params = []
            rest = tokens[1:]
            while rest and "=" in rest[-1]:
                k, _, v = rest.pop().partition("=")
                try:
                    params.append((k, float(v)))
                except ValueError:
                    raise NetlistError(f"bad param value {v!r}", line=n)
            params.reverse()
            if not rest:
                raise NetlistError("instance line missing subckt", line=n)
            subckt = rest[-1]
            nets = tuple(rest[:-1])
            sd = seen_subckts.get(subckt)
            if sd is None:
                raise NetlistError(f"unknown subckt {subckt}", line=n)
            if len(nets) != len(sd.ports):
                raise NetlistError(
                    f"{name}: {len(nets)} nets for {len(sd.ports)}-port "
                    f"{subckt}", line=n)
            instances.append(Instance(name=name, nets=nets, subckt=subckt,
                                      params=tuple(params)))
            continue
        if kind == "I":
            if len(tokens) != 5 or tokens[3].upper() != "DC":
                raise NetlistError(
                    "source must be: I<name> <node> <node> DC <value>", line=n)
            name = tokens[0]
            if name in seen_names:
                raise NetlistError(f"duplicate source {name}", line=n)
            seen_names.add(name)
            if tokens[1] == "0":
                net = tokens[2]
            elif tokens[2] == "0":
                net = tokens[1]
            else:
                raise NetlistError("source must reference ground", line=n)
            try:
                value = float(tokens[4])
            except ValueError:
                raise NetlistError(f"bad source value {tokens[4]!r}", line=n)
            sources.append(CurrentSource(name=name, net=net, value=value))
            continue
        raise NetlistError(f"unrecognized element {tokens[0]!r}", line=n)
    if in_subckt is not None:
        raise NetlistError(f"subckt {in_subckt[1]} missing .ENDS",
                           line=in_subckt[0])
    if not ended:
        raise NetlistError("missing .END")
    return Netlist(title=title, subckts=tuple(subckts),
                   instances=tuple(instances), sources=tuple(sources),
                   measures=tuple(measures), directives=tuple(directives))


def connectivity_violations(nl: Netlist) -> list[str]:
    """Nets referenced fewer than twice, unless source-driven or measured.

    A stimulus rail legitimately carries only its source, and a declared
    output may feed nothing downstream; every other net must tie at
    least two pins together to do any work.
    """
    refs: dict[str, int] = {}
    for inst in nl.instances:
        for net in inst.nets:
            refs[net] = refs.get(net, 0) + 1
    exempt = {s.net for s in nl.sources} | {m.net for m in nl.measures} | {"0"}
    return [f"net {net} referenced only once"
            for net, count in refs.items() if count < 2 and net not in exempt]
