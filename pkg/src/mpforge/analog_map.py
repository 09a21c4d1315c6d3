"""Compute-graph to analog-cell mapping.

Every compute node lowers to a fixed cell pattern:

  INPUT        stimulus rail in_<name>, no instance
  SUB(INPUT)   the complement stimulus rail in_<name>_b, no instance
  SUB(other)   INV
  CONST        CURRENT_SRC with a value param (value must lie in [0, 1])
  MUL          SOFT_AND (left-folded chain above two operands)
  ADD          KCL_SUM junction, or MP_MAC when it is a weighted sum whose
               product terms each pair one CONST weight with a signal
  NORM         MP_NORM
  RELU         RELU_CELL
  MAX          no realization (MappingError)

Probabilistic-OR shapes SUB(MUL(SUB(a), SUB(b))) collapse to one SOFT_OR.
One spline count, picked against the budget's gate-grid error target,
governs every splined cell in the map. Net values are currents in gamma
units: a node value v rides as current v * gamma.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

from .cells import CellLibrary, CellSpec, SPLINED_KINDS, default_cell_library
from .compute_graph import ComputeGraph, Op
from .errors import InfeasibleBudgetError, MappingError
from .mp_kernel import MPConfig, Regime


@dataclass(frozen=True)
class Budget:
    """Mapping constraints: area ceiling, regime, and accuracy floor.

    target_error is the largest acceptable gate-grid error; the mapper
    picks the cheapest spline variant that stays at or below it.
    """

    max_area: float = math.inf
    regime: Regime = Regime.WEAK_INVERSION
    target_error: float = 0.15

    def __post_init__(self):
        if not self.max_area > 0:
            raise MappingError(f"max_area must be positive, got {self.max_area}")
        if not 0 < self.target_error:
            raise MappingError(
                f"target_error must be positive, got {self.target_error}")


def select_cell(kind: str, budget: Budget | None = None,
                lib: CellLibrary | None = None, gamma: float = 1.0) -> CellSpec:
    """Cheapest variant of a kind whose grid error meets the budget.

    Variants are ordered by spline count, which the library guarantees is
    also ascending area order. Spline-free kinds always match.
    """
    lib = lib if lib is not None else default_cell_library()
    budget = budget if budget is not None else Budget()
    best_err = math.inf
    best = None
    for spec in lib.variants(kind):
        err = lib.grid_error(kind, spec.splines, gamma)
        if err <= budget.target_error:
            return spec
        if err < best_err:
            best_err, best = err, spec
    raise InfeasibleBudgetError(
        f"no {kind} variant meets target error {budget.target_error}; "
        f"best achievable is {best_err:.4f} ({best.name})")


@dataclass(frozen=True)
class CellInstance:
    """One placed cell: ports bound to nets, params on the X-line."""

    id: int
    cell: str
    kind: str
    connections: dict[str, str]
    params: tuple[tuple[str, float], ...] = ()
    node: int | None = None

    @property
    def name(self) -> str:
        return f"X{self.id}"

    @property
    def output_net(self) -> str:
        return self.connections["o"]


@dataclass
class AnalogMap:
    """A placed-and-wired cell map with stimulus and read-out metadata.

    nets is every net in creation order. inputs / input_complements map raw
    input names to their true and complement stimulus rails; outputs map
    read-out names to nets. kcl_nets are the junction outputs. subckts holds
    the spec of every variant the map uses, including synthesized fanin
    expansions.
    """

    instances: tuple[CellInstance, ...]
    nets: tuple[str, ...]
    inputs: dict[str, str]
    input_complements: dict[str, str]
    outputs: dict[str, str]
    kcl_nets: tuple[str, ...]
    subckts: dict[str, CellSpec]
    cfg: MPConfig
    budget: Budget
    default_bindings: dict[str, float] = field(default_factory=dict)
    net_of_node: dict[int, str] = field(default_factory=dict)

    def instance_counts(self) -> dict[str, int]:
        return dict(Counter(inst.kind for inst in self.instances))

    def structural_violations(self) -> list[str]:
        """Wiring invariant check: one driver per net, no dangling nets."""
        out = []
        known = set(self.nets)
        drivers: Counter = Counter()
        readers: Counter = Counter()
        stimulus = set(self.inputs.values()) | set(self.input_complements.values())
        for net in stimulus:
            drivers[net] += 1
        for inst in self.instances:
            spec = self.subckts.get(inst.cell)
            if spec is None:
                out.append(f"{inst.name}: cell {inst.cell} missing from subckts")
                continue
            if set(inst.connections) != set(spec.ports):
                out.append(f"{inst.name}: ports {sorted(inst.connections)} do "
                           f"not match {inst.cell} ports {list(spec.ports)}")
                continue
            for port, net in inst.connections.items():
                if net not in known:
                    out.append(f"{inst.name}.{port}: unknown net {net}")
                if port == "o":
                    drivers[net] += 1
                else:
                    readers[net] += 1
        output_nets = set(self.outputs.values())
        for net in self.nets:
            if drivers[net] != 1:
                out.append(f"net {net}: {drivers[net]} drivers, expected 1")
            # stimulus rails are interface nets: a rail nobody reads still
            # carries its source, so only internal nets can dangle
            if readers[net] == 0 and net not in output_nets \
                    and net not in stimulus:
                out.append(f"net {net}: dangling (no reader and not an output)")
        for name, net in self.outputs.items():
            if net not in known:
                out.append(f"output {name}: unknown net {net}")
        return out

    def validate(self):
        problems = self.structural_violations()
        if problems:
            raise MappingError("analog map is inconsistent: " +
                               "; ".join(problems))


@dataclass(frozen=True)
class MapMetrics:
    """Projected totals for one operating regime."""

    area_units: float
    power_nw: float
    delay_us: float
    regime: Regime


def project_metrics(am: AnalogMap, regime: Regime | None = None) -> MapMetrics:
    """Sum area and power; delay is the longest driver-to-reader path.

    Feedback wiring (a reader placed before its driver) is outside the
    settling model, so edges from later to earlier instance ids are ignored
    when the map is cyclic.
    """
    regime = regime if regime is not None else am.budget.regime
    area = 0.0
    power = 0.0
    driver_of: dict[str, int] = {}
    for inst in am.instances:
        spec = am.subckts[inst.cell]
        area += spec.area
        power += spec.power_in(regime)
        driver_of[inst.output_net] = inst.id
    longest = 0.0
    dist: dict[int, float] = {}
    for inst in am.instances:
        spec = am.subckts[inst.cell]
        upstream = 0.0
        for port, net in inst.connections.items():
            if port == "o":
                continue
            src = driver_of.get(net)
            if src is not None and src < inst.id:
                upstream = max(upstream, dist[src])
        dist[inst.id] = upstream + spec.delay_in(regime)
        longest = max(longest, dist[inst.id])
    return MapMetrics(area_units=area, power_nw=power, delay_us=longest,
                      regime=regime)


def _sanitize(name: str) -> str:
    out = []
    for ch in name:
        if ch.isalnum() or ch == "_":
            out.append(ch)
        elif ch == "|":
            out.append("_")
    return "".join(out) or "x"


class _Mapper:
    def __init__(self, cg: ComputeGraph, lib: CellLibrary, budget: Budget,
                 cfg: MPConfig):
        self.cg = cg
        self.lib = lib
        self.budget = budget
        self.cfg = cfg
        self.instances: list[CellInstance] = []
        self.nets: list[str] = []
        self.used_nets: set[str] = set()
        self.inputs: dict[str, str] = {}
        self.input_complements: dict[str, str] = {}
        self.kcl_nets: list[str] = []
        self.subckts: dict[str, CellSpec] = {}
        self.net_of: dict[int, str] = {}
        self.splines: int | None = None
        self.output_nodes = set(cg.outputs.values())
        # names of the read-out attached to each node, sorted for determinism
        self.out_names: dict[int, list[str]] = {}
        for name in sorted(cg.outputs):
            self.out_names.setdefault(cg.outputs[name], []).append(name)
        self.consumers = Counter()
        for node in cg.nodes:
            for op_id in node.operands:
                self.consumers[op_id] += 1
        for nid in self.output_nodes:
            self.consumers[nid] += 1
        self.claimed: set[int] = set()   # nodes folded into a pattern cell
        self.dead: set[int] = set()      # nodes with no surviving reader
        self.or_map: dict[int, tuple[int, int]] = {}
        self.mac_map: dict[int, tuple[list[tuple[int, float]], float]] = {}

    # -- net bookkeeping ---------------------------------------------------

    def new_net(self, base: str) -> str:
        name = base
        k = 2
        while name in self.used_nets:
            name = f"{base}_{k}"
            k += 1
        self.used_nets.add(name)
        self.nets.append(name)
        return name

    def node_net(self, node) -> str:
        if node.op is Op.INPUT:
            net = self.new_net("in_" + _sanitize(node.label))
            self.inputs[node.label] = net
            return net
        if node.op is Op.SUB and node.id not in self.or_map:
            operand = self.cg.nodes[node.operands[0]]
            if operand.op is Op.INPUT:
                net = self.new_net("in_" + _sanitize(operand.label) + "_b")
                self.input_complements[operand.label] = net
                return net
        names = self.out_names.get(node.id)
        if names:
            return self.new_net("out_" + _sanitize(names[0]))
        return self.new_net(f"n{node.id}")

    # -- cell placement ----------------------------------------------------

    def chosen_splines(self) -> int:
        if self.splines is None:
            spec = select_cell("SOFT_AND", self.budget, self.lib,
                               self.cfg.gamma)
            self.splines = spec.splines
        return self.splines

    def spec_for(self, kind: str, fanin: int | None = None) -> CellSpec:
        if kind == "KCL_SUM":
            spec = self.lib.kcl_variant(fanin)
        elif kind == "MP_MAC":
            spec = self.lib.mac_variant(fanin, self.chosen_splines())
        elif kind in SPLINED_KINDS:
            spec = self.lib.variant(kind, self.chosen_splines())
        else:
            spec = self.lib.variants(kind)[0]
        self.subckts.setdefault(spec.name, spec)
        return spec

    def place(self, kind: str, connections: dict[str, str],
              params: tuple[tuple[str, float], ...] = (),
              node: int | None = None, fanin: int | None = None) -> CellInstance:
        spec = self.spec_for(kind, fanin)
        inst = CellInstance(id=len(self.instances), cell=spec.name, kind=kind,
                            connections=connections, params=params, node=node)
        self.instances.append(inst)
        return inst

    # -- pattern discovery ---------------------------------------------------

    def match_soft_or(self, node) -> tuple[int, int] | None:
        """SUB(MUL(SUB(a), SUB(b))) computes 1-(1-a)(1-b): one SOFT_OR."""
        mul = self.cg.nodes[node.operands[0]]
        if (mul.op is not Op.MUL or len(mul.operands) != 2
                or self.consumers[mul.id] != 1):
            return None
        legs = []
        for sid in mul.operands:
            sub = self.cg.nodes[sid]
            if sub.op is not Op.SUB:
                return None
            legs.append((sid, sub.operands[0]))
        self.claimed.add(mul.id)
        for sid, _ in legs:
            if self.consumers[sid] == 1:
                self.claimed.add(sid)
        return legs[0][1], legs[1][1]

    def match_mac(self, node) -> tuple[list[tuple[int, float]], float] | None:
        """ADD of CONST-weighted products plus at most one CONST bias."""
        weights: list[tuple[int, float]] = []
        bias = 0.0
        saw_bias = False
        mul_ids = []
        for op_id in node.operands:
            op = self.cg.nodes[op_id]
            if op.op is Op.CONST:
                if saw_bias:
                    return None
                saw_bias, bias = True, op.const_value
                continue
            if (op.op is not Op.MUL or len(op.operands) != 2
                    or self.consumers[op_id] != 1):
                return None
            a, b = op.operands
            a_const = self.cg.nodes[a].op is Op.CONST
            b_const = self.cg.nodes[b].op is Op.CONST
            if a_const == b_const:
                return None
            c, x = (a, b) if a_const else (b, a)
            weights.append((x, self.cg.nodes[c].const_value))
            mul_ids.append(op_id)
        if not weights:
            return None
        self.claimed.update(mul_ids)
        return weights, bias

    def reads_of(self, node) -> tuple[int, ...]:
        """Node ids whose nets this node's cell actually wires to."""
        if node.id in self.or_map:
            return self.or_map[node.id]
        if node.id in self.mac_map:
            return tuple(x for x, _ in self.mac_map[node.id][0])
        return node.operands

    def discover(self):
        """Claim pattern internals, then sweep nodes left without readers.

        Consumers are visited before their operands (descending id order),
        so a node already claimed by a consumer never claims its own
        internals; its operands then lower as plain cells, which computes
        the same value without the collapse.
        """
        for node in reversed(self.cg.nodes):
            if node.id in self.claimed:
                continue
            if node.op is Op.SUB:
                got = self.match_soft_or(node)
                if got is not None:
                    self.or_map[node.id] = got
            elif node.op is Op.ADD:
                got = self.match_mac(node)
                if got is not None:
                    self.mac_map[node.id] = got
        eff = Counter()
        for node in self.cg.nodes:
            if node.id in self.claimed:
                continue
            for rid in self.reads_of(node):
                eff[rid] += 1
        for nid in self.output_nodes:
            eff[nid] += 1
        for node in reversed(self.cg.nodes):
            if node.id in self.claimed:
                continue
            if eff[node.id] == 0 and node.id not in self.output_nodes:
                self.dead.add(node.id)
                for rid in self.reads_of(node):
                    eff[rid] -= 1

    # -- main walk -----------------------------------------------------------

    def run(self) -> AnalogMap:
        cg = self.cg
        self.discover()
        bound = self.value_bounds()
        for node in cg.nodes:
            if node.id in self.claimed or node.id in self.dead:
                continue
            net = self.node_net(node)
            self.net_of[node.id] = net
            if node.id in self.or_map:
                a, b = self.or_map[node.id]
                self.place("SOFT_OR", {"a": self.net_of[a],
                                       "b": self.net_of[b], "o": net},
                           node=node.id)
                continue
            if node.op is Op.INPUT:
                continue
            if node.op is Op.CONST:
                v = node.const_value
                if not 0.0 <= v <= 1.0:
                    raise MappingError(
                        f"node {node.id}: constant {v} is outside [0, 1] and "
                        "not a MAC weight; no current source realizes it")
                self.place("CURRENT_SRC", {"o": net}, params=(("value", v),),
                           node=node.id)
            elif node.op is Op.SUB:
                operand = cg.nodes[node.operands[0]]
                if operand.op is Op.INPUT:
                    continue  # complement stimulus rail, no cell
                self.place("INV", {"a": self.net_of[operand.id], "o": net},
                           node=node.id)
            elif node.op is Op.MUL:
                self.lower_mul(node, net)
            elif node.op is Op.ADD:
                if node.id in self.mac_map:
                    weights, bias = self.mac_map[node.id]
                    conns = {f"x{k + 1}": self.net_of[x]
                             for k, (x, _) in enumerate(weights)}
                    conns["o"] = net
                    params = tuple((f"w{k + 1}", w)
                                   for k, (_, w) in enumerate(weights))
                    params += (("b", bias),
                               ("scale", max(1.0, bound[node.id])))
                    self.place("MP_MAC", conns, params=params, node=node.id,
                               fanin=len(weights))
                else:
                    conns = {f"i{k + 1}": self.net_of[op_id]
                             for k, op_id in enumerate(node.operands)}
                    conns["o"] = net
                    self.place("KCL_SUM", conns, node=node.id,
                               fanin=len(node.operands))
                    self.kcl_nets.append(net)
            elif node.op is Op.NORM:
                num, den = node.operands
                self.place("MP_NORM", {"num": self.net_of[num],
                                       "den": self.net_of[den], "o": net},
                           node=node.id)
            elif node.op is Op.RELU:
                self.place("RELU_CELL",
                           {"a": self.net_of[node.operands[0]], "o": net},
                           node=node.id)
            else:
                raise MappingError(
                    f"node {node.id}: no analog cell realizes {node.op.value}")
        cfg = self.cfg
        if self.splines is not None:
            cfg = replace(cfg, spline_count=self.splines)
        am = AnalogMap(
            instances=tuple(self.instances), nets=tuple(self.nets),
            inputs=self.inputs, input_complements=self.input_complements,
            outputs={name: self.net_of[nid]
                     for name, nid in cg.outputs.items()},
            kcl_nets=tuple(self.kcl_nets), subckts=self.subckts, cfg=cfg,
            budget=self.budget, default_bindings=dict(cg.default_bindings),
            net_of_node=self.net_of)
        am.validate()
        area = sum(am.subckts[i.cell].area for i in am.instances)
        if area > self.budget.max_area:
            raise InfeasibleBudgetError(
                f"projected area {area} exceeds budget {self.budget.max_area}")
        return am

    def lower_mul(self, node, net: str):
        """Left-fold a product over SOFT_AND gates; the chain tail owns net."""
        operand_nets = [self.net_of[op_id] for op_id in node.operands]
        acc = operand_nets[0]
        for k, nxt in enumerate(operand_nets[1:]):
            last = k == len(operand_nets) - 2
            out = net if last else self.new_net(f"n{node.id}c{k + 1}")
            self.place("SOFT_AND", {"a": acc, "b": nxt, "o": out},
                       node=node.id)
            acc = out

    def value_bounds(self) -> dict[int, float]:
        """Worst-case magnitude per node, for MAC headroom scaling."""
        bound: dict[int, float] = {}
        for node in self.cg.nodes:
            if node.op is Op.INPUT:
                b = 1.0
            elif node.op is Op.CONST:
                b = abs(node.const_value)
            elif node.op is Op.SUB:
                b = 1.0 + bound[node.operands[0]]
            elif node.op is Op.MUL:
                b = math.prod(bound[o] for o in node.operands)
            elif node.op is Op.ADD:
                b = sum(bound[o] for o in node.operands)
            elif node.op in (Op.MAX, Op.RELU):
                b = max(bound[o] for o in node.operands)
            else:  # NORM output is a probability
                b = 1.0
            bound[node.id] = b
        return bound


def map_compute_graph(cg: ComputeGraph, lib: CellLibrary | None = None,
                      budget: Budget | None = None,
                      cfg: MPConfig | None = None) -> AnalogMap:
    """Lower a compute graph onto library cells under a budget.

    Deterministic: nodes are visited in id order and instance ids follow
    placement order, so equal inputs produce equal maps.
    """
    lib = lib if lib is not None else default_cell_library()
    budget = budget if budget is not None else Budget()
    cfg = cfg if cfg is not None else MPConfig()
    return _Mapper(cg, lib, budget, cfg).run()
