"""Behavioral simulation: DC solve, fixed-point settling, and decoding.

dc_solve evaluates an acyclic analog map (or a parsed netlist) cell by
cell in dependency order. EXACT mode uses plain probability arithmetic
and reproduces evaluate_exact through the mapping; MP mode replays each
cell's margin-propagation approximation (spline log scores, mp_root
normalization) so the solved currents carry the same error the hardware
would. Net values are currents in microamps: value v rides on a rail as
v * gamma * unit_current.

Cyclic maps (message-passing decoders) go through settle_cyclic: pass 1
propagates values once in placement order, then damped updates
x_{k+1} = (1 - d) x_k + d F(x_k) run until the largest per-net change
drops below tolerance. Placement order is topological for mapped DAGs,
so an acyclic map lands on its fixed point in pass 1 and confirms it in
pass 2.

spa_decode is the message-passing view of the same decoder circuits:
flooding schedule over a parity factor graph, variable updates in the
LLR domain, check updates folded pairwise with exact_boxplus or
mp_boxplus, messages clamped to +-30, early exit once the hard decision
satisfies every check. spa_decode_block vectorizes the schedule across
frames for Monte-Carlo sweeps.
"""

from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .analog_map import AnalogMap
from .cells import cell_kind
from .compute_graph import ComputeGraph, evaluate_exact
from .errors import ConvergenceError, SimulationError, UnboundInputError
from .graph_ir import FactorGraph, FactorKind
from .mp_kernel import (GateMode, MPConfig, ProbabilityCurrent, exact_boxplus,
                        mp_boxplus, mp_normalize, soft_and, soft_or,
                        spline_log)
from .netlist import Netlist

LLR_CLAMP = 30.0


@dataclass(frozen=True)
class SolveConfig:
    """Solver knobs shared by DC solve, settling, and decoding.

    residual_tol is in microamps; None means 1e-6 * gamma * unit_current.
    max_iters and damping apply to settling and to decode iterations.
    allow_cycles=False makes dc_solve reject feedback instead of routing
    it to settle_cyclic. seed feeds any stochastic tie-break (none of the
    built-in solvers use randomness; the field keeps run manifests
    self-describing).
    """

    mode: GateMode = GateMode.EXACT
    max_iters: int = 200
    damping: float = 0.5
    residual_tol: float | None = None
    allow_cycles: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise SimulationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.damping <= 1.0:
            raise SimulationError(f"damping must be in (0, 1], got {self.damping}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise SimulationError(
                f"residual_tol must be positive, got {self.residual_tol}")

    def tol(self, cfg: MPConfig) -> float:
        if self.residual_tol is not None:
            return self.residual_tol
        return 1e-6 * cfg.gamma * cfg.unit_current


@dataclass(frozen=True)
class SolveResult:
    """Solved read-outs: currents in microamps plus probability ratios.

    probabilities[name] = outputs[name] / (gamma * unit_current); the
    ratio can leave [0, 1] on rails that carry scaled sums rather than
    probabilities. settled is always True on the DC path.
    """

    outputs: dict[str, float]
    probabilities: dict[str, float]
    iterations: int
    settled: bool
    residual: float
    mode: GateMode


def solve_report(res: SolveResult) -> str:
    """Key-value report: per-output current and probability, solve stats.

    Deterministic text (sorted outputs, repr floats) so reports written
    to disk are byte-stable across reruns.
    """
    lines = [
        f"mode {res.mode.value}",
        f"settled {str(res.settled).lower()}",
        f"iterations {res.iterations}",
        f"residual {res.residual!r}",
    ]
    for name in sorted(res.outputs):
        lines.append(f"out {name} current_ua {res.outputs[name]!r} "
                     f"probability {res.probabilities[name]!r}")
    return "\n".join(lines) + "\n"


# -- network construction ----------------------------------------------------

@dataclass(frozen=True)
class _Element:
    name: str
    kind: str
    conns: dict[str, str]
    params: dict[str, float]

    @property
    def out(self) -> str:
        return self.conns["o"]

    def ins(self) -> tuple[str, ...]:
        return tuple(net for role, net in self.conns.items() if role != "o")


@dataclass
class _Network:
    elements: list[_Element]
    sources: dict[str, float]
    outputs: dict[str, str]
    cfg: MPConfig
    nets: tuple[str, ...]


def _map_sources(am: AnalogMap, stim: dict[str, float] | None) -> dict[str, float]:
    bindings = dict(am.default_bindings)
    if stim is not None:
        unknown = sorted(set(stim) - set(am.inputs))
        if unknown:
            raise SimulationError(
                "stimulus names not in the map: " + ", ".join(unknown))
        bindings.update(stim)
    missing = sorted(set(am.inputs) - set(bindings))
    if missing:
        raise UnboundInputError("unbound inputs: " + ", ".join(missing))
    g = am.cfg.gamma * am.cfg.unit_current
    sources: dict[str, float] = {}
    for name in sorted(am.inputs):
        p = float(bindings[name])
        if not 0.0 <= p <= 1.0:
            raise SimulationError(f"stimulus {name!r} out of [0, 1]: {p}")
        sources[am.inputs[name]] = p * g
        comp = am.input_complements.get(name)
        if comp is not None:
            sources[comp] = (1.0 - p) * g
    return sources


def _network_from_map(am: AnalogMap, stim: dict[str, float] | None) -> _Network:
    elements = [
        _Element(name=inst.name, kind=inst.kind, conns=dict(inst.connections),
                 params=dict(inst.params))
        for inst in am.instances
    ]
    return _Network(elements=elements, sources=_map_sources(am, stim),
                    outputs=dict(am.outputs), cfg=am.cfg, nets=am.nets)


def _cfg_from_title(title: str) -> MPConfig:
    fields = {}
    for tok in title.split():
        key, sep, val = tok.partition("=")
        if sep:
            fields[key] = val
    try:
        return MPConfig(gamma=float(fields.get("gamma", 1.0)),
                        unit_current=float(fields.get("unit_current", 1.0)),
                        spline_count=int(fields.get("splines", 16)))
    except ValueError as exc:
        raise SimulationError(f"unreadable netlist title fields: {exc}") from exc


def _network_from_netlist(nl: Netlist, stim: dict[str, float] | None) -> _Network:
    cfg = _cfg_from_title(nl.title)
    g = cfg.gamma * cfg.unit_current
    elements = []
    for inst in nl.instances:
        sd = nl.subckt_named(inst.subckt)
        elements.append(_Element(
            name=inst.name, kind=cell_kind(inst.subckt),
            conns=dict(zip(sd.ports, inst.nets)), params=dict(inst.params)))
    sources: dict[str, float] = {}
    for src in nl.sources:
        sources[src.net] = sources.get(src.net, 0.0) + src.value
    if stim is not None:
        known = set(nl.nets)
        for net, p in stim.items():
            if net not in known:
                raise SimulationError(f"stimulus net {net!r} not in the netlist")
            if not 0.0 <= p <= 1.0:
                raise SimulationError(f"stimulus {net!r} out of [0, 1]: {p}")
            sources[net] = p * g
    outputs = {m.label: m.net for m in nl.measures}
    return _Network(elements=elements, sources=sources, outputs=outputs,
                    cfg=cfg, nets=nl.nets)


def _build_network(target, stim) -> _Network:
    if isinstance(target, AnalogMap):
        net = _network_from_map(target, stim)
    elif isinstance(target, Netlist):
        net = _network_from_netlist(target, stim)
    else:
        raise SimulationError(
            f"cannot solve a {type(target).__name__}; expected an AnalogMap "
            "or a parsed Netlist")
    driven = set()
    for el in net.elements:
        if "o" not in el.conns:
            raise SimulationError(f"{el.name}: cell has no output port")
        if el.out in driven:
            raise SimulationError(f"net {el.out}: multiple drivers")
        if el.out in net.sources:
            raise SimulationError(
                f"net {el.out}: driven by both {el.name} and a source")
        driven.add(el.out)
    return net


# -- cell behaviors ----------------------------------------------------------

def _numbered(conns: dict[str, str], prefix: str) -> list[str]:
    roles = [r for r in conns if r.startswith(prefix) and r != "o"]
    roles.sort(key=lambda r: int(r[len(prefix):]))
    return [conns[r] for r in roles]


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _make_fn(el: _Element, mode: GateMode, cfg: MPConfig):
    """Compile one element to fn(values) -> output current."""
    g = cfg.gamma * cfg.unit_current
    kind, conns, params = el.kind, el.conns, el.params

    if kind == "CURRENT_SRC":
        if "value" not in params:
            raise SimulationError(f"{el.name}: CURRENT_SRC without a value param")
        const = params["value"] * g
        return lambda vals: const

    if kind == "KCL_SUM":
        ins = _numbered(conns, "i")
        return lambda vals: math.fsum(vals[n] for n in ins)

    if kind == "INV":
        a = conns["a"]
        return lambda vals: g - vals[a]

    if kind == "RELU_CELL":
        a = conns["a"]
        return lambda vals: max(0.0, vals[a])

    if kind == "MP_MAC":
        xs = _numbered(conns, "x")
        try:
            weights = [params[f"w{k + 1}"] for k in range(len(xs))]
        except KeyError as exc:
            raise SimulationError(f"{el.name}: missing MAC weight {exc}") from exc
        bias = params.get("b", 0.0) * g
        if mode == GateMode.EXACT:
            def mac(vals):
                return math.fsum([w * vals[n] for w, n in zip(weights, xs)]
                                 + [bias])
            return mac
        scale = params.get("scale", 1.0) * g
        lg = spline_log(cfg.spline_count)

        def mac_mp(vals):
            # each input is read through the spline log ladder after
            # normalizing by the headroom scale; weights are exact mirrors
            acc = [bias]
            for w, n in zip(weights, xs):
                u = _clamp01(vals[n] / scale)
                acc.append(w * scale * math.exp(float(lg(u))))
            return math.fsum(acc)
        return mac_mp

    if kind in ("SOFT_AND", "SOFT_OR"):
        a, b = conns["a"], conns["b"]
        if mode == GateMode.EXACT:
            if kind == "SOFT_AND":
                return lambda vals: vals[a] * vals[b] / g
            return lambda vals: g - (g - vals[a]) * (g - vals[b]) / g
        gate = soft_and if kind == "SOFT_AND" else soft_or

        def gate_mp(vals):
            pa = ProbabilityCurrent.from_p(_clamp01(vals[a] / g), cfg.gamma)
            pb = ProbabilityCurrent.from_p(_clamp01(vals[b] / g), cfg.gamma)
            return gate(pa, pb, cfg, GateMode.MP).p * g
        return gate_mp

    if kind == "MP_NORM":
        num, den = conns["num"], conns["den"]
        if mode == GateMode.EXACT:
            def norm(vals):
                d = vals[den]
                if d == 0.0:
                    raise SimulationError(
                        f"{el.name}: normalization denominator is zero")
                return g * (vals[num] / d)
            return norm
        lg = spline_log(cfg.spline_count)
        beta = cfg.gamma / 2.0

        def norm_mp(vals):
            d = vals[den]
            # margin saturation can zero both mass rails; a dead
            # normalizer splits its output budget evenly
            r = _clamp01(vals[num] / d) if d != 0.0 else 0.5
            scores = (beta * float(lg(r)), beta * float(lg(1.0 - r)))
            return float(mp_normalize(scores, cfg.gamma)[0]) / cfg.gamma * g
        return norm_mp

    raise SimulationError(f"{el.name}: no behavioral model for cell kind {kind}")


def _compile(net: _Network, mode: GateMode) -> list[tuple[str, object]]:
    return [(el.out, _make_fn(el, mode, net.cfg)) for el in net.elements]


def _topo_order(net: _Network) -> list[int] | None:
    """Dependency order over element indices; None when feedback exists."""
    driver = {el.out: i for i, el in enumerate(net.elements)}
    adj = defaultdict(set)
    indeg = [0] * len(net.elements)
    for i, el in enumerate(net.elements):
        for n in el.ins():
            j = driver.get(n)
            if j is not None and i not in adj[j]:
                adj[j].add(i)
                indeg[i] += 1
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for k in sorted(adj[i]):
            indeg[k] -= 1
            if indeg[k] == 0:
                heapq.heappush(ready, k)
    return order if len(order) == len(net.elements) else None


def _init_values(net: _Network, fill: float) -> dict[str, float]:
    values = {n: fill for n in net.nets}
    values.update(net.sources)
    return values


def _result(net: _Network, values: dict[str, float], iterations: int,
            settled: bool, residual: float, mode: GateMode) -> SolveResult:
    g = net.cfg.gamma * net.cfg.unit_current
    missing = sorted(n for n in net.outputs.values() if n not in values)
    if missing:
        raise SimulationError("read-out nets absent: " + ", ".join(missing))
    outputs = {name: values[n] for name, n in net.outputs.items()}
    return SolveResult(outputs=outputs,
                       probabilities={k: v / g for k, v in outputs.items()},
                       iterations=iterations, settled=settled,
                       residual=residual, mode=mode)


def dc_solve(target, stim: dict[str, float] | None = None,
             cfg: SolveConfig | None = None) -> SolveResult:
    """Solve an acyclic map or netlist; feedback routes to settle_cyclic.

    stim maps input names to probabilities for an AnalogMap (defaults to
    its recorded bindings) and net names to probabilities for a parsed
    Netlist (overriding its source values).
    """
    cfg = cfg if cfg is not None else SolveConfig()
    net = _build_network(target, stim)
    order = _topo_order(net)
    if order is None:
        if not cfg.allow_cycles:
            raise SimulationError(
                "map contains feedback and cyclic solving is disabled")
        return settle_cyclic(target, stim, cfg)
    evals = _compile(net, cfg.mode)
    values = _init_values(net, 0.0)
    for i in order:
        out, fn = evals[i]
        values[out] = fn(values)
    return _result(net, values, iterations=1, settled=True, residual=0.0,
                   mode=cfg.mode)


def settle_cyclic(target, stim: dict[str, float] | None = None,
                  cfg: SolveConfig | None = None) -> SolveResult:
    """Damped fixed-point settling in placement order.

    Pass 1 propagates values once undamped (exact on acyclic maps, whose
    placement order is topological); later passes blend
    x <- (1 - d) x + d f(x). Residual is the largest per-net update; a
    residual growing 10x over a 20-pass window raises ConvergenceError
    with the trace, and hitting max_iters returns settled=False.
    """
    cfg = cfg if cfg is not None else SolveConfig()
    net = _build_network(target, stim)
    evals = _compile(net, cfg.mode)
    g = net.cfg.gamma * net.cfg.unit_current
    tol = cfg.tol(net.cfg)
    values = _init_values(net, 0.5 * g)
    trace: list[float] = []
    settled = False
    iterations = cfg.max_iters
    for it in range(1, cfg.max_iters + 1):
        d = 1.0 if it == 1 else cfg.damping
        residual = 0.0
        for out, fn in evals:
            cur = values[out]
            nxt = cur + d * (fn(values) - cur)
            residual = max(residual, abs(nxt - cur))
            values[out] = nxt
        trace.append(residual)
        if residual < tol:
            settled = True
            iterations = it
            break
        if len(trace) >= 21 and trace[-1] > 10.0 * trace[-21] > 0.0:
            raise ConvergenceError(
                f"settling diverged: residual {residual:.3g} uA after "
                f"{it} passes", trace)
    return _result(net, values, iterations=iterations, settled=settled,
                   residual=trace[-1] if trace else 0.0, mode=cfg.mode)


# -- map validation ----------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Structural check plus EXACT-mode equivalence against the graph."""

    samples: int
    max_error: float
    tol: float
    violations: tuple[str, ...]
    passed: bool


def validate_map(am: AnalogMap, cg: ComputeGraph, n_samples: int = 20,
                 tol: float = 1e-9, seed: int = 0) -> ValidationReport:
    """Check wiring invariants and EXACT dc_solve == evaluate_exact.

    Random stimuli are drawn uniformly in [0.02, 0.98] per input; maps
    without inputs get a single empty-stimulus sample.
    """
    violations = tuple(am.structural_violations())
    rng = np.random.default_rng(seed)
    names = sorted(am.inputs)
    runs = n_samples if names else 1
    cfg = SolveConfig(mode=GateMode.EXACT)
    max_err = 0.0
    for _ in range(runs):
        bindings = {n: float(rng.uniform(0.02, 0.98)) for n in names}
        want = evaluate_exact(cg, bindings)
        got = dc_solve(am, bindings, cfg).probabilities
        for name, w in want.items():
            max_err = max(max_err, abs(got[name] - w))
    return ValidationReport(samples=runs, max_error=max_err, tol=tol,
                            violations=violations,
                            passed=not violations and max_err <= tol)


# -- message-passing decoder -------------------------------------------------

@dataclass
class MessageState:
    """Per-edge LLR messages of one decode, both directions.

    edges lists (factor id, variable id) pairs in row-major scope order;
    v2f and f2v are parallel arrays, clamped to +-LLR_CLAMP.
    """

    edges: tuple[tuple[int, int], ...]
    v2f: np.ndarray
    f2v: np.ndarray
    iteration: int


@dataclass
class DecodeResult:
    """Outcome of one decode: converged implies every check is satisfied."""

    bits: np.ndarray
    converged: bool
    iterations: int
    llrs: np.ndarray
    messages: MessageState | None = None


@dataclass
class BlockDecodeResult:
    """Frame-parallel decode outcome; arrays are indexed [frame, ...]."""

    bits: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    llrs: np.ndarray


class _Tanner:
    """Edge-indexed view of a parity factor graph, grouped by check degree."""

    def __init__(self, rows: list[tuple[int, ...]], n: int):
        self.n = n
        self.m = len(rows)
        ev, ec = [], []
        start = 0
        by_deg: dict[int, list[np.ndarray]] = defaultdict(list)
        for c, row in enumerate(rows):
            if not row:
                raise SimulationError(f"check {c} has empty scope")
            for v in row:
                ev.append(v)
                ec.append(c)
            by_deg[len(row)].append(np.arange(start, start + len(row)))
            start += len(row)
        self.edge_var = np.asarray(ev, dtype=np.int64)
        self.edge_check = np.asarray(ec, dtype=np.int64)
        self.n_edges = start
        self.groups = [(d, np.stack(idx)) for d, idx in sorted(by_deg.items())]


def _fold_exclusive(msgs: np.ndarray, fn) -> np.ndarray:
    """Per-slot combine of all other slots along axis 1, pairwise in order."""
    d = msgs.shape[1]
    out = np.empty_like(msgs)
    if d == 1:
        out[:] = LLR_CLAMP  # a lone-variable check pins its bit to 0
        return out
    if d == 2:
        out[:, 0] = msgs[:, 1]
        out[:, 1] = msgs[:, 0]
        return out
    pre: list[np.ndarray | None] = [None] * d
    suf: list[np.ndarray | None] = [None] * d
    pre[1] = msgs[:, 0]
    for j in range(2, d):
        pre[j] = fn(pre[j - 1], msgs[:, j - 1])
    suf[d - 2] = msgs[:, d - 1]
    for j in range(d - 3, -1, -1):
        suf[j] = fn(msgs[:, j + 1], suf[j + 1])
    out[:, 0] = suf[0]
    out[:, d - 1] = pre[d - 1]
    for j in range(1, d - 1):
        out[:, j] = fn(pre[j], suf[j])
    return out


def _parity_rows(fg: FactorGraph) -> list[tuple[int, ...]]:
    for f in fg.factors:
        if f.kind is not FactorKind.PARITY:
            raise SimulationError(
                f"decoder requires parity factors only; factor {f.id} is "
                f"{f.kind.value}")
    return [tuple(f.scope) for f in fg.factors]


def _decode_arrays(tanner: _Tanner, llrs: np.ndarray, cfg: SolveConfig,
                   node_mode: GateMode):
    frames = llrs.shape[0]
    fn = exact_boxplus if node_mode == GateMode.EXACT else mp_boxplus
    ev, ec = tanner.edge_var, tanner.edge_check
    channel = llrs.T.astype(float)                     # (n, F)
    c2v = np.zeros((tanner.n_edges, frames))
    v2c_state = np.zeros((tanner.n_edges, frames))
    bits_out = (channel < 0.0).astype(np.uint8)
    llr_out = channel.copy()
    iters = np.full(frames, cfg.max_iters, dtype=np.int64)
    conv = np.zeros(frames, dtype=bool)
    active = np.arange(frames)
    for it in range(1, cfg.max_iters + 1):
        if active.size == 0:
            break
        ch = channel[:, active]
        c2v_a = c2v[:, active]
        sums = np.zeros_like(ch)
        np.add.at(sums, ev, c2v_a)
        v2c = np.clip((ch + sums)[ev] - c2v_a, -LLR_CLAMP, LLR_CLAMP)
        new_c2v = np.empty_like(v2c)
        for _, idx in tanner.groups:
            new_c2v[idx] = _fold_exclusive(v2c[idx], fn)
        np.clip(new_c2v, -LLR_CLAMP, LLR_CLAMP, out=new_c2v)
        c2v[:, active] = new_c2v
        v2c_state[:, active] = v2c
        sums = np.zeros_like(ch)
        np.add.at(sums, ev, new_c2v)
        tot = ch + sums
        bits = tot < 0.0
        synd = np.zeros((tanner.m, active.size), dtype=np.int64)
        np.add.at(synd, ec, bits[ev].astype(np.int64))
        ok = ~(synd & 1).any(axis=0) if tanner.m else np.ones(active.size, bool)
        bits_out[:, active] = bits.astype(np.uint8)
        llr_out[:, active] = tot
        finished = active[ok]
        iters[finished] = it
        conv[finished] = True
        active = active[~ok]
    return bits_out, conv, iters, llr_out, v2c_state, c2v


def _check_llrs(arr: np.ndarray, n: int) -> np.ndarray:
    if arr.ndim != 2 or arr.shape[1] != n:
        raise SimulationError(
            f"channel LLR shape {arr.shape} does not match {n} variables")
    if not np.all(np.isfinite(arr)):
        raise SimulationError("channel LLRs must be finite")
    return arr


def spa_decode(fg: FactorGraph, channel_llrs, cfg: SolveConfig | None = None,
               node_mode: GateMode = GateMode.EXACT) -> DecodeResult:
    """Flooding sum-product decode of one frame.

    channel_llrs holds log(p0/p1) per variable; positive favors bit 0.
    EXACT node_mode folds checks with exact boxplus, MP with mp_boxplus.
    """
    cfg = cfg if cfg is not None else SolveConfig()
    rows = _parity_rows(fg)
    n = len(fg.variables)
    arr = np.asarray(channel_llrs, dtype=float)
    if arr.ndim != 1:
        raise SimulationError("spa_decode takes one frame; use spa_decode_block")
    llrs = _check_llrs(arr[np.newaxis, :], n)
    tanner = _Tanner(rows, n)
    bits, conv, iters, tot, v2c, c2v = _decode_arrays(tanner, llrs, cfg,
                                                      node_mode)
    edges = tuple((fg.factors[c].id, int(v))
                  for c, v in zip(tanner.edge_check, tanner.edge_var))
    state = MessageState(edges=edges, v2f=v2c[:, 0].copy(),
                         f2v=c2v[:, 0].copy(), iteration=int(iters[0]))
    return DecodeResult(bits=bits[:, 0].copy(), converged=bool(conv[0]),
                        iterations=int(iters[0]), llrs=tot[:, 0].copy(),
                        messages=state)


def spa_decode_block(fg: FactorGraph, channel_llrs,
                     cfg: SolveConfig | None = None,
                     node_mode: GateMode = GateMode.EXACT) -> BlockDecodeResult:
    """Decode many frames at once; same schedule and clamping as spa_decode."""
    cfg = cfg if cfg is not None else SolveConfig()
    rows = _parity_rows(fg)
    n = len(fg.variables)
    llrs = _check_llrs(np.asarray(channel_llrs, dtype=float), n)
    tanner = _Tanner(rows, n)
    bits, conv, iters, tot, _, _ = _decode_arrays(tanner, llrs, cfg, node_mode)
    return BlockDecodeResult(bits=bits.T.copy(), converged=conv,
                             iterations=iters, llrs=tot.T.copy())
