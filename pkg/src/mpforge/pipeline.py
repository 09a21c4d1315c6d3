"""End-to-end query pipeline: staged lowering with wall-clock timings.

Runs network -> factor graph -> compute graph -> analog map -> netlist
-> behavioral solve, one stage at a time, collecting per-stage
milliseconds. Every intermediate artifact is returned so callers (and
the command-line driver) can write them out; timing text is kept apart
from artifacts so emitted trees stay byte-identical across reruns.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .analog_map import AnalogMap, Budget, map_compute_graph, project_metrics
from .cells import CellLibrary
from .compute_graph import ComputeGraph, eliminate
from .errors import GraphError
from .graph_ir import BayesianNetwork, FactorGraph, bn_to_factor_graph
from .mp_kernel import GateMode, MPConfig
from .netlist import emit_testbench, parse_spice
from .sim import SolveConfig, SolveResult, dc_solve

STAGES = ("factor", "compute", "map", "netlist", "sim")


@dataclass
class QueryResult:
    """Pipeline outcome up to the requested stage.

    Fields past that stage are None; probability is the posterior
    read-out and is set only when the solve stage ran.
    """

    timings_ms: dict[str, float]
    fg: FactorGraph | None = None
    cg: ComputeGraph | None = None
    am: AnalogMap | None = None
    netlist_text: str | None = None
    solve: SolveResult | None = None
    probability: float | None = None


def bn_query(bn: BayesianNetwork, query: str, evidence=None,
             mode: GateMode = GateMode.EXACT, lib: CellLibrary | None = None,
             budget: Budget | None = None, cfg: MPConfig | None = None,
             solve: SolveConfig | None = None, order="naive",
             upto: str = "sim") -> QueryResult:
    """Answer a posterior query end to end, timing every stage.

    evidence maps variable names to observed 0/1 states. The solve
    config defaults to SolveConfig(mode=mode); passing solve explicitly
    overrides mode. upto stops the pipeline early at a named stage.
    """
    if upto not in STAGES:
        raise GraphError(f"unknown stage {upto!r}; expected one of "
                         + ", ".join(STAGES))
    if query not in bn.names:
        raise GraphError(f"unknown query variable {query!r}")
    evidence = dict(evidence or {})
    index = {name: i for i, name in enumerate(bn.names)}
    for name in evidence:
        if name not in index:
            raise GraphError(f"unknown evidence variable {name!r}")
    ids = {index[name]: int(v) for name, v in evidence.items()}
    last = STAGES.index(upto)
    out = QueryResult(timings_ms={})

    def timed(stage, fn):
        t0 = time.perf_counter()
        value = fn()
        out.timings_ms[stage] = (time.perf_counter() - t0) * 1e3
        return value

    out.fg = timed("factor", lambda: bn_to_factor_graph(bn))
    if last >= 1:
        out.cg = timed("compute",
                       lambda: eliminate(out.fg, index[query], ids,
                                         order=order))
    if last >= 2:
        out.am = timed("map", lambda: map_compute_graph(out.cg, lib=lib,
                                                        budget=budget,
                                                        cfg=cfg))
    if last >= 3:
        out.netlist_text = timed("netlist", lambda: emit_testbench(out.am))
    if last >= 4:
        solve = solve if solve is not None else SolveConfig(mode=mode)
        out.solve = timed("sim",
                          lambda: dc_solve(parse_spice(out.netlist_text),
                                           cfg=solve))
        out.probability = out.solve.probabilities["posterior"]
    return out


def format_timings(timings_ms: dict[str, float]) -> str:
    """Stage timings in pipeline order plus their total, in ms."""
    lines = [f"{stage:8s} {timings_ms[stage]:10.3f} ms"
             for stage in STAGES if stage in timings_ms]
    total = sum(timings_ms.values())
    lines.append(f"{'total':8s} {total:10.3f} ms")
    return "\n".join(lines) + "\n"


def metrics_report(am: AnalogMap) -> str:
    """Instance census and projected totals, deterministic text."""
    counts = am.instance_counts()
    lines = [f"instances {len(am.instances)}"]
    for kind in sorted(counts):
        lines.append(f"{kind} {counts[kind]}")
    m = project_metrics(am)
    lines.append(f"area_units {m.area_units!r}")
    lines.append(f"power_nw {m.power_nw!r}")
    lines.append(f"delay_us {m.delay_us!r}")
    lines.append(f"regime {m.regime.value}")
    lines.append(f"splines {am.cfg.spline_count}")
    return "\n".join(lines) + "\n"
