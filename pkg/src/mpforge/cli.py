"""Command-line driver: staged synthesis, decoder sweeps, classifier
evaluation, and posterior queries.

Settings resolve in three layers: typed defaults, then a flat key=value
config file (--config), then explicit flags. Unknown config keys are
rejected. Artifacts land under --out with stable names and
byte-identical content across reruns; wall-clock timings are printed to
stdout only, so they never perturb the artifact tree. Every failure
exits nonzero with a stage-attributed one-line message.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data_path
from .analog_map import Budget
from .cells import default_cell_library
from .ann import (
    AnnSpec,
    ann_predict,
    iris_weights,
    normalize_unit,
    parse_labeled_csv,
    split_dataset,
)
from .dot import to_dot
from .errors import (
    CptError,
    DegenerateEvidenceError,
    EliminationError,
    FormatError,
    GraphError,
    KernelError,
    MappingError,
    MpforgeError,
    NetlistError,
    SimulationError,
    UnboundInputError,
)
from .formats import parse_alist, parse_bn_file, parse_weights
from .ldpc import (
    Protograph,
    ber_csv,
    ber_gnuplot,
    ber_sweep,
    build_decoder_map,
    lift_protograph,
)
from .mp_kernel import GateMode, MPConfig, Regime
from .netlist import emit_spice
from .pipeline import STAGES, bn_query, format_timings, metrics_report
from .plots import render_accuracy, render_ber, render_posterior
from .sim import solve_report


class UsageError(Exception):
    """Bad flag value, config entry, or flag combination."""


def _to_stage(s: str) -> str:
    if s not in STAGES + ("all",):
        raise ValueError(f"expected one of {', '.join(STAGES + ('all',))}, "
                         f"got {s!r}")
    return s


def _to_snr(s: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in s.split(",") if t.strip())
    if not vals:
        raise ValueError("empty SNR list")
    return vals


def _to_evidence(s: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in s.split(","):
        pair = pair.strip()
        if not pair:
            continue
        name, eq, val = pair.partition("=")
        name = name.strip()
        if not eq or not name or val.strip() not in ("0", "1"):
            raise ValueError(f"expected <name>=0|1, got {pair!r}")
        if name in out:
            raise ValueError(f"duplicate evidence variable {name!r}")
        out[name] = int(val)
    return out


_COERCE = {
    "in": str, "stage": _to_stage, "mode": GateMode, "gamma": float,
    "splines": int, "regime": Regime, "budget_area": float,
    "target_error": float, "seed": int, "out": str, "snr": _to_snr,
    "frames": int, "lift": int, "query": str, "evidence": _to_evidence,
    "weights": str,
}

_COMMON = ("in", "mode", "gamma", "splines", "regime", "budget_area",
           "target_error", "seed", "out")
_KEYS = {
    "synth": _COMMON + ("stage", "query", "evidence"),
    "ldpc": _COMMON + ("snr", "frames", "lift"),
    "ann": _COMMON + ("weights",),
    "query": _COMMON + ("query", "evidence"),
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one subcommand invocation."""

    command: str
    in_path: str | None = None
    stage: str = "all"
    mode: GateMode = GateMode.EXACT
    gamma: float = 1.0
    splines: int | None = None
    regime: Regime = Regime.WEAK_INVERSION
    budget_area: float | None = None
    target_error: float | None = None
    seed: int = 0
    out: str = "out"
    snr: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    frames: int = 10000
    lift: int | None = None
    query: str | None = None
    evidence: dict[str, int] = field(default_factory=dict)
    weights: str | None = None

    def to_mp(self) -> MPConfig:
        kw = {"gamma": self.gamma, "regime": self.regime}
        if self.splines is not None:
            kw["spline_count"] = self.splines
        return MPConfig(**kw)

    def to_budget(self) -> Budget:
        kw = {"regime": self.regime}
        if self.budget_area is not None:
            kw["max_area"] = self.budget_area
        if self.target_error is not None:
            kw["target_error"] = self.target_error
        return Budget(**kw)


def _budget_for(cfg: RunConfig) -> Budget:
    """Variant selection is error-driven, so a spline override becomes a
    target at that variant's measured grid error; an explicit
    --target-error wins."""
    budget = cfg.to_budget()
    if cfg.splines is not None and cfg.target_error is None:
        err = default_cell_library().grid_error("SOFT_AND", cfg.splines,
                                                cfg.gamma)
        budget = replace(budget, target_error=err)
    return budget


def parse_config_text(text: str, allowed: tuple[str, ...]) -> dict[str, str]:
    """Flat key=value lines; '#' comments; unknown or repeated keys rejected."""
    entries: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise UsageError(f"config line {ln}: expected key=value, got {line!r}")
        key = key.strip().replace("-", "_")
        if key not in allowed:
            raise UsageError(f"config line {ln}: unknown key {key!r} "
                             f"(allowed: {', '.join(allowed)})")
        if key in entries:
            raise UsageError(f"config line {ln}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def resolve_config(command: str, args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and flags; coerce to typed fields."""
    allowed = _KEYS[command]
    raw: dict[str, str] = {}
    if args.config is not None:
        raw.update(parse_config_text(_read_text(args.config), allowed))
    for key in allowed:
        flag = getattr(args, "in_path" if key == "in" else key)
        if flag is not None:
            raw[key] = flag
    fields: dict[str, object] = {}
    for key, value in raw.items():
        try:
            fields["in_path" if key == "in" else key] = _COERCE[key](value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    return RunConfig(command=command, **fields)


_ERROR_STAGES = (
    (FormatError, "parse"),
    (CptError, "factor"),
    (EliminationError, "compute"),
    (DegenerateEvidenceError, "compute"),
    (UnboundInputError, "sim"),
    (KernelError, "kernel"),
    (MappingError, "map"),
    (NetlistError, "netlist"),
    (SimulationError, "sim"),
    (GraphError, "graph"),
    (MpforgeError, "pipeline"),
)


def _stage_of(exc: BaseException) -> str:
    for klass, stage in _ERROR_STAGES:
        if isinstance(exc, klass):
            return stage
    return "internal"


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_bn(cfg: RunConfig):
    if cfg.in_path is None:
        return parse_bn_file(data_path("prey.bn").read_text(encoding="utf-8"))
    return parse_bn_file(_read_text(cfg.in_path))


def cmd_synth(cfg: RunConfig) -> int:
    """Lower a network through the pipeline, writing one file per stage."""
    bn = _load_bn(cfg)
    query = cfg.query if cfg.query is not None else bn.names[-1]
    upto = "sim" if cfg.stage == "all" else cfg.stage
    res = bn_query(bn, query, cfg.evidence, mode=cfg.mode,
                   budget=_budget_for(cfg), cfg=cfg.to_mp(), upto=upto)
    out = _outdir(cfg)
    (out / "fg.dot").write_text(to_dot(res.fg), encoding="utf-8")
    if res.cg is not None:
        (out / "cg.dot").write_text(to_dot(res.cg), encoding="utf-8")
    if res.am is not None:
        (out / "map.dot").write_text(to_dot(res.am), encoding="utf-8")
        (out / "metrics.txt").write_text(metrics_report(res.am), encoding="utf-8")
    if res.netlist_text is not None:
        (out / "netlist.sp").write_text(res.netlist_text, encoding="utf-8")
    if res.solve is not None:
        (out / "report.txt").write_text(solve_report(res.solve), encoding="utf-8")
    sys.stdout.write(format_timings(res.timings_ms))
    return 0


def cmd_query(cfg: RunConfig) -> int:
    """Answer one posterior query; write the solve report and a figure."""
    if cfg.query is None:
        raise UsageError("query needs --query <variable>")
    bn = _load_bn(cfg)
    res = bn_query(bn, cfg.query, cfg.evidence, mode=cfg.mode,
                   budget=_budget_for(cfg), cfg=cfg.to_mp())
    out = _outdir(cfg)
    (out / "report.txt").write_text(solve_report(res.solve), encoding="utf-8")
    render_posterior(cfg.query, res.probability, out / "posterior.png")
    sys.stdout.write(format_timings(res.timings_ms))
    sys.stdout.write(f"posterior {cfg.query} {res.probability!r}\n")
    return 0


def cmd_ldpc(cfg: RunConfig) -> int:
    """Synthesize a decoder and sweep BER/FER over the channel."""
    if cfg.in_path is None:
        text = data_path("ldpc_24x32.alist").read_text(encoding="utf-8")
    else:
        text = _read_text(cfg.in_path)
    h = parse_alist(text)
    if cfg.lift is not None:
        h = lift_protograph(Protograph(base=h, lift_size=cfg.lift),
                            seed=cfg.seed)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    am = build_decoder_map(h, budget=_budget_for(cfg), cfg=cfg.to_mp())
    timings["map"] = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    netlist = emit_spice(am)
    timings["netlist"] = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    result = ber_sweep(h, cfg.snr, max_frames=cfg.frames,
                       node_mode=cfg.mode, seed=cfg.seed)
    timings["sim"] = (time.perf_counter() - t0) * 1e3
    out = _outdir(cfg)
    (out / "netlist.sp").write_text(netlist, encoding="utf-8")
    (out / "metrics.txt").write_text(metrics_report(am), encoding="utf-8")
    (out / "ber.csv").write_text(ber_csv(result), encoding="utf-8")
    (out / "plot.gnuplot").write_text(ber_gnuplot(), encoding="utf-8")
    render_ber(result, out / "ber_fer.png")
    sys.stdout.write(format_timings(timings))
    return 0


def _accuracy_report(y, preds, class_names, cfg: RunConfig) -> str:
    lines = [f"mode {cfg.mode.value}",
             f"samples {len(y)}",
             f"correct {int((preds == y).sum())}",
             f"accuracy {float((preds == y).mean())!r}"]
    for c, name in enumerate(class_names):
        sel = y == c
        lines.append(f"class {name} correct {int((preds[sel] == c).sum())} "
                     f"of {int(sel.sum())}")
    return "\n".join(lines) + "\n"


def cmd_ann(cfg: RunConfig) -> int:
    """Evaluate a feed-forward classifier on a held-out split."""
    if cfg.weights is None:
        spec = iris_weights()
    else:
        spec = AnnSpec.from_layers(parse_weights(_read_text(cfg.weights)))
    if cfg.in_path is None:
        text = data_path("iris.csv").read_text(encoding="utf-8")
    else:
        text = _read_text(cfg.in_path)
    x, y, _, class_names = parse_labeled_csv(text)
    x = normalize_unit(x)
    _, _, x_test, y_test = split_dataset(x, y, seed=cfg.seed)
    t0 = time.perf_counter()
    preds = ann_predict(spec, x_test, mode=cfg.mode,
                        budget=_budget_for(cfg), cfg=cfg.to_mp())
    timings = {"sim": (time.perf_counter() - t0) * 1e3}
    out = _outdir(cfg)
    report = _accuracy_report(y_test, preds, class_names, cfg)
    (out / "accuracy.txt").write_text(report, encoding="utf-8")
    render_accuracy(y_test, preds, class_names, out / "accuracy.png")
    sys.stdout.write(format_timings(timings))
    sys.stdout.write(f"accuracy {float((preds == np.asarray(y_test)).mean())!r}\n")
    return 0


_COMMANDS = {"synth": cmd_synth, "ldpc": cmd_ldpc, "ann": cmd_ann,
             "query": cmd_query}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpforge",
        description="Compile factor-graph descriptions into margin-propagation "
                    "analog circuits, with netlist emission, behavioral "
                    "simulation, and experiment harnesses.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{synth,ldpc,ann,query}")

    def common(sp, in_help):
        sp.add_argument("--config", metavar="FILE",
                        help="flat key=value settings file; flags override it")
        sp.add_argument("--in", dest="in_path", metavar="FILE", help=in_help)
        sp.add_argument("--mode", metavar="M",
                        help="gate evaluation mode: exact or mp (default exact)")
        sp.add_argument("--gamma", metavar="G",
                        help="normalization budget in microamps (default 1.0)")
        sp.add_argument("--splines", metavar="K",
                        help="log-map spline count override")
        sp.add_argument("--regime", metavar="R",
                        help="transistor regime: weak or strong (default weak)")
        sp.add_argument("--budget-area", metavar="A",
                        help="area ceiling in library units")
        sp.add_argument("--target-error", metavar="E",
                        help="largest acceptable gate grid error")
        sp.add_argument("--seed", metavar="N",
                        help="seed for sweeps and dataset splits (default 0)")
        sp.add_argument("--out", metavar="DIR",
                        help="artifact directory (default out)")

    sp = sub.add_parser(
        "synth", help="lower a network file through the synthesis stages")
    common(sp, "network description file (default: shipped example)")
    sp.add_argument("--stage", metavar="S",
                    help="stop after this stage: factor, compute, map, "
                         "netlist, sim, or all (default all)")
    sp.add_argument("--query", metavar="VAR",
                    help="posterior variable (default: last declared node)")
    sp.add_argument("--evidence", metavar="V=B,...",
                    help="observed values, e.g. V=1,A=0")

    sp = sub.add_parser(
        "ldpc", help="synthesize a decoder and sweep BER/FER over the channel")
    common(sp, "parity-check matrix in alist form (default: shipped 24x32)")
    sp.add_argument("--snr", metavar="DB,...",
                    help="Eb/N0 sweep points in dB (default 1,2,3,4,5)")
    sp.add_argument("--frames", metavar="N",
                    help="frames per sweep point (default 10000)")
    sp.add_argument("--lift", metavar="Z",
                    help="treat the input as a protograph and lift by Z")

    sp = sub.add_parser(
        "ann", help="evaluate a feed-forward classifier on a held-out split")
    common(sp, "labeled CSV dataset (default: shipped flower data)")
    sp.add_argument("--weights", metavar="FILE",
                    help="weights file (default: shipped 4-8-3 fixture)")

    sp = sub.add_parser(
        "query", help="answer one posterior query and render the read-out")
    common(sp, "network description file (default: shipped example)")
    sp.add_argument("--query", metavar="VAR", help="posterior variable")
    sp.add_argument("--evidence", metavar="V=B,...",
                    help="observed values, e.g. V=1,A=0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"mpforge {args.command}: config: {exc}", file=sys.stderr)
        return 2
    except MpforgeError as exc:
        print(f"mpforge {args.command}: {_stage_of(exc)}: {exc}",
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mpforge {args.command}: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
