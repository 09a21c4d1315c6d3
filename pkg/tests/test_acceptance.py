"""Acceptance suite: the eight shipping criteria, one verdict line each.

Every test measures its full check set, prints one `A<n> PASS|FAIL`
line with the observed numbers, then asserts. Verdict lines print with
capture suspended so a plain `pytest -v` run shows all eight.
"""

import math
import pathlib
import time

import numpy as np

from mpforge import data_path
from mpforge.analog_map import map_compute_graph
from mpforge.ann import ann_eval, iris_fixture, iris_weights
from mpforge.formats import parse_alist
from mpforge.graph_ir import bn_to_factor_graph
from mpforge.ldpc import (
    Protograph,
    ber_sweep,
    build_decoder_map,
    lift_protograph,
)
from mpforge.mp_kernel import GateMode, gate_grid_error, mp_root
from mpforge.netlist import (
    connectivity_violations,
    emit_spice,
    parse_spice,
    serialize_netlist,
)
from mpforge.pipeline import bn_query, format_timings
from mpforge.sim import SolveConfig
from test_compute_graph import PREY_ORACLE, dense_marginal
from test_graph_ir import prey_bn, random_bn
from test_mp_kernel import bisect_root
from test_netlist import prey_am, random_compute_graph

GOLDEN = pathlib.Path(__file__).parent / "golden"


def verdict(capsys, tag: str, ok: bool, detail: str) -> None:
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    with capsys.disabled():
        print(line, flush=True)
    assert ok, line


def fixture_code():
    return parse_alist(data_path("ldpc_24x32.alist").read_text())


def random_name_query(rng, bn):
    names = list(bn.names)
    query = names[int(rng.integers(len(names)))]
    others = [n for n in names if n != query]
    k = int(rng.integers(0, min(3, len(others)) + 1))
    picks = rng.choice(len(others), size=k, replace=False) if k else []
    return query, {others[i]: int(rng.integers(2)) for i in picks}


def test_a1_worked_example(capsys):
    t0 = time.perf_counter()
    exact = bn_query(prey_bn(), "C", {"V": 1})
    mp = bn_query(prey_bn(), "C", {"V": 1}, mode=GateMode.MP)
    secs = time.perf_counter() - t0
    gates = exact.am.instance_counts().get("SOFT_AND", 0)
    err_exact = abs(exact.probability - PREY_ORACLE)
    err_mp = abs(mp.probability - PREY_ORACLE)
    ok = (err_exact <= 1e-9 and err_mp <= 0.06 and gates == 8
          and secs < 1.0)
    verdict(capsys, "A1", ok, f"exact err {err_exact:.2e} (tol 1e-9), "
                      f"mp err {err_mp:.4f} (tol 0.06), "
                      f"soft-and gates {gates} (want 8), {secs:.3f} s")


def test_a2_random_network_equivalence(capsys):
    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        bn = random_bn(rng, max_nodes=8)
        fg = bn_to_factor_graph(bn)
        query, evidence = random_name_query(rng, bn)
        want = dense_marginal(fg, fg.variable_named(query).id,
                              {fg.variable_named(n).id: v
                               for n, v in evidence.items()})
        got = bn_query(bn, query, evidence).probability
        worst = max(worst, abs(got - want))
    secs = time.perf_counter() - t0
    verdict(capsys, "A2", worst <= 1e-9,
            f"200 random networks, max |pipeline - oracle| = {worst:.2e} "
            f"(tol 1e-9), {secs:.1f} s")


def test_a3_ber_sweep(capsys):
    h = fixture_code()
    snrs = [1.0, 2.0, 3.0, 4.0, 5.0]
    cfg = SolveConfig(max_iters=50)
    t0 = time.perf_counter()
    ex = ber_sweep(h, snrs, max_frames=10000, cfg=cfg,
                   node_mode=GateMode.EXACT, seed=0)
    mp = ber_sweep(h, snrs, max_frames=10000, cfg=cfg,
                   node_mode=GateMode.MP, seed=0)
    secs = time.perf_counter() - t0
    bers = [p.ber for p in ex.points]
    decreasing = all(a > b for a, b in zip(bers, bers[1:]))
    fer_ok = all(p.fer >= p.ber for p in ex.points + mp.points)
    ratios = [m.ber / e.ber if e.ber > 0 else math.inf
              for e, m in zip(ex.points, mp.points)]
    ratio_ok = all(1 / 3 <= r <= 3 for r in ratios)
    ok = decreasing and fer_ok and ratio_ok and secs <= 600
    verdict(capsys, "A3", ok,
            f"exact ber {['%.2e' % b for b in bers]} "
            f"{'strictly decreasing' if decreasing else 'NOT decreasing'}; "
            f"fer>=ber {fer_ok}; mp/exact ratios "
            f"{['%.2f' % r for r in ratios]} (band [0.33, 3]); {secs:.0f} s")


def test_a4_protograph_lifts(capsys):
    base = fixture_code()
    details = []
    ok = True
    for z, bits in ((2, 64), (3, 96)):
        h = lift_protograph(Protograph(base=base, lift_size=z), seed=0)
        weights_ok = (h.n_cols == bits and set(h.col_weights()) == {3}
                      and set(h.row_weights()) == {4})
        flaws = connectivity_violations(
            parse_spice(emit_spice(build_decoder_map(h))))
        ok = ok and weights_ok and not flaws
        details.append(f"Z={z}: {h.n_cols}-bit, degrees "
                       f"{'3/4 preserved' if weights_ok else 'BROKEN'}, "
                       f"{len(flaws)} netlist violations")
    verdict(capsys, "A4", ok, "; ".join(details))


def test_a5_ann_accuracy(capsys):
    spec = iris_weights()
    _, _, x_test, y_test = iris_fixture()
    t0 = time.perf_counter()
    acc_exact = ann_eval(spec, x_test, y_test, mode=GateMode.EXACT)
    acc_mp = ann_eval(spec, x_test, y_test, mode=GateMode.MP)
    secs = time.perf_counter() - t0
    gap = abs(acc_mp - acc_exact)
    ok = acc_exact >= 0.88 and gap <= 0.02
    verdict(capsys, "A5", ok, f"exact {acc_exact:.4f} (floor 0.88), mp {acc_mp:.4f}, "
                      f"gap {gap:.4f} (tol 0.02), {secs:.1f} s")


def test_a6_synthesis_speed(capsys):
    res = bn_query(prey_bn(), "C", {"V": 1}, upto="netlist")
    prey_ms = sum(res.timings_ms.values())
    with capsys.disabled():
        print(format_timings(res.timings_ms), end="")
    rows = [f"prey {prey_ms:.1f} ms"]
    ok = prey_ms < 1000.0
    base = fixture_code()
    for z in (1, 2, 3):
        h = base if z == 1 else lift_protograph(
            Protograph(base=base, lift_size=z), seed=0)
        t0 = time.perf_counter()
        am = build_decoder_map(h)
        t1 = time.perf_counter()
        emit_spice(am)
        t2 = time.perf_counter()
        map_ms, emit_ms = (t1 - t0) * 1e3, (t2 - t1) * 1e3
        with capsys.disabled():
            print(f"decoder{h.n_cols:4d}  map {map_ms:10.3f} ms  netlist "
                  f"{emit_ms:10.3f} ms")
        rows.append(f"{h.n_cols}-bit {map_ms + emit_ms:.1f} ms")
        ok = ok and map_ms + emit_ms < 1000.0
    verdict(capsys, "A6", ok, "netlist generation under 1 s per fixture: "
            + ", ".join(rows))


def test_a7_kernel_properties(capsys):
    rng = np.random.default_rng(42)
    bounds_ok = mono_ok = True
    bisect_worst = shift_worst = limit_worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        scores = rng.normal(0.0, 3.0, size=k)
        gamma = float(rng.uniform(0.1, 4.0))
        z = mp_root(scores, gamma)
        if not scores.max() - gamma <= z < scores.max():
            bounds_ok = False
        bisect_worst = max(bisect_worst, abs(z - bisect_root(scores, gamma)))
    for _ in range(200):
        scores = rng.normal(0.0, 3.0, size=4)
        gamma = float(rng.uniform(0.1, 4.0))
        z = mp_root(scores, gamma)
        c = float(rng.normal(0.0, 5.0))
        shift_worst = max(shift_worst,
                          abs(mp_root(scores + c, gamma) - (z + c)))
        bumped = scores.copy()
        bumped[int(rng.integers(4))] += float(rng.uniform(0.0, 2.0))
        if mp_root(bumped, gamma) < z - 1e-12:
            mono_ok = False
        if mp_root(scores, gamma + float(rng.uniform(0.0, 2.0))) > z + 1e-12:
            mono_ok = False
        limit_worst = max(limit_worst,
                          abs(mp_root(scores, 1e-6) - scores.max()))
    errs = [gate_grid_error("SOFT_AND", s, 1.0).max_error for s in (4, 8, 16)]
    spline_ok = errs[0] > errs[1] > errs[2]
    ok = (bounds_ok and mono_ok and spline_ok and bisect_worst <= 1e-9
          and shift_worst <= 1e-9 and limit_worst <= 1e-5)
    verdict(capsys, "A7", ok,
            f"root bounds {bounds_ok}; bisection worst {bisect_worst:.2e} "
            f"(tol 1e-9, 1000 cases); shift worst {shift_worst:.2e}; "
            f"monotone {mono_ok}; gamma->0 worst {limit_worst:.2e} "
            f"(tol 1e-5); gate errors {['%.4f' % e for e in errs]} decreasing "
            f"{spline_ok}")


def test_a8_netlist_contract(capsys):
    rng = np.random.default_rng(42)
    fuzz_fail = None
    for i in range(1000):
        am = map_compute_graph(random_compute_graph(rng))
        text = emit_spice(am)
        if serialize_netlist(parse_spice(text)) != text:
            fuzz_fail = f"parse/emit mismatch at case {i}"
            break
        if emit_spice(am) != text:
            fuzz_fail = f"re-emission differs at case {i}"
            break
    prey_ok = emit_spice(prey_am()) == (GOLDEN / "prey_netlist.sp").read_text()
    code_ok = emit_spice(build_decoder_map(fixture_code())) == \
        (GOLDEN / "code32_netlist.sp").read_text()
    ok = fuzz_fail is None and prey_ok and code_ok
    verdict(capsys, "A8", ok,
            f"1000 fuzzed maps round-trip {'clean' if not fuzz_fail else fuzz_fail}; "
            f"prey golden {'match' if prey_ok else 'MISMATCH'}; "
            f"32-bit decoder golden {'match' if code_ok else 'MISMATCH'}")
