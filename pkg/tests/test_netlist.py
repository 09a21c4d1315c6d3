"""Netlist emission, parsing, round-trip identity, and golden files."""

import pathlib

import numpy as np
import pytest

from mpforge.analog_map import map_compute_graph
from mpforge.compute_graph import GraphBuilder, Op, eliminate
from mpforge.errors import NetlistError, UnboundInputError
from mpforge.graph_ir import bn_to_factor_graph
from mpforge.netlist import (
    Measure,
    build_netlist,
    connectivity_violations,
    emit_spice,
    emit_testbench,
    parse_spice,
    serialize_netlist,
)

from test_compute_graph import prey_setup

GOLDEN = pathlib.Path(__file__).parent / "golden"


def prey_am():
    fg, query, evidence = prey_setup()
    return map_compute_graph(eliminate(fg, query, evidence, order="naive"))


def random_compute_graph(rng):
    """Small mixed-op graph over unit-interval inputs and constants."""
    b = GraphBuilder()
    pool = [b.input(f"x{i}", float(rng.uniform(0.05, 0.95)))
            for i in range(int(rng.integers(2, 5)))]

    def pick():
        return pool[int(rng.integers(len(pool)))]

    for _ in range(int(rng.integers(3, 10))):
        r = int(rng.integers(6))
        if r == 0:
            pool.append(b.const(float(np.round(rng.uniform(0.0, 1.0), 6))))
        elif r == 1:
            pool.append(b.sub(pick()))
        elif r == 2:
            pool.append(b.mul2(pick(), pick()))
        elif r == 3:
            # keep one operand non-constant so folded sums stay mappable
            first, second = pick(), pick()
            if b.nodes[first].op is Op.CONST and b.nodes[second].op is Op.CONST:
                second = pool[0]
            pool.append(b.add([first, second]))
        elif r == 4:
            pool.append(b.relu(pick()))
        else:
            pool.append(b.norm(pick(), pick()))
    return b.finish({"y0": pool[-1], "y1": pick()})


class TestEmission:
    def test_prey_has_exactly_eight_gate_lines(self):
        text = emit_spice(prey_am())
        gates = [l for l in text.splitlines()
                 if l.startswith("X") and l.endswith("SOFT_AND_S16")]
        assert len(gates) == 8

    def test_instance_ids_ascend_and_end_is_last(self):
        lines = emit_spice(prey_am()).splitlines()
        ids = [int(l.split()[0][1:]) for l in lines if l.startswith("X")]
        assert ids == sorted(ids) == list(range(len(ids)))
        assert lines[-1] == ".END"
        assert lines.count(".END") == 1

    def test_placeholder_sources_are_zero(self):
        nl = build_netlist(prey_am())
        assert all(s.value == 0.0 for s in nl.sources)
        # one source per true rail, one per used complement rail
        am = prey_am()
        assert len(nl.sources) == len(am.inputs) + len(am.input_complements)

    def test_measure_markers_name_every_output(self):
        am = prey_am()
        nl = build_netlist(am)
        assert {(m.label, m.net) for m in nl.measures} == \
            set(am.outputs.items())

    def test_title_records_config(self):
        text = emit_spice(prey_am())
        head = text.splitlines()[0]
        assert head.startswith("* mpforge netlist")
        assert "gamma=1.0" in head and "splines=16" in head

    def test_subckt_blocks_sorted_by_name(self):
        nl = parse_spice(emit_spice(prey_am()))
        names = [sd.name for sd in nl.subckts]
        assert names == sorted(names)


class TestGolden:
    def test_prey_netlist_matches_golden_file(self):
        want = (GOLDEN / "prey_netlist.sp").read_text()
        assert emit_spice(prey_am()) == want


class TestRoundTrip:
    def test_prey_model_and_bytes(self):
        am = prey_am()
        text = emit_spice(am)
        nl = parse_spice(text)
        assert nl == build_netlist(am)
        assert serialize_netlist(nl) == text

    def test_fuzzed_maps_round_trip(self):
        rng = np.random.default_rng(42)
        for i in range(1000):
            cg = random_compute_graph(rng)
            am = map_compute_graph(cg)
            model = build_netlist(am)
            text = serialize_netlist(model)
            back = parse_spice(text)
            assert back == model, i
            assert serialize_netlist(back) == text, i

    def test_testbench_round_trips_too(self):
        am = prey_am()
        text = emit_testbench(am)
        assert serialize_netlist(parse_spice(text)) == text


class TestTestbench:
    def test_sources_carry_probability_currents(self):
        am = prey_am()
        nl = parse_spice(emit_testbench(am))
        by_net = {s.net: s.value for s in nl.sources}
        for name, p in am.default_bindings.items():
            assert by_net[am.inputs[name]] == p
            comp = am.input_complements.get(name)
            if comp is not None:
                assert by_net[comp] == 1.0 - p
        assert nl.directives == (".OP",)

    def test_gamma_scales_source_currents(self):
        from mpforge.mp_kernel import MPConfig
        fg, query, evidence = prey_setup()
        cg = eliminate(fg, query, evidence, order="naive")
        am = map_compute_graph(cg, cfg=MPConfig(gamma=2.0))
        nl = parse_spice(emit_testbench(am))
        by_net = {s.net: s.value for s in nl.sources}
        assert by_net[am.inputs["p(A=1)"]] == 0.7 * 2.0

    def test_missing_stimulus_listed(self):
        am = prey_am()
        stim = dict(am.default_bindings)
        stim.pop("p(A=1)")
        with pytest.raises(UnboundInputError, match=r"p\(A=1\)"):
            emit_testbench(am, stim)

    def test_unknown_and_out_of_range_stimulus_rejected(self):
        am = prey_am()
        with pytest.raises(NetlistError, match="ghost"):
            emit_testbench(am, {**am.default_bindings, "ghost": 0.5})
        bad = dict(am.default_bindings)
        bad["p(A=1)"] = 1.5
        with pytest.raises(NetlistError, match="1.5"):
            emit_testbench(am, bad)


class TestParser:
    def test_continuations_and_case_fold(self):
        text = ("* t\n"
                ".subckt INV a o\n"
                "R1 a 0 1\n"
                ".ends\n"
                "X0 n1\n"
                "+ n2 INV\n"
                "i7 0 n1 dc 0.25\n"
                ".end\n")
        nl = parse_spice(text)
        assert nl.instances[0].nets == ("n1", "n2")
        assert nl.sources[0].value == 0.25

    def test_measure_markers_recovered_other_comments_dropped(self):
        text = ("* t\n"
                "* just a note\n"
                ".SUBCKT INV a o\n"
                ".ENDS\n"
                "X0 n1 n2 INV\n"
                "* MEASURE y n2\n"
                ".END\n")
        nl = parse_spice(text)
        assert nl.measures == (Measure("y", "n2"),)

    def test_error_paths_carry_line_numbers(self):
        base = "* t\n.SUBCKT INV a o\n.ENDS\n"
        cases = [
            ("X0 n1 INV\n.END\n", "2 nets for 2-port|1 nets for 2-port"),
            ("X0 n1 n2 GHOST\n.END\n", "unknown subckt"),
            ("X0 n1 n2 INV\nX0 n1 n2 INV\n.END\n", "duplicate instance"),
            ("I0 n1 n2 DC 1\n.END\n", "ground"),
            ("I0 0 n1 DC x\n.END\n", "bad source value"),
            ("Q1 n1 n2 n3\n.END\n", "unrecognized"),
            ("X0 n1 n2 INV w=z\n.END\n", "bad param"),
        ]
        for tail, pattern in cases:
            with pytest.raises(NetlistError, match=pattern):
                parse_spice(base + tail)

    def test_structure_errors(self):
        with pytest.raises(NetlistError, match="title"):
            parse_spice("X0 a b INV\n.END\n")
        with pytest.raises(NetlistError, match="missing .END"):
            parse_spice("* t\n")
        with pytest.raises(NetlistError, match="after .END"):
            parse_spice("* t\n.END\nX0 a b INV\n")
        with pytest.raises(NetlistError, match="nested"):
            parse_spice("* t\n.SUBCKT A a\n.SUBCKT B b\n.ENDS\n.END\n")
        with pytest.raises(NetlistError, match="missing .ENDS"):
            parse_spice("* t\n.SUBCKT A a\nR1 a 0 1\n.END\n")
        with pytest.raises(NetlistError, match="duplicate subckt"):
            parse_spice("* t\n.SUBCKT A a\n.ENDS\n.SUBCKT A a\n.ENDS\n.END\n")

    def test_unknown_directives_pass_through(self):
        text = "* t\n.OPTIONS reltol=1e-6\n.END\n"
        nl = parse_spice(text)
        assert nl.directives == (".OPTIONS reltol=1e-6",)


class TestConnectivity:
    def test_prey_netlists_are_clean(self):
        assert connectivity_violations(parse_spice(emit_spice(prey_am()))) == []
        assert connectivity_violations(
            parse_spice(emit_testbench(prey_am()))) == []

    def test_single_reference_net_flagged(self):
        text = ("* t\n"
                ".SUBCKT INV a o\n"
                ".ENDS\n"
                "X0 n1 n2 INV\n"
                "X1 n2 n3 INV\n"
                "I0 0 n1 DC 0.0\n"
                "* MEASURE y n3\n"
                ".END\n")
        assert connectivity_violations(parse_spice(text)) == []
        # drop the measure marker: n3 now dangles
        stripped = text.replace("* MEASURE y n3\n", "")
        assert connectivity_violations(parse_spice(stripped)) == \
            ["net n3 referenced only once"]
