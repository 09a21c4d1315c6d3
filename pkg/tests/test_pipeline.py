"""Staged query pipeline: posteriors, truncation, timings, and reports."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mpforge.errors import GraphError
from mpforge.graph_ir import bn_to_factor_graph
from mpforge.mp_kernel import GateMode
from mpforge.pipeline import STAGES, bn_query, format_timings, metrics_report
from mpforge.sim import SolveConfig, solve_report
from test_compute_graph import PREY_ORACLE, dense_marginal
from test_graph_ir import prey_bn, random_bn
from test_sim import PREY_MP_ERROR


class TestBnQuery:
    def test_exact_posterior_matches_enumeration(self):
        res = bn_query(prey_bn(), "C", {"V": 1})
        assert_allclose(res.probability, PREY_ORACLE, atol=1e-9)

    def test_mp_posterior_error_matches_direct_solve(self):
        res = bn_query(prey_bn(), "C", {"V": 1}, mode=GateMode.MP)
        assert_allclose(res.probability - PREY_ORACLE, PREY_MP_ERROR, atol=1e-9)
        assert abs(res.probability - PREY_ORACLE) <= 0.06

    def test_full_run_fills_every_stage(self):
        res = bn_query(prey_bn(), "C", {"V": 1})
        assert res.fg is not None
        assert res.cg is not None
        assert res.am is not None
        assert res.netlist_text is not None
        assert res.solve is not None
        assert set(res.timings_ms) == set(STAGES)
        assert all(ms >= 0.0 for ms in res.timings_ms.values())

    def test_upto_truncates_later_stages(self):
        res = bn_query(prey_bn(), "C", {"V": 1}, upto="compute")
        assert res.cg is not None
        assert res.am is None
        assert res.netlist_text is None
        assert res.solve is None
        assert res.probability is None
        assert tuple(res.timings_ms) == ("factor", "compute")

    def test_upto_factor_builds_only_the_graph(self):
        res = bn_query(prey_bn(), "C", upto="factor")
        assert res.fg is not None
        assert res.cg is None
        assert tuple(res.timings_ms) == ("factor",)

    def test_unknown_stage_rejected(self):
        with pytest.raises(GraphError, match="unknown stage"):
            bn_query(prey_bn(), "C", upto="route")

    def test_unknown_query_rejected(self):
        with pytest.raises(GraphError, match="query"):
            bn_query(prey_bn(), "catch")

    def test_unknown_evidence_rejected(self):
        with pytest.raises(GraphError, match="evidence"):
            bn_query(prey_bn(), "C", {"vole": 1})

    def test_explicit_solve_config_overrides_mode(self):
        res = bn_query(prey_bn(), "C", {"V": 1}, mode=GateMode.EXACT,
                       solve=SolveConfig(mode=GateMode.MP))
        assert res.solve.mode is GateMode.MP
        assert_allclose(res.probability - PREY_ORACLE, PREY_MP_ERROR, atol=1e-9)

    def test_reruns_are_identical(self):
        a = bn_query(prey_bn(), "C", {"V": 1})
        b = bn_query(prey_bn(), "C", {"V": 1})
        assert a.netlist_text == b.netlist_text
        assert a.probability == b.probability

    def test_random_networks_match_dense_oracle(self):
        # evidence/query names are resolved inside the pipeline, so this
        # also locks the name-to-id plumbing
        rng = np.random.default_rng(42)
        for _ in range(25):
            bn = random_bn(rng)
            fg = bn_to_factor_graph(bn)
            names = list(bn.names)
            query = names[int(rng.integers(len(names)))]
            others = [n for n in names if n != query]
            k = int(rng.integers(0, min(2, len(others)) + 1))
            picks = rng.choice(len(others), size=k, replace=False) if k else []
            evidence = {others[i]: int(rng.integers(2)) for i in picks}
            want = dense_marginal(fg, fg.variable_named(query).id,
                                  {fg.variable_named(n).id: v
                                   for n, v in evidence.items()})
            res = bn_query(bn, query, evidence)
            assert_allclose(res.probability, want, atol=1e-9)


class TestReports:
    def test_format_timings_orders_stages_and_totals(self):
        text = format_timings({"map": 2.5, "factor": 1.0})
        lines = text.splitlines()
        assert lines[0].startswith("factor")
        assert lines[1].startswith("map")
        assert lines[-1].startswith("total")
        assert "3.500 ms" in lines[-1]
        assert text.endswith("\n")

    def test_metrics_report_shape(self):
        res = bn_query(prey_bn(), "C", {"V": 1}, upto="map")
        text = metrics_report(res.am)
        lines = text.splitlines()
        assert lines[0] == f"instances {len(res.am.instances)}"
        for key in ("SOFT_AND", "area_units", "power_nw", "delay_us",
                    "regime weak", "splines 16"):
            assert any(line.startswith(key) for line in lines)

    def test_metrics_report_deterministic(self):
        a = bn_query(prey_bn(), "C", {"V": 1}, upto="map")
        b = bn_query(prey_bn(), "C", {"V": 1}, upto="map")
        assert metrics_report(a.am) == metrics_report(b.am)

    def test_solve_report_roundtrips_the_posterior(self):
        res = bn_query(prey_bn(), "C", {"V": 1})
        text = solve_report(res.solve)
        lines = text.splitlines()
        assert lines[0] == "mode exact"
        assert "settled true" in lines
        row = next(l for l in lines if l.startswith("out posterior"))
        assert float(row.split()[-1]) == res.probability
