"""Margin-propagation primitive and soft gate properties.

The mp_root oracle here is an independently coded bisection solver, frozen
before the production sort-based solver was written.
"""

import math

import numpy as np
import pytest

from mpforge.errors import KernelError
from mpforge.mp_kernel import (
    GateMode,
    MPConfig,
    ProbabilityCurrent,
    current_add,
    exact_boxplus,
    gate_grid_error,
    mp_boxplus,
    mp_normalize,
    mp_root,
    soft_and,
    soft_or,
    spline_log,
)


def bisect_root(scores, gamma, tol=1e-12):
    """Oracle: solve sum(max(L - z, 0)) == gamma by bisection."""
    scores = np.asarray(scores, dtype=float)
    lo = scores.max() - gamma - 1.0
    hi = scores.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(scores - mid, 0.0).sum() > gamma:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


class TestMpRoot:
    def test_two_equal_scores(self):
        # sum of two equal slacks a - z each gamma/2
        assert mp_root([0.4, 0.4], 1.0) == pytest.approx(0.4 - 0.5, abs=1e-12)
        assert mp_root([-2.0, -2.0], 0.25) == pytest.approx(-2.125, abs=1e-12)

    def test_three_zeros_gamma_three(self):
        assert mp_root([0.0, 0.0, 0.0], 3.0) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_bisection_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = rng.integers(1, 12)
            scores = rng.normal(0.0, 4.0, size=n)
            gamma = 10.0 ** rng.uniform(-3, 1)
            z = mp_root(scores, gamma)
            assert z == pytest.approx(bisect_root(scores, gamma), abs=1e-9)

    def test_root_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            scores = rng.normal(0.0, 3.0, size=rng.integers(1, 9))
            gamma = 10.0 ** rng.uniform(-2, 1)
            z = mp_root(scores, gamma)
            assert scores.max() - gamma <= z < scores.max()

    def test_shift_equivariance(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            scores = rng.normal(0.0, 2.0, size=rng.integers(1, 8))
            c = rng.normal(0.0, 5.0)
            assert mp_root(scores + c, 1.0) == pytest.approx(
                mp_root(scores, 1.0) + c, abs=1e-9)

    def test_monotone_in_scores_and_gamma(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            scores = rng.normal(0.0, 2.0, size=rng.integers(2, 8))
            gamma = 10.0 ** rng.uniform(-2, 0.5)
            z = mp_root(scores, gamma)
            bumped = scores.copy()
            bumped[rng.integers(len(scores))] += abs(rng.normal(0.0, 1.0))
            assert mp_root(bumped, gamma) >= z - 1e-12
            assert mp_root(scores, gamma * 1.5) < z

    def test_gamma_to_zero_approaches_max(self):
        scores = [0.2, -1.0, 0.7]
        assert abs(mp_root(scores, 1e-6) - 0.7) < 1e-5

    def test_rejects_bad_input(self):
        with pytest.raises(KernelError):
            mp_root([], 1.0)
        with pytest.raises(KernelError):
            mp_root([1.0, np.nan], 1.0)
        with pytest.raises(KernelError):
            mp_root([1.0], 0.0)
        with pytest.raises(KernelError):
            mp_root([1.0], -2.0)


class TestMpNormalize:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(mp_normalize([0.3, 0.3], 1.0), [0.5, 0.5])

    def test_output_sums_to_gamma(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            scores = rng.normal(0.0, 3.0, size=rng.integers(1, 9))
            gamma = 10.0 ** rng.uniform(-2, 1)
            out = mp_normalize(scores, gamma)
            assert out.sum() == pytest.approx(gamma, rel=1e-9)
            assert (out >= 0).all()

    def test_dominant_score_saturates(self):
        out = mp_normalize([5.0, 0.0, -1.0], 1.0)
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0])


class TestCurrentAdd:
    def test_empty_is_zero(self):
        assert current_add([]) == 0.0

    def test_simple(self):
        assert current_add([0.3, 0.7]) == pytest.approx(1.0, abs=1e-15)

    def test_matches_compensated_reference(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            terms = rng.uniform(0.0, 2.0, size=rng.integers(0, 40))
            assert current_add(terms) == pytest.approx(
                float(np.sum(terms)), abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(KernelError):
            current_add([0.2, -0.1])


class TestSplineLogMap:
    def test_exact_at_knots(self):
        lg = spline_log(8)
        np.testing.assert_allclose(lg(lg.knots), np.log(lg.knots), atol=1e-12)

    def test_chord_below_log_and_refines(self):
        p = np.linspace(1e-3, 1.0, 2001)
        prev_gap = None
        for k in (4, 8, 16):
            gap = np.log(p) - spline_log(k)(p)  # >= 0: chord under concave fn
            assert (gap >= -1e-12).all()
            if prev_gap is not None:
                assert (gap <= prev_gap + 1e-12).all()
            prev_gap = gap

    def test_clamps_domain(self):
        lg = spline_log(4)
        assert lg(0.0) == pytest.approx(math.log(1e-3))
        assert lg(2.0) == pytest.approx(0.0)


class TestProbabilityCurrent:
    def test_rails_sum_to_gamma(self):
        c = ProbabilityCurrent.from_p(0.3, gamma=2.0)
        assert c.i1 + c.i0 == pytest.approx(2.0)
        assert c.p == pytest.approx(0.3)

    def test_rejects_invalid(self):
        with pytest.raises(KernelError):
            ProbabilityCurrent(i1=0.5, i0=0.7, gamma=1.0)
        with pytest.raises(KernelError):
            ProbabilityCurrent(i1=-0.1, i0=1.1, gamma=1.0)
        with pytest.raises(KernelError):
            ProbabilityCurrent.from_p(1.5)


class TestSoftGates:
    def curr(self, p, gamma=1.0):
        return ProbabilityCurrent.from_p(p, gamma)

    def test_and_exact_is_product(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            pa, pb = rng.uniform(0, 1, 2)
            out = soft_and(self.curr(pa), self.curr(pb))
            assert out.p == pytest.approx(pa * pb, abs=1e-12)

    @pytest.mark.parametrize("mode", [GateMode.EXACT, GateMode.MP])
    def test_and_absorbing_and_identity(self, mode):
        one, zero = self.curr(1.0), self.curr(0.0)
        assert soft_and(one, one, None, mode).p == pytest.approx(1.0, abs=1e-9)
        assert soft_and(zero, self.curr(0.6), None, mode).p == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("mode", [GateMode.EXACT, GateMode.MP])
    def test_or_trivials(self, mode):
        one, zero = self.curr(1.0), self.curr(0.0)
        assert soft_or(zero, zero, None, mode).p == pytest.approx(0.0, abs=1e-9)
        assert soft_or(one, self.curr(0.3), None, mode).p == pytest.approx(1.0, abs=1e-9)

    def test_or_exact_value(self):
        out = soft_or(self.curr(0.4), self.curr(0.5))
        assert out.p == pytest.approx(1 - 0.6 * 0.5, abs=1e-12)

    def test_outputs_are_valid_currents(self):
        rng = np.random.default_rng(31)
        cfg = MPConfig(gamma=2.0, spline_count=8)
        for _ in range(100):
            pa, pb = rng.uniform(0, 1, 2)
            out = soft_and(self.curr(pa, 2.0), self.curr(pb, 2.0), cfg, GateMode.MP)
            assert out.i1 + out.i0 == pytest.approx(2.0, rel=1e-9)
            assert out.i1 >= 0 and out.i0 >= 0

    def test_gate_error_monotone_in_splines(self):
        errs = [gate_grid_error("SOFT_AND", k).max_error for k in (4, 8, 16)]
        assert errs[0] > errs[1] > errs[2]

    def test_or_mirrors_and_under_de_morgan(self):
        for k in (4, 8, 16):
            ea = gate_grid_error("SOFT_AND", k).grid
            eo = gate_grid_error("SOFT_OR", k).grid
            # or(a, b) complements and(1-a, 1-b): same error surface reflected
            np.testing.assert_allclose(eo, ea[::-1, ::-1], atol=1e-9)

    def test_argmax_preserved_outside_error_band(self):
        grid = np.round(np.arange(0.05, 0.951, 0.05), 10)
        for k in (4, 8, 16):
            bound = gate_grid_error("SOFT_AND", k).max_error
            cfg = MPConfig(spline_count=k)
            for pa in grid:
                for pb in grid:
                    ex = pa * pb
                    if abs(ex - 0.5) <= bound:
                        continue
                    mp = soft_and(self.curr(pa), self.curr(pb), cfg, GateMode.MP).p
                    assert (mp - 0.5) * (ex - 0.5) >= 0


class TestBoxplus:
    def test_extreme_llr_passes_other_through(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            l1 = rng.uniform(-8, 8)
            for l2 in (30.0, -30.0, 45.0):
                out = mp_boxplus(l1, l2)
                expect = l1 if l2 > 0 else -l1
                assert out == pytest.approx(expect, abs=1e-3)

    def test_erasure_annihilates(self):
        for l1 in (-5.0, -0.3, 0.0, 2.7):
            assert mp_boxplus(l1, 0.0) == 0.0

    def test_error_bound_vs_exact(self):
        # Bound frozen from first measurement: max error 0.313 over
        # U(-12,12)^2 and N(0,2)^2 pairs, always under max(0.35, 0.1|exact|).
        rng = np.random.default_rng(42)
        for draw in (lambda n: rng.uniform(-12, 12, n), lambda n: rng.normal(0, 2, n)):
            l1, l2 = draw(10000), draw(10000)
            err = np.abs(mp_boxplus(l1, l2) - exact_boxplus(l1, l2))
            bound = np.maximum(0.35, 0.1 * np.abs(exact_boxplus(l1, l2)))
            assert (err <= bound).all()

    def test_gamma_to_zero_is_min_sum(self):
        rng = np.random.default_rng(8)
        cfg = MPConfig(gamma=1e-9)
        for _ in range(200):
            l1, l2 = rng.normal(0, 3, 2)
            minsum = np.sign(l1) * np.sign(l2) * min(abs(l1), abs(l2))
            assert mp_boxplus(l1, l2, cfg) == pytest.approx(minsum, abs=1e-8)

    def test_symmetry(self):
        rng = np.random.default_rng(71)
        l1, l2 = rng.normal(0, 3, 500), rng.normal(0, 3, 500)
        np.testing.assert_allclose(mp_boxplus(l1, l2), mp_boxplus(l2, l1))
        np.testing.assert_allclose(mp_boxplus(-l1, l2), -mp_boxplus(l1, l2))
