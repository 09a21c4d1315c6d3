"""Margin-propagation primitives and soft gate semantics.

The core primitive is the reverse-water-filling root: given scores L_i and a
budget gamma > 0, mp_root returns the unique z solving

    sum_i max(L_i - z, 0) = gamma.

All MP-mode gate behavior in this package is built from that primitive plus a
piecewise-linear log map. Probabilities ride on dual-rail currents: a value p
is the pair (p * gamma, (1 - p) * gamma) in microamps.

Gate construction (MP mode), for and-style composition of two inputs:

  * the four product terms p_a p_b, p_a (1-p_b), (1-p_a) p_b,
    (1-p_a)(1-p_b) get log-domain scores via the spline-quantized log map,
    scaled by beta = gamma / 2 so that the final two-term normalizer's
    linear response matches the exact posterior's slope at balance;
  * the complement score is the MP approximation of the log-sum of the three
    non-AND terms, lse(S) ~= mp_root(S, gamma) + gamma (first-order
    rectified-linear model of exp around the root);
  * mp_normalize over [s_and, s_complement] yields the output rail pair.

EXACT mode computes the same contracts with ordinary arithmetic and is the
reference the MP mode is judged against.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import KernelError

# Lower clamp of the log map's probability domain. Currents below
# P_MIN * gamma are indistinguishable from leakage in the intended regime.
P_MIN = 1e-3


class Regime(str, Enum):
    WEAK_INVERSION = "weak"
    STRONG_INVERSION = "strong"


class GateMode(str, Enum):
    EXACT = "exact"
    MP = "mp"


@dataclass(frozen=True)
class MPConfig:
    """Knobs shared by every MP-mode evaluation.

    gamma:        normalization budget, in units of unit_current.
    unit_current: microamps per unit; rail currents are value * gamma * unit.
    spline_count: piecewise-linear resolution of the log map.
    regime:       transistor operating regime (affects metrics only).
    """

    gamma: float = 1.0
    unit_current: float = 1.0
    spline_count: int = 16
    regime: Regime = Regime.WEAK_INVERSION

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise KernelError(f"gamma must be positive and finite, got {self.gamma}")
        if not (self.unit_current > 0 and math.isfinite(self.unit_current)):
            raise KernelError(f"unit_current must be positive, got {self.unit_current}")
        if self.spline_count < 1:
            raise KernelError(f"spline_count must be >= 1, got {self.spline_count}")


@dataclass(frozen=True)
class ProbabilityCurrent:
    """Dual-rail encoding of a probability at budget gamma.

    i1 + i0 == gamma within 1e-9 * gamma; p = i1 / gamma.
    """

    i1: float
    i0: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.i1 < -1e-12 or self.i0 < -1e-12:
            raise KernelError(f"negative rail current: i1={self.i1}, i0={self.i0}")
        if abs((self.i1 + self.i0) - self.gamma) > 1e-9 * self.gamma:
            raise KernelError(
                f"rails must sum to gamma={self.gamma}, got {self.i1 + self.i0}"
            )

    @property
    def p(self) -> float:
        return self.i1 / self.gamma

    @classmethod
    def from_p(cls, p: float, gamma: float = 1.0) -> "ProbabilityCurrent":
        if not (0.0 <= p <= 1.0):
            raise KernelError(f"probability out of range: {p}")
        return cls(i1=p * gamma, i0=(1.0 - p) * gamma, gamma=gamma)


def _check_scores(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise KernelError("score vector must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise KernelError("score vector contains non-finite entries")
    return arr


def mp_root(scores, gamma: float) -> float:
    """Solve sum_i max(L_i - z, 0) = gamma for z.

    Exact active-set solution: sort scores descending; for the correct active
    set size k, z = (sum of top k - gamma) / k with L_(k) > z >= L_(k+1).
    The root always lies in [max(L) - gamma, max(L)).
    """
    arr = _check_scores(scores)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise KernelError(f"gamma must be positive and finite, got {gamma}")
    desc = np.sort(arr)[::-1]
    csum = np.cumsum(desc)
    n = desc.size
    for k in range(1, n + 1):
        z = (csum[k - 1] - gamma) / k
        nxt = desc[k] if k < n else -math.inf
        if desc[k - 1] > z >= nxt:
            return float(z)
    # All-active fallback; reachable only through rounding ties.
    return float((csum[-1] - gamma) / n)


def mp_normalize(scores, gamma: float) -> np.ndarray:
    """Project scores to output currents o_i = max(L_i - z, 0), sum = gamma."""
    arr = _check_scores(scores)
    z = mp_root(arr, gamma)
    return np.maximum(arr - z, 0.0)


def current_add(terms) -> float:
    """Kirchhoff current summation. Exact; [] sums to 0."""
    vals = [float(t) for t in terms]
    for v in vals:
        if not math.isfinite(v):
            raise KernelError(f"non-finite current term: {v}")
        if v < 0:
            raise KernelError(f"negative current term: {v}")
    return math.fsum(vals)


class SplineLogMap:
    """Piecewise-linear chord interpolant of ln(p) on [P_MIN, 1].

    Knots are uniform in p: a PWL ladder in the current domain has equally
    spaced current breakpoints. Doubling the segment count nests the knots,
    so the map error shrinks pointwise as resolution grows. Inputs are
    clamped into the domain before lookup.
    """

    def __init__(self, segments: int, p_min: float = P_MIN):
        if segments < 1:
            raise KernelError(f"segments must be >= 1, got {segments}")
        self.segments = segments
        self.p_min = p_min
        self.knots = p_min + (1.0 - p_min) * np.arange(segments + 1) / segments
        self.log_knots = np.log(self.knots)

    def __call__(self, p) -> np.ndarray:
        q = np.clip(np.asarray(p, dtype=float), self.p_min, 1.0)
        idx = np.clip(np.searchsorted(self.knots, q, side="right") - 1, 0,
                      self.segments - 1)
        lo, hi = self.knots[idx], self.knots[idx + 1]
        flo, fhi = self.log_knots[idx], self.log_knots[idx + 1]
        t = (q - lo) / (hi - lo)
        return flo + t * (fhi - flo)


_SPLINE_CACHE: dict[int, SplineLogMap] = {}


def spline_log(segments: int) -> SplineLogMap:
    if segments not in _SPLINE_CACHE:
        _SPLINE_CACHE[segments] = SplineLogMap(segments)
    return _SPLINE_CACHE[segments]


def _mp_logsum(scores, gamma: float) -> float:
    """MP approximation of ln(sum_i exp(L_i)) for unscaled-by-beta scores.

    Models exp(u) as max(1 + u / gamma, 0) around the root, which turns the
    normalization sum_i exp(L_i - z) = 1 into the mp_root condition.
    """
    return mp_root(scores, gamma) + gamma


def _gate_cfg(cfg: MPConfig | None) -> MPConfig:
    return cfg if cfg is not None else MPConfig()


def soft_and(a: ProbabilityCurrent, b: ProbabilityCurrent,
             cfg: MPConfig | None = None,
             mode: GateMode = GateMode.EXACT) -> ProbabilityCurrent:
    """Probability product gate. EXACT: p = p_a * p_b."""
    cfg = _gate_cfg(cfg)
    g = cfg.gamma
    if mode == GateMode.EXACT:
        return ProbabilityCurrent.from_p(a.p * b.p, g)
    lg = spline_log(cfg.spline_count)
    beta = g / 2.0
    pa, pb = a.p, b.p
    la1, la0 = float(lg(pa)), float(lg(1.0 - pa))
    lb1, lb0 = float(lg(pb)), float(lg(1.0 - pb))
    s_and = beta * (la1 + lb1)
    others = np.array([la1 + lb0, la0 + lb1, la0 + lb0]) * beta
    # beta-scaled log-sum: beta * lse(S / beta) with the gate's own budget.
    s_comp = _mp_logsum(others, beta * 2.0)  # == mp_root(others, g) + g
    out = mp_normalize([s_and, s_comp], g)
    i1 = min(max(float(out[0]), 0.0), g)
    return ProbabilityCurrent(i1=i1, i0=g - i1, gamma=g)


def soft_or(a: ProbabilityCurrent, b: ProbabilityCurrent,
            cfg: MPConfig | None = None,
            mode: GateMode = GateMode.EXACT) -> ProbabilityCurrent:
    """Probabilistic OR via De Morgan over soft_and: 1 - (1-p_a)(1-p_b)."""
    cfg = _gate_cfg(cfg)
    g = cfg.gamma
    na = ProbabilityCurrent(i1=a.i0, i0=a.i1, gamma=g)
    nb = ProbabilityCurrent(i1=b.i0, i0=b.i1, gamma=g)
    nand = soft_and(na, nb, cfg, mode)
    return ProbabilityCurrent(i1=nand.i0, i0=nand.i1, gamma=g)


def _mp_lncosh(x, gamma: float):
    """mp_root([x, -x], gamma): PWL model of ln cosh(x) up to a constant.

    Equals |x| - gamma for |x| >= gamma / 2, else -gamma / 2. Vectorized.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    return np.where(ax >= gamma / 2.0, ax - gamma, -gamma / 2.0)


def mp_boxplus(l1, l2, cfg: MPConfig | None = None):
    """MP check-node combine of two LLRs.

    Exact target: 2 atanh(tanh(l1/2) tanh(l2/2))
                = ln cosh((l1+l2)/2) - ln cosh((l1-l2)/2).
    Both ln cosh terms use the MP model mp_root([x, -x], gamma); the additive
    constants cancel in the difference. For margins >= gamma/2 this is
    exactly the min-sum rule sign(l1) sign(l2) min(|l1|, |l2|), so the
    gamma -> 0+ limit is min-sum. Accepts scalars or arrays.
    """
    cfg = _gate_cfg(cfg)
    g = cfg.gamma
    a1 = np.asarray(l1, dtype=float)
    a2 = np.asarray(l2, dtype=float)
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
        raise KernelError("mp_boxplus requires finite LLRs")
    u = (a1 + a2) / 2.0
    v = (a1 - a2) / 2.0
    out = _mp_lncosh(u, g) - _mp_lncosh(v, g)
    if np.isscalar(l1) and np.isscalar(l2):
        return float(out)
    return out


def exact_boxplus(l1, l2):
    """Reference check-node combine: 2 atanh(tanh(l1/2) tanh(l2/2)).

    Computed in the numerically stable ln cosh form.
    """
    a1 = np.asarray(l1, dtype=float)
    a2 = np.asarray(l2, dtype=float)

    def lncosh(x):
        ax = np.abs(x)
        return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)

    out = lncosh((a1 + a2) / 2.0) - lncosh((a1 - a2) / 2.0)
    if np.isscalar(l1) and np.isscalar(l2):
        return float(out)
    return out


@dataclass
class GateErrorProfile:
    """Max |MP - EXACT| of a gate over the standard probability grid."""

    kind: str
    spline_count: int
    gamma: float
    max_error: float
    grid: np.ndarray = field(repr=False, default=None)


_GRID = np.round(np.arange(0.05, 0.951, 0.05), 10)


@functools.lru_cache(maxsize=None)
def gate_grid_error(kind: str, spline_count: int, gamma: float = 1.0) -> GateErrorProfile:
    """Characterize a gate's MP error on the p in {0.05..0.95} grid.

    The sweep is pure in its arguments, so results are memoized; callers
    must treat the returned profile as read-only.
    """
    cfg = MPConfig(gamma=gamma, spline_count=spline_count)
    fn = {"SOFT_AND": soft_and, "SOFT_OR": soft_or}.get(kind)
    if fn is None:
        raise KernelError(f"no grid characterization for cell kind {kind}")
    errs = np.zeros((_GRID.size, _GRID.size))
    for i, pa in enumerate(_GRID):
        ca = ProbabilityCurrent.from_p(pa, gamma)
        for j, pb in enumerate(_GRID):
            cb = ProbabilityCurrent.from_p(pb, gamma)
            ex = fn(ca, cb, cfg, GateMode.EXACT).p
            mp = fn(ca, cb, cfg, GateMode.MP).p
            errs[i, j] = abs(mp - ex)
    return GateErrorProfile(kind=kind, spline_count=spline_count, gamma=gamma,
                            max_error=float(errs.max()), grid=errs)
