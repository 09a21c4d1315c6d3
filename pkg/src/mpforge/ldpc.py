"""LDPC code construction and decoding experiments.

Code construction: a seeded progressive-edge-growth generator for
(dv,dc)-regular parity-check matrices and circulant protograph lifting.
Decoding experiments: BPSK-over-AWGN Monte-Carlo BER/FER sweeps driven
by the message-passing decoder, plus the Tanner-graph-to-analog-map
circuit builder.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analog_map import AnalogMap, Budget, CellInstance, select_cell
from .cells import CellLibrary, SPLINED_KINDS, default_cell_library
from .errors import GraphError, InfeasibleBudgetError, SimulationError
from .graph_ir import ParityCheckMatrix, parity_to_factor_graph
from .mp_kernel import GateMode, MPConfig
from .sim import SolveConfig, spa_decode_block


def peg_regular(n_bits: int, dv: int, dc: int, seed: int = 0) -> ParityCheckMatrix:
    """(dv,dc)-regular matrix by progressive edge growth.

    Each bit connects one edge at a time to a check at maximal graph
    distance (unreached checks first), preferring low-degree checks and
    never exceeding row weight dc; remaining ties break by seeded draw.
    """
    if n_bits <= 0 or dv <= 0 or dc <= 0:
        raise GraphError("PEG parameters must be positive")
    if (n_bits * dv) % dc:
        raise GraphError(f"{n_bits} bits of degree {dv} cannot fill "
                         f"degree-{dc} checks exactly")
    m = n_bits * dv // dc
    rng = np.random.default_rng(seed)
    check_bits: list[set[int]] = [set() for _ in range(m)]
    bit_checks: list[set[int]] = [set() for _ in range(n_bits)]

    def check_distances(j: int) -> list[float]:
        dist = [np.inf] * m
        seen_bits = {j}
        frontier = {j}
        level = 0
        while frontier:
            level += 1
            checks = {c for b in frontier for c in bit_checks[b]
                      if dist[c] == np.inf}
            for c in checks:
                dist[c] = level
            frontier = {b for c in checks for b in check_bits[c]} - seen_bits
            seen_bits |= frontier
            level += 1
        return dist

    for j in range(n_bits):
        for _ in range(dv):
            dist = check_distances(j)
            pool = [c for c in range(m)
                    if len(check_bits[c]) < dc and c not in bit_checks[j]]
            if not pool:
                raise GraphError("edge growth deadlocked; change the seed")
            far = max(dist[c] for c in pool)
            pool = [c for c in pool if dist[c] == far]
            low = min(len(check_bits[c]) for c in pool)
            pool = [c for c in pool if len(check_bits[c]) == low]
            pick = pool[int(rng.integers(len(pool)))]
            check_bits[pick].add(j)
            bit_checks[j].add(pick)
    return ParityCheckMatrix(
        n_rows=m, n_cols=n_bits,
        rows=tuple(tuple(sorted(s)) for s in check_bits))


@dataclass(frozen=True)
class Protograph:
    """Base matrix to expand by circulant lifting.

    shifts optionally pins the circulant shift of each base edge (keyed
    by (row, col)); unpinned edges draw seeded shifts at lift time.
    """

    base: ParityCheckMatrix
    lift_size: int
    shifts: dict | None = None

    def __post_init__(self):
        if self.lift_size < 1:
            raise GraphError("lift size must be >= 1")
        if self.shifts is not None:
            for (i, j), s in self.shifts.items():
                if j not in self.base.rows[i]:
                    raise GraphError(f"shift pinned for absent edge ({i}, {j})")
                if not 0 <= s < self.lift_size:
                    raise GraphError(f"shift {s} outside [0, {self.lift_size})")


def lift_protograph(p: Protograph, seed: int = 0) -> ParityCheckMatrix:
    """Replace each base edge with a ZxZ circulant permutation block.

    Row and column weights of the base carry over exactly.  Deterministic
    given (base, lift_size, shifts, seed); seeded shifts are drawn in
    row-major edge order.
    """
    z = p.lift_size
    rng = np.random.default_rng(seed)
    rows: list[list[int]] = [[] for _ in range(p.base.n_rows * z)]
    for i, cols in enumerate(p.base.rows):
        for j in cols:
            if p.shifts is not None and (i, j) in p.shifts:
                s = p.shifts[(i, j)]
            else:
                s = int(rng.integers(z))
            for r in range(z):
                rows[i * z + r].append(j * z + (r + s) % z)
    return ParityCheckMatrix(
        n_rows=p.base.n_rows * z, n_cols=p.base.n_cols * z,
        rows=tuple(tuple(sorted(r)) for r in rows))


class _DecoderBuilder:
    """Wires the cyclic message-passing network for one parity-check code.

    One net per directed Tanner edge: q nets carry bit-to-check beliefs,
    r nets carry check-to-bit beliefs, all as P(bit = 1) currents. Check
    nodes fold soft-XOR pairs over the other incoming q rails; bit nodes
    normalize the product of the prior rail and the other incoming r
    rails against the complement product. Complement rails are placed
    once per net and shared.
    """

    def __init__(self, h: ParityCheckMatrix, lib: CellLibrary,
                 budget: Budget, cfg: MPConfig):
        self.h = h
        self.lib = lib
        self.budget = budget
        self.cfg = cfg
        self.instances: list[CellInstance] = []
        self.nets: list[str] = []
        self.used: set[str] = set()
        self.kcl_nets: list[str] = []
        self.subckts: dict = {}
        self.inv_of: dict[str, str] = {}
        self.splines = select_cell("SOFT_AND", budget, lib, cfg.gamma).splines
        self.cols: list[list[int]] = [[] for _ in range(h.n_cols)]
        for i, row in enumerate(h.rows):
            for j in row:
                self.cols[j].append(i)

    def new_net(self, base: str) -> str:
        name = base
        k = 2
        while name in self.used:
            name = f"{base}_{k}"
            k += 1
        self.used.add(name)
        self.nets.append(name)
        return name

    def place(self, kind: str, conns: dict[str, str],
              params: tuple = (), fanin: int | None = None):
        if kind == "KCL_SUM":
            spec = self.lib.kcl_variant(fanin)
        elif kind in SPLINED_KINDS:
            spec = self.lib.variant(kind, self.splines)
        else:
            spec = self.lib.variants(kind)[0]
        self.subckts.setdefault(spec.name, spec)
        self.instances.append(CellInstance(
            id=len(self.instances), cell=spec.name, kind=kind,
            connections=conns, params=params))

    def inv(self, net: str) -> str:
        out = self.inv_of.get(net)
        if out is None:
            out = self.new_net(net + "_b")
            self.place("INV", {"a": net, "o": out})
            self.inv_of[net] = out
        return out

    def chain(self, rails: list[str], out: str):
        """Left-fold SOFT_AND product of >= 2 rails; the tail drives out."""
        acc = rails[0]
        for k, nxt in enumerate(rails[1:]):
            dst = out if k == len(rails) - 2 else self.new_net(f"{out}c{k + 1}")
            self.place("SOFT_AND", {"a": acc, "b": nxt, "o": dst})
            acc = dst

    def normalize(self, rails: list[str], out: str):
        """out = product(rails) over the total mass of both rail products."""
        num = self.new_net(out + "n")
        com = self.new_net(out + "m")
        self.chain(rails, num)
        self.chain([self.inv(r) for r in rails], com)
        den = self.new_net(out + "d")
        self.place("KCL_SUM", {"i1": num, "i2": com, "o": den}, fanin=2)
        self.kcl_nets.append(den)
        self.place("MP_NORM", {"num": num, "den": den, "o": out})

    def xor_pair(self, a: str, b: str, out: str):
        """Soft XOR: out = a(1-b) + (1-a)b, summed at a junction."""
        left = self.new_net(out + "l")
        right = self.new_net(out + "r")
        self.place("SOFT_AND", {"a": a, "b": self.inv(b), "o": left})
        self.place("SOFT_AND", {"a": self.inv(a), "b": b, "o": right})
        self.place("KCL_SUM", {"i1": left, "i2": right, "o": out}, fanin=2)
        self.kcl_nets.append(out)

    def xor_fold(self, rails: list[str], out: str):
        """Left-fold soft XOR of >= 2 rails; the tail drives out."""
        acc = rails[0]
        for k, nxt in enumerate(rails[1:]):
            dst = out if k == len(rails) - 2 else self.new_net(f"{out}s{k + 1}")
            self.xor_pair(acc, nxt, dst)
            acc = dst

    def run(self) -> AnalogMap:
        h = self.h
        inputs: dict[str, str] = {}
        complements: dict[str, str] = {}
        y = []
        for j in range(h.n_cols):
            t = self.new_net(f"in_y{j}")
            c = self.new_net(f"in_y{j}_b")
            inputs[f"y{j}"] = t
            complements[f"y{j}"] = c
            self.inv_of[t] = c
            y.append(t)

        # declare message nets up front so the wiring can be cyclic;
        # degree-1 sides collapse to aliases instead of extra cells
        q: dict[tuple[int, int], str] = {}
        for j in range(h.n_cols):
            for i in self.cols[j]:
                if len(h.rows[i]) < 2:
                    continue  # nothing at the check consumes this message
                q[(j, i)] = y[j] if len(self.cols[j]) == 1 \
                    else self.new_net(f"q{j}_{i}")
        r: dict[tuple[int, int], str] = {}
        folds = []
        for i, row in enumerate(h.rows):
            for j in row:
                others = [q[(jj, i)] for jj in row if jj != j]
                if not others:
                    # a weight-1 check pins its bit to zero
                    net = self.new_net(f"r{i}_{j}")
                    self.place("CURRENT_SRC", {"o": net},
                               params=(("value", 0.0),))
                    r[(i, j)] = net
                elif len(others) == 1:
                    r[(i, j)] = others[0]
                else:
                    net = self.new_net(f"r{i}_{j}")
                    folds.append((others, net))
                    r[(i, j)] = net

        for others, net in folds:
            self.xor_fold(others, net)
        for j in range(h.n_cols):
            checks = self.cols[j]
            if len(checks) > 1:
                for i in checks:
                    if (j, i) not in q:
                        continue
                    rails = [y[j]] + [r[(ii, j)] for ii in checks if ii != i]
                    self.normalize(rails, q[(j, i)])
        outputs: dict[str, str] = {}
        for j in range(h.n_cols):
            out = self.new_net(f"out_bit{j}")
            outputs[f"bit{j}"] = out
            self.normalize([y[j]] + [r[(i, j)] for i in self.cols[j]], out)

        am = AnalogMap(
            instances=tuple(self.instances), nets=tuple(self.nets),
            inputs=inputs, input_complements=complements, outputs=outputs,
            kcl_nets=tuple(self.kcl_nets), subckts=self.subckts,
            cfg=replace(self.cfg, spline_count=self.splines),
            budget=self.budget,
            default_bindings={f"y{j}": 0.5 for j in range(h.n_cols)})
        am.validate()
        area = sum(am.subckts[inst.cell].area for inst in am.instances)
        if area > self.budget.max_area:
            raise InfeasibleBudgetError(
                f"projected area {area} exceeds budget {self.budget.max_area}")
        return am


def build_decoder_map(h: ParityCheckMatrix, lib: CellLibrary | None = None,
                      budget: Budget | None = None,
                      cfg: MPConfig | None = None) -> AnalogMap:
    """Wire a message-passing decoder circuit for a parity-check code.

    Inputs are one rail pair per channel bit: in_y<j> carries P(bit = 1)
    as a probability current and in_y<j>_b its complement. Outputs
    out_bit<j> read the settled bit posteriors. The message wiring is
    cyclic whenever the code has more than one check per bit, so solving
    goes through settle_cyclic (dc_solve routes there). Deterministic:
    equal inputs produce equal maps.
    """
    lib = lib if lib is not None else default_cell_library()
    budget = budget if budget is not None else Budget()
    cfg = cfg if cfg is not None else MPConfig()
    return _DecoderBuilder(h, lib, budget, cfg).run()


@dataclass(frozen=True)
class BerPoint:
    """Error counts and rates for one channel quality point."""

    ebn0_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    ber: float
    fer: float


@dataclass(frozen=True)
class BerResult:
    """One sweep: per-point counts plus the settings that produced them."""

    points: tuple[BerPoint, ...]
    seed: int
    node_mode: GateMode


_CHUNK = 512  # frames decoded per block; counting stays frame-sequential


def ber_sweep(h: ParityCheckMatrix, snr_db_list, max_frames: int = 10000,
              min_frame_errors: int = 0, cfg: SolveConfig | None = None,
              node_mode: GateMode = GateMode.EXACT,
              seed: int = 0) -> BerResult:
    """Monte-Carlo BER/FER sweep, BPSK over AWGN, all-zero codeword.

    Per point, frames run in index order until max_frames, or until
    min_frame_errors frame errors have accumulated (0 disables the early
    stop). Frame k of point p draws its noise from an independent stream
    seeded by (seed, p, k), so results do not depend on decode batching
    and EXACT/MP runs under one seed see identical channels. Noise scale
    follows the design rate: sigma^2 = 1 / (2 R 10^(dB/10)), and channel
    LLRs are 2y / sigma^2.
    """
    snr_db_list = [float(db) for db in snr_db_list]
    if not snr_db_list:
        raise SimulationError("SNR sweep list is empty")
    if not all(np.isfinite(snr_db_list)):
        raise SimulationError("SNR values must be finite")
    if max_frames < 1:
        raise SimulationError(f"max_frames must be >= 1, got {max_frames}")
    if min_frame_errors < 0:
        raise SimulationError("min_frame_errors must be >= 0")
    n = h.n_cols
    rate = (h.n_cols - h.n_rows) / h.n_cols
    if rate <= 0.0:
        raise SimulationError(
            f"design rate {rate:g} is not positive; Eb/N0 scaling is undefined")
    cfg = cfg if cfg is not None else SolveConfig()
    fg = parity_to_factor_graph(h)

    points = []
    for p, db in enumerate(snr_db_list):
        sigma2 = 1.0 / (2.0 * rate * 10.0 ** (db / 10.0))
        sigma = float(np.sqrt(sigma2))
        frames = bit_errors = frame_errors = 0
        while frames < max_frames:
            chunk = min(_CHUNK, max_frames - frames)
            noise = np.stack([
                np.random.default_rng((seed, p, frames + k)).standard_normal(n)
                for k in range(chunk)])
            llrs = 2.0 * (1.0 + sigma * noise) / sigma2
            block = spa_decode_block(fg, llrs, cfg=cfg, node_mode=node_mode)
            errs = block.bits.sum(axis=1)
            bad = errs > 0
            take = chunk
            if min_frame_errors:
                need = min_frame_errors - frame_errors
                hits = np.flatnonzero(np.cumsum(bad) >= need)
                if hits.size:
                    take = int(hits[0]) + 1
            frames += take
            bit_errors += int(errs[:take].sum())
            frame_errors += int(bad[:take].sum())
            if min_frame_errors and frame_errors >= min_frame_errors:
                break
        points.append(BerPoint(
            ebn0_db=db, frames=frames, bit_errors=bit_errors,
            frame_errors=frame_errors, ber=bit_errors / (frames * n),
            fer=frame_errors / frames))
    return BerResult(points=tuple(points), seed=seed, node_mode=node_mode)


BER_CSV_HEADER = "ebn0_db,frames,bit_errors,frame_errors,ber,fer"


def ber_csv(result: BerResult) -> str:
    """Sweep results as CSV text, full-precision rates."""
    lines = [BER_CSV_HEADER]
    for p in result.points:
        lines.append(f"{p.ebn0_db!r},{p.frames},{p.bit_errors},"
                     f"{p.frame_errors},{p.ber!r},{p.fer!r}")
    return "\n".join(lines) + "\n"


def ber_gnuplot(csv_name: str = "ber.csv") -> str:
    """A gnuplot script plotting BER and FER from the emitted CSV."""
    return (
        "set datafile separator \",\"\n"
        "set logscale y\n"
        "set grid\n"
        "set xlabel \"Eb/N0 (dB)\"\n"
        "set ylabel \"error rate\"\n"
        "set key bottom left\n"
        f"plot \"{csv_name}\" using 1:5 with linespoints title \"BER\", \\\n"
        f"     \"{csv_name}\" using 1:6 with linespoints title \"FER\"\n")
