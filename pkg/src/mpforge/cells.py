"""Analog standard-cell library: specs, text format, and variant expansion.

A library ships a small closed set of cell kinds; kinds whose transfer
depends on the log-map resolution come in spline-count variants (the subckt
name carries the count, e.g. SOFT_AND_S16). Two kinds scale with fanin and
are expanded on demand rather than enumerated in the file:

  KCL_SUM_<k>     current-summing junction, zero area/power/delay (wiring)
  MP_MAC_<k>_S<s> weighted accumulate with bias; weights are X-line params

The library text format is line oriented: a "version <n>" header, then per
cell a metadata line

  cell <kind> splines <k> area <a> power weak <p> strong <p> delay weak <d>
  strong <d>

immediately followed by the cell's .SUBCKT/.ENDS template block. Metrics are
unitless areas, nanowatts, and microseconds; the weak regime draws less
power and settles slower than the strong regime. Comment lines start with
'#' outside templates and '*' inside them.

The MPFORGE_CELL_LIB environment variable overrides the shipped default
library path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import FormatError, MappingError
from .mp_kernel import Regime, gate_grid_error

# canonical port order per kind; fanin-scaled kinds list their base form
PORT_TABLE = {
    "SOFT_AND": ("a", "b", "o"),
    "SOFT_OR": ("a", "b", "o"),
    "INV": ("a", "o"),
    "KCL_SUM": ("i1", "i2", "o"),
    "MP_NORM": ("num", "den", "o"),
    "MP_MAC": ("x1", "x2", "o"),
    "RELU_CELL": ("a", "o"),
    "CURRENT_SRC": ("o",),
}

# kinds whose transfer uses the spline log map; selection picks their count
SPLINED_KINDS = frozenset({"SOFT_AND", "SOFT_OR", "MP_NORM", "MP_MAC"})

# kinds whose port list grows with operand count
FANIN_SCALED_KINDS = frozenset({"KCL_SUM", "MP_MAC"})


@dataclass(frozen=True)
class CellSpec:
    """One library entry: a concrete subckt with metrics.

    name is the subckt name (kind plus variant suffixes); ports is the
    ordered terminal list matching the template's .SUBCKT line. power and
    delay are keyed by operating regime.
    """

    name: str
    kind: str
    splines: int
    ports: tuple[str, ...]
    area: float
    power: dict[Regime, float]
    delay: dict[Regime, float]
    template: str

    def __post_init__(self):
        if self.kind not in PORT_TABLE:
            raise FormatError(f"unknown cell kind {self.kind!r}")
        if self.splines < 1:
            raise FormatError(f"{self.name}: spline count must be >= 1")
        if self.area < 0:
            raise FormatError(f"{self.name}: negative area")
        for regime in (Regime.WEAK_INVERSION, Regime.STRONG_INVERSION):
            if regime not in self.power or regime not in self.delay:
                raise FormatError(f"{self.name}: missing {regime.value} regime entry")

    def power_in(self, regime: Regime) -> float:
        if regime not in self.power:
            raise MappingError(f"{self.name}: no power entry for regime {regime}")
        return self.power[regime]

    def delay_in(self, regime: Regime) -> float:
        if regime not in self.delay:
            raise MappingError(f"{self.name}: no delay entry for regime {regime}")
        return self.delay[regime]


def _variant_name(kind: str, splines: int) -> str:
    return f"{kind}_S{splines}" if kind in SPLINED_KINDS else kind


def cell_kind(subckt_name: str) -> str:
    """Cell kind encoded in a subckt name (longest known-kind prefix).

    Variant suffixes carry spline counts and fanin (SOFT_AND_S16,
    KCL_SUM_4, MP_MAC_2_S8); the kind is whatever known name prefixes the
    subckt name at an underscore boundary.
    """
    best = None
    for kind in PORT_TABLE:
        if subckt_name == kind or subckt_name.startswith(kind + "_"):
            if best is None or len(kind) > len(best):
                best = kind
    if best is None:
        raise FormatError(f"subckt name {subckt_name!r} matches no cell kind")
    return best


def _stub_template(name: str, ports: tuple[str, ...], note: str) -> str:
    """Behavioral stub body: ground resistor per terminal keeps nodes bound."""
    lines = [f".SUBCKT {name} {' '.join(ports)}", f"* {note}"]
    lines += [f"R{i + 1} {p} 0 1" for i, p in enumerate(ports)]
    lines.append(".ENDS")
    return "\n".join(lines)


@dataclass
class CellLibrary:
    """Cell kind -> spline variants, with on-demand fanin expansion."""

    version: int
    cells: dict[str, tuple[CellSpec, ...]]
    name: str = "default"
    _error_cache: dict[tuple[str, int, float], float] = field(
        default_factory=dict, repr=False)

    def __post_init__(self):
        for kind, variants in self.cells.items():
            counts = [v.splines for v in variants]
            if len(set(counts)) != len(counts):
                raise FormatError(f"duplicate spline variant for {kind}")
            ordered = sorted(variants, key=lambda v: v.splines)
            areas = [v.area for v in ordered]
            if any(a2 <= a1 for a1, a2 in zip(areas, areas[1:])):
                raise FormatError(f"{kind}: area must increase with spline count")
            self.cells[kind] = tuple(ordered)

    def kinds(self) -> tuple[str, ...]:
        return tuple(sorted(self.cells))

    def variants(self, kind: str) -> tuple[CellSpec, ...]:
        if kind not in self.cells:
            raise MappingError(f"cell library has no kind {kind!r}")
        return self.cells[kind]

    def variant(self, kind: str, splines: int) -> CellSpec:
        for spec in self.variants(kind):
            if spec.splines == splines:
                return spec
        raise MappingError(f"no {kind} variant with {splines} splines")

    def grid_error(self, kind: str, splines: int, gamma: float = 1.0) -> float:
        """Max MP-vs-EXACT gate error for the variant, cached per library.

        Spline-free kinds report 0. MP_NORM and MP_MAC share the SOFT_AND
        characterization: one spline count governs the whole log map, and
        the gate grid is the accuracy yardstick budgets are stated in.
        """
        if kind not in SPLINED_KINDS:
            return 0.0
        probe = kind if kind in ("SOFT_AND", "SOFT_OR") else "SOFT_AND"
        key = (probe, splines, gamma)
        if key not in self._error_cache:
            profile = gate_grid_error(probe, splines, gamma)
            self._error_cache[key] = profile.max_error
        return self._error_cache[key]

    def kcl_variant(self, fanin: int) -> CellSpec:
        """Zero-cost junction subckt with the requested operand count."""
        if fanin < 2:
            raise MappingError(f"KCL_SUM needs fanin >= 2, got {fanin}")
        base = self.variants("KCL_SUM")[0]
        name = f"KCL_SUM_{fanin}"
        ports = tuple(f"i{k + 1}" for k in range(fanin)) + ("o",)
        return CellSpec(
            name=name, kind="KCL_SUM", splines=1, ports=ports,
            area=base.area, power=dict(base.power), delay=dict(base.delay),
            template=_stub_template(name, ports, "current-summing junction"))

    def mac_variant(self, fanin: int, splines: int) -> CellSpec:
        """Weighted-accumulate subckt; metrics scale linearly with fanin."""
        if fanin < 1:
            raise MappingError(f"MP_MAC needs fanin >= 1, got {fanin}")
        base = self.variant("MP_MAC", splines)
        name = f"MP_MAC_{fanin}_S{splines}"
        ports = tuple(f"x{k + 1}" for k in range(fanin)) + ("o",)
        return CellSpec(
            name=name, kind="MP_MAC", splines=splines, ports=ports,
            area=base.area * fanin,
            power={r: p * fanin for r, p in base.power.items()},
            delay=dict(base.delay),
            template=_stub_template(
                name, ports, f"{fanin}-input weighted accumulate, "
                f"{splines}-segment log map"))


def parse_cell_library(text: str, name: str = "library") -> CellLibrary:
    lines = text.splitlines()
    version = None
    cells: dict[str, list[CellSpec]] = {}
    i = 0
    while i < len(lines):
        raw = lines[i]
        line = raw.strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "version":
            if version is not None:
                raise FormatError("duplicate version line", line=i)
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise FormatError("expected: version <integer>", line=i)
            version = int(tokens[1])
            continue
        if tokens[0] != "cell":
            raise FormatError(f"expected 'cell' or 'version', got {tokens[0]!r}",
                              line=i)
        spec_line = i
        fields = _parse_cell_line(tokens, spec_line)
        template, ports, i = _parse_template(lines, i, fields["kind"], spec_line)
        spec = CellSpec(
            name=_variant_name(fields["kind"], fields["splines"]),
            kind=fields["kind"], splines=fields["splines"], ports=ports,
            area=fields["area"], power=fields["power"], delay=fields["delay"],
            template=template)
        cells.setdefault(spec.kind, []).append(spec)
    if version is None:
        raise FormatError("missing version line")
    if not cells:
        raise FormatError("library defines no cells")
    return CellLibrary(version=version,
                       cells={k: tuple(v) for k, v in cells.items()},
                       name=name)


def _parse_cell_line(tokens: list[str], line: int) -> dict:
    want = ["cell", None, "splines", None, "area", None, "power", "weak", None,
            "strong", None, "delay", "weak", None, "strong", None]
    if len(tokens) != len(want):
        raise FormatError("malformed cell line; expected 'cell <kind> splines "
                          "<k> area <a> power weak <p> strong <p> delay weak "
                          "<d> strong <d>'", line=line)
    for got, expect in zip(tokens, want):
        if expect is not None and got != expect:
            raise FormatError(f"expected keyword {expect!r}, got {got!r}",
                              line=line)
    kind = tokens[1]
    if kind not in PORT_TABLE:
        raise FormatError(f"unknown cell kind {kind!r}", line=line)
    try:
        splines = int(tokens[3])
        area = float(tokens[5])
        pw, ps = float(tokens[8]), float(tokens[10])
        dw, ds = float(tokens[13]), float(tokens[15])
    except ValueError as exc:
        raise FormatError(f"bad number on cell line: {exc}", line=line)
    if kind != "KCL_SUM":
        if not pw < ps:
            raise FormatError(f"{kind}: weak power must be below strong power",
                              line=line)
        if not dw > ds:
            raise FormatError(f"{kind}: weak delay must exceed strong delay",
                              line=line)
    return {"kind": kind, "splines": splines, "area": area,
            "power": {Regime.WEAK_INVERSION: pw, Regime.STRONG_INVERSION: ps},
            "delay": {Regime.WEAK_INVERSION: dw, Regime.STRONG_INVERSION: ds}}


def _parse_template(lines: list[str], i: int, kind: str,
                    spec_line: int) -> tuple[str, tuple[str, ...], int]:
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i >= len(lines) or not lines[i].strip().upper().startswith(".SUBCKT"):
        raise FormatError(f"cell {kind}: expected .SUBCKT block after cell line",
                          line=spec_line)
    header = lines[i].split()
    if len(header) < 2:
        raise FormatError("malformed .SUBCKT header", line=i + 1)
    ports = tuple(header[2:])
    expected = PORT_TABLE[kind]
    if ports != expected:
        raise FormatError(
            f"cell {kind}: template ports {ports} do not match {expected}",
            line=i + 1)
    block = [lines[i]]
    i += 1
    while i < len(lines):
        block.append(lines[i])
        if lines[i].strip().upper() == ".ENDS":
            return "\n".join(block), ports, i + 1
        i += 1
    raise FormatError(f"cell {kind}: .SUBCKT block missing .ENDS", line=spec_line)


_DEFAULT_LIBRARY: CellLibrary | None = None


def load_cell_library(path: str | os.PathLike) -> CellLibrary:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_cell_library(text, name=os.path.basename(str(path)))


def default_cell_library() -> CellLibrary:
    """The shipped library, or the MPFORGE_CELL_LIB override. Cached."""
    global _DEFAULT_LIBRARY
    override = os.environ.get("MPFORGE_CELL_LIB")
    if override:
        return load_cell_library(override)
    if _DEFAULT_LIBRARY is None:
        from . import data_path
        text = data_path("cells_default.lib").read_text(encoding="utf-8")
        _DEFAULT_LIBRARY = parse_cell_library(text, name="cells_default.lib")
    return _DEFAULT_LIBRARY
