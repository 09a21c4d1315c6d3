"""Text formats: BN description files, alist parity matrices, CSV datasets,
and ANN weight files.

All parsers report errors with 1-based line numbers.  Serializers emit a
canonical form so that serialize(parse(text)) is byte-identical for
canonical inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .graph_ir import BayesianNetwork, Dataset, ParityCheckMatrix


def _tokens(text: str):
    """Yield (line_number, token_list) for nonempty, non-comment lines."""
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line.split()


def _parse_prob(tok: str, ln: int) -> float:
    try:
        p = float(tok)
    except ValueError:
        raise FormatError(f"expected a probability, got {tok!r}", line=ln) from None
    if not 0.0 <= p <= 1.0:
        raise FormatError(f"probability {p} outside [0, 1]", line=ln)
    return p


def parse_bn_file(text: str) -> BayesianNetwork:
    """Parse `node`, `edge`, and `cpt` lines into a BayesianNetwork.

    Lines are order-independent.  Parent order of a node is the order its
    incoming `edge` lines appear; `cpt <name> [bits] <p1>` gives
    p(name=1 | parents=bits) with bits indexing parents in that order.
    """
    names: list[str] = []
    declared_at: dict[str, int] = {}
    edges: list[tuple[str, str, int]] = []
    cpt_lines: list[tuple[str, str, float, int]] = []
    for ln, toks in _tokens(text):
        kind = toks[0]
        if kind == "node":
            if len(toks) != 2:
                raise FormatError("expected: node <name>", line=ln)
            if toks[1] in declared_at:
                raise FormatError(f"duplicate node {toks[1]!r} (first declared on "
                                  f"line {declared_at[toks[1]]})", line=ln)
            declared_at[toks[1]] = ln
            names.append(toks[1])
        elif kind == "edge":
            if len(toks) != 3:
                raise FormatError("expected: edge <parent> <child>", line=ln)
            edges.append((toks[1], toks[2], ln))
        elif kind == "cpt":
            if len(toks) == 3:
                name, bits, ptok = toks[1], "", toks[2]
            elif len(toks) == 4:
                name, bits, ptok = toks[1], toks[2], toks[3]
            else:
                raise FormatError("expected: cpt <name> [<parent-bits>] <p1>", line=ln)
            if bits and set(bits) - {"0", "1"}:
                raise FormatError(f"parent bits must be 0/1, got {bits!r}", line=ln)
            cpt_lines.append((name, bits, _parse_prob(ptok, ln), ln))
        else:
            raise FormatError(f"unknown directive {kind!r}", line=ln)
    if not names:
        raise FormatError("no node declarations")

    parents: dict[str, list[str]] = {n: [] for n in names}
    for parent, child, ln in edges:
        for side in (parent, child):
            if side not in declared_at:
                raise FormatError(f"edge references undeclared node {side!r}", line=ln)
        if parent in parents[child]:
            raise FormatError(f"duplicate edge {parent} -> {child}", line=ln)
        parents[child].append(parent)

    cpts = {name: np.full((2,) * (1 + len(parents[name])), np.nan) for name in names}
    for name, bits, p1, ln in cpt_lines:
        if name not in declared_at:
            raise FormatError(f"cpt for undeclared node {name!r}", line=ln)
        if len(bits) != len(parents[name]):
            raise FormatError(f"node {name!r} has {len(parents[name])} parents, "
                              f"got {len(bits)} assignment bits", line=ln)
        idx = tuple(int(b) for b in bits)
        if not np.isnan(cpts[name][(1,) + idx]):
            raise FormatError(f"duplicate cpt entry for {name} {bits or '(root)'}", line=ln)
        cpts[name][(1,) + idx] = p1
        cpts[name][(0,) + idx] = 1.0 - p1
    for name in names:
        if np.isnan(cpts[name]).any():
            raise FormatError(f"node {name!r}: incomplete CPT "
                              f"({int(np.isnan(cpts[name][1]).sum())} missing entries)")
    return BayesianNetwork(names=tuple(names),
                           parents={n: tuple(parents[n]) for n in names},
                           cpts=cpts)


def serialize_bn(bn: BayesianNetwork) -> str:
    """Canonical form: nodes, then edges by child, then cpts in bit order."""
    out = [f"node {n}" for n in bn.names]
    for child in bn.names:
        out.extend(f"edge {p} {child}" for p in bn.parents[child])
    for name in bn.names:
        k = len(bn.parents[name])
        for flat in range(2 ** k):
            bits = format(flat, f"0{k}b") if k else ""
            idx = (1,) + tuple(int(b) for b in bits)
            p1 = repr(float(bn.cpts[name][idx]))
            out.append(f"cpt {name} {bits} {p1}".replace("  ", " "))
    return "\n".join(out) + "\n"


def parse_alist(text: str) -> ParityCheckMatrix:
    """Parse the standard alist format (1-based indices, zero padding)."""
    lines = text.splitlines()
    items: list[tuple[int, list[int]]] = []
    for ln, raw in enumerate(lines, start=1):
        if raw.strip():
            try:
                items.append((ln, [int(t) for t in raw.split()]))
            except ValueError:
                raise FormatError("expected integers", line=ln) from None
    if len(items) < 4:
        raise FormatError("truncated alist: need size, degree, and index sections")
    ln0, head = items[0]
    if len(head) != 2 or head[0] <= 0 or head[1] <= 0:
        raise FormatError("expected: <n-cols> <n-rows>", line=ln0)
    n, m = head
    if len(items) != 4 + n + m:
        raise FormatError(f"expected {4 + n + m} data lines for a {m}x{n} "
                          f"matrix, got {len(items)}")
    col_w = items[2][1]
    row_w = items[3][1]
    if len(col_w) != n:
        raise FormatError(f"expected {n} column weights", line=items[2][0])
    if len(row_w) != m:
        raise FormatError(f"expected {m} row weights", line=items[3][0])
    rows: list[list[int]] = [[] for _ in range(m)]
    for j in range(n):
        ln, entries = items[4 + j]
        entries = [e for e in entries if e != 0]
        if len(entries) != col_w[j]:
            raise FormatError(f"column {j}: expected {col_w[j]} entries, "
                              f"got {len(entries)}", line=ln)
        for e in entries:
            if not 1 <= e <= m:
                raise FormatError(f"row index {e} out of range", line=ln)
            rows[e - 1].append(j)
    for i in range(m):
        ln, entries = items[4 + n + i]
        entries = sorted(e - 1 for e in entries if e != 0)
        if entries != sorted(rows[i]):
            raise FormatError(f"row {i} disagrees with the column lists", line=ln)
        if len(entries) != row_w[i]:
            raise FormatError(f"row {i}: expected {row_w[i]} entries, "
                              f"got {len(entries)}", line=ln)
    return ParityCheckMatrix(n_rows=m, n_cols=n,
                             rows=tuple(tuple(sorted(r)) for r in rows))


def serialize_alist(h: ParityCheckMatrix) -> str:
    """Emit alist text with zero padding to the maximum degree."""
    cols: list[list[int]] = [[] for _ in range(h.n_cols)]
    for i, row in enumerate(h.rows):
        for j in row:
            cols[j].append(i)
    cw, rw = h.col_weights(), h.row_weights()
    mc, mr = max(cw), max(rw)
    out = [f"{h.n_cols} {h.n_rows}", f"{mc} {mr}",
           " ".join(map(str, cw)), " ".join(map(str, rw))]
    for col in cols:
        padded = [i + 1 for i in col] + [0] * (mc - len(col))
        out.append(" ".join(map(str, padded)))
    for row in h.rows:
        padded = [j + 1 for j in row] + [0] * (mr - len(row))
        out.append(" ".join(map(str, padded)))
    return "\n".join(out) + "\n"


def parse_schema(text: str) -> tuple[dict[str, float], str | None]:
    """Sidecar schema: `threshold <col> <value>` lines and one `target <col>`."""
    thresholds: dict[str, float] = {}
    target = None
    for ln, toks in _tokens(text):
        if toks[0] == "threshold" and len(toks) == 3:
            try:
                thresholds[toks[1]] = float(toks[2])
            except ValueError:
                raise FormatError(f"bad threshold value {toks[2]!r}", line=ln) from None
        elif toks[0] == "target" and len(toks) == 2:
            if target is not None:
                raise FormatError("duplicate target declaration", line=ln)
            target = toks[1]
        else:
            raise FormatError(f"unknown schema directive {toks[0]!r}", line=ln)
    return thresholds, target


def parse_csv(text: str, schema: str = "") -> Dataset:
    """Parse a headered CSV into a binary Dataset.

    Cells must be 0/1 unless the schema declares `threshold <col> <v>`,
    in which case numeric cells binarize to 1 when strictly above v.
    """
    thresholds, target = parse_schema(schema)
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise FormatError("empty CSV")
    columns = [c.strip() for c in lines[0].split(",")]
    if len(set(columns)) != len(columns):
        raise FormatError("duplicate column names", line=1)
    for col in thresholds:
        if col not in columns:
            raise FormatError(f"threshold declared for unknown column {col!r}")
    rows = np.zeros((len(lines) - 1, len(columns)), dtype=np.int8)
    for r, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(columns):
            raise FormatError(f"expected {len(columns)} cells, got {len(cells)}", line=r)
        for c, (col, cell) in enumerate(zip(columns, cells)):
            if cell in ("0", "1"):
                rows[r - 2, c] = int(cell)
            elif col in thresholds:
                try:
                    rows[r - 2, c] = 1 if float(cell) > thresholds[col] else 0
                except ValueError:
                    raise FormatError(f"column {col!r}: non-numeric cell {cell!r}",
                                      line=r) from None
            else:
                raise FormatError(f"column {col!r}: cell {cell!r} is not 0/1 and "
                                  f"no threshold is declared", line=r)
    return Dataset(columns=tuple(columns), rows=rows, target=target)


def parse_weights(text: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parse `layer <in> <out>` headers, each followed by <out> rows of
    <in> weights and a trailing bias."""
    layers: list[tuple[np.ndarray, np.ndarray]] = []
    pending: list[list[float]] = []
    dims: tuple[int, int] | None = None
    header_ln = 0

    def close(ln):
        if dims is None:
            return
        if len(pending) != dims[1]:
            raise FormatError(f"layer {dims[0]}x{dims[1]}: expected {dims[1]} "
                              f"rows, got {len(pending)}", line=ln)
        block = np.asarray(pending)
        layers.append((block[:, :-1], block[:, -1]))

    for ln, toks in _tokens(text):
        if toks[0] == "layer":
            if len(toks) != 3:
                raise FormatError("expected: layer <n-in> <n-out>", line=ln)
            close(ln)
            try:
                dims = (int(toks[1]), int(toks[2]))
            except ValueError:
                raise FormatError("layer dims must be integers", line=ln) from None
            pending = []
            header_ln = ln
        else:
            if dims is None:
                raise FormatError("weight row before any layer header", line=ln)
            try:
                vals = [float(t) for t in toks]
            except ValueError:
                raise FormatError("expected numeric weights", line=ln) from None
            if len(vals) != dims[0] + 1:
                raise FormatError(f"expected {dims[0]} weights plus a bias, "
                                  f"got {len(vals)} values", line=ln)
            pending.append(vals)
    close(header_ln)
    if not layers:
        raise FormatError("no layers found")
    for k in range(1, len(layers)):
        if layers[k][0].shape[1] != layers[k - 1][0].shape[0]:
            raise FormatError(f"layer {k}: input width {layers[k][0].shape[1]} does "
                              f"not match previous output {layers[k - 1][0].shape[0]}")
    return layers


def serialize_weights(layers) -> str:
    out = []
    for w, b in layers:
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        out.append(f"layer {w.shape[1]} {w.shape[0]}")
        for row, bias in zip(w, b):
            out.append(" ".join(repr(float(v)) for v in (*row, bias)))
    return "\n".join(out) + "\n"
