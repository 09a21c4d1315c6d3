"""Factor-graph intermediate representation and its frontends.

A factor graph is a bipartite graph of binary variable nodes and factor
nodes, each factor carrying a table over its scope.  Three frontends
produce the IR: Bayesian networks (one conditional probability table per
variable), LDPC parity-check matrices (one even-parity indicator per
check row), and user-supplied generic tables.

All variables are binary in this version.  The cardinality field exists
so multi-valued support can be added without breaking the IR.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CptError, GraphError


class FactorKind(str, Enum):
    CPT = "cpt"
    PARITY = "parity"
    GENERIC_TABLE = "table"


@dataclass(frozen=True)
class VariableNode:
    id: int
    name: str
    cardinality: int = 2


@dataclass(frozen=True)
class FactorNode:
    """A factor over an ordered scope of variable ids.

    For CPT and GENERIC_TABLE kinds ``table`` has one axis per scope
    entry, in scope order; CPT scope order is (node, parents...) and the
    table sums to 1 over axis 0 for every parent assignment.  PARITY
    factors carry no table: they are even-parity indicators.
    """

    id: int
    kind: FactorKind
    scope: tuple[int, ...]
    table: np.ndarray | None = None
    name: str = ""

    def value(self, assignment: tuple[int, ...]) -> float:
        if len(assignment) != len(self.scope):
            raise GraphError(
                f"factor {self.name or self.id}: assignment arity "
                f"{len(assignment)} does not match scope {len(self.scope)}")
        if self.kind is FactorKind.PARITY:
            return 1.0 if sum(assignment) % 2 == 0 else 0.0
        return float(self.table[assignment])


@dataclass
class FactorGraph:
    variables: list[VariableNode]
    factors: list[FactorNode]
    normalization: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        names = set()
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise GraphError(f"variable ids must be dense from 0, got {v.id} at {i}")
            if v.name in names:
                raise GraphError(f"duplicate variable name {v.name!r}")
            names.add(v.name)
            if v.cardinality != 2:
                raise GraphError(f"variable {v.name!r}: only binary variables supported")
        n = len(self.variables)
        for i, f in enumerate(self.factors):
            who = f.name or f"factor {f.id}"
            if f.id != i:
                raise GraphError(f"factor ids must be dense from 0, got {f.id} at {i}")
            if len(set(f.scope)) != len(f.scope):
                raise GraphError(f"{who}: repeated variable in scope")
            for vid in f.scope:
                if not 0 <= vid < n:
                    raise GraphError(f"{who}: scope references unknown variable {vid}")
            if f.kind is FactorKind.PARITY:
                if f.table is not None:
                    raise GraphError(f"{who}: parity factors carry no table")
                continue
            if f.table is None:
                raise GraphError(f"{who}: missing table")
            if f.table.shape != (2,) * len(f.scope):
                raise GraphError(f"{who}: table shape {f.table.shape} does not "
                                 f"match scope of {len(f.scope)} binary variables")
            if np.any(f.table < -1e-12) or np.any(f.table > 1 + 1e-12):
                raise GraphError(f"{who}: table entries outside [0, 1]")
            if f.kind is FactorKind.CPT:
                sums = f.table.sum(axis=0)
                if not np.allclose(sums, 1.0, atol=1e-9):
                    raise CptError(f"{who}: rows do not sum to 1 (max deviation "
                                   f"{float(np.abs(sums - 1.0).max()):.3g})")
        if not np.isfinite(self.normalization) or self.normalization <= 0:
            raise GraphError("normalization must be a positive real")

    @property
    def edges(self) -> list[tuple[int, int]]:
        """(variable id, factor id) pairs, derived from factor scopes."""
        return [(vid, f.id) for f in self.factors for vid in f.scope]

    def variable_named(self, name: str) -> VariableNode:
        for v in self.variables:
            if v.name == name:
                return v
        raise GraphError(f"no variable named {name!r}")

    def factors_touching(self, vid: int) -> list[FactorNode]:
        return [f for f in self.factors if vid in f.scope]

    def variable_degrees(self) -> list[int]:
        deg = [0] * len(self.variables)
        for vid, _ in self.edges:
            deg[vid] += 1
        return deg

    def factor_degrees(self) -> list[int]:
        return [len(f.scope) for f in self.factors]


@dataclass
class BayesianNetwork:
    """Directed acyclic graph over named binary variables with CPTs.

    ``parents`` maps each name to its parent names in declared order;
    ``cpts[name]`` has shape (2,) * (1 + n_parents) with axis 0 indexing
    the node's own value and the remaining axes its parents in order.
    """

    names: tuple[str, ...]
    parents: dict[str, tuple[str, ...]] = field(default_factory=dict)
    cpts: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.parents = {n: tuple(self.parents.get(n, ())) for n in self.names}
        self.validate()

    def validate(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise GraphError("duplicate node names")
        for name, ps in self.parents.items():
            if name not in self.names:
                raise GraphError(f"parents declared for unknown node {name!r}")
            for p in ps:
                if p not in self.names:
                    raise GraphError(f"node {name!r}: unknown parent {p!r}")
            if len(set(ps)) != len(ps):
                raise GraphError(f"node {name!r}: repeated parent")
        self.topological_order()
        for name in self.names:
            if name not in self.cpts:
                raise CptError(f"node {name!r}: missing CPT")
            want = (2,) * (1 + len(self.parents[name]))
            table = np.asarray(self.cpts[name], dtype=float)
            if table.shape != want:
                raise CptError(f"node {name!r}: CPT shape {table.shape}, expected {want}")
            if np.any(table < -1e-12) or np.any(table > 1 + 1e-12):
                raise CptError(f"node {name!r}: CPT entries outside [0, 1]")
            if not np.allclose(table.sum(axis=0), 1.0, atol=1e-9):
                raise CptError(f"node {name!r}: CPT rows do not sum to 1")
            self.cpts[name] = table

    def topological_order(self) -> list[str]:
        """Parents-before-children order; raises on a cycle."""
        remaining = {n: set(self.parents[n]) for n in self.names}
        order = []
        while remaining:
            ready = [n for n in self.names if n in remaining and not remaining[n]]
            if not ready:
                raise GraphError("cycle detected among " + ", ".join(sorted(remaining)))
            for n in ready:
                order.append(n)
                del remaining[n]
            for deps in remaining.values():
                deps.difference_update(ready)
        return order

    def joint_probability(self, assignment: dict[str, int]) -> float:
        """Chain-rule joint of a full assignment."""
        p = 1.0
        for name in self.names:
            idx = (assignment[name],) + tuple(assignment[q] for q in self.parents[name])
            p *= float(self.cpts[name][idx])
        return p

    def sample(self, n_rows: int, rng: np.random.Generator) -> "Dataset":
        """Ancestral sampling in topological order."""
        order = self.topological_order()
        cols = {name: np.zeros(n_rows, dtype=np.int8) for name in self.names}
        for name in order:
            ps = self.parents[name]
            p1 = self.cpts[name][(1,) + tuple(cols[q] for q in ps)]
            cols[name] = (rng.random(n_rows) < p1).astype(np.int8)
        rows = np.column_stack([cols[name] for name in self.names])
        return Dataset(columns=self.names, rows=rows)


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse binary matrix as per-row sorted column index lists."""

    n_rows: int
    n_cols: int
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise GraphError("parity-check matrix must be nonempty")
        if len(self.rows) != self.n_rows:
            raise GraphError(f"expected {self.n_rows} rows, got {len(self.rows)}")
        seen_cols = set()
        for i, row in enumerate(self.rows):
            if not row:
                raise GraphError(f"row {i} is all-zero")
            if list(row) != sorted(set(row)):
                raise GraphError(f"row {i}: column indices must be sorted and unique")
            if row[0] < 0 or row[-1] >= self.n_cols:
                raise GraphError(f"row {i}: column index out of range")
            seen_cols.update(row)
        missing = set(range(self.n_cols)) - seen_cols
        if missing:
            raise GraphError(f"all-zero columns: {sorted(missing)}")

    @classmethod
    def from_dense(cls, h) -> "ParityCheckMatrix":
        h = np.asarray(h)
        rows = tuple(tuple(int(j) for j in np.flatnonzero(r)) for r in h)
        return cls(n_rows=h.shape[0], n_cols=h.shape[1], rows=rows)

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.n_rows, self.n_cols), dtype=np.int8)
        for i, row in enumerate(self.rows):
            h[i, list(row)] = 1
        return h

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def row_weights(self) -> list[int]:
        return [len(r) for r in self.rows]

    def col_weights(self) -> list[int]:
        w = [0] * self.n_cols
        for row in self.rows:
            for j in row:
                w[j] += 1
        return w


@dataclass
class Dataset:
    """Rows of binarized values over named columns."""

    columns: tuple[str, ...]
    rows: np.ndarray
    target: str | None = None

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.rows = np.asarray(self.rows, dtype=np.int8)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise GraphError("row width does not match column count")
        if self.rows.size and not np.isin(self.rows, (0, 1)).all():
            raise GraphError("dataset cells must be 0 or 1")
        if self.target is not None and self.target not in self.columns:
            raise GraphError(f"target column {self.target!r} not in dataset")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise GraphError(f"no column named {name!r}")
        return self.rows[:, self.columns.index(name)]


def bn_to_factor_graph(bn: BayesianNetwork) -> FactorGraph:
    """One CPT factor per variable; scope = (node, parents...); Z = 1."""
    index = {name: i for i, name in enumerate(bn.names)}
    variables = [VariableNode(id=i, name=name) for i, name in enumerate(bn.names)]
    factors = []
    for i, name in enumerate(bn.names):
        ps = bn.parents[name]
        label = f"p({name})" if not ps else f"p({name}|{','.join(ps)})"
        factors.append(FactorNode(
            id=i, kind=FactorKind.CPT,
            scope=(index[name],) + tuple(index[q] for q in ps),
            table=bn.cpts[name], name=label))
    return FactorGraph(variables=variables, factors=factors, normalization=1.0)


def parity_to_factor_graph(h: ParityCheckMatrix) -> FactorGraph:
    """n bit variables, one PARITY factor per check row."""
    variables = [VariableNode(id=j, name=f"x{j}") for j in range(h.n_cols)]
    factors = [FactorNode(id=i, kind=FactorKind.PARITY, scope=row, name=f"c{i}")
               for i, row in enumerate(h.rows)]
    return FactorGraph(variables=variables, factors=factors, normalization=1.0)


def learn_cpts(structure: dict[str, tuple[str, ...]], data: Dataset,
               alpha: float = 1.0) -> BayesianNetwork:
    """Fit CPTs by smoothed counting: (count + alpha) / (total + 2 alpha)."""
    if alpha < 0:
        raise CptError("smoothing pseudocount must be nonnegative")
    names = tuple(structure)
    for name in names:
        if name not in data.columns:
            raise CptError(f"node {name!r} is not a dataset column")
        for p in structure[name]:
            if p not in data.columns:
                raise CptError(f"node {name!r}: parent {p!r} is not a dataset column")
    cpts = {}
    for name in names:
        ps = tuple(structure[name])
        x = data.column(name)
        table = np.zeros((2,) * (1 + len(ps)))
        for bits in itertools.product((0, 1), repeat=len(ps)):
            mask = np.ones(len(data), dtype=bool)
            for p, b in zip(ps, bits):
                mask &= data.column(p) == b
            total = int(mask.sum())
            ones = int(x[mask].sum())
            if total == 0 and alpha == 0:
                raise CptError(f"node {name!r}: no rows for parent assignment "
                               f"{bits} and no smoothing")
            p1 = (ones + alpha) / (total + 2 * alpha)
            table[(1,) + bits] = p1
            table[(0,) + bits] = 1.0 - p1
        cpts[name] = table
    return BayesianNetwork(names=names, parents=dict(structure), cpts=cpts)
