"""Stage 2: lower a factor graph plus a query into an arithmetic DAG.

Elimination emits a ComputeGraph over the model's probability entries.
Only p(X=1|parents) entries become INPUT nodes; the complementary
entries are SUB nodes of the same input, which is what lets the
complement-fusion rewrite (a*b + a*(1-b) -> a) fire during
simplification.  Three outputs are produced for a query: the
unnormalized query=1 rail ``p1``, the evidence mass ``p_evidence``,
and ``posterior`` = NORM(p1, p_evidence).

Two elimination strategies exist: "naive" enumerates all hidden
variables jointly at the final stage (no intermediate marginalization)
with hash-consed shared product prefixes, and "auto" runs min-degree
variable elimination.  An explicit order (variable ids of the input
graph) runs textbook elimination in that order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce

import numpy as np

from .errors import (DegenerateEvidenceError, EliminationError, GraphError,
                     UnboundInputError)
from .graph_ir import FactorGraph, FactorKind, FactorNode, VariableNode

# Enumeration guards: naive elimination materializes 2^h product terms,
# and the brute-force oracle walks the full assignment space.
_NAIVE_HIDDEN_LIMIT = 20
_BRUTE_FORCE_LIMIT = 24
_FLATTEN_CAP = 4096


class Op(str, Enum):
    INPUT = "INPUT"
    CONST = "CONST"
    MUL = "MUL"
    ADD = "ADD"
    SUB = "SUB"
    MAX = "MAX"
    RELU = "RELU"
    NORM = "NORM"


@dataclass(frozen=True)
class ComputeNode:
    id: int
    op: Op
    operands: tuple[int, ...] = ()
    const_value: float | None = None
    label: str = ""


@dataclass
class ComputeGraph:
    """Arithmetic DAG in topological order (operands precede users)."""

    nodes: list[ComputeNode]
    inputs: dict[str, int]
    outputs: dict[str, int]
    default_bindings: dict[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise GraphError(f"node ids must be dense from 0, got {n.id} at {i}")
            for o in n.operands:
                if not 0 <= o < i:
                    raise GraphError(f"node {i}: operand {o} not topologically earlier")
            arity = len(n.operands)
            if n.op in (Op.INPUT, Op.CONST) and arity:
                raise GraphError(f"node {i}: {n.op.value} takes no operands")
            if n.op in (Op.MUL, Op.ADD, Op.MAX) and arity < 2:
                raise GraphError(f"node {i}: {n.op.value} needs arity >= 2")
            if n.op in (Op.SUB, Op.RELU) and arity != 1:
                raise GraphError(f"node {i}: {n.op.value} needs arity 1")
            if n.op is Op.NORM and arity != 2:
                raise GraphError(f"node {i}: NORM needs (numerator, denominator)")
            if n.op is Op.CONST and n.const_value is None:
                raise GraphError(f"node {i}: CONST without a value")
        for name, i in {**self.inputs, **self.outputs}.items():
            if not 0 <= i < len(self.nodes):
                raise GraphError(f"{name!r} references unknown node {i}")
        for name, i in self.inputs.items():
            if self.nodes[i].op is not Op.INPUT:
                raise GraphError(f"input {name!r} does not point at an INPUT node")

    @property
    def stats(self) -> dict[str, int]:
        ops = [n.op for n in self.nodes]
        return {"mul_count": ops.count(Op.MUL), "add_count": ops.count(Op.ADD)}

    def node(self, i: int) -> ComputeNode:
        return self.nodes[i]


class GraphBuilder:
    """Hash-consing builder: structurally equal nodes share one id.

    MUL and ADD operands are canonicalized by sorting, constants fold
    at construction (x*1 -> x, x*0 -> 0, x+0 -> x, SUB(SUB(x)) -> x),
    and finish() drops nodes unreachable from the outputs.
    """

    def __init__(self):
        self.nodes: list[ComputeNode] = []
        self._memo: dict[tuple, int] = {}
        self._inputs: dict[str, int] = {}
        self._bindings: dict[str, float] = {}

    def _intern(self, key, op, operands=(), const_value=None, label="") -> int:
        nid = self._memo.get(key)
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(ComputeNode(nid, op, tuple(operands), const_value, label))
            self._memo[key] = nid
        return nid

    def _const_of(self, nid: int) -> float | None:
        n = self.nodes[nid]
        return n.const_value if n.op is Op.CONST else None

    def input(self, name: str, value: float | None = None) -> int:
        nid = self._intern(("in", name), Op.INPUT, label=name)
        self._inputs[name] = nid
        if value is not None:
            self._bindings[name] = float(value)
        return nid

    def const(self, v: float) -> int:
        v = float(v)
        return self._intern(("const", v), Op.CONST, const_value=v, label=repr(v))

    def sub(self, x: int) -> int:
        c = self._const_of(x)
        if c is not None:
            return self.const(1.0 - c)
        if self.nodes[x].op is Op.SUB:
            return self.nodes[x].operands[0]
        return self._intern(("sub", x), Op.SUB, (x,))

    def mul2(self, a: int, b: int) -> int:
        ca, cb = self._const_of(a), self._const_of(b)
        if ca is not None and cb is not None:
            return self.const(ca * cb)
        for c, other in ((ca, b), (cb, a)):
            if c == 1.0:
                return other
            if c == 0.0:
                return self.const(0.0)
        ops = tuple(sorted((a, b)))
        return self._intern(("mul",) + ops, Op.MUL, ops)

    def mul_chain(self, ids) -> int:
        """Left-fold binary product; empty product is CONST 1."""
        out = None
        for i in ids:
            out = i if out is None else self.mul2(out, i)
        return self.const(1.0) if out is None else out

    def add(self, ids) -> int:
        acc = 0.0
        parts = []
        for i in ids:
            c = self._const_of(i)
            if c is None:
                parts.append(i)
            else:
                acc += c
        if acc != 0.0 or not parts:
            parts.append(self.const(acc))
        if len(parts) == 1:
            return parts[0]
        ops = tuple(sorted(parts))
        return self._intern(("add",) + ops, Op.ADD, ops)

    def max_(self, ids) -> int:
        consts = [self._const_of(i) for i in ids]
        if all(c is not None for c in consts):
            return self.const(max(consts))
        ops = tuple(sorted(ids))
        if len(ops) == 1:
            return ops[0]
        return self._intern(("max",) + ops, Op.MAX, ops)

    def relu(self, x: int) -> int:
        c = self._const_of(x)
        if c is not None:
            return self.const(max(0.0, c))
        return self._intern(("relu", x), Op.RELU, (x,))

    def norm(self, num: int, den: int) -> int:
        # never folded: the read-out stage owns ratio semantics
        return self._intern(("norm", num, den), Op.NORM, (num, den))

    def finish(self, outputs: dict[str, int], notes=()) -> ComputeGraph:
        live = set()
        stack = sorted(set(outputs.values()))
        while stack:
            i = stack.pop()
            if i not in live:
                live.add(i)
                stack.extend(self.nodes[i].operands)
        remap = {old: new for new, old in enumerate(sorted(live))}
        nodes = [ComputeNode(remap[n.id], n.op,
                             tuple(remap[o] for o in n.operands),
                             n.const_value, n.label)
                 for n in self.nodes if n.id in live]
        inputs = {k: remap[v] for k, v in self._inputs.items() if v in live}
        bindings = {k: v for k, v in self._bindings.items() if k in inputs}
        return ComputeGraph(nodes=nodes, inputs=inputs,
                            outputs={k: remap[v] for k, v in outputs.items()},
                            default_bindings=bindings, notes=tuple(notes))


@dataclass
class PruneReport:
    """relevant_subgraph result: the pruned graph plus what was removed."""

    graph: FactorGraph
    id_map: dict[int, int]
    dropped_variables: tuple[str, ...]
    dropped_factors: tuple[str, ...]


def _check_query_evidence(fg: FactorGraph, query: int, evidence: dict[int, int]):
    n = len(fg.variables)
    if not 0 <= query < n:
        raise GraphError(f"query variable {query} does not exist")
    for v, val in evidence.items():
        if not 0 <= v < n:
            raise GraphError(f"evidence variable {v} does not exist")
        if val not in (0, 1):
            raise GraphError(f"evidence value for variable {v} must be 0 or 1")
    if query in evidence:
        raise GraphError(f"query variable {fg.variables[query].name!r} "
                         "is part of the evidence")


def relevant_subgraph(fg: FactorGraph, query: int,
                      evidence: dict[int, int] | None = None) -> PruneReport:
    """Drop barren leaves and components disconnected from the query.

    A barren variable is a non-query, non-evidence variable appearing in
    exactly one factor that marginalizes to 1 over it (a CPT with the
    variable as child, or a parity indicator); the factor goes with it.
    Surviving variables and factors are renumbered densely in original
    id order; id_map maps old variable ids to new ones.
    """
    evidence = dict(evidence or {})
    _check_query_evidence(fg, query, evidence)
    anchored = {query} | set(evidence)
    keep_v = set(range(len(fg.variables)))
    keep_f = {f.id for f in fg.factors}

    def touching(v):
        return [f for f in fg.factors if f.id in keep_f and v in f.scope]

    changed = True
    while changed:
        changed = False
        for v in sorted(keep_v - anchored):
            t = touching(v)
            if not t:
                keep_v.discard(v)
                changed = True
            elif len(t) == 1:
                f = t[0]
                summable = (f.kind is FactorKind.PARITY or
                            (f.kind is FactorKind.CPT and f.scope[0] == v))
                if summable:
                    keep_v.discard(v)
                    keep_f.discard(f.id)
                    changed = True

    # restrict to the query's connected component
    component = {query}
    frontier = [query]
    while frontier:
        v = frontier.pop()
        for f in touching(v):
            for u in f.scope:
                if u in keep_v and u not in component:
                    component.add(u)
                    frontier.append(u)
    keep_f = {f.id for f in fg.factors
              if f.id in keep_f and all(v in component for v in f.scope)}
    dropped_v = tuple(fg.variables[v].name for v in sorted(set(range(len(fg.variables))) - component))
    dropped_f = tuple((f.name or f"factor {f.id}") for f in fg.factors if f.id not in keep_f)

    id_map = {old: new for new, old in enumerate(sorted(component))}
    variables = [VariableNode(id=id_map[v], name=fg.variables[v].name)
                 for v in sorted(component)]
    factors = []
    for f in fg.factors:
        if f.id in keep_f:
            factors.append(FactorNode(
                id=len(factors), kind=f.kind,
                scope=tuple(id_map[v] for v in f.scope),
                table=f.table, name=f.name))
    graph = FactorGraph(variables=variables, factors=factors,
                        normalization=fg.normalization)
    return PruneReport(graph=graph, id_map=id_map,
                       dropped_variables=dropped_v, dropped_factors=dropped_f)


class _Cells:
    """Lazy view of one factor's table with evidence variables fixed.

    cell() materializes the value node for an assignment of the free
    scope: INPUTs named after p(X=1|parent assignment) for CPTs (with
    SUB for the complement entry), one INPUT per entry for generic
    tables, and CONST 0/1 for parity indicators.
    """

    def __init__(self, builder: GraphBuilder, factor: FactorNode,
                 var_names: list[str], fixed: dict[int, int]):
        self.b = builder
        self.f = factor
        self.names = var_names
        self.fixed = {v: fixed[v] for v in factor.scope if v in fixed}
        self.free = tuple(v for v in factor.scope if v not in fixed)

    def scalar_value(self) -> float:
        """Value when evidence fixes the whole scope."""
        ass = tuple(self.fixed[v] for v in self.f.scope)
        return self.f.value(ass)

    def cell(self, assignment: dict[int, int]) -> int:
        ass = tuple(self.fixed.get(v, assignment.get(v)) for v in self.f.scope)
        if any(a is None for a in ass):
            raise EliminationError(f"factor {self.f.name}: unassigned scope variable")
        if self.f.kind is FactorKind.PARITY:
            return self.b.const(1.0 if sum(ass) % 2 == 0 else 0.0)
        if self.f.kind is FactorKind.CPT:
            child = self.names[self.f.scope[0]]
            cond = ",".join(f"{self.names[v]}={a}"
                            for v, a in zip(self.f.scope[1:], ass[1:]))
            name = f"p({child}=1|{cond})" if cond else f"p({child}=1)"
            nid = self.b.input(name, float(self.f.table[(1,) + ass[1:]]))
            return nid if ass[0] == 1 else self.b.sub(nid)
        bits = "".join(str(a) for a in ass)
        label = self.f.name or f"f{self.f.id}"
        return self.b.input(f"{label}[{bits}]", float(self.f.table[ass]))


def _prepare(fg: FactorGraph, query: int, evidence: dict[int, int]):
    """Prune, remap query/evidence, slice evidence, split off constants."""
    report = relevant_subgraph(fg, query, evidence)
    g = report.graph
    q = report.id_map[query]
    ev = {report.id_map[v]: val for v, val in evidence.items() if v in report.id_map}
    names = [v.name for v in g.variables]
    builder = GraphBuilder()
    cells, notes = [], []
    for f in g.factors:
        c = _Cells(builder, f, names, ev)
        if not c.free:
            val = c.scalar_value()
            if val == 0.0:
                raise DegenerateEvidenceError(
                    f"evidence has zero probability under factor {f.name or f.id}")
            notes.append(f"dropped evidence-fixed factor {f.name or f.id} "
                         f"(constant {val!r} cancels in normalization)")
            continue
        cells.append(c)
    notes.extend(f"pruned variable {n}" for n in report.dropped_variables)
    notes.extend(f"pruned factor {n}" for n in report.dropped_factors)
    if not any(q in c.free for c in cells):
        raise EliminationError(
            f"query variable {fg.variables[query].name!r} is disconnected "
            "from every factor after pruning")
    hidden = sorted({v for c in cells for v in c.free} - {q})
    return builder, cells, q, ev, hidden, notes, report


def _finish_rails(builder: GraphBuilder, num: int, den: int, notes) -> ComputeGraph:
    posterior = builder.norm(num, den)
    return builder.finish({"p1": num, "p_evidence": den, "posterior": posterior},
                          notes=notes)


def _eliminate_naive(builder, cells, q, hidden, notes) -> ComputeGraph:
    if len(hidden) > _NAIVE_HIDDEN_LIMIT:
        raise EliminationError(
            f"naive enumeration over {len(hidden)} hidden variables exceeds "
            f"2^{_NAIVE_HIDDEN_LIMIT}; use order='auto'")
    own = [c for c in cells if q in c.free]
    # the evidence-mass rail may drop the query's own CPT (its rows sum
    # to 1) only when no other factor mentions the query
    drop_own = (len(own) == 1 and own[0].f.kind is FactorKind.CPT
                and own[0].f.scope[0] == q)
    rest = [c for c in cells if not own or c is not own[0]]
    num_terms, den_terms = [], []
    for bits in itertools.product((0, 1), repeat=len(hidden)):
        ass = dict(zip(hidden, bits))
        if drop_own:
            prefix = builder.mul_chain(c.cell(ass) for c in rest)
            ass[q] = 1
            num_terms.append(builder.mul_chain([prefix, own[0].cell(ass)]))
            den_terms.append(prefix)
        else:
            for qv in (1, 0):
                ass[q] = qv
                term = builder.mul_chain(c.cell(ass) for c in cells)
                den_terms.append(term)
                if qv == 1:
                    num_terms.append(term)
    return _finish_rails(builder, builder.add(num_terms), builder.add(den_terms), notes)


def _eliminate_ve(builder, cells, q, hidden, order, notes) -> ComputeGraph:
    """Textbook variable elimination over symbolic tables of node ids."""

    def materialize(c: _Cells):
        scope = tuple(sorted(c.free))
        arr = np.empty((2,) * len(scope), dtype=object)
        for bits in itertools.product((0, 1), repeat=len(scope)):
            arr[bits] = c.cell(dict(zip(scope, bits)))
        return scope, arr

    def combine(tables):
        scope = tuple(sorted({v for s, _ in tables for v in s}))
        arr = np.empty((2,) * len(scope), dtype=object)
        for bits in itertools.product((0, 1), repeat=len(scope)):
            ass = dict(zip(scope, bits))
            arr[bits] = builder.mul_chain(
                a[tuple(ass[v] for v in s)] for s, a in tables)
        return scope, arr

    def sum_out(scope, arr, v):
        axis = scope.index(v)
        lo = np.moveaxis(arr, axis, 0)
        out_scope = scope[:axis] + scope[axis + 1:]
        out = np.empty((2,) * len(out_scope), dtype=object)
        for bits in itertools.product((0, 1), repeat=len(out_scope)):
            out[bits] = builder.add([lo[(0,) + bits], lo[(1,) + bits]])
        return out_scope, out

    tables = [materialize(c) for c in cells]
    remaining = list(hidden)
    while remaining:
        if order == "auto":
            # min-degree: fewest distinct neighbors, lowest id breaks ties
            def degree(v):
                nbrs = {u for s, _ in tables if v in s for u in s} - {v}
                return (len(nbrs), v)
            v = min(remaining, key=degree)
        else:
            v = order[len(hidden) - len(remaining)]
        remaining.remove(v)
        group = [t for t in tables if v in t[0]]
        tables = [t for t in tables if v not in t[0]]
        scope, arr = combine(group)
        tables.append(sum_out(scope, arr, v))
    scope, final = combine(tables)
    if scope != (q,):
        raise EliminationError("elimination did not reduce to the query variable")
    num, p0 = final[(1,)], final[(0,)]
    return _finish_rails(builder, num, builder.add([p0, num]), notes)


def eliminate(fg: FactorGraph, query: int, evidence: dict[int, int] | None = None,
              order="naive") -> ComputeGraph:
    """Lower a marginal query to a ComputeGraph.

    order: "naive" (joint enumeration of hidden variables, default),
    "auto" (min-degree elimination), or an explicit list of variable ids
    of ``fg`` covering exactly the hidden relevant variables.
    """
    evidence = dict(evidence or {})
    builder, cells, q, ev, hidden, notes, report = _prepare(fg, query, evidence)
    if isinstance(order, str):
        if order == "naive":
            return _eliminate_naive(builder, cells, q, hidden, notes)
        if order == "auto":
            return _eliminate_ve(builder, cells, q, hidden, "auto", notes)
        raise EliminationError(f"unknown elimination order {order!r}")
    mapped = []
    for v in order:
        if v in report.id_map:
            mapped.append(report.id_map[v])
        else:
            raise EliminationError(
                f"order names variable {v}, which is not relevant to the query")
    if sorted(mapped) != hidden:
        raise EliminationError(
            "order must cover exactly the hidden relevant variables "
            f"(expected {len(hidden)}, got {len(mapped)})")
    return _eliminate_ve(builder, cells, q, hidden, mapped, notes)


# -- simplification ----------------------------------------------------------

ALL_RULES = frozenset({"fold", "fuse", "dce"})


def _mul_factors(nodes, t, out):
    n = nodes[t]
    if n.op is Op.MUL:
        for o in n.operands:
            _mul_factors(nodes, o, out)
    else:
        out.append(t)


def _flatten_add(nodes, t, out):
    n = nodes[t]
    if n.op is Op.ADD and len(out) < _FLATTEN_CAP:
        for o in n.operands:
            _flatten_add(nodes, o, out)
    else:
        out.append(t)


def _try_fuse(builder: GraphBuilder, operands: list[int]) -> int | None:
    """Complement fusion over the flattened term list of an ADD.

    Finds term pairs whose product factor multisets differ only in one
    slot holding x in one term and SUB(x) in the other, and replaces the
    pair by the product of the shared factors.  Returns the rebuilt node
    id, or None when nothing fused (the caller keeps the original
    structure; flattening alone is never committed).
    """
    nodes = builder.nodes
    terms: list[int] = []
    for t in operands:
        _flatten_add(nodes, t, terms)
    fused_any = False
    while True:
        facts = []
        for t in terms:
            fl: list[int] = []
            _mul_factors(nodes, t, fl)
            facts.append(sorted(fl))
        hit = None
        for i in range(len(terms)):
            for j in range(i + 1, len(terms)):
                a = list(facts[i])
                b = list(facts[j])
                for x in list(a):
                    if x in b:
                        a.remove(x)
                        b.remove(x)
                if len(a) == 1 and len(b) == 1:
                    x, y = a[0], b[0]
                    complement = (
                        (nodes[y].op is Op.SUB and nodes[y].operands[0] == x)
                        or (nodes[x].op is Op.SUB and nodes[x].operands[0] == y))
                    if complement:
                        # drop side i's differing factor; the rest is shared
                        hit = (i, j, x)
                if hit:
                    break
            if hit:
                break
        if hit is None:
            break
        i, j, x = hit
        shared = list(facts[i])
        shared.remove(x)
        fused = builder.mul_chain(shared)
        terms = [t for k, t in enumerate(terms) if k not in (i, j)]
        new_terms: list[int] = []
        _flatten_add(nodes, fused, new_terms)
        terms.extend(new_terms)
        fused_any = True
    if not fused_any:
        return None
    return builder.add(terms)


def _rebuild(cg: ComputeGraph, rules: frozenset) -> ComputeGraph:
    b = GraphBuilder()
    m: dict[int, int] = {}
    for n in cg.nodes:
        ops = [m[o] for o in n.operands]
        if n.op is Op.INPUT:
            m[n.id] = b.input(n.label, cg.default_bindings.get(n.label))
        elif n.op is Op.CONST:
            m[n.id] = b.const(n.const_value)
        elif n.op is Op.SUB:
            m[n.id] = b.sub(ops[0])
        elif n.op is Op.MUL:
            m[n.id] = b.mul_chain(ops)
        elif n.op is Op.ADD:
            fused = _try_fuse(b, ops) if "fuse" in rules else None
            m[n.id] = b.add(ops) if fused is None else fused
        elif n.op is Op.MAX:
            m[n.id] = b.max_(ops)
        elif n.op is Op.RELU:
            m[n.id] = b.relu(ops[0])
        elif n.op is Op.NORM:
            m[n.id] = b.norm(ops[0], ops[1])
    outputs = {k: m[v] for k, v in cg.outputs.items()}
    return b.finish(outputs, notes=cg.notes)


def _shape(cg: ComputeGraph):
    return ([(n.op, n.operands, n.const_value, n.label) for n in cg.nodes],
            cg.outputs)


def simplify(cg: ComputeGraph, rules=None) -> ComputeGraph:
    """Semantics-preserving rewrite to a fixpoint.

    Constant folding, identity elimination (x*1, x*0, x+0, SUB(SUB(x))),
    and common-subexpression elimination always run; rules may disable
    "fuse" (complement fusion across flattened sums).  Dead nodes are
    dropped on every pass.  Rewrites preserve values in real arithmetic;
    ADD evaluation uses exact accumulation, so the only observable
    drift is the rounding of fused products (well under 1e-12).
    """
    rules = ALL_RULES if rules is None else frozenset(rules)
    cur = cg
    for _ in range(64):
        nxt = _rebuild(cur, rules)
        if _shape(nxt) == _shape(cur):
            return nxt
        cur = nxt
    raise GraphError("simplification did not reach a fixpoint")


# -- evaluation --------------------------------------------------------------

def evaluate_exact(cg: ComputeGraph, bindings: dict[str, float]) -> dict[str, float]:
    """Double-precision evaluation in topological order.

    ADD nodes accumulate with math.fsum, so sums are exactly rounded and
    independent of operand order.
    """
    missing = sorted(set(cg.inputs) - set(bindings))
    if missing:
        raise UnboundInputError("unbound inputs: " + ", ".join(missing))
    vals = [0.0] * len(cg.nodes)
    for n in cg.nodes:
        if n.op is Op.INPUT:
            vals[n.id] = float(bindings[n.label])
        elif n.op is Op.CONST:
            vals[n.id] = n.const_value
        elif n.op is Op.MUL:
            vals[n.id] = reduce(lambda a, b: a * b, (vals[o] for o in n.operands))
        elif n.op is Op.ADD:
            vals[n.id] = math.fsum(vals[o] for o in n.operands)
        elif n.op is Op.SUB:
            vals[n.id] = 1.0 - vals[n.operands[0]]
        elif n.op is Op.MAX:
            vals[n.id] = max(vals[o] for o in n.operands)
        elif n.op is Op.RELU:
            vals[n.id] = max(0.0, vals[n.operands[0]])
        elif n.op is Op.NORM:
            den = vals[n.operands[1]]
            if den == 0.0:
                raise DegenerateEvidenceError(
                    "normalization denominator is zero (evidence has zero mass)")
            vals[n.id] = vals[n.operands[0]] / den
    return {name: vals[i] for name, i in cg.outputs.items()}


def brute_force_marginal(fg: FactorGraph, query: int,
                         evidence: dict[int, int] | None = None) -> float:
    """Enumerate every assignment consistent with the evidence."""
    evidence = dict(evidence or {})
    _check_query_evidence(fg, query, evidence)
    free = [v for v in range(len(fg.variables)) if v not in evidence]
    if len(free) > _BRUTE_FORCE_LIMIT:
        raise GraphError(f"brute force over {len(free)} variables exceeds "
                         f"the 2^{_BRUTE_FORCE_LIMIT} ceiling")
    num_terms, den_terms = [], []
    for bits in itertools.product((0, 1), repeat=len(free)):
        ass = dict(evidence)
        ass.update(zip(free, bits))
        p = 1.0
        for f in fg.factors:
            p *= f.value(tuple(ass[v] for v in f.scope))
        den_terms.append(p)
        if ass[query] == 1:
            num_terms.append(p)
    den = math.fsum(den_terms)
    if den == 0.0:
        raise DegenerateEvidenceError("evidence has zero probability mass")
    return math.fsum(num_terms) / den
