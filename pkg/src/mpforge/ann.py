"""Feed-forward network synthesis and evaluation.

Lowers layered weighted-sum networks (ReLU between layers, raw scores
out) onto the compute graph, from where the analog pipeline maps them
to MAC and rectifier cells. Evaluation runs end to end through the
placed map in either gate mode. A minimal full-batch trainer and the
dataset loaders ship here so the committed weights fixture can be
regenerated from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data_path
from .analog_map import Budget, map_compute_graph
from .cells import CellLibrary
from .compute_graph import ComputeGraph, GraphBuilder
from .errors import FormatError, GraphError
from .formats import parse_weights
from .mp_kernel import GateMode, MPConfig
from .sim import SolveConfig, dc_solve


@dataclass(eq=False)
class AnnSpec:
    """Layer weights for a feed-forward net.

    weights[k] has shape (n_out, n_in) and biases[k] shape (n_out,);
    consecutive layers must chain. Hidden activations are ReLU, the
    last layer emits raw scores read out by argmax.
    """

    weights: tuple
    biases: tuple

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise GraphError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise GraphError(f"layer {k}: weights {w.shape} do not pair "
                                 f"with biases {b.shape}")
            if k and w.shape[1] != ws[k - 1].shape[0]:
                raise GraphError(
                    f"layer {k}: input width {w.shape[1]} does not match "
                    f"previous output width {ws[k - 1].shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise GraphError(f"layer {k}: weights must be finite")
        self.weights = ws
        self.biases = bs

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(
            w.shape[0] for w in self.weights)

    @classmethod
    def from_layers(cls, layers) -> "AnnSpec":
        return cls(weights=tuple(w for w, _ in layers),
                   biases=tuple(b for _, b in layers))


def build_ann_graph(spec: AnnSpec, input_names=None) -> ComputeGraph:
    """Lower the layers to a compute graph.

    Each unit is one weighted sum over the previous activations plus a
    constant bias (the shape the analog mapper collapses to a MAC cell),
    rectified between layers. Outputs are score<j> in class order.
    """
    n_in = spec.sizes[0]
    names = tuple(input_names) if input_names is not None \
        else tuple(f"x{i}" for i in range(n_in))
    if len(names) != n_in:
        raise GraphError(f"{len(names)} input names for {n_in} inputs")
    b = GraphBuilder()
    acts = [b.input(name) for name in names]
    last = len(spec.weights) - 1
    for k, (w, bias) in enumerate(zip(spec.weights, spec.biases)):
        nxt = []
        for row, unit_bias in zip(w, bias):
            terms = [b.mul2(b.const(float(v)), x)
                     for v, x in zip(row, acts)]
            terms.append(b.const(float(unit_bias)))
            z = b.add(terms)
            nxt.append(z if k == last else b.relu(z))
        acts = nxt
    return b.finish({f"score{j}": nid for j, nid in enumerate(acts)})


def reference_forward(spec: AnnSpec, x) -> np.ndarray:
    """Plain matrix forward pass; rows of x are samples."""
    a = np.asarray(x, dtype=float)
    for w, b in zip(spec.weights[:-1], spec.biases[:-1]):
        a = np.maximum(a @ w.T + b, 0.0)
    return a @ spec.weights[-1].T + spec.biases[-1]


def normalize_headroom(spec: AnnSpec) -> AnnSpec:
    """Rescale units so every MAC's worst-case output bound is 1.

    ReLU is positively homogeneous, so dividing a hidden unit's weights
    and bias by its bound and multiplying the next layer's column by the
    same factor leaves every score unchanged; the final layer divides by
    one shared factor, which preserves the argmax. With bounds at 1 the
    mapper assigns headroom scale 1.0 everywhere and MP-mode ladder
    reads stay in the fine region of the spline log map.
    """
    ws = [w.copy() for w in spec.weights]
    bs = [b.copy() for b in spec.biases]
    for k in range(len(ws) - 1):
        s = np.abs(ws[k]).sum(axis=1) + np.abs(bs[k])
        s = np.where(s == 0.0, 1.0, s)
        ws[k] /= s[:, None]
        bs[k] /= s
        ws[k + 1] *= s[None, :]
    shared = float((np.abs(ws[-1]).sum(axis=1) + np.abs(bs[-1])).max())
    if shared > 0.0:
        ws[-1] /= shared
        bs[-1] /= shared
    return AnnSpec(weights=tuple(ws), biases=tuple(bs))


def ann_predict(spec: AnnSpec, features, mode: GateMode = GateMode.EXACT,
                lib: CellLibrary | None = None, budget: Budget | None = None,
                cfg: MPConfig | None = None) -> np.ndarray:
    """Argmax class per sample through the analog path.

    The graph is mapped once; every sample then stimulates the placed
    map and reads the score rails back from the solve. Features must
    already be scaled to [0, 1] (stimulus range of the input rails).
    """
    x = np.asarray(features, dtype=float)
    n_in, n_out = spec.sizes[0], spec.sizes[-1]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise GraphError(f"features must be (samples, {n_in}), got {x.shape}")
    if x.shape[0] == 0:
        raise GraphError("no samples to evaluate")
    if x.min() < 0.0 or x.max() > 1.0:
        raise GraphError("features must be scaled to [0, 1] before solving")
    am = map_compute_graph(build_ann_graph(spec), lib=lib, budget=budget,
                           cfg=cfg)
    solve = SolveConfig(mode=mode)
    preds = np.empty(x.shape[0], dtype=int)
    for k in range(x.shape[0]):
        stim = {f"x{i}": float(v) for i, v in enumerate(x[k])}
        res = dc_solve(am, stim, solve)
        scores = [res.outputs[f"score{j}"] for j in range(n_out)]
        preds[k] = int(np.argmax(scores))
    return preds


def ann_eval(spec: AnnSpec, features, labels, mode: GateMode = GateMode.EXACT,
             lib: CellLibrary | None = None, budget: Budget | None = None,
             cfg: MPConfig | None = None) -> float:
    """Fraction of argmax-correct predictions through the analog path."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim == 2 and y.shape != (x.shape[0],):
        raise GraphError("need exactly one label per sample")
    n_out = spec.sizes[-1]
    if y.size and (y.min() < 0 or y.max() >= n_out):
        raise GraphError(f"labels must lie in [0, {n_out}) to match the "
                         "score read-outs")
    preds = ann_predict(spec, x, mode=mode, lib=lib, budget=budget, cfg=cfg)
    return float((preds == y.astype(int)).mean())


def train_reference(features, labels, hidden: int = 8, seed: int = 0,
                    epochs: int = 2000, lr: float = 0.5,
                    weight_decay: float = 1e-3) -> AnnSpec:
    """Minimal full-batch softmax trainer for one hidden layer.

    Reference tooling, not a conformance surface: it exists so the
    committed weights fixture is reproducible (deterministic given the
    data and seed). Weight decay keeps magnitudes small, which keeps
    the MAC headroom scales tight.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
        raise GraphError("need matching nonempty features and labels")
    if hidden < 1 or epochs < 1 or lr <= 0.0:
        raise GraphError("hidden, epochs, and lr must be positive")
    n, d = x.shape
    classes = int(y.max()) + 1
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), (hidden, d))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), (classes, hidden))
    b2 = np.zeros(classes)
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(epochs):
        h = np.maximum(x @ w1.T + b1, 0.0)
        z = h @ w2.T + b2
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        dz = (p - onehot) / n
        dh = (dz @ w2) * (h > 0.0)
        w2 -= lr * (dz.T @ h + weight_decay * w2)
        b2 -= lr * dz.sum(axis=0)
        w1 -= lr * (dh.T @ x + weight_decay * w1)
        b1 -= lr * dh.sum(axis=0)
    return AnnSpec(weights=(w1, w2), biases=(b1, b2))


def parse_labeled_csv(text: str):
    """Headered CSV of numeric features with a trailing class column.

    Returns (features, labels, feature_names, class_names); classes are
    indexed by sorted name so label ids are text-order independent.
    """
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if len(lines) < 2:
        raise FormatError("need a header line and at least one sample")
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 2:
        raise FormatError("need at least one feature column and the class")
    rows = []
    tags = []
    for ln, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise FormatError(f"expected {len(header)} cells, got {len(cells)}",
                              line=ln)
        try:
            rows.append([float(c) for c in cells[:-1]])
        except ValueError:
            raise FormatError("non-numeric feature cell", line=ln) from None
        tags.append(cells[-1])
    classes = tuple(sorted(set(tags)))
    index = {c: i for i, c in enumerate(classes)}
    labels = np.array([index[t] for t in tags], dtype=int)
    return (np.asarray(rows, dtype=float), labels,
            tuple(header[:-1]), classes)


def normalize_unit(features) -> np.ndarray:
    """Column min-max scaling onto [0, 1]; constant columns map to 0."""
    x = np.asarray(features, dtype=float)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    span = np.where(span == 0.0, 1.0, span)
    return (x - lo) / span


def split_dataset(features, labels, test_fraction: float = 1 / 3,
                  seed: int = 0):
    """Seeded stratified split: (x_train, y_train, x_test, y_test)."""
    if not 0.0 < test_fraction < 1.0:
        raise GraphError("test_fraction must lie strictly inside (0, 1)")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    test = np.zeros(len(y), dtype=bool)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        k = int(round(len(idx) * test_fraction))
        test[rng.permutation(idx)[:k]] = True
    return x[~test], y[~test], x[test], y[test]


def iris_fixture():
    """The shipped flower dataset: unit-scaled features, stratified
    one-third test split at seed 0."""
    x, y, _, _ = parse_labeled_csv(data_path("iris.csv").read_text())
    x = normalize_unit(x)
    return split_dataset(x, y, test_fraction=1 / 3, seed=0)


def iris_weights() -> AnnSpec:
    """The committed 4-8-3 weights fixture."""
    return AnnSpec.from_layers(
        parse_weights(data_path("iris_weights.txt").read_text()))
