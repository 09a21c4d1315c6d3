"""Feed-forward network synthesis, loaders, and end-to-end accuracy."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mpforge.analog_map import map_compute_graph
from mpforge.ann import (
    AnnSpec,
    ann_eval,
    build_ann_graph,
    iris_fixture,
    iris_weights,
    normalize_headroom,
    parse_labeled_csv,
    reference_forward,
    split_dataset,
    train_reference,
    normalize_unit,
)
from mpforge.compute_graph import evaluate_exact
from mpforge.errors import FormatError, GraphError
from mpforge.formats import parse_weights, serialize_weights
from mpforge.mp_kernel import GateMode
from mpforge.netlist import connectivity_violations, emit_spice, parse_spice

# frozen accuracy of the committed weights fixture on the test split
IRIS_EXACT_ACC = 46 / 51
IRIS_MP_ACC = 46 / 51


def tiny_spec():
    return AnnSpec(weights=([[1.0]], [[1.0]]), biases=([0.0], [0.0]))


def forward_oracle(spec, x):
    # independent forward pass: explicit loops, no shared helper
    out = []
    for row in np.atleast_2d(x):
        a = list(row)
        for k, (w, b) in enumerate(zip(spec.weights, spec.biases)):
            z = [sum(wi * ai for wi, ai in zip(wrow, a)) + bi
                 for wrow, bi in zip(w, b)]
            a = z if k == len(spec.weights) - 1 else [max(0.0, v) for v in z]
        out.append(a)
    return np.asarray(out)


class TestAnnSpec:
    def test_sizes_chain(self):
        assert tiny_spec().sizes == (1, 1, 1)
        assert iris_weights().sizes == (4, 8, 3)

    def test_rejects_mismatched_layers(self):
        with pytest.raises(GraphError, match="bias"):
            AnnSpec(weights=([[1.0]],), biases=())
        with pytest.raises(GraphError, match="pair"):
            AnnSpec(weights=([[1.0, 2.0]],), biases=([0.0, 0.0],))
        with pytest.raises(GraphError, match="match previous"):
            AnnSpec(weights=([[1.0]], [[1.0, 2.0]]), biases=([0.0], [0.0]))
        with pytest.raises(GraphError, match="finite"):
            AnnSpec(weights=([[np.nan]],), biases=([0.0],))

    def test_weights_file_round_trip(self):
        spec = iris_weights()
        layers = parse_weights(serialize_weights(
            list(zip(spec.weights, spec.biases))))
        again = AnnSpec.from_layers(layers)
        for w, v in zip(spec.weights, again.weights):
            assert np.array_equal(w, v)
        for b, v in zip(spec.biases, again.biases):
            assert np.array_equal(b, v)


class TestBuildGraph:
    def test_unit_weight_is_identity_through_relu(self):
        cg = build_ann_graph(tiny_spec())
        for v in (0.0, 0.25, 1.0):
            assert_allclose(evaluate_exact(cg, {"x0": v})["score0"], v,
                            atol=1e-15)

    def test_negative_preactivation_rectifies_to_zero(self):
        spec = AnnSpec(weights=([[1.0]], [[2.0]]), biases=([-0.5], [0.0]))
        cg = build_ann_graph(spec)
        assert evaluate_exact(cg, {"x0": 0.2})["score0"] == 0.0
        assert_allclose(evaluate_exact(cg, {"x0": 0.9})["score0"], 0.8,
                        atol=1e-15)

    def test_iris_graph_matches_matrix_oracle(self):
        spec = iris_weights()
        cg = build_ann_graph(spec)
        xtr, _, xte, _ = iris_fixture()
        x = np.vstack([xtr, xte])
        want = forward_oracle(spec, x)
        for row, scores in zip(x, want):
            got = evaluate_exact(cg, {f"x{i}": float(v)
                                      for i, v in enumerate(row)})
            for j in range(3):
                assert abs(got[f"score{j}"] - scores[j]) < 1e-9

    def test_lowers_to_mac_and_rectifier_cells(self):
        am = map_compute_graph(build_ann_graph(iris_weights()))
        assert am.instance_counts() == {"MP_MAC": 11, "RELU_CELL": 8}
        scales = [dict(i.params)["scale"] for i in am.instances
                  if i.kind == "MP_MAC"]
        assert_allclose(scales, 1.0, atol=1e-12)
        nl = parse_spice(emit_spice(am))
        assert connectivity_violations(nl) == []

    def test_rejects_wrong_input_name_count(self):
        with pytest.raises(GraphError, match="input names"):
            build_ann_graph(tiny_spec(), input_names=("a", "b"))


class TestNormalizeHeadroom:
    def test_predictions_and_score_ratios_preserved(self):
        rng = np.random.default_rng(42)
        spec = AnnSpec(weights=(rng.normal(size=(5, 3)) * 3.0,
                                rng.normal(size=(2, 5)) * 2.0),
                       biases=(rng.normal(size=5), rng.normal(size=2)))
        x = rng.uniform(0.0, 1.0, size=(40, 3))
        norm = normalize_headroom(spec)
        raw_scores = reference_forward(spec, x)
        new_scores = reference_forward(norm, x)
        assert (raw_scores.argmax(1) == new_scores.argmax(1)).all()
        # the output layer divides by one shared factor
        ratio = raw_scores / new_scores
        assert_allclose(ratio, ratio[0, 0], rtol=1e-9)

    def test_unit_bounds_after_normalization(self):
        norm = normalize_headroom(iris_weights())
        for w, b in zip(norm.weights[:-1], norm.biases[:-1]):
            assert_allclose(np.abs(w).sum(axis=1) + np.abs(b), 1.0,
                            atol=1e-12)
        last = np.abs(norm.weights[-1]).sum(axis=1) + np.abs(norm.biases[-1])
        assert last.max() <= 1.0 + 1e-12

    def test_zero_unit_survives(self):
        spec = AnnSpec(weights=([[0.0, 0.0], [1.0, 1.0]], [[1.0, 1.0]]),
                       biases=([0.0, 0.0], [0.0]))
        norm = normalize_headroom(spec)
        assert np.isfinite(norm.weights[0]).all()


class TestTrainer:
    def toy(self):
        rng = np.random.default_rng(42)
        a = rng.normal((0.25, 0.25), 0.08, size=(30, 2))
        b = rng.normal((0.75, 0.75), 0.08, size=(30, 2))
        x = np.clip(np.vstack([a, b]), 0.0, 1.0)
        y = np.array([0] * 30 + [1] * 30)
        return x, y

    def test_learns_separable_clusters(self):
        x, y = self.toy()
        spec = train_reference(x, y, hidden=4, seed=1, epochs=400)
        acc = (reference_forward(spec, x).argmax(1) == y).mean()
        assert acc >= 0.95

    def test_deterministic(self):
        x, y = self.toy()
        a = train_reference(x, y, hidden=3, seed=5, epochs=50)
        b = train_reference(x, y, hidden=3, seed=5, epochs=50)
        for w, v in zip(a.weights, b.weights):
            assert np.array_equal(w, v)

    def test_rejects_bad_parameters(self):
        x, y = self.toy()
        with pytest.raises(GraphError, match="positive"):
            train_reference(x, y, hidden=0)
        with pytest.raises(GraphError, match="nonempty"):
            train_reference(np.zeros((0, 2)), np.zeros(0, dtype=int))


class TestLoaders:
    CSV = "f1,f2,kind\n0.5,1.5,b\n0.25,2.5,a\n1,3,b\n"

    def test_parse_labeled_csv(self):
        x, y, feats, classes = parse_labeled_csv(self.CSV)
        assert feats == ("f1", "f2")
        assert classes == ("a", "b")
        assert y.tolist() == [1, 0, 1]
        assert_allclose(x, [[0.5, 1.5], [0.25, 2.5], [1.0, 3.0]])

    def test_parse_errors(self):
        with pytest.raises(FormatError, match="header"):
            parse_labeled_csv("f1,kind\n")
        with pytest.raises(FormatError, match="cells"):
            parse_labeled_csv("f1,f2,kind\n1,a\n")
        with pytest.raises(FormatError, match="non-numeric"):
            parse_labeled_csv("f1,kind\nx,a\n")

    def test_normalize_unit(self):
        x = np.array([[0.0, 5.0, 7.0], [2.0, 5.0, 3.0], [1.0, 5.0, 5.0]])
        u = normalize_unit(x)
        assert u.min() >= 0.0 and u.max() <= 1.0
        assert_allclose(u[:, 0], [0.0, 1.0, 0.5])
        assert_allclose(u[:, 1], 0.0)  # constant column

    def test_split_is_stratified_and_deterministic(self):
        y = np.array([0] * 50 + [1] * 50 + [2] * 50)
        x = np.arange(150, dtype=float)[:, None]
        xtr, ytr, xte, yte = split_dataset(x, y, test_fraction=1 / 3, seed=0)
        assert np.bincount(yte).tolist() == [17, 17, 17]
        assert len(ytr) + len(yte) == 150
        assert set(xtr[:, 0]) | set(xte[:, 0]) == set(range(150))
        again = split_dataset(x, y, test_fraction=1 / 3, seed=0)
        assert np.array_equal(xte, again[2])
        with pytest.raises(GraphError, match="test_fraction"):
            split_dataset(x, y, test_fraction=0.0)

    def test_iris_fixture_shape(self):
        xtr, ytr, xte, yte = iris_fixture()
        assert xtr.shape == (99, 4) and xte.shape == (51, 4)
        assert np.bincount(yte).tolist() == [17, 17, 17]
        assert xtr.min() >= 0.0 and xtr.max() <= 1.0


class TestIrisAccuracy:
    def test_exact_mode_meets_floor(self):
        _, _, xte, yte = iris_fixture()
        acc = ann_eval(iris_weights(), xte, yte, mode=GateMode.EXACT)
        assert acc >= 0.88
        assert_allclose(acc, IRIS_EXACT_ACC, atol=1e-12)

    def test_mp_mode_within_two_points(self):
        _, _, xte, yte = iris_fixture()
        acc = ann_eval(iris_weights(), xte, yte, mode=GateMode.MP)
        assert abs(acc - IRIS_EXACT_ACC) <= 0.02
        assert_allclose(acc, IRIS_MP_ACC, atol=1e-12)

    def test_wide_margin_sample_agrees_across_modes(self):
        spec = iris_weights()
        _, _, xte, yte = iris_fixture()
        scores = reference_forward(spec, xte)
        top2 = np.sort(scores, axis=1)[:, -2:]
        k = int(np.argmax(top2[:, 1] - top2[:, 0]))
        x1, y1 = xte[k:k + 1], yte[k:k + 1]
        assert ann_eval(spec, x1, y1, mode=GateMode.EXACT) == \
            ann_eval(spec, x1, y1, mode=GateMode.MP)

    def test_eval_rejects_bad_inputs(self):
        spec = iris_weights()
        _, _, xte, yte = iris_fixture()
        with pytest.raises(GraphError, match="one label per sample"):
            ann_eval(spec, xte, yte[:-1])
        with pytest.raises(GraphError, match="labels"):
            ann_eval(spec, xte[:3], np.array([0, 1, 3]))
        with pytest.raises(GraphError, match="scaled"):
            ann_eval(spec, xte[:3] + 2.0, yte[:3])
        with pytest.raises(GraphError, match="features"):
            ann_eval(spec, xte[:, :2], yte)
        with pytest.raises(GraphError, match="no samples"):
            ann_eval(spec, np.zeros((0, 4)), np.zeros(0, dtype=int))
