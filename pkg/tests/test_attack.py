"""Feature extraction from traces and the label-recovery classifier."""

import numpy as np
import pytest

from oblivinfer.attack import (
    AttackDataset,
    LayerSelector,
    LogRegHyper,
    accuracy_by_size,
    attack_eval,
    build_dataset,
    extract_features,
    feature_width,
    kfold_cv,
    logreg_train,
    predict,
    sign_oracle,
    stratified_folds,
)
from oblivinfer.attack.logreg import objective
from oblivinfer.channel import Granularity, layout_assign
from oblivinfer.errors import ExtractionError
from oblivinfer.runtime import ExecMode, mlp_graph, traced_forward


@pytest.fixture(scope="module")
def deep_mlp():
    g = mlp_graph("deep", in_units=10, hidden=(6, 5), classes=4)
    g.init_params(np.random.default_rng(9))
    return g


class TestExtraction:
    @pytest.mark.parametrize("sel", list(LayerSelector))
    @pytest.mark.parametrize("g", [Granularity.FULL, Granularity.LINE,
                                   Granularity.PAGE])
    def test_matches_sign_oracle(self, sel, g, deep_mlp, rng):
        lay = layout_assign(deep_mlp)
        for _ in range(25):
            x = rng.standard_normal(10).astype(np.float32)
            _, ct = traced_forward(deep_mlp, x, ExecMode.LEAKY, layout=lay,
                                   granularity=g)
            got = extract_features(ct, deep_mlp, lay, sel)
            # the trace marks where the rewrite arm ran, which is exactly
            # what sign_oracle computes from the captured pre-activations
            want = sign_oracle(deep_mlp, x, sel)
            assert got.tobytes() == want.tobytes()

    def test_mixed_model_arms(self, mixed_model, rng):
        lay = layout_assign(mixed_model)
        for _ in range(25):
            x = rng.standard_normal(mixed_model.input_shape).astype(np.float32)
            _, ct = traced_forward(mixed_model, x, ExecMode.LEAKY, layout=lay,
                                   granularity=Granularity.FULL)
            got = extract_features(ct, mixed_model, lay, LayerSelector.ALL)
            want = sign_oracle(mixed_model, x, LayerSelector.ALL)
            assert got.tobytes() == want.tobytes()

    def test_oblivious_features_constant(self, tiny_mlp, rng):
        lay = layout_assign(tiny_mlp)
        rows = []
        for _ in range(10):
            x = rng.standard_normal(12).astype(np.float32)
            _, ct = traced_forward(tiny_mlp, x, ExecMode.OBLIVIOUS, layout=lay,
                                   granularity=Granularity.FULL)
            rows.append(extract_features(ct, tiny_mlp, lay))
        first = rows[0].tobytes()
        assert all(r.tobytes() == first for r in rows[1:])

    def test_feature_width(self, tiny_mlp, mixed_model):
        assert feature_width(tiny_mlp, LayerSelector.LAST) == 8
        assert feature_width(tiny_mlp, LayerSelector.ALL) == 8
        with pytest.raises(ExtractionError, match="needs two"):
            feature_width(tiny_mlp, LayerSelector.LAST_TWO)
        w_all = feature_width(mixed_model, LayerSelector.ALL)
        w_last2 = feature_width(mixed_model, LayerSelector.LAST_TWO)
        assert w_all > w_last2 > 0

    def test_no_activation_layers(self):
        from oblivinfer.runtime import LayerSpec, ModelGraph
        g = ModelGraph("lin", (4,), [
            LayerSpec("dense", {"in_units": 4, "out_units": 3}),
            LayerSpec("softmax"),
        ])
        with pytest.raises(ExtractionError, match="no activation"):
            sign_oracle(g, np.zeros(4, np.float32))

    def test_fingerprint_mismatch(self, tiny_mlp, conv_model, rng):
        lay_a = layout_assign(tiny_mlp)
        lay_b = layout_assign(conv_model)
        x = rng.standard_normal(12).astype(np.float32)
        _, ct = traced_forward(tiny_mlp, x, ExecMode.LEAKY, layout=lay_a,
                               granularity=Granularity.FULL)
        with pytest.raises(ExtractionError, match="fingerprint"):
            extract_features(ct, conv_model, lay_b)

    def test_selector_parse(self):
        assert LayerSelector.parse("last") is LayerSelector.LAST
        assert LayerSelector.parse("last2") is LayerSelector.LAST_TWO
        assert LayerSelector.parse("all") is LayerSelector.ALL
        with pytest.raises(ValueError):
            LayerSelector.parse("first")


class TestLogReg:
    def test_gradient_matches_objective(self, rng):
        n, d, c = 40, 6, 3
        feats = (rng.random((n, d)) > 0.5).astype(np.uint8)
        labels = rng.integers(0, c, n)
        ds = AttackDataset(feats, labels, c)
        hyper = LogRegHyper(learning_rate=0.2, iterations=1, l2=1e-3)
        clf = logreg_train(ds, hyper)
        # one step from zeros: w1 = -lr * grad(0); finite-difference the
        # objective at zero and compare
        w0 = np.zeros((c, d + 1))
        g_analytic = -clf.weights / hyper.learning_rate
        eps = 1e-6
        for idx in [(0, 0), (1, 3), (2, d)]:
            wp = w0.copy()
            wp[idx] += eps
            wm = w0.copy()
            wm[idx] -= eps
            fd = (objective(wp, feats, labels, c, hyper.l2)
                  - objective(wm, feats, labels, c, hyper.l2)) / (2 * eps)
            assert abs(fd - g_analytic[idx]) < 1e-6

    def test_loss_decreases(self, rng):
        feats = (rng.random((60, 5)) > 0.5).astype(np.uint8)
        labels = (feats[:, 0] ^ feats[:, 1]).astype(np.int64)
        clf = logreg_train(AttackDataset(feats, labels, 2),
                           LogRegHyper(iterations=50))
        h = clf.loss_history
        assert h[-1] < h[0]
        assert np.all(np.diff(h) < 1e-10)

    def test_deterministic(self, rng):
        feats = (rng.random((30, 4)) > 0.5).astype(np.uint8)
        labels = rng.integers(0, 2, 30)
        ds = AttackDataset(feats, labels, 2)
        a = logreg_train(ds)
        b = logreg_train(ds)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_label_range_checked(self):
        ds = AttackDataset(np.zeros((4, 2), np.uint8),
                           np.array([0, 1, 2, 3]), 3)
        with pytest.raises(ValueError, match="range"):
            logreg_train(ds)

    def test_empty_dataset(self):
        ds = AttackDataset(np.zeros((0, 2), np.uint8), np.zeros(0, np.int64), 2)
        with pytest.raises(ValueError, match="empty"):
            logreg_train(ds)

    def test_separable_features_learned(self, rng):
        # feature j hot iff label == j: perfectly separable
        labels = np.repeat(np.arange(4), 25)
        feats = np.eye(4, dtype=np.uint8)[labels]
        ds = AttackDataset(feats, labels, 4)
        clf = logreg_train(ds)
        assert (predict(clf, feats) == labels).all()


class TestFolds:
    def test_partition_properties(self, rng):
        labels = rng.integers(0, 3, 90)
        folds = stratified_folds(labels, 5)
        allv = np.concatenate(folds)
        assert len(allv) == 90
        assert len(np.unique(allv)) == 90

    def test_stratification_balance(self):
        labels = np.repeat(np.arange(3), 30)
        for f in stratified_folds(labels, 5):
            counts = np.bincount(labels[f], minlength=3)
            assert counts.min() >= 5  # 30/5 = 6 per class, give or take

    def test_deterministic_assignment(self):
        labels = np.array([1, 0, 1, 0, 1, 0, 1, 0])
        a = stratified_folds(labels, 2)
        b = stratified_folds(labels, 2)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa, fb)
        # class-c example j lands in fold j mod k
        assert 1 in a[0] and 3 in a[1]  # first two class-0 examples

    def test_too_few_folds(self):
        with pytest.raises(ValueError, match="at least 2"):
            stratified_folds(np.zeros(10, np.int64), 1)

    def test_class_smaller_than_k(self):
        labels = np.array([0] * 10 + [1] * 2)
        with pytest.raises(ValueError, match="fewer than"):
            stratified_folds(labels, 3)


class TestCV:
    def test_perfect_features_score_one(self):
        labels = np.tile(np.arange(3), 30)
        feats = np.eye(3, dtype=np.uint8)[labels]
        ds = AttackDataset(feats, labels, 3)
        assert kfold_cv(ds, k=5) == 1.0

    def test_random_features_score_chance(self, rng):
        labels = np.tile(np.arange(4), 50)
        feats = (rng.random((200, 6)) > 0.5).astype(np.uint8)
        ds = AttackDataset(feats, labels, 4)
        acc = kfold_cv(ds, k=5)
        assert 0.05 < acc < 0.5

    def test_size_curve(self):
        labels = np.tile(np.arange(2), 40)
        feats = np.eye(2, dtype=np.uint8)[labels]
        ds = AttackDataset(feats, labels, 2)
        curve = accuracy_by_size(ds, [20, 80], k=4)
        assert [s for s, _ in curve] == [20, 80]
        assert all(a == 1.0 for _, a in curve)

    def test_size_exceeds_dataset(self):
        ds = AttackDataset(np.zeros((10, 2), np.uint8),
                           np.tile(np.arange(2), 5), 2)
        with pytest.raises(ValueError, match="exceeds"):
            accuracy_by_size(ds, [11], k=2)

    def test_eval_confusion(self):
        labels = np.tile(np.arange(2), 20)
        feats = np.eye(2, dtype=np.uint8)[labels]
        ds = AttackDataset(feats, labels, 2)
        clf = logreg_train(ds)
        rep = attack_eval(clf, feats, labels)
        assert rep.accuracy == 1.0
        assert rep.confusion.sum() == 40
        assert np.trace(rep.confusion) == 40


def test_end_to_end_trace_attack(tiny_mlp, rng):
    """Traces of a real model carry enough signal to beat chance."""
    lay = layout_assign(tiny_mlp)
    xs = rng.standard_normal((120, 12)).astype(np.float32)
    ds = build_dataset(tiny_mlp, lay, xs, granularity=Granularity.PAGE,
                       selector=LayerSelector.LAST)
    assert len(ds) == 120
    assert ds.n_classes == 3
    acc = kfold_cv(ds, k=3)
    assert acc > 0.55
