"""Layer specs, graph validation, and the forward executor's numerics."""

import numpy as np
import pytest

from oblivinfer.errors import ShapeChainError, ShapeError, TraceError
from oblivinfer.runtime import (
    ExecMode,
    LayerSpec,
    ModelGraph,
    forward,
    lenet_graph,
    mlp_graph,
    traced_forward,
)
from oblivinfer.runtime.kernels import softmax_probs


def conv_oracle_f64(x, w, bias, stride, padding):
    """Direct 6-loop convolution in float64."""
    x = x.astype(np.float64)
    w = w.astype(np.float64)
    O, C, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    H, W = x.shape[1] + 2 * ph, x.shape[2] + 2 * pw
    xp = np.zeros((x.shape[0], H, W))
    xp[:, ph:ph + x.shape[1], pw:pw + x.shape[2]] = x
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    out = np.zeros((O, oh, ow))
    for o in range(O):
        for i in range(oh):
            for j in range(ow):
                acc = float(bias[o])
                for c in range(C):
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[c, i * sh + u, j * sw + v] * w[o, c, u, v]
                out[o, i, j] = acc
    return out


class TestLayerSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LayerSpec("attention")

    def test_missing_required_hyper(self):
        with pytest.raises(ValueError):
            LayerSpec("dense", {"in_units": 4})

    def test_unknown_hyper_rejected(self):
        with pytest.raises(ValueError):
            LayerSpec("relu", {"slope": 0.1})

    def test_hardtanh_bounds_checked(self):
        with pytest.raises(ValueError):
            LayerSpec("hardtanh", {"min_val": 1.0, "max_val": -1.0})

    def test_float_hypers_snap_to_f32(self):
        spec = LayerSpec("threshold", {"threshold": 0.1, "val": 0.3})
        assert spec.hyper["threshold"] == float(np.float32(0.1))
        assert spec.hyper["val"] == float(np.float32(0.3))

    def test_conv_shape_rule(self):
        spec = LayerSpec("conv2d", {"in_channels": 3, "out_channels": 8,
                                    "kernel": 5, "stride": 2, "padding": 1})
        assert spec.out_shape((3, 32, 32)) == (8, 15, 15)

    def test_conv_kernel_too_large(self):
        spec = LayerSpec("conv2d", {"in_channels": 1, "out_channels": 1, "kernel": 9})
        with pytest.raises(ShapeError):
            spec.out_shape((1, 8, 8))

    def test_pool_default_stride_is_window(self):
        spec = LayerSpec("maxpool2d", {"window": 3})
        assert spec.hyper["stride"] == [3, 3]
        assert spec.out_shape((2, 9, 9)) == (2, 3, 3)

    def test_flatten_shape(self):
        assert LayerSpec("flatten").out_shape((2, 3, 4)) == (24,)

    def test_param_shapes(self):
        d = LayerSpec("dense", {"in_units": 3, "out_units": 2})
        assert d.param_shapes() == [("weight", (3, 2)), ("bias", (2,))]
        bn = LayerSpec("batchnorm", {"channels": 4})
        assert [r for r, _ in bn.param_shapes()] == ["mean", "var", "gamma", "beta"]


class TestModelGraph:
    def test_shape_chain_error_names_layer(self):
        layers = [
            LayerSpec("dense", {"in_units": 4, "out_units": 3}),
            LayerSpec("dense", {"in_units": 5, "out_units": 2}),
        ]
        with pytest.raises(ShapeChainError, match="layer 1"):
            ModelGraph("bad", (4,), layers)

    def test_param_validation(self):
        g = mlp_graph("m", in_units=4, hidden=(3,), classes=2)
        g.params[0]["weight"] = g.params[0]["weight"].astype(np.float64)
        with pytest.raises(ShapeChainError):
            g._check_params()

    def test_buffers_and_classes(self, tiny_mlp):
        names = [n for n, _ in tiny_mlp.buffers()]
        assert names[0] == "input"
        assert names[1:] == [f"act{i}" for i in range(len(tiny_mlp.layers))]
        assert tiny_mlp.n_classes == 3

    def test_init_deterministic(self):
        a = mlp_graph().init_params(np.random.default_rng(7))
        b = mlp_graph().init_params(np.random.default_rng(7))
        for pa, pb in zip(a.params, b.params):
            for role in pa:
                assert pa[role].tobytes() == pb[role].tobytes()

    def test_lenet_chain(self):
        g = lenet_graph()
        assert g.input_shape == (3, 32, 32)
        assert g.out_shape == (10,)


class TestForward:
    def test_probs_sum_to_one(self, tiny_mlp, rng):
        res = forward(tiny_mlp, rng.standard_normal(12).astype(np.float32))
        assert res.probs.shape == (3,)
        assert abs(res.probs.sum() - 1.0) < 1e-6
        assert res.label == int(np.argmax(res.probs))

    def test_wrong_input_shape(self, tiny_mlp):
        with pytest.raises(ShapeError):
            forward(tiny_mlp, np.zeros(11, np.float32))

    def test_dense_relu_reference(self, rng):
        g = mlp_graph("m", in_units=5, hidden=(4,), classes=3)
        g.init_params(rng)
        x = rng.standard_normal(5).astype(np.float32)
        h = x[None] @ g.params[0]["weight"] + g.params[0]["bias"]
        h = np.maximum(h, 0.0)
        logits = (h @ g.params[2]["weight"] + g.params[2]["bias"])[0]
        res = forward(g, x)
        e = np.exp(logits - logits.max())
        np.testing.assert_allclose(res.probs, e / e.sum(), rtol=1e-5)

    @pytest.mark.parametrize("model", ["tiny_mlp", "conv_model", "mixed_model"])
    def test_dual_mode_bitwise(self, model, rng, request):
        g = request.getfixturevalue(model)
        for _ in range(30):
            x = rng.standard_normal(g.input_shape).astype(np.float32)
            a = forward(g, x, ExecMode.LEAKY)
            b = forward(g, x, ExecMode.OBLIVIOUS)
            assert a.probs.tobytes() == b.probs.tobytes()
            assert a.label == b.label

    def test_conv_matches_f64_oracle(self, conv_model, rng):
        x = rng.standard_normal((1, 8, 8)).astype(np.float32)
        spec = conv_model.layers[0]
        p = conv_model.params[0]
        from oblivinfer import backends
        y = backends.conv2d(x[None], p["weight"], p["bias"], (1, 1), (0, 0))[0]
        want = conv_oracle_f64(x, p["weight"], p["bias"], (1, 1), (0, 0))
        np.testing.assert_allclose(y, want, rtol=1e-5, atol=1e-6)

    def test_maxpool_matches_brute_force(self, rng):
        from oblivinfer import backends
        x = rng.standard_normal((1, 2, 6, 8)).astype(np.float32)
        out, arg = backends.maxpool2d(x, (2, 2), (2, 2))
        for c in range(2):
            for i in range(3):
                for j in range(4):
                    win = x[0, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2]
                    assert out[0, c, i, j] == win.max()

    def test_meanpool_matches_brute_force(self, rng):
        from oblivinfer import backends
        x = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        out = backends.meanpool2d(x, (2, 2), (2, 2))
        for i in range(2):
            for j in range(2):
                win = x[0, 0, 2 * i:2 * i + 2, 2 * j:2 * j + 2].astype(np.float64)
                assert abs(out[0, 0, i, j] - win.mean()) < 1e-6

    def test_batchnorm_formula(self, rng):
        g = ModelGraph("bn", (3,), [
            LayerSpec("batchnorm", {"channels": 3}),
            LayerSpec("softmax"),
        ])
        g.params[0]["mean"][:] = [0.5, -1.0, 0.0]
        g.params[0]["var"][:] = [2.0, 0.5, 1.0]
        g.params[0]["gamma"][:] = [1.0, 2.0, 0.5]
        g.params[0]["beta"][:] = [0.0, 0.1, -0.1]
        x = rng.standard_normal(3).astype(np.float32)
        res = forward(g, x)
        p = g.params[0]
        want = ((x - p["mean"]) / np.sqrt(p["var"] + np.float32(1e-5))) \
            * p["gamma"] + p["beta"]
        e = np.exp(want - want.max())
        np.testing.assert_allclose(res.probs, e / e.sum(), rtol=1e-6)

    def test_softmax_probs_normalized(self, rng):
        for leaky in (True, False):
            v = rng.standard_normal(10).astype(np.float32) * 10
            p = softmax_probs(v, leaky)
            assert abs(float(np.sum(p, dtype=np.float64)) - 1.0) < 1e-6
            oracle = np.exp(v.astype(np.float64))
            oracle /= oracle.sum()
            np.testing.assert_allclose(p, oracle, rtol=1e-5, atol=1e-7)

    def test_batched_input(self, tiny_mlp, rng):
        xs = rng.standard_normal((6, 12)).astype(np.float32)
        got = forward(tiny_mlp, xs)
        singles = [forward(tiny_mlp, xs[i]) for i in range(6)]
        assert got.probs.shape == (6, 3)
        for i, s in enumerate(singles):
            assert got.probs[i].tobytes() == s.probs.tobytes()
            assert got.label[i] == s.label

    def test_tracing_rejects_batches(self, tiny_mlp, rng):
        from oblivinfer.channel import Recorder, layout_assign
        rec = Recorder(layout_assign(tiny_mlp))
        with pytest.raises(TraceError):
            forward(tiny_mlp, rng.standard_normal((2, 12)).astype(np.float32),
                    recorder=rec)

    def test_capture_records_preactivations(self, tiny_mlp, rng):
        x = rng.standard_normal(12).astype(np.float32)
        cap = {}
        forward(tiny_mlp, x, capture=cap)
        # layer 1 is the relu; its captured input is the dense output
        pre = x[None] @ tiny_mlp.params[0]["weight"] + tiny_mlp.params[0]["bias"]
        assert 1 in cap
        np.testing.assert_allclose(cap[1], pre[0], rtol=1e-6)

def test_traced_forward_returns_granular_trace(tiny_mlp, rng):
    from oblivinfer.channel import Granularity
    x = rng.standard_normal(12).astype(np.float32)
    res, tr = traced_forward(tiny_mlp, x, ExecMode.LEAKY,
                             granularity=Granularity.PAGE)
    assert tr.granularity is Granularity.PAGE
    assert len(tr.obs) > 0
    assert res.label in (0, 1, 2)
