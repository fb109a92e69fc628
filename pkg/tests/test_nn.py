import math

import numpy as np
import pytest

from pcgsynth.errors import CheckInvalidError, FormatError, TrainingDivergedError
from pcgsynth.nn import ops
from pcgsynth.nn.gradcheck import finite_diff_check
from pcgsynth.nn.mulaw import mu_law_decode, mu_law_encode
from pcgsynth.nn.optim import Adam
from pcgsynth.nn.params import ModelParams, make_rng, uniform_init


class TestConv1d:
    def test_identity_kernel(self):
        x = make_rng(1).standard_normal((2, 1, 20))
        w = np.ones((1, 1, 1))
        y, _ = ops.conv1d(x, w, np.zeros(1))
        np.testing.assert_array_equal(y, x)

    def test_causality(self):
        rng = make_rng(2)
        w = rng.standard_normal((3, 2, 2))
        b = rng.standard_normal(3)
        x = np.zeros((1, 2, 30))
        base, _ = ops.conv1d(x, w, b, dilation=4)
        bumped = x.copy()
        bumped[0, 0, 17] = 1.0
        out, _ = ops.conv1d(bumped, w, b, dilation=4)
        diff = np.abs(out - base).sum(axis=(0, 1))
        assert np.all(diff[:17] == 0.0)
        assert diff[17] > 0

    def test_stacked_receptive_field_128(self):
        # 7 layers, kernel 2, dilations 1..64: output t sees inputs t-127..t
        rng = make_rng(3)
        x = np.zeros((1, 1, 300))
        bumped = x.copy()
        p = 120
        bumped[0, 0, p] = 1.0
        ws = [rng.uniform(0.5, 1.0, size=(1, 1, 2)) for _ in range(7)]
        def stack(inp):
            h = inp
            for i, w in enumerate(ws):
                h, _ = ops.conv1d(h, w, np.zeros(1), dilation=2**i)
            return h
        diff = np.abs(stack(bumped) - stack(x))[0, 0]
        assert diff[p + 127] > 0
        assert np.all(diff[p + 128 :] == 0.0)
        assert np.all(diff[:p] == 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.conv1d(np.zeros((1, 3, 5)), np.zeros((2, 4, 1)), np.zeros(2))

    def test_same_mode_needs_odd_kernel(self):
        with pytest.raises(ValueError):
            ops.conv1d(np.zeros((1, 1, 5)), np.zeros((1, 1, 2)), np.zeros(1), mode="same")


class TestGated:
    def test_closed_gate(self):
        a = np.full((2, 3), 5.0)
        b = np.full((2, 3), -60.0)
        out, _ = ops.gated(a, b)
        np.testing.assert_allclose(out, 0.0, atol=1e-20)

    def test_zero_filter(self):
        out, _ = ops.gated(np.zeros((2, 2)), np.ones((2, 2)))
        np.testing.assert_array_equal(out, np.zeros((2, 2)))

    def test_scalar_value(self):
        out, _ = ops.gated(np.array([0.5]), np.array([0.5]))
        expected = math.tanh(0.5) / (1.0 + math.exp(-0.5))
        assert out[0] == pytest.approx(expected, abs=1e-15)
        assert out[0] == pytest.approx(0.28765, abs=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.gated(np.zeros(3), np.zeros(4))


class TestLstmStep:
    def test_all_zero(self):
        h, c, _ = ops.lstm_step(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)),
                                np.zeros((16, 3)), np.zeros((16, 4)), np.zeros(16))
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_saturated_forget_gate_preserves_cell(self):
        hidden = 3
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 60.0  # forget gate pinned open
        c0 = np.array([[0.3, -0.2, 0.9]])
        h, c, _ = ops.lstm_step(np.zeros((1, 2)), np.zeros((1, hidden)), c0,
                                np.zeros((4 * hidden, 2)), np.zeros((4 * hidden, hidden)), b)
        np.testing.assert_allclose(c, c0, atol=1e-15)

    def test_matches_hand_computed_cell(self):
        rng = make_rng(13)
        wx = rng.uniform(-0.5, 0.5, size=(4, 1))
        wh = rng.uniform(-0.5, 0.5, size=(4, 1))
        b = rng.uniform(-0.5, 0.5, size=4)
        x, h0, c0 = 0.3, -0.4, 0.25
        h, c, _ = ops.lstm_step(np.array([[x]]), np.array([[h0]]), np.array([[c0]]),
                                wx, wh, b)
        def sig(v):
            return 1.0 / (1.0 + math.exp(-v))
        gates = [wx[k, 0] * x + wh[k, 0] * h0 + b[k] for k in range(4)]
        i, f, g, o = sig(gates[0]), sig(gates[1]), math.tanh(gates[2]), sig(gates[3])
        c_ref = f * c0 + i * g
        h_ref = o * math.tanh(c_ref)
        assert c[0, 0] == pytest.approx(c_ref, abs=1e-12)
        assert h[0, 0] == pytest.approx(h_ref, abs=1e-12)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = ModelParams({"a": np.array([1.0, -2.0])})
        opt = Adam(params, lr=0.5)
        opt.step(params, {"a": np.zeros(2)})
        np.testing.assert_array_equal(params["a"], [1.0, -2.0])
        assert opt.t == 1

    def test_first_step_size(self):
        params = ModelParams({"a": np.array([0.0])})
        opt = Adam(params, lr=0.1)
        opt.step(params, {"a": np.array([1.0])})
        assert params["a"][0] == pytest.approx(-0.1, rel=1e-7)

    def test_order_independence(self):
        rng = make_rng(4)
        arrays = {"w1": rng.standard_normal(3), "w2": rng.standard_normal(2)}
        grads = {"w1": rng.standard_normal(3), "w2": rng.standard_normal(2)}
        p1 = ModelParams({k: v.copy() for k, v in arrays.items()})
        p2 = ModelParams({k: arrays[k].copy() for k in ["w2", "w1"]})
        o1, o2 = Adam(p1, 0.01), Adam(p2, 0.01)
        o1.step(p1, grads)
        o2.step(p2, dict(reversed(list(grads.items()))))
        for k in arrays:
            np.testing.assert_array_equal(p1[k], p2[k])

    def test_nan_gradient_diverges(self):
        params = ModelParams({"a": np.zeros(2)})
        opt = Adam(params, lr=0.1)
        with pytest.raises(TrainingDivergedError):
            opt.step(params, {"a": np.array([1.0, np.nan])})


class TestMuLaw:
    def test_midpoint(self):
        assert mu_law_encode(0.0) == 128

    def test_extremes(self):
        assert mu_law_encode(1.0) == 255
        assert mu_law_encode(-1.0) == 0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            mu_law_encode(1.5)

    def test_roundtrip_and_monotonicity(self):
        grid = np.linspace(-1.0, 1.0, 10_000)
        bins = mu_law_encode(grid)
        assert np.all(np.diff(bins) >= 0)
        back = mu_law_decode(bins)
        err = np.abs(back - grid)
        assert err[np.abs(grid) < 0.1].max() < 0.02
        assert err.max() < 0.03


class TestSoftmaxCrossEntropy:
    def test_softmax_normalizes(self):
        rng = make_rng(5)
        p = ops.softmax(rng.standard_normal((7, 11)), axis=1)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_perfect_prediction_loss_zero(self):
        logits = np.full((3, 8), -100.0)
        targets = np.array([1, 5, 2])
        logits[np.arange(3), targets] = 100.0
        loss, _ = ops.softmax_cross_entropy(logits, targets)
        assert loss < 1e-9

    def test_uniform_logits_loss(self):
        loss, _ = ops.softmax_cross_entropy(np.zeros((2, 256)), np.array([0, 17]))
        assert loss == pytest.approx(np.log(256.0), abs=1e-12)


class TestModelParams:
    def test_save_load_roundtrip(self, tmp_path):
        rng = make_rng(6)
        params = ModelParams({
            "conv.w": rng.standard_normal((3, 2, 5)),
            "bias": rng.standard_normal(4),
            "scalar": np.array(2.5),
        })
        path = tmp_path / "ckpt.pcgf"
        params.save(path)
        back = ModelParams.load(path)
        assert back.names() == params.names()
        for name, arr in params.items():
            np.testing.assert_array_equal(back[name], arr)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pcgf"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            ModelParams.load(path)

    def test_duplicate_name(self):
        params = ModelParams({"a": np.zeros(2)})
        with pytest.raises(ValueError):
            params.add("a", np.zeros(2))

    def test_shape_immutable(self):
        params = ModelParams({"a": np.zeros(2)})
        with pytest.raises(ValueError):
            params["a"] = np.zeros(3)

    def test_uniform_init_bounds(self):
        rng = make_rng(7)
        w = uniform_init(rng, (50, 50), 25)
        assert np.max(np.abs(w)) <= 0.2


class TestFiniteDiffCheck:
    def test_quadratic_exact(self):
        params = ModelParams({"p": make_rng(8).standard_normal(6)})
        def loss_fn(p):
            return float(0.5 * np.sum(p["p"] ** 2)), {"p": p["p"].copy()}
        assert finite_diff_check(loss_fn, params, max_coords_per_param=None) < 1e-8

    def test_gated_layer_with_mse(self):
        rng = make_rng(9)
        x = rng.standard_normal((4, 6))
        target = rng.standard_normal((4, 6))
        params = ModelParams({"a": rng.standard_normal((6, 6)),
                              "b": rng.standard_normal((6, 6))})
        def loss_fn(p):
            fa, ca = ops.dense(x, p["a"], np.zeros(6))
            fb, cb = ops.dense(x, p["b"], np.zeros(6))
            g, cg = ops.gated(fa, fb)
            loss, dg = ops.mse_loss(g, target)
            da, db = ops.gated_backward(cg, dg)
            _, dwa, _ = ops.dense_backward(ca, da)
            _, dwb, _ = ops.dense_backward(cb, db)
            return loss, {"a": dwa, "b": dwb}
        assert finite_diff_check(loss_fn, params, max_coords_per_param=None) < 1e-4

    def test_nondeterministic_loss_rejected(self):
        params = ModelParams({"p": np.zeros(2)})
        state = {"n": 0}
        def loss_fn(p):
            state["n"] += 1
            return float(state["n"]), {"p": np.zeros(2)}
        with pytest.raises(CheckInvalidError):
            finite_diff_check(loss_fn, params)


def test_rng_reproducible_streams():
    a = make_rng(123).standard_normal(8)
    b = make_rng(123).standard_normal(8)
    np.testing.assert_array_equal(a, b)
