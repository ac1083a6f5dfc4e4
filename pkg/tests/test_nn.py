import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxrtriage import nn
from cxrtriage.dicom import ImageGrid
from cxrtriage.modelfile import LayerSpec, ModelFile, make_demo_model

from oracles import conv2d_loops, dense_loops, maxpool2d_loops


class TestConv2d:
    def test_identity_kernel(self):
        x = np.arange(9, dtype=np.float64).reshape(1, 3, 3)
        kernel = np.ones((1, 1, 1, 1))
        out = nn.conv2d(x, kernel, np.zeros(1), stride=1, pad=0)
        assert np.array_equal(out, x)

    def test_all_ones_sums_window(self):
        x = np.ones((1, 3, 3))
        kernel = np.ones((1, 1, 3, 3))
        out = nn.conv2d(x, kernel, np.zeros(1), stride=1, pad=0)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 9.0

    def test_matches_loop_oracle_with_stride_and_pad(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 5, 5))
        kernel = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        ours = nn.conv2d(x, kernel, bias, stride=2, pad=1)
        ref = conv2d_loops(x, kernel, bias, stride=2, pad=1)
        assert np.max(np.abs(ours - ref)) < 1e-9

    def test_channel_mismatch(self):
        with pytest.raises(nn.ShapeMismatch):
            nn.conv2d(np.zeros((2, 4, 4)), np.zeros((1, 3, 2, 2)), np.zeros(1), 1, 0)

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(nn.ShapeMismatch):
            nn.conv2d(np.zeros((1, 2, 2)), np.zeros((1, 1, 5, 5)), np.zeros(1), 1, 0)

    def test_linearity_in_input(self):
        rng = np.random.default_rng(5)
        kernel = rng.standard_normal((2, 3, 3, 3))
        zero_bias = np.zeros(2)
        x, y = rng.standard_normal((2, 3, 6, 6))
        a, b = 1.7, -0.4
        lhs = nn.conv2d(a * x + b * y, kernel, zero_bias, 1, 1)
        rhs = a * nn.conv2d(x, kernel, zero_bias, 1, 1) + b * nn.conv2d(y, kernel, zero_bias, 1, 1)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


class TestMaxPool:
    def test_enumerated_windows(self):
        x = np.arange(1, 17, dtype=np.float64).reshape(1, 4, 4)
        out = nn.maxpool2d(x, window=2, stride=2)
        assert out.tolist() == [[[6, 8], [14, 16]]]

    def test_constant_input(self):
        out = nn.maxpool2d(np.full((2, 5, 5), 3.5), window=2, stride=1)
        assert np.all(out == 3.5)

    def test_global_window(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 6, 6))
        out = nn.maxpool2d(x, window=6, stride=1)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == x.max()

    def test_window_too_large(self):
        with pytest.raises(nn.ShapeMismatch):
            nn.maxpool2d(np.zeros((1, 3, 3)), window=4, stride=1)


class TestDense:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        out = nn.dense(x, np.eye(3), np.zeros(3))
        assert np.array_equal(out, x)

    def test_hand_computed(self):
        out = nn.dense(np.array([1.0, 2.0]), np.array([[1.0, 1.0], [0.0, 1.0]]),
                       np.array([0.0, 1.0]))
        assert out.tolist() == [3.0, 3.0]

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(8)
        weights = rng.standard_normal((5, 8))
        bias = rng.standard_normal(5)
        assert np.max(np.abs(nn.dense(x, weights, bias) - dense_loops(x, weights, bias))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(nn.ShapeMismatch):
            nn.dense(np.zeros(4), np.zeros((2, 3)), np.zeros(2))


class TestSoftmax:
    def test_uniform(self):
        assert np.allclose(nn.softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)

    def test_large_logits_stable(self):
        out = nn.softmax(np.array([1000.0, 1000.0]))
        assert np.array_equal(out, [0.5, 0.5])

    @given(st.lists(st.floats(min_value=-500, max_value=500), min_size=1, max_size=16))
    @settings(max_examples=300, deadline=None)
    def test_probability_vector_and_shift_invariance(self, logits):
        z = np.array(logits)
        out = nn.softmax(z)
        assert abs(out.sum() - 1.0) < 1e-12
        assert np.all(out >= 0)
        shifted = nn.softmax(z + 13.25)
        assert np.max(np.abs(out - shifted)) < 1e-12


def kernel_oracle_sweep(cases=120, seed=1234):
    """Random-shape agreement between fast kernels and the loop oracles."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        c = int(rng.integers(1, 4))
        o = int(rng.integers(1, 5))
        h = int(rng.integers(3, 13))
        w = int(rng.integers(3, 13))
        kh = int(rng.integers(1, min(h, 5) + 1))
        kw = int(rng.integers(1, min(w, 5) + 1))
        stride = int(rng.integers(1, 4))
        pad = int(rng.integers(0, 3))
        x = rng.standard_normal((c, h, w))
        kernel = rng.standard_normal((o, c, kh, kw))
        bias = rng.standard_normal(o)
        worst = max(worst, np.max(np.abs(
            nn.conv2d(x, kernel, bias, stride, pad)
            - conv2d_loops(x, kernel, bias, stride, pad))))

        window = int(rng.integers(1, min(h, w) + 1))
        pstride = int(rng.integers(1, 4))
        worst = max(worst, np.max(np.abs(
            nn.maxpool2d(x, window, pstride) - maxpool2d_loops(x, window, pstride))))

        n_in = int(rng.integers(1, 20))
        n_out = int(rng.integers(1, 12))
        v = rng.standard_normal(n_in)
        weights = rng.standard_normal((n_out, n_in))
        b = rng.standard_normal(n_out)
        worst = max(worst, np.max(np.abs(nn.dense(v, weights, b) - dense_loops(v, weights, b))))
    return worst


def test_kernels_match_oracles_on_random_shapes():
    assert kernel_oracle_sweep(cases=120) < 1e-9


class TestForward:
    def identity_model(self):
        n = 4
        return ModelFile(
            name="identity", version="1", input_shape=(2, 2, 1),
            class_labels=("a", "b", "c", "d"),
            layers=[
                LayerSpec("flatten"),
                LayerSpec("dense", {"out_features": n},
                          {"weight": np.eye(n), "bias": np.zeros(n)}),
                LayerSpec("softmax"),
            ],
        )

    def test_uniform_input_uniform_probabilities(self):
        pred = nn.forward(self.identity_model(), np.full((1, 2, 2), 0.7))
        assert np.allclose(pred.probabilities, 0.25, atol=1e-15)
        assert pred.argmax_label == "a"  # tie broken by lowest index

    def test_wrong_input_shape_reports_layer_zero(self, cxr_model):
        with pytest.raises(nn.ShapeMismatch, match="layer 0"):
            nn.forward(cxr_model, np.zeros((3, 128, 128)))

    def test_golden_prediction_on_zero_input(self, cxr_model, testdata):
        golden = json.loads((testdata / "models" / "golden_predictions.json").read_text())
        pred = nn.forward(cxr_model, np.zeros((3, 224, 224)))
        expected = [float(v) for v in golden["demo-cxr-3class"]["probabilities"]]
        assert list(pred.probabilities) == expected  # bit-exact
        assert pred.argmax_label == golden["demo-cxr-3class"]["argmax_label"]

    def test_bitwise_deterministic_across_runs_and_threads(self, cxr_model):
        rng = np.random.default_rng(77)
        x = rng.random((3, 224, 224))
        first = nn.forward(cxr_model, x)
        again = nn.forward(cxr_model, x)
        assert first.probabilities == again.probabilities
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda _: nn.forward(cxr_model, x).probabilities,
                                    range(8)))
        assert all(r == first.probabilities for r in results)


class TestPreprocess:
    def test_constant_bright_mono2_is_ones(self):
        grid = ImageGrid(224, 224, 8, "MONOCHROME2",
                         np.full((224, 224), 255, dtype=np.uint8))
        out = nn.preprocess(grid)
        assert out.shape == (3, 224, 224)
        assert np.all(out == 1.0)

    def test_constant_bright_mono1_is_zeros(self):
        grid = ImageGrid(224, 224, 8, "MONOCHROME1",
                         np.full((224, 224), 255, dtype=np.uint8))
        assert np.all(nn.preprocess(grid) == 0.0)

    def test_corner_exact_upscale(self):
        grid = ImageGrid(2, 2, 8, "MONOCHROME2",
                         np.array([[0, 255], [255, 0]], dtype=np.uint8))
        out = nn.preprocess(grid)
        # Align-corners: output corners equal input corners exactly.
        assert out[0, 0, 0] == 0.0
        assert out[0, 0, -1] == 1.0
        assert out[0, -1, 0] == 1.0
        assert out[0, -1, -1] == 0.0

    def test_channels_identical_and_in_range(self):
        rng = np.random.default_rng(13)
        grid = ImageGrid(50, 37, 16, "MONOCHROME2",
                         rng.integers(0, 65536, size=(50, 37)).astype(np.uint16))
        out = nn.preprocess(grid)
        assert np.array_equal(out[0], out[1])
        assert np.array_equal(out[0], out[2])
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestBilinearResize:
    def test_identity_when_same_size(self):
        rng = np.random.default_rng(2)
        img = rng.random((9, 5))
        assert np.array_equal(nn.bilinear_resize(img, 9, 5), img)

    def test_degenerate_output_dim_takes_index_zero(self):
        img = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        out = nn.bilinear_resize(img, 1, 3)
        assert out.tolist() == [[1.0, 2.0, 3.0]]

    def test_midpoint_average(self):
        img = np.array([[0.0, 1.0]])
        out = nn.bilinear_resize(img, 1, 3)
        assert out.tolist() == [[0.0, 0.5, 1.0]]
