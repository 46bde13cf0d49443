import math

import numpy as np
import pytest

from posecraft.attention import (
    AttentionWeights,
    attention_backward,
    key_frame_attention,
    key_frame_attention_backward,
    softmax_rows,
    temporal_attention,
)


def loop_softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def loop_key_frame(x, k, w):
    """Independent dense reference: explicit loops, no shared code."""
    f, d, c = x.shape
    out = np.zeros((f, d, c))
    xk = x[k - 1]
    key = [[sum(xk[r][u] * w.wk[u][col] for u in range(c)) for col in range(c)] for r in range(d)]
    val = [[sum(xk[r][u] * w.wv[u][col] for u in range(c)) for col in range(c)] for r in range(d)]
    for i in range(f):
        q = [[sum(x[i][r][u] * w.wq[u][col] for u in range(c)) for col in range(c)] for r in range(d)]
        for r in range(d):
            logits = [
                sum(q[r][u] * key[s][u] for u in range(c)) / math.sqrt(c) for s in range(d)
            ]
            probs = loop_softmax(logits)
            for col in range(c):
                out[i, r, col] = sum(probs[s] * val[s][col] for s in range(d))
    return out


def loop_temporal(x, w):
    f, d, c = x.shape
    out = np.zeros((f, d, c))
    for j in range(d):
        y = x[:, j, :]
        q = [[sum(y[r][u] * w.wq[u][col] for u in range(c)) for col in range(c)] for r in range(f)]
        key = [[sum(y[r][u] * w.wk[u][col] for u in range(c)) for col in range(c)] for r in range(f)]
        val = [[sum(y[r][u] * w.wv[u][col] for u in range(c)) for col in range(c)] for r in range(f)]
        for r in range(f):
            logits = [
                sum(q[r][u] * key[s][u] for u in range(c)) / math.sqrt(c) for s in range(f)
            ]
            probs = loop_softmax(logits)
            for col in range(c):
                out[r, j, col] = sum(probs[s] * val[s][col] for s in range(f))
    return out


def random_weights(rng, c, with_output=False):
    return AttentionWeights.random(c, rng, scale=1.0, with_output=with_output)


class TestSoftmax:
    def test_singleton(self):
        assert softmax_rows(np.array([[3.7]])).tolist() == [[1.0]]

    def test_symmetric_pair(self):
        assert softmax_rows(np.array([[0.0, 0.0]])).tolist() == [[0.5, 0.5]]

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        m = rng.normal(0.0, 5.0, (3, 4))
        p = softmax_rows(m)
        assert np.max(np.abs(p.sum(axis=-1) - 1.0)) < 1e-12
        assert np.all(p >= 0.0) and np.all(p <= 1.0)

    def test_extreme_values_are_stable(self):
        p = softmax_rows(np.array([[1e6, 1e6 - 1.0, -1e6]]))
        assert np.all(np.isfinite(p))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


class TestKeyFrameAttention:
    def test_single_frame_equals_self_attention(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 4, 3))
        w = random_weights(rng, 3)
        got = key_frame_attention(x, 1, w)
        assert np.allclose(got, loop_key_frame(x, 1, w), atol=1e-12)

    def test_equal_frames_give_equal_outputs(self):
        rng = np.random.default_rng(2)
        frame = rng.normal(size=(5, 4))
        x = np.stack([frame] * 3)
        w = random_weights(rng, 4)
        out = key_frame_attention(x, 2, w)
        assert np.max(np.abs(out - out[0])) < 1e-12

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3, 4))
        w = random_weights(rng, 4)
        for k in (1, 2):
            assert np.max(np.abs(key_frame_attention(x, k, w) - loop_key_frame(x, k, w))) < 1e-10

    def test_key_frame_output_is_its_self_attention(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 4, 5))
        w = random_weights(rng, 5)
        out = key_frame_attention(x, 2, w)
        solo = key_frame_attention(x[1][None], 1, w)
        assert np.allclose(out[1], solo[0], atol=1e-12)

    def test_k_out_of_range(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 3, 4))
        w = random_weights(rng, 4)
        with pytest.raises(ValueError):
            key_frame_attention(x, 3, w)
        with pytest.raises(ValueError):
            key_frame_attention(x, 0, w)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError):
            key_frame_attention(rng.normal(size=(2, 3, 4)), 1, random_weights(rng, 5))


class TestTemporalAttention:
    def test_single_frame_reduces_to_value_projection(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(1, 6, 4))
        w = random_weights(rng, 4)
        assert np.allclose(temporal_attention(x, w), x @ w.wv, atol=1e-12)

    def test_spatial_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(3, 5, 4))
        w = random_weights(rng, 4)
        perm = rng.permutation(5)
        out_direct = temporal_attention(x[:, perm, :], w)
        out_permuted = temporal_attention(x, w)[:, perm, :]
        assert np.array_equal(out_direct, out_permuted)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(3, 2, 4))
        w = random_weights(rng, 4)
        assert np.max(np.abs(temporal_attention(x, w) - loop_temporal(x, w))) < 1e-10

    def test_scale_is_inverse_sqrt_c(self):
        # Zero-padding channels changes logits only through the 1/sqrt(c) scale.
        rng = np.random.default_rng(10)
        c = 3
        x = rng.normal(size=(2, 2, c))
        w = random_weights(rng, c)
        wq = np.zeros((2 * c, 2 * c)); wq[:c, :c] = w.wq * 2**0.25
        wk = np.zeros((2 * c, 2 * c)); wk[:c, :c] = w.wk * 2**0.25
        wv = np.zeros((2 * c, 2 * c)); wv[:c, :c] = w.wv
        x_wide = np.concatenate([x, np.zeros_like(x)], axis=2)
        got = temporal_attention(x_wide, AttentionWeights(wq, wk, wv))[:, :, :c]
        want = loop_temporal(x, w)
        assert np.max(np.abs(got - want)) < 1e-10


def numeric_grad(fn, arr, eps=1e-6):
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        plus = fn()
        arr[idx] = old - eps
        minus = fn()
        arr[idx] = old
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 3, 4))
        w = random_weights(rng, 4)
        grad_x, grads = key_frame_attention_backward(x, 1, w, np.zeros_like(x))
        assert not grad_x.any()
        assert not grads.wq.any() and not grads.wk.any() and not grads.wv.any()

    def test_single_frame_wv_gradient_closed_form(self):
        # For f=1 and L = sum(outputs), dL/dWv = x^T P^T 1, the
        # softmax-weighted outer product of inputs with column masses.
        rng = np.random.default_rng(12)
        x = rng.normal(size=(1, 4, 3))
        w = random_weights(rng, 3)
        _, grads = key_frame_attention_backward(x, 1, w, np.ones_like(x))
        probs = softmax_rows((x[0] @ w.wq) @ (x[0] @ w.wk).T / math.sqrt(3))
        col_mass = probs.sum(axis=0)  # total probability landing on each key row
        want = x[0].T @ np.outer(col_mass, np.ones(3))
        assert np.allclose(grads.wv, want, atol=1e-12)

    @pytest.mark.parametrize("op,shape", [("key_frame", (3, 4, 5)), ("temporal", (4, 3, 5))])
    def test_finite_difference_check(self, op, shape):
        rng = np.random.default_rng(13)
        x = rng.normal(size=shape)
        w = random_weights(rng, shape[2])
        upstream = rng.normal(size=shape)
        k = 2 if op == "key_frame" else None

        def forward():
            if op == "key_frame":
                out = key_frame_attention(x, k, w)
            else:
                out = temporal_attention(x, w)
            return float(np.sum(out * upstream))

        grad_x, grads = attention_backward(op, x, w, upstream, k=k)
        for arr, analytic in [(x, grad_x), (w.wq, grads.wq), (w.wk, grads.wk), (w.wv, grads.wv)]:
            numeric = numeric_grad(forward, arr)
            denom = max(np.max(np.abs(numeric)), 1e-12)
            assert np.max(np.abs(analytic - numeric)) / denom < 1e-4

    def test_output_projection_gradients(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(2, 3, 4))
        w = random_weights(rng, 4, with_output=True)
        upstream = rng.normal(size=x.shape)

        def forward():
            return float(np.sum(key_frame_attention(x, 1, w) * upstream))

        _, grads = key_frame_attention_backward(x, 1, w, upstream)
        numeric = numeric_grad(forward, w.wo)
        denom = max(np.max(np.abs(numeric)), 1e-12)
        assert np.max(np.abs(grads.wo - numeric)) / denom < 1e-4

    def test_unknown_op_rejected(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(1, 2, 3))
        w = random_weights(rng, 3)
        with pytest.raises(ValueError):
            attention_backward("spatial", x, w, np.zeros_like(x))
