"""Key-frame and temporal attention over (frames, locations, channels) tensors.

Both operations are single-head scaled dot-product attention with scale
1/sqrt(channels) and no output projection unless weights carry one. Key-frame
attention lets every frame's queries attend to the keys and values of one
designated frame; temporal attention attends across frames independently at
each spatial location. Analytic backward passes are provided for one-shot
training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AttentionWeights:
    """Square query/key/value projections, with an optional output projection."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray | None = None

    def __post_init__(self):
        c = self.wq.shape[0] if self.wq.ndim == 2 else -1
        mats = [self.wq, self.wk, self.wv] + ([self.wo] if self.wo is not None else [])
        for m in mats:
            if m.ndim != 2 or m.shape != (c, c):
                raise ValueError("attention projections must be equal square matrices")
            if not np.all(np.isfinite(m)):
                raise ValueError("attention projections must be finite")

    @property
    def hidden(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def random(
        cls, hidden: int, rng: np.random.Generator, scale: float = 0.5, with_output: bool = False
    ) -> "AttentionWeights":
        def mat():
            return rng.standard_normal((hidden, hidden)) * (scale / math.sqrt(hidden))

        return cls(mat(), mat(), mat(), mat() if with_output else None)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis: rows of a matrix sum to one."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_grad(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Gradient through a last-axis softmax, given its output p."""
    inner = (grad_p * p).sum(axis=-1, keepdims=True)
    return p * (grad_p - inner)


def _check_input(x: np.ndarray, w: AttentionWeights) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("input must be (frames, locations, channels)")
    if x.shape[2] != w.hidden:
        raise ValueError(
            f"channel dimension {x.shape[2]} does not match weights of size {w.hidden}"
        )
    return x


def key_frame_attention(x: np.ndarray, k: int, w: AttentionWeights) -> np.ndarray:
    """Attention where all frames share the key and value of frame k (1-based).

    output_i = softmax(Q_i K_k^T / sqrt(c)) V_k with Q_i = x_i Wq,
    K_k = x_k Wk, V_k = x_k Wv. For the key frame itself this is standard
    self-attention.
    """
    x = _check_input(x, w)
    f, _, c = x.shape
    if not 1 <= k <= f:
        raise ValueError(f"key frame {k} outside [1, {f}]")
    q = x @ w.wq
    key = x[k - 1] @ w.wk
    val = x[k - 1] @ w.wv
    probs = softmax_rows(q @ key.T / math.sqrt(c))
    out = probs @ val
    if w.wo is not None:
        out = out @ w.wo
    return out


def temporal_attention(x: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """Self-attention across frames, independently at each spatial location."""
    x = _check_input(x, w)
    c = x.shape[2]
    # Project per token first, then regroup to (locations, frames, channels);
    # for a single frame the output is then bit-identical to x @ wv.
    q = (x @ w.wq).transpose(1, 0, 2)
    key = (x @ w.wk).transpose(1, 0, 2)
    val = (x @ w.wv).transpose(1, 0, 2)
    probs = softmax_rows(q @ key.transpose(0, 2, 1) / math.sqrt(c))
    out = probs @ val
    if w.wo is not None:
        out = out @ w.wo
    return out.transpose(1, 0, 2)


def key_frame_attention_backward(
    x: np.ndarray, k: int, w: AttentionWeights, grad_out: np.ndarray
) -> tuple[np.ndarray, AttentionWeights]:
    """Gradients of key_frame_attention w.r.t. its input and projections.

    Returns (grad_x, grads) where grads mirrors the AttentionWeights
    structure (wo gradient is None when no output projection is used).
    """
    x = _check_input(x, w)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ValueError("upstream gradient shape must match the input shape")
    f, _, c = x.shape
    if not 1 <= k <= f:
        raise ValueError(f"key frame {k} outside [1, {f}]")
    scale = 1.0 / math.sqrt(c)
    xk = x[k - 1]

    q = x @ w.wq
    key = xk @ w.wk
    val = xk @ w.wv
    probs = softmax_rows(q @ key.T * scale)

    grad_wo = None
    g = grad_out
    if w.wo is not None:
        out_pre = probs @ val
        grad_wo = np.einsum("fdc,fde->ce", out_pre, g)
        g = g @ w.wo.T

    grad_probs = g @ val.T
    grad_val = np.einsum("fij,fic->jc", probs, g)
    grad_logits = _softmax_grad(probs, grad_probs)
    grad_q = grad_logits @ key * scale
    grad_key = np.einsum("fij,fic->jc", grad_logits, q) * scale

    grad_x = grad_q @ w.wq.T
    grad_x[k - 1] += grad_key @ w.wk.T + grad_val @ w.wv.T
    grads = AttentionWeights(
        wq=np.einsum("fdc,fde->ce", x, grad_q),
        wk=xk.T @ grad_key,
        wv=xk.T @ grad_val,
        wo=grad_wo,
    )
    return grad_x, grads


def temporal_attention_backward(
    x: np.ndarray, w: AttentionWeights, grad_out: np.ndarray
) -> tuple[np.ndarray, AttentionWeights]:
    """Gradients of temporal_attention w.r.t. its input and projections."""
    x = _check_input(x, w)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ValueError("upstream gradient shape must match the input shape")
    c = x.shape[2]
    scale = 1.0 / math.sqrt(c)
    y = x.transpose(1, 0, 2)

    q = y @ w.wq
    key = y @ w.wk
    val = y @ w.wv
    probs = softmax_rows(q @ key.transpose(0, 2, 1) * scale)

    grad_wo = None
    g = grad_out.transpose(1, 0, 2)
    if w.wo is not None:
        out_pre = probs @ val
        grad_wo = np.einsum("dfc,dfe->ce", out_pre, g)
        g = g @ w.wo.T

    grad_probs = g @ val.transpose(0, 2, 1)
    grad_val = np.einsum("dij,dic->djc", probs, g)
    grad_logits = _softmax_grad(probs, grad_probs)
    grad_q = grad_logits @ key * scale
    grad_key = np.einsum("dij,dic->djc", grad_logits, q) * scale

    grad_y = grad_q @ w.wq.T + grad_key @ w.wk.T + grad_val @ w.wv.T
    grads = AttentionWeights(
        wq=np.einsum("dfc,dfe->ce", y, grad_q),
        wk=np.einsum("dfc,dfe->ce", y, grad_key),
        wv=np.einsum("dfc,dfe->ce", y, grad_val),
        wo=grad_wo,
    )
    return grad_y.transpose(1, 0, 2), grads


def attention_backward(
    op: str,
    x: np.ndarray,
    w: AttentionWeights,
    grad_out: np.ndarray,
    k: int | None = None,
) -> tuple[np.ndarray, AttentionWeights]:
    """Dispatch backward by operation name: 'key_frame' (needs k) or 'temporal'."""
    if op == "key_frame":
        if k is None:
            raise ValueError("key_frame backward requires the key index k")
        return key_frame_attention_backward(x, k, w, grad_out)
    if op == "temporal":
        return temporal_attention_backward(x, w, grad_out)
    raise ValueError(f"unknown attention op {op!r}")
