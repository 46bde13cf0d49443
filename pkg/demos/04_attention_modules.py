"""The two temporal modules: key-frame attention and per-location temporal attention.

Key-frame attention makes every frame attend to one designated frame's keys
and values, pulling all frames toward its content; temporal attention mixes
each spatial location across frames independently.
"""

import numpy as np

import posecraft as pc

rng = np.random.default_rng(9)
frames, locations, channels = 4, 6, 8
x = rng.normal(size=(frames, locations, channels))
weights = pc.AttentionWeights.random(channels, rng, scale=1.0)

# Every frame shares the key/value of frame k: outputs correlate with it.
out = pc.key_frame_attention(x, k=2, w=weights)
print("key-frame attention, key=2")
for i in range(frames):
    drift = np.linalg.norm(out[i] - out[1]) / np.linalg.norm(out[1])
    print(f"  frame {i + 1}: relative distance to key-frame output {drift:.3f}")

# For the key frame itself this is ordinary self-attention.
solo = pc.key_frame_attention(x[1][None], k=1, w=weights)
print("key frame equals its own self-attention:",
      np.allclose(out[1], solo[0], atol=1e-12))

# Temporal attention is equivariant to shuffling spatial locations.
perm = rng.permutation(locations)
t_out = pc.temporal_attention(x, weights)
print("\ntemporal attention spatial equivariance:",
      np.array_equal(pc.temporal_attention(x[:, perm, :], weights), t_out[:, perm, :]))

# Identical frames stay identical through both modules.
same = np.repeat(x[:1], frames, axis=0)
kf = pc.key_frame_attention(same, 1, weights)
ta = pc.temporal_attention(same, weights)
print("equal frames stay equal:",
      all(np.array_equal(kf[0], kf[i]) for i in range(frames)),
      all(np.array_equal(ta[0], ta[i]) for i in range(frames)))

# Analytic gradients agree with finite differences.
upstream = rng.normal(size=x.shape)
grad_x, grads = pc.attention_backward("key_frame", x, weights, upstream, k=2)
step = 1e-6
idx = (0, 0)
original = weights.wv[idx]
weights.wv[idx] = original + step
plus = float(np.sum(pc.key_frame_attention(x, 2, weights) * upstream))
weights.wv[idx] = original - step
minus = float(np.sum(pc.key_frame_attention(x, 2, weights) * upstream))
weights.wv[idx] = original
numeric = (plus - minus) / (2 * step)
print(f"\nd(loss)/d(wv[0,0]): analytic {grads.wv[idx]:+.8f}, "
      f"finite difference {numeric:+.8f}")
