"""One-shot fine-tuning of the toy denoiser on a single synthetic video.

The trainable set is the attention projections plus the prompt injection;
the spatial backbone stays frozen. The iteration budget follows the
frame-count schedule (100 iterations for 8 frames).
"""

import numpy as np

import posecraft as pc
from posecraft.synthetic import synthetic_sequence, synthetic_video

for n in (1, 8, 54, 100):
    print(f"max training steps for {n:3d} frames: {pc.max_train_steps(n)}")

poses = synthetic_sequence(8, seed=11)
frames = synthetic_video(poses, height=16, width=16, channels=2, seed=12)
denoiser = pc.ToyDenoiser.create(latent_channels=8, hidden=16, seed=13)
print(f"\ntoy denoiser: {denoiser.parameter_count} parameters "
      f"({sum(p.size for p in denoiser.trainable_parameters().values())} trainable)")

schedule = pc.build_schedule()
rng = np.random.Generator(np.random.Philox(14))
trained, trace = pc.train_one_shot(
    denoiser, frames, poses, pc.TrainConfig(), schedule, rng
)
print(f"ran {trace.size} iterations at learning rate {pc.TrainConfig().learning_rate}")
print("loss trace (window-20 means):")
for start in range(0, 100, 20):
    window = trace[start : start + 20]
    print(f"  iterations {start + 1:3d}-{start + 20:3d}: {window.mean():.4f}")

# A predictor that happens to output the drawn noise scores a loss of zero.
from posecraft.diffusion import training_loss


class Oracle:
    def __init__(self, eps):
        self.eps = eps

    def predict_noise(self, z, t, cond):
        return self.eps.copy()


noise = np.random.default_rng(15).normal(size=pc.encode(frames).shape)
loss, _ = training_loss(Oracle(noise), frames, poses, "a person", schedule,
                        np.random.default_rng(16), t=400, noise=noise)
print(f"\noracle predictor loss: {loss}")
