"""Deterministic DDIM scheduler, lossless latent encoder, and a toy conditional denoiser.

The scheduler carries a cumulative-alpha table over T diffusion timesteps
plus an evenly spaced sampling subsequence of S of them ending at T. All
updates are the eta=0 deterministic form, so single steps are exact
algebraic inverses of each other and a state-independent noise predictor
round-trips losslessly.

The toy denoiser stands in for a large pretrained model: a frozen per-frame
linear backbone around one key-frame attention block and one temporal
attention block, with trainable attention projections and conditioning
injection. It is deterministic given (state, timestep, conditioning,
parameters).
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Protocol, Sequence

import numpy as np

from .attention import (
    AttentionWeights,
    key_frame_attention,
    key_frame_attention_backward,
    temporal_attention,
    temporal_attention_backward,
)
from .pose import DEFAULT_VALIDITY_THRESHOLD, Pose, PoseSequence

# One coarse heatmap plane per landmark group: body, face, left hand, right hand.
POSE_CHANNELS = 4

DEFAULT_TIMESTEPS = 1000
DEFAULT_SAMPLING_STEPS = 50
DEFAULT_BETA_START = 8.5e-4
DEFAULT_BETA_END = 1.2e-2
DEFAULT_LEARNING_RATE = 3e-3
DEFAULT_BATCH_SIZE = 8


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative-alpha table with a strictly increasing sampling subsequence."""

    total_timesteps: int
    alpha_bar: np.ndarray
    timestep_subsequence: np.ndarray

    def __post_init__(self):
        ab = np.ascontiguousarray(np.asarray(self.alpha_bar, dtype=np.float64))
        sub = np.ascontiguousarray(np.asarray(self.timestep_subsequence, dtype=np.int64))
        if ab.shape != (self.total_timesteps + 1,):
            raise ValueError("alpha_bar must have length total_timesteps + 1")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must equal 1")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if sub.ndim != 1 or sub.size < 1:
            raise ValueError("timestep subsequence must be non-empty")
        if np.any(np.diff(sub) <= 0) or sub[0] < 1 or sub[-1] != self.total_timesteps:
            raise ValueError(
                "timestep subsequence must be strictly increasing and end at T"
            )
        ab.flags.writeable = False
        sub.flags.writeable = False
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "timestep_subsequence", sub)

    @property
    def sampling_steps(self) -> int:
        return int(self.timestep_subsequence.size)

    def alpha_bar_at(self, t: int) -> float:
        if not 0 <= t <= self.total_timesteps:
            raise ValueError(f"timestep {t} outside [0, {self.total_timesteps}]")
        return float(self.alpha_bar[t])


def build_schedule(
    total_timesteps: int = DEFAULT_TIMESTEPS,
    sampling_steps: int = DEFAULT_SAMPLING_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear-beta schedule with S evenly spaced sampling timesteps ending at T."""
    if total_timesteps < 1:
        raise ValueError("total_timesteps must be at least 1")
    if not 1 <= sampling_steps <= total_timesteps:
        raise ValueError("sampling_steps must lie in [1, total_timesteps]")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("betas must satisfy 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, total_timesteps)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    subsequence = np.array(
        [round(j * total_timesteps / sampling_steps) for j in range(1, sampling_steps + 1)],
        dtype=np.int64,
    )
    return NoiseSchedule(total_timesteps, alpha_bar, subsequence)


def _ddim_update(
    z: np.ndarray, eps: np.ndarray, ab_from: float, ab_to: float
) -> np.ndarray:
    x0_hat = (z - math.sqrt(1.0 - ab_from) * eps) / math.sqrt(ab_from)
    return math.sqrt(ab_to) * x0_hat + math.sqrt(1.0 - ab_to) * eps


def ddim_sample_step(
    z_t: np.ndarray, t_from: int, t_to: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """One deterministic denoising step from timestep t_from down to t_to."""
    if t_to > t_from:
        raise ValueError(f"sample step must not increase t ({t_from} -> {t_to})")
    z_t = np.asarray(z_t, dtype=np.float64)
    if t_to == t_from:
        return z_t.copy()
    return _ddim_update(
        z_t, np.asarray(eps, dtype=np.float64),
        schedule.alpha_bar_at(t_from), schedule.alpha_bar_at(t_to),
    )


def ddim_inverse_step(
    z_t: np.ndarray, t_from: int, t_to: int, eps: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """One deterministic noising step from timestep t_from up to t_to.

    Exact algebraic inverse of ddim_sample_step under a shared eps.
    """
    if t_to < t_from:
        raise ValueError(f"inverse step must not decrease t ({t_from} -> {t_to})")
    z_t = np.asarray(z_t, dtype=np.float64)
    if t_to == t_from:
        return z_t.copy()
    return _ddim_update(
        z_t, np.asarray(eps, dtype=np.float64),
        schedule.alpha_bar_at(t_from), schedule.alpha_bar_at(t_to),
    )


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, scale: float) -> np.ndarray:
    """Guided noise estimate eps_uncond + scale * (eps_cond - eps_uncond).

    scale == 1 returns the conditional branch exactly so an unused
    unconditional branch can never perturb the result.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance branches must have equal shapes")
    if scale == 1.0:
        return eps_cond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


@dataclass(frozen=True)
class ConditioningVector:
    """Per-frame conditioning: a pose heatmap plus an abstract prompt embedding."""

    pose_heatmap: np.ndarray
    prompt_embedding: np.ndarray
    is_null: bool = False

    def null(self) -> "ConditioningVector":
        """Unconditional branch: same pose, prompt replaced by the zero vector."""
        return ConditioningVector(
            self.pose_heatmap, np.zeros_like(self.prompt_embedding), True
        )


def prompt_embedding(prompt: str | None, dim: int = 8) -> np.ndarray:
    """Fixed pseudo-random embedding keyed by the prompt string.

    The empty or missing prompt is the zero vector (the unconditional
    branch). Stable across processes: the seed derives from a SHA-256 of
    the text.
    """
    if not prompt:
        return np.zeros(dim)
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.standard_normal(dim)


def rasterize_pose(
    pose: Pose,
    grid_h: int,
    grid_w: int,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> np.ndarray:
    """Coarse (4, h, w) heatmap of a pose: one plane per landmark group.

    Each valid landmark splats bilinearly into its plane; planes with any
    valid landmark are normalized to unit mass.
    """
    heat = np.zeros((POSE_CHANNELS, grid_h, grid_w))
    for plane, group in enumerate(("body", "face", "left_hand", "right_hand")):
        rows = pose.group(group)
        rows = rows[rows[:, 2] >= threshold]
        if rows.shape[0] == 0:
            continue
        gx = np.clip(rows[:, 0] * grid_w - 0.5, 0.0, grid_w - 1.0)
        gy = np.clip(rows[:, 1] * grid_h - 0.5, 0.0, grid_h - 1.0)
        x0 = np.floor(gx).astype(np.intp)
        y0 = np.floor(gy).astype(np.intp)
        x1 = np.minimum(x0 + 1, grid_w - 1)
        y1 = np.minimum(y0 + 1, grid_h - 1)
        fx = gx - x0
        fy = gy - y0
        np.add.at(heat[plane], (y0, x0), (1 - fx) * (1 - fy))
        np.add.at(heat[plane], (y0, x1), fx * (1 - fy))
        np.add.at(heat[plane], (y1, x0), (1 - fx) * fy)
        np.add.at(heat[plane], (y1, x1), fx * fy)
        heat[plane] /= rows.shape[0]
    return heat


def make_condition(
    pose: Pose,
    prompt: str | None,
    grid_h: int,
    grid_w: int,
    prompt_dim: int = 8,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> ConditioningVector:
    """Bundle a rasterized pose and a prompt embedding for one frame."""
    return ConditioningVector(
        rasterize_pose(pose, grid_h, grid_w, threshold),
        prompt_embedding(prompt, prompt_dim),
    )


class Denoiser(Protocol):
    """Shape-preserving noise predictor, deterministic given its arguments."""

    def predict_noise(
        self, z: np.ndarray, t: int, cond: Sequence[ConditioningVector]
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantDenoiser:
    """Predicts a fixed pattern regardless of state, timestep, or conditioning."""

    value: float | np.ndarray = 0.0

    def predict_noise(self, z, t, cond) -> np.ndarray:
        z = np.asarray(z)
        return np.broadcast_to(np.asarray(self.value, dtype=np.float64), z.shape).copy()


def timestep_embedding(t: int, dim: int, time_scale: float = float(DEFAULT_TIMESTEPS)) -> np.ndarray:
    """Sinusoidal features of a timestep, frozen and parameter-free.

    Frequencies are kept low (at most a few cycles over the whole schedule)
    so the embedding, and with it an untrained denoiser, varies smoothly
    between adjacent sampling timesteps.
    """
    half = dim // 2
    position = t / time_scale
    freqs = math.pi * np.linspace(1.0, 6.0, max(half, 1))
    angles = position * freqs
    emb = 0.5 * np.concatenate([np.sin(angles), np.cos(angles)])
    if emb.size < dim:
        emb = np.concatenate([emb, np.zeros(dim - emb.size)])
    return emb


@dataclass
class ToyDenoiser:
    """Small conditional noise predictor built from the two temporal modules.

    Per-frame token pipeline: concatenate the latent with the pose heatmap,
    project channels through a frozen linear backbone, add a frozen
    timestep embedding and a trainable prompt injection, then apply a
    residual key-frame attention block followed by a residual temporal
    attention block, and project back to latent channels. Trainable
    parameters are the six attention projections and the prompt injection.
    """

    latent_channels: int
    hidden: int
    prompt_dim: int
    key_index: int
    w_in: np.ndarray
    w_out: np.ndarray
    key_attn: AttentionWeights
    temporal_attn: AttentionWeights
    w_prompt: np.ndarray

    @classmethod
    def create(
        cls,
        latent_channels: int,
        hidden: int = 16,
        prompt_dim: int = 8,
        key_index: int = 1,
        seed: int = 0,
        attn_scale: float = 0.5,
    ) -> "ToyDenoiser":
        rng = np.random.Generator(np.random.Philox(seed))
        c_in = latent_channels + POSE_CHANNELS
        w_in = rng.standard_normal((c_in, hidden)) / math.sqrt(c_in)
        w_out = rng.standard_normal((hidden, latent_channels)) / math.sqrt(hidden)
        key_attn = AttentionWeights.random(hidden, rng, attn_scale)
        temporal_attn = AttentionWeights.random(hidden, rng, attn_scale)
        w_prompt = rng.standard_normal((prompt_dim, hidden)) * (0.1 / math.sqrt(prompt_dim))
        return cls(
            latent_channels, hidden, prompt_dim, key_index,
            w_in, w_out, key_attn, temporal_attn, w_prompt,
        )

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self._all_arrays().values())

    def _all_arrays(self) -> dict[str, np.ndarray]:
        return {
            "w_in": self.w_in,
            "w_out": self.w_out,
            "key_attn.wq": self.key_attn.wq,
            "key_attn.wk": self.key_attn.wk,
            "key_attn.wv": self.key_attn.wv,
            "temporal_attn.wq": self.temporal_attn.wq,
            "temporal_attn.wk": self.temporal_attn.wk,
            "temporal_attn.wv": self.temporal_attn.wv,
            "w_prompt": self.w_prompt,
        }

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        """The attention projections and the prompt injection; backbone stays frozen."""
        params = self._all_arrays()
        del params["w_in"], params["w_out"]
        return params

    def copy(self) -> "ToyDenoiser":
        return copy.deepcopy(self)

    def with_key_index(self, k: int) -> "ToyDenoiser":
        return replace(self, key_index=k)

    def _tokens(self, z: np.ndarray, cond: Sequence[ConditioningVector]) -> np.ndarray:
        f, c_l, h, w = z.shape
        heat = np.stack([np.asarray(c.pose_heatmap, dtype=np.float64) for c in cond])
        if heat.shape != (f, POSE_CHANNELS, h, w):
            raise ValueError("pose heatmaps do not match the latent resolution")
        u = np.concatenate([z, heat], axis=1)
        return u.reshape(f, c_l + POSE_CHANNELS, h * w).transpose(0, 2, 1)

    def forward(
        self, z: np.ndarray, t: int, cond: Sequence[ConditioningVector]
    ) -> tuple[np.ndarray, dict]:
        """Predict noise and keep the intermediates needed for backward."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 4 or z.shape[1] != self.latent_channels:
            raise ValueError("latent video must be (frames, channels, height, width)")
        f, c_l, h, w = z.shape
        if len(cond) != f:
            raise ValueError(f"got {len(cond)} conditioning vectors for {f} frames")
        if not 1 <= self.key_index <= f:
            raise ValueError(f"key index {self.key_index} outside [1, {f}]")
        tokens = self._tokens(z, cond)
        prompts = np.stack(
            [np.asarray(c.prompt_embedding, dtype=np.float64) for c in cond]
        )
        if prompts.shape != (f, self.prompt_dim):
            raise ValueError("prompt embeddings do not match the configured dimension")

        h0 = tokens @ self.w_in
        h0 = h0 + timestep_embedding(t, self.hidden)[None, None, :]
        h0 = h0 + (prompts @ self.w_prompt)[:, None, :]
        h1 = h0 + key_frame_attention(h0, self.key_index, self.key_attn)
        h2 = h1 + temporal_attention(h1, self.temporal_attn)
        out = (h2 @ self.w_out).transpose(0, 2, 1).reshape(f, c_l, h, w)
        cache = {"tokens": tokens, "prompts": prompts, "h0": h0, "h1": h1, "shape": z.shape}
        return out, cache

    def predict_noise(
        self, z: np.ndarray, t: int, cond: Sequence[ConditioningVector]
    ) -> np.ndarray:
        return self.forward(z, t, cond)[0]

    def backward(self, cache: dict, grad_eps: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the trainable parameters given d(loss)/d(prediction)."""
        f, c_l, h, w = cache["shape"]
        g = np.asarray(grad_eps, dtype=np.float64)
        if g.shape != cache["shape"]:
            raise ValueError("gradient shape must match the prediction shape")
        grad_h2 = g.reshape(f, c_l, h * w).transpose(0, 2, 1) @ self.w_out.T
        grad_h1_branch, temporal_grads = temporal_attention_backward(
            cache["h1"], self.temporal_attn, grad_h2
        )
        grad_h1 = grad_h2 + grad_h1_branch
        grad_h0_branch, key_grads = key_frame_attention_backward(
            cache["h0"], self.key_index, self.key_attn, grad_h1
        )
        grad_h0 = grad_h1 + grad_h0_branch
        grad_w_prompt = np.einsum("fp,fdc->pc", cache["prompts"], grad_h0)
        return {
            "key_attn.wq": key_grads.wq,
            "key_attn.wk": key_grads.wk,
            "key_attn.wv": key_grads.wv,
            "temporal_attn.wq": temporal_grads.wq,
            "temporal_attn.wk": temporal_grads.wk,
            "temporal_attn.wv": temporal_grads.wv,
            "w_prompt": grad_w_prompt,
        }

    def apply_gradients(self, grads: dict[str, np.ndarray], learning_rate: float):
        """In-place gradient-descent update of the trainable parameters."""
        for name, param in self.trainable_parameters().items():
            param -= learning_rate * grads[name]


def _predict_guided(
    denoiser: Denoiser,
    z: np.ndarray,
    t: int,
    cond: Sequence[ConditioningVector],
    guidance_scale: float,
) -> np.ndarray:
    eps_cond = np.asarray(denoiser.predict_noise(z, t, cond), dtype=np.float64)
    if eps_cond.shape != z.shape:
        raise ValueError(
            f"denoiser returned shape {eps_cond.shape}, expected {z.shape}"
        )
    if guidance_scale == 1.0:
        return eps_cond
    eps_uncond = np.asarray(
        denoiser.predict_noise(z, t, [c.null() for c in cond]), dtype=np.float64
    )
    if eps_uncond.shape != z.shape:
        raise ValueError(
            f"denoiser returned shape {eps_uncond.shape}, expected {z.shape}"
        )
    return cfg_combine(eps_cond, eps_uncond, guidance_scale)


def ddim_invert(
    x0: np.ndarray,
    denoiser: Denoiser,
    cond: Sequence[ConditioningVector],
    schedule: NoiseSchedule,
    guidance_scale: float = 1.0,
) -> np.ndarray:
    """Map a clean latent video to its top-of-schedule latent.

    Walks the sampling subsequence upward from 0 to T, evaluating the noise
    prediction at the current state and the source timestep of each step.
    """
    z = np.asarray(x0, dtype=np.float64).copy()
    steps = [0] + list(schedule.timestep_subsequence)
    for t_from, t_to in zip(steps[:-1], steps[1:]):
        eps = _predict_guided(denoiser, z, t_from, cond, guidance_scale)
        z = ddim_inverse_step(z, t_from, t_to, eps, schedule)
    return z


def ddim_sample(
    z_top: np.ndarray,
    denoiser: Denoiser,
    cond: Sequence[ConditioningVector],
    schedule: NoiseSchedule,
    guidance_scale: float = 1.0,
    pre_step=None,
) -> np.ndarray:
    """Deterministic sampling from the top-of-schedule latent down to a clean one.

    ``pre_step(step_index, z) -> z`` runs immediately before the given
    1-based sampling step (before its noise prediction); it may modify the
    working latents in place and must return the array to continue with.
    """
    z = np.asarray(z_top, dtype=np.float64).copy()
    steps = list(schedule.timestep_subsequence[::-1]) + [0]
    for index, (t_from, t_to) in enumerate(zip(steps[:-1], steps[1:]), start=1):
        if pre_step is not None:
            z = pre_step(index, z)
        eps = _predict_guided(denoiser, z, t_from, cond, guidance_scale)
        z = ddim_sample_step(z, t_from, t_to, eps, schedule)
    return z


def encode(frames: np.ndarray, factor: int = 2) -> np.ndarray:
    """Lossless space-to-depth: (f, c, H, W) -> (f, c * factor^2, H/factor, W/factor)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4:
        raise ValueError("frames must be (frames, channels, height, width)")
    if factor < 1:
        raise ValueError("factor must be positive")
    f, c, height, width = frames.shape
    if height % factor or width % factor:
        raise ValueError(f"spatial dims {height}x{width} not divisible by {factor}")
    if factor == 1:
        return frames.copy()
    x = frames.reshape(f, c, height // factor, factor, width // factor, factor)
    x = x.transpose(0, 1, 3, 5, 2, 4)
    return x.reshape(f, c * factor * factor, height // factor, width // factor).copy()


def decode(latent: np.ndarray, factor: int = 2) -> np.ndarray:
    """Exact inverse of encode."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 4:
        raise ValueError("latent must be (frames, channels, height, width)")
    if factor < 1:
        raise ValueError("factor must be positive")
    f, c, height, width = latent.shape
    if factor == 1:
        return latent.copy()
    if c % (factor * factor):
        raise ValueError(f"channel count {c} not divisible by {factor}^2")
    x = latent.reshape(f, c // (factor * factor), factor, factor, height, width)
    x = x.transpose(0, 1, 4, 2, 5, 3)
    return x.reshape(f, c // (factor * factor), height * factor, width * factor).copy()


def max_train_steps(num_frames: int) -> int:
    """Training-step budget for a given frame count: round(475/23 N - 1500/23).

    Evaluated in exact rational arithmetic with round-half-away-from-zero.
    """
    if num_frames < 1:
        raise ValueError("num_frames must be at least 1")
    value = Fraction(475 * num_frames - 1500, 23)
    floor = value.numerator // value.denominator
    frac = value - floor
    if frac > Fraction(1, 2):
        return floor + 1
    if frac < Fraction(1, 2):
        return floor
    return floor + 1 if value > 0 else floor


@dataclass(frozen=True)
class TrainConfig:
    """One-shot training hyperparameters."""

    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_steps: int | None = None
    encode_factor: int = 2
    validity_threshold: float = DEFAULT_VALIDITY_THRESHOLD
    prompt: str = "a person"


def training_loss(
    denoiser: ToyDenoiser,
    frames: np.ndarray,
    poses: PoseSequence,
    prompt: str,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    encode_factor: int = 2,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
    t: int | None = None,
    noise: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Denoising loss on one batch: mean squared error between drawn and predicted noise.

    Draws the timestep first, then the noise, from ``rng`` (unless given
    explicitly); noises the encoded frames at that timestep and scores the
    denoiser's prediction. Returns the loss and analytic gradients for the
    trainable parameters when the denoiser exposes a backward pass.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] != len(poses):
        raise ValueError("frame count and pose count differ")
    z0 = encode(frames, encode_factor)
    f, _, h, w = z0.shape
    if t is None:
        t = int(rng.integers(1, schedule.total_timesteps + 1))
    if noise is None:
        noise = rng.standard_normal(z0.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != z0.shape:
        raise ValueError("noise shape must match the encoded frames")
    ab = schedule.alpha_bar_at(t)
    z_t = math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * noise

    prompt_dim = getattr(denoiser, "prompt_dim", 8)
    conds = [make_condition(p, prompt, h, w, prompt_dim, threshold) for p in poses]
    if hasattr(denoiser, "forward") and hasattr(denoiser, "backward"):
        pred, cache = denoiser.forward(z_t, t, conds)
        diff = pred - noise
        loss = float(np.mean(diff * diff))
        grads = denoiser.backward(cache, (2.0 / diff.size) * diff)
    else:
        pred = np.asarray(denoiser.predict_noise(z_t, t, conds), dtype=np.float64)
        if pred.shape != z_t.shape:
            raise ValueError(f"denoiser returned shape {pred.shape}, expected {z_t.shape}")
        diff = pred - noise
        loss = float(np.mean(diff * diff))
        grads = {}
    return loss, grads


def train_one_shot(
    denoiser: ToyDenoiser,
    frames: np.ndarray,
    poses: PoseSequence,
    config: TrainConfig,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> tuple[ToyDenoiser, np.ndarray]:
    """Gradient-descent fine-tuning on a single video.

    Runs ``config.max_steps`` iterations (the frame-count schedule from
    max_train_steps when unset) on minibatches of ``batch_size`` frames
    drawn without replacement, or with replacement when the video is
    shorter than a batch. Sampled frames keep their temporal order. The
    input denoiser is left untouched; a trained copy and the per-iteration
    loss trace are returned.
    """
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[0]
    if n < 1 or n != len(poses):
        raise ValueError("need at least one frame with a matching pose")
    steps = config.max_steps if config.max_steps is not None else max(0, max_train_steps(n))
    model = denoiser.copy()
    trace = np.empty(steps)
    for step in range(steps):
        if n >= config.batch_size:
            idx = np.sort(rng.choice(n, size=config.batch_size, replace=False))
        else:
            idx = np.sort(rng.integers(0, n, size=config.batch_size))
        batch_poses = PoseSequence(tuple(poses[int(i)] for i in idx))
        loss, grads = training_loss(
            model,
            frames[idx],
            batch_poses,
            config.prompt,
            schedule,
            rng,
            encode_factor=config.encode_factor,
            threshold=config.validity_threshold,
        )
        if not math.isfinite(loss):
            raise RuntimeError(
                f"training diverged at iteration {step + 1}: loss is {loss}"
            )
        model.apply_gradients(grads, config.learning_rate)
        trace[step] = loss
    return model, trace
