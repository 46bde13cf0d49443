"""Seeded synthetic pose sequences and videos for demos, benchmarks, and tests.

The videos couple frame content to pose: a smooth fixed background plus
Gaussian blobs that track the face and hand centroids. That makes the
pose-to-appearance mapping learnable by the toy denoiser and gives the
pipeline benchmarks a ground truth to score against.
"""

from __future__ import annotations

import math

import numpy as np

from .pose import DEFAULT_LAYOUT, Pose, PoseLayout, PoseSequence


def _template(layout: PoseLayout, rng: np.random.Generator) -> np.ndarray:
    """Person-shaped landmark template centered at the origin, in unit scale."""
    pts = np.zeros((layout.total, 2))
    body = layout.group_slice("body")
    face = layout.group_slice("face")
    left = layout.group_slice("left_hand")
    right = layout.group_slice("right_hand")
    n_body = body.stop - body.start
    pts[body, 0] = rng.uniform(-0.12, 0.12, n_body)
    pts[body, 1] = rng.uniform(-0.05, 0.35, n_body)
    n_face = face.stop - face.start
    angles = np.linspace(0.0, 2.0 * math.pi, n_face, endpoint=False)
    pts[face, 0] = 0.06 * np.cos(angles)
    pts[face, 1] = -0.22 + 0.05 * np.sin(angles)
    for sl, side in ((left, -1.0), (right, 1.0)):
        n = sl.stop - sl.start
        pts[sl, 0] = side * 0.18 + rng.uniform(-0.03, 0.03, n)
        pts[sl, 1] = 0.12 + rng.uniform(-0.03, 0.03, n)
    return pts


def synthetic_sequence(
    num_frames: int,
    seed: int = 0,
    layout: PoseLayout = DEFAULT_LAYOUT,
    motion_scale: float = 0.22,
) -> PoseSequence:
    """Poses of one template drifting along a smooth path with small jitter."""
    rng = np.random.Generator(np.random.Philox(seed))
    template = _template(layout, rng)
    poses = []
    for i in range(num_frames):
        phase = i / max(num_frames - 1, 1)
        center = np.array(
            [
                0.5 + motion_scale * (phase - 0.5),
                0.5 + 0.5 * motion_scale * math.sin(2.0 * math.pi * phase),
            ]
        )
        jitter = rng.normal(0.0, 0.004, template.shape)
        xy = np.clip(template + center + jitter, 0.02, 0.98)
        conf = rng.uniform(0.55, 1.0, layout.total)
        poses.append(Pose.from_arrays(xy, conf, layout))
    return PoseSequence(tuple(poses))


def _blob(height: int, width: int, cx: float, cy: float, sigma: float) -> np.ndarray:
    ys = (np.arange(height) + 0.5) / height
    xs = (np.arange(width) + 0.5) / width
    gy = np.exp(-0.5 * ((ys - cy) / sigma) ** 2)
    gx = np.exp(-0.5 * ((xs - cx) / sigma) ** 2)
    return np.outer(gy, gx)


def synthetic_video(
    poses: PoseSequence,
    height: int = 16,
    width: int = 16,
    channels: int = 2,
    seed: int = 0,
    blob_amplitude: float = 2.0,
    blob_sigma: float = 0.1,
) -> np.ndarray:
    """Frames whose content follows the poses: fixed background plus tracked blobs.

    Channel 0 carries a blob at the face centroid, channel 1 (when present)
    one at the mean hand centroid; extra channels repeat the pattern.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    background = rng.normal(0.4, 0.12, (channels, height, width))
    frames = np.empty((len(poses), channels, height, width))
    for i, pose in enumerate(poses):
        face = pose.group("face")[:, :2].mean(axis=0)
        hands = np.concatenate(
            [pose.group("left_hand")[:, :2], pose.group("right_hand")[:, :2]]
        ).mean(axis=0)
        frame = background.copy()
        for ch in range(channels):
            center = face if ch % 2 == 0 else hands
            frame[ch] += blob_amplitude * _blob(
                height, width, float(center[0]), float(center[1]), blob_sigma
            )
        frames[i] = frame
    return frames
