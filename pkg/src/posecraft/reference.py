"""Reference-frame selection, reference-pose insertion, and pose-sequence metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LayoutError, SelectionError
from .pose import DEFAULT_VALIDITY_THRESHOLD, Pose, PoseSequence, pose_distance


@dataclass(frozen=True)
class ReferenceChoice:
    """Selected training frame: 1-based index and its summed distance objective."""

    index: int
    total_distance: float

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("reference index is 1-based")
        if self.total_distance < 0.0:
            raise ValueError("total distance must be non-negative")


@dataclass(frozen=True)
class InsertedSequence:
    """Pose sequence of length M+1 with the reference pose at key position k."""

    poses: PoseSequence
    key_index: int
    original_length: int

    def __post_init__(self):
        if len(self.poses) != self.original_length + 1:
            raise ValueError("inserted sequence must be one longer than the original")
        if not 1 <= self.key_index <= self.original_length + 1:
            raise ValueError("key index out of range")

    def removed(self) -> PoseSequence:
        """Recover the original sequence by dropping the inserted position."""
        kept = tuple(
            pose for i, pose in enumerate(self.poses) if i != self.key_index - 1
        )
        return PoseSequence(kept)


def select_reference_frame(
    train: PoseSequence,
    infer: PoseSequence,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> ReferenceChoice:
    """Pick the training pose with the smallest summed distance to all inference poses.

    Ties break toward the smallest index. Raises SelectionError when every
    candidate's objective is infinite (no shared valid landmarks anywhere).
    """
    if train.layout != infer.layout:
        raise LayoutError("training and inference sequences have different layouts")
    best_index = -1
    best_total = math.inf
    for i, candidate in enumerate(train.poses):
        total = 0.0
        for target in infer.poses:
            total += pose_distance(candidate, target, threshold)
        if total < best_total:
            best_total = total
            best_index = i
    if not math.isfinite(best_total):
        raise SelectionError(
            "no training pose shares valid landmarks with the inference poses"
        )
    return ReferenceChoice(best_index + 1, best_total)


def insert_reference_pose(infer: PoseSequence, ref: Pose, k: int) -> InsertedSequence:
    """Insert the reference pose at 1-based position k, preserving relative order."""
    if ref.layout != infer.layout:
        raise LayoutError("reference pose layout differs from the sequence layout")
    m = len(infer)
    if not 1 <= k <= m + 1:
        raise ValueError(f"insert position {k} outside [1, {m + 1}]")
    poses = infer.poses[: k - 1] + (ref,) + infer.poses[k - 1 :]
    return InsertedSequence(PoseSequence(poses), k, m)


def drop_inserted_frame(video: np.ndarray, k: int) -> np.ndarray:
    """Remove 1-based frame k from a frame-major stack, preserving order."""
    video = np.asarray(video)
    if video.ndim < 1 or video.shape[0] < 1:
        raise ValueError("video must have a leading frame axis")
    if not 1 <= k <= video.shape[0]:
        raise ValueError(f"frame index {k} outside [1, {video.shape[0]}]")
    return np.delete(video, k - 1, axis=0)


def video_sim(
    train: PoseSequence,
    test: PoseSequence,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> float:
    """Sum over test poses of the distance to the nearest training pose.

    Zero whenever every test pose occurs verbatim in the training sequence;
    grows with novel motion content.
    """
    if train.layout != test.layout:
        raise LayoutError("sequences have different layouts")
    total = 0.0
    for target in test.poses:
        total += min(
            pose_distance(target, candidate, threshold) for candidate in train.poses
        )
    return total


def mse_p(
    a: PoseSequence,
    b: PoseSequence,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> float:
    """Mean squared error between corresponding 2D keypoint coordinates.

    Pooled mean over frames, landmarks valid in both poses of a pair, and
    both coordinates. Returns +inf if no landmark pair is shared anywhere.
    """
    if len(a) != len(b):
        raise ValueError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    if a.layout != b.layout:
        raise LayoutError("sequences have different layouts")
    total = 0.0
    count = 0
    for pa, pb in zip(a.poses, b.poses):
        shared = pa.valid_mask(threshold) & pb.valid_mask(threshold)
        n = int(shared.sum())
        if n == 0:
            continue
        delta = pa.xy[shared] - pb.xy[shared]
        total += float(np.sum(delta * delta))
        count += 2 * n
    if count == 0:
        return float("inf")
    return total / count
