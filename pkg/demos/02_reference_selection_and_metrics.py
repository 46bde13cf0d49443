"""Reference-frame selection and the pose-sequence metrics built on it.

Given a training sequence and a target sequence, picks the training frame
whose pose is closest to all targets, then scores sequence similarity with
the nearest-pose sum (video similarity) and frame-wise MSE of keypoints.
"""

import numpy as np

import posecraft as pc
from posecraft.synthetic import synthetic_sequence

train = synthetic_sequence(8, seed=3)
infer = synthetic_sequence(5, seed=4)

choice = pc.select_reference_frame(train, infer, threshold=0.3)
print(f"selected reference frame r={choice.index} "
      f"(total distance {choice.total_distance:.5f})")
for i, pose in enumerate(train, start=1):
    total = sum(pc.pose_distance(pose, p, 0.3) for p in infer)
    marker = " <-- chosen" if i == choice.index else ""
    print(f"  candidate {i}: {total:.5f}{marker}")

# Inserting the reference pose extends the sequence to M+1; dropping the
# inserted position recovers the original order exactly.
ref = train[choice.index - 1]
inserted = pc.insert_reference_pose(infer, ref, k=1)
print(f"\ninserted at k=1: length {len(infer)} -> {len(inserted.poses)}")
print("round trip recovers the originals:", inserted.removed().poses == infer.poses)

# The same insert/drop pairing applies to latent frame stacks.
stack = np.random.default_rng(0).normal(size=(len(infer) + 1, 2, 4, 4))
print("latent drop keeps", pc.drop_inserted_frame(stack, 1).shape[0], "frames")

# Sequence-level metrics.
print(f"\nvideo similarity (train vs infer): {pc.video_sim(train, infer):.5f}")
subset = pc.PoseSequence((train[0], train[3]))
print(f"video similarity (train vs subset of train): {pc.video_sim(train, subset):.5f}")

shifted = pc.PoseSequence(
    tuple(pc.Pose.from_arrays(p.xy + 0.02, p.confidence, p.layout) for p in infer)
)
print(f"keypoint MSE for a uniform +0.02 shift: {pc.mse_p(infer, shifted):.2e} "
      f"(expected {0.02**2:.2e})")
