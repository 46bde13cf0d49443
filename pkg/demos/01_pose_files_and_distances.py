"""Pose files, canonical serialization, and landmark-space distances.

Builds a small pose sequence, round-trips it through the canonical JSON
format, and shows how the validity threshold changes which landmarks count.
"""

import numpy as np

import posecraft as pc
from posecraft.synthetic import synthetic_sequence

# A seeded sequence of 4 whole-body poses (133 landmarks each).
seq = synthetic_sequence(4, seed=7)
print(f"sequence: {len(seq)} poses, {seq.layout.total} landmarks each")
print(f"groups: body={seq.layout.body_count} face={seq.layout.face_count} "
      f"hand={seq.layout.hand_count} (x2)")

# Canonical serialization: sorted keys, 6-decimal coordinates, stable bytes.
payload = pc.serialize_pose_sequence(seq)
print(f"\ncanonical JSON: {len(payload)} bytes")
reparsed = pc.parse_pose_json(payload)
print("serialize(parse(serialize(...))) stable:",
      pc.serialize_pose_sequence(reparsed) == payload)

# Distances average squared coordinate error over landmarks valid in BOTH poses.
q, p = seq[0], seq[1]
for threshold in (0.0, 0.3, 0.9):
    d = pc.pose_distance(q, p, threshold)
    shared = int((q.valid_mask(threshold) & p.valid_mask(threshold)).sum())
    print(f"threshold {threshold:.1f}: {shared:3d} shared landmarks, distance {d:.6f}")

# A uniform shift of every coordinate by 0.1 along x gives exactly 0.1^2.
shifted = pc.Pose.from_arrays(q.xy + np.array([0.1, 0.0]), q.confidence, q.layout)
print(f"\nuniform (0.1, 0) shift distance: {pc.pose_distance(q, shifted, 0.3):.6f}")

# Group accessors slice the flat landmark array.
face = pc.group_landmarks(q, "face")
print(f"face block: {face.shape[0]} landmarks, centroid "
      f"({face[:, 0].mean():.3f}, {face[:, 1].mean():.3f})")
