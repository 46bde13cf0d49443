"""Pose landmark types, file I/O, and landmark-space distance.

A pose is a flat array of (x, y, confidence) rows in normalized image
coordinates: x runs along the width, y along the height, both nominally in
[0, 1]. A layout partitions the rows into contiguous body, face, left-hand,
and right-hand groups. Landmarks whose confidence falls below a validity
threshold are treated as absent by every distance and fit in this package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, LayoutError

GROUPS = ("body", "face", "left_hand", "right_hand")

DEFAULT_VALIDITY_THRESHOLD = 0.3

# Decimal places kept by the canonical JSON serialization.
JSON_DECIMALS = 6


@dataclass(frozen=True)
class Landmark:
    """A single 2D keypoint with detector confidence."""

    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("landmark coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PoseLayout:
    """Partition of a landmark array into body | face | left hand | right hand.

    The default (23 body/feet, 68 face, 21 per hand, 133 total) matches the
    common whole-body keypoint convention; other layouts load from data
    without code changes.
    """

    body_count: int = 23
    face_count: int = 68
    hand_count: int = 21

    def __post_init__(self):
        if min(self.body_count, self.face_count, self.hand_count) < 0:
            raise ValueError("layout counts must be non-negative")
        if self.total == 0:
            raise ValueError("layout must contain at least one landmark")

    @property
    def total(self) -> int:
        return self.body_count + self.face_count + 2 * self.hand_count

    def group_slice(self, group: str) -> slice:
        """Contiguous index range of one landmark group."""
        b, f, h = self.body_count, self.face_count, self.hand_count
        if group == "body":
            return slice(0, b)
        if group == "face":
            return slice(b, b + f)
        if group == "left_hand":
            return slice(b + f, b + f + h)
        if group == "right_hand":
            return slice(b + f + h, b + f + 2 * h)
        raise ValueError(f"unknown landmark group {group!r}; expected one of {GROUPS}")


DEFAULT_LAYOUT = PoseLayout()


@dataclass(frozen=True)
class Pose:
    """One frame's landmarks: an immutable (total, 3) array of x, y, confidence.

    ``source_width`` and ``source_height`` record the pixel dimensions the
    pose was extracted from (provenance only; coordinates are always stored
    normalized).
    """

    layout: PoseLayout
    data: np.ndarray
    source_width: int = 0
    source_height: int = 0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.shape != (self.layout.total, 3):
            raise LayoutError(
                f"pose has {arr.shape[0] if arr.ndim == 2 else '?'} landmarks, "
                f"layout expects {self.layout.total}"
            )
        if not np.all(np.isfinite(arr[:, :2])):
            raise ValueError("landmark coordinates must be finite")
        conf = arr[:, 2]
        if np.any(conf < 0.0) or np.any(conf > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_arrays(
        cls,
        xy: np.ndarray,
        confidence: np.ndarray | float = 1.0,
        layout: PoseLayout = DEFAULT_LAYOUT,
        source_width: int = 0,
        source_height: int = 0,
    ) -> "Pose":
        xy = np.asarray(xy, dtype=np.float64)
        conf = np.broadcast_to(np.asarray(confidence, dtype=np.float64), (xy.shape[0],))
        return cls(layout, np.column_stack([xy, conf]), source_width, source_height)

    @property
    def xy(self) -> np.ndarray:
        return self.data[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.data[:, 2]

    def valid_mask(self, threshold: float = DEFAULT_VALIDITY_THRESHOLD) -> np.ndarray:
        """Boolean mask of landmarks at or above the confidence threshold."""
        return self.data[:, 2] >= threshold

    def out_of_range_mask(self) -> np.ndarray:
        """Flags landmarks outside the unit square (artificially edited poses)."""
        xy = self.xy
        return (xy < 0.0).any(axis=1) | (xy > 1.0).any(axis=1)

    def landmark(self, index: int) -> Landmark:
        x, y, c = self.data[index]
        return Landmark(float(x), float(y), float(c))

    def group(self, group: str) -> np.ndarray:
        """The (n, 3) sub-array of one landmark group."""
        return self.data[self.layout.group_slice(group)]


@dataclass(frozen=True)
class PoseSequence:
    """A non-empty run of poses sharing one layout."""

    poses: tuple[Pose, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("pose sequence must be non-empty")
        layout = poses[0].layout
        for i, pose in enumerate(poses):
            if pose.layout != layout:
                raise LayoutError(f"pose {i + 1} has a different layout than pose 1")
        object.__setattr__(self, "poses", poses)

    @property
    def layout(self) -> PoseLayout:
        return self.poses[0].layout

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, index):
        return self.poses[index]

    def __iter__(self):
        return iter(self.poses)


def group_landmarks(pose: Pose, group: str) -> np.ndarray:
    """Contiguous (n, 3) slice of one landmark group of a pose."""
    return pose.group(group)


def pose_distance(
    q: Pose, p: Pose, threshold: float = DEFAULT_VALIDITY_THRESHOLD
) -> float:
    """Mean squared coordinate distance over landmarks valid in both poses.

    Sums (dx^2 + dy^2) over landmarks whose confidence reaches the threshold
    in both poses and divides by their count, so poses with different
    visibility stay comparable. Returns +inf when no landmark is shared.
    """
    if q.layout != p.layout:
        raise LayoutError("poses have different layouts")
    shared = q.valid_mask(threshold) & p.valid_mask(threshold)
    count = int(shared.sum())
    if count == 0:
        return float("inf")
    delta = q.xy[shared] - p.xy[shared]
    return float(np.sum(delta * delta) / count)


def _require(condition: bool, message: str):
    if not condition:
        raise FormatError(message)


def parse_pose_json(data: bytes | str, path: str = "<memory>") -> PoseSequence:
    """Parse the pose-JSON schema into a PoseSequence.

    Pixel-unit files are normalized by their declared width/height; the
    stored dimensions are kept as provenance on every pose.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc

    _require(isinstance(doc, dict), f"{path}: top level must be an object")
    layout_doc = doc.get("layout")
    _require(
        isinstance(layout_doc, dict)
        and all(isinstance(layout_doc.get(key), int) for key in ("body", "face", "hand")),
        f"{path}: 'layout' must carry integer body/face/hand counts",
    )
    try:
        layout = PoseLayout(layout_doc["body"], layout_doc["face"], layout_doc["hand"])
    except ValueError as exc:
        raise FormatError(f"{path}: invalid layout: {exc}") from exc

    units = doc.get("units", "normalized")
    _require(units in ("normalized", "pixel"), f"{path}: units must be 'normalized' or 'pixel'")
    width = doc.get("width", 0)
    height = doc.get("height", 0)
    _require(isinstance(width, int) and isinstance(height, int), f"{path}: width/height must be integers")
    if units == "pixel":
        _require(width > 0 and height > 0, f"{path}: pixel units require positive width and height")

    poses_doc = doc.get("poses")
    _require(isinstance(poses_doc, list) and poses_doc, f"{path}: 'poses' must be a non-empty list")

    poses = []
    for i, pose_doc in enumerate(poses_doc):
        _require(
            isinstance(pose_doc, dict) and isinstance(pose_doc.get("landmarks"), list),
            f"{path}: pose {i + 1} must carry a 'landmarks' list",
        )
        rows = pose_doc["landmarks"]
        if len(rows) != layout.total:
            raise LayoutError(
                f"{path}: pose {i + 1} has {len(rows)} landmarks, layout expects {layout.total}"
            )
        arr = np.empty((layout.total, 3), dtype=np.float64)
        for j, row in enumerate(rows):
            _require(
                isinstance(row, list) and len(row) == 3
                and all(isinstance(v, (int, float)) for v in row),
                f"{path}: pose {i + 1} landmark {j + 1} must be an [x, y, confidence] triple",
            )
            arr[j] = row
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: pose {i + 1} contains non-finite values")
        if np.any(arr[:, 2] < 0.0) or np.any(arr[:, 2] > 1.0):
            raise FormatError(f"{path}: pose {i + 1} has confidences outside [0, 1]")
        if units == "pixel":
            arr[:, 0] /= width
            arr[:, 1] /= height
        poses.append(Pose(layout, arr, width, height))
    return PoseSequence(tuple(poses))


def parse_pose_file(path: str | Path) -> PoseSequence:
    """Load a pose-JSON file; see parse_pose_json for the schema rules."""
    path = Path(path)
    return parse_pose_json(path.read_bytes(), str(path))


def _canonical(value: float) -> float:
    rounded = round(float(value), JSON_DECIMALS)
    return 0.0 if rounded == 0.0 else rounded


def serialize_pose_sequence(seq: PoseSequence) -> bytes:
    """Canonical pose-JSON bytes: sorted keys, coordinates quantized to 6 decimals.

    Deterministic: equal in-memory sequences always serialize to equal bytes.
    """
    first = seq.poses[0]
    doc = {
        "layout": {
            "body": seq.layout.body_count,
            "face": seq.layout.face_count,
            "hand": seq.layout.hand_count,
        },
        "units": "normalized",
        "width": first.source_width,
        "height": first.source_height,
        "poses": [
            {"landmarks": [[_canonical(x), _canonical(y), _canonical(c)] for x, y, c in pose.data]}
            for pose in seq.poses
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
