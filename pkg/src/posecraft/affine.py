"""Least-squares planar affine fitting and latent-grid editing.

Landmarks and latent cells share one normalized [0,1] x [0,1] frame: cell
(row i, col j) of an (h, w) grid has center ((j + 0.5) / w, (i + 0.5) / h).
An affine fit in that frame is therefore valid at any grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRegionError, LayoutError, SingularTransformError
from .pose import DEFAULT_VALIDITY_THRESHOLD, Pose


@dataclass(frozen=True)
class Affine2D:
    """Six-parameter planar map (x, y) -> (a x + b y + c, d x + e y + f)."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def __post_init__(self):
        if not all(map(math.isfinite, self.coefficients)):
            raise ValueError("affine coefficients must be finite")

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Affine2D":
        return cls(1.0, 0.0, dx, 0.0, 1.0, dy)

    @property
    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)

    @property
    def det(self) -> float:
        return self.a * self.e - self.b * self.d

    @property
    def is_invertible(self) -> bool:
        return self.det != 0.0

    @property
    def is_identity(self) -> bool:
        return self.coefficients == (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    def as_matrix(self) -> np.ndarray:
        """Homogeneous 3x3 matrix form."""
        return np.array(
            [[self.a, self.b, self.c], [self.d, self.e, self.f], [0.0, 0.0, 1.0]]
        )


def apply_affine(transform: Affine2D, point):
    """Apply the map to one (x, y) point or to an (n, 2) array of points."""
    pts = np.asarray(point, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 2:
        raise ValueError("points must have two coordinates")
    x, y = pts[:, 0], pts[:, 1]
    out = np.column_stack(
        [
            transform.a * x + transform.b * y + transform.c,
            transform.d * x + transform.e * y + transform.f,
        ]
    )
    if single:
        return (float(out[0, 0]), float(out[0, 1]))
    return out


def invert_affine(transform: Affine2D) -> Affine2D:
    """Exact algebraic inverse; raises SingularTransformError when det == 0."""
    det = transform.det
    if det == 0.0:
        raise SingularTransformError("affine map has zero determinant")
    ia = transform.e / det
    ib = -transform.b / det
    id_ = -transform.d / det
    ie = transform.a / det
    ic = -(ia * transform.c + ib * transform.f)
    if_ = -(id_ * transform.c + ie * transform.f)
    return Affine2D(ia, ib, ic, id_, ie, if_)


def fit_affine(src, dst) -> Affine2D:
    """Least-squares affine mapping src points onto dst points.

    With at least three non-collinear source points the normal equations
    have a unique solution. Fewer or collinear points fall back to a
    translation-only fit (a=e=1, b=d=0, offsets by the mean displacement).
    Exactly equal inputs return the exact identity.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or dst.shape != src.shape:
        raise ValueError("src and dst must be equal-length (n, 2) point arrays")
    if src.shape[0] == 0:
        raise ValueError("affine fit needs at least one point pair")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("points must be finite")

    if np.array_equal(src, dst):
        return Affine2D.identity()

    design = np.column_stack([src, np.ones(src.shape[0])])
    if src.shape[0] < 3 or np.linalg.matrix_rank(design) < 3:
        shift = dst.mean(axis=0) - src.mean(axis=0)
        return Affine2D.translation(float(shift[0]), float(shift[1]))

    beta_x, *_ = np.linalg.lstsq(design, dst[:, 0], rcond=None)
    beta_y, *_ = np.linalg.lstsq(design, dst[:, 1], rcond=None)
    return Affine2D(
        float(beta_x[0]), float(beta_x[1]), float(beta_x[2]),
        float(beta_y[0]), float(beta_y[1]), float(beta_y[2]),
    )


def warp_latent(z: np.ndarray, transform: Affine2D) -> np.ndarray:
    """Backward-warp a (c, h, w) grid through an invertible affine map.

    Each output cell center is pulled through the inverse map and bilinearly
    sampled from the input, clamping sample positions to the grid edge. The
    exact identity map short-circuits to a bit-identical copy.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError("latent grid must be (channels, height, width)")
    if transform.is_identity:
        return z.copy()
    inverse = invert_affine(transform)
    _, h, w = z.shape

    cols = (np.arange(w) + 0.5) / w
    rows = (np.arange(h) + 0.5) / h
    u, v = np.meshgrid(cols, rows)
    sx = inverse.a * u + inverse.b * v + inverse.c
    sy = inverse.d * u + inverse.e * v + inverse.f

    gx = np.clip(sx * w - 0.5, 0.0, w - 1.0)
    gy = np.clip(sy * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(gx).astype(np.intp)
    y0 = np.floor(gy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = gx - x0
    fy = gy - y0

    v00 = z[:, y0, x0]
    v01 = z[:, y0, x1]
    v10 = z[:, y1, x0]
    v11 = z[:, y1, x1]
    # Difference form keeps constant regions exactly constant.
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


@dataclass(frozen=True)
class RegionBox:
    """Half-open cell-index rectangle [x0, x1) x [y0, y1) on a latent grid."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError("region box bounds must be ordered")

    @property
    def is_empty(self) -> bool:
        return self.x0 == self.x1 or self.y0 == self.y1

    def clipped(self, grid_h: int, grid_w: int) -> "RegionBox":
        return RegionBox(
            min(max(self.x0, 0), grid_w),
            min(max(self.y0, 0), grid_h),
            min(max(self.x1, 0), grid_w),
            min(max(self.y1, 0), grid_h),
        )


def landmark_bbox(
    landmarks,
    grid_h: int,
    grid_w: int,
    padding_cells: int = 0,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> RegionBox:
    """Smallest cell-aligned box covering the valid landmarks, padded and clipped.

    Accepts (n, 2) points or (n, 3) rows whose third column is confidence.
    Raises DegenerateRegionError when no valid landmark lands on the grid.
    """
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError("landmarks must be (n, 2) or (n, 3)")
    if pts.shape[1] == 3:
        pts = pts[pts[:, 2] >= threshold, :2]
    if pts.shape[0] == 0:
        raise DegenerateRegionError("no valid landmarks for the bounding box")

    xs = pts[:, 0] * grid_w
    ys = pts[:, 1] * grid_h
    box = RegionBox(
        int(math.floor(xs.min())) - padding_cells,
        int(math.floor(ys.min())) - padding_cells,
        int(math.floor(xs.max())) + 1 + padding_cells,
        int(math.floor(ys.max())) + 1 + padding_cells,
    ).clipped(grid_h, grid_w)
    if box.is_empty:
        raise DegenerateRegionError("bounding box lies outside the grid")
    return box


def composite_region(
    base: np.ndarray, edited: np.ndarray, box: RegionBox
) -> np.ndarray:
    """Copy of base with the box region replaced by edited, all channels.

    The box is clipped to the grid; an empty intersection leaves base
    unchanged.
    """
    base = np.asarray(base, dtype=np.float64)
    edited = np.asarray(edited, dtype=np.float64)
    if base.shape != edited.shape:
        raise ValueError(f"grid shapes differ: {base.shape} vs {edited.shape}")
    if base.ndim != 3:
        raise ValueError("grids must be (channels, height, width)")
    _, h, w = base.shape
    box = box.clipped(h, w)
    out = base.copy()
    if not box.is_empty:
        out[:, box.y0 : box.y1, box.x0 : box.x1] = edited[
            :, box.y0 : box.y1, box.x0 : box.x1
        ]
    return out


@dataclass(frozen=True)
class EditConfig:
    """Which landmark groups to edit and how regions are formed."""

    edit_face: bool = True
    edit_left_hand: bool = True
    edit_right_hand: bool = True
    padding_cells: int = 0
    validity_threshold: float = DEFAULT_VALIDITY_THRESHOLD
    min_points: int = 3


@dataclass(frozen=True)
class GroupEditOutcome:
    """Record of one group's edit: either the applied transform or a skip reason."""

    group: str
    applied: bool
    reason: str | None = None
    affine: Affine2D | None = None
    box: RegionBox | None = None

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "applied": self.applied,
            "reason": self.reason,
            "affine": list(self.affine.coefficients) if self.affine else None,
            "box": [self.box.x0, self.box.y0, self.box.x1, self.box.y1] if self.box else None,
        }


def edit_latent_for_pose(
    z_r: np.ndarray,
    ref_pose: Pose,
    target_pose: Pose,
    cfg: EditConfig = EditConfig(),
) -> tuple[np.ndarray, list[GroupEditOutcome]]:
    """Warp-and-composite edit of a latent grid from a reference pose to a target pose.

    For every enabled group (face, then left hand, then right hand) with at
    least ``min_points`` landmarks valid in both poses, fits an affine from
    the reference group landmarks to the target's, warps the whole grid by
    it, and composites the warped grid inside the target group's bounding
    box. Later groups overwrite overlaps. Groups that fail a precondition
    are skipped with a recorded reason rather than failing the edit.
    """
    z_r = np.asarray(z_r, dtype=np.float64)
    if z_r.ndim != 3:
        raise ValueError("latent grid must be (channels, height, width)")
    if ref_pose.layout != target_pose.layout:
        raise LayoutError("reference and target poses have different layouts")
    _, h, w = z_r.shape

    enabled = {
        "face": cfg.edit_face,
        "left_hand": cfg.edit_left_hand,
        "right_hand": cfg.edit_right_hand,
    }
    result = z_r.copy()
    outcomes: list[GroupEditOutcome] = []
    for group in ("face", "left_hand", "right_hand"):
        if not enabled[group]:
            outcomes.append(GroupEditOutcome(group, False, "disabled"))
            continue
        ref_g = ref_pose.group(group)
        tgt_g = target_pose.group(group)
        shared = (ref_g[:, 2] >= cfg.validity_threshold) & (
            tgt_g[:, 2] >= cfg.validity_threshold
        )
        if int(shared.sum()) < cfg.min_points:
            outcomes.append(
                GroupEditOutcome(group, False, "fewer shared valid landmarks than min_points")
            )
            continue
        transform = fit_affine(ref_g[shared, :2], tgt_g[shared, :2])
        if not transform.is_invertible:
            outcomes.append(GroupEditOutcome(group, False, "fitted transform is singular"))
            continue
        tgt_valid = tgt_g[tgt_g[:, 2] >= cfg.validity_threshold, :2]
        try:
            box = landmark_bbox(tgt_valid, h, w, cfg.padding_cells, threshold=0.0)
        except DegenerateRegionError:
            outcomes.append(GroupEditOutcome(group, False, "target region outside the grid"))
            continue
        warped = warp_latent(z_r, transform)
        result = composite_region(result, warped, box)
        outcomes.append(GroupEditOutcome(group, True, affine=transform, box=box))
    return result, outcomes
