"""Point clouds, rigid transforms, and pinhole back-projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depth_io import CameraIntrinsics, DepthMap

ORTHONORMALITY_TOL = 1e-9


@dataclass
class PointCloud:
    """A set of 3D points, optionally tagged with the (x, y) pixel each came from.

    ``points`` is an (N, 3) float64 array. ``source_pixels``, when present, is a
    parallel (N, 2) int array of (column, row) coordinates, origin top-left.
    """

    points: np.ndarray
    source_pixels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")
        if self.source_pixels is not None:
            self.source_pixels = np.asarray(self.source_pixels, dtype=np.int64).reshape(-1, 2)
            if len(self.source_pixels) != len(self.points):
                raise ValueError(
                    "source_pixels length %d does not match point count %d"
                    % (len(self.source_pixels), len(self.points))
                )

    def __len__(self) -> int:
        return len(self.points)

    def extent(self) -> float:
        """Diagonal of the axis-aligned bounding box (0 for empty clouds)."""
        if len(self.points) == 0:
            return 0.0
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation. R must be orthonormal with det +1 (checked on init)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHONORMALITY_TOL:
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation matrix determinant is not +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    """Transform applying ``first`` then ``second``: p -> R2 (R1 p + t1) + t2."""
    return RigidTransform(second.R @ first.R, second.R @ first.t + second.t)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    ux, uy, uz = axis / norm
    c, s = np.cos(angle), np.sin(angle)
    cross = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    outer = np.outer([ux, uy, uz], [ux, uy, uz])
    return c * np.eye(3) + s * cross + (1 - c) * outer


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle in radians encoded by a rotation matrix."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Pointwise p -> R p + t; source pixels are carried over unchanged."""
    moved = cloud.points @ transform.R.T + transform.t
    pixels = None if cloud.source_pixels is None else cloud.source_pixels.copy()
    return PointCloud(moved, pixels)


def backproject(depth: DepthMap, intrinsics: CameraIntrinsics) -> PointCloud:
    """Lift every valid pixel of a depth map into camera coordinates.

    Pixel (u, v) with depth D maps to ((u - cx) D / fx, (v - cy) D / fy, D).
    Masked pixels produce no point. Pixel provenance is kept so per-pixel error
    rasters can be assembled later.
    """
    if depth.kind != "depth":
        raise ValueError("backprojection requires a depth-kind map, got %r" % depth.kind)
    vs, us = np.nonzero(depth.mask)
    if len(us) == 0:
        return PointCloud(np.empty((0, 3)), np.empty((0, 2), dtype=np.int64))
    d = depth.values[vs, us]
    x = (us - intrinsics.cx) * d / intrinsics.fx
    y = (vs - intrinsics.cy) * d / intrinsics.fy
    points = np.column_stack([x, y, d])
    return PointCloud(points, np.column_stack([us, vs]))
