"""Synthetic scenes with exactly known geometry for end-to-end verification.

A scene is a smooth heightfield (base plane plus seeded radial bumps) viewed
by a camera trajectory. Depth maps are rendered by ray-surface intersection,
so every rendered pixel, pose, mask, and injected corruption is known in
closed form. All randomness flows through PCG64 generators seeded from
``SeedSequence``: the surface uses spawn key (0,), frame k uses spawn key
(1, k), which keeps per-frame rendering independent and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depth_io import CameraIntrinsics, DepthMap
from .geometry import PointCloud, RigidTransform, apply_transform, rotation_about_axis

_BISECTION_STEPS = 48


@dataclass(frozen=True)
class HeightfieldSpec:
    """Base plane depth plus randomly placed smooth radial bumps."""

    base_depth: float = 10.0
    extent: float = 8.0
    bump_count: int = 6
    bump_amplitude: float = 1.2
    bump_width: tuple[float, float] = (0.8, 2.0)


@dataclass
class Heightfield:
    spec: HeightfieldSpec
    centers: np.ndarray
    amplitudes: np.ndarray
    widths: np.ndarray

    @classmethod
    def from_seed(cls, spec: HeightfieldSpec, seed: int) -> "Heightfield":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
        n = spec.bump_count
        centers = rng.uniform(-spec.extent, spec.extent, size=(n, 2))
        amplitudes = rng.uniform(-spec.bump_amplitude, spec.bump_amplitude, size=n)
        widths = rng.uniform(spec.bump_width[0], spec.bump_width[1], size=n)
        return cls(spec, centers, amplitudes, widths)

    def height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Surface z at world (x, y); larger z is farther from the camera side."""
        z = np.full(np.broadcast(x, y).shape, self.spec.base_depth, dtype=np.float64)
        for (cx, cy), amp, width in zip(self.centers, self.amplitudes, self.widths):
            z += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * width**2))
        return z

    def z_bounds(self) -> tuple[float, float]:
        slack = float(np.sum(np.abs(self.amplitudes)))
        return self.spec.base_depth - slack, self.spec.base_depth + slack


@dataclass
class SyntheticScene:
    """Heightfield, camera trajectory, and the corruption knobs for rendering."""

    surface: HeightfieldSpec
    trajectory: list[RigidTransform]
    intrinsics: CameraIntrinsics
    width: int
    height: int
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    border_px: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier fraction must lie in [0, 1)")
        if self.border_px < 0:
            raise ValueError("border width must be non-negative")
        if not self.trajectory:
            raise ValueError("trajectory needs at least one pose")


def _frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, frame))))


def render_depth(
    field: Heightfield,
    pose: RigidTransform,
    intrinsics: CameraIntrinsics,
    width: int,
    height: int,
) -> np.ndarray:
    """Exact per-pixel depth of the heightfield seen from a camera pose.

    ``pose`` maps camera coordinates into world coordinates. Depth is the
    camera-frame z of the ray-surface intersection, found by bisection.
    """
    us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    dirs_cam = np.stack(
        [(us - intrinsics.cx) / intrinsics.fx, (vs - intrinsics.cy) / intrinsics.fy, np.ones_like(us)],
        axis=-1,
    )
    rays = dirs_cam @ pose.R.T
    origin = pose.t
    rz = rays[..., 2]
    if np.any(rz <= 0):
        raise ValueError("degenerate pose: some view rays never reach the surface")
    if origin[2] >= field.height(origin[0], origin[1]):
        raise ValueError("degenerate pose: camera is behind the surface")

    z_lo, z_hi = field.z_bounds()
    lo = np.maximum((z_lo - origin[2]) / rz, 0.0)
    hi = (z_hi - origin[2]) / rz + 1.0
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = (
            origin[2] + mid * rz
            - field.height(origin[0] + mid * rays[..., 0], origin[1] + mid * rays[..., 1])
        ) >= 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def render_depth_sequence(scene: SyntheticScene) -> tuple[list[DepthMap], list[RigidTransform]]:
    """Depth maps for every trajectory pose plus the ground-truth poses.

    Each map carries scene noise, the requested count of gross outliers
    (exactly floor(fraction * valid pixels), values 3x to 10x the frame
    maximum), and a zero-depth invalid border of ``border_px`` pixels.
    """
    field = Heightfield.from_seed(scene.surface, scene.seed)
    maps = []
    for frame, pose in enumerate(scene.trajectory):
        depth = render_depth(field, pose, scene.intrinsics, scene.width, scene.height)
        rng = _frame_rng(scene.seed, frame)
        noise = rng.normal(0.0, scene.noise_sigma, size=depth.shape)
        depth = depth + noise

        mask = np.ones(depth.shape, dtype=bool)
        b = scene.border_px
        if b > 0:
            mask[:b, :] = False
            mask[-b:, :] = False
            mask[:, :b] = False
            mask[:, -b:] = False
        depth[~mask] = 0.0

        valid_flat = np.flatnonzero(mask)
        n_outliers = int(scene.outlier_fraction * len(valid_flat))
        if n_outliers > 0:
            chosen = rng.choice(valid_flat, size=n_outliers, replace=False)
            peak = float(depth[mask].max())
            depth.flat[chosen] = rng.uniform(3.0 * peak, 10.0 * peak, size=n_outliers)
        maps.append(DepthMap(depth, mask, "depth"))
    return maps, list(scene.trajectory)


def render_frame_images(maps: list[DepthMap]) -> list[np.ndarray]:
    """8-bit RGB visualizations: near surfaces bright, invalid pixels black.

    Valid pixels are mapped into [20, 255] so no interior pixel can be
    mistaken for border black by the universal mask.
    """
    images = []
    for depth in maps:
        img = np.zeros(depth.shape, dtype=np.float64)
        valid = depth.values[depth.mask]
        lo, hi = float(valid.min()), float(valid.max())
        if hi > lo:
            img[depth.mask] = 20.0 + 235.0 * (hi - depth.values[depth.mask]) / (hi - lo)
        else:
            img[depth.mask] = 128.0
        gray = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        images.append(np.repeat(gray[:, :, None], 3, axis=2))
    return images


def perturb_cloud(
    cloud: PointCloud,
    transform: RigidTransform,
    noise_sigma: float = 0.0,
    outlier_fraction: float = 0.0,
    seed: int = 0,
) -> PointCloud:
    """Apply a rigid transform, then noise, then gross outliers.

    Exactly floor(fraction * n) points are replaced with uniform samples from
    the cloud's bounding box expanded tenfold about its center. Draw order is
    fixed (noise, outlier indices, outlier coordinates) so a seed pins the
    result regardless of which knobs are zero.
    """
    if not 0 <= outlier_fraction < 1:
        raise ValueError("outlier fraction must lie in [0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    moved = apply_transform(cloud, transform)
    points = moved.points + rng.normal(0.0, noise_sigma, size=moved.points.shape)
    n_outliers = int(outlier_fraction * len(points))
    if n_outliers > 0:
        idx = rng.choice(len(points), size=n_outliers, replace=False)
        center = 0.5 * (points.max(axis=0) + points.min(axis=0))
        half = 0.5 * (points.max(axis=0) - points.min(axis=0))
        half = np.where(half == 0, 1.0, half)
        points[idx] = rng.uniform(center - 10 * half, center + 10 * half, size=(n_outliers, 3))
    return PointCloud(points, moved.source_pixels)


def make_default_trajectory(n_frames: int) -> list[RigidTransform]:
    """Slow sweep: small per-frame translation plus a gentle rotation."""
    poses = []
    axis = np.array([0.3, 1.0, 0.2])
    for k in range(n_frames):
        R = rotation_about_axis(axis, 0.004 * k)
        t = np.array([0.08 * k, 0.05 * k, 0.02 * k])
        poses.append(RigidTransform(R, t))
    return poses


def make_default_scene(
    seed: int = 0,
    n_frames: int = 10,
    width: int = 320,
    height: int = 240,
    noise_sigma: float = 0.0,
    outlier_fraction: float = 0.0,
    border_px: int = 3,
) -> SyntheticScene:
    intrinsics = CameraIntrinsics(
        fx=1.1 * max(width, height),
        fy=1.1 * max(width, height),
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        baseline=1.0,
    )
    return SyntheticScene(
        surface=HeightfieldSpec(),
        trajectory=make_default_trajectory(n_frames),
        intrinsics=intrinsics,
        width=width,
        height=height,
        noise_sigma=noise_sigma,
        outlier_fraction=outlier_fraction,
        border_px=border_px,
        seed=seed,
    )
