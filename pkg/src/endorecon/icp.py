"""Custom point-to-point ICP with dynamic correspondence thresholding.

Each iteration matches every source point to its exact nearest target point,
masks pairs whose distance is not strictly below a per-iteration threshold,
solves the closed-form SVD rigid update over the inliers, and accumulates the
transform. Seven threshold schemes are supported; alignment of a frame
sequence can run against the temporal predecessor or the accumulated map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, RigidTransform, apply_transform, compose
from .kdtree import NeighborIndex

SCHEME_NAMES = (
    "constant",
    "percentile90",
    "mean_factor",
    "median_factor",
    "linear_interp",
    "max_fraction",
    "mean_plus_2std",
)

_DATA_DEPENDENT = frozenset(SCHEME_NAMES) - {"constant", "linear_interp"}


@dataclass(frozen=True)
class ThresholdScheme:
    """One of seven rules producing the per-iteration inlier cutoff.

    Defaults carry the studied constants: constant cutoff 10, factor 1.5 for
    the mean/median rules, 0.8 of the maximum distance, and a linear ramp
    from 10 down to 0.1 over the iteration budget.
    """

    name: str
    value: float = 10.0
    factor: float = 1.5
    fraction: float = 0.8
    t_initial: float = 10.0
    t_final: float = 0.1

    def __post_init__(self) -> None:
        if self.name not in SCHEME_NAMES:
            raise ValueError("unknown threshold scheme %r" % self.name)
        if self.name == "constant" and self.value <= 0:
            raise ValueError("constant threshold value must be positive, got %g" % self.value)
        if self.name in ("mean_factor", "median_factor") and self.factor <= 0:
            raise ValueError("threshold factor must be positive, got %g" % self.factor)
        if self.name == "max_fraction" and not 0 < self.fraction <= 1:
            raise ValueError("max fraction must lie in (0, 1], got %g" % self.fraction)
        if self.name == "linear_interp" and not self.t_initial >= self.t_final > 0:
            raise ValueError(
                "linear ramp needs t_initial >= t_final > 0, got (%g, %g)"
                % (self.t_initial, self.t_final)
            )


def compute_threshold(
    scheme: ThresholdScheme,
    distances: np.ndarray,
    iteration: int,
    max_iterations: int,
) -> float:
    """Inlier cutoff for one iteration (0-based ``iteration``)."""
    if scheme.name == "constant":
        return scheme.value
    if scheme.name == "linear_interp":
        alpha = 0.0 if max_iterations <= 1 else iteration / (max_iterations - 1)
        return alpha * scheme.t_final + (1.0 - alpha) * scheme.t_initial
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size == 0:
        raise ValueError("scheme %r needs a non-empty distance set" % scheme.name)
    if scheme.name == "percentile90":
        return float(np.percentile(distances, 90))
    if scheme.name == "mean_factor":
        return scheme.factor * float(distances.mean())
    if scheme.name == "median_factor":
        return scheme.factor * float(np.median(distances))
    if scheme.name == "max_fraction":
        return scheme.fraction * float(distances.max())
    # mean_plus_2std, population standard deviation
    return float(distances.mean() + 2.0 * distances.std())


@dataclass
class Correspondences:
    """Per-source-point nearest-target matches with the inlier decision."""

    source_indices: np.ndarray
    target_indices: np.ndarray
    distances: np.ndarray
    inlier_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.source_indices)


def find_correspondences(
    source: PointCloud,
    target_index: NeighborIndex,
    threshold: float,
    seed_indices: np.ndarray | None = None,
) -> Correspondences:
    """Match every source point to its exact nearest target point.

    A pair is an inlier iff its distance is strictly below ``threshold``.
    """
    if len(source) == 0:
        raise ValueError("source cloud is empty")
    tgt_idx, dists = target_index.nearest_batch(source.points, seed_indices=seed_indices)
    return Correspondences(
        source_indices=np.arange(len(source), dtype=np.int64),
        target_indices=tgt_idx,
        distances=dists,
        inlier_mask=dists < threshold,
    )


def svd_rigid_step(source_inliers: PointCloud, target_inliers: PointCloud) -> RigidTransform:
    """Closed-form least-squares rigid transform mapping source onto target.

    Builds the cross-covariance of the centered point sets, takes its SVD,
    and forms the rotation with a reflection fix (negating the last column of
    V when the determinant would be -1).
    """
    src = source_inliers.points
    tgt = target_inliers.points
    if len(src) != len(tgt):
        raise ValueError("inlier sets differ in length: %d vs %d" % (len(src), len(tgt)))
    if len(src) < 3:
        raise ValueError("insufficient correspondences: need at least 3, got %d" % len(src))
    src_centroid = src.mean(axis=0)
    tgt_centroid = tgt.mean(axis=0)
    cross_cov = (src - src_centroid).T @ (tgt - tgt_centroid)
    U, S, Vt = np.linalg.svd(cross_cov)
    if S[1] <= S[0] * 1e-12:
        raise ValueError("rank-deficient covariance: inlier configuration is degenerate")
    V = Vt.T
    R = V @ U.T
    if np.linalg.det(R) < 0:
        V = V.copy()
        V[:, 2] = -V[:, 2]
        R = V @ U.T
    t = tgt_centroid - R @ src_centroid
    return RigidTransform(R, t)


@dataclass
class IcpIteration:
    """Trace row for one iteration; distance stats are over the inlier pairs."""

    iteration: int
    threshold: float
    inliers: int
    mean_distance: float
    max_distance: float


@dataclass
class IcpReport:
    per_iteration: list[IcpIteration] = field(default_factory=list)
    final_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    converged: bool = False
    iterations_run: int = 0


class IcpError(RuntimeError):
    """Alignment failure; carries the trace accumulated before the abort."""

    def __init__(self, message: str, report: IcpReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class IcpConfig:
    mode: str = "neighbor"
    scheme: ThresholdScheme = field(default_factory=lambda: ThresholdScheme("mean_plus_2std"))
    max_iterations: int = 40
    convergence_eps: float = 1e-6
    merge_novelty_radius: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("neighbor", "global"):
            raise ValueError("icp mode must be 'neighbor' or 'global', got %r" % self.mode)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1, got %d" % self.max_iterations)
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive, got %g" % self.convergence_eps)
        if self.merge_novelty_radius is not None and self.merge_novelty_radius < 0:
            raise ValueError("merge_novelty_radius must be non-negative")


def icp(
    source: PointCloud,
    target: PointCloud,
    config: IcpConfig,
    target_index: NeighborIndex | None = None,
) -> tuple[RigidTransform, IcpReport]:
    """Align ``source`` onto ``target``; returns the transform and its trace.

    Iterates correspondence search, dynamic threshold masking, and the SVD
    update until the mean inlier distance improves by less than
    ``convergence_eps`` or the iteration budget runs out. If thresholding
    removes every pair while residuals are above the convergence scale, the
    alignment aborts (the trace so far rides on the raised error).
    """
    if len(source) < 3 or len(target) < 3:
        raise ValueError("both clouds need at least 3 points")
    if target_index is None:
        target_index = NeighborIndex(target.points)
    report = IcpReport()
    accumulated = RigidTransform.identity()
    current = source
    prev_mean: float | None = None
    prev_matches: np.ndarray | None = None

    for iteration in range(config.max_iterations):
        matches = find_correspondences(current, target_index, np.inf, seed_indices=prev_matches)
        prev_matches = matches.target_indices
        threshold = compute_threshold(
            config.scheme, matches.distances, iteration, config.max_iterations
        )
        inlier = matches.distances < threshold
        n_inliers = int(inlier.sum())
        report.iterations_run = iteration + 1

        if n_inliers == 0:
            # Stats fall back to the full pair set when the mask is empty.
            mean_all = float(matches.distances.mean())
            max_all = float(matches.distances.max())
            report.per_iteration.append(IcpIteration(iteration, threshold, 0, mean_all, max_all))
            if max_all < config.convergence_eps:
                # Residuals already below the convergence scale; the
                # data-driven cutoff collapsed onto them.
                report.converged = True
                break
            report.final_transform = accumulated
            raise IcpError("threshold eliminated all correspondences", report)

        inlier_d = matches.distances[inlier]
        mean_d = float(inlier_d.mean())
        report.per_iteration.append(
            IcpIteration(iteration, threshold, n_inliers, mean_d, float(inlier_d.max()))
        )

        if prev_mean is not None and abs(mean_d - prev_mean) < config.convergence_eps:
            report.converged = True
            break
        prev_mean = mean_d

        step = svd_rigid_step(
            PointCloud(current.points[inlier]),
            PointCloud(target_index.points[matches.target_indices[inlier]]),
        )
        accumulated = compose(step, accumulated)
        current = apply_transform(current, step)

    report.final_transform = accumulated
    return accumulated, report


@dataclass
class SequenceAlignment:
    """Per-frame transforms into frame-0 coordinates plus per-pair traces.

    ``aborted_at`` is the frame index whose alignment failed, or None; the
    transform list then covers only the frames before it.
    """

    transforms: list[RigidTransform]
    reports: list[IcpReport]
    aborted_at: int | None = None
    abort_reason: str | None = None


def align_sequence(clouds: list[PointCloud], config: IcpConfig) -> SequenceAlignment:
    """Register an ordered cloud sequence into the first frame's coordinates.

    Neighbor mode chains each frame to its predecessor; global mode aligns
    each frame against the map accumulated so far (duplicates filtered by the
    merge novelty radius). A failed pair aborts the sequence at that index
    and the partial result is returned.
    """
    from .map_merge import GlobalMap, merge

    if not clouds:
        raise ValueError("need at least one cloud")
    transforms = [RigidTransform.identity()]
    reports: list[IcpReport] = []
    result = SequenceAlignment(transforms, reports)

    if config.mode == "neighbor":
        for k in range(1, len(clouds)):
            try:
                pair_transform, report = icp(clouds[k], clouds[k - 1], config)
            except (IcpError, ValueError) as exc:
                if isinstance(exc, IcpError):
                    reports.append(exc.report)
                result.aborted_at = k
                result.abort_reason = str(exc)
                return result
            reports.append(report)
            transforms.append(compose(transforms[k - 1], pair_transform))
        return result

    novelty = config.merge_novelty_radius
    global_map = GlobalMap.empty()
    global_map = merge(global_map, clouds[0], 0.0 if novelty is None else novelty, frame=0)
    for k in range(1, len(clouds)):
        target_index = NeighborIndex(global_map.cloud.points)
        try:
            to_map, report = icp(clouds[k], global_map.cloud, config, target_index=target_index)
        except (IcpError, ValueError) as exc:
            if isinstance(exc, IcpError):
                reports.append(exc.report)
            result.aborted_at = k
            result.abort_reason = str(exc)
            return result
        reports.append(report)
        transforms.append(to_map)
        aligned = apply_transform(clouds[k], to_map)
        global_map = merge(
            global_map,
            aligned,
            0.0 if novelty is None else novelty,
            frame=k,
            map_index=target_index,
        )
    return result


def error_heatmap(
    source: PointCloud,
    target_index: NeighborIndex,
    threshold: float,
    shape: tuple[int, int],
) -> np.ndarray:
    """Per-pixel raster of inlier correspondence distances.

    Pixels whose point has no match below the threshold, or that produced no
    point at all, are exactly 0.
    """
    if source.source_pixels is None:
        raise ValueError("heatmap needs source pixel provenance on the cloud")
    height, width = shape
    raster = np.zeros((height, width), dtype=np.float64)
    if len(source) == 0:
        return raster
    matches = find_correspondences(source, target_index, threshold)
    keep = matches.inlier_mask
    cols = source.source_pixels[keep, 0]
    rows = source.source_pixels[keep, 1]
    raster[rows, cols] = matches.distances[keep]
    return raster
