"""Fusing aligned frame clouds into the global map with novelty filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud
from .kdtree import NeighborIndex


@dataclass
class GlobalMap:
    """Accumulated point cloud; each point remembers the frame it came from."""

    cloud: PointCloud
    frame_provenance: np.ndarray

    def __post_init__(self) -> None:
        self.frame_provenance = np.asarray(self.frame_provenance, dtype=np.int64).reshape(-1)
        if len(self.frame_provenance) != len(self.cloud):
            raise ValueError(
                "provenance length %d does not match point count %d"
                % (len(self.frame_provenance), len(self.cloud))
            )

    @classmethod
    def empty(cls) -> "GlobalMap":
        return cls(PointCloud(np.empty((0, 3))), np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.cloud)


def merge(
    global_map: GlobalMap,
    aligned: PointCloud,
    novelty_radius: float,
    frame: int,
    map_index: NeighborIndex | None = None,
) -> GlobalMap:
    """Append the points of ``aligned`` that represent new geometry.

    A point survives iff its nearest-neighbor distance to the existing map is
    strictly greater than ``novelty_radius``; everything else is treated as a
    duplicate of already-mapped geometry. An empty map absorbs the incoming
    cloud wholesale. ``map_index`` may pass a prebuilt index over the current
    map to avoid rebuilding it.
    """
    if novelty_radius < 0:
        raise ValueError("novelty radius must be non-negative, got %g" % novelty_radius)
    if len(aligned) == 0:
        return GlobalMap(
            PointCloud(global_map.cloud.points.copy()), global_map.frame_provenance.copy()
        )
    if len(global_map) == 0:
        return GlobalMap(
            PointCloud(aligned.points.copy()),
            np.full(len(aligned), frame, dtype=np.int64),
        )
    if map_index is None:
        map_index = NeighborIndex(global_map.cloud.points)
    _, dists = map_index.nearest_batch(aligned.points)
    novel = dists > novelty_radius
    merged_points = np.vstack([global_map.cloud.points, aligned.points[novel]])
    merged_prov = np.concatenate(
        [global_map.frame_provenance, np.full(int(novel.sum()), frame, dtype=np.int64)]
    )
    return GlobalMap(PointCloud(merged_points), merged_prov)
