"""Exact nearest-neighbor search over 3D point sets.

A median-split KD-tree (widest axis, leaf size 16 by default) with the query
loop compiled by numba. Queries return the exact Euclidean minimizer; ties
are broken toward the lowest point index, which pins results for testing.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DEFAULT_LEAF_SIZE = 16
_STACK_CAPACITY = 256


@njit(cache=True)
def _query_kernel(
    pts,
    orig,
    split_dim,
    split_val,
    left,
    right,
    start,
    end,
    queries,
    seed_points,
    has_seed,
    exclude,
    out_idx,
    out_d2,
):
    node_stack = np.empty(_STACK_CAPACITY, np.int64)
    dist_stack = np.empty(_STACK_CAPACITY, np.float64)
    for qi in range(queries.shape[0]):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        skip = exclude[qi]
        best_d2 = np.inf
        best_i = -1
        if has_seed[qi]:
            dx = seed_points[qi, 0] - qx
            dy = seed_points[qi, 1] - qy
            dz = seed_points[qi, 2] - qz
            best_d2 = dx * dx + dy * dy + dz * dz
            best_i = out_idx[qi]
        top = 0
        node_stack[0] = 0
        dist_stack[0] = 0.0
        while top >= 0:
            node = node_stack[top]
            plane_d2 = dist_stack[top]
            top -= 1
            if plane_d2 > best_d2:
                continue
            while left[node] >= 0:
                ax = split_dim[node]
                if ax == 0:
                    diff = qx - split_val[node]
                elif ax == 1:
                    diff = qy - split_val[node]
                else:
                    diff = qz - split_val[node]
                if diff < 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                d2 = diff * diff
                if d2 <= best_d2:
                    top += 1
                    node_stack[top] = far
                    dist_stack[top] = d2
                node = near
            for j in range(start[node], end[node]):
                oj = orig[j]
                if oj == skip:
                    continue
                dx = pts[j, 0] - qx
                dy = pts[j, 1] - qy
                dz = pts[j, 2] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best_d2 or (d2 == best_d2 and oj < best_i):
                    best_d2 = d2
                    best_i = oj
        out_idx[qi] = best_i
        out_d2[qi] = best_d2


def _build_arrays(points: np.ndarray, leaf_size: int):
    n = len(points)
    order = np.arange(n, dtype=np.int64)
    split_dim: list[int] = []
    split_val: list[float] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    end: list[int] = []

    def new_node() -> int:
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(0)
        end.append(0)
        return len(split_dim) - 1

    def build(lo: int, hi: int) -> int:
        node = new_node()
        if hi - lo <= leaf_size:
            start[node] = lo
            end[node] = hi
            return node
        sub = points[order[lo:hi]]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        mid = (lo + hi) // 2
        part = np.argpartition(sub[:, axis], mid - lo)
        order[lo:hi] = order[lo:hi][part]
        split_dim[node] = axis
        split_val[node] = float(points[order[mid], axis])
        left[node] = build(lo, mid)
        right[node] = build(mid, hi)
        return node

    build(0, n)
    return (
        points[order],
        order,
        np.array(split_dim, dtype=np.int64),
        np.array(split_val, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(end, dtype=np.int64),
    )


class NeighborIndex:
    """Immutable spatial index over a point set; safe for concurrent queries."""

    def __init__(self, points: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE):
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise ValueError("cannot build a neighbor index over an empty cloud")
        self.points = points
        (
            self._pts,
            self._orig,
            self._split_dim,
            self._split_val,
            self._left,
            self._right,
            self._start,
            self._end,
        ) = _build_arrays(points, leaf_size)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, point: np.ndarray) -> tuple[int, float]:
        """Index and Euclidean distance of the exact nearest point."""
        idx, dist = self.nearest_batch(np.asarray(point, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(dist[0])

    def nearest_batch(
        self,
        queries: np.ndarray,
        seed_indices: np.ndarray | None = None,
        exclude_indices: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest neighbor for each query point.

        ``seed_indices`` optionally provides a starting candidate per query
        (e.g. last iteration's match) to tighten pruning; it never changes the
        result. ``exclude_indices`` removes one point index per query from
        consideration, which supports self-excluding spacing queries.
        """
        queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        m = len(queries)
        out_idx = np.full(m, -1, dtype=np.int64)
        out_d2 = np.empty(m, dtype=np.float64)
        if exclude_indices is None:
            exclude = np.full(m, -1, dtype=np.int64)
        else:
            exclude = np.ascontiguousarray(exclude_indices, dtype=np.int64)
        has_seed = np.zeros(m, dtype=np.bool_)
        seed_points = np.zeros((1, 3), dtype=np.float64)
        if seed_indices is not None:
            seeds = np.ascontiguousarray(seed_indices, dtype=np.int64)
            usable = (seeds >= 0) & (seeds != exclude)
            has_seed = usable
            out_idx[usable] = seeds[usable]
            seed_points = np.zeros((m, 3), dtype=np.float64)
            seed_points[usable] = self.points[seeds[usable]]
        elif m > 0:
            seed_points = np.zeros((m, 3), dtype=np.float64)
        _query_kernel(
            self._pts,
            self._orig,
            self._split_dim,
            self._split_val,
            self._left,
            self._right,
            self._start,
            self._end,
            queries,
            seed_points,
            has_seed,
            exclude,
            out_idx,
            out_d2,
        )
        return out_idx, np.sqrt(out_d2)


def median_nn_spacing(points: np.ndarray) -> float:
    """Median distance from each point to its nearest other point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < 2:
        raise ValueError("spacing needs at least two points")
    index = NeighborIndex(points)
    _, dists = index.nearest_batch(points, exclude_indices=np.arange(len(points), dtype=np.int64))
    return float(np.median(dists))
