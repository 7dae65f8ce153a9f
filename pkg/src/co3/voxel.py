"""Sparse voxelization and voxel-index correspondences between two views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import PointCloud


class EmptyCorrespondenceError(RuntimeError):
    """No vehicle voxel has a partner in the fusion grid."""


@dataclass(frozen=True)
class VoxelParams:
    voxel_size: tuple = (0.4, 0.4, 0.4)
    range_min: tuple = (-40.0, -40.0, -3.0)
    range_max: tuple = (40.0, 40.0, 3.0)

    def __post_init__(self):
        size = np.asarray(self.voxel_size, dtype=np.float64)
        lo = np.asarray(self.range_min, dtype=np.float64)
        hi = np.asarray(self.range_max, dtype=np.float64)
        if size.shape != (3,) or lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("voxel_size, range_min and range_max must be 3-vectors")
        if np.any(size <= 0):
            raise ValueError("voxel_size must be positive")
        if np.any(lo >= hi):
            raise ValueError("range_min must be below range_max on every axis")

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.voxel_size, dtype=np.float64)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.range_min, dtype=np.float64)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.range_max, dtype=np.float64)

    @property
    def grid_shape(self) -> np.ndarray:
        return np.ceil((self.hi - self.lo) / self.size).astype(np.int64)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupied voxels of one cloud.

    Rows are sorted by linear voxel key, so two grids built from clouds with
    the same occupied cells list those cells in the same relative order.
    ``point_to_voxel`` holds -1 for points outside the range.
    """

    indices: np.ndarray
    centroids: np.ndarray
    features: np.ndarray
    counts: np.ndarray
    point_to_voxel: np.ndarray
    params: VoxelParams

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def keys(self) -> np.ndarray:
        return _linear_keys(self.indices, self.params.grid_shape)

    def lookup(self, indices: np.ndarray) -> np.ndarray:
        """Row of each integer voxel index in this grid, -1 where unoccupied."""
        keys = self.keys
        q = _linear_keys(np.asarray(indices, dtype=np.int64).reshape(-1, 3), self.params.grid_shape)
        if len(keys) == 0:
            return np.full(len(q), -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def voxel_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.params.lo + self.indices * self.params.size
        return lo, lo + self.params.size


def _linear_keys(indices: np.ndarray, shape: np.ndarray) -> np.ndarray:
    return (indices[:, 0] * shape[1] + indices[:, 1]) * shape[2] + indices[:, 2]


def voxelize(cloud: PointCloud, params: VoxelParams = VoxelParams()) -> VoxelGrid:
    pos = cloud.positions
    idx = np.floor((pos - params.lo) / params.size).astype(np.int64)
    shape = params.grid_shape
    inside = np.all((idx >= 0) & (idx < shape), axis=1) & np.all(pos < params.hi, axis=1)
    keys = _linear_keys(idx[inside], shape)
    uniq, first, inverse, counts = np.unique(
        keys, return_index=True, return_inverse=True, return_counts=True
    )
    m = len(uniq)
    inverse = inverse.reshape(-1)
    # sorting members by voxel makes the per-voxel sums independent of input order
    order = np.lexsort(
        (*cloud.features[inside].T[::-1], *pos[inside].T[::-1], inverse)
    )
    sorted_inv = inverse[order]
    starts = np.searchsorted(sorted_inv, np.arange(m))
    sum_pos = np.add.reduceat(pos[inside][order], starts, axis=0) if m else np.zeros((0, 3))
    feats_in = cloud.features[inside][order]
    sum_feat = (
        np.add.reduceat(feats_in, starts, axis=0) if m else np.zeros((0, cloud.feature_width))
    )
    centroids = sum_pos / counts[:, None]
    features = sum_feat / counts[:, None]
    # float rounding can push a mean a hair outside its cell; clamp back in
    cell_lo = params.lo + idx[inside][first] * params.size
    centroids = np.clip(centroids, cell_lo, cell_lo + params.size)
    p2v = np.full(len(cloud), -1, dtype=np.int64)
    p2v[inside] = inverse
    return VoxelGrid(
        indices=idx[inside][first],
        centroids=centroids,
        features=features,
        counts=counts.astype(np.int64),
        point_to_voxel=p2v,
        params=params,
    )


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Positive pairs as (vehicle row, fusion row) index arrays."""

    veh_rows: np.ndarray
    fusion_rows: np.ndarray
    rng_seed: int

    def __len__(self) -> int:
        return len(self.veh_rows)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.veh_rows, self.fusion_rows], axis=1)


def matching_rows(veh: VoxelGrid, fusion: VoxelGrid) -> tuple[np.ndarray, np.ndarray]:
    """All vehicle rows whose voxel index is occupied in ``fusion``, with partners."""
    partner = fusion.lookup(veh.indices)
    rows = np.flatnonzero(partner >= 0)
    return rows, partner[rows]


def sample_correspondences(
    veh: VoxelGrid,
    fusion: VoxelGrid,
    n1: int,
    ground_mask_applied: bool = True,
    seed: int = 0,
) -> CorrespondenceSet:
    """Draw min(n1, available) vehicle voxels without replacement and pair them by voxel index.

    ``ground_mask_applied`` records that both source clouds were ground
    filtered first; passing False is rejected because ground voxels would
    flood the negatives.
    """
    if not ground_mask_applied:
        raise ValueError("ground filtering must be applied before sampling correspondences")
    rows, partners = matching_rows(veh, fusion)
    if len(rows) == 0:
        raise EmptyCorrespondenceError("no vehicle voxel has a partner in the fusion grid")
    rng = np.random.default_rng(seed)
    k = min(int(n1), len(rows))
    pick = rng.choice(len(rows), size=k, replace=False)
    return CorrespondenceSet(rows[pick], partners[pick], seed)
