"""Point clouds, rigid transforms, cooperative fusion and ground filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised when a cloud or transform violates its invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points with xyz positions and a d-wide feature block (intensity by default).

    ``source_ids`` tags each point with the world-point it was sampled from;
    synthetic scenes use it to check correspondences exactly.
    """

    positions: np.ndarray
    features: np.ndarray = None
    source_ids: np.ndarray | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        if self.features is None:
            feat = np.zeros((len(pos), 1))
        else:
            feat = np.array(self.features, dtype=np.float64)
            if feat.ndim == 1:
                feat = feat.reshape(-1, 1)
        if feat.shape[0] != pos.shape[0]:
            raise GeometryError(
                f"positions have {pos.shape[0]} rows but features have {feat.shape[0]}"
            )
        if not np.all(np.isfinite(pos)):
            raise GeometryError("non-finite point position")
        ids = None
        if self.source_ids is not None:
            ids = np.array(self.source_ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != pos.shape[0]:
                raise GeometryError("source_ids length does not match point count")
            ids = _frozen(ids)
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "features", _frozen(feat))
        object.__setattr__(self, "source_ids", ids)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    def subset(self, mask_or_index) -> "PointCloud":
        ids = None if self.source_ids is None else self.source_ids[mask_or_index]
        return PointCloud(
            self.positions[mask_or_index], self.features[mask_or_index], ids
        )

    def equals(self, other: "PointCloud") -> bool:
        """Bit-exact comparison, including source ids."""
        if (self.source_ids is None) != (other.source_ids is None):
            return False
        same_ids = self.source_ids is None or np.array_equal(
            self.source_ids, other.source_ids
        )
        return (
            same_ids
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.features, other.features)
        )

    @classmethod
    def empty(cls, feature_width: int = 1) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, feature_width)))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element mapping x to ``rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise GeometryError("non-finite transform")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply_points(self, xyz: np.ndarray) -> np.ndarray:
        return xyz @ self.rotation.T + self.translation

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, rtol=0, atol=atol) and np.allclose(
            self.translation, other.translation, rtol=0, atol=atol
        )


def apply_transform(cloud: PointCloud, t: RigidTransform) -> PointCloud:
    xyz = t.apply_points(cloud.positions)
    if not np.all(np.isfinite(xyz)):
        raise GeometryError("transform produced a non-finite position")
    return PointCloud(xyz, cloud.features, cloud.source_ids)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a ∘ b`` (apply ``b`` first)."""
    return RigidTransform(
        a.rotation @ b.rotation, a.rotation @ b.translation + a.translation
    )


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def fuse(veh: PointCloud, inf: PointCloud, t: RigidTransform) -> PointCloud:
    """Vehicle cloud verbatim followed by the infrastructure cloud mapped into the vehicle frame."""
    if veh.feature_width != inf.feature_width:
        raise GeometryError(
            f"feature width mismatch: vehicle {veh.feature_width}, infrastructure {inf.feature_width}"
        )
    moved = apply_transform(inf, t)
    ids = None
    if veh.source_ids is not None and moved.source_ids is not None:
        ids = np.concatenate([veh.source_ids, moved.source_ids])
    return PointCloud(
        np.concatenate([veh.positions, moved.positions]),
        np.concatenate([veh.features, moved.features]),
        ids,
    )


def filter_ground(cloud: PointCloud, z_thd: float) -> tuple[PointCloud, np.ndarray]:
    """Drop points with z < z_thd; points exactly on the threshold are kept."""
    keep = cloud.positions[:, 2] >= z_thd
    return cloud.subset(keep), keep
