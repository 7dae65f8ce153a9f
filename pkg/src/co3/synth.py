"""Deterministic two-sensor synthetic scenes: flat ground, box cars and cylinder pedestrians.

A world point set is built once per scene; the vehicle and infrastructure
views are independent random subsamples of it seen from two poses, so
shared points carry the same ``source_id`` in both clouds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geom import PointCloud, RigidTransform, compose, invert
from .cloud_io import CloudFormatError, read_binary, write_binary

GROUND, CAR, PEDESTRIAN = 0, 1, 2
CLASS_NAMES = ("ground", "vehicle-object", "pedestrian-object")

VEHICLE_SENSOR_HEIGHT = 1.9
INFRA_ELEVATION = 4.0
INFRA_OFFSET = 20.0
INFRA_YAW = np.pi / 2
OBJECT_CLEARANCE = 0.15
CAR_SIZE = (4.2, 1.8, 1.5)
PED_RADIUS, PED_HEIGHT = 0.3, 1.7


@dataclass(frozen=True)
class SceneSpec:
    extent: float = 25.0  # half-width of the square world, m
    n_objects: int = 6
    car_fraction: float = 0.6
    ground_noise: float = 0.02  # sensor noise sigma, m
    ground_spacing: float = 0.3
    surface_density: float = 30.0  # object points per m^2
    keep_prob: float = 0.6
    sector_deg: float = 270.0
    seed: int = 0

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if self.ground_noise < 0:
            raise ValueError("ground_noise must be non-negative")
        if self.n_objects < 0:
            raise ValueError("n_objects must be non-negative")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class ScenePair:
    veh_cloud: PointCloud
    inf_cloud: PointCloud  # infrastructure frame
    t_veh_inf: RigidTransform
    point_labels: np.ndarray  # class per source_id

    def labels_of(self, cloud: PointCloud) -> np.ndarray:
        return self.point_labels[cloud.source_ids]

    def equals(self, other: "ScenePair") -> bool:
        return (
            self.veh_cloud.equals(other.veh_cloud)
            and self.inf_cloud.equals(other.inf_cloud)
            and self.t_veh_inf.allclose(other.t_veh_inf, atol=0.0)
            and np.array_equal(self.point_labels, other.point_labels)
        )


def vehicle_pose() -> RigidTransform:
    """Vehicle sensor in the world frame."""
    return RigidTransform(np.eye(3), (0.0, 0.0, VEHICLE_SENSOR_HEIGHT))


def infrastructure_pose() -> RigidTransform:
    return RigidTransform.from_yaw(
        INFRA_YAW, (INFRA_OFFSET, 0.0, VEHICLE_SENSOR_HEIGHT + INFRA_ELEVATION)
    )


def intensity_of_range(r: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + r / 20.0)


def _box_surface(rng, center, size, yaw, density):
    lx, ly, lz = size
    faces = [  # (area, sampler) for the four sides and the roof
        (ly * lz, lambda n: np.c_[np.full(n, lx / 2), rng.uniform(-ly / 2, ly / 2, n), rng.uniform(0, lz, n)]),
        (ly * lz, lambda n: np.c_[np.full(n, -lx / 2), rng.uniform(-ly / 2, ly / 2, n), rng.uniform(0, lz, n)]),
        (lx * lz, lambda n: np.c_[rng.uniform(-lx / 2, lx / 2, n), np.full(n, ly / 2), rng.uniform(0, lz, n)]),
        (lx * lz, lambda n: np.c_[rng.uniform(-lx / 2, lx / 2, n), np.full(n, -ly / 2), rng.uniform(0, lz, n)]),
        (lx * ly, lambda n: np.c_[rng.uniform(-lx / 2, lx / 2, n), rng.uniform(-ly / 2, ly / 2, n), np.full(n, lz)]),
    ]
    pts = np.concatenate([f(max(1, int(round(a * density)))) for a, f in faces])
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return pts @ rot.T + center


def _cylinder_surface(rng, center, radius, height, density):
    n_side = max(1, int(round(2 * np.pi * radius * height * density)))
    n_top = max(1, int(round(np.pi * radius**2 * density)))
    th = rng.uniform(0, 2 * np.pi, n_side)
    side = np.c_[radius * np.cos(th), radius * np.sin(th), rng.uniform(0, height, n_side)]
    r = radius * np.sqrt(rng.uniform(0, 1, n_top))
    th = rng.uniform(0, 2 * np.pi, n_top)
    top = np.c_[r * np.cos(th), r * np.sin(th), np.full(n_top, height)]
    return np.concatenate([side, top]) + center


def build_world(spec: SceneSpec, rng: np.random.Generator):
    """World points (z up, ground at z=0) and their class labels."""
    g = np.arange(-spec.extent, spec.extent + 1e-9, spec.ground_spacing)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    ground = np.c_[gx.ravel(), gy.ravel(), np.zeros(gx.size)]
    parts, labels = [ground], [np.full(len(ground), GROUND)]
    keep_out = [np.zeros(2), np.array([INFRA_OFFSET, 0.0])]
    placed: list[np.ndarray] = []
    attempts = 0
    while len(placed) < spec.n_objects and attempts < 1000 * (spec.n_objects + 1):
        attempts += 1
        xy = rng.uniform(-spec.extent + 3, spec.extent - 3, 2)
        if any(np.linalg.norm(xy - k) < 4.0 for k in keep_out + placed):
            continue
        placed.append(xy)
        base = np.array([xy[0], xy[1], OBJECT_CLEARANCE])
        if rng.uniform() < spec.car_fraction:
            parts.append(_box_surface(rng, base, CAR_SIZE, rng.uniform(0, np.pi), spec.surface_density))
            labels.append(np.full(len(parts[-1]), CAR))
        else:
            parts.append(_cylinder_surface(rng, base, PED_RADIUS, PED_HEIGHT, spec.surface_density))
            labels.append(np.full(len(parts[-1]), PEDESTRIAN))
    return np.concatenate(parts), np.concatenate(labels)


def capture_view(
    world: np.ndarray,
    pose: RigidTransform,
    keep_prob: float,
    sector: tuple[float, float],
    sigma: float,
    seed: int,
) -> PointCloud:
    """Points of ``world`` seen by a sensor at ``pose`` (sensor -> world).

    ``sector`` is (centre, width) of the azimuth window in radians, sensor
    frame. Each point in the window survives an independent keep_prob coin
    flip and then gets Gaussian noise of scale ``sigma``, clipped to radius
    1.5 sigma; source ids index ``world``.
    """
    if not 0 <= keep_prob <= 1:
        raise ValueError("keep_prob must be in [0, 1]")
    rng = np.random.default_rng(seed)
    local = invert(pose).apply_points(np.asarray(world, dtype=np.float64))
    centre, width = sector
    az = np.arctan2(local[:, 1], local[:, 0])
    off = np.abs(np.angle(np.exp(1j * (az - centre))))
    in_sector = off <= width / 2 + 1e-12
    coin = rng.uniform(size=len(local)) < keep_prob
    ids = np.flatnonzero(in_sector & coin)
    pts = local[ids]
    if sigma > 0:
        noise = rng.normal(scale=sigma, size=pts.shape)
        # radial clip at 1.5 sigma: two views of one point stay within 3 sigma
        norm = np.linalg.norm(noise, axis=1, keepdims=True)
        noise *= np.minimum(1.0, 1.5 * sigma / np.maximum(norm, 1e-300))
        pts = pts + noise
    rng_dist = np.linalg.norm(pts, axis=1)
    return PointCloud(pts, intensity_of_range(rng_dist)[:, None], ids)


def generate_scene(spec: SceneSpec = SceneSpec()) -> ScenePair:
    seeds = np.random.SeedSequence(spec.seed).spawn(3)
    world, labels = build_world(spec, np.random.default_rng(seeds[0]))
    width = np.deg2rad(spec.sector_deg)
    veh_pose, inf_pose = vehicle_pose(), infrastructure_pose()
    # the infrastructure sensor looks back towards the vehicle
    to_vehicle = invert(inf_pose).apply_points(veh_pose.translation[None])[0]
    inf_centre = float(np.arctan2(to_vehicle[1], to_vehicle[0]))
    veh = capture_view(world, veh_pose, spec.keep_prob, (0.0, width), spec.ground_noise,
                       int(seeds[1].generate_state(1)[0]))
    inf = capture_view(world, inf_pose, spec.keep_prob, (inf_centre, width), spec.ground_noise,
                       int(seeds[2].generate_state(1)[0]))
    return ScenePair(veh, inf, compose(invert(veh_pose), inf_pose), labels)


def shared_fraction(pair: ScenePair) -> float:
    """Fraction of vehicle source ids also present in the infrastructure view."""
    if len(pair.veh_cloud) == 0:
        return 0.0
    return float(np.isin(pair.veh_cloud.source_ids, pair.inf_cloud.source_ids).mean())


def generate_scenes(n: int, seed: int, spec: SceneSpec = SceneSpec()) -> list[ScenePair]:
    """``n`` scenes with per-scene seeds derived from ``seed``."""
    states = np.random.SeedSequence(seed).generate_state(n)
    return [generate_scene(replace(spec, seed=int(s))) for s in states]


# on-disk layout: veh.co3p, inf.co3p, t.txt (rotation row-major then translation),
# labels.txt with one "source_id class" line per point, vehicle points then infrastructure points


def write_scene(pair: ScenePair, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_binary(pair.veh_cloud, d / "veh.co3p")
    write_binary(pair.inf_cloud, d / "inf.co3p")
    vals = list(pair.t_veh_inf.rotation.ravel()) + list(pair.t_veh_inf.translation)
    (d / "t.txt").write_text(" ".join(repr(float(v)) for v in vals) + "\n")
    ids = np.concatenate([pair.veh_cloud.source_ids, pair.inf_cloud.source_ids])
    cls = pair.point_labels[ids]
    (d / "labels.txt").write_text("".join(f"{i} {c}\n" for i, c in zip(ids, cls)))


def read_scene(directory) -> ScenePair:
    d = Path(directory)
    veh = read_binary(d / "veh.co3p")
    inf = read_binary(d / "inf.co3p")
    vals = np.array((d / "t.txt").read_text().split(), dtype=np.float64)
    if vals.size != 12:
        raise CloudFormatError(f"{d / 't.txt'}: expected 12 numbers, found {vals.size}")
    t = RigidTransform(vals[:9].reshape(3, 3), vals[9:])
    rows = np.loadtxt(d / "labels.txt", dtype=np.int64, ndmin=2)
    if len(rows) != len(veh) + len(inf):
        raise CloudFormatError(f"{d / 'labels.txt'}: expected {len(veh) + len(inf)} lines, found {len(rows)}")
    ids, cls = rows[:, 0], rows[:, 1]
    labels = np.zeros(int(ids.max()) + 1 if len(ids) else 0, dtype=np.int64)
    labels[ids] = cls
    veh = PointCloud(veh.positions, veh.features, ids[: len(veh)])
    inf = PointCloud(inf.positions, inf.features, ids[len(veh):])
    return ScenePair(veh, inf, t, labels)
