"""Pretraining loop: scene preparation, per-step sampling and SGD with momentum."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .geom import filter_ground, fuse
from .model import Co3Model, PairSample, total_loss, voxel_inputs
from .shape_context import finalize_distribution, raw_histograms
from .synth import ScenePair, generate_scenes
from .voxel import EmptyCorrespondenceError, VoxelGrid, matching_rows, sample_correspondences, voxelize

log = logging.getLogger(__name__)

MA_WINDOW = 50


class DivergenceError(RuntimeError):
    """Training produced non-finite values, rising loss, or skipped too many batches.

    ``metrics`` holds the records up to the failure when available.
    """

    def __init__(self, message: str, metrics: "TrainMetrics | None" = None):
        super().__init__(message)
        self.metrics = metrics


@dataclass(eq=False)
class PreparedScene:
    """Ground-filtered voxel grids of both views with encoder inputs and shape targets."""

    veh: VoxelGrid
    fusion: VoxelGrid
    veh_x: np.ndarray
    fus_x: np.ndarray
    veh_q: np.ndarray
    fus_q: np.ndarray
    n_matches: int


def shape_targets(grid: VoxelGrid, cfg: RunConfig) -> np.ndarray:
    """Finalized shape-context distribution of every voxel, neighbourhood = the grid's centroids."""
    raw = raw_histograms(grid.centroids, grid.centroids, cfg.sc_config())
    return finalize_distribution(raw, cfg.sf_csp).histograms


def prepare_scene(pair: ScenePair, cfg: RunConfig) -> PreparedScene:
    fused = fuse(pair.veh_cloud, pair.inf_cloud, pair.t_veh_inf)
    veh_cloud, _ = filter_ground(pair.veh_cloud, cfg.z_thd)
    fus_cloud, _ = filter_ground(fused, cfg.z_thd)
    params = cfg.voxel_params()
    veh, fus = voxelize(veh_cloud, params), voxelize(fus_cloud, params)
    return PreparedScene(
        veh=veh,
        fusion=fus,
        veh_x=voxel_inputs(veh),
        fus_x=voxel_inputs(fus),
        veh_q=shape_targets(veh, cfg),
        fus_q=shape_targets(fus, cfg),
        n_matches=len(matching_rows(veh, fus)[0]),
    )


def draw_sample(scene: PreparedScene, cfg: RunConfig, seed: int) -> PairSample:
    """Contrastive pairs and (independently drawn) shape rows for one scene and step."""
    ss = np.random.SeedSequence(seed)
    s_pairs, s_shape = (int(x) for x in ss.generate_state(2))
    corr = sample_correspondences(scene.veh, scene.fusion, cfg.n1, True, s_pairs)
    if len(corr) < 2:
        raise EmptyCorrespondenceError("fewer than 2 correspondences; no negatives")
    rng = np.random.default_rng(s_shape)
    rv = rng.choice(len(scene.veh_x), size=min(cfg.n2, len(scene.veh_x)), replace=False)
    rf = rng.choice(len(scene.fus_x), size=min(cfg.n2, len(scene.fus_x)), replace=False)
    return PairSample(
        veh_x=scene.veh_x[corr.veh_rows],
        fus_x=scene.fus_x[corr.fusion_rows],
        shape_veh_x=scene.veh_x[rv],
        shape_veh_q=scene.veh_q[rv],
        shape_fus_x=scene.fus_x[rf],
        shape_fus_q=scene.fus_q[rf],
    )


@dataclass
class StepRecord:
    step: int
    loss: float
    co2: float
    csp: float
    pos_cos: float
    neg_cos: float

    def line(self) -> str:
        return (
            f"{self.step} {self.loss!r} {self.co2!r} {self.csp!r} "
            f"{self.pos_cos!r} {self.neg_cos!r}"
        )


@dataclass
class TrainMetrics:
    records: list[StepRecord] = field(default_factory=list)
    skipped: int = 0

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_text(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "TrainMetrics":
        out = cls()
        for line in open(path):
            parts = line.split()
            if parts:
                out.records.append(StepRecord(int(parts[0]), *(float(p) for p in parts[1:])))
        return out


def window_means(values: np.ndarray, window: int = MA_WINDOW) -> np.ndarray:
    """Means of consecutive non-overlapping windows (a trailing partial window is dropped)."""
    n = len(values) // window
    return np.asarray(values[: n * window]).reshape(n, window).mean(axis=1)


def is_non_increasing(values: np.ndarray, window: int = MA_WINDOW) -> bool:
    m = window_means(values, window)
    return bool(np.all(np.diff(m) <= 0))


def check_moving_average(metrics: "TrainMetrics", tolerance: float = 0.0, window: int = MA_WINDOW) -> None:
    """Raise DivergenceError once a completed loss window mean rises above the previous one."""
    n = len(metrics.records)
    if n < 2 * window or n % window:
        return
    prev, last = window_means(metrics.losses()[n - 2 * window :], window)
    if last > prev + tolerance * abs(prev):
        raise DivergenceError(
            f"loss moving average rose from {prev:.6g} to {last:.6g} at step {metrics.records[-1].step}",
            metrics,
        )


class SgdMomentum:
    """v <- momentum * v + grad; p <- p - lr * v."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, g, v in zip(self.params, grads, self.velocity):
            v *= self.momentum
            v += g
            p -= self.lr * v


def batch_schedule(n_scenes: int, batch: int, steps: int, seed, window: int = MA_WINDOW) -> np.ndarray:
    """(steps, batch) scene indices: consecutive slices of per-epoch shuffles.

    The shuffle stream restarts at every ``window``-step boundary, so each
    window of the loss moving average sees every scene in near-equal
    proportion (full epochs plus one partial one). A batch never repeats a
    scene; when an epoch boundary would split one, the next permutation is
    redrawn until it does not collide.
    """
    batch = min(batch, n_scenes)
    rng = np.random.default_rng(seed)
    stream: list[int] = []
    out = np.empty((steps, batch), dtype=np.int64)
    for t in range(steps):
        if t % window == 0:
            stream = []
        while len(stream) < batch:
            perm = rng.permutation(n_scenes).tolist()
            while set(stream) & set(perm[: batch - len(stream)]):
                perm = rng.permutation(n_scenes).tolist()
            stream += perm
        out[t] = stream[:batch]
        del stream[:batch]
    return out


def build_model(cfg: RunConfig, d_in: int = 5) -> Co3Model:
    return Co3Model.create(
        seed=int(np.random.SeedSequence([cfg.seed, 1]).generate_state(1)[0]),
        d_in=d_in,
        d_enc=cfg.d_enc,
        d1=cfg.d1,
        n_bin=cfg.n_bin,
        enc_hidden=cfg.enc_hidden,
        mlp1_hidden=cfg.mlp1_hidden,
        mlp2_hidden=cfg.mlp2_hidden,
    )


def pretraining_scenes(cfg: RunConfig) -> list[ScenePair]:
    data_seed = int(np.random.SeedSequence([cfg.seed, 0]).generate_state(1)[0])
    return generate_scenes(cfg.n_scenes, data_seed, cfg.scene_spec())


def pretrain(
    cfg: RunConfig,
    scenes: list[PreparedScene] | None = None,
    progress=None,
) -> tuple[Co3Model, TrainMetrics]:
    """Run ``cfg.steps`` SGD steps; returns the trained model and per-step metrics.

    All randomness derives from ``cfg.seed``: scene content, initial
    weights, batch composition and per-scene sampling, so identical configs
    give bit-identical results.
    """
    if scenes is None:
        scenes = [prepare_scene(p, cfg) for p in pretraining_scenes(cfg)]
    model = build_model(cfg, d_in=scenes[0].veh_x.shape[1])
    opt = SgdMomentum(model.parameters(), cfg.learning_rate, cfg.momentum)
    co2_cfg, csp_cfg = cfg.co2_config(), cfg.csp_config()
    metrics = TrainMetrics()
    attempted = 0
    schedule = batch_schedule(len(scenes), cfg.batch_scenes, cfg.steps, np.random.SeedSequence([cfg.seed, 3]))
    step_seeds = np.random.SeedSequence([cfg.seed, 2])
    for step in range(cfg.steps):
        rng = np.random.default_rng(step_seeds.spawn(1)[0])
        chosen = schedule[step]
        samples = []
        for slot, k in enumerate(chosen):
            attempted += 1
            try:
                samples.append(draw_sample(scenes[k], cfg, int(rng.integers(2**63))))
            except EmptyCorrespondenceError:
                metrics.skipped += 1
                log.warning("step %d: scene %d has no usable correspondences, skipped", step, k)
        if metrics.skipped > cfg.max_skip_fraction * attempted and attempted >= cfg.batch_scenes:
            raise DivergenceError(
                f"{metrics.skipped} of {attempted} scene draws had no correspondences"
            )
        model.zero_grad()
        parts = total_loss(model, samples, co2_cfg, csp_cfg, cfg.ablation) if samples else None
        if parts is None:
            continue
        values = [parts.total, parts.co2, parts.csp, parts.pos_cos, parts.neg_cos]
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite loss at step {step}")
        metrics.records.append(StepRecord(step, *values))
        if cfg.divergence_guard:
            check_moving_average(metrics, cfg.guard_tolerance)
        opt.step(model.gradients())
        model.mark_updated()
        if progress is not None:
            progress(metrics.records[-1])
    return model, metrics
