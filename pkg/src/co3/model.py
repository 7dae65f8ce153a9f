"""Per-voxel encoder, projection heads and the combined pretraining objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import Co2Config, CspConfig, co2_loss, csp_loss_from_logits, pair_cosines
from .nn import MlpStack, l2_normalize
from .voxel import VoxelGrid

ABLATIONS = ("both", "co2-only", "csp-only")


def voxel_inputs(grid: VoxelGrid) -> np.ndarray:
    """Encoder input rows: centroid offset inside the voxel (centred, in voxel units), mean features, log(count)."""
    lo, _ = grid.voxel_boxes()
    offset = (grid.centroids - lo) / grid.params.size - 0.5
    return np.hstack([offset, grid.features, np.log(grid.counts)[:, None].astype(np.float64)])


@dataclass(eq=False)
class Co3Model:
    """Encoder f_enc plus the contrastive head (MLP_1) and the shape head (MLP_2)."""

    encoder: MlpStack
    mlp1: MlpStack
    mlp2: MlpStack

    @classmethod
    def create(
        cls,
        seed: int,
        d_in: int = 5,
        d_enc: int = 64,
        d1: int = 256,
        n_bin: int = 32,
        enc_hidden: int = 64,
        mlp1_hidden: int = 256,
        mlp2_hidden: int = 128,
    ) -> "Co3Model":
        rng = np.random.default_rng(seed)
        return cls(
            MlpStack.create([d_in, enc_hidden, d_enc], rng),
            MlpStack.create([d_enc, mlp1_hidden, d1], rng),
            MlpStack.create([d_enc, mlp2_hidden, n_bin], rng),
        )

    @property
    def stacks(self) -> list[MlpStack]:
        return [self.encoder, self.mlp1, self.mlp2]

    def parameters(self) -> list[np.ndarray]:
        return [p for s in self.stacks for p in s.parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for s in self.stacks for g in s.gradients()]

    def zero_grad(self) -> None:
        for s in self.stacks:
            s.zero_grad()

    def mark_updated(self) -> None:
        for s in self.stacks:
            s.mark_updated()

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.forward(x)[0]

    def copy(self) -> "Co3Model":
        return Co3Model(*(s.copy() for s in self.stacks))

    def equals(self, other: "Co3Model") -> bool:
        return all(a.equals(b) for a, b in zip(self.stacks, other.stacks))


@dataclass(eq=False)
class PairSample:
    """Encoder inputs drawn from one scene pair for one step.

    ``veh_x[n]`` and ``fus_x[n]`` are the n-th positive pair; the shape
    rows carry their finalized target distributions.
    """

    veh_x: np.ndarray
    fus_x: np.ndarray
    shape_veh_x: np.ndarray
    shape_veh_q: np.ndarray
    shape_fus_x: np.ndarray
    shape_fus_q: np.ndarray


@dataclass
class LossParts:
    total: float = 0.0
    co2: float = 0.0
    csp: float = 0.0
    pos_cos: float = 0.0
    neg_cos: float = 0.0
    pairs: int = 0
    scenes: int = 0
    extra: dict = field(default_factory=dict)


def total_loss(
    model: Co3Model,
    samples: list[PairSample],
    co2_cfg: Co2Config = Co2Config(),
    csp_cfg: CspConfig = CspConfig(),
    ablation: str = "both",
    backward: bool = True,
) -> LossParts:
    """L = sum over scene pairs of L_co2 + w_csp * L_csp; gradients accumulate into ``model``.

    L_csp averages the vehicle and fusion branches. Under "co2-only" the
    shape branch is skipped; under "csp-only" the contrastive branch still
    runs forward for the cosine statistics but contributes neither loss nor
    gradient. Cosines are averaged over scenes; losses are summed.
    """
    if ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}")
    use_co2 = ablation != "csp-only"
    use_csp = ablation != "co2-only"
    out = LossParts()
    for s in samples:
        n = len(s.veh_x)
        blocks = [s.veh_x, s.fus_x]
        if use_csp:
            blocks += [s.shape_veh_x, s.shape_fus_x]
        sizes = [len(b) for b in blocks]
        enc, enc_cache = model.encoder.forward(np.vstack(blocks))
        d_enc = np.zeros_like(enc)

        proj, cache1 = model.mlp1.forward(enc[: 2 * n])
        z, norm_back = l2_normalize(proj)
        l_co2, g_veh, g_fus = co2_loss(z[:n], z[n:], co2_cfg)
        pos, neg = pair_cosines(z[:n], z[n:])
        out.pos_cos += pos
        out.neg_cos += neg
        out.pairs += n
        if use_co2:
            out.co2 += l_co2
            out.total += l_co2
            if backward:
                d_enc[: 2 * n] = model.mlp1.backward(cache1, norm_back(np.vstack([g_veh, g_fus])))

        if use_csp:
            a = 2 * n
            logits, cache2 = model.mlp2.forward(enc[a:])
            lv, gv = csp_loss_from_logits(logits[: sizes[2]], s.shape_veh_q)
            lf, gf = csp_loss_from_logits(logits[sizes[2] :], s.shape_fus_q)
            l_csp = 0.5 * (lv + lf)
            out.csp += l_csp
            out.total += csp_cfg.w_csp * l_csp
            if backward:
                scale = 0.5 * csp_cfg.w_csp
                d_enc[a:] = model.mlp2.backward(cache2, scale * np.vstack([gv, gf]))

        if backward:
            model.encoder.backward(enc_cache, d_enc)
        out.scenes += 1
    if out.scenes:
        out.pos_cos /= out.scenes
        out.neg_cos /= out.scenes
    return out
