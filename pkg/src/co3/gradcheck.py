"""Finite-difference gate for the full pretraining objective on a small batch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .losses import co2_loss, csp_loss_from_logits
from .model import Co3Model, PairSample, total_loss
from .nn import grad_check, l2_normalize
from .synth import SceneSpec, generate_scene
from .training import build_model, draw_sample, prepare_scene

GATE_OVERRIDES = dict(n1=8, n2=8, d1=16)
STACKS = ("encoder", "mlp1", "mlp2")


@dataclass
class GateResult:
    max_rel_err: float
    mutated_rel_err: float
    n_params: int
    min_margin: float


def gate_problem(seed: int = 0, cfg: RunConfig | None = None) -> tuple[Co3Model, list[PairSample], RunConfig]:
    """Model and an 8-pair single-scene batch with ReLU pre-activations kept away from zero.

    Redraws the sample (the "nudge") until every pre-activation clears a
    margin large enough that central differences never cross a kink.
    """
    cfg = (cfg or RunConfig()).with_overrides(seed=seed, **GATE_OVERRIDES)
    scene = prepare_scene(generate_scene(SceneSpec(seed=seed, n_objects=3)), cfg)
    model = build_model(cfg)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(50):
        sample = draw_sample(scene, cfg, int(rng.integers(2**63)))
        margin = relu_margin(model, sample)
        if best is None or margin > best[0]:
            best = (margin, sample)
        if margin > 1e-4:
            break
    return model, [best[1]], cfg


def relu_margin(model: Co3Model, sample: PairSample) -> float:
    """Smallest |pre-activation| of any ReLU unit for this sample."""
    x = np.vstack([sample.veh_x, sample.fus_x, sample.shape_veh_x, sample.shape_fus_x])
    enc, (_, acts) = model.encoder.forward(x)
    margins = [np.abs(z).min() for layer, (_, z) in zip(model.encoder.layers, acts) if layer.activation == "relu"]
    n = len(sample.veh_x)
    for stack, inp in ((model.mlp1, enc[: 2 * n]), (model.mlp2, enc[2 * n :])):
        _, (_, acts) = stack.forward(inp)
        margins += [np.abs(z).min() for layer, (_, z) in zip(stack.layers, acts) if layer.activation == "relu"]
    return float(min(margins))


class BranchObjective:
    """Value of the pretraining objective with the encoder output cached.

    Perturbing a head parameter leaves the encoder output and the other
    branch unchanged, so only that head's branch is re-evaluated. Built
    from the kernels directly rather than through ``total_loss``, which
    makes it an independent check on the composition as well.
    """

    def __init__(self, model: Co3Model, samples: list[PairSample], cfg: RunConfig):
        self.model = model
        self.samples = samples
        self.co2_cfg = cfg.co2_config()
        self.w_csp = cfg.w_csp
        self.enc = self.encode()
        self.co2 = self.co2_value(self.enc)
        self.csp = self.csp_value(self.enc)

    def encode(self) -> list[np.ndarray]:
        return [
            self.model.encoder.forward(np.vstack([s.veh_x, s.fus_x, s.shape_veh_x, s.shape_fus_x]))[0]
            for s in self.samples
        ]

    def co2_value(self, enc: list[np.ndarray]) -> float:
        total = 0.0
        for s, e in zip(self.samples, enc):
            n = len(s.veh_x)
            z, _ = l2_normalize(self.model.mlp1.forward(e[: 2 * n])[0])
            total += co2_loss(z[:n], z[n:], self.co2_cfg)[0]
        return total

    def csp_value(self, enc: list[np.ndarray]) -> float:
        total = 0.0
        for s, e in zip(self.samples, enc):
            n, m = len(s.veh_x), len(s.shape_veh_x)
            logits = self.model.mlp2.forward(e[2 * n :])[0]
            lv = csp_loss_from_logits(logits[:m], s.shape_veh_q)[0]
            lf = csp_loss_from_logits(logits[m:], s.shape_fus_q)[0]
            total += 0.5 * (lv + lf)
        return total

    def value(self, stack: str) -> float:
        if stack == "encoder":
            enc = self.encode()
            return self.co2_value(enc) + self.w_csp * self.csp_value(enc)
        if stack == "mlp1":
            return self.co2_value(self.enc) + self.w_csp * self.csp
        return self.co2 + self.w_csp * self.csp_value(self.enc)


def run_gate(seed: int = 0, h: float = 1e-6, coords: int | None = None) -> GateResult:
    """Max relative error of analytic vs central-difference gradients over every parameter.

    Also reports the error after doubling one analytic gradient entry, which
    a working checker must flag.
    """
    model, samples, cfg = gate_problem(seed)
    model.zero_grad()
    parts = total_loss(model, samples, cfg.co2_config(), cfg.csp_config(), cfg.ablation)
    grads = {name: [g.copy() for g in getattr(model, name).gradients()] for name in STACKS}
    branch = BranchObjective(model, samples, cfg)
    base = branch.co2 + branch.w_csp * branch.csp
    if abs(base - parts.total) > 1e-12 * max(1.0, abs(parts.total)):
        raise AssertionError(f"branch objective {base!r} disagrees with total_loss {parts.total!r}")

    def checker(name, analytic, picks=coords):
        stack = getattr(model, name)
        first = {"done": False}

        def fn():
            if not first["done"]:
                first["done"] = True
                return parts.total, analytic
            return branch.value(name), None

        return grad_check(fn, stack.parameters(), h, picks)

    err = max(checker(name, grads[name]) for name in STACKS)

    name, k = max(
        ((n, i) for n in STACKS for i in range(len(grads[n]))),
        key=lambda t: np.abs(grads[t[0]][t[1]]).max(),
    )
    target = int(np.argmax(np.abs(grads[name][k]).reshape(-1)))
    corrupted = [g.copy() for g in grads[name]]
    corrupted[k].reshape(-1)[target] *= 2.0
    picks = [[target] if i == k else [] for i in range(len(corrupted))]
    mutated = checker(name, corrupted, picks)
    return GateResult(err, mutated, sum(p.size for p in model.parameters()), relu_margin(model, samples[0]))
