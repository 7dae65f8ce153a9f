"""Run configuration and the line-oriented ``key = value`` config file."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .losses import DENOMINATOR_MODES, Co2Config, CspConfig
from .model import ABLATIONS
from .shape_context import ScConfig
from .synth import SceneSpec
from .voxel import VoxelParams

# Default ground threshold for the synthetic vehicle frame (z up, sensor 1.9 m
# above the road): points more than 1.6 m below the sensor count as ground.
# The literal +1.6 would discard every point in this frame.
NOMINAL_Z_THD = 1.6
SENSOR_FRAME_Z_THD = -1.6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # contrastive objective
    tau: float = 0.07
    denominator_mode: str = "anchor-negatives"
    symmetric: bool = False
    n1: int = 2048
    d1: int = 256
    # shape prediction objective
    n2: int = 2048
    n_bin: int = 32
    sf_csp: float = 4.0
    w_csp: float = 10.0
    r1: float = 0.5
    r2: float = 4.0
    nbins_xy: int = 4
    nbins_zy: int = 4
    # encoder and heads
    d_enc: int = 64
    enc_hidden: int = 64
    mlp1_hidden: int = 256
    mlp2_hidden: int = 128
    # data
    z_thd: float = SENSOR_FRAME_Z_THD
    voxel_size: tuple = (0.4, 0.4, 0.4)
    range_min: tuple = (-40.0, -40.0, -3.0)
    range_max: tuple = (40.0, 40.0, 3.0)
    n_scenes: int = 64
    extent: float = 25.0
    n_objects: int = 6
    ground_noise: float = 0.02
    keep_prob: float = 0.6
    # optimisation
    steps: int = 500
    batch_scenes: int = 4
    learning_rate: float = 0.01
    momentum: float = 0.9
    ablation: str = "both"
    seed: int = 0
    max_skip_fraction: float = 0.5
    # abort when a completed 50-step loss window mean exceeds the previous one
    divergence_guard: bool = True
    guard_tolerance: float = 0.0  # relative slack on that comparison

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.batch_scenes < 1 or self.n_scenes < 1:
            raise ConfigError("batch_scenes and n_scenes must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ConfigError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
        if self.guard_tolerance < 0:
            raise ConfigError("guard_tolerance must be non-negative")
        if self.n1 < 2 or self.n2 < 1:
            raise ConfigError("n1 must be >= 2 and n2 >= 1")
        try:
            sc = self.sc_config()
            self.voxel_params()
            self.co2_config()
            self.csp_config()
            self.scene_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if sc.n_bins != self.n_bin:
            raise ConfigError(
                f"n_bin={self.n_bin} but nbins_xy*nbins_zy*2 = {sc.n_bins}"
            )

    def co2_config(self) -> Co2Config:
        return Co2Config(self.tau, self.denominator_mode, self.symmetric)

    def csp_config(self) -> CspConfig:
        return CspConfig(self.n_bin, self.n2, self.w_csp)

    def sc_config(self) -> ScConfig:
        return ScConfig(self.r1, self.r2, self.nbins_xy, self.nbins_zy)

    def voxel_params(self) -> VoxelParams:
        return VoxelParams(tuple(self.voxel_size), tuple(self.range_min), tuple(self.range_max))

    def scene_spec(self, seed: int = 0) -> SceneSpec:
        return SceneSpec(
            extent=self.extent,
            n_objects=self.n_objects,
            ground_noise=self.ground_noise,
            keep_prob=self.keep_prob,
            seed=seed,
        )

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _parse_value(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if len(vals) == 1:
                vals = vals * len(default)
            if len(vals) != len(default):
                raise ValueError(raw)
            return vals
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    defaults = asdict(base)
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, value, defaults[key])
    return replace(base, **updates)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in asdict(cfg).items():
        if isinstance(v, tuple):
            v = " ".join(repr(float(x)) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
