"""Command-line entry point: ``co3 {synth,pretrain,eval,shape-context,grad-check}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cloud_io import CloudFormatError, read_cloud
from .config import ConfigError, RunConfig, format_config, load_config
from .geom import GeometryError
from .probe import ProbeConfig, eval_probe
from .shape_context import ScConfig, finalize_distribution, raw_histograms
from .synth import generate_scenes, read_scene, write_scene
from .training import DivergenceError, pretrain
from .voxel import EmptyCorrespondenceError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

log = logging.getLogger("co3")

_DATA_ERRORS = (
    CloudFormatError,
    CheckpointError,
    GeometryError,
    EmptyCorrespondenceError,
    OSError,
)


class DataError(RuntimeError):
    pass


def scene_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    dirs = sorted(p for p in root.iterdir() if (p / "veh.co3p").exists())
    if (root / "veh.co3p").exists():
        dirs = [root]
    if not dirs:
        raise DataError(f"no scenes under {root}")
    return dirs


def cmd_synth(args) -> int:
    if args.scenes < 1:
        raise ConfigError("--scenes must be >= 1")
    spec = (load_config(args.config) if args.config else RunConfig()).scene_spec()
    out = Path(args.out)
    for i, pair in enumerate(generate_scenes(args.scenes, args.seed, spec)):
        write_scene(pair, out / f"scene_{i:04d}")
    print(f"wrote {args.scenes} scenes to {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    log.info("config:\n%s", format_config(cfg))
    t0 = time.perf_counter()

    def progress(rec):
        if rec.step % args.log_every == 0 or rec.step == cfg.steps - 1:
            log.info(
                "step %d L=%.4f co2=%.4f csp=%.4f gap=%.3f",
                rec.step, rec.loss, rec.co2, rec.csp, rec.pos_cos - rec.neg_cos,
            )

    try:
        model, metrics = pretrain(cfg, progress=progress)
    except DivergenceError as exc:
        if exc.metrics is not None:
            exc.metrics.write(args.metrics)
        raise
    save_checkpoint(model, args.out)
    metrics.write(args.metrics)
    last = metrics.records[-1]
    print(
        f"steps={len(metrics.records)} skipped={metrics.skipped} loss={last.loss:.6f} "
        f"cos_gap={last.pos_cos - last.neg_cos:.4f} time={time.perf_counter() - t0:.1f}s"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    try:
        scenes = [read_scene(d) for d in scene_dirs(args.scenes)]
    except ValueError as exc:
        raise DataError(f"unreadable scene: {exc}") from None
    if len(scenes) < 2:
        raise DataError("need at least 2 scenes (train and held-out splits)")
    params = (load_config(args.config) if args.config else RunConfig()).voxel_params()
    try:
        acc = eval_probe(model, scenes, params, ProbeConfig(seed=args.seed))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(f"accuracy {acc!r}")
    return EXIT_OK


def cmd_shape_context(args) -> int:
    try:
        cfg = ScConfig(args.r1, args.r2, args.nbins_xy, args.nbins_zy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.sf_csp < 0:
        raise ConfigError("--sf-csp must be non-negative")
    points = read_cloud(args.cloud).positions
    sc = raw_histograms(points, points, cfg)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.finalize:
            rows = finalize_distribution(sc, args.sf_csp).histograms
            np.savetxt(out, rows, fmt="%.17g")
        else:
            np.savetxt(out, sc.histograms, fmt="%d")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradcheck import run_gate

    t0 = time.perf_counter()
    res = run_gate(args.seed, h=args.h)
    elapsed = time.perf_counter() - t0
    ok = res.max_rel_err <= 1e-4 and res.mutated_rel_err > 1e-2
    print(
        f"params={res.n_params} max_rel_err={res.max_rel_err:.3e} "
        f"mutated_rel_err={res.mutated_rel_err:.3e} relu_margin={res.min_margin:.2e} "
        f"time={elapsed:.1f}s {'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="co3", description="Cooperative pretraining on synthetic vehicle/infrastructure LiDAR pairs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write synthetic vehicle/infrastructure scene pairs")
    s.add_argument("--out", required=True)
    s.add_argument("--scenes", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="optional config file for scene parameters")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pretrain", help="run pretraining; writes a checkpoint and per-step metrics")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--metrics", required=True, help="metrics file, one line per step")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--log-every", type=int, default=50)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("eval", help="linear-probe accuracy of a checkpoint's frozen encoder")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scenes", required=True, help="directory written by `co3 synth`")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="optional config file for voxel parameters")
    s.set_defaults(func=cmd_eval)

    d = RunConfig()
    s = sub.add_parser("shape-context", help="per-point shape-context histograms of a cloud file")
    s.add_argument("cloud", help="text or CO3P binary cloud")
    s.add_argument("--r1", type=float, default=d.r1)
    s.add_argument("--r2", type=float, default=d.r2)
    s.add_argument("--nbins-xy", type=int, default=d.nbins_xy)
    s.add_argument("--nbins-zy", type=int, default=d.nbins_zy)
    s.add_argument("--sf-csp", type=float, default=d.sf_csp)
    s.add_argument("--finalize", action="store_true", help="emit distributions instead of raw counts")
    s.add_argument("--out", help="output file (default stdout)")
    s.set_defaults(func=cmd_shape_context)

    s = sub.add_parser("grad-check", help="finite-difference gate on the full objective")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--h", type=float, default=1e-6)
    s.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, *_DATA_ERRORS) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
