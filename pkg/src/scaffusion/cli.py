"""``scaffusion`` command line: gen-data, train, eval, ablate, infer, visualize."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, generate_dataset, read_depth_png, read_image_png, write_depth_png
from .pipeline import (SUITES, CompletionModel, evaluate_model, infer, run_ablation, train,
                       visualize)
from .sampling import SamplingStrategy, points_for_density
from .scenegen import LAYOUTS

SPARSITY = {"corner": "harris-kmeans", "harris-kmeans": "harris-kmeans",
            "scanline": "scanline", "uniform": "uniform"}


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def cmd_gen_data(args) -> int:
    n = args.points
    if n is None:
        n = points_for_density(args.density, args.height, args.width)
    strategy = SamplingStrategy(SPARSITY[args.sparsity], n=n, kappa=args.kappa, sigma=args.sigma,
                                lines=args.lines, dropout=args.dropout)
    scene = {}
    if args.object_count is not None:
        scene["object_count"] = args.object_count
    manifest = generate_dataset(args.out, seed=args.seed, layout=args.layout, frames=args.frames,
                                sequences=args.sequences, width=args.width, height=args.height,
                                strategy=strategy, workers=args.workers, **scene)
    density = manifest.generator["density"]
    triplets = sum(max(0, len(s["frames"]) - 2) for s in manifest.sequences)
    print(f"wrote {manifest.n_frames} frames ({triplets} triplets) in "
          f"{len(manifest.sequences)} sequence(s) to {args.out}")
    print(f"sparse density: mean {100 * density['mean']:.3f}%  min {100 * density['min']:.3f}%  "
          f"max {100 * density['max']:.3f}%")
    return 0


def _run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    changes = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        changes[key.strip()] = value.strip()
    for key in ("stage", "seed", "workers"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    if getattr(args, "spp_kernels", None):
        changes["spp_kernels"] = args.spp_kernels
    if getattr(args, "deterministic", False):
        changes["deterministic"] = True
    return config.replace(**changes) if changes else config


def cmd_train(args) -> int:
    config = _run_config(args)
    resume = Checkpoint.load(args.resume) if args.resume else None
    ckpt = train(config, out_dir=args.out, resume=resume)
    final = ckpt.metrics["validation"][-1] if ckpt.metrics.get("validation") else None
    print(f"trained {config.stage} for {ckpt.step} steps; checkpoints in {Path(args.out) / 'checkpoints'}")
    if final:
        print(f"validation MAE {final['mae']:.2f} mm  RMSE {final['rmse']:.2f} mm")
    return 0


def cmd_eval(args) -> int:
    model = CompletionModel.from_checkpoint(args.checkpoint)
    config = RunConfig(eval_range=tuple(args.range)) if args.range else None
    agg, per_frame = evaluate_model(model, Dataset(args.dataset, preload=False), config,
                                    out_dir=args.out, error_maps=not args.no_error_maps,
                                    which=args.which)
    print(f"{len(per_frame)} frames  MAE {agg.mae:.2f} mm  RMSE {agg.rmse:.2f} mm  "
          f"iMAE {agg.imae:.3f} 1/km  iRMSE {agg.irmse:.3f} 1/km")
    return 0


def cmd_ablate(args) -> int:
    config = _run_config(args)
    out = args.out or f"ablation-{args.suite}"
    report = run_ablation(args.suite, config, out_dir=out)
    print(report.to_markdown())
    return 0


def cmd_infer(args) -> int:
    image = read_image_png(args.image)
    sparse = read_depth_png(args.sparse)
    result = infer(image, sparse, args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_depth_png(out / "depth.png", result.depth)
    write_depth_png(out / "topology.png", result.topology)
    print(f"depth range {result.depth.min():.3f}..{result.depth.max():.3f} m; wrote {out}")
    return 0


def cmd_visualize(args) -> int:
    model = CompletionModel.from_checkpoint(args.checkpoint)
    paths = visualize(model, args.dataset, args.out, args.count)
    print("\n".join(str(p) for p in paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaffusion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=LAYOUTS, default="room")
    p.add_argument("--frames", type=int, default=10, help="frames per sequence")
    p.add_argument("--sequences", type=int, default=1)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--sparsity", choices=sorted(SPARSITY), default="corner")
    p.add_argument("--points", type=int, help="sparse points per frame (overrides --density)")
    p.add_argument("--density", type=float, default=0.005, help="fraction of pixels")
    p.add_argument("--lines", type=int, help="scanlines (scanline sparsity)")
    p.add_argument("--dropout", type=float, default=0.2, help="scanline point dropout")
    p.add_argument("--kappa", type=float, default=0.04)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--object-count", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gen_data)

    def run_options(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--spp-kernels", type=_ints)
        p.add_argument("--workers", type=int)
        p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("train", help="train ScaffNet or FusionNet")
    p.add_argument("--stage", choices=("scaffnet", "fusionnet"))
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--which", choices=("depth", "topology"), default="depth")
    p.add_argument("--range", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--no-error-maps", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--out")
    run_options(p)
    p.set_defaults(func=cmd_ablate, stage=None)

    p = sub.add_parser("infer", help="complete one frame")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="RGB PNG")
    p.add_argument("--sparse", required=True, help="16-bit sparse depth PNG (mm)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("visualize", help="render prediction panels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, PermissionError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
