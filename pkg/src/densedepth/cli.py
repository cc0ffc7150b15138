"""Command-line entry points: train-cpn, train-dcn, eval, ablate, predict.

Configuration files are INI-style key=value text with one section per
concern; command-line flags override file values. Every failure exits with
a nonzero status and a single diagnostic line on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from .data import AugmentationConfig
from .harness import RunConfig, ablate, evaluate_checkpoint, predict, train_cpn, train_dcn
from .losses import LossWeights, NormSpec


def _load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    out: dict = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[f"{section}.{key}"] = value
    return out


def _run_config_from(args, mode: str) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values = _load_config_file(args.config)

    def get(key, default, cast):
        if key in values:
            return cast(values[key])
        return default

    norms = NormSpec(
        gamma=get("loss.gamma", args.gamma, int),
        eta=get("loss.eta", args.eta, int),
    )
    weights = LossWeights(
        alpha=get("loss.alpha", args.alpha, float),
        beta=get("loss.beta", 1.20, float),
        beta_c=get("loss.beta_c", args.beta_c, float),
        beta_s=get("loss.beta_s", args.beta_s, float),
    )
    aug = None
    if "augment.flip_h" in values or "augment.flip_v" in values or "augment.hist_eq" in values \
            or "augment.sparse_shift" in values or "augment.crop_h" in values:
        crop = None
        if "augment.crop_h" in values and "augment.crop_w" in values:
            crop = (int(values["augment.crop_h"]), int(values["augment.crop_w"]))
        aug = AugmentationConfig(
            crop=crop,
            flip_h=float(values.get("augment.flip_h", 0.0)),
            flip_v=float(values.get("augment.flip_v", 0.0)),
            hist_eq=values.get("augment.hist_eq", "false").lower() in ("1", "true", "yes"),
            sparse_shift=values.get("augment.sparse_shift", "false").lower() in ("1", "true", "yes"),
        )
    return RunConfig(
        mode=mode,
        preset=get("model.preset", args.preset, str),
        norms=norms,
        weights=weights,
        lr0=get("optimizer.lr0", args.lr0, float),
        half_every=get("optimizer.half_every", args.half_every, int),
        total_steps=get("optimizer.total_steps", args.steps, int),
        batch=get("optimizer.batch", args.batch, int),
        n_scenes=get("data.n_scenes", args.n_scenes, int),
        density=get("data.density", args.density, float),
        val_fraction=get("data.val_fraction", 0.1, float),
        augmentation=aug,
        max_depth=get("data.max_depth", 80.0, float),
        eval_every=get("optimizer.eval_every", args.eval_every, int),
        seed=args.seed,
        out_dir=args.out,
        dtype=get("model.dtype", args.dtype, str),
    )


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; sections: model, optimizer, data, loss, augment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/run")
    p.add_argument("--preset", default="desk", choices=["desk", "tiny", "full"])
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr0", type=float, default=1e-4)
    p.add_argument("--half-every", dest="half_every", type=int, default=1000)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=250)
    p.add_argument("--n-scenes", dest="n_scenes", type=int, default=200)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--gamma", type=int, default=1)
    p.add_argument("--eta", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.045)
    p.add_argument("--beta-c", dest="beta_c", type=float, default=0.15)
    p.add_argument("--beta-s", dest="beta_s", type=float, default=0.425)
    p.add_argument("--dtype", default="float64", choices=["float32", "float64"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densedepth",
                                     description="Depth completion from an image and sparse range samples")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-cpn", help="pretrain the conditional prior network")
    _add_common(p)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("train-dcn", help="train the depth completion network")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=["supervised", "unsupervised", "stereo"])
    p.add_argument("--cpn", help="prior checkpoint (required for unsupervised/stereo)")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint over a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="eval.csv")
    p.add_argument("--per-pixel", action="store_true", help="pixel-pooled aggregation instead of per-image mean")

    p = sub.add_parser("ablate", help="norm/weight grid of short unsupervised runs")
    _add_common(p)
    p.add_argument("--alphas", default="0.0,0.01,0.045,0.1,0.5",
                   help="comma-separated alpha grid")
    p.add_argument("--norm-pairs", dest="norm_pairs", default="1,1;1,2;2,1;2,2",
                   help="semicolon-separated gamma,eta pairs")
    p.add_argument("--cpn-steps", dest="cpn_steps", type=int, default=300)

    p = sub.add_parser("predict", help="complete one image + sparse depth pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--sparse", required=True)
    p.add_argument("--gt", help="ground-truth depth png for the error map")
    p.add_argument("--cpn", help="prior checkpoint; prints the posterior score")
    p.add_argument("--alpha", type=float, default=0.045)
    p.add_argument("--gamma", type=int, default=1)
    p.add_argument("--eta", type=int, default=2)
    p.add_argument("--out", default="predictions")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train-cpn":
            cfg = _run_config_from(args, mode="cpn")
            result = train_cpn(cfg, resume_from=args.resume)
            print(f"checkpoint: {result.checkpoint_path}")
            print(f"best validation reconstruction energy: {result.best_val:.6f}")
        elif args.command == "train-dcn":
            cfg = _run_config_from(args, mode=args.mode)
            result = train_dcn(cfg, cpn_checkpoint=args.cpn, resume_from=args.resume)
            print(f"checkpoint: {result.checkpoint_path}")
            print(f"best validation RMSE: {result.best_val:.3f} mm")
        elif args.command == "eval":
            _, agg = evaluate_checkpoint(args.checkpoint, args.manifest, args.density,
                                         out_csv=args.out, seed=args.seed, per_pixel=args.per_pixel)
            print(f"rmse_mm={agg.rmse_mm:.3f} mae_mm={agg.mae_mm:.3f} "
                  f"irmse_per_km={agg.irmse_per_km:.3f} imae_per_km={agg.imae_per_km:.3f} "
                  f"absrel={agg.absrel:.5f}")
            print(f"csv: {args.out}")
        elif args.command == "ablate":
            if args.out.endswith(".csv"):
                out_csv = args.out
                run_root = os.path.join(os.path.dirname(os.path.abspath(args.out)), "ablate_runs")
            else:
                out_csv = os.path.join(args.out, "ablation.csv")
                run_root = args.out
            args.out = run_root
            cfg = _run_config_from(args, mode="unsupervised")
            alphas = [float(v) for v in args.alphas.split(",") if v != ""]
            pairs = []
            for chunk in args.norm_pairs.split(";"):
                g, e = chunk.split(",")
                pairs.append((int(g), int(e)))
            rows = ablate(cfg, pairs, alphas, out_csv=out_csv, cpn_steps=args.cpn_steps)
            for g, e, a, r in rows:
                print(f"gamma={g} eta={e} alpha={a} val_rmse_mm={r:.3f}")
            print(f"csv: {out_csv}")
        elif args.command == "predict":
            norms = NormSpec(gamma=args.gamma, eta=args.eta)
            out = predict(args.checkpoint, args.image, args.sparse, args.out,
                          gt_path=args.gt, cpn_checkpoint=args.cpn, norms=norms, alpha=args.alpha)
            print(f"depth: {out['depth_png']}")
            if out["error_png"]:
                print(f"error map: {out['error_png']}")
            if out["posterior_score"] is not None:
                print(f"posterior score: {out['posterior_score']!r}")
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
        return 0
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
