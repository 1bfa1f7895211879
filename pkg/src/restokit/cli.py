"""Command-line surface: degrade, train, restore, eval, inspect.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config schema
violation. Failures emit a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import torch

from . import datasets
from .config import RunConfig, load_config
from .degradation import DegradationRecipe, apply_recipe
from .errors import ConfigError, RestokitError
from .imageio import read_jsonl, read_png, write_jsonl, write_png
from .metrics import psnr, ssim
from .model import param_count
from .sampling import GuidanceParams, RssParams, sample
from .text import tokenize
from .training import (
    load_train_state,
    make_train_state,
    save_train_state,
    train_loop,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restokit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize/degrade a corpus and write manifests")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--synth-hq", type=int, default=0, metavar="N",
                   help="synthesize N procedural HQ textures first")
    p.add_argument("--manifest", type=Path, default=None,
                   help="existing manifest to degrade (default: the synthesized one)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=32)

    p = sub.add_parser("train", help="train adapters + LoRA on a manifest")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--resume", type=Path, default=None)
    p.add_argument("--steps", type=int, default=None, help="override config step count")

    p = sub.add_parser("restore", help="sample restored images from LQ inputs")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="LQ PNG or directory of PNGs")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--prompt", type=str, default="")
    p.add_argument("--sampler", choices=["ancestral", "ddim", "stochastic"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--cfg", type=float, default=None)
    p.add_argument("--rss-w", type=float, default=None)
    p.add_argument("--rss-a", type=float, default=None)
    p.add_argument("--no-rss", action="store_true")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="full-reference metrics between two image directories")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--restored", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="JSON-lines report (append-only)")
    p.add_argument("--lq-dir", type=Path, default=None,
                   help="with --recipes: re-degrade restored outputs and compare to LQ")
    p.add_argument("--recipes", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="parameter counts per namespace")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--checkpoint", type=Path, default=None)
    return parser


def _load_or_default_config(path: Path | None) -> RunConfig:
    return load_config(path) if path is not None else RunConfig()


def cmd_degrade(args) -> int:
    cfg = _load_or_default_config(args.config)
    manifest = args.manifest
    if args.synth_hq > 0:
        manifest = datasets.synthesize_corpus(args.out_dir, args.synth_hq, args.seed, args.size)
    if manifest is None:
        raise ConfigError("degrade: provide --manifest or --synth-hq N")
    datasets.degrade_corpus(manifest, args.out_dir, cfg.degradation)
    print(json.dumps({"manifest": str(manifest), "out_dir": str(args.out_dir)}))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    steps = cfg.training.steps if args.steps is None else args.steps
    samples = datasets.build_samples(args.manifest, cfg.degradation)
    model = cfg.build_model()
    if args.resume is not None:
        state = load_train_state(args.resume, model)
    else:
        state = make_train_state(
            model, seed=cfg.training.seed, lr=cfg.training.lr,
            batch_size=cfg.training.batch, grad_clip=cfg.training.grad_clip,
            T_train=cfg.training.T_train, config_snapshot=cfg.to_dict(),
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"

    def log_fn(row):
        if row["step"] % 50 == 0 or row["step"] == state.step:
            write_jsonl(log_path, [row], append=True)

    train_loop(state, samples, steps, log_fn=log_fn)
    ckpt_path = out / "checkpoint.ckpt"
    save_train_state(state, ckpt_path)
    print(json.dumps({"checkpoint": str(ckpt_path), "step": state.step,
                      "loss_ema": state.loss_ema, "config_digest": cfg.digest()}))
    return 0


def _restore_model(args):
    from .checkpoint import read_container

    header, _ = read_container(args.checkpoint)
    snap = header.get("config") or {}
    cfg = RunConfig.from_dict(snap) if snap else _load_or_default_config(args.config)
    model = cfg.build_model()
    state = load_train_state(args.checkpoint, model)
    return cfg, state.model


def cmd_restore(args) -> int:
    cfg, model = _restore_model(args)
    s = cfg.sampling
    sampler = args.sampler or s.sampler
    steps = args.steps if args.steps is not None else s.steps
    scale = args.cfg if args.cfg is not None else s.cfg
    rss = RssParams(
        w=args.rss_w if args.rss_w is not None else s.rss_w,
        a=args.rss_a if args.rss_a is not None else s.rss_a,
        enabled=not args.no_rss and s.rss_enabled,
    )
    seed = args.seed if args.seed is not None else s.seed
    prompt = tokenize(args.prompt) if args.prompt else None

    inputs = sorted(args.input.glob("*.png")) if args.input.is_dir() else [args.input]
    if not inputs:
        raise ConfigError(f"restore: no PNG inputs found under {args.input}")
    lq = torch.stack([read_png(p) for p in inputs])
    restored = sample(model, lq, prompt, kind=sampler, T=steps, seed=seed,
                      guidance=GuidanceParams(scale=scale), rss=rss)
    out = Path(args.out_dir)
    for path, img in zip(inputs, restored):
        write_png(out / path.name, img)
    print(json.dumps({"restored": len(inputs), "out_dir": str(out),
                      "sampler": sampler, "steps": steps, "seed": seed}))
    return 0


def cmd_eval(args) -> int:
    cfg = _load_or_default_config(args.config)
    restored = {p.name: p for p in sorted(Path(args.restored).glob("*.png"))}
    reference = {p.name: p for p in sorted(Path(args.reference).glob("*.png"))}
    names = sorted(set(restored) & set(reference))
    if not names:
        raise ConfigError("eval: no overlapping PNG names between the two directories")
    recipes = {}
    if args.recipes is not None:
        for row in read_jsonl(args.recipes):
            recipes[Path(row["lq_path"]).name] = row["recipe"]

    rows, psnrs, ssims = [], [], []
    stamp = time.time()
    digest = cfg.digest()
    for name in names:
        a = read_png(restored[name])
        b = read_png(reference[name])
        row = {"image": name, "psnr": psnr(a, b), "ssim": ssim(a, b),
               "config_digest": digest, "seed": args.seed, "timestamp": stamp}
        if name in recipes and args.lq_dir is not None:
            recipe = DegradationRecipe.from_dict(recipes[name])
            redegraded = apply_recipe(a, recipe)
            lq_img = read_png(Path(args.lq_dir) / name)
            row["consistency_psnr"] = psnr(redegraded, lq_img)
        rows.append(row)
        psnrs.append(row["psnr"])
        ssims.append(row["ssim"])
    aggregate = {
        "aggregate": True, "count": len(names),
        "psnr_mean": sum(psnrs) / len(psnrs), "ssim_mean": sum(ssims) / len(ssims),
        "config_digest": digest, "seed": args.seed, "timestamp": stamp,
    }
    write_jsonl(args.out, rows + [aggregate], append=True)
    print(json.dumps(aggregate))
    return 0


def cmd_inspect(args) -> int:
    if args.checkpoint is not None:
        from .checkpoint import read_container

        header, _ = read_container(args.checkpoint)
        cfg = RunConfig.from_dict(header.get("config") or {})
        model = cfg.build_model()
        load_train_state(args.checkpoint, model)
    else:
        cfg = _load_or_default_config(args.config)
        model = cfg.build_model()
    backbone = param_count(model, "backbone_only")
    adapters = param_count(model, "adapters_only")
    lora = param_count(model, "lora_only")
    report = {
        "backbone": backbone,
        "adapters": adapters,
        "lora": lora,
        "total": param_count(model, "all"),
        "lora_sites": getattr(model, "lora_site_count", 0),
        "trainable_fraction": (adapters + lora) / backbone if backbone else 0.0,
        "config_digest": cfg.digest(),
    }
    print(json.dumps(report, indent=2))
    return 0


_COMMANDS = {
    "degrade": cmd_degrade,
    "train": cmd_train,
    "restore": cmd_restore,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}),
              file=sys.stderr)
        return 3
    except RestokitError as e:
        print(json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}),
              file=sys.stderr)
        return 1
    except OSError as e:
        print(json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
