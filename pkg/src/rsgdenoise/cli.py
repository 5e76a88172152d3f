"""Command-line entry point.

    rsgdenoise train --config cfg.json --out runs/a phase1.epochs=3
    rsgdenoise denoise --checkpoint runs/a/final.pt --input noisy/ --out out/
    rsgdenoise eval --input out/ --clean clean/ --out report/
    rsgdenoise check-bsn
    rsgdenoise sample-debug --input img.png --stride 2 --out dbg/

Trailing ``key=value`` arguments override entries of the JSON config
(dotted keys reach nested sections).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments, inference, sampling
from .bsn import BSNConfig, blind_spot_audit, build_bsn, deterministic_mode, load_checkpoint
from .config import ConfigError, TrainConfig, load_config, to_dict
from .imagestore import ImageIOError, load_dataset, load_image, load_pairs, save_image, to_channels
from .metrics import QualityReport

log = logging.getLogger("rsgdenoise")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=("full", "desk"), default="full",
                   help="defaults the config starts from (desk: tiny network, short schedule)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: config value, else 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="deterministic kernels (default on)")
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="config overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsgdenoise", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="two-phase self-supervised training")
    _common(p)
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("denoise", help="denoise an image or a directory")
    _common(p)
    _inference_args(p, checkpoint_required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("eval", help="score images against clean references (CSV)")
    _common(p)
    _inference_args(p, checkpoint_required=False)
    p.add_argument("--input", required=True, help="directory of noisy (with --checkpoint) or denoised images")
    p.add_argument("--clean", required=True, help="directory of clean references, matched by file stem")
    p.add_argument("--luma", action="store_true", help="SSIM on luma instead of the RGB mean")

    p = sub.add_parser("ablate", help="{pd, rsg} x {apbsn, csdbsn} grid")
    _common(p)

    p = sub.add_parser("seed-exp", help="fixed vs per-epoch noise seed, l_bsn on synthetic AWGN")
    _common(p)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--test", action="append", default=[], metavar="NAME=DIR",
                   help="clean test set (repeatable); defaults to val_clean")

    p = sub.add_parser("sweep", help="perturbation sweep over pbsn variants and sigma_eps")
    _common(p)
    p.add_argument("--variants", default="pbsn1,pbsn2,pbsn3")
    p.add_argument("--sigmas", default="0,5,10,15,20,25")

    p = sub.add_parser("check-bsn", help="audit the blind-spot property")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--channels", type=int, default=3)

    p = sub.add_parser("sample-debug", help="dump PD/RSG sub-samples as PNGs")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--sampler", choices=("pd", "rsg"), default="rsg")
    return parser


def _inference_args(p, checkpoint_required):
    p.add_argument("--checkpoint", required=checkpoint_required)
    p.add_argument("--pipeline", choices=inference.PIPELINES, default="pd")
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--n", type=int, default=1)


def _train_config(args) -> TrainConfig:
    base = to_dict(TrainConfig.desk()) if args.preset == "desk" else None
    config = load_config(args.config, args.overrides, base=base)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.out:
        config.out_dir = args.out
    config.deterministic = args.deterministic
    config.validate()
    return config


def _snapshot(args, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    record = {k: v for k, v in vars(args).items() if k != "overrides"}
    record["overrides"] = list(args.overrides)
    (out / "resolved_config.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_train(args) -> int:
    from .trainer import train

    config = _train_config(args)
    if config.out_dir is None:
        config.out_dir = "runs/train"
    _, records = train(config, resume_from=args.resume)
    last = records[-1] if records else {}
    print(f"trained {len(records)} epochs; final loss {last.get('loss', float('nan')):.6f}; "
          f"checkpoint {Path(config.out_dir) / 'final.pt'}")
    return 0


def _inputs(path):
    path = Path(path)
    if path.is_dir():
        names, images = load_dataset(path)
        return names, images
    return [path.name], [load_image(path)]


def _run_pipeline(model, images, args, seed):
    spec = inference.InferenceSpec(args.pipeline, args.stride, args.n)
    rng = np.random.default_rng(seed)
    cin = model.config.in_channels
    ctx = deterministic_mode() if args.deterministic else contextlib.nullcontext()
    with ctx:
        return [inference.denoise(model, to_channels(im, cin), spec, rng) for im in images]


def cmd_denoise(args) -> int:
    out = _out(args, "denoised")
    _snapshot(args, out)
    model, _ = load_checkpoint(args.checkpoint)
    names, images = _inputs(args.input)
    for name, img in zip(names, _run_pipeline(model, images, args, args.seed or 0)):
        save_image(img, out / (Path(name).stem + ".png"))
    print(f"wrote {len(names)} images to {out}")
    return 0


def cmd_eval(args) -> int:
    out = _out(args, "eval")
    _snapshot(args, out)
    names, noisy, clean = load_pairs(args.input, args.clean)
    if not names:
        raise ImageIOError(f"no images in {args.input} have a clean partner in {args.clean}")
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        cin = model.config.in_channels
        clean = [to_channels(c, cin) for c in clean]
        scored = _run_pipeline(model, noisy, args, args.seed or 0)
    else:
        scored = noisy
    report = QualityReport()
    for n, d, c in zip(names, scored, clean):
        report.add(n, d, c, luma=args.luma)
    report.write_csv(out / "eval.csv")
    print(f"{len(names)} images: PSNR {report.mean_psnr:.3f} dB, SSIM {report.mean_ssim:.4f} -> {out / 'eval.csv'}")
    return 0


def _experiment_data(config: TrainConfig):
    if config.dataset is None or not (config.val_noisy and config.val_clean):
        raise ConfigError("this command needs dataset, val_noisy and val_clean in the config")
    cin = config.bsn.in_channels
    _, images = load_dataset(config.dataset, channels=cin)
    _, noisy, clean = load_pairs(config.val_noisy, config.val_clean, channels=cin)
    return images, (noisy, clean)


def _finish_report(report, config):
    out = Path(config.out_dir or "runs")
    report.write(out)
    print(report.summary())


def cmd_ablate(args) -> int:
    config = _train_config(args)
    images, val = _experiment_data(config)
    _finish_report(experiments.run_ablation(config, images, val), config)
    return 0


def cmd_sweep(args) -> int:
    config = _train_config(args)
    images, val = _experiment_data(config)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    sigmas = tuple(float(s) for s in args.sigmas.split(",") if s.strip())
    _finish_report(experiments.run_perturbation_sweep(config, images, val, variants, sigmas), config)
    return 0


def cmd_seed_exp(args) -> int:
    config = _train_config(args)
    if config.dataset is None:
        raise ConfigError("seed-exp needs dataset (clean training images)")
    cin = config.bsn.in_channels
    _, train_clean = load_dataset(config.dataset, channels=cin)
    tests = {}
    for item in args.test:
        name, _, directory = item.partition("=")
        if not directory:
            raise ConfigError(f"--test expects NAME=DIR, got {item!r}")
        tests[name] = load_dataset(directory, channels=cin)[1]
    if not tests:
        if not config.val_clean:
            raise ConfigError("seed-exp needs --test NAME=DIR or val_clean")
        tests["val"] = load_dataset(config.val_clean, channels=cin)[1]
    _finish_report(experiments.run_seed_experiment(config, train_clean, tests, args.sigma), config)
    return 0


def cmd_check_bsn(args) -> int:
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        model = build_bsn(BSNConfig.tiny(in_channels=args.channels, seed=args.seed or 0))
    report = blind_spot_audit(model, args.trials, np.random.default_rng(args.seed or 0), raise_on_failure=False)
    print(report.summary())
    if args.out:
        _snapshot(args, Path(args.out))
        (Path(args.out) / "audit.json").write_text(json.dumps(
            {"trials": report.trials, "max_deviation": report.max_deviation, "passed": report.passed}))
    if not report.passed:
        print(f"worst pixel {report.worst_pixel}, delta {report.worst_delta}", file=sys.stderr)
        return 1
    return 0


def cmd_sample_debug(args) -> int:
    out = _out(args, "subsamples")
    _snapshot(args, out)
    img = load_image(args.input)
    padded, crop = sampling.pad_to_multiple(img, args.stride)
    if args.sampler == "pd":
        stack = sampling.pd_split(padded, args.stride)
        merged = sampling.pd_merge(stack)
    else:
        stack = sampling.rsg_sample(padded, args.stride, np.random.default_rng(args.seed or 0))
        merged = sampling.rsg_merge(stack)
    width = len(str(len(stack) - 1))
    for k in range(len(stack)):
        save_image(stack[k], out / f"sub_{k:0{width}d}.png")
    exact = bool(np.array_equal(crop.apply(merged), img))
    (out / "roundtrip.json").write_text(json.dumps(
        {"stride": args.stride, "sampler": args.sampler, "subsamples": len(stack), "roundtrip_exact": exact}))
    print(f"wrote {len(stack)} sub-samples to {out}; round trip exact: {exact}")
    return 0 if exact else 1


COMMANDS = {
    "train": cmd_train,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "seed-exp": cmd_seed_exp,
    "sweep": cmd_sweep,
    "check-bsn": cmd_check_bsn,
    "sample-debug": cmd_sample_debug,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rsgdenoise {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (ImageIOError, ValueError, OSError) as exc:
        print(f"rsgdenoise {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
