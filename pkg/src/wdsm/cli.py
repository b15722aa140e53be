"""Command-line entry point.

Subcommands: gen, train, eval, predict, gradcheck.  Exit codes: 0 success,
1 usage error (bad flags/arguments), 2 runtime error (I/O, bad data).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import grid
from .checkpoint import load_checkpoint
from .errors import WdsmError
from .gradcheck import CASES, run_case
from .loss import percent_density
from .models import MODEL_NAMES, UNetConfig, attention_map, unet_forward
from .pgm import read_pgm, write_pgm
from .phantom import MANIFEST_NAME, generate_dataset, load_manifest
from .train import TrainConfig, build_arch, evaluate, train

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def build_parser() -> _Parser:
    parser = _Parser(prog="wdsm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a phantom dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, required=True, help="number of train samples")
    p.add_argument("--test", type=int, required=True, help="number of test samples")
    p.add_argument("--size", type=int, default=64, help="image side, power of two >= 32")
    p.add_argument("--stratified", action="store_true", help="balance the 12 classes")

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--lambda-bin", type=float, default=0.1)
    p.add_argument("--density-term", choices=("l1", "l2"), default="l2")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--exact-pd", action="store_true",
                   help="train on exact pd labels instead of bin midpoints")
    p.add_argument("--log", default=None, help="training log CSV (default: <out>.log.csv)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", default=None, help="also write a one-row CSV report")

    p = sub.add_parser("predict", help="run a checkpoint on one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True, help="input PGM")
    p.add_argument("--breast", required=True, help="binary breast mask PGM")
    p.add_argument("--out-mask", required=True, help="output dense-map PGM")
    p.add_argument("--out-attn", default=None,
                   help="also export the attention map (vgg checkpoints only)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops", default=None,
                   help="comma-separated subset of ops (default: all)")
    return parser


def cmd_gen(args, parser: _Parser) -> int:
    if args.size < 32 or args.size & (args.size - 1):
        parser.error("size must be a power of two >= 32")
    if args.train < 1 or args.test < 1:
        parser.error("--train and --test must be >= 1")
    manifest = generate_dataset(
        args.out, args.seed, args.train, args.test, args.size, stratified=args.stratified
    )
    print(f"manifest: {Path(args.out) / MANIFEST_NAME}")
    for tag in ("train", "test"):
        hist = manifest.class_histogram(tag)
        print(f"{tag} class histogram: {hist}")
    return 0


def cmd_train(args, parser: _Parser) -> int:
    config = TrainConfig(
        model=args.model,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        lambda_bin=args.lambda_bin,
        density_term=args.density_term,
        use_exact_pd=args.exact_pd,
    )
    manifest = load_manifest(args.manifest)
    t0 = time.perf_counter()
    _, _, log = train(config, manifest, out_ckpt=args.out)
    log_path = args.log if args.log else f"{args.out}.log.csv"
    log.to_csv(log_path)
    last = log.records[-1]
    print(f"checkpoint: {args.out}")
    print(f"log: {log_path}")
    print(
        f"trained {args.model} for {config.epochs} epochs in "
        f"{time.perf_counter() - t0:.1f}s, final loss {last.loss_total:.6f}"
    )
    return 0


def cmd_eval(args, parser: _Parser) -> int:
    params, config = load_checkpoint(args.ckpt)
    manifest = load_manifest(args.manifest)
    report = evaluate(params, config, manifest, args.split)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    r, c = report.regression, report.classification
    print(f"report: {args.out}")
    print(f"MAE {r.mae:.3f}%  MxAE {r.mxae:.3f}%  C-index "
          + (f"{r.c_index:.3f}" if r.c_index is not None else "n/a"))
    print(f"accuracy {c.accuracy:.3f}  kappa(quadratic) {c.kappa_weighted:.3f}")
    if report.segmentation is not None:
        print(f"mean Dice {report.segmentation.dice_mean:.3f}")
    return 0


def cmd_predict(args, parser: _Parser) -> int:
    params, config = load_checkpoint(args.ckpt)
    arch = build_arch(config)
    image = read_pgm(args.image)
    breast = (read_pgm(args.breast) >= 0.5).astype(np.uint8)
    if int(breast.sum()) == 0:
        raise WdsmError("empty breast mask")
    is_unet = isinstance(arch, UNetConfig)
    if args.out_attn and is_unet:
        parser.error("--out-attn requires a vgg_baseline checkpoint")

    if is_unet:
        pair = unet_forward(arch, params, image, breast)
        pd_hat = percent_density(pair.m_dense, breast).item()
        dense_map = np.clip(pair.m_dense.data, 0.0, 1.0)
    else:
        from .models import vgg_forward

        pd_hat = vgg_forward(arch, params, image).item()
        dense_map = attention_map(arch, params, image) * breast
    write_pgm(dense_map, args.out_mask)
    if args.out_attn:
        write_pgm(attention_map(arch, params, image) * breast, args.out_attn)
    label = grid.DensityLabel.from_pd(min(max(pd_hat, 0.0), 1.0))
    print(f"pd_hat: {pd_hat:.6f}")
    print(f"class12: {label.class12}")
    print(f"class4: {label.class4} ({label.letter})")
    print(f"mask: {args.out_mask}")
    return 0


def cmd_gradcheck(args, parser: _Parser) -> int:
    names = list(CASES)
    if args.ops:
        names = [s.strip() for s in args.ops.split(",") if s.strip()]
        unknown = [n for n in names if n not in CASES]
        if unknown:
            parser.error(
                f"unknown op(s): {', '.join(unknown)}; valid: {', '.join(sorted(CASES))}"
            )
    width = max(len(n) for n in names)
    all_ok = True
    for name in names:
        result = run_case(name, seed=args.seed)
        status = "pass" if result.passed else "FAIL"
        all_ok &= result.passed
        print(f"{name:<{width}}  max_rel_err={result.max_rel_err:.3e}  "
              f"tol={result.tolerance:.0e}  {status}")
    return 0 if all_ok else RUNTIME_EXIT


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except (WdsmError, OSError) as exc:
        print(f"wdsm {args.command}: error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
