"""Command-line front door: params, train, denoise, eval, serve.

Every subcommand is deterministic given its flags and --seed. Exit code 0 on
success, 2 on validation errors (bad flags, malformed inputs, missing files).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from gtcnn.model import GateKind, GtcnnConfig, GtcnnModel, Modulation, param_count
from gtcnn.pnm import PnmError, PnmImage, read_pnm, write_pnm
from gtcnn.training import TrainConfig, add_awgn, clamp01, psnr, train
from gtcnn.weights import WeightsFormatError, load_weights, save_weights


class CliError(Exception):
    """Validation failure; renders as a message and exit code 2."""


def format_count(count: int) -> str:
    if count < 1000:
        return str(count)
    return f"{count} ({count // 1000}k)"


def _config_from_args(args) -> GtcnnConfig:
    return GtcnnConfig(
        c_in=args.c_in,
        c=args.channels,
        depth=args.depth,
        stages=args.stages,
        gate=GateKind(args.gate),
        use_1x1=args.use_1x1,
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--depth", type=int, default=1, help="number of gated layers")
    parser.add_argument("--channels", type=int, default=64, help="feature channels")
    parser.add_argument("--stages", type=int, default=4, help="texture-net pooling stages")
    parser.add_argument("--c-in", type=int, default=1, choices=(1, 3), help="image channels")
    parser.add_argument(
        "--gate", choices=[g.value for g in GateKind], default="softmax"
    )
    parser.add_argument("--use-1x1", action="store_true", help="append 1x1 conv in texture net")


def cmd_params(args) -> int:
    try:
        config = _config_from_args(args)
    except ValueError as e:
        raise CliError(str(e)) from e
    print(format_count(param_count(config)))
    return 0


def _load_corpus(data_dir: Path) -> tuple[list, list[str]]:
    images, skipped = [], []
    for path in sorted(data_dir.iterdir()):
        if not path.is_file():
            continue
        try:
            images.append(read_pnm(str(path)).to_tensor())
        except (PnmError, OSError) as e:
            skipped.append(f"{path.name}: {e}")
    return images, skipped


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise CliError(f"data directory not found: {data_dir}")
    images, skipped = _load_corpus(data_dir)
    for line in skipped:
        print(f"warning: skipped {line}", file=sys.stderr)
    if not images:
        raise CliError(f"no readable PGM/PPM images in {data_dir}")

    try:
        config = _config_from_args(args)
        train_config = TrainConfig(
            sigma=args.sigma,
            patch=args.patch,
            stride=args.stride,
            batch=args.batch,
            steps=args.steps,
            lr0=args.lr0,
            seed=args.seed,
        )
        train_config.validate(config.stages)
    except ValueError as e:
        raise CliError(str(e)) from e
    if any(img.c != config.c_in for img in images):
        raise CliError(f"corpus contains images whose channels != c_in={config.c_in}")

    # hold out the last image (or the last patch when there is only one image)
    if len(images) > 1:
        corpus, holdout_src = images[:-1], images[-1]
    else:
        corpus, holdout_src = images, images[0]
    holdout = None
    if holdout_src.h >= args.patch and holdout_src.w >= args.patch:
        holdout = _crop(holdout_src, args.patch)

    model = GtcnnModel(config, seed=args.seed)
    model, log = train(model, corpus, train_config, holdout=holdout)

    save_weights(model, args.out)
    log_path = args.log or (args.out + ".csv")
    log.write_csv(log_path)
    print(f"saved weights to {args.out} ({param_count(config)} params), log to {log_path}")
    print(f"final loss {log.losses()[-1]:.6f}")
    if holdout is not None:
        rng = np.random.default_rng(args.seed + 1)
        noisy = add_awgn(holdout, args.sigma, rng)
        y_hat, _ = model.forward(noisy)
        print(
            f"held-out PSNR: noisy {psnr(clamp01(noisy), holdout):.2f} dB, "
            f"denoised {psnr(clamp01(y_hat), holdout):.2f} dB"
        )
    return 0


def _crop(image, size):
    from gtcnn.tensor import Tensor4

    return Tensor4(image.data[:, :, :size, :size].copy())


def _load_model(path: str) -> GtcnnModel:
    try:
        return load_weights(path)
    except OSError as e:
        raise CliError(f"cannot read model file: {e}") from e
    except WeightsFormatError as e:
        raise CliError(f"bad weights file {path}: {e}") from e


def _check_lambda(value: float) -> float:
    if not -0.5 <= value <= 0.5:
        raise CliError(f"--lambda {value} outside [-0.5, 0.5]")
    return value


def cmd_denoise(args) -> int:
    lam = _check_lambda(args.lam)
    model = _load_model(args.model)
    try:
        image = read_pnm(args.input)
    except (PnmError, OSError) as e:
        raise CliError(f"cannot read input image: {e}") from e
    clean = image.to_tensor()
    if clean.c != model.config.c_in:
        raise CliError(
            f"image has {clean.c} channel(s) but model expects {model.config.c_in}"
        )

    if args.sigma is not None:
        if args.sigma < 0:
            raise CliError(f"--sigma {args.sigma} must be >= 0")
        noisy = add_awgn(clean, args.sigma, np.random.default_rng(args.seed))
    else:
        noisy = clean

    mod = None
    if lam != 0.0:
        mod = Modulation(lam, stage=args.stage, layer=args.layer)
    try:
        y_hat, _ = model.forward(noisy, mod=mod)
    except ValueError as e:
        raise CliError(str(e)) from e
    write_pnm(PnmImage.from_tensor(clamp01(y_hat)), args.output)
    if args.sigma is not None:
        print(
            f"noisy {psnr(clamp01(noisy), clean):.2f} dB, "
            f"denoised {psnr(clamp01(y_hat), clean):.2f} dB"
        )
    print(f"wrote {args.output}")
    return 0


def cmd_eval(args) -> int:
    if args.sigma < 0:
        raise CliError(f"--sigma {args.sigma} must be >= 0")
    model = _load_model(args.model)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise CliError(f"data directory not found: {data_dir}")

    rows = []
    skipped = []
    for path in sorted(data_dir.iterdir()):
        if not path.is_file():
            continue
        try:
            image = read_pnm(str(path))
        except (PnmError, OSError) as e:
            skipped.append(f"{path.name}: {e}")
            continue
        clean = image.to_tensor()
        if clean.c != model.config.c_in:
            skipped.append(f"{path.name}: {clean.c} channel(s), model wants {model.config.c_in}")
            continue
        noisy = add_awgn(clean, args.sigma, np.random.default_rng(args.seed))
        y_hat, _ = model.forward(noisy)
        rows.append(
            (path.name, psnr(clamp01(noisy), clean), psnr(clamp01(y_hat), clean))
        )

    for line in skipped:
        print(f"warning: skipped {line}", file=sys.stderr)
    if not rows:
        raise CliError(f"no evaluable images in {data_dir}")

    width = max(len(name) for name, _, _ in rows)
    print(f"{'image':<{width}}  {'noisy dB':>9}  {'denoised dB':>11}")
    for name, noisy_db, denoised_db in rows:
        print(f"{name:<{width}}  {noisy_db:>9.2f}  {denoised_db:>11.2f}")
    mean_noisy = sum(r[1] for r in rows) / len(rows)
    mean_denoised = sum(r[2] for r in rows) / len(rows)
    print(f"{'mean':<{width}}  {mean_noisy:>9.2f}  {mean_denoised:>11.2f}")
    if skipped:
        print(f"({len(skipped)} file(s) skipped)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from gtcnn.service import create_app

    model = _load_model(args.model)
    host, _, port = args.bind.rpartition(":")
    app = create_app(model, max_pixels=args.max_pixels, ui_dir=args.ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtcnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="print the learned-parameter count")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("train", help="train on a directory of PGM/PPM images")
    p.add_argument("--data", required=True, help="directory of clean images")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--log", help="CSV log path (default: <out>.csv)")
    _add_config_flags(p)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--patch", type=int, default=48)
    p.add_argument("--stride", type=int, default=48)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr0", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("denoise", help="denoise one image, optionally modulated")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--sigma", type=float, help="synthesize noise first (demo mode)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="texture shift in [-0.5, 0.5]")
    p.add_argument("--stage", type=int, default=2)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("eval", help="mean PSNR over a directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="HTTP service plus the browser UI")
    p.add_argument("--model", required=True)
    p.add_argument("--bind", default="127.0.0.1:8571")
    p.add_argument("--max-pixels", type=int, default=1_048_576)
    p.add_argument("--ui-dir", help="static UI assets (default: bundled frontend build)")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
