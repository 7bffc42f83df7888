"""Command-line front end: denoise, inpaint, train, corrupt, evaluate.

Exit codes: 0 success, 2 bad arguments or validation failure, 3 I/O failure,
4 numerical failure. All commands accept --seed, --threads and --quiet, and
the same seed and arguments produce bit-identical outputs for any --threads.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import denoising as dn
from . import inpainting as ip
from .corruption import CorruptionSpec, corrupt, psnr
from .harness import run_experiments, write_report_csv
from .inpainting import InsufficientDataError
from .io import FormatError, load_image, load_mask, save_image, save_mask

BANK_SIGMAS = (10, 25, 50)


def shipped_banks(sigma: float, iterations: int) -> list[dn.FilterBank]:
    """Load the packaged filter banks trained for the nearest noise level."""
    nearest = min(BANK_SIGMAS, key=lambda s: abs(s - sigma))
    banks = []
    for i in range(1, iterations + 1):
        ref = resources.files("patchpath") / "banks" / f"s{nearest}_iter{i}.txt"
        with resources.as_file(ref) as path:
            banks.append(dn.load_bank(path))
    return banks


def resolve_bank_paths(bank_arg: str, iterations: int) -> list[Path]:
    """Map a --bank argument to one file per iteration.

    Accepts a comma-separated list, a single file (1 iteration), or a single
    path whose stem is extended with _iter<i>.
    """
    if "," in bank_arg:
        paths = [Path(p.strip()) for p in bank_arg.split(",")]
    else:
        single = Path(bank_arg)
        if iterations == 1:
            paths = [single]
        elif single.exists() and iterations > 1:
            paths = [single] * iterations
        else:
            stem, suffix = single.stem, single.suffix or ".txt"
            if stem.endswith("_iter1"):
                stem = stem[: -len("_iter1")]
            paths = [single.parent / f"{stem}_iter{i}{suffix}" for i in range(1, iterations + 1)]
    if len(paths) != iterations:
        raise ValueError(f"need {iterations} bank files, resolved {len(paths)}")
    for p in paths:
        if not p.exists():
            raise FormatError(f"filter bank file not found: {p}")
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchpath",
        description="Image denoising and inpainting by patch reordering and 1D smoothing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("denoise", help="remove additive gaussian noise")
    p.add_argument("--in", dest="input", required=True, help="noisy input image (PGM/PNG)")
    p.add_argument("--out", required=True, help="restored output image")
    p.add_argument("--sigma", type=float, required=True, help="noise standard deviation")
    p.add_argument("--bank", help="filter bank file (or comma list, one per iteration)")
    p.add_argument("--bank-auto", action="store_true", help="use the shipped bank nearest in sigma")
    p.add_argument("--iters", type=int, default=2, choices=(1, 2), help="iterations to run")
    p.add_argument("--reference", help="clean image; prints per-iteration PSNR")
    p.add_argument("--dump-iters", action="store_true", help="write each iteration's estimate")
    common(p)

    p = sub.add_parser("inpaint", help="recover missing pixels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", help="mask image: 0 = missing, 255 = present")
    p.add_argument("--erase-fraction", type=float, help="synthesize the mask by random erasure")
    p.add_argument("--iters", type=int, default=3, help="iterations to run")
    p.add_argument("--reference", help="clean image; prints per-iteration PSNR")
    p.add_argument("--dump-iters", action="store_true")
    p.add_argument(
        "--no-reset-known",
        action="store_true",
        help="do not copy known pixels verbatim into the output",
    )
    common(p)

    p = sub.add_parser("train", help="learn filter banks from clean images")
    p.add_argument("--images", nargs="+", required=True, help="clean training images")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out-prefix", required=True, help="writes <prefix>_iter<i>.txt")
    p.add_argument("--iters", type=int, default=2)
    common(p)

    p = sub.add_parser("corrupt", help="generate noisy / pixel-erased test inputs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, help="additive gaussian noise std")
    p.add_argument("--erase-fraction", type=float, help="fraction of pixels to erase")
    p.add_argument("--mask-out", help="write the presence mask here")
    common(p)

    p = sub.add_parser("evaluate", help="run an experiment spec and write a CSV report")
    p.add_argument("--spec", required=True, help="experiment spec file (INI blocks)")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--assets", help="directory with standard test images")
    common(p)
    return parser


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _cmd_denoise(args) -> int:
    z = load_image(args.input)
    schedule = dn.default_schedule(args.sigma)[: args.iters]
    if args.bank:
        banks = [dn.load_bank(p) for p in resolve_bank_paths(args.bank, args.iters)]
    elif args.bank_auto:
        banks = shipped_banks(args.sigma, args.iters)
    else:
        raise ValueError("either --bank or --bank-auto is required")
    result = dn.denoise(z, args.sigma, banks, schedule=schedule, seed=args.seed, threads=args.threads)
    if args.reference:
        ref = load_image(args.reference)
        for i, est in enumerate(result.estimates):
            _say(args, f"iteration {i + 1}: psnr={psnr(ref, est):.4f} dB")
    if args.dump_iters:
        out = Path(args.out)
        for i, est in enumerate(result.estimates):
            save_image(out.with_name(f"{out.stem}_iter{i + 1}{out.suffix}"), est)
    save_image(args.out, result.final)
    _say(args, f"wrote {args.out}")
    return 0


def _cmd_inpaint(args) -> int:
    z = load_image(args.input)
    if args.mask:
        mask = load_mask(args.mask)
        if mask.shape != z.shape:
            raise ValueError(f"mask shape {mask.shape} does not match image {z.shape}")
    elif args.erase_fraction is not None:
        z, mask = corrupt(
            z, CorruptionSpec("random-erasure", fraction=args.erase_fraction, rng_seed=args.seed)
        )
    else:
        raise ValueError("either --mask or --erase-fraction is required")
    schedule = ip.DEFAULT_SCHEDULE[: args.iters]
    if len(schedule) < args.iters:
        schedule = schedule + (ip.DEFAULT_SCHEDULE[-1],) * (args.iters - len(schedule))
    result = ip.inpaint(
        z,
        mask,
        schedule=schedule,
        seed=args.seed,
        threads=args.threads,
        reset_known=not args.no_reset_known,
    )
    if args.reference:
        ref = load_image(args.reference)
        for i, est in enumerate(result.estimates):
            _say(args, f"iteration {i + 1}: psnr={psnr(ref, est):.4f} dB")
    if args.dump_iters:
        out = Path(args.out)
        for i, est in enumerate(result.estimates):
            save_image(out.with_name(f"{out.stem}_iter{i + 1}{out.suffix}"), est)
    save_image(args.out, result.final)
    _say(args, f"wrote {args.out}")
    return 0


def _cmd_train(args) -> int:
    pairs = [(load_image(p), args.sigma) for p in args.images]
    schedule = dn.default_schedule(args.sigma)[: args.iters]
    banks, report = dn.train_filter_banks(pairs, schedule, seed=args.seed, threads=args.threads)
    for i, bank in enumerate(banks):
        path = f"{args.out_prefix}_iter{i + 1}.txt"
        dn.save_bank(path, bank)
        _say(args, f"wrote {path} (residual {report.residuals[i]:.6g})")
    if any(report.singular):
        print("warning: singular normal matrix; SVD least-squares was used", file=sys.stderr)
    return 0


def _cmd_corrupt(args) -> int:
    img = load_image(args.input)
    if args.sigma is not None:
        spec = CorruptionSpec("additive-gaussian", sigma=args.sigma, rng_seed=args.seed)
    elif args.erase_fraction is not None:
        spec = CorruptionSpec("random-erasure", fraction=args.erase_fraction, rng_seed=args.seed)
    else:
        raise ValueError("either --sigma or --erase-fraction is required")
    out, mask = corrupt(img, spec)
    save_image(args.out, out)
    if args.mask_out:
        save_mask(args.mask_out, mask)
    _say(args, f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    rows = run_experiments(args.spec, args.output_dir, assets_dir=args.assets, threads=args.threads)
    write_report_csv(Path(args.output_dir) / "report.csv", rows)
    for r in rows:
        _say(args, f"{r.image} sigma={r.sigma:g} iter={r.iteration}: {r.psnr_db:.4f} dB")
    return 0


COMMANDS = {
    "denoise": _cmd_denoise,
    "inpaint": _cmd_inpaint,
    "train": _cmd_train,
    "corrupt": _cmd_corrupt,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return COMMANDS[args.command](args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
