"""Command-line surface: denoise, train, eval, basis-render, mask, gradcheck,
dilation-sweep.

Exit codes are a stable contract: 0 success, 1 check failure, 2 usage error,
3 I/O error, 4 model error. Every command that takes seeds is reproducible;
--no-timing additionally nulls wall-clock fields so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import ctypes
import json
import math
import os
import sys
import time

import numpy as np

from .classify import CannyParams, canny_mask, tv_mask
from .denoise import (
    ModelFormatError,
    dct2net_forward,
    dct_denoise,
    load_model,
    save_model,
)
from .hybrid import HybridConfig, dilation_sweep, hybrid_denoise
from .image import (
    ImageFormatError,
    add_gaussian_noise,
    psnr,
    read_image,
    write_image,
)
from .training import (
    TrainConfig,
    _split_validation,
    gradcheck,
    train,
    validation_psnr,
)
from .transform import dct_basis

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MODEL = 4

_IMAGE_SUFFIXES = (".png", ".pgm", ".pnm")


def set_thread_count(n: int) -> None:
    """Pin the BLAS pool to n threads (best effort, for reproducible runs).

    Walks the loaded shared objects for an OpenBLAS control symbol; also sets
    OMP_NUM_THREADS for anything loaded later. n <= 0 leaves the default.
    """
    if n is None or n <= 0:
        return
    os.environ["OMP_NUM_THREADS"] = str(n)
    paths = set()
    try:
        with open("/proc/self/maps", encoding="ascii", errors="replace") as fh:
            for line in fh:
                parts = line.split()
                if parts and parts[-1].startswith("/") and "blas" in parts[-1].lower():
                    paths.add(parts[-1])
    except OSError:
        return
    for path in sorted(paths):
        try:
            dll = ctypes.CDLL(path)
        except OSError:
            continue
        for sym in ("openblas_set_num_threads64_", "openblas_set_num_threads"):
            fn = getattr(dll, sym, None)
            if fn is not None:
                fn(ctypes.c_int(n))
                break


def _fmt_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def _eval_noise_seed(noise_seed: int, image_index: int, sigma: float):
    return np.random.SeedSequence((noise_seed, image_index, int(round(sigma * 1e6))))


def _list_images(directory: str) -> list[str]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise ImageFormatError(f"cannot list {directory!r}: {exc}") from exc
    return [
        os.path.join(directory, n)
        for n in names
        if n.lower().endswith(_IMAGE_SUFFIXES)
    ]


def _denoise_by_method(img, sigma, method, model, p):
    if method == "dct-uniform":
        return dct_denoise(img, sigma, dct_basis(p), mode="uniform")
    if method == "dct-adaptive":
        return dct_denoise(img, sigma, dct_basis(p), mode="adaptive")
    if method == "dct2net":
        return dct2net_forward(img, sigma, model, phase="eval")
    if method == "hybrid":
        return hybrid_denoise(img, sigma, HybridConfig(model))[0]
    raise ValueError(f"unknown method {method!r}")


def cmd_denoise(args) -> int:
    img = read_image(args.infile)
    if args.seed_noise is not None:
        img = add_gaussian_noise(img, args.sigma, args.seed_noise)
    model = load_model(args.model) if args.model else None
    out = _denoise_by_method(img, args.sigma, args.method, model, args.p)
    write_image(out, args.out)
    if args.ref:
        ref = read_image(args.ref)
        print(f"PSNR {_fmt_db(psnr(out, ref))}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch=args.batch,
        crop=args.crop,
        m=args.m,
        sigma_range=(args.sigma_min, args.sigma_max),
        seed=args.seed,
        p=args.p,
        loss=args.loss.replace("-", "_"),
        beta=args.beta,
    )


def cmd_train(args) -> int:
    paths = _list_images(args.data)
    if not paths:
        print(f"error: no images found in {args.data!r}", file=sys.stderr)
        return EXIT_USAGE
    dataset = [read_image(p) for p in paths]
    cfg = _train_config(args)
    log_path = args.log if args.log else args.out + ".log"
    records: list[dict] = []

    with open(log_path, "w", encoding="utf-8") as log_fh:

        def emit(record: dict) -> None:
            if args.no_timing:
                record = dict(record, wall_ms=None)
            records.append(record)
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

        model = train(dataset, cfg, log=emit)

    save_model(model, args.out)
    final_val = next(
        (r["val_psnr"] for r in reversed(records) if r["val_psnr"] is not None), None
    )
    if final_val is None:
        val_images = _split_validation(dataset)[1]
        final_val = validation_psnr(val_images, model.basis.mat, cfg)
    print(f"final validation PSNR {_fmt_db(final_val)}")
    return EXIT_OK


def _parse_sigmas(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"bad --sigmas value {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise ValueError(f"bad --sigmas value {text!r}")
    return values


def cmd_eval(args) -> int:
    paths = _list_images(args.data)
    if not paths:
        print(f"error: no images found in {args.data!r}", file=sys.stderr)
        return EXIT_USAGE
    sigmas = _parse_sigmas(args.sigmas)
    model = load_model(args.model) if args.model else None
    if args.method in ("dct2net", "hybrid") and model is None:
        print("error: --model is required for this method", file=sys.stderr)
        return EXIT_USAGE
    rows = []
    for idx, path in enumerate(paths):
        clean = read_image(path)
        name = os.path.basename(path)
        for sigma in sigmas:
            noisy = add_gaussian_noise(
                clean, sigma, _eval_noise_seed(args.noise_seed, idx, sigma)
            )
            started = time.monotonic()
            out = _denoise_by_method(noisy, sigma, args.method, model, args.p)
            elapsed = (time.monotonic() - started) * 1000.0
            rows.append(
                {
                    "image": name,
                    "sigma": sigma,
                    "psnr": psnr(out, clean),
                    "ms": None if args.no_timing else elapsed,
                }
            )

    averages = {
        f"{sigma:g}": float(np.mean([r["psnr"] for r in rows if r["sigma"] == sigma]))
        for sigma in sigmas
    }
    name_width = max(len(r["image"]) for r in rows)
    header = "image".ljust(name_width) + "".join(
        f"  sigma={sigma:g}".rjust(12) for sigma in sigmas
    )
    print(header)
    for path in paths:
        name = os.path.basename(path)
        cells = "".join(
            f"{_fmt_db(r['psnr']):>12}"
            for r in rows
            if r["image"] == name
        )
        print(name.ljust(name_width) + cells)
    print(
        "average".ljust(name_width)
        + "".join(f"{_fmt_db(averages[f'{sigma:g}']):>12}" for sigma in sigmas)
    )
    if args.json:
        report = {
            "config": {
                "data": args.data,
                "method": args.method,
                "model": args.model,
                "p": args.p,
                "sigmas": sigmas,
                "noise_seed": args.noise_seed,
            },
            "rows": rows,
            "averages": averages,
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return EXIT_OK


def cmd_basis_render(args) -> int:
    if args.model:
        model = load_model(args.model)
        mat, p = model.basis.mat, model.p
    else:
        p = args.p
        mat = dct_basis(p).mat
    side = p * p + p + 1
    canvas = np.zeros((side, side))
    for j in range(p * p):
        u, v = divmod(j, p)
        tile = mat[:, j].reshape(p, p)
        lo, hi = tile.min(), tile.max()
        if hi > lo:
            tile = (tile - lo) / (hi - lo) * 255.0
        else:
            tile = np.full((p, p), 127.5)
        r0 = 1 + u * (p + 1)
        c0 = 1 + v * (p + 1)
        canvas[r0 : r0 + p, c0 : c0 + p] = tile
    write_image(canvas, args.out)
    return EXIT_OK


def cmd_mask(args) -> int:
    img = read_image(args.infile)
    if args.mode == "canny":
        params = CannyParams(
            gauss_sigma=args.gauss_sigma,
            low=args.low,
            high=args.high,
            dilation=args.dilation,
        )
        mask = canny_mask(img, params)
    else:
        mask = tv_mask(img, window=args.window, percentile=args.percentile)
    write_image(mask.astype(np.float64) * 255.0, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.p > 5:
        print("error: gradcheck supports p <= 5", file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0xF1C)))
    image = rng.random((12, 12)) * 255.0
    cfg = TrainConfig(
        p=args.p,
        crop=12,
        loss=args.loss.replace("-", "_"),
        beta=args.beta,
        seed=args.seed,
    )
    report = gradcheck(args.p, image, args.sigma, cfg)
    print(f"max relative error {report.max_rel_err:.3e}")
    return EXIT_OK if report.max_rel_err <= 1e-4 else EXIT_CHECK


def _parse_sizes(text: str) -> list[float]:
    sizes: list[float] = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in ("inf", "infinity", "∞"):
            sizes.append(math.inf)
            continue
        value = int(tok)
        if value < 1 or value % 2 == 0:
            raise ValueError(f"dilation sizes must be odd, got {value}")
        sizes.append(float(value))
    if not sizes:
        raise ValueError("empty --sizes")
    return sizes


def cmd_dilation_sweep(args) -> int:
    paths = _list_images(args.data)
    if not paths:
        print(f"error: no images found in {args.data!r}", file=sys.stderr)
        return EXIT_USAGE
    sizes = _parse_sizes(args.sizes)
    model = load_model(args.model)
    cfg = HybridConfig(model)
    totals = np.zeros(len(sizes))
    for idx, path in enumerate(paths):
        clean = read_image(path)
        noisy = add_gaussian_noise(
            clean, args.sigma, _eval_noise_seed(args.noise_seed, idx, args.sigma)
        )
        rows = dilation_sweep(noisy, args.sigma, cfg, sizes, clean)
        totals += np.array([r[1] for r in rows])
    print("dilation  avg_psnr")
    for size, total in zip(sizes, totals):
        label = "inf" if math.isinf(size) else f"{int(size)}"
        print(f"{label:>8}  {total / len(paths):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dct2net",
        description="Sliding-window transform denoising: fixed cosine basis, "
        "learned transform, and an edge-aware hybrid of the two.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("DCT2NET_THREADS", "0")),
        help="BLAS thread count (0 = library default; env DCT2NET_THREADS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("denoise", help="denoise one image")
    d.add_argument("--in", dest="infile", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument(
        "--method",
        choices=("dct-uniform", "dct-adaptive", "dct2net", "hybrid"),
        required=True,
    )
    d.add_argument("--model")
    d.add_argument("--p", type=int, default=13)
    d.add_argument("--seed-noise", dest="seed_noise", type=int, default=None,
                   help="add noise with this seed before denoising (demo runs)")
    d.add_argument("--ref", help="clean reference; prints PSNR when given")
    d.set_defaults(func=cmd_denoise)

    t = sub.add_parser("train", help="train a transform on a directory of images")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", default=None, help="JSON-lines log path (default <out>.log)")
    t.add_argument("--p", type=int, default=13)
    t.add_argument("--epochs", type=int, default=15)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--crop", type=int, default=128)
    t.add_argument("--m", type=int, default=32)
    t.add_argument("--sigma-min", dest="sigma_min", type=float, default=1.0)
    t.add_argument("--sigma-max", dest="sigma_max", type=float, default=55.0)
    t.add_argument(
        "--loss",
        choices=("mse", "masked", "ortho-reg", "patch-target", "ortho-param"),
        default="mse",
    )
    t.add_argument("--beta", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-timing", action="store_true",
                   help="write null wall_ms so reruns are byte-identical")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="PSNR table over a directory of clean images")
    e.add_argument("--data", required=True)
    e.add_argument("--sigmas", default="15,25,50")
    e.add_argument(
        "--method",
        choices=("dct-uniform", "dct-adaptive", "dct2net", "hybrid"),
        required=True,
    )
    e.add_argument("--model")
    e.add_argument("--p", type=int, default=13)
    e.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    e.add_argument("--json", default=None, help="also write the report as JSON")
    e.add_argument("--no-timing", action="store_true",
                   help="write null ms fields so reruns are byte-identical")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("basis-render", help="render basis atoms as an image grid")
    group = b.add_mutually_exclusive_group(required=True)
    group.add_argument("--model")
    group.add_argument("--dct", action="store_true")
    b.add_argument("--p", type=int, default=13)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_basis_render)

    m = sub.add_parser("mask", help="export a flat-vs-complex mask")
    m.add_argument("--in", dest="infile", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--mode", choices=("canny", "tv"), default="canny")
    m.add_argument("--gauss-sigma", dest="gauss_sigma", type=float, default=1.0)
    m.add_argument("--low", type=float, default=0.1)
    m.add_argument("--high", type=float, default=0.2)
    m.add_argument("--dilation", type=int, default=5)
    m.add_argument("--window", type=int, default=7)
    m.add_argument("--percentile", type=float, default=0.75)
    m.set_defaults(func=cmd_mask)

    g = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    g.add_argument("--p", type=int, default=3)
    g.add_argument("--sigma", type=float, default=25.0)
    g.add_argument(
        "--loss",
        choices=("mse", "masked", "ortho-reg", "patch-target", "ortho-param"),
        default="mse",
    )
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("dilation-sweep", help="hybrid PSNR per dilation size")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--sigma", type=float, default=20.0)
    s.add_argument("--sizes", default="3,5,7,9,11,inf")
    s.add_argument("--noise-seed", dest="noise_seed", type=int, default=0)
    s.set_defaults(func=cmd_dilation_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_thread_count(args.threads)
    if getattr(args, "method", None) in ("dct2net", "hybrid") and not getattr(
        args, "model", None
    ):
        parser.error(f"--model is required for method {args.method}")
    try:
        return args.func(args)
    except ModelFormatError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ImageFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
