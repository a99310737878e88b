"""``haarlight`` command line.

Exit status: 0 on success, 2 on invalid input (bad flags, sizes, scene
files, formats), 1 when a file cannot be read or written.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .fixtures import constant_environment, phong_lobe_batch, procedural_environment
from .haar2d import (
    HaarPyramid,
    forward_transform,
    inverse_transform,
    parseval_residual,
    read_pyramid,
    size_exp_of,
    write_pyramid,
)
from .haarrot import build_rotated_pyramid, pyramid_psnr, rotate_pyramid_spatial
from .imageio import image_to_map, map_to_image, read_image, write_pfm, write_ppm
from .render import RenderOptions, compare_images, foreground_mask, render_image
from .report import RunReport
from .scene import Scene, load_scene
from .spheremap import RotationSpec, random_rotations

FIXTURE_PREFIX = "fixture:"


class UsageError(ValueError):
    pass


def _emit(report: RunReport, csv_path: str | None) -> None:
    sys.stdout.write(report.to_text())
    if csv_path:
        Path(csv_path).write_text(report.to_csv())


def _load_pyramid(spec: str, seed: int = 0) -> HaarPyramid:
    """A HAAR1 file, an image, or ``fixture:phong[:exponent[:size]]``."""
    if spec.startswith(FIXTURE_PREFIX):
        parts = spec[len(FIXTURE_PREFIX):].split(":")
        if parts[0] != "phong":
            raise UsageError(f"unknown fixture {parts[0]!r}")
        exponent = float(parts[1]) if len(parts) > 1 else 20.0
        size = int(parts[2]) if len(parts) > 2 else 128
        lobe = phong_lobe_batch(size_exp_of(size), 1, np.random.default_rng(seed), exponent)[0]
        return forward_transform(lobe)
    if Path(spec).suffix.lower() in (".pfm", ".ppm"):
        return forward_transform(image_to_map(read_image(spec)))
    return read_pyramid(spec)


# -- commands -----------------------------------------------------------------


def cmd_transform(args) -> RunReport:
    t0 = time.perf_counter()
    m = image_to_map(read_image(args.input))
    pyr = forward_transform(m)
    if args.levels is not None:
        if not 0 <= args.levels <= pyr.size_exp:
            raise UsageError(f"--levels must lie in 0..{pyr.size_exp}")
        for level in range(args.levels, pyr.size_exp):
            pyr.details[level] = np.zeros_like(pyr.details[level])
    write_pyramid(args.output, pyr)
    report = RunReport("transform", {"input": args.input, "levels": args.levels})
    report.timings["total"] = time.perf_counter() - t0
    report.results["size"] = m.size
    report.results["channels"] = m.channels
    report.results["parseval_residual"] = parseval_residual(m, forward_transform(m))
    report.outputs.append(args.output)
    return report


def cmd_inverse(args) -> RunReport:
    t0 = time.perf_counter()
    pyr = read_pyramid(args.input)
    image = map_to_image(inverse_transform(pyr))
    write_pfm(args.output, image)
    report = RunReport("inverse", {"input": args.input})
    report.timings["total"] = time.perf_counter() - t0
    report.results["size"] = 1 << pyr.size_exp
    report.outputs.append(args.output)
    return report


def _rotation_batch(pyr_source, args):
    rng = np.random.default_rng(args.seed)
    rots = random_rotations(args.random_trials, rng)
    if args.input.startswith(FIXTURE_PREFIX):
        parts = args.input[len(FIXTURE_PREFIX):].split(":")
        exponent = float(parts[1]) if len(parts) > 1 else 20.0
        size = int(parts[2]) if len(parts) > 2 else 128
        pyrs = [forward_transform(m) for m in phong_lobe_batch(size_exp_of(size), len(rots), rng, exponent)]
    else:
        pyrs = [pyr_source] * len(rots)
    return pyrs, rots


def cmd_rotate(args) -> RunReport:
    pyr = _load_pyramid(args.input, args.seed)
    n = pyr.size_exp
    level = n - 1 if args.start_level is None else args.start_level
    if not 1 <= level <= n - 1:
        raise UsageError(f"--start-level must lie in 1..{n - 1}")
    for name in ("alpha", "beta", "gamma"):
        if not np.isfinite(getattr(args, name)):
            raise UsageError(f"--{name} must be finite")
    report = RunReport("rotate", {
        "input": args.input, "mode": args.mode, "start_level": level,
        "alpha": args.alpha, "beta": args.beta, "gamma": args.gamma,
    })
    if args.random_trials:
        pyrs, rots = _rotation_batch(pyr, args)
        report.parameters.update({"random_trials": args.random_trials, "seed": args.seed})
        t0 = time.perf_counter()
        psnrs = [pyramid_psnr(rotate_pyramid_spatial(p, r), build_rotated_pyramid(p, r, level)) for p, r in zip(pyrs, rots)]
        report.timings["batch"] = time.perf_counter() - t0
        report.results["mean_psnr_db"] = float(np.mean(psnrs))
        report.results["min_psnr_db"] = float(np.min(psnrs))
        return report
    rot = RotationSpec.from_degrees(args.alpha, args.beta, args.gamma)
    t0 = time.perf_counter()
    out = build_rotated_pyramid(pyr, rot, level) if args.mode == "haar" else rotate_pyramid_spatial(pyr, rot)
    report.timings["rotate"] = time.perf_counter() - t0
    if args.verify:
        other = rotate_pyramid_spatial(pyr, rot) if args.mode == "haar" else build_rotated_pyramid(pyr, rot, level)
        ref, test = (other, out) if args.mode == "haar" else (out, other)
        report.results["psnr_db"] = pyramid_psnr(ref, test)
    if args.output:
        write_pyramid(args.output, out)
        report.outputs.append(args.output)
    return report


def resolve_environment(scene: Scene, override: str | None, n: int):
    spec = override or scene.env
    if spec.startswith("procedural:"):
        return procedural_environment(spec.split(":", 1)[1], n)
    if spec.startswith("constant:"):
        return constant_environment(n, float(spec.split(":", 1)[1]))
    path = Path(spec)
    if not path.is_absolute() and override is None:
        path = scene.base_dir / path
    if path.suffix.lower() in (".pfm", ".ppm"):
        return image_to_map(read_image(path))
    return read_pyramid(path)


def cmd_render(args) -> RunReport:
    scene = load_scene(args.scene)
    opts = RenderOptions.from_scene(
        scene, n=args.n, D=args.D, mode=args.mode, start_level=args.start_level, threads=args.threads,
    )
    if args.K is not None:
        opts.K = None if args.K == "full" else int(args.K)
        RenderOptions(**vars(opts))  # re-validate
    env = resolve_environment(scene, args.env, opts.n)
    report = RunReport("render", {
        "scene": args.scene, "K": "full" if opts.K is None else opts.K, "n": opts.n, "D": opts.D,
        "mode": opts.mode, "start_level": opts.level,
    })
    t0 = time.perf_counter()
    result = render_image(scene, env, opts)
    report.timings["render"] = time.perf_counter() - t0
    for stage, secs in result.timings.items():
        report.timings[f"stage_{stage}"] = secs
    report.results["hit_pixels"] = int(result.mask.sum())
    out = Path(args.output)
    write_pfm(out, result.image)
    write_ppm(out.with_suffix(".ppm"), result.image)
    report.outputs += [str(out), str(out.with_suffix(".ppm"))]
    report.results["image_sha256"] = hashlib.sha256(np.ascontiguousarray(result.image).tobytes()).hexdigest()

    if args.sweep_k:
        oracle_opts = RenderOptions(**{**vars(opts), "mode": "spatial", "K": None})
        oracle = render_image(scene, env, oracle_opts)
    if args.verify:
        other = RenderOptions(**{**vars(opts), "mode": "spatial" if opts.mode == "haar" else "haar"})
        other_img = render_image(scene, env, other)
        ref, test = (other_img, result) if opts.mode == "haar" else (result, other_img)
        cmp = compare_images(ref.image, test.image, ref.mask)
        report.results["verify_mse"] = cmp.mse
        report.results["verify_psnr_db"] = cmp.psnr
    if args.sweep_k:
        ks = [int(k) for k in args.sweep_k.split(",")]
        mses = []
        for k in ks:
            img = render_image(scene, env, RenderOptions(**{**vars(opts), "K": k}))
            mse = compare_images(oracle.image, img.image, oracle.mask).mse
            report.results[f"sweep_mse_K{k}"] = mse
            mses.append(mse)
        report.results["sweep_monotone"] = bool(all(b <= a for a, b in zip(mses, mses[1:])))
    return report


def cmd_compare(args) -> RunReport:
    ref = read_image(args.reference)
    test = read_image(args.test)
    if ref.shape != test.shape:
        raise UsageError(f"image sizes differ: {ref.shape} vs {test.shape}")
    mask = foreground_mask(ref, args.background) | foreground_mask(test, args.background)
    report = RunReport("compare", {"reference": args.reference, "test": args.test,
                                   "background": [float(b) for b in args.background]})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cmp = compare_images(ref, test, mask)
    report.warnings += [str(w.message) for w in caught]
    report.results["pixels"] = cmp.pixels
    report.results["mse"] = cmp.mse
    report.results["psnr_db"] = cmp.psnr
    return report


def cmd_bench(args) -> RunReport:
    sizes = [int(s) for s in args.sizes.split(",")]
    levels = [int(s) for s in args.start_levels.split(",")] if args.start_levels else None
    t0 = time.perf_counter()
    res = bench_mod.run_bench(sizes, levels, args.trials, args.seed)
    report = RunReport("bench", {"sizes": sizes, "trials": args.trials, "seed": args.seed})
    report.timings["total"] = time.perf_counter() - t0
    for row in res.rows:
        tag = f"N{row.size}_L{row.start_level}_{row.synthesis}{'' if row.fill_finer else '_coarse'}"
        report.timings[tag] = row.seconds
    for key, ratio in res.size_ratios.items():
        report.results[f"size_ratio_{key}"] = ratio
    for key, ratio in res.drop_ratios.items():
        report.results[f"drop_ratio_{key}"] = ratio
    report.results["linear_ok"] = res.linear_ok
    report.results["drop_ok"] = res.drop_ok
    if args.bench_csv:
        Path(args.bench_csv).write_text(res.to_csv())
        report.outputs.append(args.bench_csv)
    return report


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haarlight", description=__doc__.splitlines()[0])
    parser.add_argument("--csv", metavar="PATH", help="also write the run report as CSV")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="image (PFM/PPM) to HAAR1 pyramid")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--levels", type=int, help="keep only detail levels below this one")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("inverse", help="HAAR1 pyramid to PFM image")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("rotate", help="rotate a pyramid (HAAR1, image, or fixture:phong[:e[:size]])")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.add_argument("--alpha", type=float, default=0.0, help="degrees about X")
    p.add_argument("--beta", type=float, default=0.0, help="degrees about Y")
    p.add_argument("--gamma", type=float, default=0.0, help="degrees about Z")
    p.add_argument("--start-level", type=int)
    p.add_argument("--mode", choices=("haar", "spatial"), default="haar")
    p.add_argument("--verify", action="store_true", help="report PSNR against the other mode")
    p.add_argument("--random-trials", type=int, default=0, help="mean PSNR over this many random rotations")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("render", help="render a scene file")
    p.add_argument("scene")
    p.add_argument("output", help="linear PFM path; a PPM preview is written alongside")
    p.add_argument("--env", help="override the scene's environment")
    p.add_argument("--K", help="coefficient budget or 'full'")
    p.add_argument("--n", type=int)
    p.add_argument("--D", type=int)
    p.add_argument("--mode", choices=("haar", "spatial"))
    p.add_argument("--start-level", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--verify", action="store_true", help="also render the other mode and report PSNR")
    p.add_argument("--sweep-k", metavar="K1,K2,...", help="MSE against the full-K spatial render per budget")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="MSE and PSNR of two images over non-background pixels")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--background", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="rotation wall time vs size and start level")
    p.add_argument("--sizes", default="128,256")
    p.add_argument("--start-levels", help="comma list; default: finest two per size")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bench-csv", metavar="PATH", help="per-configuration timings as CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        report = args.func(args)
    except OSError as exc:
        print(f"haarlight: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"haarlight: {exc}", file=sys.stderr)
        return 2
    _emit(report, args.csv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
