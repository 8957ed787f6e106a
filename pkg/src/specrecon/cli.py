"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .cube_io import forward_project, normalize_pair, read_cube, read_header, write_cube
from .errors import CubeFormatError, InvalidArgumentError, SingularSystemError, UndefinedMetricError
from .metrics_eval import make_schedules, parse_levels, plot_summary, run_benchmark
from .noise_lab import (
    CAP_SCENARIOS,
    IntensitySchedule,
    NoiseModel,
    build_noise_model,
    inject_poisson,
    oracle_noise_model,
    schedule_levels,
)
from .pipeline import METHODS, ReconConfig, fitted_prior, reconstruct
from .scenes import SceneSpec, demo_scenes, generate_scene
from .spectral_model import (
    FilterBank,
    HyperCube,
    MultiCube,
    default_filter_bank,
    estimate_scale_factor,
    make_trapezoid_bank,
    wavelength_grid,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("specrecon")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _level(text: str) -> float:
    try:
        levels = parse_levels(text)
    except (InvalidArgumentError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if len(levels) != 1:
        raise argparse.ArgumentTypeError(f"expected one level, got {text!r}")
    return levels[0]


def _add_bank_args(p):
    g = p.add_argument_group("filter bank")
    g.add_argument("--filters", metavar="CSV", help="filter CSV (first row wavelengths, one filter per row)")
    g.add_argument("--trapezoids", metavar="JSON", help="trapezoid filter description, sampled on 440-920 nm / 49 bands")


def _add_recon_args(p):
    g = p.add_argument_group("reconstruction")
    g.add_argument("--prior-order", type=int, default=2, choices=(1, 2))
    g.add_argument("--alpha", type=float, default=1e-4)
    g.add_argument("--block", type=int, default=5, help="SSW/EPSSW block size (odd)")
    g.add_argument("--decay", type=float, default=0.97, help="SSW Markov decay factor")
    g.add_argument("--spatial-var", type=float, default=16.0, help="EPSSW spatial weight variance")
    g.add_argument("--range-var", type=float, default=0.4, help="EPSSW range weight variance")
    g.add_argument("--guide-block", type=int, default=5, help="SPRE guided-filter window (odd)")
    g.add_argument("--theta", type=float, default=1e-3, help="SPRE guided-filter regulariser")
    g.add_argument("--noise-source", choices=("estimated", "oracle"), default="estimated",
                   help="estimate channel noise from the image, or use the values recorded by `simulate`")
    g.add_argument("--backend", choices=("compiled", "python"), default=None,
                   help="kernel backend (default: compiled if available)")


def _config(args) -> ReconConfig:
    return ReconConfig(
        order=args.prior_order, alpha=args.alpha, block=args.block, decay=args.decay,
        spatial_var=args.spatial_var, range_var=args.range_var,
        guide_block=args.guide_block, theta=args.theta, backend=args.backend,
    )


def _bank(args) -> FilterBank:
    if args.filters and args.trapezoids:
        raise UsageError("--filters and --trapezoids are mutually exclusive")
    if args.filters:
        return FilterBank.from_csv(args.filters)
    if args.trapezoids:
        return make_trapezoid_bank(args.trapezoids, wavelength_grid())
    return default_filter_bank()


def _noise_for(path, cube: MultiCube, source: str) -> NoiseModel:
    if source == "estimated":
        return build_noise_model(cube)
    sigma = read_header(path).get("extra", {}).get("noise_sigma")
    if sigma is None:
        raise InvalidArgumentError(f"{path} records no noise_sigma; use --noise-source estimated")
    return NoiseModel(sigma)


def _schedule(args, channels: int) -> IntensitySchedule:
    if args.intensity_min is not None or args.intensity_max is not None:
        if args.intensity_min is None or args.intensity_max is None:
            raise UsageError("--intensity-min and --intensity-max go together")
        return IntensitySchedule.cap_shaped(args.intensity_min, args.intensity_max, channels)
    return IntensitySchedule.uniform(args.intensity, channels)


def cmd_simulate(args) -> int:
    bank = _bank(args)
    if args.scene in ("demo", "stripes"):
        spec = SceneSpec(height=args.size, width=args.size, wavelengths=bank.wavelengths,
                         layout="mosaic" if args.scene == "demo" else "stripes",
                         regions=8 if args.scene == "demo" else 2, seed=args.scene_seed)
        hyper = generate_scene(spec)
    else:
        hyper = read_cube(args.scene, kind="hyper")
    reference, clean = normalize_pair(hyper, forward_project(hyper, bank))
    levels = schedule_levels(_schedule(args, bank.num_channels))
    noisy = inject_poisson(clean, levels, args.seed)
    extra = {
        "levels": [("inf" if math.isinf(v) else float(v)) for v in levels],
        "noise_sigma": [float(s) for s in oracle_noise_model(clean, levels).sigma],
        "seed": args.seed,
    }
    write_cube(noisy, args.out, dtype=args.dtype, extra=extra)
    if args.truth_out:
        write_cube(HyperCube(reference.data, bank.wavelengths), args.truth_out, dtype=args.dtype)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    bank = _bank(args)
    cube = read_cube(args.input, kind="multi")
    if cube.channels != bank.num_channels:
        raise InvalidArgumentError(f"cube has {cube.channels} channels, filter bank has {bank.num_channels}")
    config = _config(args)
    noise = _noise_for(args.input, cube, args.noise_source)
    prior = config.prior(bank.num_bands)
    if args.scale_factor is not None:
        prior = prior.with_scale(args.scale_factor)
    else:
        prior = prior.with_scale(estimate_scale_factor(cube, bank, prior, noise))
    result = reconstruct(args.method, cube, bank, noise, config, prior=prior, details=True)
    out_cube = result.cube if args.method == "spre" else result
    out = args.out or str(Path(args.input).with_suffix("")) + f".{args.method}.cube"
    write_cube(HyperCube(out_cube.data, bank.wavelengths), out, dtype=args.dtype,
               extra={"method": args.method, "scale_d": prior.scale_d})
    if args.method == "spre":
        if args.dump_guide:
            write_cube(MultiCube(result.guide.data[:, :, None]), args.dump_guide,
                       extra={"guide_weights": [float(w) for w in result.guide.weights]})
        if args.dump_z:
            with open(args.dump_z, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["band", "z"])
                for i, z in enumerate(result.mixing.z):
                    writer.writerow([i, repr(float(z))])
    elif args.dump_guide or args.dump_z:
        log.warning("--dump-guide/--dump-z only apply to --method spre")
    print(out)
    return EXIT_OK


def cmd_estimate_noise(args) -> int:
    cube = read_cube(args.input)
    noise = build_noise_model(MultiCube(cube.data))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["channel", "sigma"])
    for i, s in enumerate(noise.sigma):
        writer.writerow([i, repr(float(s))])
    return EXIT_OK


def cmd_scale_factor(args) -> int:
    bank = _bank(args)
    cube = read_cube(args.input, kind="multi")
    noise = _noise_for(args.input, cube, args.noise_source)
    prior = fitted_prior(cube, bank, noise, _config(args))
    print(repr(prior.scale_d))
    return EXIT_OK


def _scenarios(text: str) -> list:
    text = text.strip().lower()
    if text in ("", "none"):
        return []
    if text == "table1":
        return list(CAP_SCENARIOS)
    out = []
    for tok in text.split(","):
        try:
            lo, hi = tok.split(":")
            out.append((float(lo), float(hi)))
        except ValueError:
            raise UsageError(f"bad scenario {tok!r}; use table1, none or LMIN:LMAX[,...]") from None
    return out


def _methods(text: str) -> list:
    if text.strip().lower() == "all":
        return list(METHODS)
    methods = [m.strip().lower() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    return methods


def cmd_bench(args) -> int:
    bank = _bank(args)
    try:
        levels = parse_levels(args.levels)
    except (InvalidArgumentError, ValueError) as exc:
        raise UsageError(f"bad --levels: {exc}") from None
    schedules = make_schedules(levels, _scenarios(args.scenarios), bank.num_channels)
    if not schedules:
        raise UsageError("no intensity levels or scenarios selected")
    methods = _methods(args.methods)
    if args.scenes_from:
        scenes = [read_cube(p, kind="hyper") for p in args.scenes_from]
        names = [Path(p).stem for p in args.scenes_from]
    else:
        scenes = demo_scenes(args.scenes, args.size, seed=args.scene_seed, wavelengths=bank.wavelengths)
        names = None
    report = run_benchmark(
        scenes, bank, methods, schedules, seeds=list(range(args.seeds)), config=_config(args),
        noise_source=args.noise_source, timing=not args.no_timing, scene_names=names,
    )
    report.to_csv(args.out)
    if args.plot:
        plot_summary(report, args.plot)
    if args.summary:
        for row in report.summary():
            print(f"{row['method']:6s} l=({_lv(row['l_min'])},{_lv(row['l_max'])}) "
                  f"SA={row['sa_mean']:.4f}+/-{row['sa_std']:.4f} "
                  f"MSE={row['mse_mean']:.3e}+/-{row['mse_std']:.1e}")
    failed = [r for r in report.records if r.error]
    if failed:
        log.warning("%d of %d cells failed", len(failed), len(report.records))
    return EXIT_OK


def _lv(v):
    return "inf" if math.isinf(v) else f"{v:g}"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specrecon", description="Hyperspectral reconstruction from noisy multispectral cubes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render a scene, project it through the filters and add Poisson noise")
    p.add_argument("--scene", default="demo", help="'demo', 'stripes' or a hyperspectral cube file")
    p.add_argument("--size", type=int, default=64, help="side length of generated scenes")
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--intensity", type=_level, default=math.inf, help="uniform intensity level (float or inf)")
    p.add_argument("--intensity-min", type=float, help="cap-shaped schedule: outer-channel level")
    p.add_argument("--intensity-max", type=float, help="cap-shaped schedule: middle-channel level")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", help="also write the normalised reference hyperspectral cube")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    _add_bank_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct a hyperspectral cube")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--scale-factor", type=float, help="fixed prior scale instead of the fitted one")
    p.add_argument("--dump-guide", metavar="PATH", help="write the SPRE guide image (cube format)")
    p.add_argument("--dump-z", metavar="PATH", help="write the SPRE mixing vector as CSV")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    _add_bank_args(p)
    _add_recon_args(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("estimate-noise", help="per-channel noise standard deviation")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_estimate_noise)

    p = sub.add_parser("scale-factor", help="fit the prior scale factor to a multispectral cube")
    p.add_argument("--in", dest="input", required=True)
    _add_bank_args(p)
    _add_recon_args(p)
    p.set_defaults(func=cmd_scale_factor)

    p = sub.add_parser("bench", help="noise-level benchmark sweep, one CSV row per cell")
    p.add_argument("--levels", default="10,100,1000,inf", help="uniform levels, e.g. 10,100,inf")
    p.add_argument("--scenarios", default="none", help="'table1', 'none' or LMIN:LMAX[,...] cap-shaped schedules")
    p.add_argument("--methods", default="all", help=f"'all' or a subset of {','.join(METHODS)}")
    p.add_argument("--seeds", type=int, default=1, help="noise seeds 0..n-1 per cell")
    p.add_argument("--scenes", type=int, default=5, help="number of generated scenes")
    p.add_argument("--scenes-from", nargs="+", metavar="CUBE", help="hyperspectral cube files instead of generated scenes")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV: scene,method,l_min,l_max,seed,mse,sa,runtime_s")
    p.add_argument("--plot", metavar="SVG", help="write a mean +/- std summary plot")
    p.add_argument("--summary", action="store_true", help="print aggregated results")
    p.add_argument("--no-timing", action="store_true", help="write runtime_s as nan (byte-reproducible CSV)")
    _add_bank_args(p)
    _add_recon_args(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"specrecon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularSystemError, np.linalg.LinAlgError, UndefinedMetricError) as exc:
        print(f"specrecon: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CubeFormatError, InvalidArgumentError, OSError, KeyError, ValueError) as exc:
        print(f"specrecon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
