"""Compare the compiled and numpy kernel backends.

Times SSW block application and EPSSW per-pixel filtering on a synthetic
multispectral cube and checks that both backends agree.

    python3 benchmarks/bench_kernels.py --size 128 --repeat 3
"""

import argparse
import time

import numpy as np

from specrecon import kernels
from specrecon.cube_io import forward_project, normalize_pair
from specrecon.noise_lab import build_noise_model, inject_poisson
from specrecon.pipeline import ReconConfig, fitted_prior
from specrecon.recon_spatial import apply_epssw, apply_ssw, build_ssw
from specrecon.scenes import SceneSpec, generate_scene
from specrecon.spectral_model import default_filter_bank, make_spatial_covariance


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--block", type=int, default=5)
    p.add_argument("--level", type=float, default=100.0)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    bank = default_filter_bank()
    hyper = generate_scene(SceneSpec(args.size, args.size, bank.wavelengths, seed=0))
    _, clean = normalize_pair(hyper, forward_project(hyper, bank))
    cube = inject_poisson(clean, np.full(bank.num_channels, args.level), 0)
    noise = build_noise_model(cube)
    prior = fitted_prior(cube, bank, noise, ReconConfig())
    filt = build_ssw(bank, prior, make_spatial_covariance(args.block, 0.97), noise)

    backends = kernels.available_backends()
    print(f"cube {args.size}x{args.size}x{bank.num_channels}, block {args.block}, backends {backends}")
    results = {}
    for name in backends:
        t_ssw, ssw = best_of(lambda: apply_ssw(filt, cube, backend=name), args.repeat)
        t_ep, ep = best_of(lambda: apply_epssw(bank, prior, noise, cube, block=args.block, backend=name),
                           args.repeat)
        results[name] = (t_ssw, t_ep, ssw.data, ep.data)
        print(f"{name:9s} ssw {t_ssw * 1e3:8.1f} ms   epssw {t_ep * 1e3:8.1f} ms")
    if len(results) == 2:
        c, py = results["compiled"], results["python"]
        print(f"speedup   ssw {py[0] / c[0]:8.2f}x     epssw {py[1] / c[1]:8.2f}x")
        print(f"max |diff| ssw {np.abs(c[2] - py[2]).max():.1e}   epssw {np.abs(c[3] - py[3]).max():.1e}")


if __name__ == "__main__":
    main()
