"""Time the compiled kernels against the numpy fallback on full-size shapes.

    python3 benchmarks/bench_kernels.py [--frames 1000] [--repeat 3]

Shapes follow one analysis chunk / synthesis chunk of the default run
(5121-point frames, 2 channels, 48 lags, 10-sample wavepacket).
"""
import argparse
import time

import numpy as np

from eprsim import kernels
from eprsim.analysis import ModeFunction, window_starts


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_frames, rng):
    n = 5121
    nb = n // 2 + 1
    L = rng.normal(size=(nb, 2, 2))
    zr, zi = rng.normal(size=(2, n_frames, 2, nb))
    x = rng.normal(size=(n_frames, n))
    mode = ModeFunction().samples(256e9)
    starts = window_starts(n, 256e9, 40e-12, mode.size)
    inc = rng.normal(size=400 * n_frames)
    ctl = np.tile(np.r_[np.ones(360, np.uint8), np.zeros(40, np.uint8)], n_frames)
    return {
        "color_bins": lambda k: k.color_bins(L, zr, zi),
        "lag_products": lambda k: k.lag_products(x, 48),
        "window_project": lambda k: k.window_project(x, mode, starts),
        "servo_track": lambda k: k.servo_track(inc, ctl, 0.1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if kernels.compiled_kernels is None:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':16s} {'python [s]':>11s} {'compiled [s]':>13s} {'speed-up':>9s} {'max rel diff':>13s}")
    for name, run in cases(args.frames, rng).items():
        t_py = best_of(lambda: run(kernels.python_kernels), args.repeat)
        if kernels.compiled_kernels is None:
            print(f"{name:16s} {t_py:11.3f} {'-':>13s} {'-':>9s} {'-':>13s}")
            continue
        t_c = best_of(lambda: run(kernels.compiled_kernels), args.repeat)
        a = np.asarray(run(kernels.python_kernels))
        b = np.asarray(run(kernels.compiled_kernels))
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
        print(f"{name:16s} {t_py:11.3f} {t_c:13.3f} {t_py / t_c:8.1f}x {diff:13.1e}")


if __name__ == "__main__":
    main()
