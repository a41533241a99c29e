"""Compare the compiled and pure-Python kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the two raw kernels and the full R-peak detector (whose scan loop is
the hot path) with each backend, after checking that both agree.
"""
import argparse
import contextlib
import timeit

import numpy as np

from painmtl import _backend, _kernels_py
from painmtl.data import synthesize_ecg
from painmtl.features import sc_features
from painmtl.signal import _pan_tompkins_stages, detect_r_peaks

FS = 512.0

try:
    from painmtl import _kernels as _compiled
except ImportError:
    _compiled = None


@contextlib.contextmanager
def use(kernels):
    saved = _backend.mean_abs_lag_diff, _backend.qrs_scan
    _backend.mean_abs_lag_diff, _backend.qrs_scan = kernels.mean_abs_lag_diff, kernels.qrs_scan
    try:
        yield
    finally:
        _backend.mean_abs_lag_diff, _backend.qrs_scan = saved


def scan_args(ecg):
    _, slope, integrated = _pan_tompkins_stages(ecg.samples, FS)
    n = len(ecg)
    return integrated, slope, int(0.2 * FS), int(0.36 * FS), int(0.5 * FS), n - int(0.5 * FS)


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled kernels not built; nothing to compare")
        return 1

    ecg, _ = synthesize_ecg(75, 5.5, FS, noise_sd=0.05, seed=0)
    long_ecg, _ = synthesize_ecg(75, 300.0, FS, noise_sd=0.05, seed=0)
    sc = 5 + np.cumsum(np.random.default_rng(0).normal(0, 0.01, 2816))
    scan = scan_args(long_ecg)
    assert np.array_equal(_compiled.qrs_scan(*scan), _kernels_py.qrs_scan(*scan))

    cases = [
        ("qrs_scan, 300 s ECG", lambda k: (lambda: k.qrs_scan(*scan)), 3),
        ("mean_abs_lag_diff, 2816 samples", lambda k: (lambda: k.mean_abs_lag_diff(sc, 1)), 200),
        ("sc_features, 5.5 s window", lambda k: sc_features_with(k, sc), 200),
        ("detect_r_peaks, 5.5 s window", lambda k: detect_with(k, ecg), 50),
    ]
    print(f"{'case':34s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, make, number in cases:
        t_py = best_of(make(_kernels_py), args.repeat, number)
        t_cy = best_of(make(_compiled), args.repeat, number)
        print(f"{name:34s} {t_py * 1e3:10.3f}ms {t_cy * 1e3:10.3f}ms {t_py / t_cy:7.1f}x")
    return 0


def sc_features_with(kernels, x):
    def run():
        with use(kernels):
            sc_features(x)
    return run


def detect_with(kernels, ecg):
    def run():
        with use(kernels):
            detect_r_peaks(ecg)
    return run


if __name__ == "__main__":
    raise SystemExit(main())
