"""Compiled vs numpy kernels on detector-sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from rfsense import _kernels_py as py

try:
    from rfsense import _ckernels as ck
except ImportError:
    ck = None


def intervals(rng, n, size=1024.0):
    a = rng.uniform(0, size, n)
    return np.stack([a, a + rng.uniform(2, size / 4, n)], axis=1)


def cases(rng):
    props = intervals(rng, 320)
    truths = intervals(rng, 5)
    order = np.argsort(props[:, 0] - props[:, 1], kind="stable")
    ordered = props[order]
    spectrum = rng.standard_normal(1024)
    spectrum[300:380] += 8.0
    feats = rng.standard_normal((128, 64)).astype(np.float32)
    bins = py.roi_bins(props[:32], 64, 16, 7)
    pooled, arg = py.roi_pool_forward(feats, bins)
    ious = py.iou_matrix(props[:64], truths)
    score_order = np.arange(64)
    zeros64, zeros5 = np.zeros(64, dtype=np.int64), np.zeros(5, dtype=np.int64)
    return {
        "iou_matrix 320x320": lambda k: k.iou_matrix(props, props),
        "nms_sorted 320": lambda k: k.nms_sorted(ordered, np.zeros(320, dtype=np.int64), 0.7),
        "energy_scan 1024": lambda k: k.energy_scan(spectrum, 1.0, 5, 2),
        "roi_bins 32": lambda k: k.roi_bins(props[:32], 64, 16, 7),
        "roi_pool_forward 32x128": lambda k: k.roi_pool_forward(feats, bins),
        "roi_pool_backward 32x128": lambda k: k.roi_pool_backward(pooled, arg, 64),
        "greedy_match 64x5": lambda k: k.greedy_match(ious, score_order, zeros64, zeros5, 0.5, False),
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if ck is None:
        print("compiled kernels not built; only the numpy path is available")
    print(f"{'kernel':<26}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>9}")
    for name, call in cases(np.random.default_rng(0)).items():
        t_py = best_of(lambda: call(py), args.repeat)
        if ck is None:
            print(f"{name:<26}{t_py:>12.2e}")
            continue
        t_ck = best_of(lambda: call(ck), args.repeat)
        print(f"{name:<26}{t_py:>12.2e}{t_ck:>12.2e}{t_py / t_ck:>8.1f}x")


if __name__ == "__main__":
    main()
