"""Times every hot kernel under both backends and prints a comparison table.

Usage:
    python benchmarks/bench_kernels.py [--repeats N] [--quick]

Each case is checked for agreement between backends (max absolute
difference) before timing, so the table doubles as a consistency report.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lipread.kernels import (
    available_backends,
    avgpool_forward,
    conv2d_backward,
    conv2d_forward,
    depthwise_backward,
    depthwise_forward,
    lstm_backward,
    lstm_forward,
    maxpool_forward,
    set_backend,
)

rng = np.random.default_rng(0)


def _conv_case(n, h, w, cin, cout, k=3):
    x = rng.standard_normal((n, h, w, cin))
    wt = rng.standard_normal((k, k, cin, cout)) * 0.1
    b = rng.standard_normal(cout) * 0.1
    dy = rng.standard_normal((n, h, w, cout))

    def fwd():
        return conv2d_forward(x, wt, b)

    def bwd():
        return conv2d_backward(x, wt, dy)[0]

    return fwd, bwd


def _depthwise_case(n, h, w, c, k=3):
    x = rng.standard_normal((n, h, w, c))
    wt = rng.standard_normal((k, k, c)) * 0.1
    dy = rng.standard_normal((n, h, w, c))

    def fwd():
        return depthwise_forward(x, wt)

    def bwd():
        return depthwise_backward(x, wt, dy)[0]

    return fwd, bwd


def _pool_cases():
    x = rng.standard_normal((16, 30, 30, 16))
    stem = rng.standard_normal((8, 300, 300, 3))
    return {
        "maxpool2 16x30x30x16": lambda: maxpool_forward(x, 2)[0],
        "avgpool10 8x300x300x3": lambda: avgpool_forward(stem, 10),
    }


def _lstm_case(n=16, t=20, feat=784, hidden=128):
    x = rng.standard_normal((n, t, feat))
    wx = rng.standard_normal((feat, 4 * hidden)) * 0.02
    wh = rng.standard_normal((hidden, 4 * hidden)) * 0.02
    b = np.zeros(4 * hidden)

    dh = rng.standard_normal((n, hidden))

    def fwd():
        return lstm_forward(x, wx, wh, b)[0]

    def bwd():
        cache = lstm_forward(x, wx, wh, b)[1]
        return lstm_backward(wx, wh, cache, dh)[0]

    return fwd, bwd


def build_cases(quick: bool) -> dict:
    conv_fwd, conv_bwd = _conv_case(16, 30, 30, 3, 16)
    ind_fwd, ind_bwd = _conv_case(16, 20, 20, 2, 16)
    dw_fwd, dw_bwd = _depthwise_case(16, 20, 20, 16)
    lstm_fwd, lstm_bwd = _lstm_case()
    cases = {
        "conv3x3 fwd 16x30x30x3->16": conv_fwd,
        "conv3x3 bwd 16x30x30x3->16": conv_bwd,
        "conv3x3 fwd 16x20x20x2->16": ind_fwd,
        "depthwise fwd 16x20x20x16": dw_fwd,
        "lstm fwd 16x20x784->128": lstm_fwd,
        **_pool_cases(),
    }
    if not quick:
        cases["conv3x3 bwd 16x20x20x2->16"] = ind_bwd
        cases["depthwise bwd 16x20x20x16"] = dw_bwd
        cases["lstm bwd 16x20x784->128"] = lstm_bwd
    return cases


def median_ms(fn, repeats: int) -> float:
    fn()  # warmup (and jit compilation on the numba backend)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="fewer cases, for smoke runs")
    args = ap.parse_args()

    backends = available_backends()
    if "numba" not in backends:
        print("numba not importable; timing the numpy backend only")
    cases = build_cases(args.quick)

    rows = []
    for name, fn in cases.items():
        timings = {}
        outputs = {}
        for backend in backends:
            set_backend(backend)
            outputs[backend] = np.asarray(fn())
            timings[backend] = median_ms(fn, args.repeats)
        delta = (
            float(np.max(np.abs(outputs["numba"] - outputs["numpy"])))
            if len(backends) > 1
            else 0.0
        )
        rows.append((name, timings.get("numpy"), timings.get("numba"), delta))

    print(f"{'kernel':<30} {'numpy ms':>9} {'numba ms':>9} {'speedup':>8} {'max |d|':>9}")
    print("-" * 70)
    for name, t_np, t_nb, delta in rows:
        if t_nb is None:
            print(f"{name:<30} {t_np:>9.2f} {'-':>9} {'-':>8} {'-':>9}")
        else:
            print(f"{name:<30} {t_np:>9.2f} {t_nb:>9.2f} {t_np / t_nb:>7.1f}x {delta:>9.1e}")
    set_backend("auto")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
