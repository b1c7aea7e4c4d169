"""Microbenchmark of the compiled kernels against the numpy fallback.

Run as `python -m stylesearch.bench [repeats]`. Times the hot kernels
on decoder-realistic shapes and prints a table with the speedup of the
compiled extension over the pure-numpy twin (or only the numpy column
when the extension is not built).
"""

from __future__ import annotations

import sys
import time

import numpy as np

from stylesearch.kernels import BACKEND, backends


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases():
    rng = np.random.default_rng(0)
    x_small = rng.normal(size=(8, 32, 32))
    w_small = rng.normal(size=(8, 8, 3, 3))
    b_small = rng.normal(size=(8,))
    g_small = rng.normal(size=(8, 32, 32))
    x_big = rng.normal(size=(64, 8, 8))
    w_big = rng.normal(size=(64, 64, 3, 3))
    b_big = rng.normal(size=(64,))
    g_big = rng.normal(size=(64, 8, 8))
    x_up = rng.normal(size=(32, 16, 16))
    g_up = rng.normal(size=(32, 32, 32))
    a = rng.normal(size=(64, 64))
    a = (a + a.T) / 2

    def jacobi(mod):
        work = a.copy()
        vecs = np.eye(64)
        mod.jacobi_sweep(work, vecs)

    return [
        ("conv2d fwd 8ch 32x32",
         lambda m: m.conv2d_forward(x_small, w_small, b_small, 1)),
        ("conv2d bwd 8ch 32x32",
         lambda m: m.conv2d_backward(x_small, w_small, g_small, 1)),
        ("conv2d fwd 64ch 8x8",
         lambda m: m.conv2d_forward(x_big, w_big, b_big, 1)),
        ("conv2d bwd 64ch 8x8",
         lambda m: m.conv2d_backward(x_big, w_big, g_big, 1)),
        ("avgpool2 8ch 32x32", lambda m: m.avgpool2_forward(x_small)),
        ("upsample fwd 32ch 16x16", lambda m: m.upsample_forward(x_up, 2)),
        ("upsample bwd 32ch 16x16", lambda m: m.upsample_backward(g_up, 2)),
        ("jacobi sweep n=64", jacobi),
    ]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if argv and argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        return 0
    repeats = int(argv[0]) if argv else 20
    mods = backends()
    names = list(mods)
    print(f"active backend: {BACKEND}; timing {', '.join(names)} "
          f"(best of {repeats})")
    header = f"{'kernel':<26}" + "".join(f"{n + ' ms':>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, call in _cases():
        times = {n: _time(lambda m=mods[n]: call(m), repeats) * 1e3
                 for n in names}
        row = f"{label:<26}" + "".join(f"{times[n]:>14.3f}" for n in names)
        if len(names) == 2:
            row += f"{times['numpy'] / times['compiled']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
