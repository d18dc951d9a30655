"""Time the numba kernels against their numpy fallbacks at the network's shapes.

    python3 benchmarks/bench_kernels.py [--repeats 20] [--batch 32]

Both implementations are imported directly, so the DROWSYQ_NUMBA flag does
not matter here. Results are also checked for agreement.
"""

import argparse
import time

import numpy as np

from drowsyq.numerics import kernels


def bench(fn, args, repeats):
    fn(*args)  # warm-up (includes jit compilation)
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n = args.batch * 3  # three sub-second planes per state

    cases = []
    # fused front end: (1, 64) temporal conv on 32 spatially mixed maps, same padding
    x = rng.standard_normal((n, 32, 128))
    w = rng.standard_normal((32, 64))
    g = rng.standard_normal((n, 32, 128))
    cases.append(("temporal conv fwd (1,64)", kernels.tconv_forward_numpy, kernels.tconv_forward_numba, (x, w, 31, 32)))
    cases.append(("temporal conv bwd (1,64)", kernels.tconv_backward_numpy, kernels.tconv_backward_numba, (g, x, w, 31, 32)))
    # separable depthwise stage: (1, 16) on the pooled maps
    x = rng.standard_normal((n, 32, 64))
    w = rng.standard_normal((32, 16))
    g = rng.standard_normal((n, 32, 64))
    cases.append(("depthwise fwd (1,16)", kernels.tconv_forward_numpy, kernels.tconv_forward_numba, (x, w, 7, 8)))
    cases.append(("depthwise bwd (1,16)", kernels.tconv_backward_numpy, kernels.tconv_backward_numba, (g, x, w, 7, 8)))

    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max diff")
    for name, f_np, f_nb, a in cases:
        t_np, t_nb = bench(f_np, a, args.repeats), bench(f_nb, a, args.repeats)
        r_np, r_nb = f_np(*a), f_nb(*a)
        r_np, r_nb = (r_np,) if isinstance(r_np, np.ndarray) else r_np, (r_nb,) if isinstance(r_nb, np.ndarray) else r_nb
        diff = max(float(np.max(np.abs(p - q))) for p, q in zip(r_np, r_nb))
        print(f"{name:28s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}  {diff:.1e}")

    # optimizer: one hidden layer's weights, updated in place
    shape = (512, 1024)
    p0, grad = rng.standard_normal(shape), rng.standard_normal(shape)
    consts = (2.5e-4, 0.95, 1e-6, 1e-4)  # lr, rho, eps, weight decay
    times = {}
    for label, fn in (("numpy", kernels.rmsprop_update_numpy), ("numba", kernels.rmsprop_update_numba)):
        p, sq = p0.copy(), np.zeros(shape)
        times[label] = bench(fn, (p, grad, sq, *consts), args.repeats)
    print(f"{'rmsprop 512x1024':28s} {times['numpy'] * 1e3:10.3f} {times['numba'] * 1e3:10.3f} "
          f"{times['numpy'] / times['numba']:8.2f}")
    print(f"active backend: {kernels.backend()}")


if __name__ == "__main__":
    main()
