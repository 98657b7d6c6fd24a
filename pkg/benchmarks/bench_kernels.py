"""Time the numba and numpy kernel backends on grid-sized inputs.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 50]
"""
import argparse
import timeit

import numpy as np

from chdbc import _kernels


def cases(n):
    rng = np.random.default_rng(0)
    f = rng.standard_normal((n, n + 1))
    g = rng.standard_normal((n, n + 1))
    v = rng.standard_normal((2, n))
    r = rng.uniform(-5, 5, n * (n + 1))
    h = 1.0 / n
    return {
        "neumann_laplacian": lambda k: k.neumann_laplacian(f, h, h),
        "periodic_second_difference": lambda k: k.periodic_second_difference(v, h),
        "dirichlet_form": lambda k: k.dirichlet_form(f, g, h, h),
        "poly_resolvent": lambda k: k.poly_resolvent(r, 0.1, 3),
        "log_resolvent": lambda k: k.log_resolvent(r, 0.1),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--repeat", type=int, default=50)
    args = p.parse_args(argv)
    backends = {"numpy": _kernels.numpy_impl}
    if _kernels.numba_impl is not None:
        backends["numba"] = _kernels.numba_impl
    print(f"grid {args.n}x{args.n + 1}, best of 5 x {args.repeat} calls (ms per call)")
    print(f"{'kernel':28s}" + "".join(f"{b:>10s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases(args.n).items():
        times = {}
        for b, impl in backends.items():
            fn(impl)  # compile / warm up
            t = min(timeit.repeat(lambda: fn(impl), number=args.repeat, repeat=5))
            times[b] = 1e3 * t / args.repeat
        speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{name:28s}" + "".join(f"{times[b]:10.4f}" for b in backends) + f"{speed:10.2f}")


if __name__ == "__main__":
    main()
