"""Time the compiled kernel core against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 50]
"""
import argparse
import timeit

import numpy as np

from smgp import _sm_py

try:
    from smgp import _sm_ext
except ImportError:
    _sm_ext = None

CASES = [(11, 10), (40, 1), (40, 10), (100, 3), (200, 10)]


def _inputs(n, Q, seed=0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, n, n))
    w = rng.uniform(0.1, 1, Q)
    mu = rng.uniform(0, 0.5, Q)
    v = rng.uniform(0.01, 0.3, Q)
    W = rng.standard_normal((n, n))
    return x, W + W.T, w, mu, v


def _time(fn, repeat):
    t = timeit.Timer(fn)
    loops, _ = t.autorange()
    return min(t.repeat(repeat=repeat, number=loops)) / loops


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("numpy", _sm_py)] + ([("cython", _sm_ext)] if _sm_ext is not None else [])
    if _sm_ext is None:
        print("compiled extension not built; timing numpy only")
    print(f"{'op':<18}{'N':>5}{'Q':>4}" + "".join(f"{name:>12}" for name, _ in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for n, Q in CASES:
        x, W, w, mu, v = _inputs(n, Q)
        ops = {
            "sm_cov_sym": lambda m: m.sm_cov_sym(x, w, mu, v),
            "sm_grad_contract": lambda m: m.sm_grad_contract(x, W, w, mu, v),
        }
        for op, call in ops.items():
            times = [_time(lambda m=m: call(m), args.repeat) for _, m in backends]
            line = f"{op:<18}{n:>5}{Q:>4}" + "".join(f"{t * 1e6:>10.1f}us" for t in times)
            if len(times) == 2:
                line += f"{times[0] / times[1]:>11.1f}x"
            print(line)


if __name__ == "__main__":
    main()
