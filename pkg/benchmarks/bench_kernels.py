"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 64]

Prints the best-of-``repeat`` wall time per operation and the speedup of the
compiled backend. Without the compiled extension only the numpy row is shown.
"""

import argparse
import timeit

import numpy as np

from csra import _backend
from csra.multihead import HeadConfig
from csra.synthetic import SyntheticSpec, split
from csra.training import TrainConfig, train


def cases(args):
    rng = np.random.default_rng(0)
    C, d, n = args.classes, args.dim, args.cells
    W = rng.standard_normal((C, d))
    X = rng.standard_normal((args.batch, d, n))
    coef = rng.standard_normal((args.batch, C))
    data, _ = split(256, 1, SyntheticSpec(), seed=0)

    def forward(T):
        return lambda: _backend.kernels.head_forward(W, X, T, 0.4, True)

    def backward(T):
        cache = {}

        def run():
            k = _backend.kernels
            if k.NAME not in cache:
                cache[k.NAME] = k.head_forward(W, X, T, 0.4, True)
            _, S, A, R, G = cache[k.NAME]
            k.head_backward(X, G, S, A, R, T, 0.4, True, coef, np.zeros_like(W))
        return run

    def epoch():
        train(data, HeadConfig(H=4, lam=0.4), TrainConfig(epochs=1, seed=0))

    return [
        (f"head_forward T=1 (B={args.batch}, C={C}, d={d}, n={n})", forward(1.0)),
        ("head_forward T=inf", forward(float("inf"))),
        ("head_backward T=1", backward(1.0)),
        ("head_backward T=inf", backward(float("inf"))),
        ("train epoch (256 samples, H=4)", epoch),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--cells", type=int, default=49)
    args = p.parse_args(argv)

    backends = _backend.available()
    previous = _backend.current()
    print(f"{'operation':44}" + "".join(f"{b:>12}" for b in backends) + "   speedup")
    try:
        for name, fn in cases(args):
            times = {}
            for b in backends:
                _backend.use(b)
                fn()  # warm up
                times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            row = f"{name:44}" + "".join(f"{1e3 * times[b]:10.2f}ms" for b in backends)
            if "compiled" in times:
                row += f"   {times['python'] / times['compiled']:6.1f}x"
            print(row)
    finally:
        _backend.use(previous)


if __name__ == "__main__":
    main()
