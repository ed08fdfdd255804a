"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--pairs 200]

Each kernel runs on identical inputs under both backends; the script checks
that outputs agree before reporting timings.
"""

import argparse
import random
import sys
import time

import numpy as np

from hterqe import _kernels_py

try:
    from hterqe import _kernels
except ImportError:
    _kernels = None


def _pairs(n, length, vocab, seed):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        ref = [rng.randrange(vocab) for _ in range(length)]
        hyp = list(ref)
        for _ in range(length // 4):
            i = rng.randrange(len(hyp))
            hyp[i] = rng.randrange(vocab)
        a = rng.randrange(len(hyp) - 3)
        hyp = hyp[:a] + hyp[a + 3:] + hyp[a:a + 3]
        out.append((hyp, ref))
    return out


def _split_data(n, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n))
    return x, rng.random(n), np.ones(n)


def _time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--length", type=int, default=20)
    args = ap.parse_args(argv)

    if _kernels is None:
        print("compiled kernels not built; nothing to compare", file=sys.stderr)
        return 1

    pairs = _pairs(args.pairs, args.length, 30, seed=0)
    few = pairs[: max(1, args.pairs // 10)]
    x, y, w = _split_data(5000, seed=0)
    cases = [
        ("levenshtein", lambda k: [k.levenshtein(h, r) for h, r in pairs]),
        ("edit_ops", lambda k: [k.edit_ops(h, r) for h, r in pairs]),
        ("best_shift", lambda k: [k.best_shift(h, r, 10, 50) for h, r in few]),
        ("split_scan", lambda k: [k.split_scan(x, y, w, 1) for _ in range(50)]),
    ]
    print(f"{'kernel':<12} {'cython s':>10} {'python s':>10} {'speedup':>8}")
    for name, run in cases:
        tc, rc = _time(lambda: run(_kernels), args.repeat)
        tp, rp = _time(lambda: run(_kernels_py), args.repeat)
        if rc != rp:
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        print(f"{name:<12} {tc:>10.4f} {tp:>10.4f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
