"""Time the compiled prefix-tree kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each row reports the best
of ``--repeat`` runs and checks that both backends produce the same words.
"""

import argparse
import time

import numpy as np

from torus_entropy._kernels import compiled, python

GENERIC_ROOF = [[0.3014142135623731, 0.2982679491924311],
                [0.4977639320225002, 0.4973542486889354]]
THREE = [[0.3, 0.4, 0.5], [0.35, 0.45, 0.3], [0.5, 0.3, 0.4]]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def word_set(words, lengths):
    return {tuple(int(s) for s in row[:L]) for row, L in zip(words, lengths)}


def cases():
    """Yield ``(name, python_call, compiled_call, python_words, compiled_words)``."""
    for name, roof, t in [("generic t=3", GENERIC_ROOF, 3.0), ("generic t=5", GENERIC_ROOF, 5.0),
                          ("K=3 t=2.5", THREE, 2.5)]:
        arr = np.array(roof)
        yield (f"family {name}",
               lambda roof=roof, t=t: python.family_enumerate(roof, t, 10 ** 7),
               lambda arr=arr, t=t: compiled.family_enumerate(arr, t, 10 ** 7),
               set, lambda out: word_set(*out))
    arr = np.array(GENERIC_ROOF)
    for n in (2, 3, 4):
        yield (f"refine generic n={n}",
               lambda n=n: python.refine_enumerate(GENERIC_ROOF, n, 10 ** 7, 1.0),
               lambda n=n: compiled.refine_enumerate(arr, n, 10 ** 7),
               lambda out: set(out[0]), lambda out: word_set(*out[:2]))
    alpha = (1, 0, 0, 1, 1, 0)
    a8 = np.array(alpha, dtype=np.int8)
    for m in (2, 4):
        yield (f"preimage m={m}",
               lambda m=m: python.preimage_terms(GENERIC_ROOF, alpha, 0.1, 0.4, m, 30),
               lambda m=m: compiled.preimage_terms(arr, a8, 0.1, 0.4, m, 30),
               lambda out: {w for w, _ in out}, lambda out: word_set(*out[:2]))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . --no-build-isolation")
    print(f"{'case':<24}{'words':>9}{'python s':>11}{'compiled s':>12}{'speedup':>9}")
    for name, py_fn, c_fn, py_words, c_words in cases():
        tp, a = best_of(py_fn, args.repeat)
        tc, b = best_of(c_fn, args.repeat)
        a, b = py_words(a), c_words(b)
        if a != b:
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<24}{len(a):>9}{tp:>11.4f}{tc:>12.4f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
