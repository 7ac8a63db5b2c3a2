"""Time the numba kernels against their numpy/python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both paths live in the same process: the compiled kernels are called directly,
bypassing the CSKD_DISABLE_NUMBA dispatch, and every pair is checked for
agreement before timing.
"""

import argparse
import timeit

import numpy as np

from cskd import prng
from cskd._accel import HAVE_NUMBA

SEED = 0x5EED


def cases():
    means = np.random.default_rng(0).uniform(0, 200, 2560)
    s = np.uint64(SEED)
    return [
        ("matrix_bits 2560x4096", lambda: prng._nb_matrix_bits(s, 2560, 4096),
         lambda: prng.matrix_bits_fallback(SEED, 2560, 4096), np.array_equal),
        ("fisher_yates M=2560", lambda: prng._nb_fisher_yates(s, 2560),
         lambda: prng.fisher_yates_fallback(SEED, 2560), np.array_equal),
        ("poisson 2560 means", lambda: prng._nb_poisson(means, s),
         lambda: prng.poisson_fallback(means, SEED), np.array_equal),
        ("gaussian 10^5", lambda: prng._nb_gaussian(100_000, s),
         lambda: prng.gaussian_fallback(100_000, SEED),
         lambda a, b: np.allclose(a, b, rtol=0, atol=1e-12)),
    ]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, fast, slow, same in cases():
        fast()  # compile outside the timing
        ok = same(fast(), slow())
        t_fast = best(fast, args.repeat)
        t_slow = best(slow, args.repeat)
        print(f"{name:<24}{1e3 * t_fast:>10.2f}{1e3 * t_slow:>10.2f}{t_slow / t_fast:>8.1f}x  {ok}")


if __name__ == "__main__":
    main()
