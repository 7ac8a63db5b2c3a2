"""SplitMix64-driven random kernels.

Every random quantity in the package (pattern bits, permutations, photon
noise) is drawn from SplitMix64 so that a 64-bit seed reproduces it exactly.
A generator seeded with ``s`` emits ``mix(s + k * GAMMA)`` as its k-th output
(k = 1, 2, ...), which lets the numpy fallbacks compute whole streams at once.

Each kernel has a numba implementation and a fallback; ``_accel.USE_NUMBA``
picks one at import time. The fallbacks are also exported (``*_fallback``) so
the two paths can be compared directly.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0

_U_GAMMA = np.uint64(GAMMA)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)


def mix64(z):
    """SplitMix64 output function on a python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def subseed(seed, index):
    """First output of a generator seeded with ``seed XOR index``."""
    return mix64(((seed ^ index) + GAMMA) & MASK64)


class SplitMix64:
    """Scalar reference generator (python ints)."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def next_uniform(self):
        # open interval (0, 1)
        return ((self.next_u64() >> 11) + 0.5) * _INV_2_53


def _mix_array(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


def stream(seed, n, start=1):
    """Outputs ``start .. start+n-1`` of the generator seeded with ``seed`` as uint64."""
    k = np.arange(start, start + n, dtype=np.uint64)
    return _mix_array(np.uint64(int(seed) & MASK64) + k * _U_GAMMA)


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _nb_mix(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


@njit(cache=True)
def _nb_uniform(z):
    return (np.float64(z >> _U11) + 0.5) * _INV_2_53


@njit(cache=True)
def _nb_matrix_bits(seed, m, n):
    out = np.empty((m, n), dtype=np.uint8)
    nwords = (n + 63) // 64
    for j in range(m):
        state = _nb_mix((seed ^ np.uint64(j)) + _U_GAMMA)
        col = 0
        for _ in range(nwords):
            state = state + _U_GAMMA
            word = _nb_mix(state)
            for b in range(64):
                if col >= n:
                    break
                out[j, col] = np.uint8((word >> np.uint64(b)) & np.uint64(1))
                col += 1
    return out


@njit(cache=True)
def _nb_fisher_yates(seed, m):
    perm = np.arange(m)
    state = seed
    for i in range(m - 1, 0, -1):
        bound = np.uint64(i + 1)
        threshold = (np.uint64(0) - bound) % bound
        while True:
            state = state + _U_GAMMA
            r = _nb_mix(state)
            if r >= threshold:
                break
        j = np.int64(r % bound)
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    return perm


@njit(cache=True)
def _nb_poisson(means, seed):
    out = np.empty(means.shape[0], dtype=np.float64)
    state = seed
    for idx in range(means.shape[0]):
        lam = means[idx]
        if lam <= 0.0:
            out[idx] = 0.0
            continue
        if lam < 30.0:
            state = state + _U_GAMMA
            u = _nb_uniform(_nb_mix(state))
            k = 0
            p = math.exp(-lam)
            s = p
            while u > s:
                k += 1
                p *= lam / k
                s += p
                if p == 0.0:
                    break
            out[idx] = k
            continue
        slam = math.sqrt(lam)
        loglam = math.log(lam)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        while True:
            state = state + _U_GAMMA
            u = _nb_uniform(_nb_mix(state)) - 0.5
            state = state + _U_GAMMA
            v = _nb_uniform(_nb_mix(state))
            us = 0.5 - abs(u)
            k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
            if us >= 0.07 and v <= vr:
                break
            if k < 0.0 or (us < 0.013 and v > us):
                continue
            if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                    <= -lam + k * loglam - math.lgamma(k + 1.0)):
                break
        out[idx] = k
    return out


@njit(cache=True)
def _nb_gaussian(n, seed):
    out = np.empty(n, dtype=np.float64)
    state = seed
    for idx in range(n):
        state = state + _U_GAMMA
        u1 = _nb_uniform(_nb_mix(state))
        state = state + _U_GAMMA
        u2 = _nb_uniform(_nb_mix(state))
        out[idx] = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return out


# --------------------------------------------------------------------------
# fallbacks


def matrix_bits_fallback(seed, m, n):
    nwords = (n + 63) // 64
    rows = np.arange(m, dtype=np.uint64)
    sub = _mix_array((np.uint64(seed) ^ rows) + _U_GAMMA)
    k = np.arange(1, nwords + 1, dtype=np.uint64)
    words = _mix_array(sub[:, None] + k[None, :] * _U_GAMMA)
    # little-endian byte view + little bit order puts bit b of word w at column 64w+b
    bits = np.unpackbits(words.astype("<u8").view(np.uint8).reshape(m, -1), axis=1, bitorder="little")
    return np.ascontiguousarray(bits[:, :n])


def fisher_yates_fallback(seed, m):
    if m <= 1:
        return np.arange(m)
    bounds = np.arange(m, 1, -1, dtype=np.uint64)
    words = stream(seed, m - 1)
    if np.any(words < (np.uint64(0) - bounds) % bounds):
        return _fisher_yates_scalar(seed, m)
    js = (words % bounds).tolist()
    perm = list(range(m))
    for i, j in zip(range(m - 1, 0, -1), js):
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def _fisher_yates_scalar(seed, m):
    gen = SplitMix64(seed)
    perm = list(range(m))
    for i in range(m - 1, 0, -1):
        bound = i + 1
        threshold = (-bound) % bound
        r = gen.next_u64()
        while r < threshold:
            r = gen.next_u64()
        j = r % bound
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def poisson_fallback(means, seed):
    gen = SplitMix64(seed)
    out = np.empty(len(means), dtype=np.float64)
    for idx, lam in enumerate(np.asarray(means, dtype=np.float64).tolist()):
        if lam <= 0.0:
            out[idx] = 0.0
        elif lam < 30.0:
            out[idx] = _poisson_inversion(lam, gen.next_uniform())
        else:
            out[idx] = _poisson_ptrs(lam, gen)
    return out


def _poisson_inversion(lam, u):
    k = 0
    p = math.exp(-lam)
    s = p
    while u > s:
        k += 1
        p *= lam / k
        s += p
        if p == 0.0:
            break
    return k


def _poisson_ptrs(lam, gen):
    # Hormann's transformed rejection with squeeze
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = gen.next_uniform() - 0.5
        v = gen.next_uniform()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return k


def gaussian_fallback(n, seed):
    w = stream(seed, 2 * n)
    u = ((w >> _U11).astype(np.float64) + 0.5) * _INV_2_53
    u1, u2 = u[0::2], u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# --------------------------------------------------------------------------
# dispatch


def matrix_bits(seed, m, n):
    """M x N uint8 matrix of fair-coin bits; row j uses ``subseed(seed, j)``."""
    if _accel.USE_NUMBA:
        return _nb_matrix_bits(np.uint64(int(seed) & MASK64), int(m), int(n))
    return matrix_bits_fallback(int(seed) & MASK64, int(m), int(n))


def fisher_yates(seed, m):
    """Uniform permutation of ``range(m)`` (Durstenfeld order, unbiased by rejection)."""
    if _accel.USE_NUMBA:
        return _nb_fisher_yates(np.uint64(int(seed) & MASK64), int(m))
    return fisher_yates_fallback(int(seed) & MASK64, int(m))


def poisson(means, seed):
    means = np.ascontiguousarray(means, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _nb_poisson(means, np.uint64(int(seed) & MASK64))
    return poisson_fallback(means, int(seed) & MASK64)


def gaussian(n, seed):
    """Standard normal samples via Box-Muller (two uniforms per sample)."""
    if _accel.USE_NUMBA:
        return _nb_gaussian(int(n), np.uint64(int(seed) & MASK64))
    return gaussian_fallback(int(n), int(seed) & MASK64)
