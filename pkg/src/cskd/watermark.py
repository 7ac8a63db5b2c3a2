"""Key embedding in, and extraction from, permuted compressive measurements.

Measurements are first mapped into the binade [0.5, 1.0). Inside that binade
complementing all 64 bits of a binary64 word is the exact affine map
``v -> 8v - 12 + 2**-50``, so a complemented group lands in [-8, -4) with
exactly 64x the variance of the original. The receiver complements everything
it gets ("global XOR") and, group by group, keeps whichever version has the
smaller variance; a complemented group shows up as the smaller one after the
global complement, which is the embedded 1 bit.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import ConfigurationError, ContractError

log = logging.getLogger(__name__)

ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Watermark:
    bits: tuple
    repeats: int = 1

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ConfigurationError("watermark must have at least one bit")
        if any(b not in (0, 1) for b in bits):
            raise ConfigurationError("watermark bits must be 0 or 1")
        if self.repeats < 1:
            raise ConfigurationError("watermark repeats must be >= 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    @classmethod
    def from_hex(cls, text, repeats=1):
        """Parse ``"<hex>:<bit length>"``; bits are read MSB first."""
        digits, sep, length = text.partition(":")
        try:
            value = int(digits, 16)
            nbits = int(length) if sep else 4 * len(digits.removeprefix("0x"))
        except ValueError:
            raise ConfigurationError(f"bad watermark {text!r}; expected <hex>:<bits>") from None
        if nbits < 1 or value >> nbits:
            raise ConfigurationError(f"watermark {text!r} does not fit in {nbits} bits")
        return cls(tuple((value >> (nbits - 1 - i)) & 1 for i in range(nbits)), repeats)

    def to_hex(self):
        return bits_to_hex(self.bits)

    def expanded(self):
        """Per-group bits: the whole watermark repeated back to back."""
        return np.tile(np.array(self.bits, dtype=np.uint8), self.repeats)


def bits_to_hex(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return f"{value:0{(len(bits) + 3) // 4}x}:{len(bits)}"


@functools.lru_cache(maxsize=64)
def _permutation(seed, length):
    perm = prng.fisher_yates(seed, length)
    perm.setflags(write=False)
    return perm


@dataclass(frozen=True)
class PermutationKey:
    """A random allocation key: a seed expanding to a fixed shuffle of ``length`` slots."""

    seed: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ConfigurationError("permutation length must be >= 1")

    def permutation(self):
        return _permutation(int(self.seed) & prng.MASK64, int(self.length))

    def apply(self, values):
        """``out[k] = values[perm[k]]``."""
        self._check(values)
        return values[self.permutation()]

    def invert(self, values):
        self._check(values)
        out = np.empty_like(values)
        out[self.permutation()] = values
        return out

    def _check(self, values):
        if len(values) != self.length:
            raise ContractError(f"key expects {self.length} values, got {len(values)}")


def derive_permutation(key):
    return np.array(key.permutation())


@dataclass(frozen=True)
class NormalizationBounds:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ConfigurationError(f"normalization bounds need lo < hi, got {self.lo}, {self.hi}")

    def normalize(self, values):
        """Map into [0.5, 1.0); returns ``(normalized, clamp_count)``."""
        v = np.asarray(values, dtype=np.float64)
        clamped = int(np.count_nonzero((v < self.lo) | (v > self.hi)))
        t = (np.clip(v, self.lo, self.hi) - self.lo) / (self.hi - self.lo)
        return np.minimum(0.5 + 0.5 * t, BELOW_ONE), clamped

    def denormalize(self, normalized):
        return self.lo + (np.asarray(normalized) - 0.5) * 2.0 * (self.hi - self.lo)


def normalize(values, bounds):
    return bounds.normalize(values)


def encode(values):
    """Doubles -> their IEEE-754 bit patterns."""
    return np.ascontiguousarray(values, dtype=np.float64).view(np.uint64).copy()


def decode(words):
    return np.ascontiguousarray(words, dtype=np.uint64).view(np.float64).copy()


def complement_bits(pattern):
    """Invert all 64 bits (scalar int or uint64 array)."""
    if isinstance(pattern, (int, np.integer)) and not isinstance(pattern, np.ndarray):
        return ~int(pattern) & prng.MASK64
    return np.asarray(pattern, dtype=np.uint64) ^ ALL_ONES


@dataclass(frozen=True, eq=False)
class WatermarkedPayload:
    """The only thing that crosses the public channel: M 64-bit words."""

    words: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.words, dtype=np.uint64).copy()
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    def __len__(self):
        return len(self.words)

    def __eq__(self, other):
        return isinstance(other, WatermarkedPayload) and np.array_equal(self.words, other.words)

    def values(self):
        return decode(self.words)


def group_layout(m, length, repeats):
    """Number of groups and group size for ``m`` measurements."""
    groups = length * repeats
    if m % groups or m // groups < 2:
        raise ConfigurationError(
            f"M must equal len*R*r with r >= 2 (M={m}, len={length}, R={repeats})")
    return groups, m // groups


def group_variance(values):
    """Population variance of one group."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ContractError("a group needs at least two values")
    return float(np.var(v))


def group_variances(values, groups):
    """Population variance of each of ``groups`` consecutive equal blocks."""
    with np.errstate(all="ignore"):
        return np.var(np.asarray(values, dtype=np.float64).reshape(groups, -1), axis=1)


def embed(measurements, key1, key2, watermark, bounds):
    y = np.asarray(measurements, dtype=np.float64)
    m = y.size
    if key1.length != m or key2.length != m:
        raise ConfigurationError(f"keys cover {key1.length}/{key2.length} slots, carrier has {m}")
    groups, r = group_layout(m, len(watermark), watermark.repeats)
    normalized, clamped = bounds.normalize(y)
    if clamped:
        log.warning("embed: %d measurements clamped to the normalization bounds", clamped)
    words = key1.apply(encode(normalized)).reshape(groups, r)
    flip = watermark.expanded().astype(bool)
    words[flip] ^= ALL_ONES
    return WatermarkedPayload(key2.apply(words.ravel()))


@dataclass
class Extraction:
    watermark: tuple  # consensus bits
    raw_bits: np.ndarray  # one decision per group
    normalized: np.ndarray  # recovered carrier in [0.5, 1.0)
    measurements: np.ndarray  # recovered carrier in detector units
    zero_variance_groups: int
    out_of_range: int

    def watermark_hex(self):
        return bits_to_hex(self.watermark)


def consensus(raw_bits, length, repeats):
    """Average the copies of each position; 0 if the mean is below one half."""
    votes = np.asarray(raw_bits, dtype=np.float64).reshape(repeats, length).mean(axis=0)
    return (votes >= 0.5).astype(np.uint8)


def extract(payload, key1, key2, length, repeats, bounds):
    words = np.asarray(payload.words, dtype=np.uint64)
    m = words.size
    if key1.length != m or key2.length != m:
        raise ContractError(f"payload has {m} words, keys cover {key1.length}/{key2.length}")
    groups, r = group_layout(m, length, repeats)

    received = key2.invert(words)  # b'
    flipped = received ^ ALL_ONES  # b''
    var_received = group_variances(decode(received), groups)
    var_flipped = group_variances(decode(flipped), groups)
    # NaN variances compare False and decode as 0, like ties
    raw = (var_flipped < var_received).astype(np.uint8)
    zero_var = int(np.count_nonzero(var_received == 0.0))
    if zero_var:
        log.warning("extract: %d groups have zero variance; their bits read as 0", zero_var)

    bits = consensus(raw, length, repeats)
    unflip = np.tile(bits, repeats).astype(bool)
    restored = received.reshape(groups, r).copy()  # b'''
    restored[unflip] ^= ALL_ONES
    normalized = decode(key1.invert(restored.ravel()))

    with np.errstate(invalid="ignore"):
        inside = (normalized >= 0.5) & (normalized < 1.0)
    out_of_range = int(m - np.count_nonzero(inside))
    safe = np.clip(np.nan_to_num(normalized, nan=0.5, posinf=1.0, neginf=0.5), 0.5, BELOW_ONE)
    return Extraction(
        watermark=tuple(int(b) for b in bits),
        raw_bits=raw,
        normalized=normalized,
        measurements=bounds.denormalize(safe),
        zero_variance_groups=zero_var,
        out_of_range=out_of_range,
    )
