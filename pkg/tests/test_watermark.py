import itertools
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cskd.attacks import AttackSpec, apply_attack
from cskd.errors import ConfigurationError, ContractError
from cskd.metrics import ber
from cskd.watermark import (BELOW_ONE, NormalizationBounds, PermutationKey, Watermark,
                            complement_bits, consensus, decode, derive_permutation, embed,
                            encode, extract, group_layout, group_variance, normalize)

TWO_M50 = 2.0 ** -50
BOUNDS = NormalizationBounds(0.0, 1000.0)


def exact_value(word):
    """Exact rational value of a binary64 bit pattern (normal numbers only)."""
    sign = -1 if word >> 63 else 1
    exp = (word >> 52) & 0x7FF
    frac = word & ((1 << 52) - 1)
    assert 0 < exp < 0x7FF
    return sign * (1 + Fraction(frac, 1 << 52)) * Fraction(2) ** (exp - 1023)


def word_of(v):
    return struct.unpack("<Q", struct.pack("<d", v))[0]


# -- normalization ---------------------------------------------------------

def test_normalize_endpoints_and_midpoint():
    out, clamped = normalize([0.0, 1000.0, 500.0], BOUNDS)
    assert out.tolist() == [0.5, BELOW_ONE, 0.75]
    assert clamped == 0
    assert BELOW_ONE == 1.0 - 2.0 ** -53


def test_normalize_clamps_and_counts():
    out, clamped = BOUNDS.normalize([-5.0, 2000.0, 10.0])
    assert clamped == 2
    assert out[0] == 0.5 and out[1] == BELOW_ONE


@given(st.lists(st.floats(0, 1000), min_size=2, max_size=30))
def test_normalize_order_preserving_and_in_binade(vals):
    out, _ = BOUNDS.normalize(vals)
    assert ((out >= 0.5) & (out < 1.0)).all()
    order = np.argsort(vals, kind="stable")
    assert (np.diff(out[order]) >= 0).all()


def test_bounds_validation():
    with pytest.raises(ConfigurationError):
        NormalizationBounds(1.0, 1.0)


# -- complement ------------------------------------------------------------

def test_complement_of_half():
    assert complement_bits(0x3FE0000000000000) == 0xC01FFFFFFFFFFFFF
    assert exact_value(0xC01FFFFFFFFFFFFF) == -8 + Fraction(1, 2 ** 50)
    assert decode(complement_bits(encode([0.5])))[0] == -8 + TWO_M50


def test_complement_of_three_quarters():
    assert decode(complement_bits(encode([0.75])))[0] == -6 + TWO_M50


def test_complement_involution_random_words():
    words = np.random.default_rng(0).integers(0, 2**63, 1_000_000, dtype=np.uint64) * np.uint64(2) + np.uint64(1)
    assert np.array_equal(complement_bits(complement_bits(words)), words)


@given(st.floats(0.5, 1.0, exclude_max=True))
def test_affine_complement_lemma_exact(v):
    # rational arithmetic on the raw bit pattern, independent of float ops
    flipped = complement_bits(word_of(v))
    assert exact_value(flipped) == 8 * Fraction(v) - 12 + Fraction(1, 2 ** 50)


def test_complemented_top_of_binade_is_minus_four():
    assert decode(complement_bits(encode([BELOW_ONE])))[0] == -4.0


# -- permutations ----------------------------------------------------------

def test_permutation_of_one_is_identity():
    assert derive_permutation(PermutationKey(77, 1)).tolist() == [0]


@pytest.mark.parametrize("seed", [0, 1, 12345, 2**64 - 1])
def test_permutation_inverse(seed):
    key = PermutationKey(seed, 333)
    x = np.arange(333) * 1.5
    assert np.array_equal(key.invert(key.apply(x)), x)
    assert np.array_equal(key.apply(key.invert(x)), x)
    assert np.array_equal(derive_permutation(key), derive_permutation(PermutationKey(seed, 333)))


def test_permutation_length_checked():
    with pytest.raises(ContractError):
        PermutationKey(1, 4).apply(np.zeros(5))


# -- grouping and variance -------------------------------------------------

def test_experiment_groupings():
    assert group_layout(1280, 8, 5) == (40, 32)
    assert group_layout(5120, 64, 5) == (320, 16)
    assert group_layout(2560, 16, 5) == (80, 32)


@pytest.mark.parametrize("m,length,repeats", [(1281, 8, 5), (40, 8, 5), (6, 2, 3)])
def test_grouping_rejects(m, length, repeats):
    with pytest.raises(ConfigurationError, match="M must equal"):
        group_layout(m, length, repeats)


def test_group_variance_examples():
    assert group_variance([0.5, 0.75]) == 0.015625
    assert group_variance([0.6] * 9) == 0.0
    assert group_variance([-8.0, -6.0]) == 1.0
    with pytest.raises(ContractError):
        group_variance([1.0])


def test_consensus_threshold():
    raw = np.array([1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 0])  # R=3, len=4
    # position means: 2/3, 2/3, 2/3, 0
    assert consensus(raw, 4, 3).tolist() == [1, 1, 1, 0]
    assert consensus([1, 0], 1, 2).tolist() == [1]  # mean 0.5 is not below 0.5


# -- embed / extract -------------------------------------------------------

HAND = np.array([0.5, 0.75, 0.625, 0.875])


def test_embed_hand_example(identity_key):
    k = identity_key(0, 4)
    payload = embed(BOUNDS.denormalize(HAND), k, k, Watermark((1, 0)), BOUNDS)
    assert payload.values().tolist() == [-8 + TWO_M50, -6 + TWO_M50, 0.625, 0.875]


def test_extract_hand_example(identity_key):
    k = identity_key(0, 4)
    payload = embed(BOUNDS.denormalize(HAND), k, k, Watermark((1, 0)), BOUNDS)
    got = extract(payload, k, k, 2, 1, BOUNDS)
    assert got.watermark == (1, 0)
    assert got.raw_bits.tolist() == [1, 0]
    assert np.array_equal(got.normalized, HAND)


def test_zero_watermark_only_permutes():
    rng = np.random.default_rng(3)
    y = rng.uniform(0, 1000, 24)
    k1, k2 = PermutationKey(5, 24), PermutationKey(6, 24)
    payload = embed(y, k1, k2, Watermark((0, 0, 0), 2), BOUNDS)
    norm, _ = BOUNDS.normalize(y)
    assert np.array_equal(payload.values(), k2.apply(k1.apply(norm)))


def test_payload_value_classes_and_sign_count():
    rng = np.random.default_rng(4)
    wm = Watermark((1, 1, 0, 1, 0, 0, 0, 1), 5)
    payload = embed(rng.uniform(0, 1000, 1280), PermutationKey(1, 1280), PermutationKey(2, 1280), wm, BOUNDS)
    v = payload.values()
    low = (v >= 0.5) & (v < 1.0)
    high = (v >= -8.0) & (v <= -4.0)
    assert (low | high).all()
    assert high.sum() == 32 * 4 * 5  # r * popcount * R


@pytest.mark.parametrize("m,length,repeats", [(4, 2, 1), (8, 2, 2), (12, 3, 2), (16, 4, 2), (16, 8, 1)])
def test_exhaustive_small_round_trip(m, length, repeats):
    rng = np.random.default_rng(m * 10 + length)
    y = rng.uniform(0, 1000, m)
    k1, k2 = PermutationKey(m, m), PermutationKey(m + 1, m)
    norm, _ = BOUNDS.normalize(y)
    for bits in itertools.product((0, 1), repeat=length):
        got = extract(embed(y, k1, k2, Watermark(bits, repeats), BOUNDS), k1, k2, length, repeats, BOUNDS)
        assert got.watermark == bits
        assert np.array_equal(got.normalized, norm)
        assert got.out_of_range == 0


@st.composite
def configs(draw):
    length = draw(st.integers(1, 12))
    repeats = draw(st.integers(1, 5))
    r = draw(st.integers(2, 12))
    bits = tuple(draw(st.lists(st.integers(0, 1), min_size=length, max_size=length)))
    return bits, repeats, r, draw(st.integers(0, 2**64 - 1)), draw(st.integers(0, 2**64 - 1))


@given(configs(), st.integers(0, 2**32))
def test_round_trip_property(cfg, data_seed):
    bits, repeats, r, s1, s2 = cfg
    m = len(bits) * repeats * r
    y = np.random.default_rng(data_seed).uniform(-10, 1010, m)  # some clamping too
    k1, k2 = PermutationKey(s1, m), PermutationKey(s2, m)
    norm, _ = BOUNDS.normalize(y)
    groups = k1.apply(norm).reshape(-1, r)
    if (groups.var(axis=1) == 0).any():
        return
    got = extract(embed(y, k1, k2, Watermark(bits, repeats), BOUNDS), k1, k2, len(bits), repeats, BOUNDS)
    assert got.watermark == bits
    assert np.array_equal(got.normalized, norm)
    np.testing.assert_allclose(got.measurements, np.clip(y, 0, 1000), rtol=0, atol=1e-9)


def test_zero_variance_group_reads_as_zero_and_is_counted(identity_key):
    k = identity_key(0, 6)
    y = np.array([100.0, 100.0, 100.0, 5.0, 6.0, 7.0])
    got = extract(embed(y, k, k, Watermark((1, 1)), BOUNDS), k, k, 2, 1, BOUNDS)
    assert got.watermark == (0, 1)
    assert got.zero_variance_groups == 1


def test_extract_dimension_mismatch():
    payload = embed(np.linspace(1, 9, 8), PermutationKey(1, 8), PermutationKey(2, 8), Watermark((1, 0)), BOUNDS)
    with pytest.raises(ContractError):
        extract(payload, PermutationKey(1, 10), PermutationKey(2, 10), 2, 1, BOUNDS)


def test_embed_key_length_mismatch():
    with pytest.raises(ConfigurationError):
        embed(np.ones(8), PermutationKey(1, 8), PermutationKey(2, 9), Watermark((1, 0)), BOUNDS)


def test_shuffled_payload_gives_coin_flip_key():
    rng = np.random.default_rng(8)
    wm = Watermark.from_hex("c5c5:16", 5)
    k1, k2 = PermutationKey(1, 2560), PermutationKey(2, 2560)
    payload = embed(rng.uniform(0, 1000, 2560), k1, k2, wm, BOUNDS)
    rates = [ber(wm.bits, extract(apply_attack(payload, AttackSpec("shuffle", seed=s)),
                                  k1, k2, 16, 5, BOUNDS).watermark) for s in range(20)]
    assert 0.35 <= np.mean(rates) <= 0.65


def test_watermark_hex():
    wm = Watermark.from_hex("c5:8")
    assert wm.bits == (1, 1, 0, 0, 0, 1, 0, 1)
    assert wm.to_hex() == "c5:8"
    assert Watermark.from_hex("5:3").bits == (1, 0, 1)
    assert Watermark.from_hex("0005:3").to_hex() == "5:3"
    assert len(Watermark.from_hex("abcd")) == 16
    for bad in ("1ff:8", "zz:4", "1:0"):
        with pytest.raises(ConfigurationError):
            Watermark.from_hex(bad)


def test_watermark_expansion_repeats_whole_key():
    assert Watermark((1, 0, 0), 2).expanded().tolist() == [1, 0, 0, 1, 0, 0]
