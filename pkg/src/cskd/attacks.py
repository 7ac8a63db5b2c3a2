"""Tampering an eavesdropper can apply to the payload in transit."""

from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import ConfigurationError, ContractError
from .metrics import psnr
from .watermark import WatermarkedPayload

KINDS = ("shuffle", "bit_flip", "zero_substitute", "delete_shift")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    value_index: int = 0
    bit_index: int = 0  # 0 = least significant
    count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown attack {self.kind!r}; expected one of {KINDS}")
        if not 0 <= self.bit_index <= 63:
            raise ContractError(f"bit index {self.bit_index} outside 0..63")
        if self.count < 0 or self.value_index < 0:
            raise ContractError("attack indices and counts must be nonnegative")

    @classmethod
    def parse(cls, text, seed=0):
        """``shuffle`` | ``bit_flip:<index>:<bit>`` | ``zero_substitute:<count>`` | ``delete_shift:<index>``."""
        kind, *args = text.strip().split(":")
        try:
            nums = [int(a, 0) for a in args]
        except ValueError:
            raise ConfigurationError(f"bad attack arguments in {text!r}") from None
        arity = {"shuffle": 0, "bit_flip": 2, "zero_substitute": 1, "delete_shift": 1}
        if kind not in arity or len(nums) != arity[kind]:
            raise ConfigurationError(f"bad attack spec {text!r}")
        if kind == "bit_flip":
            return cls(kind, value_index=nums[0], bit_index=nums[1], seed=seed)
        if kind == "zero_substitute":
            return cls(kind, count=nums[0], seed=seed)
        if kind == "delete_shift":
            return cls(kind, value_index=nums[0], seed=seed)
        return cls(kind, seed=seed)

    def label(self):
        if self.kind == "bit_flip":
            return f"bit_flip:{self.value_index}:{self.bit_index}"
        if self.kind == "zero_substitute":
            return f"zero_substitute:{self.count}"
        if self.kind == "delete_shift":
            return f"delete_shift:{self.value_index}"
        return "shuffle"


def apply_attack(payload, spec):
    """Return a tampered copy; the word count never changes."""
    words = np.array(payload.words, dtype=np.uint64)
    m = words.size
    if spec.kind == "shuffle":
        words = words[prng.fisher_yates(spec.seed, m)]
    elif spec.kind == "bit_flip":
        _check_index(spec.value_index, m)
        words[spec.value_index] ^= np.uint64(1) << np.uint64(spec.bit_index)
    elif spec.kind == "zero_substitute":
        if spec.count > m:
            raise ContractError(f"cannot zero {spec.count} of {m} words")
        words[prng.fisher_yates(spec.seed, m)[:spec.count]] = 0
    else:
        _check_index(spec.value_index, m)
        # keep the frame length: the receiver still consumes M words
        words = np.append(np.delete(words, spec.value_index), np.uint64(0))
    return WatermarkedPayload(words)


def _check_index(index, m):
    if not 0 <= index < m:
        raise ContractError(f"value index {index} outside payload of {m} words")


def detection_rate(payload, receive, reference, sent_bits, value_index=0, threshold_db=3.0):
    """Fraction of the 64 single-bit flips of one word that the receiver notices.

    ``receive(payload) -> (bits, image)`` runs extraction and reconstruction.
    A flip counts as detected when the extracted key changes or the image PSNR
    against ``reference`` falls more than ``threshold_db`` below the untampered
    one. Returns ``(rate, per_bit)`` where ``per_bit`` lists ``(bit, psnr, detected)``.
    """
    sent = tuple(int(b) for b in sent_bits)
    bits, clean_image = receive(payload)
    baseline = psnr(reference, clean_image)
    per_bit = []
    for bit in range(64):
        tampered = apply_attack(payload, AttackSpec("bit_flip", value_index=value_index, bit_index=bit))
        got, image = receive(tampered)
        quality = psnr(reference, image)
        detected = tuple(got) != sent or quality < baseline - threshold_db
        per_bit.append((bit, quality, detected))
    return sum(d for _, _, d in per_bit) / 64.0, per_bit
