"""Image-quality and key-quality figures of merit."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

PEAK = 255.0


def mse(reference, candidate):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(candidate, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(reference, candidate):
    """10 log10(255^2 / MSE) in dB; ``inf`` for identical images."""
    err = mse(reference, candidate)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(PEAK ** 2 / err))


def ber(sent, received):
    """Fraction of differing bits."""
    w = np.asarray(sent, dtype=np.int64).ravel()
    q = np.asarray(received, dtype=np.int64).ravel()
    if w.shape != q.shape:
        raise ContractError(f"bit vectors differ in length: {w.size} vs {q.size}")
    if w.size == 0:
        raise ContractError("empty bit vectors")
    return float(np.count_nonzero(w != q)) / w.size


def to_display(image, gain=1.0):
    """Undo the detector gain and clip into the 8-bit display range."""
    return np.clip(np.asarray(image, dtype=np.float64) / gain, 0.0, PEAK)


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr: float
    ber: float

    def __post_init__(self):
        if not self.mse >= 0:
            raise ContractError("mse must be nonnegative")
        if not 0.0 <= self.ber <= 1.0:
            raise ContractError("ber must lie in [0, 1]")

    @classmethod
    def compare(cls, reference, candidate, sent_bits, received_bits):
        return cls(mse(reference, candidate), psnr(reference, candidate), ber(sent_bits, received_bits))

    def record(self, **extra):
        """One-line ``key=value`` record."""
        fields = {"mse": f"{self.mse:.6g}", "psnr_db": _fmt_db(self.psnr), "ber": f"{self.ber:.4f}",
                  "ber_pct": f"{100 * self.ber:.2f}%"}
        fields.update({k: str(v) for k, v in extra.items()})
        return " ".join(f"{k}={v}" for k, v in fields.items())


def _fmt_db(value):
    return "inf" if np.isinf(value) else f"{value:.2f}"
