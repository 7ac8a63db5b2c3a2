"""Test objects and the simulated single-pixel photon-counting camera.

Images are 2-D float arrays of shape ``(height, width)`` in display units
[0, 255], flattened row-major when projected onto the patterns.
"""

import re
from dataclasses import dataclass

import numpy as np

from . import prng
from .errors import ConfigurationError, ContractError

# Toft's modified Shepp-Logan ellipses: (intensity, semi-axis a, semi-axis b, x0, y0, angle deg)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

_LETTER_S = np.array(
    [
        [0, 1, 1, 1, 1, 1, 1, 0],
        [1, 1, 0, 0, 0, 0, 1, 1],
        [1, 1, 0, 0, 0, 0, 0, 0],
        [0, 1, 1, 1, 1, 1, 1, 0],
        [0, 0, 0, 0, 0, 0, 1, 1],
        [0, 0, 0, 0, 0, 0, 1, 1],
        [1, 1, 0, 0, 0, 0, 1, 1],
        [0, 1, 1, 1, 1, 1, 1, 0],
    ],
    dtype=np.float64,
)


def generate_phantom(width, height, kind="phantom", value=None):
    """Deterministic piecewise-constant test object.

    ``kind`` is ``"phantom"`` (modified Shepp-Logan, rounded to integers),
    ``"letter-S"`` (binary 0/255 glyph upscaled from an 8x8 bitmap) or
    ``"constant"``; the constant level may be given as ``value`` or inline as
    ``"constant:7"``.
    """
    if width < 1 or height < 1:
        raise ConfigurationError(f"image size must be positive, got {width}x{height}")
    m = re.fullmatch(r"constant[:(]\s*([-+0-9.eE]+)\s*\)?", kind)
    if m:
        kind, value = "constant", float(m.group(1))

    if kind == "phantom":
        xs = (2.0 * np.arange(width) + 1.0) / width - 1.0
        ys = 1.0 - (2.0 * np.arange(height) + 1.0) / height
        X, Y = np.meshgrid(xs, ys)
        img = np.zeros((height, width))
        for amp, a, b, x0, y0, deg in _SHEPP_LOGAN:
            th = np.deg2rad(deg)
            dx, dy = X - x0, Y - y0
            u = dx * np.cos(th) + dy * np.sin(th)
            v = -dx * np.sin(th) + dy * np.cos(th)
            img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += amp
        return np.clip(np.round(img * 255.0), 0.0, 255.0)
    if kind == "letter-S":
        rows = np.arange(height) * 8 // height
        cols = np.arange(width) * 8 // width
        return 255.0 * _LETTER_S[np.ix_(rows, cols)]
    if kind == "constant":
        if value is None or not 0.0 <= value <= 255.0:
            raise ConfigurationError(f"constant level must lie in [0, 255], got {value}")
        return np.full((height, width), float(value))
    raise ConfigurationError(f"unknown phantom kind {kind!r}")


class MeasurementMatrix:
    """Binary DMD patterns, one per row, regenerated from ``(seed, M, N)``."""

    def __init__(self, seed, rows, cols):
        if rows < 1 or cols < 1:
            raise ConfigurationError(f"matrix dimensions must be positive, got {rows}x{cols}")
        self.seed = int(seed) & prng.MASK64
        self.rows = int(rows)
        self.cols = int(cols)
        self.bits = prng.matrix_bits(self.seed, self.rows, self.cols)
        self._dense = None

    @classmethod
    def from_bits(cls, bits, seed=0):
        """Wrap an explicit 0/1 array (used for hand-built systems in tests)."""
        bits = np.asarray(bits)
        if bits.ndim != 2 or not np.isin(bits, (0, 1)).all():
            raise ContractError("pattern matrix must be a 2-D array of 0/1 entries")
        obj = cls.__new__(cls)
        obj.seed = seed
        obj.rows, obj.cols = bits.shape
        obj.bits = bits.astype(np.uint8)
        obj._dense = None
        return obj

    @property
    def shape(self):
        return (self.rows, self.cols)

    def dense(self):
        """float64 copy of the patterns, cached."""
        if self._dense is None:
            self._dense = self.bits.astype(np.float64)
        return self._dense

    def __matmul__(self, x):
        return self.dense() @ x


def generate_measurement_matrix(seed, rows, cols):
    return MeasurementMatrix(seed, rows, cols)


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"
    scale: float = 1.0  # photons per unit intensity (poisson)
    sigma: float = 0.0  # intensity units (gaussian)

    def __post_init__(self):
        if self.kind not in ("none", "poisson", "gaussian"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "poisson" and not self.scale > 0:
            raise ConfigurationError("poisson scale must be > 0")
        if self.kind == "gaussian" and not self.sigma >= 0:
            raise ConfigurationError("gaussian sigma must be >= 0")
        # plain floats keep the key-file text free of numpy reprs
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def parse(cls, text):
        """``none`` | ``poisson:<photons per unit>`` | ``gaussian:<sigma>``."""
        kind, _, arg = text.strip().partition(":")
        try:
            if kind == "poisson":
                return cls("poisson", scale=float(arg))
            if kind == "gaussian":
                return cls("gaussian", sigma=float(arg))
        except ValueError:
            raise ConfigurationError(f"bad noise argument in {text!r}") from None
        if kind == "none" and not arg:
            return cls()
        raise ConfigurationError(f"bad noise model {text!r}")

    def __str__(self):
        if self.kind == "poisson":
            return f"poisson:{self.scale!r}"
        if self.kind == "gaussian":
            return f"gaussian:{self.sigma!r}"
        return "none"

    @property
    def gain(self):
        """Counts per unit of ``<a_j, x>`` in the simulated detector output."""
        return self.scale if self.kind == "poisson" else 1.0


def sense(image, matrix, noise=NoiseModel(), noise_seed=0):
    """Simulate ``y = Ax + e``; poisson output is in photon counts (``gain`` x intensity)."""
    x = np.asarray(image, dtype=np.float64).ravel()
    if x.size != matrix.cols:
        raise ContractError(f"image has {x.size} pixels but patterns have {matrix.cols} columns")
    clean = matrix @ x
    if noise.kind == "none":
        return clean
    if noise.kind == "poisson":
        return prng.poisson(noise.scale * clean, noise_seed)
    # clamp: photon counts cannot go negative
    return np.maximum(clean + noise.sigma * prng.gaussian(clean.size, noise_seed), 0.0)


def poisson_scale_for_mean(image, matrix, mean_count):
    """Photons per unit intensity that makes the average noiseless count ``mean_count``."""
    clean = matrix @ np.asarray(image, dtype=np.float64).ravel()
    level = clean.mean()
    if level <= 0:
        raise ConfigurationError("image is dark; cannot calibrate photon scale")
    return mean_count / level


def read_pgm(path):
    """Binary P5 graymap with maxval <= 255 -> float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ConfigurationError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ConfigurationError(f"{path}: 16-bit PGM not supported")
    body = data[pos + 1:pos + 1 + width * height]
    if len(body) != width * height:
        raise ConfigurationError(f"{path}: truncated PGM body")
    img = np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(np.float64)
    return img * (255.0 / maxval) if maxval != 255 else img


def write_pgm(path, image):
    img = np.clip(np.round(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(img.tobytes())
