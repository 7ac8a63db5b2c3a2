"""The shared secret bundle and its text file format.

One ``name: value`` pair per line, ``#`` starts a comment. Seeds are written
in hex. Example::

    # cskd key bundle
    version: 1
    matrix_seed: 0x2b9f0c1d9e4a5f60
    perm1_seed: 0x...
    perm2_seed: 0x...
    measurements: 1280
    width: 64
    height: 64
    watermark_len: 8
    repeats: 5
    norm_lo: 0.0
    norm_hi: 160000.0
    noise: poisson:0.153
"""

from dataclasses import dataclass, fields

from . import prng
from .errors import ConfigurationError
from .sensing import NoiseModel
from .watermark import NormalizationBounds, PermutationKey, group_layout

FORMAT_VERSION = 1


@dataclass(frozen=True)
class KeyBundle:
    matrix_seed: int
    perm1_seed: int
    perm2_seed: int
    measurements: int
    width: int
    height: int
    watermark_len: int
    repeats: int
    norm_lo: float
    norm_hi: float
    noise: NoiseModel = NoiseModel()
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.version != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported key file version {self.version}")
        for name in ("matrix_seed", "perm1_seed", "perm2_seed"):
            if not 0 <= getattr(self, name) <= prng.MASK64:
                raise ConfigurationError(f"{name} must be a 64-bit unsigned integer")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("image width and height must be positive")
        if self.watermark_len < 1 or self.repeats < 1:
            raise ConfigurationError("watermark_len and repeats must be positive")
        group_layout(self.measurements, self.watermark_len, self.repeats)
        NormalizationBounds(self.norm_lo, self.norm_hi)
        object.__setattr__(self, "norm_lo", float(self.norm_lo))
        object.__setattr__(self, "norm_hi", float(self.norm_hi))

    @property
    def pixels(self):
        return self.width * self.height

    @property
    def group_size(self):
        return group_layout(self.measurements, self.watermark_len, self.repeats)[1]

    @property
    def bounds(self):
        return NormalizationBounds(self.norm_lo, self.norm_hi)

    @property
    def key1(self):
        return PermutationKey(self.perm1_seed, self.measurements)

    @property
    def key2(self):
        return PermutationKey(self.perm2_seed, self.measurements)

    def dumps(self):
        lines = ["# cskd key bundle", f"version: {self.version}"]
        for f in fields(self):
            if f.name == "version":
                continue
            value = getattr(self, f.name)
            if f.name.endswith("_seed"):
                value = f"0x{value:016x}"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}: {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, sep, value = line.partition(":")
            if not sep:
                raise ConfigurationError(f"key file line {lineno}: expected 'name: value'")
            raw[name.strip()] = value.strip()
        known = {f.name: f for f in fields(cls)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown key file fields: {sorted(unknown)}")
        missing = [n for n, f in known.items() if n not in raw and n not in ("noise", "version")]
        if missing:
            raise ConfigurationError(f"key file is missing fields: {missing}")
        if "version" not in raw:
            raise ConfigurationError("key file has no version field")
        kwargs = {}
        try:
            for name, value in raw.items():
                if name in ("norm_lo", "norm_hi"):
                    kwargs[name] = float(value)
                elif name == "noise":
                    kwargs[name] = NoiseModel.parse(value)
                else:
                    kwargs[name] = int(value, 0)
        except ValueError as exc:
            raise ConfigurationError(f"bad key file value: {exc}") from None
        return cls(**kwargs)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read key file: {exc}") from None


def keygen(seed, measurements, width, height, watermark_len, repeats,
           noise=NoiseModel(), norm_lo=None, norm_hi=None):
    """Derive a bundle from one master seed.

    The default normalization range is the largest count the detector can
    see (every mirror on, every pixel at 255), so it never depends on the
    message being sent.
    """
    seed = int(seed) & prng.MASK64
    lo = 0.0 if norm_lo is None else float(norm_lo)
    hi = noise.gain * 255.0 * width * height if norm_hi is None else float(norm_hi)
    return KeyBundle(
        matrix_seed=prng.subseed(seed, 1),
        perm1_seed=prng.subseed(seed, 2),
        perm2_seed=prng.subseed(seed, 3),
        measurements=int(measurements),
        width=int(width),
        height=int(height),
        watermark_len=int(watermark_len),
        repeats=int(repeats),
        norm_lo=lo,
        norm_hi=hi,
        noise=noise,
    )
