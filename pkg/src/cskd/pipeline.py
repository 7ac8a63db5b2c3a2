"""End-to-end protocol runs and the evaluation sweeps built on them."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import transport
from .attacks import AttackSpec, apply_attack, detection_rate
from .keys import keygen
from .metrics import QualityReport, ber, psnr, to_display
from .reconstruction import SolverParams, tv_solve
from .sensing import MeasurementMatrix, NoiseModel, generate_phantom, poisson_scale_for_mean, sense
from .watermark import Watermark, embed, extract

log = logging.getLogger(__name__)


class Session:
    """Everything one party derives from a key bundle."""

    def __init__(self, keys, solver=None):
        self.keys = keys
        self.matrix = MeasurementMatrix(keys.matrix_seed, keys.measurements, keys.pixels)
        self.key1 = keys.key1
        self.key2 = keys.key2
        self.bounds = keys.bounds
        self.solver = solver

    @property
    def shape(self):
        return (self.keys.height, self.keys.width)

    def acquire(self, image, noise_seed=0):
        """Carrier generation: detector output for ``image``."""
        return sense(image, self.matrix, self.keys.noise, noise_seed)

    def embed(self, carrier, watermark):
        if len(watermark) != self.keys.watermark_len or watermark.repeats != self.keys.repeats:
            watermark = Watermark(watermark.bits, self.keys.repeats)
        return embed(carrier, self.key1, self.key2, watermark, self.bounds)

    def transmit(self, image, watermark, noise_seed=0):
        return self.embed(self.acquire(image, noise_seed), watermark)

    def extract(self, payload):
        return extract(payload, self.key1, self.key2, self.keys.watermark_len,
                       self.keys.repeats, self.bounds)

    def solver_params(self):
        if self.solver is not None:
            return self.solver
        if self.keys.noise.kind == "none":
            return SolverParams()
        return SolverParams(fit_constraint=False)

    def noise_std(self, measurements):
        noise = self.keys.noise
        if noise.kind == "poisson":
            return float(np.sqrt(max(np.mean(measurements), 1.0)))
        if noise.kind == "gaussian":
            return noise.sigma or None
        return None

    def reconstruct(self, measurements):
        """Display-range image recovered from detector-unit measurements."""
        result = tv_solve(self.matrix, measurements, self.shape, self.solver_params(),
                          noise_std=self.noise_std(measurements))
        return to_display(result.image, self.keys.noise.gain)

    def receive(self, payload):
        """Extraction followed by authentication; returns ``(extraction, image)``."""
        got = self.extract(payload)
        return got, self.reconstruct(got.measurements)


@dataclass
class PipelineResult:
    report: QualityReport
    watermark_hex: str
    image: np.ndarray
    payload: object
    zero_variance_groups: int
    out_of_range: int

    def record(self):
        return self.report.record(key=self.watermark_hex, zero_var_groups=self.zero_variance_groups,
                                  out_of_range=self.out_of_range)


def run_pipeline(keys, image, watermark, noise_seed=0, loopback=False, session=None):
    """Carrier generation -> embedding -> (optional loopback TCP) -> extraction -> authentication."""
    session = session or Session(keys)
    payload = session.transmit(image, watermark, noise_seed)
    if loopback:
        with transport.PayloadServer(("127.0.0.1", 0), payload) as server:
            payload = transport.fetch(server.address)
    got, recon = session.receive(payload)
    report = QualityReport.compare(image, recon, watermark.bits, got.watermark)
    return PipelineResult(report, got.watermark_hex(), recon, payload,
                          got.zero_variance_groups, got.out_of_range)


def photon_scale(image, keys, mean_count):
    """Photons per unit intensity giving ``mean_count`` average counts for this bundle."""
    matrix = MeasurementMatrix(keys.matrix_seed, keys.measurements, keys.pixels)
    return poisson_scale_for_mean(image, matrix, mean_count)


def random_watermark(length, seed):
    rng = np.random.default_rng(seed)
    return tuple(int(b) for b in rng.integers(0, 2, length))


@dataclass
class SweepRow:
    repeats: int
    group_size: int
    measurements: int
    ber: float
    trials: int


def ber_sweep(group_sizes, repeats_list=(1, 5), length=40, noise_seeds=range(20),
              mean_count=16.0, image=None, seed=1):
    """Key error rate against group size, averaged over noise realisations.

    No reconstruction is involved. The photon level is low on purpose: with
    integer counts, small groups then occasionally hold identical values,
    which is what makes short groups and unrepeated keys fail.
    """
    image = generate_phantom(64, 64) if image is None else image
    height, width = image.shape
    rows = []
    for repeats in repeats_list:
        for r in group_sizes:
            m = length * repeats * r
            base = keygen(seed, m, width, height, length, repeats)
            gain = photon_scale(image, base, mean_count)
            keys = keygen(seed, m, width, height, length, repeats, NoiseModel("poisson", scale=gain))
            session = Session(keys)
            errors = []
            for i, noise_seed in enumerate(noise_seeds):
                wm = Watermark(random_watermark(length, (seed, repeats, r, i)), repeats)
                got = session.extract(session.transmit(image, wm, noise_seed))
                errors.append(ber(wm.bits, got.watermark))
            rows.append(SweepRow(repeats, r, m, float(np.mean(errors)), len(errors)))
    return rows


@dataclass
class AttackRow:
    scenario: str
    psnr_vs_clean: float
    psnr_vs_truth: float
    ber: float

    def record(self):
        return (f"scenario={self.scenario} psnr_vs_clean_db={_db(self.psnr_vs_clean)} "
                f"psnr_vs_truth_db={_db(self.psnr_vs_truth)} ber={self.ber:.4f}")


def _db(v):
    return "inf" if np.isinf(v) else f"{v:.2f}"


class AttackBench:
    """A fixed transmitted payload plus its untampered reception, for attack studies."""

    def __init__(self, keys, image, watermark, noise_seed=0):
        self.session = Session(keys)
        self.image = image
        self.watermark = watermark
        self.payload = self.session.transmit(image, watermark, noise_seed)
        _, self.clean = self.session.receive(self.payload)

    def run(self, spec):
        got, recon = self.session.receive(apply_attack(self.payload, spec))
        return AttackRow(spec.label(), psnr(self.clean, recon), psnr(self.image, recon),
                         ber(self.watermark.bits, got.watermark))

    def receive_bits(self, payload):
        got, recon = self.session.receive(payload)
        return got.watermark, recon

    def detection_rate(self, value_index=0, threshold_db=3.0):
        return detection_rate(self.payload, self.receive_bits, self.image, self.watermark.bits,
                              value_index=value_index, threshold_db=threshold_db)


def attack_battery(bench, seeds=range(1)):
    """The tamper scenarios of the eavesdropping study, one row each."""
    specs = [AttackSpec("shuffle", seed=s) for s in seeds]
    specs += [AttackSpec("bit_flip", value_index=0, bit_index=b) for b in (12, 13, 14, 15, 52, 62, 63)]
    specs += [AttackSpec("zero_substitute", count=c, seed=s) for c in (8, 16, 32, 64) for s in seeds]
    specs.append(AttackSpec("delete_shift", value_index=0))
    return [bench.run(spec) for spec in specs]


def experiment_keys(seed=1, mean_count=1e4, image=None, length=16, repeats=5, group_size=32):
    """Bundle matching the photon-counting experiment: 64x64 object, M = 2560."""
    image = generate_phantom(64, 64, "letter-S") if image is None else image
    height, width = image.shape
    m = length * repeats * group_size
    base = keygen(seed, m, width, height, length, repeats)
    gain = photon_scale(image, base, mean_count)
    return keygen(seed, m, width, height, length, repeats, NoiseModel("poisson", scale=gain)), image


def with_solver(session, **overrides):
    session.solver = replace(session.solver_params(), **overrides)
    return session
