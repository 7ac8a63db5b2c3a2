"""Command-line front end: ``cskd <command> ...``.

Exit status is 0 on success, 1 for configuration or contract errors and 2 for
transport or frame-parse errors.
"""

import argparse
import logging
import sys

import numpy as np

from . import transport
from ._accel import backend_name
from .attacks import AttackSpec, apply_attack
from .errors import ConfigurationError, CskdError
from .keys import KeyBundle, keygen
from .metrics import QualityReport
from .pipeline import (AttackBench, Session, attack_battery, ber_sweep, experiment_keys,
                       photon_scale, run_pipeline)
from .sensing import NoiseModel, generate_phantom, read_pgm, write_pgm
from .watermark import Watermark

log = logging.getLogger("cskd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"{text} is not a 64-bit unsigned integer")
    return value


def write_measurements(path, values):
    with open(path, "w") as fh:
        fh.write(f"# cskd measurements count={len(values)}\n")
        fh.writelines(f"{v!r}\n" for v in np.asarray(values, dtype=float).tolist())


def read_measurements(path):
    try:
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
        return np.array([float(ln) for ln in lines if ln])
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read measurements from {path}: {exc}") from None


def read_payload(path):
    try:
        with open(path, "rb") as fh:
            return transport.deserialize(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read payload {path}: {exc}") from None


def write_payload(path, payload):
    with open(path, "wb") as fh:
        fh.write(transport.serialize(payload))


def _load_image(args):
    if getattr(args, "image", None):
        return read_pgm(args.image)
    if getattr(args, "phantom", None):
        return generate_phantom(args.width, args.height, args.phantom)
    raise ConfigurationError("give --image <pgm> or --phantom <kind>")


def _check_image(image, keys):
    if image.shape != (keys.height, keys.width):
        raise ConfigurationError(
            f"image is {image.shape[1]}x{image.shape[0]}, key file expects {keys.width}x{keys.height}")


def cmd_keygen(args):
    noise = NoiseModel.parse(args.noise)
    if args.mean_count is not None:
        base = keygen(args.seed, args.measurements, args.width, args.height,
                      args.watermark_len, args.repeats)
        image = _load_image(args)
        _check_image(image, base)
        noise = NoiseModel("poisson", scale=photon_scale(image, base, args.mean_count))
    keys = keygen(args.seed, args.measurements, args.width, args.height, args.watermark_len,
                  args.repeats, noise, args.norm_lo, args.norm_hi)
    keys.save(args.out)
    print(f"keys={args.out} M={keys.measurements} groups={keys.watermark_len * keys.repeats} "
          f"r={keys.group_size} noise={keys.noise}")


def cmd_phantom(args):
    write_pgm(args.out, generate_phantom(args.width, args.height, args.kind))


def cmd_sense(args):
    keys = KeyBundle.load(args.keys)
    image = read_pgm(args.image)
    _check_image(image, keys)
    write_measurements(args.out, Session(keys).acquire(image, args.seed))


def cmd_embed(args):
    keys = KeyBundle.load(args.keys)
    wm = Watermark.from_hex(args.watermark, keys.repeats)
    if len(wm) != keys.watermark_len:
        raise ConfigurationError(f"watermark has {len(wm)} bits, key file says {keys.watermark_len}")
    payload = Session(keys).embed(read_measurements(args.measurements), wm)
    write_payload(args.out, payload)


def cmd_serve(args):
    payload = read_payload(args.payload)
    served = transport.serve(transport.parse_address(args.bind), payload, args.max_clients)
    print(f"served={served}")


def cmd_fetch(args):
    payload = transport.fetch(transport.parse_address(args.connect), timeout=args.timeout)
    write_payload(args.out, payload)
    print(f"words={len(payload)}")


def cmd_extract(args):
    keys = KeyBundle.load(args.keys)
    got = Session(keys).extract(read_payload(args.payload))
    if args.out:
        write_measurements(args.out, got.measurements)
    print(f"key={got.watermark_hex()} zero_var_groups={got.zero_variance_groups} "
          f"out_of_range={got.out_of_range}")


def cmd_reconstruct(args):
    keys = KeyBundle.load(args.keys)
    image = Session(keys).reconstruct(read_measurements(args.measurements))
    write_pgm(args.out, image)


def cmd_attack(args):
    spec = AttackSpec.parse(args.attack, seed=args.seed)
    write_payload(args.out, apply_attack(read_payload(args.payload), spec))


def cmd_pipeline(args):
    keys = KeyBundle.load(args.keys)
    image = _load_image(args) if (args.image or args.phantom) else None
    if image is None:
        raise ConfigurationError("give --image <pgm> or --phantom <kind>")
    _check_image(image, keys)
    wm = Watermark.from_hex(args.watermark, keys.repeats)
    if len(wm) != keys.watermark_len:
        raise ConfigurationError(f"watermark has {len(wm)} bits, key file says {keys.watermark_len}")
    result = run_pipeline(keys, image, wm, args.seed, loopback=args.loopback)
    if args.out:
        write_pgm(args.out, result.image)
    print(result.record())


def cmd_evaluate(args):
    if not (args.sweep_r or args.attacks or args.detection):
        raise ConfigurationError("choose at least one of --sweep-r, --attacks, --detection")
    if args.sweep_r:
        repeats = [int(x) for x in args.repeats.split(",")]
        rows = ber_sweep(range(args.r_min, args.r_max + 1), repeats, args.length,
                         range(args.seeds), args.sweep_mean_count, seed=args.seed)
        for row in rows:
            print(f"table=ber_vs_r repeats={row.repeats} r={row.group_size} M={row.measurements} "
                  f"ber={row.ber:.4f} trials={row.trials}")
    if args.attacks or args.detection:
        keys, image = experiment_keys(args.seed, args.attack_mean_count)
        wm = Watermark.from_hex(args.watermark, keys.repeats)
        bench = AttackBench(keys, image, wm, noise_seed=args.seed)
        clean = QualityReport.compare(image, bench.clean, wm.bits, wm.bits)
        print(clean.record(table="attacks", scenario="none"))
        if args.attacks:
            for row in attack_battery(bench, range(args.attack_seeds)):
                print("table=attacks " + row.record())
        if args.detection:
            rate, per_bit = bench.detection_rate(threshold_db=args.threshold_db)
            for bit, q, detected in per_bit:
                print(f"table=bit_flip bit={bit} psnr_db={q:.2f} detected={int(detected)}")
            print(f"table=detection rate={rate:.4f} detected={round(rate * 64)}/64")


def build_parser():
    parser = _Parser(prog="cskd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="write a key bundle")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--measurements", "-M", type=int, required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--watermark-len", type=int, required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--noise", default="none", help="none | poisson:<photons/unit> | gaussian:<sigma>")
    p.add_argument("--mean-count", type=float, help="calibrate poisson noise to this average count")
    p.add_argument("--image", help="object used for --mean-count calibration")
    p.add_argument("--phantom", help="built-in object used for --mean-count calibration")
    p.add_argument("--norm-lo", type=float)
    p.add_argument("--norm-hi", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("phantom", help="write a test object as PGM")
    p.add_argument("--kind", default="phantom", help="phantom | letter-S | constant:<level>")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sense", help="simulate the detector")
    p.add_argument("--keys", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=_u64, default=0, help="noise seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("embed", help="embed the key into measurements")
    p.add_argument("--keys", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--watermark", required=True, help="<hex>:<bits>")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("serve", help="distribute a payload over TCP")
    p.add_argument("--payload", required=True)
    p.add_argument("--bind", default="127.0.0.1:7878")
    p.add_argument("--max-clients", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fetch", help="receive a payload over TCP")
    p.add_argument("--connect", required=True)
    p.add_argument("--timeout", type=float, default=transport.DEFAULT_TIMEOUT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("extract", help="recover the key and the measurements")
    p.add_argument("--keys", required=True)
    p.add_argument("--payload", required=True)
    p.add_argument("--out", help="write recovered measurements here")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reconstruct", help="TV reconstruction for authentication")
    p.add_argument("--keys", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("attack", help="tamper with a payload")
    p.add_argument("--payload", required=True)
    p.add_argument("--attack", required=True,
                   help="shuffle | bit_flip:<i>:<bit> | zero_substitute:<n> | delete_shift:<i>")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("pipeline", help="run the whole protocol in one process")
    p.add_argument("--keys", required=True)
    p.add_argument("--image")
    p.add_argument("--phantom")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--watermark", required=True)
    p.add_argument("--seed", type=_u64, default=0, help="noise seed")
    p.add_argument("--loopback", action="store_true", help="send the payload through a local socket")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="BER-vs-group-size sweep and attack tables")
    p.add_argument("--sweep-r", action="store_true")
    p.add_argument("--length", type=int, default=40)
    p.add_argument("--repeats", default="1,5")
    p.add_argument("--r-min", type=int, default=2)
    p.add_argument("--r-max", type=int, default=32)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--sweep-mean-count", type=float, default=16.0)
    p.add_argument("--attacks", action="store_true")
    p.add_argument("--detection", action="store_true")
    p.add_argument("--attack-mean-count", type=float, default=1e6)
    p.add_argument("--attack-seeds", type=int, default=1)
    p.add_argument("--watermark", default="c5c5:16")
    p.add_argument("--threshold-db", type=float, default=3.0)
    p.add_argument("--seed", type=_u64, default=1)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", backend_name())
    try:
        args.func(args)
    except CskdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
