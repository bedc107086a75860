"""Command-line entry point: ``ssv <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 malformed or unreadable input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import __version__
from .codec import BitstreamError, decode_full, encode, read_bitstream
from .detector.net import TrainConfig, WeightFileError, detect, load_weights, save_weights, train
from .evalkit import FP_BUDGETS, roc_curve, summary, write_roc
from .features import bitstream_features
from .pnm import PnmError, read_pgm, read_ppm, write_atomic, write_pgm, write_ppm
from .scramble import ENV_VAR, InvalidKeyError, key_from_env
from .synthgen import QP_SET, build_corpus, read_annotations, read_manifest, write_annotations
from .syntax import bench_csv, bench_decode, parse_syntax

log = logging.getLogger("ssv")

EXIT_USAGE = 1
EXIT_INPUT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key(value):
    try:
        return key_from_env(value)
    except InvalidKeyError as exc:
        raise UsageError(str(exc)) from None


def _qp(text):
    v = int(text)
    if not 0 <= v <= 51:
        raise argparse.ArgumentTypeError(f"qp must be in [0, 51], got {v}")
    return v


def _yes_no(text):
    return {"yes": True, "no": False}[text]


def cmd_encode(a):
    key = _key(a.scramble_key)
    bs = encode(read_pgm(a.input), a.qp, key, a.entropy)
    write_atomic(a.out, bs.to_bytes())
    log.info("wrote %s (%d bytes%s)", a.out, len(bs.to_bytes()), ", scrambled" if key else "")


def cmd_decode(a):
    key = _key(a.key)
    bs = read_bitstream(a.input)
    if bs.scrambled and key is None:
        log.warning("stream is scrambled and no key was given; output will be degraded")
    write_pgm(a.out, decode_full(bs, key))


def cmd_parse(a):
    write_atomic(a.out, parse_syntax(read_bitstream(a.input)).to_csv().encode())


def cmd_featurize(a):
    write_ppm(a.out, bitstream_features(read_bitstream(a.input)))


def cmd_gen_corpus(a):
    manifest = build_corpus(a.n, a.seed, a.out, qp_set=tuple(a.qp), scrambled=a.scrambled,
                            key=_key(a.key), entropy_mode=a.entropy, width=a.width,
                            height=a.height)
    print(manifest)


def _load_set(manifest, split, qp, scrambled):
    rows = read_manifest(manifest, split=split, qp=qp, scrambled=scrambled)
    if not rows:
        raise UsageError(f"no manifest rows for split={split} qp={qp} scrambled={scrambled}")
    X = np.stack([read_ppm(r["features"]) for r in rows])
    Y = [read_annotations(r["annotations"])[0] for r in rows]
    return rows, X, Y


def cmd_train(a):
    _, X, Y = _load_set(a.manifest, "train", a.qp, _yes_no(a.scrambled))
    cfg = TrainConfig(learning_rate=a.lr, batch_size=a.batch, iterations=a.iters, seed=a.seed)
    start = time.perf_counter()

    def progress(it, loss):
        if it % 50 == 0 or it == cfg.iterations - 1:
            log.info("iter %d loss %.4f (%.0fs)", it, loss, time.perf_counter() - start)

    net, _ = train(X, Y, cfg, log_path=a.log or f"{a.out}.loss.csv", callback=progress)
    save_weights(net, a.out)


def _read_features(path):
    """Feature image from a PPM, or built from a bitstream."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"SSV1":
        return bitstream_features(read_bitstream(path))
    return read_ppm(path)


def cmd_detect(a):
    net = load_weights(a.weights)
    dets = detect(net, _read_features(a.input), a.conf, a.nms)
    write_annotations(a.out, [d.box for d in dets], [d.score for d in dets])


def cmd_eval(a):
    net = load_weights(a.weights)
    _, X, Y = _load_set(a.manifest, a.split, a.qp, _yes_no(a.scrambled))
    dets = [detect(net, x, a.conf_floor) for x in X]
    curve = roc_curve(dets, Y)
    write_roc(a.out, curve)
    print(summary(curve, FP_BUDGETS))


def cmd_bench(a):
    scr = None if a.scrambled == "any" else _yes_no(a.scrambled)
    rows = read_manifest(a.manifest, split=a.split, qp=a.qp, scrambled=scr)
    report = bench_decode(((r["bitstream"].name, read_bitstream(r["bitstream"])) for r in rows),
                          repeats=a.repeats)
    write_atomic(a.out, bench_csv(report).encode())
    if report:
        full = sum(r.full_s for r in report)
        syn = sum(r.syntax_s for r in report)
        print(f"{len(report)} streams  full {full:.3f}s  syntax {syn:.3f}s  "
              f"speedup {full / syn:.2f}x")
    else:
        print("0 streams")


def build_parser():
    p = _Parser(prog="ssv", description="Compressed-domain face localisation toolkit.")
    p.add_argument("--version", action="version", version=f"ssv {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    key_help = f"16 hex digit scrambling key (default: ${ENV_VAR})"

    sp = add("encode", cmd_encode, "encode a PGM image into a bitstream")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--qp", type=_qp, default=32)
    sp.add_argument("--scramble-key", "--key", dest="scramble_key", help=key_help)
    sp.add_argument("--entropy", choices=("adaptive", "raw"), default="adaptive")
    sp.add_argument("--out", required=True)

    sp = add("decode", cmd_decode, "reconstruct pixels from a bitstream")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--key", "--scramble-key", dest="key", help=key_help)
    sp.add_argument("--out", required=True)

    sp = add("parse", cmd_parse, "export per-PU syntax as CSV without reconstruction")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("featurize", cmd_featurize, "build the 3-channel feature image (PPM)")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("gen-corpus", cmd_gen_corpus, "render and encode a synthetic corpus")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--out", required=True)
    sp.add_argument("--qp", type=_qp, nargs="+", default=list(QP_SET))
    sp.add_argument("--scrambled", choices=("yes", "no", "both"), default="both")
    sp.add_argument("--key", "--scramble-key", dest="key", help="scrambling key "
                    "(default: $SSV_KEY, else derived from the seed)")
    sp.add_argument("--entropy", choices=("adaptive", "raw"), default="adaptive")
    sp.add_argument("--width", type=int, default=224)
    sp.add_argument("--height", type=int, default=224)

    sp = add("train", cmd_train, "train the detector on manifest training features")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--iters", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--qp", type=int, default=32)
    sp.add_argument("--scrambled", choices=("yes", "no"), default="no")
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--log", help="loss CSV path (default: <out>.loss.csv)")

    sp = add("detect", cmd_detect, "detect faces in one feature image or bitstream")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--conf", type=float, default=0.25)
    sp.add_argument("--nms", type=float, default=0.4)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "ROC of a trained detector on manifest features")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--qp", type=int, default=32)
    sp.add_argument("--scrambled", choices=("yes", "no"), default="no")
    sp.add_argument("--conf-floor", type=float, default=0.01,
                    help="detections below this score are never kept")

    sp = add("bench", cmd_bench, "time full decode against syntax-only parsing")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split")
    sp.add_argument("--qp", type=int)
    sp.add_argument("--scrambled", choices=("yes", "no", "any"), default="any")
    sp.add_argument("--repeats", type=int, default=1)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"ssv {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PnmError, BitstreamError, WeightFileError, ValueError) as exc:
        print(f"ssv {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
