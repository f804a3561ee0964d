"""Command-line front end.

Exit codes: 0 success, 2 input/format error, 3 consistency (hash/shape)
error, 4 numerical failure.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

from .codec import CodecConfig, MacCounter, decode, deserialize, encode, serialize
from .errors import CodecError, InsufficientData, InvalidConfig
from .imageio import read_image, write_image
from .metrics import (
    RateDistortionPoint,
    compute_bpp,
    lowrank_decoder_macs,
    mse,
    pnorm_error,
    psnr,
)
from .sweep import (
    CSV_COLUMNS,
    SweepSpec,
    load_conv_spec,
    point_row,
    run_sweep,
    sweep_rows,
)
from .synthetic import synth_image
from .training import harvest_directions
from .vq import INIT_METHODS, load_codebook, save_codebook, train_codebook

log = logging.getLogger("lrvq")

IMAGE_SUFFIXES = (".pgm", ".ppm")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def load_corpus(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise InsufficientData(f"corpus directory {directory} does not exist")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise InsufficientData(f"no PGM/PPM images in {directory}")
    return [(p.stem, read_image(p)) for p in paths]


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        img = synth_image(args.seed + i, args.size, args.channels)
        suffix = ".pgm" if args.channels == 1 else ".ppm"
        write_image(img, out / f"synth_{args.seed + i:05d}{suffix}")
    print(f"wrote {args.count} images to {out}")


def cmd_train_codebook(args):
    images = [img for _, img in load_corpus(args.corpus)]
    vectors = harvest_directions(images, args.patch_size, args.rank, args.iterations)
    cb = train_codebook(vectors, args.codebook_size, args.seed, args.init)
    save_codebook(cb, args.out)
    print(
        f"K={cb.size} P={cb.dimension} vectors={cb.n_training_vectors} "
        f"objective={cb.objective_history[-1]!r} hash={cb.content_hash:08x}"
    )


def cmd_encode(args):
    if args.bypass:
        raise InvalidConfig("quantization-bypass streams cannot be written to the wire format")
    img = read_image(args.image)
    cb = load_codebook(args.codebook)
    cfg = CodecConfig(
        args.patch_size, args.rank, args.iterations, cb.size, args.combine, args.loop
    )
    data = serialize(encode(img, cfg, cb))
    Path(args.out).write_bytes(data)
    print(f"{len(data)} bytes, bpp={compute_bpp(len(data), img.height, img.width)!r}")


def cmd_decode(args):
    stream = deserialize(Path(args.stream).read_bytes())
    img = decode(stream, load_codebook(args.codebook))
    write_image(img, args.out)


def cmd_eval(args):
    original = read_image(args.original)
    data = Path(args.stream).read_bytes()
    stream = deserialize(data)
    counter = MacCounter()
    out = decode(stream, load_codebook(args.codebook), counter)
    c = stream.config
    rows, cols = stream.grid_shape
    assert counter.count == lowrank_decoder_macs(
        c.patch_size, c.rank, c.iterations, rows, cols, stream.channels
    )
    pt = RateDistortionPoint(
        c.patch_size, c.rank, c.iterations, c.codebook_size, c.combine_mode, c.loop_mode,
        Path(args.original).stem, compute_bpp(len(data), original.height, original.width),
        mse(original, out), psnr(original, out), pnorm_error(original, out, 2), counter.count,
    )
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.header:
        writer.writerow(CSV_COLUMNS)
    writer.writerow(point_row(pt))


def cmd_sweep(args):
    spec = SweepSpec(
        patch_sizes=args.patch_size,
        ranks=args.rank,
        iteration_counts=args.iterations,
        codebook_sizes=args.codebook_size,
        train_images=[img for _, img in load_corpus(args.corpus)],
        eval_images=load_corpus(args.eval),
        conv_spec=load_conv_spec(args.conv_spec),
        seed=args.seed,
        combine_mode=args.combine,
        loop_mode=args.loop,
        init=args.init,
    )
    points, reference, failures = run_sweep(spec)
    with open(args.csv, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(sweep_rows(points, reference, failures))
    print(f"{len(points)} rows, {len(failures)} failed configs -> {args.csv}")


def _add_codec_flags(p, multi=False):
    kind = _int_list if multi else int
    p.add_argument("--patch-size", type=kind, required=True)
    p.add_argument("--rank", type=kind, required=True)
    p.add_argument("--iterations", type=kind, required=True)
    p.add_argument("--combine", choices=("sum", "average"), default="sum")
    p.add_argument("--loop", choices=("open", "closed"), default="closed")


def build_parser():
    parser = argparse.ArgumentParser(prog="lrvq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-codebook", help="train the shared direction codebook")
    p.add_argument("--corpus", required=True)
    p.add_argument("--patch-size", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--codebook-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=INIT_METHODS, default="kmeans++")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("encode", help="encode a PGM/PPM image")
    p.add_argument("image")
    p.add_argument("--codebook", required=True)
    _add_codec_flags(p)
    p.add_argument("--bypass", action="store_true", help="diagnostic only; always rejected")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a stream to PGM/PPM")
    p.add_argument("stream")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="print one CSV row of rate and distortion")
    p.add_argument("original")
    p.add_argument("stream")
    p.add_argument("--codebook", required=True)
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="rate/distortion/MAC sweep to CSV")
    p.add_argument("--corpus", required=True, help="codebook training images")
    p.add_argument("--eval", required=True, help="held-out evaluation images")
    _add_codec_flags(p, multi=True)
    p.add_argument("--codebook-size", type=_int_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=INIT_METHODS, default="kmeans++")
    p.add_argument("--conv-spec", default=None, help="reference conv decoder JSON")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
