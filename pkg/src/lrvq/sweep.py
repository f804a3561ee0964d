"""Rate-distortion and decoder-compute sweeps over (P, R, I, K)."""

import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

from .codec import CodecConfig, MacCounter, decode, deserialize, encode, serialize
from .errors import CodecError, InvalidConfig, InvalidInput
from .metrics import (
    ConvLayerSpec,
    RateDistortionPoint,
    compute_bpp,
    conv_decoder_macs,
    lowrank_decoder_macs,
    mse,
    pnorm_error,
    psnr,
)
from .training import harvest_directions
from .vq import train_codebook

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "schemaVersion", "patchSize", "rank", "iterations", "codebookSize", "combineMode",
    "loopMode", "image", "bpp", "mse", "psnr", "pnorm2", "decoderMacs",
)


def load_conv_spec(path=None):
    if path is None:
        text = resources.files("lrvq").joinpath("data/reference_decoder.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        spec = json.loads(text)
        layers = spec["layers"]
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed conv decoder spec: {exc}") from exc
    if not layers:
        raise InvalidInput("conv decoder spec has no layers")
    return spec


def resolve_conv_layers(spec, height, width, channels):
    """Instantiate the declared layers for an output of the given size."""
    def chans(v):
        return channels if v == "image" else int(v)

    return [
        ConvLayerSpec(
            out_height=math.ceil(height / int(layer["downscale"])),
            out_width=math.ceil(width / int(layer["downscale"])),
            in_channels=chans(layer["in_channels"]),
            out_channels=chans(layer["out_channels"]),
            kernel_size=int(layer["kernel_size"]),
        )
        for layer in spec["layers"]
    ]


def default_threads():
    value = os.environ.get("LRCODEC_THREADS", "").strip()
    n = int(value) if value else 0
    return n if n > 0 else min(4, os.cpu_count() or 1)


@dataclass
class SweepSpec:
    patch_sizes: list
    ranks: list
    iteration_counts: list
    codebook_sizes: list
    train_images: list
    # (name, ImageTensor) pairs
    eval_images: list
    conv_spec: dict = field(default_factory=load_conv_spec)
    seed: int = 0
    combine_mode: str = "sum"
    loop_mode: str = "closed"
    init: str = "kmeans++"

    def configs(self):
        out = []
        for p, r, i, k in itertools.product(
            sorted(set(self.patch_sizes)), sorted(set(self.ranks)),
            sorted(set(self.iteration_counts)), sorted(set(self.codebook_sizes)),
        ):
            if r > p:
                log.info("skipping rank %d > patch size %d", r, p)
                continue
            out.append(CodecConfig(p, r, i, k, self.combine_mode, self.loop_mode))
        return out


def evaluate(name, img, cfg, codebook):
    """Encode, serialize, decode and score one image."""
    data = serialize(encode(img, cfg, codebook))
    stream = deserialize(data)
    counter = MacCounter()
    out = decode(stream, codebook, counter)
    rows, cols = stream.grid_shape
    expected = lowrank_decoder_macs(cfg.patch_size, cfg.rank, cfg.iterations, rows, cols, img.channels)
    if counter.count != expected:
        raise AssertionError(f"decoder counted {counter.count} MACs, formula gives {expected}")
    return RateDistortionPoint(
        cfg.patch_size, cfg.rank, cfg.iterations, cfg.codebook_size, cfg.combine_mode,
        cfg.loop_mode, name, compute_bpp(len(data), img.height, img.width),
        mse(img, out), psnr(img, out), pnorm_error(img, out, 2), counter.count,
    )


def run_sweep(spec, threads=None):
    """Return ``(points, reference_rows, failures)`` in deterministic order.

    ``reference_rows`` holds ``(label, conv MACs)`` for each distinct eval
    image shape.
    """
    threads = threads or default_threads()
    configs = spec.configs()
    if not spec.eval_images:
        raise InvalidConfig("sweep needs at least one eval image")
    failures = []

    def harvest(key):
        try:
            return harvest_directions(spec.train_images, *key)
        except CodecError as exc:
            return exc

    def run_config(cfg):
        vectors = harvested[(cfg.patch_size, cfg.rank, cfg.iterations)]
        try:
            if isinstance(vectors, Exception):
                raise vectors
            codebook = train_codebook(vectors, cfg.codebook_size, spec.seed, spec.init)
            return [evaluate(name, img, cfg, codebook) for name, img in spec.eval_images], None
        except CodecError as exc:
            return [], f"{cfg}: {exc}"

    keys = sorted({(c.patch_size, c.rank, c.iterations) for c in configs})
    if threads == 1:
        harvested = dict(zip(keys, map(harvest, keys)))
        results = list(map(run_config, configs))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            harvested = dict(zip(keys, pool.map(harvest, keys)))
            results = list(pool.map(run_config, configs))

    points = []
    for rows, err in results:
        points.extend(rows)
        if err is not None:
            log.warning("config failed: %s", err)
            failures.append(err)
    points.sort(key=lambda pt: (pt.patch_size, pt.rank, pt.iterations, pt.codebook_size, pt.image))

    shapes = sorted({(img.height, img.width, img.channels) for _, img in spec.eval_images})
    reference = [
        (f"reference:{h}x{w}x{c}", conv_decoder_macs(resolve_conv_layers(spec.conv_spec, h, w, c)))
        for h, w, c in shapes
    ]
    return points, reference, failures


def _fmt(x):
    return repr(float(x))


def point_row(pt):
    return [
        SCHEMA_VERSION, pt.patch_size, pt.rank, pt.iterations, pt.codebook_size,
        pt.combine_mode, pt.loop_mode, pt.image, _fmt(pt.bpp), _fmt(pt.mse),
        _fmt(pt.psnr), _fmt(pt.pnorm2), pt.decoder_macs,
    ]


def sweep_rows(points, reference, failures):
    rows = [list(CSV_COLUMNS)]
    rows.extend(point_row(pt) for pt in points)
    for label, macs in reference:
        rows.append([SCHEMA_VERSION, "", "", "", "", "", "", label, "", "", "", "", macs])
    if failures:
        rows.append([SCHEMA_VERSION, "", "", "", "", "", "", "error-summary", "", "", "", "", len(failures)])
    return rows
