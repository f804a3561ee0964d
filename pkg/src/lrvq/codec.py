"""Encoder, decoder and wire format.

A stream is a 27-byte header followed by fixed-length records, one per
rank-1 component: left codeword index, right codeword index, 8-bit gain
code. Records are ordered by patch (row-major over the grid), then channel,
then iteration, then component. The decoder rebuilds every patch purely
from indexed outer products.
"""

import math
import struct
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .bitio import pack_fields, unpack_fields
from .errors import (
    CodebookMismatch,
    CorruptStream,
    InvalidConfig,
    InvalidInput,
    UnsupportedVersion,
)
from .lowrank import COMBINE_MODES, LOOP_MODES, DecompositionConfig, decompose_batch
from .patching import ImageTensor, PatchGrid, assemble_patches, extract_patches
from .vq import FactorQuantizer, GainRange, dequantize_gains

STREAM_MAGIC = b"LRVQ"
STREAM_VERSION = 1
# magic, version, height, width, flags (channels | combine << 4 | loop << 5),
# patch size, rank, iterations, codebook size, gain min, gain max, codebook hash
_HEADER = struct.Struct(">4sBHHBBBBHffI")
HEADER_BYTES = _HEADER.size
GAIN_BITS = 8


@dataclass(frozen=True)
class CodecConfig:
    patch_size: int
    rank: int
    iterations: int
    codebook_size: int
    combine_mode: str = "sum"
    loop_mode: str = "closed"
    gain_range: GainRange = None

    def __post_init__(self):
        p, r, i, k = self.patch_size, self.rank, self.iterations, self.codebook_size
        if not 1 <= p <= 255:
            raise InvalidConfig(f"patch size must be in [1, 255], got {p}")
        if not 1 <= r <= p:
            raise InvalidConfig(f"rank must be in [1, patch size {p}], got {r}")
        if not 1 <= i <= 255:
            raise InvalidConfig(f"iterations must be in [1, 255], got {i}")
        if not 2 <= k <= 0xFFFF:
            raise InvalidConfig(f"codebook size must be in [2, 65535], got {k}")
        if self.combine_mode not in COMBINE_MODES:
            raise InvalidConfig(f"unknown combine mode {self.combine_mode!r}")
        if self.loop_mode not in LOOP_MODES:
            raise InvalidConfig(f"unknown loop mode {self.loop_mode!r}")

    @property
    def index_bits(self):
        return index_bits(self.codebook_size)

    def decomposition(self):
        return DecompositionConfig(self.rank, self.iterations, self.combine_mode, self.loop_mode)


def index_bits(k):
    return max(1, math.ceil(math.log2(k)))


def payload_bits(grid_rows, grid_cols, channels, iterations, rank, codebook_size):
    per_component = 2 * index_bits(codebook_size) + GAIN_BITS
    return grid_rows * grid_cols * channels * iterations * rank * per_component


class MacCounter:
    """Thread-safe tally of decoder multiply-accumulates."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n):
        with self._lock:
            self.count += int(n)


@dataclass(eq=False)
class EncodedStream:
    config: CodecConfig
    height: int
    width: int
    channels: int
    codebook_hash: int
    # (N, 3) records: left index, right index, gain code.
    components: np.ndarray = None
    # Diagnostic bypass: unquantized (left, right, gains) arrays, never serialized.
    bypass_factors: tuple = field(default=None, repr=False)

    @property
    def grid_shape(self):
        p = self.config.patch_size
        return -(-self.height // p), -(-self.width // p)

    @property
    def is_bypass(self):
        return self.bypass_factors is not None

    @property
    def payload_bits(self):
        rows, cols = self.grid_shape
        c = self.config
        return payload_bits(rows, cols, self.channels, c.iterations, c.rank, c.codebook_size)

    @property
    def n_components(self):
        rows, cols = self.grid_shape
        return rows * cols * self.channels * self.config.iterations * self.config.rank

    def __eq__(self, other):
        if not isinstance(other, EncodedStream):
            return NotImplemented
        if self.is_bypass or other.is_bypass:
            return self is other
        return serialize(self) == serialize(other)


def _patch_stack(grid):
    """(C, rows, cols, P, P) -> (rows * cols * C, P, P) in payload order."""
    p = grid.patch_size
    return grid.patches.transpose(1, 2, 0, 3, 4).reshape(-1, p, p)


def _check_codebook(cfg, cb):
    if cb.dimension != cfg.patch_size:
        raise InvalidConfig(
            f"codebook dimension {cb.dimension} does not match patch size {cfg.patch_size}"
        )
    if cb.size != cfg.codebook_size:
        raise InvalidConfig(
            f"codebook has {cb.size} codewords, config expects {cfg.codebook_size}"
        )


def encode(img, cfg, codebook, bypass=False):
    """Encode an image patch by patch.

    The gain range is fixed from the magnitudes of an exact first pass; the
    quantized pass then runs in ``cfg.loop_mode``. With ``bypass=True`` the
    exact factors are kept as floats (for diagnostics only).
    """
    if not isinstance(img, ImageTensor):
        img = ImageTensor(img)
    if img.height > 0xFFFF or img.width > 0xFFFF or img.channels > 15:
        raise InvalidInput(f"image shape {img.shape} exceeds the stream format limits")
    if cfg.patch_size > max(img.height, img.width):
        raise InvalidConfig(f"patch size {cfg.patch_size} exceeds image extent")
    grid = extract_patches(img, cfg.patch_size)
    stack = _patch_stack(grid)
    exact = decompose_batch(stack, cfg.decomposition())

    if bypass:
        return EncodedStream(
            cfg, img.height, img.width, img.channels, 0,
            bypass_factors=(exact.left, exact.right, exact.gains),
        )

    _check_codebook(cfg, codebook)
    gain_range = GainRange.from_gains(exact.gains)
    quantizer = FactorQuantizer(codebook, gain_range)
    quantized = decompose_batch(stack, cfg.decomposition(), quantizer)
    return EncodedStream(
        replace(cfg, gain_range=gain_range),
        img.height,
        img.width,
        img.channels,
        codebook.content_hash,
        components=quantized.codes.reshape(-1, 3),
    )


def _decode_factors(stream, codebook):
    c = stream.config
    n_patches = stream.n_components // (c.iterations * c.rank)
    if stream.is_bypass:
        return stream.bypass_factors
    if codebook is None or stream.codebook_hash != codebook.content_hash:
        raise CodebookMismatch("codebook hash does not match the stream header")
    if codebook.dimension != c.patch_size or codebook.size != c.codebook_size:
        raise CodebookMismatch(
            f"codebook is {codebook.size}x{codebook.dimension}, stream expects "
            f"{c.codebook_size}x{c.patch_size}"
        )
    comp = np.asarray(stream.components, dtype=np.int64)
    if comp.shape != (stream.n_components, 3):
        raise CorruptStream(f"expected {stream.n_components} components, got {comp.shape}")
    comp = comp.reshape(n_patches, c.iterations, c.rank, 3)
    words = codebook.codewords
    gains = dequantize_gains(comp[..., 2], c.gain_range)
    return words[comp[..., 0]], words[comp[..., 1]], gains


def decode(stream, codebook, counter=None):
    """Rebuild the image from indexed rank-1 terms.

    Every component costs P multiplies to scale the left direction and P^2
    multiply-accumulates for the outer product; ``counter`` tallies them.
    """
    c = stream.config
    p = c.patch_size
    left, right, gains = _decode_factors(stream, codebook)
    acc = np.zeros((left.shape[0], p, p))
    for i in range(c.iterations):
        for j in range(c.rank):
            scaled = gains[:, i, j, None] * left[:, i, j]
            acc += scaled[:, :, None] * right[:, i, j, None, :]
            if counter is not None:
                counter.add(scaled.size + acc.size)
    if c.combine_mode == "average":
        acc /= c.iterations
    rows, cols = stream.grid_shape
    patches = acc.reshape(rows, cols, stream.channels, p, p).transpose(2, 0, 1, 3, 4)
    grid = PatchGrid(p, rows, cols, stream.height, stream.width, patches)
    return assemble_patches(grid)


def serialize(stream):
    if stream.is_bypass:
        raise InvalidConfig("quantization-bypass streams cannot be serialized")
    c = stream.config
    if c.gain_range is None:
        raise InvalidConfig("stream has no gain range")
    flags = stream.channels | (COMBINE_MODES.index(c.combine_mode) << 4)
    flags |= LOOP_MODES.index(c.loop_mode) << 5
    header = _HEADER.pack(
        STREAM_MAGIC,
        STREAM_VERSION,
        stream.height,
        stream.width,
        flags,
        c.patch_size,
        c.rank,
        c.iterations,
        c.codebook_size,
        c.gain_range.min_abs,
        c.gain_range.max_abs,
        stream.codebook_hash,
    )
    b = c.index_bits
    payload = pack_fields(stream.components, (b, b, GAIN_BITS))
    return header + payload


def deserialize(data):
    data = bytes(data)
    if len(data) < HEADER_BYTES:
        raise CorruptStream(f"stream of {len(data)} bytes is shorter than the header")
    (magic, version, height, width, flags, p, r, iters, k, gmin, gmax, cb_hash) = (
        _HEADER.unpack_from(data)
    )
    if magic != STREAM_MAGIC:
        raise CorruptStream(f"bad stream magic {magic!r}")
    if version != STREAM_VERSION:
        raise UnsupportedVersion(f"stream version {version} is not supported")
    channels = flags & 0x0F
    if flags & 0xC0 or channels == 0 or height == 0 or width == 0:
        raise CorruptStream("invalid header fields")
    try:
        cfg = CodecConfig(
            p, r, iters, k,
            combine_mode=COMBINE_MODES[(flags >> 4) & 1],
            loop_mode=LOOP_MODES[(flags >> 5) & 1],
            gain_range=GainRange(gmin, gmax),
        )
    except InvalidInput as exc:
        raise CorruptStream(f"invalid header: {exc}") from exc
    stream = EncodedStream(cfg, height, width, channels, cb_hash)
    b = cfg.index_bits
    comp = unpack_fields(data[HEADER_BYTES:], (b, b, GAIN_BITS), stream.n_components)
    if np.any(comp[:, :2] >= k):
        raise CorruptStream("codeword index out of range")
    stream.components = comp
    return stream
