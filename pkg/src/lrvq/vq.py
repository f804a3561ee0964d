"""Shared direction codebook and gain-shape quantization.

Every factor vector (left or right) is coded as the index of the codeword
with the largest absolute cosine; the sign and magnitude go into a single
8-bit log-scale gain per rank-1 component.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptFile,
    DegenerateInput,
    InsufficientData,
    InvalidInput,
    UnsupportedFormat,
    UnsupportedVersion,
)

CODEBOOK_MAGIC = b"LRCB"
CODEBOOK_VERSION = 1
_CB_HEADER = struct.Struct(">4sBBHQ")

GAIN_LEVELS = 127
ZERO_VECTOR_TOL = 1e-9
MAX_LLOYD_ITERATIONS = 100
CHANGE_TOL = 1e-3


def fnv1a32(data):
    h = 0x811C9DC5
    for byte in data:
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def _canonicalize_signs(x):
    """Flip rows so that their first nonzero element is positive."""
    nonzero = x != 0
    first = np.argmax(nonzero, axis=1)
    lead = x[np.arange(len(x)), first]
    return np.where((lead < 0)[:, None], -x, x)


@dataclass(frozen=True, eq=False)
class Codebook:
    """K unit directions of dimension P.

    The stored float32 values are authoritative; ``codewords`` is their
    float64 normalization, so a codebook read back from disk quantizes
    bit-identically to the one that was written.
    """

    raw: np.ndarray
    seed: int = 0
    objective_history: tuple = field(default=(), compare=False)
    n_training_vectors: int = field(default=0, compare=False)

    def __post_init__(self):
        raw = np.ascontiguousarray(self.raw, dtype=">f4")
        if raw.ndim != 2 or raw.shape[0] < 2 or raw.shape[1] < 1:
            raise InvalidInput(f"codebook needs K >= 2 rows of dimension >= 1, got {raw.shape}")
        if raw.shape[0] > 0xFFFF or raw.shape[1] > 0xFF:
            raise InvalidInput(f"codebook shape {raw.shape} exceeds the file format limits")
        wide = raw.astype(np.float64)
        if not np.all(np.isfinite(wide)):
            raise InvalidInput("codebook contains non-finite values")
        norms = np.sqrt(np.sum(wide * wide, axis=1))
        if np.any(norms == 0):
            raise InvalidInput("codebook contains a zero codeword")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "_codewords", wide / norms[:, None])

    @classmethod
    def from_vectors(cls, vectors, seed=0, **meta):
        v = np.asarray(vectors, dtype=np.float64)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        return cls(_canonicalize_signs(v).astype(np.float32), seed=seed, **meta)

    @property
    def codewords(self):
        return self._codewords

    @property
    def dimension(self):
        return self.raw.shape[1]

    @property
    def size(self):
        return self.raw.shape[0]

    @property
    def content_hash(self):
        return fnv1a32(self.raw.tobytes())

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.seed == other.seed and self.raw.tobytes() == other.raw.tobytes()

    def to_bytes(self):
        header = _CB_HEADER.pack(
            CODEBOOK_MAGIC, CODEBOOK_VERSION, self.dimension, self.size, self.seed
        )
        body = self.raw.tobytes()
        return header + body + struct.pack(">I", fnv1a32(body))

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < _CB_HEADER.size:
            raise CorruptFile("codebook file shorter than its header")
        magic, version, dim, size, seed = _CB_HEADER.unpack_from(data)
        if magic != CODEBOOK_MAGIC:
            raise UnsupportedFormat(f"bad codebook magic {magic!r}")
        if version != CODEBOOK_VERSION:
            raise UnsupportedVersion(f"codebook version {version} is not supported")
        body_len = 4 * dim * size
        if len(data) != _CB_HEADER.size + body_len + 4:
            raise CorruptFile(
                f"codebook file is {len(data)} bytes, expected {_CB_HEADER.size + body_len + 4}"
            )
        body = data[_CB_HEADER.size : _CB_HEADER.size + body_len]
        (stored,) = struct.unpack_from(">I", data, _CB_HEADER.size + body_len)
        if fnv1a32(body) != stored:
            raise CorruptFile("codebook checksum mismatch")
        raw = np.frombuffer(body, dtype=">f4").reshape(size, dim)
        return cls(raw, seed=seed)


def save_codebook(cb, path):
    with open(path, "wb") as fh:
        fh.write(cb.to_bytes())


def load_codebook(path):
    with open(path, "rb") as fh:
        return Codebook.from_bytes(fh.read())


def _kmeans_pp(x, k, rng):
    n = len(x)
    centers = [int(rng.integers(n))]
    best = (x @ x[centers[0]]) ** 2
    for _ in range(1, k):
        d2 = np.clip(1.0 - best, 0.0, None)
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        np.maximum(best, (x @ x[idx]) ** 2, out=best)
    return x[centers].copy()


def _nearest(x, centroids, chunk=4096):
    """Index of the largest |dot| per row, ties to the lowest index."""
    out = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), chunk):
        dots = x[start : start + chunk] @ centroids.T
        np.abs(dots, out=dots)
        out[start : start + chunk] = np.argmax(dots, axis=1)
    return out


INIT_METHODS = ("kmeans++", "sample")


def train_codebook(vectors, k, seed=0, init="kmeans++"):
    """Spherical k-means over unit directions, identifying v with -v.

    Vectors with norm below 1e-9 are discarded. ``init="sample"`` seeds with
    K distinct inputs drawn uniformly instead of k-means++; it tracks the
    input density and suits corpora where a few dense directions carry most
    of the energy. Returns a :class:`Codebook` whose ``objective_history``
    holds ``1 - mean |cos|`` after every assignment step.
    """
    if init not in INIT_METHODS:
        raise InvalidInput(f"unknown init method {init!r}")
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput(f"training vectors must form a 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("training vectors contain non-finite values")
    k = int(k)
    if k < 2:
        raise InvalidInput(f"codebook size must be >= 2, got {k}")
    norms = np.linalg.norm(x, axis=1)
    x = x[norms >= ZERO_VECTOR_TOL]
    if len(x) < k:
        raise InsufficientData(f"need at least {k} usable vectors, got {len(x)}")
    x = _canonicalize_signs(x / np.linalg.norm(x, axis=1, keepdims=True))

    rng = np.random.default_rng(seed)
    if init == "kmeans++":
        centroids = _kmeans_pp(x, k, rng)
    else:
        centroids = x[rng.choice(len(x), k, replace=False)].copy()
    assign = None
    history = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        new_assign = _nearest(x, centroids)
        proj = np.einsum("ij,ij->i", x, centroids[new_assign])
        history.append(float(1.0 - np.mean(np.abs(proj))))
        changed = len(x) if assign is None else int(np.count_nonzero(new_assign != assign))
        assign = new_assign
        if changed / len(x) < CHANGE_TOL:
            break
        signs = np.where(proj < 0, -1.0, 1.0)
        signed = signs[:, None] * x
        sums = np.stack(
            [np.bincount(assign, weights=signed[:, d], minlength=k) for d in range(x.shape[1])],
            axis=1,
        )
        lengths = np.linalg.norm(sums, axis=1)
        empty = np.flatnonzero(lengths <= ZERO_VECTOR_TOL)
        if len(empty):
            # Re-seed each empty cluster with the input farthest in angle
            # from its own centroid.
            far = np.argsort(np.abs(proj), kind="stable")[: len(empty)]
            sums[empty] = x[far]
            lengths[empty] = 1.0
            assign = assign.copy()
            assign[far] = empty
        centroids = sums / lengths[:, None]

    return Codebook.from_vectors(
        centroids,
        seed=seed,
        objective_history=tuple(history),
        n_training_vectors=len(x),
    )


def quantize_direction(v, cb):
    """Nearest codeword by absolute cosine: ``(index, signed projection)``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cb.dimension,):
        raise InvalidInput(f"expected a vector of length {cb.dimension}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("vector contains non-finite values")
    if not np.any(v):
        raise DegenerateInput("cannot quantize the direction of a zero vector")
    dots = cb.codewords @ v
    idx = int(np.argmax(np.abs(dots)))
    return idx, float(dots[idx])


@dataclass(frozen=True)
class GainRange:
    min_abs: float
    max_abs: float

    def __post_init__(self):
        lo, hi = float(self.min_abs), float(self.max_abs)
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
            raise InvalidInput(f"invalid gain range [{lo}, {hi}]")

    @classmethod
    def from_gains(cls, gains, rel_floor=1e-9):
        """Range of the nonzero magnitudes, rounded to float32 for the header.

        Magnitudes below ``rel_floor`` times the largest one are numerical
        zeros and are ignored.
        """
        mags = np.abs(np.asarray(gains, dtype=np.float64)).ravel()
        top = mags.max() if mags.size else 0.0
        if not top > 0:
            return cls(1.0, 1.0)
        mags = mags[mags > rel_floor * top]
        lo = max(float(np.float32(mags.min())), 1e-30)
        hi = max(float(np.float32(mags.max())), lo)
        return cls(lo, hi)

    @property
    def log_step(self):
        return (np.log2(self.max_abs) - np.log2(self.min_abs)) / (GAIN_LEVELS - 1)


def quantize_gain(g, rng):
    codes = quantize_gains(np.array([g], dtype=np.float64), rng)
    return int(codes[0])


def dequantize_gain(code, rng):
    return float(dequantize_gains(np.array([code]), rng)[0])


def quantize_gains(g, rng):
    """8-bit codes: sign in bit 7, log2-magnitude level 1..127 below; 0 is zero."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidInput("gain is not finite")
    lmin, step = np.log2(rng.min_abs), rng.log_step
    mag = np.clip(np.abs(g), rng.min_abs, rng.max_abs)
    if step > 0:
        level = 1 + np.floor((np.log2(mag) - lmin) / step + 0.5)
    else:
        level = np.ones_like(mag)
    level = np.clip(level, 1, GAIN_LEVELS).astype(np.int64)
    codes = np.where(g < 0, level | 0x80, level)
    return np.where(g == 0, 0, codes)


def dequantize_gains(codes, rng):
    codes = np.asarray(codes, dtype=np.int64)
    level = codes & 0x7F
    mag = np.exp2(np.log2(rng.min_abs) + (level - 1) * rng.log_step)
    mag = np.where(level == 0, 0.0, mag)
    return np.where(codes & 0x80, -mag, mag)


class FactorQuantizer:
    """Codebook plus gain range, as consumed by the residual decomposition.

    With ``gain_range=None`` gains pass through unquantized and gain codes
    are reported as -1.
    """

    def __init__(self, codebook, gain_range=None):
        self.codebook = codebook
        self.gain_range = gain_range

    @property
    def dimension(self):
        return self.codebook.dimension

    @property
    def codewords(self):
        return self.codebook.codewords

    def quantize_directions(self, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        idx = _nearest(vectors, self.codewords)
        return idx, np.einsum("ij,ij->i", vectors, self.codewords[idx])

    def quantize_gains(self, g):
        if self.gain_range is None:
            return np.full(np.shape(g), -1, dtype=np.int64), np.asarray(g, dtype=np.float64)
        codes = quantize_gains(g, self.gain_range)
        return codes, dequantize_gains(codes, self.gain_range)
