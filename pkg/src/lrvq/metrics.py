"""Quality and cost accounting: MSE, PSNR, p-norm error, bpp, decoder MACs."""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidInput, ShapeMismatch


@dataclass(frozen=True)
class RateDistortionPoint:
    patch_size: int
    rank: int
    iterations: int
    codebook_size: int
    combine_mode: str
    loop_mode: str
    image: str
    bpp: float
    mse: float
    psnr: float
    pnorm2: float
    decoder_macs: int


@dataclass(frozen=True)
class ConvLayerSpec:
    out_height: int
    out_width: int
    in_channels: int
    out_channels: int
    kernel_size: int

    def __post_init__(self):
        for name in ("out_height", "out_width", "in_channels", "out_channels", "kernel_size"):
            if int(getattr(self, name)) < 1:
                raise InvalidInput(f"{name} must be >= 1")

    @property
    def macs(self):
        return (
            self.out_height
            * self.out_width
            * self.out_channels
            * self.in_channels
            * self.kernel_size**2
        )


def _pair(a, b):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidInput("cannot compare empty tensors")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b):
    """PSNR in dB for unit peak; identical inputs give ``inf``."""
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def pnorm_error(a, b, p=2):
    """``(1/N) * (sum |a - b|^p)^(1/p)``: the norm is divided by N after the root."""
    if not p >= 1:
        raise InvalidInput(f"p must be >= 1, got {p}")
    a, b = _pair(a, b)
    d = np.abs(a - b)
    return float(np.sum(d**p) ** (1.0 / p) / d.size)


def lowrank_decoder_macs(patch_size, rank, iterations, grid_rows, grid_cols, channels):
    """Per component: P multiplies to scale the left direction plus P^2 for the outer product."""
    p = int(patch_size)
    return int(grid_rows) * int(grid_cols) * int(channels) * int(iterations) * int(rank) * (p * p + p)


def conv_decoder_macs(layers):
    layers = list(layers)
    if not layers:
        raise InvalidInput("conv decoder needs at least one layer")
    return sum(layer.macs for layer in layers)


def compute_bpp(stream_bytes, original_height, original_width):
    if int(original_height) < 1 or int(original_width) < 1:
        raise InvalidInput("image area must be positive")
    return float(Fraction(8 * int(stream_bytes), int(original_height) * int(original_width)))
