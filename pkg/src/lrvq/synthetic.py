"""Seeded synthetic images: sums of 2-D sinusoids plus a linear gradient.

Images come back already quantized to 8 bits so that in-memory corpora and
their PGM/PPM files are interchangeable.
"""

import numpy as np

from .patching import ImageTensor

TRAIN_SEED_BASE = 0
EVAL_SEED_BASE = 10_000


def synth_image(seed, size=64, channels=1, n_waves=3):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    out = np.empty((channels, size, size))
    for c in range(channels):
        img = rng.uniform(-1.0, 1.0) * x + rng.uniform(-1.0, 1.0) * y
        for _ in range(n_waves):
            fx, fy = rng.uniform(0.0, 4.0, size=2)
            phase = rng.uniform(0.0, 2 * np.pi)
            img = img + rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * (fx * x + fy * y) + phase)
        lo, hi = img.min(), img.max()
        img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
        out[c] = np.floor(img * 255.0 + 0.5) / 255.0
    return ImageTensor(out)


def synth_corpus(count, seed_base=TRAIN_SEED_BASE, size=64, channels=1):
    return [synth_image(seed_base + i, size, channels) for i in range(count)]
