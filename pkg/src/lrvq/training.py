"""Harvest factor directions from a corpus and fit the shared codebook."""

import numpy as np

from .errors import InsufficientData
from .lowrank import DecompositionConfig, decompose_batch
from .patching import extract_patches
from .vq import train_codebook


def harvest_directions(images, patch_size, rank, iterations):
    """Gain-scaled left and right factor vectors from the exact decomposition.

    Scaling by the gain lets training drop components that are numerically
    zero; direction is all the codebook keeps.
    """
    if not images:
        raise InsufficientData("corpus contains no images")
    p = int(patch_size)
    stacks = [
        extract_patches(img, p).patches.reshape(-1, p, p) for img in images
    ]
    dec = decompose_batch(np.concatenate(stacks), DecompositionConfig(rank, iterations))
    scaled_left = dec.gains[..., None] * dec.left
    scaled_right = dec.gains[..., None] * dec.right
    return np.concatenate([scaled_left.reshape(-1, p), scaled_right.reshape(-1, p)])


def train_from_corpus(images, patch_size, rank, iterations, codebook_size, seed=0, init="kmeans++"):
    vectors = harvest_directions(images, patch_size, rank, iterations)
    return train_codebook(vectors, codebook_size, seed, init)
