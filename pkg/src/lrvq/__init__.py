"""Patch-based image codec built on iterative residual low-rank
reconstruction, with every factor vector drawn from one shared codebook."""

from .codec import CodecConfig, EncodedStream, MacCounter, decode, deserialize, encode, serialize
from .linalg import RankRFactors, SvdResult, reconstruct_factors, svd, truncate
from .lowrank import DecompositionConfig, FactorSequence, combine, decompose_iterative, residual_norms
from .patching import ImageTensor, PatchGrid, assemble_patches, extract_patches
from .vq import Codebook, FactorQuantizer, GainRange, quantize_direction, train_codebook

__version__ = "0.1.0"
