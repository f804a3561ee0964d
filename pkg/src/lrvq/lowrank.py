"""Iterative residual low-rank decomposition and the reconstruction combiner.

Each iteration takes the SVD of the current residual, keeps the top ``rank``
components and subtracts them before the next iteration. With a quantizer,
the components are snapped to codebook directions; in closed-loop mode the
residual is then updated with the quantized term so later iterations see
exactly what a decoder would reproduce.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidInput, InvalidRank
from .linalg import RankRFactors, as_matrix, reconstruct_factors, svd_batch

COMBINE_MODES = ("sum", "average")
LOOP_MODES = ("open", "closed")


@dataclass(frozen=True)
class DecompositionConfig:
    rank: int
    iterations: int
    combine_mode: str = "sum"
    loop_mode: str = "closed"

    def __post_init__(self):
        if int(self.rank) < 1:
            raise InvalidRank(f"rank must be >= 1, got {self.rank}")
        if int(self.iterations) < 1:
            raise InvalidConfig(f"iterations must be >= 1, got {self.iterations}")
        if self.combine_mode not in COMBINE_MODES:
            raise InvalidConfig(f"unknown combine mode {self.combine_mode!r}")
        if self.loop_mode not in LOOP_MODES:
            raise InvalidConfig(f"unknown loop mode {self.loop_mode!r}")


@dataclass
class FactorSequence:
    per_iteration: list
    # (I, R, 3) array of (left index, right index, gain code) when quantized.
    codes: np.ndarray = None

    def __len__(self):
        return len(self.per_iteration)


@dataclass
class BatchDecomposition:
    """Decomposition of a stack of B equally shaped matrices.

    Arrays are indexed (batch, iteration, component, ...).
    """

    left: np.ndarray
    right: np.ndarray
    gains: np.ndarray
    residual_norms: np.ndarray
    residual: np.ndarray
    codes: np.ndarray = field(default=None)

    def factors(self, b):
        seq = [
            RankRFactors(self.left[b, i].T.copy(), self.right[b, i].copy(), self.gains[b, i].copy())
            for i in range(self.left.shape[1])
        ]
        codes = None if self.codes is None else self.codes[b].copy()
        return FactorSequence(seq, codes)


def _outer_terms(gains, left, right):
    return np.einsum("b,bi,bj->bij", gains, left, right)


def _fro(stack):
    return np.sqrt(np.einsum("bij,bij->b", stack, stack))


def decompose_batch(t0, cfg, quantizer=None):
    """Run the residual decomposition on every matrix of a (B, m, n) stack."""
    t0 = np.asarray(t0, dtype=np.float64)
    if t0.ndim != 3:
        raise InvalidInput(f"expected a (B, m, n) stack, got shape {t0.shape}")
    batch, m, n = t0.shape
    rank, iters = int(cfg.rank), int(cfg.iterations)
    if rank > min(m, n):
        raise InvalidRank(f"rank {rank} exceeds min(m, n) = {min(m, n)}")
    if quantizer is not None and not (quantizer.dimension == m == n):
        raise InvalidInput(
            f"quantizer dimension {quantizer.dimension} does not match {m}x{n} matrices"
        )

    left = np.zeros((batch, iters, rank, m))
    right = np.zeros((batch, iters, rank, n))
    gains = np.zeros((batch, iters, rank))
    codes = None if quantizer is None else np.zeros((batch, iters, rank, 3), dtype=np.int64)
    norms = np.zeros((batch, iters + 1))
    residual = t0.copy()
    norms[:, 0] = _fro(residual)

    for i in range(iters):
        u, s, vt = svd_batch(residual)
        if quantizer is None:
            left[:, i] = np.swapaxes(u[:, :, :rank], 1, 2)
            right[:, i] = vt[:, :rank, :]
            gains[:, i] = s[:, :rank]
            term = np.einsum("bj,bjm,bjn->bmn", gains[:, i], left[:, i], right[:, i])
            residual = residual - term
        else:
            exact_residual = residual
            live = residual.copy()
            for j in range(rank):
                li, lp = quantizer.quantize_directions(u[:, :, j])
                ri, rp = quantizer.quantize_directions(vt[:, j, :])
                cl, cr = quantizer.codewords[li], quantizer.codewords[ri]
                if cfg.loop_mode == "closed":
                    # Least-squares gain of the quantized rank-1 term against
                    # the live residual.
                    g = np.einsum("bi,bij,bj->b", cl, live, cr)
                else:
                    g = s[:, j] * lp * rp
                gcode, gq = quantizer.quantize_gains(g)
                if cfg.loop_mode == "closed":
                    # Dropping the term beats a quantized gain that would
                    # grow the residual.
                    worse = (gq - g) ** 2 > g**2
                    gcode = np.where(worse, 0, gcode)
                    gq = np.where(worse, 0.0, gq)
                    live -= _outer_terms(gq, cl, cr)
                left[:, i, j], right[:, i, j], gains[:, i, j] = cl, cr, gq
                codes[:, i, j] = np.stack([li, ri, gcode], axis=1)
            if cfg.loop_mode == "closed":
                residual = live
            else:
                term = np.einsum(
                    "bj,bmj,bjn->bmn", s[:, :rank], u[:, :, :rank], vt[:, :rank, :]
                )
                residual = exact_residual - term
        norms[:, i + 1] = _fro(residual)

    return BatchDecomposition(left, right, gains, norms, residual, codes)


def decompose_iterative(t0, cfg, quantizer=None):
    t0 = as_matrix(t0, "t0")
    return decompose_batch(t0[None], cfg, quantizer).factors(0)


def residual_norms(t0, cfg, quantizer=None):
    """Frobenius norms of T_0 .. T_I from a single decomposition pass."""
    t0 = as_matrix(t0, "t0")
    return decompose_batch(t0[None], cfg, quantizer).residual_norms[0].tolist()


def combine(seq, mode="sum"):
    """Sum the per-iteration reconstructions; ``average`` divides by I."""
    terms = seq.per_iteration if isinstance(seq, FactorSequence) else list(seq)
    if not terms:
        raise InvalidInput("cannot combine an empty factor sequence")
    if mode not in COMBINE_MODES:
        raise InvalidConfig(f"unknown combine mode {mode!r}")
    total = reconstruct_factors(terms[0])
    for f in terms[1:]:
        total = total + reconstruct_factors(f)
    if mode == "average":
        total = total / len(terms)
    return total
