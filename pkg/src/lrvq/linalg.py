"""Small dense linear algebra: one-sided Jacobi SVD, rank truncation, helpers.

Matrices are plain 2-D ``float64`` numpy arrays. The SVD kernel is batched
over a leading axis so the codec can decompose every patch of an image in
one call; the single-matrix entry point :func:`svd` is a batch of one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidRank, NumericalFailure

MAX_SWEEPS = 60
ORTHO_TOL = 1e-12
# Columns whose norm falls below this fraction of ||A||_F are numerically
# null: they are never rotated and their left vectors come from basis
# completion instead of normalization.
NULL_TOL = 1e-13


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    @property
    def shape(self):
        return self.u.shape[-1], self.vt.shape[-1]


@dataclass(frozen=True)
class RankRFactors:
    """Rank-R factors with singular values folded into per-component gains.

    ``left`` is m x R with unit columns, ``right_t`` is R x n with unit rows.
    """

    left: np.ndarray
    right_t: np.ndarray
    gains: np.ndarray

    @property
    def rank(self):
        return len(self.gains)


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite values")
    return a


def matmul(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InvalidInput(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def subtract(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape != b.shape:
        raise InvalidInput(f"cannot subtract {b.shape} from {a.shape}")
    return a - b


def frobenius_norm(a):
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def _jacobi_tall(a):
    """Orthogonalize the columns of each (m x n, m >= n) matrix in the batch.

    Returns ``(w, v)`` with ``w = a @ v``, ``v`` orthogonal and the columns of
    ``w`` mutually orthogonal.
    """
    w = a.copy()
    batch, _, n = w.shape
    v = np.broadcast_to(np.eye(n), (batch, n, n)).copy()
    fro2 = np.einsum("bij,bij->b", a, a)
    null2 = (NULL_TOL**2) * fro2
    active = fro2 > 0
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    worst = np.zeros(batch)

    for _ in range(MAX_SWEEPS):
        if not active.any() or not pairs:
            return w, v
        rotated = np.zeros(batch, dtype=bool)
        worst[:] = 0.0
        for p, q in pairs:
            wp, wq = w[:, :, p], w[:, :, q]
            alpha = np.einsum("bi,bi->b", wp, wp)
            beta = np.einsum("bi,bi->b", wq, wq)
            gamma = np.einsum("bi,bi->b", wp, wq)
            scale = np.sqrt(alpha * beta)
            live = active & (alpha > null2) & (beta > null2)
            cosine = np.where(live, np.abs(gamma) / np.where(live, scale, 1.0), 0.0)
            np.maximum(worst, cosine, out=worst)
            mask = cosine > ORTHO_TOL
            if not mask.any():
                continue
            rotated |= mask
            safe_gamma = np.where(mask, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * safe_gamma)
            sign = np.where(zeta >= 0, 1.0, -1.0)
            t = sign / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(mask, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(mask, c * t, 0.0)
            c_, s_ = c[:, None], s[:, None]
            new_p = c_ * wp - s_ * wq
            new_q = s_ * wp + c_ * wq
            w[:, :, p], w[:, :, q] = new_p, new_q
            vp, vq = v[:, :, p], v[:, :, q]
            new_vp = c_ * vp - s_ * vq
            new_vq = s_ * vp + c_ * vq
            v[:, :, p], v[:, :, q] = new_vp, new_vq
        active &= rotated
    if active.any():
        raise NumericalFailure(
            f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps "
            f"(max normalized off-diagonal {worst[active].max():.3e})",
            off_diagonal=float(worst[active].max()),
        )
    return w, v


def _complete_basis(u, valid):
    """Fill columns of ``u`` where ``valid`` is False with an orthonormal completion."""
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if valid[j]]
    for j in range(u.shape[1]):
        if valid[j]:
            continue
        q = np.array(basis).T if basis else np.zeros((m, 0))
        candidates = np.eye(m)
        for _ in range(2):
            candidates = candidates - q @ (q.T @ candidates)
        norms = np.sqrt(np.sum(candidates * candidates, axis=0))
        best = int(np.argmax(norms))
        col = candidates[:, best] / norms[best]
        if basis:
            col = col - q @ (q.T @ col)
            col /= np.linalg.norm(col)
        u[:, j] = col
        basis.append(col)
    return u


def _sign_flips(cols):
    """-1 for every column of a (B, m, k) stack whose largest-magnitude entry is negative."""
    k = np.argmax(np.abs(cols), axis=1)
    lead = np.take_along_axis(cols, k[:, None, :], axis=1)[:, 0, :]
    return np.where(lead < 0, -1.0, 1.0)


def _svd_tall(a):
    batch, m, n = a.shape
    w, v = _jacobi_tall(a)
    sigma = np.sqrt(np.einsum("bij,bij->bj", w, w))
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    w = np.take_along_axis(w, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    fro = np.sqrt(np.einsum("bij,bij->b", a, a))
    u = np.zeros((batch, m, m))
    valid = np.zeros((batch, m), dtype=bool)
    valid[:, :n] = sigma > NULL_TOL * fro[:, None]
    safe = np.where(valid[:, :n], sigma, 1.0)
    u[:, :, :n] = np.where(valid[:, None, :n], w / safe[:, None, :], 0.0)
    sigma = np.where(valid[:, :n], sigma, 0.0)
    for b in np.flatnonzero(~valid.all(axis=1)):
        _complete_basis(u[b], valid[b])
    # Largest-magnitude entry of every left vector is made positive; the
    # paired right vector flips with it.
    flip = _sign_flips(u)
    u *= flip[:, None, :]
    v *= flip[:, None, :n]
    return u, sigma, v


def svd_batch(a):
    """SVD of a stack of equally shaped matrices, shape (B, m, n).

    Returns ``(u, s, vt)`` with shapes (B, m, m), (B, min(m, n)), (B, n, n).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] < 1 or a.shape[2] < 1:
        raise InvalidInput(f"expected a (B, m, n) stack, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix contains non-finite values")
    m, n = a.shape[1:]
    if m >= n:
        u, s, v = _svd_tall(a)
        return u, s, np.swapaxes(v, 1, 2)
    # Wide input: decompose the transpose, then re-apply the sign rule to
    # the new left vectors.
    ub, s, vb = _svd_tall(np.swapaxes(a, 1, 2))
    u, v = vb, ub
    flip = _sign_flips(u)
    u *= flip[:, None, :]
    v[:, :, :m] *= flip[:, None, :]
    v[:, :, m:] *= _sign_flips(v[:, :, m:])[:, None, :]
    return u, s, np.swapaxes(v, 1, 2)


def svd(a):
    """Full SVD ``a = u @ diag(s) @ vt`` via one-sided Jacobi rotations.

    Singular values are sorted non-increasing (exact ties keep column order)
    and each left singular vector has its largest-magnitude entry positive.
    """
    a = as_matrix(a)
    u, s, vt = svd_batch(a[None])
    return SvdResult(u[0], s[0], vt[0])


def truncate(result, r):
    m, n = result.shape
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= min(m, n):
        raise InvalidRank(f"rank must be in [1, {min(m, n)}], got {r!r}")
    return RankRFactors(
        left=result.u[:, :r].copy(),
        right_t=result.vt[:r, :].copy(),
        gains=result.singular_values[:r].copy(),
    )


def reconstruct_factors(f):
    """Sum of ``gain_j * outer(left_j, right_j)`` over the components."""
    left = np.asarray(f.left, dtype=np.float64)
    right_t = np.asarray(f.right_t, dtype=np.float64)
    gains = np.asarray(f.gains, dtype=np.float64)
    if left.ndim != 2 or right_t.ndim != 2 or gains.ndim != 1:
        raise InvalidInput("factors must be 2-D left/right and 1-D gains")
    if not (left.shape[1] == right_t.shape[0] == gains.shape[0]):
        raise InvalidInput(
            f"inconsistent factor shapes {left.shape}, {right_t.shape}, {gains.shape}"
        )
    return (left * gains) @ right_t
