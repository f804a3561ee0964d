"""Straight-line reference encoder used to pin the desk-scale MSE ceiling.

Deliberately shares no algorithmic code with the package: LAPACK SVD via
numpy.linalg, its own spherical k-means++ with Python's ``random`` for
seeding, exhaustive nearest-codeword loops, and its own 8-bit log gain grid.
Only the synthetic corpus generator is imported, since it defines the data.

Run:  python scripts/reference_pipeline.py
"""

import math
import random

import numpy as np

from lrvq.synthetic import EVAL_SEED_BASE, synth_corpus

P, R, I, K = 8, 2, 2, 256
N_TRAIN, N_EVAL = 32, 4
SEEDS = (0, 1, 2)


def patches_of(img):
    h, w = img.shape
    return [img[r : r + P, c : c + P] for r in range(0, h, P) for c in range(0, w, P)]


def harvest(images):
    vecs = []
    for img in images:
        for t in patches_of(img):
            t = t.copy()
            for _ in range(I):
                u, s, vt = np.linalg.svd(t)
                for j in range(R):
                    if s[j] > 1e-9:
                        vecs.append(u[:, j])
                        vecs.append(vt[j])
                t = t - (u[:, :R] * s[:R]) @ vt[:R]
    return np.array(vecs)


def spherical_kmeans(x, k, seed, max_iters=100, change_tol=1e-3):
    """k-means++ seeding on 1 - cos^2, then Lloyd steps on |cos|."""
    rnd = random.Random(seed)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    chosen = [rnd.randrange(len(x))]
    best = (x @ x[chosen[0]]) ** 2
    for _ in range(1, k):
        d2 = np.clip(1.0 - best, 0.0, None)
        target = rnd.random() * d2.sum()
        idx = min(int(np.searchsorted(np.cumsum(d2), target, side="right")), len(x) - 1)
        chosen.append(idx)
        best = np.maximum(best, (x @ x[idx]) ** 2)
    c = x[chosen].copy()
    prev = None
    for _ in range(max_iters):
        d = x @ c.T
        a = np.argmax(np.abs(d), axis=1)
        if prev is not None and np.mean(a != prev) < change_tol:
            break
        prev = a
        sgn = np.where(d[np.arange(len(x)), a] < 0, -1.0, 1.0)
        for j in range(k):
            members = a == j
            if members.any():
                m = (sgn[members, None] * x[members]).sum(axis=0)
                n = np.linalg.norm(m)
                if n > 0:
                    c[j] = m / n
    return c


def nearest(v, codebook):
    best, best_val = 0, -1.0
    for j, cw in enumerate(codebook):
        val = abs(float(cw @ v))
        if val > best_val:
            best, best_val = j, val
    return best


def gain_grid(lo, hi):
    step = (math.log2(hi) - math.log2(lo)) / 126
    return [2 ** (math.log2(lo) + k * step) for k in range(127)]


def quantize_gain(g, grid):
    if g == 0:
        return 0.0
    lg = math.log2(min(max(abs(g), grid[0]), grid[-1]))
    mag = min(grid, key=lambda q: abs(math.log2(q) - lg))
    return math.copysign(mag, g)


def encode_decode(img, codebook):
    h, w = img.shape
    exact_gains = []
    for t in patches_of(img):
        t = t.copy()
        for _ in range(I):
            u, s, vt = np.linalg.svd(t)
            exact_gains.extend(s[:R])
            t = t - (u[:, :R] * s[:R]) @ vt[:R]
    top = max(exact_gains)
    nz = [g for g in exact_gains if g > 1e-9 * top]
    grid = gain_grid(float(np.float32(min(nz))), float(np.float32(max(nz))))

    out = np.zeros_like(img)
    for idx, patch in enumerate(patches_of(img)):
        t = patch.copy()
        for _ in range(I):
            u, s, vt = np.linalg.svd(t)
            for j in range(R):
                cl = codebook[nearest(u[:, j], codebook)]
                cr = codebook[nearest(vt[j], codebook)]
                g = float(cl @ t @ cr)
                gq = quantize_gain(g, grid)
                if (gq - g) ** 2 > g * g:
                    gq = 0.0
                t = t - gq * np.outer(cl, cr)
        r, c = divmod(idx, w // P)
        out[r * P : (r + 1) * P, c * P : (c + 1) * P] = patch - t
    return np.clip(out, 0.0, 1.0)


def main():
    """C_ceiling is the worst per-image MSE over all reference seeds."""
    train = [im.data[0] for im in synth_corpus(N_TRAIN)]
    evals = [im.data[0] for im in synth_corpus(N_EVAL, EVAL_SEED_BASE)]
    x = harvest(train)
    worst = 0.0
    for seed in SEEDS:
        codebook = spherical_kmeans(x, K, seed)
        mses = [float(np.mean((encode_decode(img, codebook) - img) ** 2)) for img in evals]
        worst = max(worst, max(mses))
        print(f"seed {seed}: per-image MSE", " ".join(f"{m:.6e}" for m in mses))
    print(f"vectors {len(x)}  C_ceiling {worst:.6e}")


if __name__ == "__main__":
    main()
