"""Independent brute-force reference implementations, used by the test suite.

Nothing here shares code with the production paths it checks: convolutions
are materialized by direct nested loops, spectral norms are over-budgeted
restarted power iterations on explicit matrices, and pooling coverage is an
exhaustive placement count. Deliberately slow; capped to small layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MaterializeCapError
from .tensor import as_tensor


@dataclass
class OracleConfig:
    entry_cap: int = 4_000_000
    restarts: int = 10
    max_iters: int = 5000
    tol: float = 1e-12
    seed: int = 12345


def dense_spectral_norm(matrix: np.ndarray, cfg: OracleConfig = None) -> float:
    """Spectral norm of an explicit matrix by restarted power iteration.

    Over-budgeted relative to the production settings (10 restarts, 5000
    iterations, 1e-12 tolerance) so that a disagreement implicates the
    production path, not the oracle.
    """
    cfg = cfg or OracleConfig()
    mat = as_tensor(matrix)
    if mat.ndim != 2:
        raise ConfigError(f"dense_spectral_norm expects a 2-D matrix, got shape {mat.shape}")
    if mat.size > cfg.entry_cap:
        raise MaterializeCapError(f"matrix with {mat.size} entries exceeds oracle cap {cfg.entry_cap}")
    n = mat.shape[1]
    best = 0.0
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    for _ in range(cfg.restarts):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        sigma_prev = None
        for _ in range(cfg.max_iters):
            w = mat.T @ (mat @ v)
            sigma = math.sqrt(max(float(v @ w), 0.0))
            nw = np.linalg.norm(w)
            if nw == 0.0:
                sigma = 0.0
                break
            v = w / nw
            if sigma_prev is not None and abs(sigma - sigma_prev) <= cfg.tol * max(sigma, 1e-300):
                break
            sigma_prev = sigma
        best = max(best, sigma)
    return best


def materialize_conv_naive(weights, input_shape, stride=(1, 1), padding=(0, 0)) -> np.ndarray:
    """Dense matrix of a 2D convolution built by direct loops over every tap.

    Independent of the production operator code on purpose.
    """
    w = as_tensor(weights)
    oc, ic, kh, kw = w.shape
    c, h, wd = (int(v) for v in input_shape)
    if c != ic:
        raise ConfigError(f"input shape {input_shape} does not match {ic} weight input channels")
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    m, n = oc * oh * ow, ic * h * wd
    mat = np.zeros((m, n))
    for o in range(oc):
        for i in range(oh):
            for j in range(ow):
                row = (o * oh + i) * ow + j
                for cc in range(ic):
                    for k in range(kh):
                        for l in range(kw):
                            rr = i * sh + k - ph
                            cl = j * sw + l - pw
                            if 0 <= rr < h and 0 <= cl < wd:
                                mat[row, (cc * h + rr) * wd + cl] = w[o, cc, k, l]
    return mat


def pooling_coverage_count(input_shape, kernel, stride, padding=(0, 0)) -> int:
    """Max pooling regions covering any one input cell, by exhaustive placement.

    Requires the grid to contain an interior element (extent >= kernel +
    stride per dimension); smaller grids would undercount at the borders.
    """
    h, w = (int(v) for v in input_shape[-2:])
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    if h < kh + sh or w < kw + sw:
        raise ConfigError(
            f"grid {(h, w)} too small for an interior element with kernel {kernel} and stride {stride}"
        )
    counts = np.zeros((h, w), dtype=int)
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    for i in range(oh):
        for j in range(ow):
            r0, c0 = i * sh - ph, j * sw - pw
            rows = slice(max(r0, 0), min(r0 + kh, h))
            cols = slice(max(c0, 0), min(c0 + kw, w))
            counts[rows, cols] += 1
    return int(counts.max())


def sampled_lipschitz_ratio(fn, x0, eps: float, mask=None, n: int = 1000, seed: int = 0) -> float:
    """Monte-Carlo lower estimate of a local Lipschitz constant.

    Draws n masked perturbations inside the eps-ball and returns the largest
    achieved ratio ||fn(x) - fn(x0)|| / ||x - x0||. Any sound upper bound must
    dominate this value.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    x0 = as_tensor(x0)
    bits = np.ones(x0.size) if mask is None else np.asarray(getattr(mask, "bits", mask), dtype=np.float64).ravel()
    f0 = as_tensor(fn(x0)).ravel()
    rng = np.random.Generator(np.random.PCG64(seed))
    best = 0.0
    for _ in range(n):
        g = rng.standard_normal(x0.size) * bits
        nrm = np.linalg.norm(g)
        if nrm == 0.0:
            continue
        scale = eps * rng.uniform(0.0, 1.0) ** (1.0 / max(x0.size, 1))
        dx = (scale / nrm) * g
        denom = np.linalg.norm(dx)
        if denom == 0.0:
            continue
        fx = as_tensor(fn(x0 + dx.reshape(x0.shape))).ravel()
        best = max(best, float(np.linalg.norm(fx - f0) / denom))
    return best
