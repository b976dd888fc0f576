"""Per-layer Lipschitz constants and bounds.

The layer-level results this module computes, all with respect to an input
ball of radius eps restricted by a binary domain mask:

* the exact local Lipschitz constant of a scalar ReLU over an interval,
* the elementwise output upper bound ybar of an affine layer,
* the certified bound ||R A D|| for an affine+ReLU layer, where R is the
  diagonal matrix of per-coordinate ReLU slopes and D the diagonal mask,
  estimated by power iteration on v -> D A^T R^2 A D v,
* the max-pooling constant sqrt(n_max) with n_max = ceil(k/s) per dimension,
* the next layer's domain mask.

Power iteration approaches the spectral norm from below, so an unconverged
run is not a certified upper bound; such runs are flagged and inflated by a
configurable safety factor rather than silently reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .errors import ConfigError, InvalidInputError
from .network import MaxPool2d, pool_windows
from .operators import AffineOperator
from .tensor import relu


@dataclass
class DomainMask:
    """Diagonal binary domain restriction, stored as a flat 0/1 vector.

    Bit i is 0 exactly when coordinate i is known to be zero for every input
    in the current layer's input set; the all-ones mask restricts nothing.
    """

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.float64).ravel()
        if not np.all((self.bits == 0.0) | (self.bits == 1.0)):
            raise ConfigError("mask bits must be exactly 0 or 1")

    @classmethod
    def ones(cls, n: int) -> "DomainMask":
        return cls(np.ones(n))

    @property
    def size(self) -> int:
        return self.bits.size

    @property
    def active_fraction(self) -> float:
        return float(self.bits.mean())

    def is_identity(self) -> bool:
        return bool(np.all(self.bits == 1.0))


@dataclass
class PowerIterConfig:
    max_iters: int = 500
    tol: float = 1e-8  # relative change of successive Rayleigh-quotient roots
    seed: int = 0
    safety_factor: float = 1.05  # inflation applied to unconverged estimates


@dataclass
class PowerIterReport:
    iterations: int
    residual: float
    converged: bool


@dataclass
class AffineReluBoundArtifacts:
    ybar: np.ndarray
    r: np.ndarray
    lipschitz_ub: float
    next_mask: DomainMask
    power_iter: PowerIterReport


@dataclass
class MaxPoolBound:
    n_max: int
    lipschitz: float
    next_mask: DomainMask


def relu_local_lipschitz(y0: float, ybar: float, degenerate: bool = False) -> float:
    """Local Lipschitz constant of the scalar ReLU over an interval.

    The interval is centered at the nominal input y0 with largest element
    ybar; pass `degenerate=True` when the interval is the single point {y0},
    in which case the constant is 0. Otherwise the constant is
    (relu(ybar) - relu(y0)) / (ybar - y0), which lands in [0, 1].
    """
    if degenerate:
        return 0.0
    if not (math.isfinite(y0) and math.isfinite(ybar)):
        raise InvalidInputError("relu_local_lipschitz requires finite endpoints")
    if ybar == y0:
        raise InvalidInputError(
            "interval collapsed to a point; pass degenerate=True for the single-point case"
        )
    if ybar < y0:
        raise InvalidInputError(f"ybar ({ybar}) must be >= y0 ({y0})")
    return (max(ybar, 0.0) - max(y0, 0.0)) / (ybar - y0)


def compute_ybar(op: AffineOperator, y0: np.ndarray, mask, eps: float, batch_size: int = 256, threads: int = 1) -> np.ndarray:
    """Elementwise upper bound on the affine output over the masked eps-ball.

    Element i is eps * ||diag(mask) a_i|| + y0_i, maximized by the input
    perturbation aligned with the masked row. Returns a flat vector.
    """
    if eps < 0:
        raise ConfigError(f"eps must be >= 0, got {eps}")
    norms = operators.row_norms_masked(op, mask, batch_size=batch_size, threads=threads)
    return eps * norms + np.asarray(y0, dtype=np.float64).ravel()


def _rad_matvec(op: AffineOperator, r_sq: np.ndarray, bits: np.ndarray, v: np.ndarray) -> np.ndarray:
    """One application of D A^T R^2 A D to a flat vector."""
    x = (bits * v).reshape(op.input_shape)
    y = operators.apply(op, x, include_bias=False).ravel()
    back = operators.apply_transpose(op, (r_sq * y).reshape(op.output_shape)).ravel()
    return bits * back


def masked_spectral_norm(op: AffineOperator, r: np.ndarray, mask, cfg: PowerIterConfig = None):
    """Spectral norm of diag(r) A diag(mask) by power iteration on the implicit Gram map.

    Returns (estimate, PowerIterReport). The start vector is a seeded gaussian
    restricted by the mask. On non-convergence the raw (from-below) estimate is
    returned unmodified here; callers apply the safety factor.
    """
    cfg = cfg or PowerIterConfig()
    bits = operators.mask_bits(mask, op.n)
    r_sq = np.asarray(r, dtype=np.float64).ravel() ** 2
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    v = rng.standard_normal(op.n) * bits
    nv = np.linalg.norm(v)
    if nv == 0.0 or not r_sq.any():
        return 0.0, PowerIterReport(iterations=0, residual=0.0, converged=True)
    v /= nv
    sigma_prev = None
    residual = np.inf
    for k in range(1, cfg.max_iters + 1):
        w = _rad_matvec(op, r_sq, bits, v)
        lam = float(v @ w)  # Rayleigh quotient; v is unit-norm
        sigma = math.sqrt(max(lam, 0.0))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, PowerIterReport(iterations=k, residual=0.0, converged=True)
        v = w / nw
        if sigma_prev is not None:
            residual = abs(sigma - sigma_prev) / max(sigma, np.finfo(float).tiny)
            if residual < cfg.tol:
                return sigma, PowerIterReport(iterations=k, residual=residual, converged=True)
        sigma_prev = sigma
    return sigma_prev, PowerIterReport(iterations=cfg.max_iters, residual=float(residual), converged=False)


def affine_relu_bound(
    op: AffineOperator,
    x0: np.ndarray,
    mask,
    eps: float,
    pi_cfg: PowerIterConfig = None,
    batch_size: int = 256,
    threads: int = 1,
) -> AffineReluBoundArtifacts:
    """Certified local Lipschitz bound ||R A D|| for one affine+ReLU layer.

    Computes the nominal output y0 = A x0 + b, the output bound ybar, the
    diagonal ReLU slopes r (0 for coordinates whose output interval is the
    single point {y0_i}, detected exactly by eps * ||a_i D|| == 0), the
    spectral-norm bound, and the mask for the next layer (bit i cleared when
    ybar_i <= 0, the boundary counting as inactive).
    """
    if eps < 0:
        raise ConfigError(f"eps must be >= 0, got {eps}")
    pi_cfg = pi_cfg or PowerIterConfig()
    y0 = operators.apply(op, x0, include_bias=True).ravel()
    norms = operators.row_norms_masked(op, mask, batch_size=batch_size, threads=threads)
    span = eps * norms
    ybar = y0 + span
    degenerate = span == 0.0
    denom = np.where(degenerate, 1.0, span)
    # the true slope lies in [0, 1]; clipping strips float wobble from y0 + span - y0
    r = np.clip(np.where(degenerate, 0.0, (relu(ybar) - relu(y0)) / denom), 0.0, 1.0)
    sigma, report = masked_spectral_norm(op, r, mask, pi_cfg)
    if not report.converged:
        sigma *= pi_cfg.safety_factor
    next_mask = DomainMask((ybar > 0.0).astype(np.float64))
    return AffineReluBoundArtifacts(ybar=ybar, r=r, lipschitz_ub=sigma, next_mask=next_mask, power_iter=report)


def pool_coverage_per_dim(kernel: int, stride: int) -> int:
    """Max placements of a 1D kernel covering one input element: ceil(k/s)."""
    return -(-int(kernel) // int(stride))


def maxpool_bound(pool: MaxPool2d, mask) -> MaxPoolBound:
    """Global Lipschitz constant of a max-pooling layer and the propagated mask.

    n_max counts the most pooling regions any single input can belong to;
    overlap (stride < kernel) is what pushes the constant above 1. Padding
    does not change the count. The next mask is the window maximum of the
    incoming bits: a pooled output is known-zero only when every real input
    in its region is known-zero.
    """
    n_max = pool_coverage_per_dim(pool.kernel[0], pool.stride[0]) * pool_coverage_per_dim(
        pool.kernel[1], pool.stride[1]
    )
    bits = operators.mask_bits(mask, int(np.prod(pool.input_shape)))
    grid = bits.reshape(pool.input_shape)
    win = pool_windows(grid, pool.kernel, pool.stride, pool.padding, 0.0)
    next_bits = win.max(axis=(-2, -1)).ravel()
    return MaxPoolBound(n_max=n_max, lipschitz=math.sqrt(n_max), next_mask=DomainMask(next_bits))


def propagate_mask(layer, artifacts) -> DomainMask:
    """Domain mask for the layer after `layer`.

    `artifacts` is the matching bound output: AffineReluBoundArtifacts (or a
    raw ybar vector) for affine+ReLU layers, the incoming DomainMask for
    pooling/flatten/identity layers, and ignored for bare affine layers,
    whose output carries no known zeros (identity restriction).
    """
    if layer.kind == "affine_relu":
        ybar = getattr(artifacts, "ybar", artifacts)
        return DomainMask((np.asarray(ybar, dtype=np.float64).ravel() > 0.0).astype(np.float64))
    if layer.kind == "affine":
        return DomainMask.ones(int(np.prod(layer.output_shape)))
    if layer.kind == "maxpool2d":
        return maxpool_bound(layer, artifacts).next_mask
    if layer.kind in ("flatten", "identity"):
        bits = operators.mask_bits(artifacts, int(np.prod(layer.input_shape)))
        return DomainMask(bits.copy())
    raise ConfigError(f"unknown layer kind {layer.kind!r}")
