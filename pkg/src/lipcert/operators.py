"""Implicit affine maps for dense and 2D-convolution layers.

The matrix behind a convolution layer is never formed on the production path:
forward application uses strided window products, the transpose scatters back
into the (padded) input grid, and per-row norms are recovered by pushing
batches of standard basis vectors through the transpose. A dense
materialization exists only as a capped oracle for small layers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, MaterializeCapError, ShapeError
from .tensor import as_tensor, ensure_finite

# Materializing beyond this many matrix entries is refused; the dense path is
# an oracle for small layers, not a production route.
MATERIALIZE_CAP = 4_000_000


@dataclass
class AffineOperator:
    """An affine map y = Ax + b applied without materializing A.

    `kind` is "dense" (weights [m, n]) or "conv2d" (weights
    [out_ch, in_ch, kh, kw] with zero padding and dilation fixed at 1).
    Operators are immutable after construction; weight arrays are marked
    read-only so they can be shared across threads.
    """

    kind: str
    input_shape: tuple
    output_shape: tuple
    weights: np.ndarray
    bias: np.ndarray
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    _scatter_idx: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def m(self) -> int:
        return int(np.prod(self.output_shape))


def dense_operator(weights, bias=None) -> AffineOperator:
    w = as_tensor(weights)
    if w.ndim != 2:
        raise ShapeError(f"dense weights must be 2-D, got shape {w.shape}")
    m, n = w.shape
    b = as_tensor(bias) if bias is not None else np.zeros(m)
    if b.shape != (m,):
        raise ShapeError(f"dense bias must have length {m}, got shape {b.shape}")
    ensure_finite(w, "dense weights")
    ensure_finite(b, "dense bias")
    w.setflags(write=False)
    b.setflags(write=False)
    return AffineOperator("dense", (n,), (m,), w, b)


def conv2d_operator(weights, bias, input_shape, stride=(1, 1), padding=(0, 0)) -> AffineOperator:
    w = as_tensor(weights)
    if w.ndim != 4:
        raise ShapeError(f"conv2d weights must be [out_ch, in_ch, kh, kw], got shape {w.shape}")
    oc, ic, kh, kw = w.shape
    if len(input_shape) != 3:
        raise ShapeError(f"conv2d input shape must be (c, h, w), got {tuple(input_shape)}")
    c, h, wd = (int(v) for v in input_shape)
    if c != ic:
        raise ShapeError(f"conv2d expects {ic} input channels, input shape has {c}")
    sh, sw = (int(v) for v in stride)
    ph, pw = (int(v) for v in padding)
    if sh < 1 or sw < 1:
        raise ConfigError(f"conv2d stride must be >= 1, got {(sh, sw)}")
    if ph < 0 or pw < 0:
        raise ConfigError(f"conv2d padding must be >= 0, got {(ph, pw)}")
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    if h + 2 * ph < kh or wd + 2 * pw < kw or oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d kernel {(kh, kw)} does not fit input {(h, wd)} with padding {(ph, pw)}"
        )
    b = as_tensor(bias) if bias is not None else np.zeros(oc)
    if b.shape != (oc,):
        raise ShapeError(f"conv2d bias must have length {oc}, got shape {b.shape}")
    ensure_finite(w, "conv2d weights")
    ensure_finite(b, "conv2d bias")
    w.setflags(write=False)
    b.setflags(write=False)
    return AffineOperator("conv2d", (c, h, wd), (oc, oh, ow), w, b, (sh, sw), (ph, pw))


def _padded_extent(op: AffineOperator):
    _, h, w = op.input_shape
    ph, pw = op.padding
    return h + 2 * ph, w + 2 * pw


def _scatter_index(op: AffineOperator) -> np.ndarray:
    """Flat padded-input index for each (channel, window, tap) of the kernel.

    Laid out [in_ch, oh, ow, kh, kw] to match the transpose einsum output, so
    a single bincount realizes the scatter-add of transposed convolution.
    """
    if op._scatter_idx is None:
        ic = op.input_shape[0]
        _, oh, ow = op.output_shape
        kh, kw = op.weights.shape[2:]
        sh, sw = op.stride
        hp, wp = _padded_extent(op)
        rows = np.arange(oh)[:, None] * sh + np.arange(kh)[None, :]
        cols = np.arange(ow)[:, None] * sw + np.arange(kw)[None, :]
        idx = (
            np.arange(ic)[:, None, None, None, None] * (hp * wp)
            + rows[None, :, None, :, None] * wp
            + cols[None, None, :, None, :]
        )
        op._scatter_idx = np.ascontiguousarray(idx.ravel())
    return op._scatter_idx


def _apply_batch(op: AffineOperator, x: np.ndarray, include_bias: bool) -> np.ndarray:
    """Apply to a batch with leading axis: x [B, *input_shape] -> [B, *output_shape]."""
    if op.kind == "dense":
        out = x.reshape(x.shape[0], -1) @ op.weights.T
        if include_bias:
            out = out + op.bias
        return out
    ph, pw = op.padding
    sh, sw = op.stride
    kh, kw = op.weights.shape[2:]
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.einsum("bcijkl,ockl->boij", win, op.weights, optimize=True)
    if include_bias:
        out = out + op.bias[None, :, None, None]
    return np.ascontiguousarray(out)


def _apply_transpose_batch(op: AffineOperator, v: np.ndarray) -> np.ndarray:
    """Transpose-apply to a batch: v [B, *output_shape] -> [B, *input_shape]."""
    if op.kind == "dense":
        return v.reshape(v.shape[0], -1) @ op.weights
    batch = v.shape[0]
    ic, h, w = op.input_shape
    ph, pw = op.padding
    hp, wp = _padded_extent(op)
    npad = ic * hp * wp
    grads = np.einsum("boij,ockl->bcijkl", v, op.weights, optimize=True)
    idx = _scatter_index(op)
    offsets = (np.arange(batch) * npad)[:, None]
    flat = np.bincount(
        (idx[None, :] + offsets).ravel(),
        weights=grads.reshape(batch, -1).ravel(),
        minlength=batch * npad,
    )
    xpad = flat.reshape(batch, ic, hp, wp)
    return np.ascontiguousarray(xpad[:, :, ph : ph + h, pw : pw + w])


def _check_shape(got, want, what):
    if tuple(got) != tuple(want):
        raise ShapeError(f"{what} shape {tuple(got)} does not match expected {tuple(want)}")


def apply(op: AffineOperator, x: np.ndarray, include_bias: bool = True) -> np.ndarray:
    """Compute Ax + b (or Ax when `include_bias` is off)."""
    x = as_tensor(x)
    _check_shape(x.shape, op.input_shape, "input")
    return _apply_batch(op, x[None], include_bias)[0]


def apply_transpose(op: AffineOperator, v: np.ndarray) -> np.ndarray:
    """Compute A^T v. Never includes the bias."""
    v = as_tensor(v)
    _check_shape(v.shape, op.output_shape, "cotangent")
    return _apply_transpose_batch(op, v[None])[0]


def mask_bits(mask, n: int) -> np.ndarray:
    """Accept a DomainMask or a raw bit vector; return validated float64 bits."""
    bits = np.asarray(getattr(mask, "bits", mask), dtype=np.float64).ravel()
    if bits.shape != (n,):
        raise ShapeError(f"mask has {bits.size} bits, operator input size is {n}")
    if not np.all((bits == 0.0) | (bits == 1.0)):
        raise ConfigError("mask bits must be exactly 0 or 1")
    return bits


def row_norms_masked(op: AffineOperator, mask, batch_size: int = 256, threads: int = 1) -> np.ndarray:
    """Per-row norms of the masked matrix: element i is ||diag(mask) @ a_i||_2.

    Rows are recovered by pushing batches of standard basis vectors through
    the transposed operator; iteration is over output indices in row-major
    order, and batches are independent so the result does not depend on
    `batch_size` or on the parallel schedule.
    """
    if batch_size <= 0:
        raise ConfigError("batch_size must be a positive integer")
    bits = mask_bits(mask, op.n)
    m = op.m
    out = np.empty(m)

    def run(start: int) -> None:
        stop = min(start + batch_size, m)
        basis = np.zeros((stop - start, m))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        rows = _apply_transpose_batch(op, basis.reshape(-1, *op.output_shape))
        rows = rows.reshape(stop - start, -1) * bits
        out[start:stop] = np.linalg.norm(rows, axis=1)

    starts = range(0, m, batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    else:
        for start in starts:
            run(start)
    return out


def materialize(op: AffineOperator, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Explicit [m, n] matrix whose matvec equals apply(op, x, include_bias=False).

    Refuses above `cap` entries: this is a small-layer oracle.
    """
    if op.m * op.n > cap:
        raise MaterializeCapError(
            f"materializing {op.m}x{op.n} = {op.m * op.n} entries exceeds cap {cap}"
        )
    if op.kind == "dense":
        return op.weights.copy()
    mat = np.empty((op.m, op.n))
    for start in range(0, op.n, 256):
        stop = min(start + 256, op.n)
        basis = np.zeros((stop - start, op.n))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        cols = _apply_batch(op, basis.reshape(-1, *op.input_shape), include_bias=False)
        mat[:, start:stop] = cols.reshape(stop - start, -1).T
    return mat
