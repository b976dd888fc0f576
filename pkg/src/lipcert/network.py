"""Typed network description, validation, forward passes, and the model format.

A network is an ordered chain of layers: affine+ReLU, bare affine, 2D max
pooling, flatten, or identity. Shapes are resolved and checked once at
construction; downstream code can assume a well-formed chain.

On-disk format (version 1): a `model.json` manifest next to raw weight blobs.
Blobs are little-endian float32, row-major, no header; they are widened to
float64 on load. Nominal inputs load either from a blob plus a `<file>.json`
sidecar giving the shape, or from 8-bit PNG/PGM images scaled to [0, 1].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import operators
from .errors import ModelFormatError, ShapeError
from .operators import AffineOperator, conv2d_operator, dense_operator
from .tensor import as_tensor, ensure_finite, relu

FORMAT_VERSION = 1


@dataclass
class AffineRelu:
    op: AffineOperator
    kind: str = field(default="affine_relu", init=False)

    @property
    def input_shape(self):
        return self.op.input_shape

    @property
    def output_shape(self):
        return self.op.output_shape


@dataclass
class Affine:
    op: AffineOperator
    kind: str = field(default="affine", init=False)

    @property
    def input_shape(self):
        return self.op.input_shape

    @property
    def output_shape(self):
        return self.op.output_shape


@dataclass
class MaxPool2d:
    kernel: tuple
    stride: tuple
    padding: tuple = (0, 0)
    input_shape: tuple = None
    output_shape: tuple = None
    kind: str = field(default="maxpool2d", init=False)

    def resolve(self, input_shape) -> None:
        if len(input_shape) != 3:
            raise ShapeError(f"maxpool2d input shape must be (c, h, w), got {tuple(input_shape)}")
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        if kh < 1 or kw < 1 or sh < 1 or sw < 1:
            raise ShapeError(f"maxpool2d kernel/stride must be >= 1, got {self.kernel}/{self.stride}")
        if ph < 0 or pw < 0 or ph >= kh or pw >= kw:
            # padding >= kernel would produce windows with no real input
            raise ShapeError(f"maxpool2d padding {self.padding} must satisfy 0 <= padding < kernel")
        c, h, w = input_shape
        oh = (h + 2 * ph - kh) // sh + 1
        ow = (w + 2 * pw - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"maxpool2d kernel {self.kernel} does not fit input {(h, w)}")
        self.input_shape = tuple(input_shape)
        self.output_shape = (c, oh, ow)


@dataclass
class Flatten:
    input_shape: tuple = None
    output_shape: tuple = None
    kind: str = field(default="flatten", init=False)

    def resolve(self, input_shape) -> None:
        self.input_shape = tuple(input_shape)
        self.output_shape = (int(np.prod(input_shape)),)


@dataclass
class Identity:
    input_shape: tuple = None
    output_shape: tuple = None
    kind: str = field(default="identity", init=False)

    def resolve(self, input_shape) -> None:
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(input_shape)


LOGICAL_KINDS = ("affine_relu", "affine", "maxpool2d")


@dataclass
class NetworkSpec:
    """Validated feedforward chain. Immutable after construction."""

    layers: list
    input_shape: tuple
    class_labels: list = None

    def __post_init__(self):
        if not self.layers:
            raise ModelFormatError("network has no layers")
        self.input_shape = tuple(int(v) for v in self.input_shape)
        shape = self.input_shape
        for k, layer in enumerate(self.layers):
            if hasattr(layer, "resolve"):
                layer.resolve(shape)
            elif tuple(layer.input_shape) != shape:
                raise ModelFormatError(
                    f"shape chain broken between layer {k - 1} (output {shape}) "
                    f"and layer {k} ({layer.kind} expects {tuple(layer.input_shape)})"
                )
            shape = tuple(layer.output_shape)
        self.output_shape = shape

    @property
    def logical_layers(self):
        """Layers that carry parameters or pooling; flatten/identity excluded."""
        return [l for l in self.layers if l.kind in LOGICAL_KINDS]


# ---------------------------------------------------------------------------
# max pooling
# ---------------------------------------------------------------------------


def pool_windows(x: np.ndarray, kernel, stride, padding, pad_value: float) -> np.ndarray:
    """Strided pooling windows of x [..., h, w] -> [..., oh, ow, kh, kw]."""
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    pad_spec = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    xpad = np.pad(x, pad_spec, constant_values=pad_value)
    win = sliding_window_view(xpad, (kh, kw), axis=(x.ndim - 2, x.ndim - 1))
    slices = (slice(None),) * (x.ndim - 2) + (slice(None, None, sh), slice(None, None, sw))
    return win[slices]


def maxpool_forward(pool: MaxPool2d, x: np.ndarray) -> np.ndarray:
    """Window maximum; padding cells never win (padded with -inf)."""
    win = pool_windows(x, pool.kernel, pool.stride, pool.padding, -np.inf)
    return np.ascontiguousarray(win.max(axis=(-2, -1)))


def maxpool_argmax(pool: MaxPool2d, x: np.ndarray) -> np.ndarray:
    """Flat input index of each window's maximum, lowest index on ties.

    Returns an int array shaped like the pooled output.
    """
    c, h, w = pool.input_shape
    kh, kw = pool.kernel
    sh, sw = pool.stride
    ph, pw = pool.padding
    win = pool_windows(x, pool.kernel, pool.stride, pool.padding, -np.inf)
    flat_win = win.reshape(*win.shape[:-2], kh * kw)
    tap = np.argmax(flat_win, axis=-1)  # first occurrence = lowest (k, l)
    _, oh, ow = pool.output_shape
    rows = np.arange(oh)[:, None] * sh + (tap // kw) - ph
    cols = np.arange(ow)[None, :] * sw + (tap % kw) - pw
    chan = np.arange(c)[:, None, None]
    return chan * (h * w) + rows * w + cols


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def _layer_forward_batch(layer, x: np.ndarray) -> np.ndarray:
    if layer.kind == "affine_relu":
        return relu(operators._apply_batch(layer.op, x, include_bias=True))
    if layer.kind == "affine":
        return operators._apply_batch(layer.op, x, include_bias=True)
    if layer.kind == "maxpool2d":
        win = pool_windows(x, layer.kernel, layer.stride, layer.padding, -np.inf)
        return np.ascontiguousarray(win.max(axis=(-2, -1)))
    if layer.kind == "flatten":
        return x.reshape(x.shape[0], -1)
    return x  # identity


def forward_batch(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """Nominal forward pass on a batch [B, *input_shape] -> [B, *output_shape]."""
    x = as_tensor(x)
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError(f"batch input shape {tuple(x.shape[1:])} != network input {net.input_shape}")
    for layer in net.layers:
        x = _layer_forward_batch(layer, x)
    return x


def forward_intermediates(net: NetworkSpec, x: np.ndarray) -> list:
    """Forward pass retaining every layer's output, in order."""
    x = as_tensor(x)
    if tuple(x.shape) != net.input_shape:
        raise ShapeError(f"input shape {tuple(x.shape)} != network input {net.input_shape}")
    outs = []
    cur = x[None]
    for layer in net.layers:
        cur = _layer_forward_batch(layer, cur)
        outs.append(cur[0])
    return outs


def forward(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """Exact nominal forward pass through the whole chain."""
    return forward_intermediates(net, x)[-1]


# ---------------------------------------------------------------------------
# model format
# ---------------------------------------------------------------------------

_IDENTITY_ALIASES = ("dropout", "adaptive_avg_pool2d")


def _read_blob(base: Path, name: str, layer_idx: int) -> np.ndarray:
    path = base / name
    if not path.is_file():
        raise ModelFormatError(f"layer {layer_idx}: weight blob '{name}' not found at {path}")
    raw = np.fromfile(path, dtype="<f4")
    return raw.astype(np.float64)


def _pair(value, what: str, layer_idx: int):
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise ModelFormatError(f"layer {layer_idx}: {what} must be an int or a pair, got {value!r}")


def _load_affine(entry: dict, cur_shape: tuple, k: int) -> AffineOperator:
    base = entry["_base"]
    op_kind = entry.get("op")
    bias = _read_blob(base, entry["bias"], k)
    weights = _read_blob(base, entry["weights"], k)
    dilation = entry.get("dilation", [1, 1])
    if _pair(dilation, "dilation", k) != (1, 1):
        raise ModelFormatError(f"layer {k}: dilation {dilation} is not supported (must be 1)")
    if op_kind == "dense":
        if len(cur_shape) != 1:
            raise ModelFormatError(
                f"layer {k}: dense op requires a flattened input, got shape {cur_shape} "
                f"(insert a flatten layer)"
            )
        n = cur_shape[0]
        m = bias.size
        if weights.size != m * n:
            raise ModelFormatError(
                f"layer {k}: dense weight blob has {weights.size} values, expected {m}x{n}"
            )
        try:
            return dense_operator(weights.reshape(m, n), bias)
        except Exception as exc:
            raise ModelFormatError(f"layer {k}: {exc}") from exc
    if op_kind == "conv2d":
        if len(cur_shape) != 3:
            raise ModelFormatError(f"layer {k}: conv2d op requires a (c, h, w) input, got {cur_shape}")
        oc = int(entry["out_channels"])
        kh, kw = _pair(entry["kernel"], "kernel", k)
        ic = cur_shape[0]
        if weights.size != oc * ic * kh * kw:
            raise ModelFormatError(
                f"layer {k}: conv weight blob has {weights.size} values, "
                f"expected {oc}x{ic}x{kh}x{kw}"
            )
        stride = _pair(entry.get("stride", [1, 1]), "stride", k)
        padding = _pair(entry.get("padding", [0, 0]), "padding", k)
        try:
            return conv2d_operator(weights.reshape(oc, ic, kh, kw), bias, cur_shape, stride, padding)
        except Exception as exc:
            raise ModelFormatError(f"layer {k}: {exc}") from exc
    raise ModelFormatError(f"layer {k}: unknown affine op kind {op_kind!r}")


def load_model(manifest_path) -> NetworkSpec:
    """Load and validate a model directory or manifest file.

    Weights are widened to float64. Every failure names the offending layer.
    """
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "model.json"
    if not path.is_file():
        raise ModelFormatError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    input_shape = tuple(int(v) for v in manifest["input_shape"])
    base = path.parent

    layers = []
    cur_shape = input_shape
    for k, entry in enumerate(manifest.get("layers", [])):
        kind = entry.get("kind")
        if kind in ("affine_relu", "affine"):
            op = _load_affine({**entry, "_base": base}, cur_shape, k)
            layer = AffineRelu(op) if kind == "affine_relu" else Affine(op)
        elif kind == "maxpool2d":
            layer = MaxPool2d(
                kernel=_pair(entry["kernel"], "kernel", k),
                stride=_pair(entry["stride"], "stride", k),
                padding=_pair(entry.get("padding", [0, 0]), "padding", k),
            )
        elif kind == "flatten":
            layer = Flatten()
        elif kind == "identity":
            layer = Identity()
        elif kind in _IDENTITY_ALIASES:
            warnings.warn(f"layer {k}: '{kind}' mapped to identity (inactive at inference)")
            layer = Identity()
        else:
            raise ModelFormatError(f"layer {k}: unsupported layer kind {kind!r}")
        if hasattr(layer, "resolve"):
            try:
                layer.resolve(cur_shape)
            except ShapeError as exc:
                raise ModelFormatError(f"layer {k}: {exc}") from exc
        elif tuple(layer.input_shape) != cur_shape:
            raise ModelFormatError(
                f"shape chain broken between layer {k - 1} (output {cur_shape}) "
                f"and layer {k} ({layer.kind} expects {tuple(layer.input_shape)})"
            )
        layers.append(layer)
        cur_shape = tuple(layer.output_shape)

    try:
        return NetworkSpec(layers, input_shape, manifest.get("class_labels"))
    except ShapeError as exc:
        raise ModelFormatError(str(exc)) from exc


def load_input(path, expected_shape=None) -> np.ndarray:
    """Load a nominal input: raw blob + `<file>.json` sidecar, or PNG/PGM image.

    Images are 8-bit, scaled channelwise to [0, 1], returned channels-first.
    """
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"input file not found: {path}")
    if path.suffix.lower() in (".png", ".pgm"):
        from PIL import Image

        img = np.asarray(Image.open(path), dtype=np.float64) / 255.0
        if img.ndim == 2:
            arr = img[None, :, :]
        elif img.ndim == 3:
            arr = np.moveaxis(img, -1, 0)
        else:
            raise ModelFormatError(f"unsupported image layout in {path}")
    else:
        sidecar = Path(str(path) + ".json")
        if not sidecar.is_file():
            sidecar = path.with_suffix(".json")
        if not sidecar.is_file():
            raise ModelFormatError(f"no shape sidecar found for input blob {path}")
        with open(sidecar, encoding="utf-8") as fh:
            shape = tuple(int(v) for v in json.load(fh)["shape"])
        raw = np.fromfile(path, dtype="<f4").astype(np.float64)
        if raw.size != int(np.prod(shape)):
            raise ModelFormatError(
                f"input blob {path} has {raw.size} values, sidecar shape {shape} needs {int(np.prod(shape))}"
            )
        arr = raw.reshape(shape)
    ensure_finite(arr, f"input {path}")
    if expected_shape is not None and tuple(arr.shape) != tuple(expected_shape):
        raise ModelFormatError(
            f"input {path} has shape {tuple(arr.shape)}, model expects {tuple(expected_shape)}"
        )
    return arr
