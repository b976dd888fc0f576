"""Shared fixtures: in-memory test networks and on-disk model directories."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from lipcert import (
    Affine,
    AffineRelu,
    Flatten,
    MaxPool2d,
    NetworkSpec,
    conv2d_operator,
    dense_operator,
    seeded_fill,
)


def f32(arr):
    """Round to float32-representable values (blob storage precision), keep float64."""
    return np.asarray(arr, dtype=np.float32).astype(np.float64)


def scaled_fill(shape, seed, fan_in, scale=1.0):
    """Gaussian weights at scale/sqrt(fan_in), rounded to float32-representable values."""
    return f32(seeded_fill(shape, seed, "gaussian") * scale / np.sqrt(fan_in))


def save_model_dir(net: NetworkSpec, out_dir: Path) -> Path:
    """Write a NetworkSpec as a model.json + float32 blob directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, layer in enumerate(net.layers):
        if layer.kind in ("affine_relu", "affine"):
            wname, bname = f"w{k}.bin", f"b{k}.bin"
            layer.op.weights.astype("<f4").tofile(out_dir / wname)
            layer.op.bias.astype("<f4").tofile(out_dir / bname)
            entry = {"kind": layer.kind, "op": layer.op.kind, "weights": wname, "bias": bname}
            if layer.op.kind == "conv2d":
                entry["out_channels"] = int(layer.op.weights.shape[0])
                entry["kernel"] = [int(v) for v in layer.op.weights.shape[2:]]
                entry["stride"] = [int(v) for v in layer.op.stride]
                entry["padding"] = [int(v) for v in layer.op.padding]
            entries.append(entry)
        elif layer.kind == "maxpool2d":
            entries.append(
                {
                    "kind": "maxpool2d",
                    "kernel": [int(v) for v in layer.kernel],
                    "stride": [int(v) for v in layer.stride],
                    "padding": [int(v) for v in layer.padding],
                }
            )
        else:
            entries.append({"kind": layer.kind})
    manifest = {
        "format_version": 1,
        "input_shape": [int(v) for v in net.input_shape],
        "layers": entries,
    }
    if net.class_labels:
        manifest["class_labels"] = list(net.class_labels)
    (out_dir / "model.json").write_text(json.dumps(manifest, indent=2))
    return out_dir


def save_input_blob(x, path: Path) -> Path:
    path = Path(path)
    np.asarray(x, dtype="<f4").tofile(path)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"shape": [int(v) for v in np.asarray(x).shape]}, fh)
    return path


def build_mnist_net(seed: int = 0) -> NetworkSpec:
    """Randomly initialized MNIST-shaped architecture:
    conv5x5(6) + pool2 + conv5x5(16) + pool2 + fc120 + fc84 + fc10."""
    rng = np.random.SeedSequence(seed).generate_state(8)
    layers = [
        AffineRelu(conv2d_operator(scaled_fill((6, 1, 5, 5), rng[0], 25), scaled_fill((6,), rng[1], 1, 0.1), (1, 28, 28))),
        MaxPool2d((2, 2), (2, 2)),
        AffineRelu(conv2d_operator(scaled_fill((16, 6, 5, 5), rng[2], 150), scaled_fill((16,), rng[3], 1, 0.1), (6, 12, 12))),
        MaxPool2d((2, 2), (2, 2)),
        Flatten(),
        AffineRelu(dense_operator(scaled_fill((120, 256), rng[4], 256), scaled_fill((120,), rng[5], 1, 0.1))),
        AffineRelu(dense_operator(scaled_fill((84, 120), rng[6], 120), scaled_fill((84,), rng[7], 1, 0.1))),
        Affine(dense_operator(scaled_fill((10, 84), rng[0] + 1, 84), scaled_fill((10,), rng[1] + 1, 1, 0.1))),
    ]
    return NetworkSpec(layers, (1, 28, 28))


def build_small_conv_net(seed: int = 0) -> NetworkSpec:
    layers = [
        AffineRelu(conv2d_operator(scaled_fill((4, 1, 3, 3), seed + 1, 9), scaled_fill((4,), seed + 2, 1, 0.1), (1, 8, 8))),
        MaxPool2d((3, 3), (2, 2)),
        Flatten(),
        AffineRelu(dense_operator(scaled_fill((12, 16), seed + 3, 16), scaled_fill((12,), seed + 4, 1, 0.1))),
        Affine(dense_operator(scaled_fill((3, 12), seed + 5, 12), scaled_fill((3,), seed + 6, 1, 0.1))),
    ]
    return NetworkSpec(layers, (1, 8, 8))


def build_dense_net(seed: int = 0, widths=(6, 8, 5, 3)) -> NetworkSpec:
    layers = []
    for i in range(len(widths) - 1):
        n_in, n_out = widths[i], widths[i + 1]
        op = dense_operator(scaled_fill((n_out, n_in), seed + 10 * i, n_in), scaled_fill((n_out,), seed + 10 * i + 1, 1, 0.2))
        layers.append(Affine(op) if i == len(widths) - 2 else AffineRelu(op))
    return NetworkSpec(layers, (widths[0],))


def random_conv_cases(count: int, seed: int = 0):
    """Small random conv layers (inputs capped at 2x12x12) with masks and nominal points."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cases = []
    for i in range(count):
        ic = int(rng.integers(1, 3))
        h = int(rng.integers(7, 13))
        w = int(rng.integers(7, 13))
        oc = int(rng.integers(1, 5))
        kh = int(rng.integers(2, min(6, h + 1)))
        kw = int(rng.integers(2, min(6, w + 1)))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        padding = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
        weights = seeded_fill((oc, ic, kh, kw), 1000 + i, "gaussian")
        bias = seeded_fill((oc,), 2000 + i, "gaussian")
        op = conv2d_operator(weights, bias, (ic, h, w), stride, padding)
        x0 = seeded_fill((ic, h, w), 3000 + i, "gaussian")
        bits = (seeded_fill((op.n,), 4000 + i) > -0.5).astype(float)
        if not bits.any():
            bits[0] = 1.0
        eps = float(rng.uniform(0.2, 2.0))
        cases.append((op, x0, bits, eps))
    return cases


@pytest.fixture(scope="session")
def mnist_net():
    return build_mnist_net(seed=7)


@pytest.fixture(scope="session")
def small_conv_net():
    return build_small_conv_net(seed=3)
