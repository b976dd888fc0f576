#!/usr/bin/env python3
"""The four curves that bracket a network's local Lipschitz constant.

For a randomly initialized MNIST-shaped network we sweep the perturbation
radius and report, per radius: the certified local upper bound, the global
(radius-independent) upper bound it improves on, and two empirical lower
bounds (random sphere sampling and projected gradient ascent). The local
bound starts far below the global product for small radii and climbs toward
it as the ball grows. Writes sweep.csv next to this script.
"""

from pathlib import Path

import numpy as np

from lipcert import (
    AffineRelu,
    Affine,
    BoundConfig,
    PowerIterConfig,
    Flatten,
    MaxPool2d,
    NetworkSpec,
    conv2d_operator,
    dense_operator,
    lipschitz_lower_gradient,
    lipschitz_lower_random,
    network_global_bound,
    network_local_bound,
    seeded_fill,
)


def gauss(shape, seed, scale):
    return seeded_fill(shape, seed, "gaussian") * scale


net = NetworkSpec(
    [
        AffineRelu(conv2d_operator(gauss((6, 1, 5, 5), 1, 0.2), gauss((6,), 2, 0.1), (1, 28, 28))),
        MaxPool2d((2, 2), (2, 2)),
        AffineRelu(conv2d_operator(gauss((16, 6, 5, 5), 3, 0.08), gauss((16,), 4, 0.1), (6, 12, 12))),
        MaxPool2d((2, 2), (2, 2)),
        Flatten(),
        AffineRelu(dense_operator(gauss((120, 256), 5, 0.06), gauss((120,), 6, 0.1))),
        AffineRelu(dense_operator(gauss((84, 120), 7, 0.09), gauss((84,), 8, 0.1))),
        Affine(dense_operator(gauss((10, 84), 9, 0.11), gauss((10,), 10, 0.1))),
    ],
    (1, 28, 28),
)
x0 = seeded_fill((1, 28, 28), seed=11) * 0.5

# mid-radius slope matrices split a convolution's near-degenerate top singular
# values, which slows the power iteration; give it room to converge so the
# curve is monotone instead of carrying non-convergence safety inflation
cfg = BoundConfig(power_iter=PowerIterConfig(max_iters=20000))

global_ub = network_global_bound(net, cfg).l_net
print(f"global upper bound (product of layer norms): {global_ub:.4f}")
print()
print(f"{'eps':>10} {'local UB':>10} {'random LB':>10} {'grad LB':>10} {'local/global':>13}")

rows = []
for eps in np.geomspace(1e-3, 1e2, 8):
    local = network_local_bound(net, x0, eps, cfg).l_net
    rnd = lipschitz_lower_random(net, x0, eps, n_samples=2000, seed=0).best_ratio
    grad = lipschitz_lower_gradient(net, x0, eps, steps=100, seed=0).best_ratio
    rows.append((eps, local, global_ub, rnd, grad))
    print(f"{eps:>10.4g} {local:>10.4f} {rnd:>10.4f} {grad:>10.4f} {local / global_ub:>13.3%}")

out = Path(__file__).with_name("sweep.csv")
with open(out, "w") as fh:
    fh.write("eps,local_ub,global_ub,random_lb,gradient_lb\n")
    for row in rows:
        fh.write(",".join(repr(v) for v in row) + "\n")
print()
print(f"wrote {out}")
print("ordering that must always hold: random LB <= local UB <= global UB; gradient LB <= local UB")
