#!/usr/bin/env python3
"""How the two nonlinear layer constants behave.

The ReLU's local Lipschitz constant over an interval [2*y0 - ybar, ybar]
depends only on where the interval sits relative to zero: 0 when it stays
negative, 1 when it stays positive, and a fraction in between when it
straddles the kink. Max pooling is 1-Lipschitz only when windows do not
overlap; overlap lets one input drive several outputs at once, and the
constant grows to sqrt(n_max) where n_max counts the worst-case overlap.
"""

import numpy as np

from lipcert import MaxPool2d, maxpool_bound, relu_local_lipschitz
from lipcert.oracle import pooling_coverage_count

print("ReLU local constants for intervals centered at y0 with top end ybar")
print(f"{'y0':>8} {'ybar':>8} {'constant':>10}  regime")
for y0, ybar in [(-3.0, -1.0), (-1.0, 1.0), (-0.5, 2.0), (0.5, 4.0), (2.0, 5.0)]:
    c = relu_local_lipschitz(y0, ybar)
    if ybar <= 0:
        regime = "interval fully negative: flat"
    elif y0 > 0:
        regime = "interval fully positive: identity"
    else:
        regime = "straddles the kink: secant slope"
    print(f"{y0:>8.2f} {ybar:>8.2f} {c:>10.4f}  {regime}")
print(f"{'any':>8} {'== y0':>8} {relu_local_lipschitz(1.0, 1.0, degenerate=True):>10.4f}  single-point input set")

print()
print("Max pooling constants: sqrt of the worst per-input coverage count")
print(f"{'kernel':>7} {'stride':>7} {'n_max':>6} {'L':>7}  {'exhaustive count':>16}")
for k, s in [(2, 2), (3, 2), (3, 1), (5, 3), (4, 2)]:
    pool = MaxPool2d((k, k), (s, s))
    pool.resolve((1, 20, 20))
    mb = maxpool_bound(pool, np.ones(400))
    brute = pooling_coverage_count((20, 20), (k, k), (s, s))
    print(f"{k:>7} {s:>7} {mb.n_max:>6} {mb.lipschitz:>7.3f}  {brute:>16}")

print()
print("A pair of inputs achieving the overlapping bound (kernel 3, stride 2):")
pool = MaxPool2d((3, 3), (2, 2))
pool.resolve((1, 9, 9))
x = np.zeros((1, 9, 9))
x[0, 4, 4] = 1.0
x2 = x.copy()
x2[0, 4, 4] = 1.25
from lipcert import maxpool_forward

ratio = np.linalg.norm(maxpool_forward(pool, x2) - maxpool_forward(pool, x)) / 0.25
print(f"  perturbing the input covered by 4 windows moves 4 outputs: ratio = {ratio:.6f} = sqrt(4)")
