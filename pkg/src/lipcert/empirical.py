"""Empirical brackets around the certified bounds.

Lower bounds on the local Lipschitz constant come from the achieved ratio
||f(x0 + dx) - f(x0)|| / ||dx||, maximized either over random sphere samples
or by projected gradient ascent; an upper bound on the minimum adversarial
perturbation comes from actually finding a misclassifying perturbation and
shrinking it. Gradients use the exact reverse-mode product of the piecewise
linear network: ReLU gates by the sign of the pre-activation (subgradient 0
exactly at 0) and max pooling routes to the window argmax (lowest flat index
on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import operators
from .errors import ConfigError, ShapeError
from .network import NetworkSpec, forward, forward_batch, maxpool_argmax, maxpool_forward
from .tensor import as_tensor, relu


@dataclass
class LowerBoundReport:
    method: str  # "random" | "gradient"
    best_ratio: float
    best_perturbation_norm: float
    samples_or_steps: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "best_ratio": self.best_ratio,
            "best_perturbation_norm": self.best_perturbation_norm,
            "samples_or_steps": self.samples_or_steps,
            "seed": self.seed,
        }


def vjp(net: NetworkSpec, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Exact J^T v for the piecewise-linear network at x."""
    x = as_tensor(x)
    if tuple(x.shape) != net.input_shape:
        raise ShapeError(f"input shape {tuple(x.shape)} != network input {net.input_shape}")
    v = as_tensor(cotangent)

    # forward pass, caching what the backward sweep needs per layer
    cache = []
    cur = x
    for layer in net.layers:
        if layer.kind == "affine_relu":
            pre = operators.apply(layer.op, cur)
            cache.append(pre)
            cur = relu(pre)
        elif layer.kind == "affine":
            cache.append(None)
            cur = operators.apply(layer.op, cur)
        elif layer.kind == "maxpool2d":
            cache.append(maxpool_argmax(layer, cur))
            cur = maxpool_forward(layer, cur)
        elif layer.kind == "flatten":
            cache.append(cur.shape)
            cur = cur.reshape(-1)
        else:
            cache.append(None)

    if tuple(v.shape) != tuple(net.layers[-1].output_shape):
        raise ShapeError(
            f"cotangent shape {tuple(v.shape)} != network output {tuple(net.layers[-1].output_shape)}"
        )
    for layer, stash in zip(reversed(net.layers), reversed(cache)):
        if layer.kind == "affine_relu":
            gate = (stash > 0.0).astype(np.float64)
            v = operators.apply_transpose(layer.op, gate * v)
        elif layer.kind == "affine":
            v = operators.apply_transpose(layer.op, v)
        elif layer.kind == "maxpool2d":
            n_in = int(np.prod(layer.input_shape))
            v = np.bincount(stash.ravel(), weights=v.ravel(), minlength=n_in).reshape(layer.input_shape)
        elif layer.kind == "flatten":
            v = v.reshape(stash)
    return v


def _sphere_sample(rng: np.random.Generator, shape, radius: float) -> np.ndarray:
    while True:
        g = rng.standard_normal(shape)
        nrm = np.linalg.norm(g)
        if nrm > 0.0:
            return (radius / nrm) * g


def lipschitz_lower_random(net: NetworkSpec, x0: np.ndarray, eps: float, n_samples: int = 10_000, seed: int = 0) -> LowerBoundReport:
    """Best deviation ratio over perturbations drawn uniformly on the eps-sphere.

    Each sample draws from its own child stream of the master seed, so the
    result is identical whether samples are evaluated serially or in parallel
    batches.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if eps <= 0:
        raise ConfigError(f"sampling needs eps > 0, got {eps}")
    x0 = as_tensor(x0)
    f0 = forward(net, x0).ravel()
    children = np.random.SeedSequence(seed).spawn(n_samples)
    best_ratio = -np.inf
    best_norm = 0.0
    batch = 256
    for start in range(0, n_samples, batch):
        stop = min(start + batch, n_samples)
        deltas = np.stack(
            [
                _sphere_sample(np.random.Generator(np.random.PCG64(children[i])), net.input_shape, eps)
                for i in range(start, stop)
            ]
        )
        outs = forward_batch(net, x0[None] + deltas).reshape(stop - start, -1)
        ratios = np.linalg.norm(outs - f0, axis=1) / eps
        i_best = int(np.argmax(ratios))
        if ratios[i_best] > best_ratio:
            best_ratio = float(ratios[i_best])
            best_norm = eps
    return LowerBoundReport("random", best_ratio, best_norm, n_samples, seed)


def _project_ball(dx: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(dx)
    if nrm > radius and nrm > 0.0:
        return dx * (radius / nrm)
    return dx


def lipschitz_lower_gradient(
    net: NetworkSpec,
    x0: np.ndarray,
    eps: float,
    steps: int = 200,
    step_size: float = None,
    seed: int = 0,
) -> LowerBoundReport:
    """Projected gradient ascent on the output deviation over the eps-ball.

    The ascent direction is the exact gradient of ||f(x0+dx) - f(x0)||; steps
    that do not improve halve the step size. A zero deviation (undefined
    subgradient) re-randomizes the perturbation.
    """
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if eps <= 0:
        raise ConfigError(f"gradient ascent needs eps > 0, got {eps}")
    x0 = as_tensor(x0)
    f0 = forward(net, x0).ravel()
    rng = np.random.Generator(np.random.PCG64(seed))
    step = step_size if step_size is not None else eps / 10.0
    dx = _sphere_sample(rng, net.input_shape, eps)
    best_ratio = -np.inf
    best_norm = float(np.linalg.norm(dx))

    def deviation(d):
        return float(np.linalg.norm(forward(net, x0 + d).ravel() - f0))

    dev = deviation(dx)
    for _ in range(steps):
        if dev == 0.0:
            dx = _sphere_sample(rng, net.input_shape, eps)
            dev = deviation(dx)
            continue
        nrm = float(np.linalg.norm(dx))
        ratio = dev / nrm
        if ratio > best_ratio:
            best_ratio = ratio
            best_norm = nrm
        diff = forward(net, x0 + dx).ravel() - f0
        grad = vjp(net, x0 + dx, (diff / dev).reshape(net.layers[-1].output_shape))
        cand = _project_ball(dx + step * grad, eps)
        cand_dev = deviation(cand)
        if cand_dev > dev:
            dx, dev = cand, cand_dev
        else:
            step *= 0.5
            if step < 1e-16 * eps:
                break
    nrm = float(np.linalg.norm(dx))
    if nrm > 0.0 and dev / nrm > best_ratio:
        best_ratio = dev / nrm
        best_norm = nrm
    return LowerBoundReport("gradient", float(best_ratio), best_norm, steps, seed)


@dataclass
class AttackConfig:
    steps: int = 200
    radius_start: float = 1e-4
    radius_max: float = 1e6
    radius_growth: float = 4.0
    refine_tol: float = 1e-3
    seed: int = 0


def _margin_and_runner(logits: np.ndarray, top: int):
    rest = np.delete(logits, top)
    runner_local = int(np.argmax(rest))
    runner = runner_local if runner_local < top else runner_local + 1
    return float(logits[runner] - logits[top]), runner


def adversarial_upper_bound(net: NetworkSpec, x0: np.ndarray, cfg: AttackConfig = None) -> float:
    """Smallest found ||dx|| that flips the top class; +inf when none is found.

    Gradient ascent on the runner-up-minus-top logit gap inside balls of
    growing radius locates a flip; bisection on the perturbation scale then
    shrinks it.
    """
    cfg = cfg or AttackConfig()
    x0 = as_tensor(x0)
    logits0 = forward(net, x0).ravel()
    top = int(np.argmax(logits0))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    def flips(dx) -> bool:
        return int(np.argmax(forward(net, x0 + dx).ravel())) != top

    flip_dx = None
    radius = cfg.radius_start
    while radius <= cfg.radius_max and flip_dx is None:
        dx = _sphere_sample(rng, net.input_shape, radius * 1e-3)
        step = radius / 10.0
        margin, _ = _margin_and_runner(forward(net, x0 + dx).ravel(), top)
        for _ in range(cfg.steps):
            if flips(dx):
                flip_dx = dx.copy()
                break
            out = forward(net, x0 + dx).ravel()
            _, runner = _margin_and_runner(out, top)
            cot = np.zeros(out.size)
            cot[runner] = 1.0
            cot[top] = -1.0
            grad = vjp(net, x0 + dx, cot.reshape(net.layers[-1].output_shape))
            cand = _project_ball(dx + step * grad, radius)
            cand_margin, _ = _margin_and_runner(forward(net, x0 + cand).ravel(), top)
            if cand_margin > margin:
                dx, margin = cand, cand_margin
            else:
                step *= 0.5
                if step < 1e-16 * radius:
                    break
        radius *= cfg.radius_growth
    if flip_dx is None:
        return math.inf

    # shrink along the found direction: bisect the scale of the flip
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if lo > 0.0 and (hi - lo) <= cfg.refine_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if flips(mid * flip_dx):
            hi = mid
        else:
            lo = mid
    return float(hi * np.linalg.norm(flip_dx))
