"""Adversarial-radius certification.

A classification cannot flip while the output stays within delta / sqrt(2) of
the nominal logits, where delta is the gap between the top two logits. Since
eps * L(eps) is non-decreasing in eps, the largest certifiable radius is found
by doubling eps until the product crosses the threshold and then bisecting
between the last accepted and first rejected probes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .network import NetworkSpec, forward
from .pipeline import BoundConfig, network_local_bound


@dataclass
class SearchConfig:
    eps_start: float = 1e-9
    tol: float = 1e-3  # relative width of the final bisection bracket
    max_doublings: int = 90  # expansion cap; reached only when eps*L never crosses
    max_bisections: int = 200
    bound: BoundConfig = field(default_factory=BoundConfig)


@dataclass
class ProbeRecord:
    eps: float
    l_net: float
    product: float
    accepted: bool

    def to_dict(self) -> dict:
        return {"eps": self.eps, "l_net": self.l_net, "product": self.product, "accepted": self.accepted}


@dataclass
class CertificationResult:
    certified_radius: float
    delta: float
    search_trace: list
    top_class_index: int
    runner_up_index: int

    def to_dict(self) -> dict:
        return {
            "certified_radius": self.certified_radius,
            "delta": self.delta,
            "top_class_index": self.top_class_index,
            "runner_up_index": self.runner_up_index,
            "search_trace": [p.to_dict() for p in self.search_trace],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def logit_gap(net: NetworkSpec, x0: np.ndarray):
    """Gap between the two largest logits at x0: (delta, top index, runner-up index).

    Ties break toward the lowest index, so delta == 0 exactly on a decision
    boundary.
    """
    logits = np.asarray(forward(net, x0), dtype=np.float64).ravel()
    if logits.size < 2:
        raise ConfigError(f"logit_gap needs >= 2 outputs, network emits {logits.size}")
    order = np.argsort(-logits, kind="stable")  # stable sort keeps lowest index first on ties
    top, runner = int(order[0]), int(order[1])
    return float(logits[top] - logits[runner]), top, runner


def certify_radius(net: NetworkSpec, x0: np.ndarray, search_cfg: SearchConfig = None) -> CertificationResult:
    """Largest radius eps with eps * L(x0, eps) strictly below delta / sqrt(2).

    Every probe evaluates the full network bound at that radius and is
    recorded in the search trace. A zero logit gap admits no certificate:
    the radius is 0 and the trace is empty.
    """
    cfg = search_cfg or SearchConfig()
    delta, top, runner = logit_gap(net, x0)
    if delta == 0.0:
        return CertificationResult(0.0, delta, [], top, runner)
    threshold = delta / math.sqrt(2.0)
    trace = []

    def probe(eps: float) -> bool:
        l_net = network_local_bound(net, x0, eps, cfg.bound).l_net
        accepted = eps * l_net < threshold
        trace.append(ProbeRecord(eps=eps, l_net=l_net, product=eps * l_net, accepted=accepted))
        return accepted

    # geometric expansion until the product crosses the threshold
    lo = 0.0
    hi = None
    eps = cfg.eps_start
    for _ in range(cfg.max_doublings):
        if probe(eps):
            lo = eps
            eps *= 2.0
        else:
            hi = eps
            break
    if hi is None:
        # never rejected within the expansion budget: certify the last accepted radius
        return CertificationResult(lo, delta, trace, top, runner)

    for _ in range(cfg.max_bisections):
        if lo > 0.0 and (hi - lo) <= cfg.tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket exhausted at float resolution
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return CertificationResult(lo, delta, trace, top, runner)
