"""Network-wide local Lipschitz bounds.

Walks the layer chain once, threading the nominal input, the perturbation
radius, and the domain mask: each layer contributes its constant to the
running product, the radius is scaled by that constant for the next layer,
and the mask records coordinates known to be zero downstream.

Bare affine layers use ||A D|| with the incoming mask (at least as tight as
the unrestricted ||A||, which is recorded alongside so the looser variant is
recoverable); after a bare affine layer the mask resets to the identity.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .bounds import DomainMask, PowerIterConfig, PowerIterReport, affine_relu_bound, masked_spectral_norm, maxpool_bound
from .errors import ConfigError, NumericalError, ShapeError
from .network import NetworkSpec, maxpool_forward
from .tensor import as_tensor, relu


@dataclass
class BoundConfig:
    power_iter: PowerIterConfig = field(default_factory=PowerIterConfig)
    row_batch: int = 256
    threads: int = 1
    strict: bool = False  # raise instead of safety-factoring unconverged power iterations


@dataclass
class LayerBoundRecord:
    layer_index: int
    layer_kind: str
    lipschitz: float
    eps_in: float
    eps_out: float
    active_fraction: float
    power_iter: PowerIterReport = None
    lipschitz_unmasked: float = None  # bare affine layers: ||A|| next to the used ||AD||

    def to_dict(self) -> dict:
        d = {
            "layer_index": self.layer_index,
            "layer_kind": self.layer_kind,
            "lipschitz": self.lipschitz,
            "eps_in": self.eps_in,
            "eps_out": self.eps_out,
            "active_fraction": self.active_fraction,
        }
        if self.power_iter is not None:
            d["power_iter"] = {
                "iterations": self.power_iter.iterations,
                "residual": self.power_iter.residual,
                "converged": self.power_iter.converged,
            }
        if self.lipschitz_unmasked is not None:
            d["lipschitz_unmasked"] = self.lipschitz_unmasked
        return d


TRACE_CSV_COLUMNS = (
    "layer_index",
    "layer_kind",
    "lipschitz",
    "eps_in",
    "eps_out",
    "active_fraction",
    "pi_iterations",
    "pi_residual",
    "pi_converged",
)


@dataclass
class NetworkBoundTrace:
    records: list
    l_net: float
    eps_input: float
    nominal_input_digest: str

    def to_dict(self) -> dict:
        return {
            "l_net": self.l_net,
            "eps_input": self.eps_input,
            "nominal_input_digest": self.nominal_input_digest,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_CSV_COLUMNS)
        for r in self.records:
            pi = r.power_iter
            writer.writerow(
                [
                    r.layer_index,
                    r.layer_kind,
                    repr(r.lipschitz),
                    repr(r.eps_in),
                    repr(r.eps_out),
                    repr(r.active_fraction),
                    pi.iterations if pi else "",
                    repr(pi.residual) if pi else "",
                    pi.converged if pi else "",
                ]
            )
        return buf.getvalue()


def input_digest(x: np.ndarray) -> str:
    """Content hash of a tensor (shape plus raw float64 bytes)."""
    arr = as_tensor(x)
    h = hashlib.sha256()
    h.update(",".join(str(s) for s in arr.shape).encode())
    h.update(b"|")
    h.update(arr.tobytes())
    return h.hexdigest()


def _checked_norm(op, r, mask, cfg: BoundConfig):
    sigma, report = masked_spectral_norm(op, r, mask, cfg.power_iter)
    if not report.converged:
        if cfg.strict:
            raise NumericalError(
                f"power iteration did not converge within {cfg.power_iter.max_iters} iterations "
                f"(residual {report.residual:.3e})"
            )
        sigma *= cfg.power_iter.safety_factor
    return sigma, report


def network_local_bound(net: NetworkSpec, x0: np.ndarray, eps: float, cfg: BoundConfig = None) -> NetworkBoundTrace:
    """Local Lipschitz bound of the whole network over the eps-ball around x0.

    Starts with the identity mask and a unit running product; every layer
    multiplies in its constant and hands (nominal input, radius, mask) to the
    next. Flatten and identity layers contribute 1 and appear in the trace.
    """
    cfg = cfg or BoundConfig()
    if eps < 0:
        raise ConfigError(f"eps must be >= 0, got {eps}")
    x = as_tensor(x0)
    if tuple(x.shape) != net.input_shape:
        raise ShapeError(f"input shape {tuple(x.shape)} != network input {net.input_shape}")
    digest = input_digest(x)

    mask = DomainMask.ones(int(np.prod(net.input_shape)))
    eps_cur = float(eps)
    l_net = 1.0
    records = []
    for k, layer in enumerate(net.layers):
        pi_report = None
        unmasked = None
        if layer.kind == "affine_relu":
            art = affine_relu_bound(
                layer.op, x, mask, eps_cur,
                pi_cfg=cfg.power_iter, batch_size=cfg.row_batch, threads=cfg.threads,
            )
            if not art.power_iter.converged and cfg.strict:
                raise NumericalError(
                    f"layer {k}: power iteration did not converge "
                    f"(residual {art.power_iter.residual:.3e})"
                )
            lip = art.lipschitz_ub
            pi_report = art.power_iter
            x = relu(operators.apply(layer.op, x))
            mask = art.next_mask
        elif layer.kind == "affine":
            ones = np.ones(layer.op.m)
            lip, pi_report = _checked_norm(layer.op, ones, mask, cfg)
            if mask.is_identity():
                unmasked = lip
            else:
                unmasked, _ = _checked_norm(layer.op, ones, DomainMask.ones(layer.op.n), cfg)
            x = operators.apply(layer.op, x)
            mask = DomainMask.ones(layer.op.m)
        elif layer.kind == "maxpool2d":
            mb = maxpool_bound(layer, mask)
            lip = mb.lipschitz
            x = maxpool_forward(layer, x)
            mask = mb.next_mask
        elif layer.kind == "flatten":
            lip = 1.0
            x = x.reshape(-1)
        else:  # identity
            lip = 1.0
        eps_out = eps_cur * lip
        records.append(
            LayerBoundRecord(
                layer_index=k,
                layer_kind=layer.kind,
                lipschitz=float(lip),
                eps_in=eps_cur,
                eps_out=eps_out,
                active_fraction=mask.active_fraction,
                power_iter=pi_report,
                lipschitz_unmasked=unmasked,
            )
        )
        l_net *= lip
        eps_cur = eps_out
    return NetworkBoundTrace(records=records, l_net=float(l_net), eps_input=float(eps), nominal_input_digest=digest)


def network_global_bound(net: NetworkSpec, cfg: BoundConfig = None) -> NetworkBoundTrace:
    """Input-independent bound: product of ||A|| over affine layers and sqrt(n_max) over pools.

    The trace carries no radius semantics; eps fields are zero.
    """
    cfg = cfg or BoundConfig()
    l_net = 1.0
    records = []
    for k, layer in enumerate(net.layers):
        pi_report = None
        if layer.kind in ("affine_relu", "affine"):
            lip, pi_report = _checked_norm(
                layer.op, np.ones(layer.op.m), DomainMask.ones(layer.op.n), cfg
            )
        elif layer.kind == "maxpool2d":
            lip = maxpool_bound(layer, DomainMask.ones(int(np.prod(layer.input_shape)))).lipschitz
        else:
            lip = 1.0
        records.append(
            LayerBoundRecord(
                layer_index=k,
                layer_kind=layer.kind,
                lipschitz=float(lip),
                eps_in=0.0,
                eps_out=0.0,
                active_fraction=1.0,
                power_iter=pi_report,
            )
        )
        l_net *= lip
    return NetworkBoundTrace(records=records, l_net=float(l_net), eps_input=0.0, nominal_input_digest="")
