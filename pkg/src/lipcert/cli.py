"""Command-line driver for bound sweeps, certification runs, and model inspection.

Exit codes: 0 success, 1 usage error, 2 model/input error, 3 numerical
failure (unconverged power iteration under --strict).

The bound sweep CSV contract (format v1, column order is stable):
    eps,local_ub,global_ub,random_lb,gradient_lb
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import empirical, oracle
from .bounds import PowerIterConfig, maxpool_bound, DomainMask
from .certify import SearchConfig, certify_radius
from .errors import ConfigError, LipcertError, NumericalError
from .network import forward, load_input, load_model
from .pipeline import BoundConfig, network_global_bound, network_local_bound

SWEEP_CSV_COLUMNS = ("eps", "local_ub", "global_ub", "random_lb", "gradient_lb")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_sweep(text: str):
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"--eps-sweep expects start:stop:count[:log], got {text!r}")
    start, stop = float(parts[0]), float(parts[1])
    count = int(parts[2])
    log_spaced = len(parts) == 4 and parts[3] == "log"
    if len(parts) == 4 and not log_spaced:
        raise ConfigError(f"--eps-sweep fourth field must be 'log', got {parts[3]!r}")
    if count < 1:
        raise ConfigError("--eps-sweep count must be >= 1")
    if start < 0 or stop < 0:
        raise ConfigError("--eps-sweep radii must be >= 0")
    if count == 1:
        return [start]
    if log_spaced:
        if start <= 0 or stop <= 0:
            raise ConfigError("log-spaced sweep needs positive endpoints")
        return list(np.geomspace(start, stop, count))
    return list(np.linspace(start, stop, count))


def _bound_config(args) -> BoundConfig:
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("LIPCERT_THREADS", "1"))
    return BoundConfig(
        power_iter=PowerIterConfig(max_iters=args.pi_iters, tol=args.pi_tol, seed=args.seed),
        threads=threads,
        strict=args.strict,
    )


def _fmt(value: float) -> str:
    if value == math.inf:
        return "inf"
    return repr(float(value))


def cmd_bound(args) -> int:
    net = load_model(args.model)
    x0 = load_input(args.input, expected_shape=net.input_shape)
    cfg = _bound_config(args)
    eps_values = _parse_sweep(args.eps_sweep) if args.eps_sweep else [args.eps]

    global_trace = network_global_bound(net, cfg)
    rows = []
    traces = []
    for eps in eps_values:
        trace = network_local_bound(net, x0, eps, cfg)
        traces.append(trace)
        if eps > 0:
            random_lb = empirical.lipschitz_lower_random(net, x0, eps, seed=args.seed).best_ratio
            gradient_lb = empirical.lipschitz_lower_gradient(net, x0, eps, seed=args.seed).best_ratio
        else:
            random_lb = 0.0
            gradient_lb = 0.0
        rows.append(
            {
                "eps": eps,
                "local_ub": trace.l_net,
                "global_ub": global_trace.l_net,
                "random_lb": random_lb,
                "gradient_lb": gradient_lb,
            }
        )

    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_lines = [",".join(SWEEP_CSV_COLUMNS)]
    for row in rows:
        csv_lines.append(",".join(_fmt(row[c]) for c in SWEEP_CSV_COLUMNS))
    csv_text = "\n".join(csv_lines) + "\n"
    (out_dir / "bounds.csv").write_text(csv_text)
    payload = {
        "format_version": 1,
        "model": str(args.model),
        "input": str(args.input),
        "seed": args.seed,
        "rows": rows,
        "global_trace": global_trace.to_dict(),
        "local_traces": [t.to_dict() for t in traces],
    }
    (out_dir / "bounds.json").write_text(json.dumps(payload, indent=2) + "\n")

    if args.format == "json":
        print(json.dumps(rows, indent=2))
    else:
        print(csv_text, end="")
    return EXIT_OK


def cmd_certify(args) -> int:
    net = load_model(args.model)
    x0 = load_input(args.input, expected_shape=net.input_shape)
    cfg = SearchConfig(bound=_bound_config(args))
    result = certify_radius(net, x0, cfg)

    if args.format == "json":
        payload = result.to_dict()
        if args.attack:
            payload["attack_upper_bound"] = empirical.adversarial_upper_bound(
                net, x0, empirical.AttackConfig(seed=args.seed)
            )
        print(json.dumps(payload, indent=2))
    else:
        print(f"top class index:      {result.top_class_index}")
        print(f"runner-up index:      {result.runner_up_index}")
        print(f"logit gap delta:      {_fmt(result.delta)}")
        print(f"certified radius:     {_fmt(result.certified_radius)}")
        if args.attack:
            ub = empirical.adversarial_upper_bound(net, x0, empirical.AttackConfig(seed=args.seed))
            print(f"attack upper bound:   {_fmt(ub)}")
        print()
        print(f"{'eps':>16} {'l_net':>16} {'eps*l_net':>16} verdict")
        for probe in result.search_trace:
            verdict = "accept" if probe.accepted else "reject"
            print(f"{probe.eps:>16.8e} {probe.l_net:>16.8e} {probe.product:>16.8e} {verdict}")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "certify.json").write_text(result.to_json() + "\n")
    return EXIT_OK


def cmd_inspect(args) -> int:
    net = load_model(args.model)
    cfg = _bound_config(args)
    print(f"input shape: {net.input_shape}")
    print(f"{'idx':>3} {'kind':<12} {'in_shape':<14} {'out_shape':<14} {'params':>8} {'norm_or_nmax':>14}")
    for k, layer in enumerate(net.layers):
        detail = ""
        params = 0
        if layer.kind in ("affine_relu", "affine"):
            params = layer.op.weights.size + layer.op.bias.size
            if args.oracle:
                from .operators import materialize

                norm = oracle.dense_spectral_norm(materialize(layer.op))
            else:
                from .bounds import masked_spectral_norm

                norm, _ = masked_spectral_norm(
                    layer.op, np.ones(layer.op.m), DomainMask.ones(layer.op.n), cfg.power_iter
                )
            detail = f"|A|={norm:.6g}"
        elif layer.kind == "maxpool2d":
            mb = maxpool_bound(layer, DomainMask.ones(int(np.prod(layer.input_shape))))
            detail = f"n_max={mb.n_max}"
        print(
            f"{k:>3} {layer.kind:<12} {str(tuple(layer.input_shape)):<14} "
            f"{str(tuple(layer.output_shape)):<14} {params:>8} {detail:>14}"
        )
    logical = len(net.logical_layers)
    print(f"{logical} logical layers ({len(net.layers)} total), output length {net.output_shape[-1]}")
    return EXIT_OK


def cmd_forward(args) -> int:
    net = load_model(args.model)
    x0 = load_input(args.input, expected_shape=net.input_shape)
    logits = forward(net, x0).ravel()
    if args.format == "json":
        print(json.dumps({"logits": [float(v) for v in logits]}))
    else:
        print(",".join(_fmt(v) for v in logits))
    return EXIT_OK


def _add_common(sub, with_input=True):
    sub.add_argument("--model", required=True, help="model directory or manifest path")
    if with_input:
        sub.add_argument("--input", required=True, help="nominal input (blob+sidecar or PNG/PGM)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None)
    sub.add_argument("--format", choices=("json", "csv"), default="csv")
    sub.add_argument("--strict", action="store_true", help="fail on unconverged power iteration")
    sub.add_argument("--threads", type=int, default=None, help="worker cap (env LIPCERT_THREADS)")
    sub.add_argument("--pi-iters", type=int, default=500, dest="pi_iters")
    sub.add_argument("--pi-tol", type=float, default=1e-8, dest="pi_tol")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lipcert", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p_bound = subs.add_parser("bound", help="local/global bound sweep with empirical lower bounds")
    _add_common(p_bound)
    p_bound.add_argument("--eps", type=float, default=None)
    p_bound.add_argument("--eps-sweep", default=None, dest="eps_sweep", help="start:stop:count[:log]")
    p_bound.set_defaults(func=cmd_bound)

    p_cert = subs.add_parser("certify", help="largest certifiable perturbation radius")
    _add_common(p_cert)
    p_cert.add_argument("--attack", action="store_true", help="also report an adversarial upper bound")
    p_cert.set_defaults(func=cmd_certify)

    p_inspect = subs.add_parser("inspect", help="layer table with norms and pooling constants")
    _add_common(p_inspect, with_input=False)
    p_inspect.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p_inspect.set_defaults(func=cmd_inspect)

    p_fwd = subs.add_parser("forward", help="print the logits of the nominal forward pass")
    _add_common(p_fwd)
    p_fwd.set_defaults(func=cmd_forward)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bound":
        if (args.eps is None) == (args.eps_sweep is None):
            parser.error("bound requires exactly one of --eps or --eps-sweep")
        if args.eps is not None and args.eps < 0:
            parser.error("--eps must be >= 0")
        if args.eps_sweep is not None:
            try:
                _parse_sweep(args.eps_sweep)
            except ConfigError as exc:
                parser.error(str(exc))
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LipcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
