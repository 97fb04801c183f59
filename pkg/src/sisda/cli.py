"""Command-line interface.

Subcommands: ``analyze`` (CSV in, per-feature p-values out) and the three
simulation studies ``simulate-fpr``, ``simulate-tpr``, ``simulate-time``.
Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .experiments import SimConfig, ingest_csv, run_fpr_study, run_timing_study, run_tpr_study
from .inference import InferenceConfig, run_si_seqfs_da

_CRITERIA = {"fixed": "fixed", "aic": "aic", "bic": "bic", "adjr2": "adj_r2"}


class CliError(ValueError):
    pass


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--direction", choices=["forward", "backward"], default="forward")
    sub.add_argument("--criterion", choices=sorted(_CRITERIA), default="fixed")
    sub.add_argument("--k", type=int, default=None, help="model size (fixed criterion only)")
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument(
        "--sigma",
        default="identity",
        help="identity | scalar:<v> | estimate | file:<npy with stacked covariance>",
    )
    sub.add_argument("--z-mult", type=float, default=20.0, dest="z_mult")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--output", choices=["json", "table"], default="json")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sisda")
    subs = parser.add_subparsers(dest="command", required=True)

    analyze = subs.add_parser("analyze", help="per-feature selective p-values for CSV data")
    analyze.add_argument("--source", required=True)
    analyze.add_argument("--target", required=True)
    analyze.add_argument("--response", default="y", help="response column name")
    analyze.add_argument("--ns", type=int, default=None)
    analyze.add_argument("--nt", type=int, default=None)
    _add_common(analyze)

    for name in ("simulate-fpr", "simulate-tpr", "simulate-time"):
        sim = subs.add_parser(name)
        sim.add_argument("--ns", type=int, default=50)
        sim.add_argument("--nt", type=int, default=10)
        sim.add_argument("--p", type=int, default=5)
        sim.add_argument("--beta", type=float, default=None, help="target coefficient value")
        sim.add_argument("--trials", type=int, default=120)
        sim.add_argument(
            "--methods",
            default="selective,oc,naive,bonferroni",
            help="comma-separated subset of selective,oc,naive,bonferroni,ds",
        )
        _add_common(sim)
    return parser


def _resolve_sigma(text: str):
    if text in ("identity", "estimate"):
        return text
    if text.startswith("scalar:"):
        return float(text.split(":", 1)[1])
    if text.startswith("file:"):
        # The file holds the full stacked covariance matrix.
        return ("stacked", np.load(text.split(":", 1)[1]))
    raise CliError(f"unrecognized --sigma value {text!r}")


def _validate(args) -> str:
    criterion = _CRITERIA[args.criterion]
    if criterion == "fixed" and args.k is None:
        raise CliError("--criterion fixed requires --k")
    if criterion != "fixed" and args.k is not None:
        raise CliError(f"--k conflicts with --criterion {args.criterion}")
    return criterion


def _seed(args) -> int:
    env = os.environ.get("SISDA_SEED")
    return int(env) if env is not None else args.seed


def _cmd_analyze(args) -> int:
    criterion = _validate(args)
    sigma = _resolve_sigma(args.sigma)
    source, target = ingest_csv(
        args.source,
        args.target,
        response_column=args.response,
        n_s=args.ns,
        n_t=args.nt,
        seed=_seed(args),
    )
    config = InferenceConfig(
        direction=args.direction,
        criterion=criterion,
        k=args.k,
        alpha=args.alpha,
        sigma=sigma,
        z_mult=args.z_mult,
        seed=_seed(args),
    )
    results = run_si_seqfs_da(source, target, config)
    records = [
        {
            "feature": r.feature,
            "beta_hat": float(f"{r.z_obs:.6g}"),
            "p_selective": float(f"{r.p_selective:.6g}"),
            "p_naive": float(f"{r.p_naive:.6g}"),
            "p_bonferroni": float(f"{r.p_bonferroni:.6g}"),
            "p_oc": float(f"{r.p_oc:.6g}"),
            "region": [
                [float(f"{lo:.9g}"), float(f"{hi:.9g}")] for lo, hi in r.region
            ],
        }
        for r in results
    ]
    if args.output == "json":
        print(json.dumps(records, indent=2))
    else:
        for rec in records:
            print(
                f"feature {rec['feature']}: beta_hat={rec['beta_hat']} "
                f"p_selective={rec['p_selective']} p_naive={rec['p_naive']} "
                f"p_bonferroni={rec['p_bonferroni']} p_oc={rec['p_oc']}"
            )
    return 0


def _cmd_simulate(args, kind: str) -> int:
    criterion = _validate(args)
    beta = args.beta
    if beta is None:
        beta = 0.0 if kind == "fpr" else 2.0 if kind == "tpr" else 0.0
    config = SimConfig(
        n_s=args.ns,
        n_t=args.nt,
        p=args.p,
        k=args.k if criterion == "fixed" else None,
        beta_t=beta,
        trials=args.trials,
        alpha=args.alpha,
        seed=_seed(args),
        methods=tuple(args.methods.split(",")),
        direction=args.direction,
        criterion=criterion,
        sigma=_resolve_sigma(args.sigma),
        z_mult=args.z_mult,
    )
    if kind == "fpr":
        report = run_fpr_study(config)
    elif kind == "tpr":
        report = run_tpr_study(config)
    else:
        report = run_timing_study(config)
    print(report.to_json() if args.output == "json" else report.to_table())
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_simulate(args, args.command.split("-", 1)[1])
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
