"""Command-line interface.

Subcommands: simulate, estimate, recover, join, score, e2e, sweep.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .accuracy import score_trees
from .delay_cov import build_covariance_matrix, covariance_oracle_from_log
from .dynamic import attach_peer
from .errors import ConfigError, DataError, InvariantError, TomographyError
from .logio import export_log, import_log, load_matrix, load_tree, save_matrix, save_tree
from .model import branching_skeleton
from .ordering import dfs_order
from .recover import RecoveryConfig, auto_rho, recover_tree
from .scenarios import load_config, run_dynamic_scenario, run_scenario, write_report
from .simulator import SimulatorConfig, generate_topology, simulate_session


def _cmd_simulate(args) -> None:
    resolved = load_config(args.config)
    seed = args.seed if args.seed is not None else resolved["seeds"][0]
    kwargs = dict(resolved["simulator"])
    for key in ("link_base_delay_us", "link_delay_var_ms2", "pair_schedule_us"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    kwargs["seed"] = seed
    sim = SimulatorConfig(**kwargs)
    net = generate_topology(sim)
    log = simulate_session(net, sim)
    export_log(log, args.out)
    print(f"wrote {log.n_pairs} pairs for {len(log.receivers)} receivers to {args.out}")
    if args.truth_out:
        save_tree(net.truth, args.truth_out)
        print(f"wrote ground-truth tree to {args.truth_out}")


def _cmd_estimate(args) -> None:
    log = import_log(args.log)
    log.validate()
    receivers = sorted(log.receivers) if args.receivers is None else args.receivers.split(",")
    cov = build_covariance_matrix(log, receivers)
    save_matrix(cov, args.out)
    print(f"wrote {len(receivers)}x{len(receivers)} covariance matrix to {args.out}")


def _cmd_recover(args) -> None:
    cov = load_matrix(args.cov)
    rho = args.rho if args.rho is not None else auto_rho(cov)
    order = dfs_order(cov)
    tree = recover_tree(args.source, order, cov, RecoveryConfig(rho))
    tree.validate()
    save_tree(tree, args.out)
    print(f"recovered tree over {len(tree.leaves)} leaves (rho={rho:g} ms^2) to {args.out}")


def _cmd_join(args) -> None:
    tree = load_tree(args.tree)
    log = import_log(args.log)
    oracle = covariance_oracle_from_log(log)
    attach_peer(tree, oracle, args.peer, RecoveryConfig(args.rho))
    tree.validate()
    save_tree(tree, args.out)
    print(f"attached {args.peer} (rho={args.rho:g} ms^2); tree written to {args.out}")


def _cmd_score(args) -> None:
    recovered = load_tree(args.recovered)
    truth = load_tree(args.truth)
    if not args.raw:
        truth = branching_skeleton(truth)
    report = score_trees(recovered, truth)
    out = {
        "p": report.p,
        "p_distinct": report.p_distinct,
        "n_leaves": report.n_leaves,
        "against": "raw-truth" if args.raw else "truth-skeleton",
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, sort_keys=True, indent=2)
            fh.write("\n")
    print(json.dumps(out, sort_keys=True))


def _cmd_e2e(args) -> None:
    resolved = load_config(args.config)
    if resolved.get("joins"):
        report = run_dynamic_scenario(resolved)
        summary = report["summary"]
        print(
            f"dynamic: initial mean p={summary['initial_mean_p']:.4f} "
            f"final mean p={summary['final_mean_p']:.4f} drop={summary['mean_drop']:.4f}"
        )
    else:
        report = run_scenario(resolved)
        if report["mode"] == "static":
            summary = report["summary"]
            print(f"static: mean p={summary['mean_p']:.4f} (stderr {summary['stderr_p']:.4f})")
        else:
            for point in report["points"]:
                params = {k: v for k, v in point.items() if k not in ("runs", "summary", "tree")}
                print(f"{params}: mean p={point['summary']['mean_p']:.4f}")
    write_report(report, args.out)
    print(f"report written to {args.out}")


def _cmd_sweep(args) -> None:
    resolved = load_config(args.config)
    if not resolved.get("sweep"):
        raise ConfigError("sweep: section missing from config")
    report = run_scenario(resolved)
    for point in report["points"]:
        params = {k: v for k, v in point.items() if k not in ("runs", "summary", "tree")}
        print(f"{params}: mean p={point['summary']['mean_p']:.4f}")
    write_report(report, args.out)
    print(f"report written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covtomo",
        description="Passive routing-tree tomography from packet-pair delay covariance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a topology and synthesize a measurement log")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="NDJSON measurement log to write")
    p.add_argument("--truth-out", default=None, help="also write the ground-truth tree JSON")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="covariance matrix from a measurement log")
    p.add_argument("--log", required=True, help="NDJSON measurement log (import mode)")
    p.add_argument("--receivers", default=None, help="comma-separated subset (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("recover", help="recover the routing tree from a covariance matrix")
    p.add_argument("--cov", required=True)
    p.add_argument("--source", required=True, help="root host id")
    p.add_argument("--rho", type=float, default=None, help="threshold in ms^2 (default: auto)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("join", help="attach a joining peer to a recovered tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--log", required=True, help="NDJSON log covering the peer")
    p.add_argument("--peer", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_join)

    p = sub.add_parser("score", help="tomography accuracy of a recovered tree vs ground truth")
    p.add_argument("--recovered", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--raw", action="store_true", help="score against the raw truth tree "
                   "instead of its branching skeleton")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("e2e", help="run a full scenario (static, sweep, or dynamic) per config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_e2e)

    p = sub.add_parser("sweep", help="run the sweep section of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 4
    except TomographyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
