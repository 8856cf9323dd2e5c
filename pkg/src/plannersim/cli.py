"""Command-line entry point.

Exit codes: 0 success, 1 bad flags/files, 2 no feasible parameters,
3 safety-check failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import analysis
from .errors import (
    ConfigInvalid,
    LogMalformed,
    NoFeasibleParams,
    ParamsInvalid,
)
from .evidence import chain_from_json, chain_to_json
from .eventlog import EventLog, check_linearizable
from .simulator import (
    World,
    attack_suite,
    check_integrity,
    config_from_dict,
    config_to_dict,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_UNSAFE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_optimize(args) -> int:
    try:
        n_audit, tau, dp, di = analysis.optimize_params(
            n=args.n,
            gamma=args.gamma,
            kappa=args.kappa,
            beta=args.beta,
            n_round=args.rounds,
            p1=args.p_privacy,
            p2=args.p_interrupt,
        )
    except NoFeasibleParams as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_INFEASIBLE
    except ParamsInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(
        json.dumps(
            {
                "n_audit": n_audit,
                "tau": tau,
                "delta_privacy": dp,
                "delta_interrupt": di,
            }
        )
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.custom:
        try:
            spec = {"custom": json.loads(Path(args.custom).read_text())}
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        spec = {"preset": args.spec}
        if args.kappa is not None:
            spec["kappa"] = args.kappa
    try:
        rows = analysis.sweep(spec)
    except (ConfigInvalid, ParamsInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write(args.out, analysis.rows_to_csv(rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            doc["master_seed"] = args.seed
        config = config_from_dict(doc)
        world = World(config)
    except (OSError, json.JSONDecodeError, ConfigInvalid, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = world.run()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "events.jsonl").write_text(result.log.to_jsonl() + "\n")
    (out / "chain.json").write_text(
        chain_to_json(result.chain, meta={"config": config_to_dict(config)})
    )
    summary = result.summary()
    lin_ok, _ = check_linearizable(result.log)
    int_ok, violations = check_integrity(result.log, result.chain, config)
    summary["linearizable"] = lin_ok
    summary["integrity"] = int_ok
    summary["violations"] = violations
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(
        f"rounds completed={summary['rounds_completed']}/"
        f"{summary['rounds_attempted']} "
        f"attack_bypassed={summary['attack_bypassed']} "
        f"linearizable={lin_ok} integrity={int_ok}"
    )
    if result.report.bypassed or not lin_ok or not int_ok:
        return EXIT_UNSAFE
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        log = EventLog.from_jsonl(Path(args.events).read_text())
    except (OSError, LogMalformed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        lin_ok, witness = check_linearizable(log)
    except LogMalformed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"linearizable: {'pass' if lin_ok else 'fail'}"
          + (f" witness={witness}" if lin_ok else " witness=none"))
    int_ok = True
    if args.chain:
        try:
            chain, meta = chain_from_json(Path(args.chain).read_text())
            config = config_from_dict(meta["config"])
        except (OSError, json.JSONDecodeError, KeyError, ConfigInvalid) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        int_ok, violations = check_integrity(log, chain, config)
        print(f"integrity: {'pass' if int_ok else 'fail'}")
        for v in violations:
            print(f"  violation: {v}")
    return EXIT_OK if lin_ok and int_ok else EXIT_UNSAFE


def cmd_attack(args) -> int:
    strategy = args.strategy.replace("-", "_")
    if strategy == "sybil":
        p = analysis.FailureParams(
            n=args.n, gamma=args.gamma, kappa=1.0, beta=0.0,
            n_audit=args.n_audit, tau=args.tau, n_round=1,
        )
        est, se = analysis.mc_round_failure("privacy", p, args.trials, args.seed)
        predicted = analysis.round_privacy_term(p)
        report = {
            "strategy": "sybil",
            "trials": args.trials,
            "empirical_rate": est,
            "std_error": se,
            "predicted_rate": predicted,
            "within_3_sigma": abs(est - predicted)
            <= 3 * max(se, math.sqrt(predicted * (1 - predicted) / args.trials)),
        }
    else:
        report = attack_suite(strategy, args.trials, args.seed)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plannersim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="minimal auditor count for targets")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=10_000)
    p.add_argument("--p-privacy", type=float, default=1e-8)
    p.add_argument("--p-interrupt", type=float, default=1e-8)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="failure-probability tables as CSV")
    p.add_argument("--spec", choices=["fig3left", "fig3right", "fig4"])
    p.add_argument("--custom", help="JSON file with explicit sweep points")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run a world config, write artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="linearizability/integrity of a log")
    p.add_argument("--events", required=True)
    p.add_argument("--chain", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("attack", help="seeded adversary suites")
    p.add_argument(
        "--strategy",
        required=True,
        choices=["fork", "rollback", "replay", "sybil", "pretend-crash"],
    )
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--n-audit", type=int, default=5)
    p.add_argument("--tau", type=int, default=4)
    p.set_defaults(func=cmd_attack)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
