#!/usr/bin/env python3
"""Run every shipped adversary strategy with both safety checkers enabled
and print one summary line per strategy."""
import argparse

from plannersim.simulator import attack_suite

STRATEGIES = ["fork", "rollback", "replay", "pretend_crash", "crash_recover",
              "sybil_flood"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    any_bypass = False
    for strategy in STRATEGIES:
        rep = attack_suite(
            strategy, trials=args.trials, base_seed=args.seed, check=True
        )
        any_bypass |= bool(rep["runs_bypassed"] or rep["divergent_digests"]
                           or rep["checker_failures"])
        print(
            f"{strategy:14s} attempted={rep['attack_processes_attempted']:4d} "
            f"completed={rep['attack_processes_completed']:4d} "
            f"divergent={rep['divergent_digests']} "
            f"bypassed={rep['runs_bypassed']} "
            f"checker_failures={rep['checker_failures']} "
            f"aborts={rep['abort_reasons']}"
        )
    print("safety held" if not any_bypass else "SAFETY VIOLATED")
    return 1 if any_bypass else 0


if __name__ == "__main__":
    raise SystemExit(main())
