#!/usr/bin/env python3
"""Solve the reference parameter-selection problem (n=1e7, gamma=beta=0.1,
kappa=1, 1e4 rounds, both failure targets 1e-8) and print the minimal
auditor count, quorum threshold, and achieved failure probabilities."""
from plannersim.analysis import optimize_params

if __name__ == "__main__":
    n_audit, tau, dp, di = optimize_params(
        n=10**7, gamma=0.1, kappa=1.0, beta=0.1, n_round=10**4,
        p1=1e-8, p2=1e-8,
    )
    print(f"n_audit={n_audit} tau={tau}")
    print(f"delta_privacy={dp:.6g} delta_interrupt={di:.6g}")
