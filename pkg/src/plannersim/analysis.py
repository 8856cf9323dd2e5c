"""Closed-form failure probabilities for quorum auditing, the parameter
optimizer, a Monte-Carlo cross-check, and the parameter-sweep table generator.

Per-round failure terms are hypergeometric tails over the auditor draw:
privacy fails when the corrupted clients drawn can outvote (a > 2*tau -
n_audit); auditing is interrupted when the dropouts drawn leave fewer than tau
responders (a > n_audit - tau). Whole-run probabilities compound the per-round
term over n_round.

Small instances are evaluated with exact rational arithmetic; large ones in
log-space (gammaln + logsumexp) so n up to 1e9 stays finite.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConfigInvalid, NoFeasibleParams, ParamsInvalid

CSV_HEADER = "gamma,beta,kappa,n,n_round,n_audit,tau,delta_privacy,delta_interrupt"

# Above these sizes the exact rational path becomes slower than log-space.
_EXACT_POOL_LIMIT = 5_000
_EXACT_AUDIT_LIMIT = 600


@dataclass(frozen=True)
class FailureParams:
    n: int
    gamma: float
    kappa: float
    beta: float
    n_audit: int
    tau: int
    n_round: int

    # Fractional counts are rounded in the failure's favor so computed values
    # remain upper bounds: corrupted and dropouts up, the candidate pool down.
    @property
    def pool(self) -> int:
        return int(self.kappa * self.n)

    @property
    def corrupted(self) -> int:
        return math.ceil(self.gamma * self.n)

    @property
    def dropouts(self) -> int:
        return math.ceil(self.kappa * self.n * self.beta)


def _validate(p: FailureParams) -> None:
    if p.n < 1 or p.n_round < 1:
        raise ParamsInvalid("n and n_round must be positive")
    if not (0.0 <= p.gamma <= 1.0 and 0.0 <= p.beta <= 1.0):
        raise ParamsInvalid("gamma and beta must lie in [0, 1]")
    if not 0.0 < p.kappa <= 1.0:
        raise ParamsInvalid("kappa must lie in (0, 1]")
    if p.n_audit < 1 or p.n_audit > p.pool:
        raise ParamsInvalid("n_audit must lie in [1, floor(kappa*n)]")
    if not p.n_audit / 2 < p.tau <= p.n_audit:
        raise ParamsInvalid("tau must satisfy n_audit/2 < tau <= n_audit")


def _exact_tail(bad: int, good: int, n_audit: int, draws) -> float:
    """Sum over the given bad-draw counts of the hypergeometric pmf, exactly."""
    total = math.comb(bad + good, n_audit)
    acc = Fraction(0)
    for a in draws:
        if 0 <= a <= bad and 0 <= n_audit - a <= good:
            acc += Fraction(math.comb(bad, a) * math.comb(good, n_audit - a), total)
    return float(acc)


def _log_comb(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log C(a, b) with C(a,b)=0 (log -inf) outside 0 <= b <= a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.full(np.broadcast_shapes(a.shape, b.shape), -np.inf)
    valid = (b >= 0) & (b <= a)
    av, bv = np.broadcast_to(a, out.shape)[valid], np.broadcast_to(b, out.shape)[valid]
    out[valid] = gammaln(av + 1) - gammaln(bv + 1) - gammaln(av - bv + 1)
    return out


def _log_tail(bad: int, good: int, n_audit: int, draws: np.ndarray) -> float:
    if len(draws) == 0:
        return 0.0
    log_terms = (
        _log_comb(bad, draws)
        + _log_comb(good, n_audit - draws)
        - _log_comb(bad + good, n_audit)
    )
    if np.all(np.isneginf(log_terms)):
        return 0.0
    return float(np.exp(logsumexp(log_terms)))


def _tail(bad: int, good: int, n_audit: int, draws) -> float:
    draws = np.asarray(sorted(draws), dtype=np.int64)
    if bad + good <= _EXACT_POOL_LIMIT and n_audit <= _EXACT_AUDIT_LIMIT:
        return _exact_tail(bad, good, n_audit, draws.tolist())
    return min(1.0, _log_tail(bad, good, n_audit, draws))


def round_privacy_term(p: FailureParams) -> float:
    """Pr[corrupted auditors drawn > 2*tau - n_audit] in one round."""
    _validate(p)
    bad, good = p.corrupted, p.pool - p.corrupted
    if bad == 0:
        return 0.0
    draws = [2 * p.tau - p.n_audit + i for i in range(1, 2 * (p.n_audit - p.tau) + 1)]
    return _tail(bad, good, p.n_audit, draws)


def round_interrupt_term(p: FailureParams) -> float:
    """Pr[dropout auditors drawn > n_audit - tau] in one round."""
    _validate(p)
    bad, good = p.dropouts, p.pool - p.dropouts
    if bad == 0:
        return 0.0
    draws = [p.n_audit - p.tau + i for i in range(1, p.tau + 1)]
    return _tail(bad, good, p.n_audit, draws)


def _over_rounds(p_round: float, n_round: int) -> float:
    """1 - (1 - p)^n_round without cancellation for tiny p."""
    if p_round <= 0.0:
        return 0.0
    if p_round >= 1.0:
        return 1.0
    return -math.expm1(n_round * math.log1p(-p_round))


def delta_privacy(p: FailureParams) -> float:
    return _over_rounds(round_privacy_term(p), p.n_round)


def delta_interrupt(p: FailureParams) -> float:
    return _over_rounds(round_interrupt_term(p), p.n_round)


# --- parameter optimization ---------------------------------------------------

def _tau_bounds(n_audit: int) -> tuple[int, int]:
    return n_audit // 2 + 1, n_audit


def _feasible_tau(p: FailureParams, p1: float, p2: float):
    """Smallest tau meeting both targets for this n_audit, or None.

    delta_privacy is nonincreasing in tau and delta_interrupt nondecreasing, so
    each boundary is found by binary search and the feasible taus form an
    interval."""
    lo, hi = _tau_bounds(p.n_audit)
    if delta_privacy(replace(p, tau=hi)) > p1:
        return None
    if delta_interrupt(replace(p, tau=lo)) > p2:
        return None
    # smallest tau with delta_privacy <= p1
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if delta_privacy(replace(p, tau=mid)) <= p1:
            b = mid
        else:
            a = mid + 1
    tau_min = a
    # largest tau with delta_interrupt <= p2
    a, b = lo, hi
    while a < b:
        mid = (a + b + 1) // 2
        if delta_interrupt(replace(p, tau=mid)) <= p2:
            a = mid
        else:
            b = mid - 1
    tau_max = a
    if tau_min > tau_max:
        return None
    return tau_min


def optimize_params(
    n: int,
    gamma: float,
    kappa: float,
    beta: float,
    n_round: int,
    p1: float,
    p2: float,
) -> tuple[int, int, float, float]:
    """Minimal n_audit (and a witnessing tau) with delta_privacy <= p1 and
    delta_interrupt <= p2, searched up to the candidate-pool cap."""
    if not (0.0 < p1 < 1.0 and 0.0 < p2 < 1.0):
        raise ParamsInvalid("targets must lie in (0, 1)")
    base = FailureParams(
        n=n, gamma=gamma, kappa=kappa, beta=beta, n_audit=1, tau=1, n_round=n_round
    )
    cap = base.pool
    if cap < 1:
        raise ParamsInvalid("empty candidate pool")

    def feasible(n_audit: int):
        return _feasible_tau(replace(base, n_audit=n_audit), p1, p2)

    # Exponential probe for the first feasible n_audit, then binary search.
    probe, last_bad = 1, 0
    while probe <= cap and feasible(probe) is None:
        last_bad = probe
        probe *= 2
    if probe > cap:
        probe = cap
        if last_bad >= cap or feasible(cap) is None:
            raise NoFeasibleParams(
                f"no (n_audit, tau) with n_audit <= {cap} meets the targets"
            )
    lo, hi = last_bad + 1, probe
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(mid) is not None:
            hi = mid
        else:
            lo = mid + 1
    n_audit = lo
    tau = feasible(n_audit)
    best = replace(base, n_audit=n_audit, tau=tau)
    dp, di = delta_privacy(best), delta_interrupt(best)
    assert dp <= p1 and di <= p2
    return n_audit, tau, dp, di


# --- Monte-Carlo cross-check --------------------------------------------------

def mc_round_failure(
    mode: str, p: FailureParams, trials: int, seed: int
) -> tuple[float, float]:
    """Empirical per-round failure frequency from simulated auditor draws."""
    _validate(p)
    if trials < 1_000:
        raise ParamsInvalid("need at least 1000 trials")
    if mode == "privacy":
        bad, threshold = p.corrupted, 2 * p.tau - p.n_audit
    elif mode == "interrupt":
        bad, threshold = p.dropouts, p.n_audit - p.tau
    else:
        raise ParamsInvalid(f"unknown mode {mode!r}")
    if bad == 0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    draws = rng.hypergeometric(
        ngood=bad, nbad=p.pool - bad, nsample=p.n_audit, size=trials
    )
    estimate = float(np.count_nonzero(draws > threshold)) / trials
    std_error = math.sqrt(estimate * (1.0 - estimate) / trials)
    return estimate, std_error


# --- sweeps -------------------------------------------------------------------

def _row(p: FailureParams, dp: float, di: float) -> dict:
    return {
        "gamma": p.gamma,
        "beta": p.beta,
        "kappa": p.kappa,
        "n": p.n,
        "n_round": p.n_round,
        "n_audit": p.n_audit,
        "tau": p.tau,
        "delta_privacy": dp,
        "delta_interrupt": di,
    }


def sweep_points(points: list[FailureParams]) -> list[dict]:
    return [_row(p, delta_privacy(p), delta_interrupt(p)) for p in points]


def sweep_tradeoff_privacy(
    gammas=(0.05, 0.1, 0.2),
    n_audits=tuple(range(40, 301, 4)),
    n: int = 10**7,
    n_round: int = 10**4,
    kappa: float = 1.0,
) -> list[dict]:
    """Privacy-failure curves, one per gamma, with beta=0.

    tau = 3*n_audit/4: the privacy panel wants a high quorum (the corrupted
    minority must reach 2*tau - n_audit), and the 3/4 rule keeps the outvote
    threshold at n_audit/2 so the curve falls strictly as n_audit grows."""
    points = [
        FailureParams(
            n=n, gamma=g, kappa=kappa, beta=0.0, n_audit=na,
            tau=3 * na // 4, n_round=n_round,
        )
        for g in gammas
        for na in n_audits
    ]
    return sweep_points(points)


def sweep_tradeoff_interrupt(
    betas=(0.05, 0.1, 0.2),
    n_audits=tuple(range(40, 301, 4)),
    n: int = 10**7,
    n_round: int = 10**4,
    kappa: float = 1.0,
) -> list[dict]:
    """Interrupt curves, one per beta, with gamma=0 and bare-majority tau
    (the liveness-friendly extreme: dropouts must exceed n_audit - tau)."""
    points = [
        FailureParams(
            n=n, gamma=0.0, kappa=kappa, beta=b, n_audit=na,
            tau=na // 2 + 1, n_round=n_round,
        )
        for b in betas
        for na in n_audits
    ]
    return sweep_points(points)


def sweep_minimal(
    gammas=(0.0, 0.05, 0.1, 0.15, 0.2),
    betas=(0.0, 0.05, 0.1, 0.15, 0.2),
    n: int = 10**7,
    n_round: int = 10**4,
    kappa: float = 1.0,
    p1: float = 1e-8,
    p2: float = 1e-8,
) -> list[dict]:
    """Minimal n_audit per (gamma, beta) cell; infeasible cells get n_audit=-1."""
    rows = []
    for g in gammas:
        for b in betas:
            try:
                na, tau, dp, di = optimize_params(n, g, kappa, b, n_round, p1, p2)
                p = FailureParams(
                    n=n, gamma=g, kappa=kappa, beta=b, n_audit=na, tau=tau,
                    n_round=n_round,
                )
                rows.append(_row(p, dp, di))
            except NoFeasibleParams:
                p = FailureParams(
                    n=n, gamma=g, kappa=kappa, beta=b, n_audit=1, tau=1,
                    n_round=n_round,
                )
                row = _row(p, float("nan"), float("nan"))
                row["n_audit"] = -1
                row["tau"] = -1
                rows.append(row)
    return rows


def sweep(spec: dict) -> list[dict]:
    """Dispatch on a sweep spec: {"preset": name, **overrides} or
    {"custom": [param dicts]}."""
    if "custom" in spec:
        points = []
        for d in spec["custom"]:
            try:
                points.append(FailureParams(**d))
            except TypeError as exc:
                raise ConfigInvalid(f"bad sweep point: {exc}") from exc
        return sweep_points(points)
    preset = spec.get("preset")
    overrides = {k: v for k, v in spec.items() if k != "preset"}
    presets = {
        "fig3left": sweep_tradeoff_privacy,
        "fig3right": sweep_tradeoff_interrupt,
        "fig4": sweep_minimal,
    }
    if preset not in presets:
        raise ConfigInvalid(f"unknown sweep preset {preset!r}")
    try:
        return presets[preset](**overrides)
    except TypeError as exc:
        raise ConfigInvalid(f"bad sweep override: {exc}") from exc


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for row in rows:
        buf.write(
            "{gamma:g},{beta:g},{kappa:g},{n},{n_round},{n_audit},{tau},"
            "{delta_privacy:.12g},{delta_interrupt:.12g}\n".format(**row)
        )
    return buf.getvalue()
