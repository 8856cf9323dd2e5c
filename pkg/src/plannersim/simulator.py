"""Deterministic world simulation of the update protocol.

A World owns the platform, the client population, the evidence chain, and the
global model. Every source of randomness is split from the master seed, so a
run — including adversarial interleavings — is a pure function of its config.
Also hosts the integrity checker (recomputes round outputs from seeds) and the
trusted-party reference oracle used for output-equivalence testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import primitives as prim
from .actors import (
    AdversaryScript,
    AttackReport,
    AuditAbort,
    make_clients,
)
from .dpftrl import (
    NoiseMatrix,
    ParticipationSchema,
    StrategyMatrix,
    clip,
    correlated_noise,
    f_qualify,
    local_update,
)
from .enclave import (
    ArgsSecagg,
    PlannerEnclave,
    Platform,
    ProtocolParams,
    SecAggMessage,
    args_hash,
)
from .errors import (
    CohortIncomplete,
    ConfigInvalid,
    QuorumNotReached,
    TooFewCandidates,
)
from .evidence import (
    EvidenceChain,
    derive_history,
    encode_evidence,
    evidence_digest,
    verify_chain,
)
from .eventlog import EventLog, check_linearizable, group_processes

SYBIL_UPDATE_INDEX = 0  # corrupted clients load their mass on one coordinate


@dataclass(frozen=True)
class WorldConfig:
    n: int
    n_round: int
    n_audit: int
    tau: int
    d: int = 4
    gamma: float = 0.0
    kappa: float = 1.0
    beta: float = 0.0
    sigma: float = 1.0
    zeta: float = 1.0
    schema_variant: str = "min_separation"
    schema_b: int = 1
    strategy: str = "identity"
    overselect_margin: int = 0
    cohort_size: int = 5
    learning_rate: float = 0.1
    samples_per_client: int = 4
    master_seed: int = 0
    adversary: AdversaryScript = field(default_factory=AdversaryScript)

    def schema(self) -> ParticipationSchema:
        return ParticipationSchema(
            variant=self.schema_variant, b=self.schema_b, n_round=self.n_round
        )


def validate_config(config: WorldConfig) -> None:
    c = config
    if c.n < 1 or c.n_round < 1 or c.d < 1:
        raise ConfigInvalid("n, n_round, d must be positive")
    for name in ("gamma", "beta"):
        if not 0.0 <= getattr(c, name) <= 1.0:
            raise ConfigInvalid(f"{name} must lie in [0, 1]")
    if not 0.0 < c.kappa <= 1.0:
        raise ConfigInvalid("kappa must lie in (0, 1]")
    pool = int(c.kappa * c.n)
    if c.n_audit < 1 or c.n_audit > pool:
        raise ConfigInvalid("n_audit must lie in [1, floor(kappa*n)]")
    if not c.n_audit / 2 < c.tau <= c.n_audit:
        raise ConfigInvalid("tau must satisfy n_audit/2 < tau <= n_audit")
    if c.cohort_size < 1 or c.cohort_size > c.n:
        raise ConfigInvalid("cohort_size must lie in [1, n]")
    if c.schema_variant == "once" and c.cohort_size * c.n_round > c.n:
        raise ConfigInvalid("once-schema needs cohort_size * n_round <= n")
    if c.overselect_margin < 0 or c.overselect_margin >= c.cohort_size:
        raise ConfigInvalid("overselect_margin must lie in [0, cohort_size)")
    if c.sigma < 0 or c.zeta <= 0 or c.learning_rate <= 0:
        raise ConfigInvalid("sigma >= 0, zeta > 0, learning_rate > 0 required")


@dataclass
class SimResult:
    config: WorldConfig
    log: EventLog
    chain: EvidenceChain
    outputs: list  # per attempted round: np.ndarray or None
    report: AttackReport
    audit_broadcast_sizes: list
    secagg_control_sizes: list
    secagg_message_sizes: list

    @property
    def rounds_completed(self) -> int:
        return sum(1 for o in self.outputs if o is not None)

    def summary(self) -> dict:
        return {
            "rounds_attempted": len(self.outputs),
            "rounds_completed": self.rounds_completed,
            "chain_length": len(self.chain),
            "attack": self.report.to_dict(),
            "attack_bypassed": self.report.bypassed,
            "audit_broadcast_sizes": sorted(set(self.audit_broadcast_sizes)),
            "secagg_control_sizes": sorted(set(self.secagg_control_sizes)),
            "secagg_message_sizes": sorted(set(self.secagg_message_sizes)),
        }


def sybil_update(d: int, zeta: float) -> np.ndarray:
    v = np.zeros(d)
    if d > 0:
        v[SYBIL_UPDATE_INDEX] = zeta
    return v


class World:
    def __init__(self, config: WorldConfig):
        validate_config(config)
        self.config = config
        ms = config.master_seed
        self.platform = Platform.create(
            prim.seed_to_int(prim.derive_seed(ms, b"platform"))
        )
        self.n_corrupted = math.ceil(config.gamma * config.n)
        self.clients = make_clients(
            config.n, ms, config.d, self.n_corrupted, config.samples_per_client
        )
        pool_size = int(config.kappa * config.n)
        pool_rng = np.random.default_rng(
            prim.seed_to_int(prim.derive_seed(ms, b"pool"))
        )
        self.pool = sorted(
            pool_rng.choice(config.n, size=pool_size, replace=False).tolist()
        )
        self._assign_dropouts()
        self.params = ProtocolParams(
            n_audit=config.n_audit,
            tau=config.tau,
            kappa=config.kappa,
            sigma=config.sigma,
            schema=config.schema(),
            strategy=config.strategy,
            overselect_margin=config.overselect_margin,
        )
        self.log = EventLog()
        self.chain: EvidenceChain | None = None
        self.blob = None
        self.theta = np.zeros(config.d)
        self.outputs: list = []
        self.audit_broadcast_sizes: list = []
        self.secagg_control_sizes: list = []
        self.secagg_message_sizes: list = []
        self._pid = 0
        self._sched_rng = np.random.default_rng(
            prim.seed_to_int(prim.derive_seed(ms, b"scheduler"))
        )

    def _assign_dropouts(self):
        c = self.config
        n_drop = math.ceil(c.beta * c.kappa * c.n) if c.beta > 0 else 0
        if n_drop == 0:
            return
        for r in range(c.n_round):
            rng = np.random.default_rng(
                prim.seed_to_int(prim.derive_seed(c.master_seed, b"dropout", r))
            )
            dropped = rng.choice(len(self.pool), size=n_drop, replace=False)
            for k in dropped:
                self.clients[self.pool[k]].dropout_rounds.add(r)

    def new_pid(self) -> str:
        pid = f"p{self._pid}"
        self._pid += 1
        return pid

    # -- protocol phases -----------------------------------------------------

    def initialize(self):
        pubkeys = [c.keys.public_key for c in self.clients]
        enc, broadcast = PlannerEnclave.init_enclave(
            self.platform, pubkeys, self.pool, self.params, self.config.master_seed
        )
        signatures = {}
        for c in self.clients:
            sig = c.audit_init(broadcast, self.platform)
            if isinstance(sig, bytes):
                signatures[c.index] = sig
        self.blob, ev = enc.finish_init(signatures)
        self.chain = EvidenceChain((ev,))

    def _next_round(self, chain: EvidenceChain) -> int:
        i = sum(1 for e in chain.entries if e.kind in ("update", "recovery"))
        return min(i, self.config.n_round - 1)

    def pick_cohort(self, label: int) -> tuple[int, ...]:
        history = derive_history(self.chain, self.config.n)
        qualified = sorted(
            f_qualify(self.config.schema(), history, self._next_round(self.chain))
        )
        rng = np.random.default_rng(
            prim.seed_to_int(
                prim.derive_seed(self.config.master_seed, b"cohort", label)
            )
        )
        if len(qualified) < self.config.cohort_size:
            raise ConfigInvalid("not enough qualified clients for a cohort")
        picked = rng.choice(
            len(qualified), size=self.config.cohort_size, replace=False
        )
        return tuple(sorted(qualified[k] for k in picked))

    def start_process(self, cohort, args: ArgsSecagg, chain=None):
        chain = chain if chain is not None else self.chain
        enc, broadcast = PlannerEnclave.replicate(
            self.platform, self.blob, chain, cohort, args, self.pool
        )
        pid = self.new_pid()
        self.log.invoke(
            pid,
            cohort=tuple(cohort),
            round_index=broadcast.round_index,
            args_hash=broadcast.input_hash,
            loaded_digest=broadcast.chain_digest,
        )
        self.audit_broadcast_sizes.append(broadcast.size_bytes())
        return enc, broadcast, pid

    def gather_audit(self, enc, broadcast, round_label) -> tuple[dict, list]:
        signatures, aborts = {}, []
        for j in enc.audit_set:
            reply = self.clients[j].audit(broadcast, self.platform, round_label)
            if isinstance(reply, bytes):
                signatures[j] = reply
            elif isinstance(reply, AuditAbort):
                aborts.append(reply.reason)
        return signatures, aborts

    def gather_secagg(self, enc, round_label) -> list[SecAggMessage]:
        sbc = enc.secagg_broadcast()
        self.secagg_control_sizes.append(sbc.control_size_bytes())
        messages = []
        for j in enc.cohort:
            reply = self.clients[j].secagg(sbc, self.platform, round_label)
            if isinstance(reply, SecAggMessage):
                self.secagg_message_sizes.append(reply.control_size_bytes())
                messages.append(reply)
        return messages

    def complete_process(self, enc, pid, ev, round_label):
        """Append evidence, run aggregation, record the response, step theta."""
        self.chain = self.chain.append(ev)
        messages = self.gather_secagg(enc, round_label)
        try:
            output = enc.secure_aggregate(messages)
        except CohortIncomplete as exc:
            self.log.aborted(pid, f"CohortIncomplete({exc})")
            return None
        self.log.respond(
            pid,
            output_digest=prim.hash_data(output.tobytes()),
            emitted_evidence_digest=evidence_digest(ev),
            participants=tuple(enc.participants),
        )
        self.theta = self.theta - self.config.learning_rate * output
        return output

    def honest_round(self, round_label: int):
        """One full honest update process; returns the output or None."""
        cohort = self.pick_cohort(round_label)
        args = ArgsSecagg(theta=self.theta.copy(), d=self.config.d, zeta=self.config.zeta)
        enc, broadcast, pid = self.start_process(cohort, args)
        signatures, _ = self.gather_audit(enc, broadcast, round_label)
        try:
            ev = enc.collect_agreement(signatures)
        except QuorumNotReached as exc:
            self.log.aborted(pid, f"QuorumNotReached({exc})")
            return None
        return self.complete_process(enc, pid, ev, round_label)

    # -- adversary strategies ------------------------------------------------

    def _attack_process(self, report, cohort, args, chain=None):
        """Run one adversarial process to completion or abort, reporting it."""
        report.processes_attempted += 1
        try:
            enc, broadcast, pid = self.start_process(cohort, args, chain=chain)
        except Exception as exc:
            report.abort_reasons.append(type(exc).__name__)
            return None
        signatures, aborts = self.gather_audit(enc, broadcast, None)
        report.abort_reasons.extend(aborts)
        try:
            ev = enc.collect_agreement(signatures)
        except QuorumNotReached:
            self.log.aborted(pid, "QuorumNotReached")
            report.abort_reasons.append("QuorumNotReached")
            return None
        output = self.complete_process(enc, pid, ev, None)
        if output is not None:
            report.processes_completed += 1
        return output

    def _fork_round(self, round_label, report):
        """Two replicas of the same sealed state + chain, different cohorts;
        the adversary schedules which one reaches the auditors first."""
        base_chain = self.chain
        cohort_a = self.pick_cohort(round_label)
        history = derive_history(base_chain, self.config.n)
        i = self._next_round(base_chain)
        spare = sorted(
            f_qualify(self.config.schema(), history, i) - set(cohort_a)
        )
        cohort_b = tuple(spare[: self.config.cohort_size])
        if len(cohort_b) < self.config.cohort_size:
            cohort_b = cohort_a  # same cohort, different model -> different input
        args_a = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        args_b = ArgsSecagg(
            self.theta.copy() + 1.0 if cohort_b == cohort_a else self.theta.copy(),
            self.config.d,
            self.config.zeta,
        )
        forks = [(cohort_a, args_a), (cohort_b, args_b)]
        order = self._sched_rng.permutation(2)
        output = None
        for k in order:
            cohort, args = forks[k]
            out = self._attack_process(report, cohort, args, chain=base_chain)
            if out is not None:
                output = out
        return output

    def _rollback_attack(self, stale_chain, report):
        """Replay a stale chain prefix whose digest the auditors already
        signed when it was current."""
        history = derive_history(stale_chain, self.config.n)
        i = self._next_round(stale_chain)
        qualified = sorted(f_qualify(self.config.schema(), history, i))
        cohort = tuple(qualified[: self.config.cohort_size])
        args = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        live_chain = self.chain
        self._attack_process(report, cohort, args, chain=stale_chain)
        self.chain = live_chain  # any append onto the stale branch is discarded

    def _replay_attack(self, old_signatures, report):
        """Present signatures gathered for an earlier nonce to a new process."""
        report.processes_attempted += 1
        cohort = self.pick_cohort(10_000 + len(self.log))
        args = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        enc, broadcast, pid = self.start_process(cohort, args)
        try:
            enc.collect_agreement(old_signatures)
        except QuorumNotReached:
            self.log.aborted(pid, "QuorumNotReached")
            report.abort_reasons.append("QuorumNotReached")
            return
        report.processes_completed += 1  # should be unreachable

    def _pretend_crash_round(self, round_label, report):
        """Reach quorum, abandon the process, then try to continue from the
        sealed blob as if nothing happened; finally recover legitimately."""
        cohort = self.pick_cohort(round_label)
        args = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        enc, broadcast, pid = self.start_process(cohort, args)
        report.processes_attempted += 1
        signatures, _ = self.gather_audit(enc, broadcast, round_label)
        ev = enc.collect_agreement(signatures)
        enc.crash()
        self.log.aborted(pid, "PretendCrash")
        # Continuation attempt with a different cohort against the same digest.
        history = derive_history(self.chain, self.config.n)
        i = broadcast.round_index
        spare = sorted(f_qualify(self.config.schema(), history, i) - set(cohort))
        cohort2 = tuple(spare[: self.config.cohort_size]) or cohort
        args2 = ArgsSecagg(self.theta.copy() + 1.0, self.config.d, self.config.zeta)
        self._attack_process(report, cohort2, args2)
        # Legitimate continuation: recover the quorum-approved transition.
        ev_rec = PlannerEnclave.recovery(
            self.platform, self.blob, self.chain, broadcast, signatures
        )
        report.extra["recovered_identical"] = (
            encode_evidence(ev_rec) == encode_evidence(ev)
        )
        self._log_recovery(cohort, broadcast, ev_rec)
        self.chain = self.chain.append(ev_rec)
        return None

    def _log_recovery(self, cohort, broadcast, ev_rec):
        """The recovered transition is a completed process with no output."""
        pid = self.new_pid()
        self.log.invoke(
            pid,
            cohort=tuple(cohort),
            round_index=broadcast.round_index,
            args_hash=broadcast.input_hash,
            loaded_digest=broadcast.chain_digest,
        )
        self.log.respond(pid, emitted_evidence_digest=evidence_digest(ev_rec))

    def _crash_recover_round(self, round_label, report):
        """Benign crash after quorum: the recovered evidence extends the chain
        byte-identically; the round's aggregation output is lost."""
        cohort = self.pick_cohort(round_label)
        args = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        enc, broadcast, pid = self.start_process(cohort, args)
        signatures, _ = self.gather_audit(enc, broadcast, round_label)
        ev = enc.collect_agreement(signatures)
        enc.crash()
        self.log.aborted(pid, "Crashed")
        ev_rec = PlannerEnclave.recovery(
            self.platform, self.blob, self.chain, broadcast, signatures
        )
        report.extra["recovered_identical"] = (
            encode_evidence(ev_rec) == encode_evidence(ev)
        )
        self._log_recovery(cohort, broadcast, ev_rec)
        self.chain = self.chain.append(ev_rec)
        return None

    def _sybil_flood(self, report):
        """All-corrupted candidate pool (caught by the minimum-pool check),
        then Monte-Carlo auditor draws measuring quorum corruption."""
        c = self.config
        corrupted = list(range(self.n_corrupted))
        args = ArgsSecagg(self.theta.copy(), c.d, c.zeta)
        cohort = self.pick_cohort(0)
        report.processes_attempted += 1
        try:
            PlannerEnclave.replicate(
                self.platform, self.blob, self.chain, cohort, args, corrupted
            )
        except TooFewCandidates:
            report.abort_reasons.append("TooFewCandidates")
        trials = int(self.config.adversary.params.get("trials", 10_000))
        pool = int(c.kappa * c.n)
        rng = np.random.default_rng(
            prim.seed_to_int(prim.derive_seed(c.master_seed, b"sybil-mc"))
        )
        draws = rng.hypergeometric(
            ngood=self.n_corrupted,
            nbad=pool - self.n_corrupted,
            nsample=c.n_audit,
            size=trials,
        )
        hits = int(np.count_nonzero(draws > 2 * c.tau - c.n_audit))
        rate = hits / trials
        report.extra.update(
            trials=trials,
            quorum_corrupted=hits,
            empirical_rate=rate,
            std_error=math.sqrt(max(rate * (1 - rate), 1.0 / trials) / trials),
        )

    # -- top-level driver ----------------------------------------------------

    def run(self) -> SimResult:
        script = self.config.adversary
        self.initialize()
        report = AttackReport(strategy=script.strategy)
        if script.strategy == "sybil_flood":
            self._sybil_flood(report)
        stale_chain = None
        replay_material = None
        for r in range(self.config.n_round):
            at_attack_round = r == script.attack_round
            if script.strategy == "fork" and at_attack_round:
                self.outputs.append(self._fork_round(r, report))
                continue
            if script.strategy == "pretend_crash" and at_attack_round:
                self.outputs.append(self._pretend_crash_round(r, report))
                continue
            if script.strategy == "crash_recover" and at_attack_round:
                self.outputs.append(self._crash_recover_round(r, report))
                continue
            if script.strategy == "rollback" and at_attack_round:
                stale_chain = self.chain  # snapshot before this round commits
            if script.strategy == "replay" and at_attack_round:
                replay_material = self._honest_round_capturing(r)
                continue
            self.outputs.append(self.honest_round(r))
            if (
                script.strategy == "rollback"
                and stale_chain is not None
                and r == script.attack_round + 1
            ):
                self._rollback_attack(stale_chain, report)
                stale_chain = None
            if (
                script.strategy == "replay"
                and replay_material is not None
                and r == script.attack_round + 1
            ):
                self._replay_attack(replay_material, report)
                replay_material = None
        report.divergent_digests = count_divergent(self.log)
        report.bypassed = report.divergent_digests > 0
        return SimResult(
            config=self.config,
            log=self.log,
            chain=self.chain,
            outputs=self.outputs,
            report=report,
            audit_broadcast_sizes=self.audit_broadcast_sizes,
            secagg_control_sizes=self.secagg_control_sizes,
            secagg_message_sizes=self.secagg_message_sizes,
        )

    def _honest_round_capturing(self, round_label):
        """Honest round that also leaks the audit signatures to the adversary."""
        cohort = self.pick_cohort(round_label)
        args = ArgsSecagg(self.theta.copy(), self.config.d, self.config.zeta)
        enc, broadcast, pid = self.start_process(cohort, args)
        signatures, _ = self.gather_audit(enc, broadcast, round_label)
        try:
            ev = enc.collect_agreement(signatures)
        except QuorumNotReached:
            self.log.aborted(pid, "QuorumNotReached")
            self.outputs.append(None)
            return dict(signatures)
        self.outputs.append(self.complete_process(enc, pid, ev, round_label))
        return dict(signatures)


def run(config: WorldConfig) -> SimResult:
    return World(config).run()


def count_divergent(log: EventLog) -> int:
    """Loaded digests for which two completed processes emitted different
    successor evidence — the dynamic single-completion property."""
    seen: dict[bytes, set[bytes]] = {}
    for view in group_processes(log).values():
        if view.completed:
            seen.setdefault(view.invoke.loaded_digest, set()).add(
                view.terminal.emitted_evidence_digest
            )
    return sum(1 for v in seen.values() if len(v) > 1)


# --- config serialization ----------------------------------------------------

_CONFIG_FIELDS = (
    "n", "n_round", "n_audit", "tau", "d", "gamma", "kappa", "beta", "sigma",
    "zeta", "schema_variant", "schema_b", "strategy", "overselect_margin",
    "cohort_size", "learning_rate", "samples_per_client", "master_seed",
)


def config_to_dict(config: WorldConfig) -> dict:
    out = {name: getattr(config, name) for name in _CONFIG_FIELDS}
    out["adversary"] = {
        "strategy": config.adversary.strategy,
        "attack_round": config.adversary.attack_round,
        "params": dict(config.adversary.params),
    }
    return out


def config_from_dict(doc: dict) -> WorldConfig:
    unknown = set(doc) - set(_CONFIG_FIELDS) - {"adversary"}
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in doc.items() if k != "adversary"}
    adv = doc.get("adversary", {})
    unknown = set(adv) - {"strategy", "attack_round", "params"}
    if unknown:
        raise ConfigInvalid(f"unknown adversary keys: {sorted(unknown)}")
    try:
        kwargs["adversary"] = AdversaryScript(**adv)
        return WorldConfig(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc


# --- seeded attack suites ----------------------------------------------------

def attack_suite(
    strategy: str, trials: int, base_seed: int, check: bool = False, **overrides
) -> dict:
    """Run `trials` independently seeded worlds under one adversary strategy
    and aggregate the reports; optionally run both safety checkers per run."""
    defaults = dict(
        n=20, n_round=4, n_audit=5, tau=3, d=4, cohort_size=4, sigma=0.5
    )
    defaults.update(overrides)
    attempted = completed = divergent = bypassed = check_failures = 0
    reasons: dict[str, int] = {}
    for t in range(trials):
        config = WorldConfig(
            master_seed=base_seed + t,
            adversary=AdversaryScript(strategy=strategy, attack_round=1),
            **defaults,
        )
        result = World(config).run()
        attempted += result.report.processes_attempted
        completed += result.report.processes_completed
        divergent += result.report.divergent_digests
        bypassed += int(result.report.bypassed)
        for reason in result.report.abort_reasons:
            reasons[reason] = reasons.get(reason, 0) + 1
        if check:
            lin_ok, _ = check_linearizable(result.log)
            int_ok, _ = check_integrity(result.log, result.chain, config)
            if not (lin_ok and int_ok):
                check_failures += 1
    return {
        "strategy": strategy,
        "trials": trials,
        "attack_processes_attempted": attempted,
        "attack_processes_completed": completed,
        "divergent_digests": divergent,
        "runs_bypassed": bypassed,
        "checker_failures": check_failures if check else None,
        "abort_reasons": reasons,
    }


# --- integrity checking ------------------------------------------------------

def check_integrity(
    log: EventLog, chain: EvidenceChain, config: WorldConfig
) -> tuple[bool, list[str]]:
    """True iff the chain verifies, every prefix respects the participation
    schema, and every completed process's output digest matches a from-seeds
    recomputation of clipped updates plus the round's correlated noise."""
    violations: list[str] = []
    platform = Platform.create(
        prim.seed_to_int(prim.derive_seed(config.master_seed, b"platform"))
    )
    ok, reason = verify_chain(
        chain, platform.manufacturer.public_key, platform.planner_code_id
    )
    if not ok:
        violations.append(f"chain: {reason}")
        return False, violations

    schema = config.schema()
    history = [set() for _ in range(config.n)]
    by_evidence = {}
    for view in group_processes(log).values():
        if view.completed:
            by_evidence[view.terminal.emitted_evidence_digest] = view

    n_corrupted = math.ceil(config.gamma * config.n)
    clients = make_clients(
        config.n, config.master_seed, config.d, n_corrupted,
        config.samples_per_client,
    )
    noise_seed = prim.seed_to_int(prim.derive_seed(config.master_seed, b"noise"))
    Z = NoiseMatrix(seed=noise_seed, sigma=config.sigma, d=config.d)
    C = StrategyMatrix.preset(config.strategy, config.n_round)
    theta = np.zeros(config.d)

    for ev in chain.entries:
        if ev.kind != "update":
            continue
        i = ev.round_index
        qualified = f_qualify(schema, history, i)
        bad = set(ev.cohort) - qualified
        if bad:
            violations.append(f"round {i}: cohort {sorted(bad)} violates schema")
        for j in ev.cohort:
            history[j].add(i)
        view = by_evidence.get(evidence_digest(ev))
        if view is None:
            continue  # no completed process for this entry; nothing to recompute
        expected_args = args_hash(
            ev.cohort, ArgsSecagg(theta.copy(), config.d, config.zeta)
        )
        if ev.args_secagg_hash != expected_args:
            violations.append(f"round {i}: args hash does not match replayed model")
        if view.terminal.output_digest is None:
            continue  # crash-recovered round: transition committed, output lost
        participants = view.terminal.participants or ev.cohort
        total = np.zeros(config.d)
        for j in sorted(participants):
            if clients[j].corrupted:
                update = sybil_update(config.d, config.zeta)
            else:
                update = local_update(clients[j].dataset, theta, config.zeta)
            total = total + update
        output = total + correlated_noise(Z, C, i, config.d, config.zeta)
        if prim.hash_data(output.tobytes()) != view.terminal.output_digest:
            violations.append(f"round {i}: output digest mismatch")
        theta = theta - config.learning_rate * output
    return not violations, violations


# --- trusted-party reference oracle ------------------------------------------

def ideal_oracle(config: WorldConfig, sim_script: list[dict]) -> list[np.ndarray]:
    """Reference aggregation: per step the script supplies cohort, round k,
    model theta, and corrupted clients' chosen vectors; invalid steps (reused k,
    schema-violating cohort) leave the state unchanged and yield no output."""
    n_corrupted = math.ceil(config.gamma * config.n)
    clients = make_clients(
        config.n, config.master_seed, config.d, n_corrupted,
        config.samples_per_client,
    )
    noise_seed = prim.seed_to_int(prim.derive_seed(config.master_seed, b"noise"))
    Z = NoiseMatrix(seed=noise_seed, sigma=config.sigma, d=config.d)
    C = StrategyMatrix.preset(config.strategy, config.n_round)
    schema = config.schema()
    history = [set() for _ in range(config.n)]
    used_k: set[int] = set()
    outputs: list[np.ndarray] = []
    for step in sim_script:
        k = step["k"]
        cohort = sorted(step["cohort"])
        theta = np.asarray(step["theta"], dtype=np.float64)
        corrupted_inputs = step.get("corrupted", {})
        if k in used_k or not 0 <= k < config.n_round:
            continue
        if any(not schema.client_qualifies(history[j], k) for j in cohort):
            continue
        total = np.zeros(config.d)
        for j in cohort:
            if clients[j].corrupted:
                g = np.asarray(
                    corrupted_inputs.get(j, sybil_update(config.d, config.zeta)),
                    dtype=np.float64,
                )
            else:
                g = local_update(clients[j].dataset, theta, config.zeta)
                g = clip(g, config.zeta)
            total = total + g
        outputs.append(total + correlated_noise(Z, C, k, config.d, config.zeta))
        used_k.add(k)
        for j in cohort:
            history[j].add(k)
    return outputs


def ideal_mirror_run(config: WorldConfig) -> list[np.ndarray]:
    """Drive the reference oracle with the same cohort draws and model updates
    the simulator's honest schedule produces, for output-equivalence tests."""
    outputs: list[np.ndarray] = []
    theta = np.zeros(config.d)
    history = [set() for _ in range(config.n)]
    schema = config.schema()
    script = []
    for r in range(config.n_round):
        qualified = sorted(f_qualify(schema, history, r))
        rng = np.random.default_rng(
            prim.seed_to_int(prim.derive_seed(config.master_seed, b"cohort", r))
        )
        picked = rng.choice(len(qualified), size=config.cohort_size, replace=False)
        cohort = tuple(sorted(qualified[k] for k in picked))
        step = {"k": r, "cohort": cohort, "theta": theta.copy()}
        out = ideal_oracle(config, script + [step])[-1]
        script.append(step)
        outputs.append(out)
        theta = theta - config.learning_rate * out
        for j in cohort:
            history[j].add(r)
    return outputs
