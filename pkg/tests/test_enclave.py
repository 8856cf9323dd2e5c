import numpy as np
import pytest

from plannersim import primitives as prim
from plannersim.enclave import ArgsSecagg, PlannerEnclave
from plannersim.errors import (
    BadQuorumParams,
    BadRecoverySignatures,
    BadSignature,
    CohortIncomplete,
    InitConsensusIncomplete,
    InvalidChain,
    QuorumNotReached,
    SchemaViolation,
    TooFewCandidates,
    WrongNonce,
)
from plannersim.evidence import encode_evidence, mutate_entry
from plannersim.simulator import World, WorldConfig


@pytest.fixture()
def world():
    w = World(
        WorldConfig(
            n=12, n_round=3, n_audit=5, tau=3, d=3, cohort_size=4, sigma=0.5,
            master_seed=21,
        )
    )
    w.initialize()
    return w


def _args(world):
    return ArgsSecagg(world.theta.copy(), world.config.d, world.config.zeta)


def test_init_requires_all_clients():
    world = World(
        WorldConfig(
            n=12, n_round=3, n_audit=5, tau=3, d=3, cohort_size=4, sigma=0.5,
            master_seed=99,
        )
    )
    pubkeys = [c.keys.public_key for c in world.clients]
    enc, broadcast = PlannerEnclave.init_enclave(
        world.platform, pubkeys, world.pool, world.params, 99
    )
    sigs = {
        c.index: c.audit_init(broadcast, world.platform) for c in world.clients
    }
    missing = dict(sigs)
    missing.pop(0)
    with pytest.raises(InitConsensusIncomplete):
        enc.finish_init(missing)
    forged = dict(sigs)
    forged[1] = prim.sign(world.clients[1].keys.secret_key, b"other-nonce")
    with pytest.raises(BadSignature):
        enc.finish_init(forged)


def test_init_rejects_minority_quorum(world):
    pubkeys = [c.keys.public_key for c in world.clients]
    from dataclasses import replace

    with pytest.raises(BadQuorumParams):
        PlannerEnclave.init_enclave(
            world.platform, pubkeys, world.pool, replace(world.params, tau=2), 1
        )


def test_replicate_rejects_tampered_chain(world):
    bad_chain = mutate_entry(world.chain, -1, cohort=(0, 1))
    with pytest.raises(InvalidChain):
        PlannerEnclave.replicate(
            world.platform, world.blob, bad_chain, (0, 1, 2, 3), _args(world),
            world.pool,
        )


def test_replicate_rejects_schema_violating_cohort():
    # once-schema: a cohort member may not participate twice
    w = World(
        WorldConfig(
            n=12, n_round=2, n_audit=3, tau=2, d=3, cohort_size=2,
            sigma=0.5, master_seed=23, schema_variant="once",
        )
    )
    w.initialize()
    cohort = w.pick_cohort(0)
    enc, broadcast, pid = w.start_process(cohort, _args(w))
    sigs, _ = w.gather_audit(enc, broadcast, 0)
    w.complete_process(enc, pid, enc.collect_agreement(sigs), 0)
    with pytest.raises(SchemaViolation):
        PlannerEnclave.replicate(
            w.platform, w.blob, w.chain, cohort, _args(w), w.pool
        )


def test_quorum_counting_ignores_non_auditors(world):
    cohort = world.pick_cohort(0)
    enc, broadcast, _ = world.start_process(cohort, _args(world))
    outsiders = [j for j in range(world.config.n) if j not in set(enc.audit_set)]
    sigs = {
        j: prim.sign(world.clients[j].keys.secret_key, broadcast.thread_nonce)
        for j in outsiders[: world.config.tau + 2]
    }
    assert enc.count_valid_agreement(sigs) == 0
    with pytest.raises(QuorumNotReached):
        enc.collect_agreement(sigs)


def test_sybil_pool_rejected(world):
    cohort = world.pick_cohort(0)
    with pytest.raises(TooFewCandidates):
        PlannerEnclave.replicate(
            world.platform, world.blob, world.chain, cohort, _args(world),
            [0, 1, 2],  # shrunken, attacker-chosen candidate pool
        )


def test_secagg_roundtrip_and_replay_rejection(world):
    cohort = world.pick_cohort(0)
    enc, broadcast, _ = world.start_process(cohort, _args(world))
    sigs, _ = world.gather_audit(enc, broadcast, 0)
    enc.collect_agreement(sigs)
    sbc = enc.secagg_broadcast()
    messages = [
        world.clients[j].secagg(sbc, world.platform, 0) for j in enc.cohort
    ]
    out = enc.secure_aggregate(messages)
    assert out.shape == (world.config.d,)
    # a message with a foreign thread nonce is a replay
    from dataclasses import replace

    replayed = replace(messages[0], thread_nonce=b"\x00" * 16)
    enc2, b2, _ = world.start_process(cohort, _args(world), chain=enc.loaded_chain)
    # fresh replica over same state: corrupt phase directly for the check
    enc2.phase = "agreed"
    enc2.thread_nonce = enc.thread_nonce
    with pytest.raises(WrongNonce):
        enc2.secure_aggregate([replayed])


def test_cohort_incomplete_without_margin(world):
    cohort = world.pick_cohort(0)
    enc, broadcast, _ = world.start_process(cohort, _args(world))
    sigs, _ = world.gather_audit(enc, broadcast, 0)
    enc.collect_agreement(sigs)
    sbc = enc.secagg_broadcast()
    messages = [
        world.clients[j].secagg(sbc, world.platform, 0)
        for j in list(enc.cohort)[:-1]
    ]
    with pytest.raises(CohortIncomplete):
        enc.secure_aggregate(messages)


def test_overselection_tolerates_margin():
    w = World(
        WorldConfig(
            n=12, n_round=2, n_audit=5, tau=3, d=3, cohort_size=4,
            overselect_margin=1, sigma=0.5, master_seed=31,
        )
    )
    w.initialize()
    cohort = w.pick_cohort(0)
    enc, broadcast, _ = w.start_process(
        cohort, ArgsSecagg(w.theta.copy(), 3, 1.0)
    )
    sigs, _ = w.gather_audit(enc, broadcast, 0)
    enc.collect_agreement(sigs)
    sbc = enc.secagg_broadcast()
    messages = [w.clients[j].secagg(sbc, w.platform, 0) for j in list(enc.cohort)[:-1]]
    out = enc.secure_aggregate(messages)
    assert out.shape == (3,)
    assert enc.participants == sorted(list(enc.cohort)[:-1])


def test_recovery_regenerates_identical_evidence(world):
    cohort = world.pick_cohort(0)
    enc, broadcast, _ = world.start_process(cohort, _args(world))
    sigs, _ = world.gather_audit(enc, broadcast, 0)
    ev = enc.collect_agreement(sigs)
    enc.crash()
    ev_rec = PlannerEnclave.recovery(
        world.platform, world.blob, world.chain, broadcast, sigs
    )
    assert encode_evidence(ev_rec) == encode_evidence(ev)


def test_recovery_needs_quorum_signatures(world):
    cohort = world.pick_cohort(0)
    enc, broadcast, _ = world.start_process(cohort, _args(world))
    sigs, _ = world.gather_audit(enc, broadcast, 0)
    few = dict(list(sigs.items())[: world.config.tau - 1])
    with pytest.raises(BadRecoverySignatures):
        PlannerEnclave.recovery(
            world.platform, world.blob, world.chain, broadcast, few
        )


def test_replica_determinism(world):
    """Two replicas from the same blob+chain+input produce identical
    broadcasts and auditor selections."""
    cohort = world.pick_cohort(0)
    a, ba, _ = world.start_process(cohort, _args(world))
    b, bb, _ = world.start_process(cohort, _args(world))
    assert ba.thread_nonce == bb.thread_nonce
    assert ba.payload() == bb.payload()
    assert a.next_auditors == b.next_auditors
