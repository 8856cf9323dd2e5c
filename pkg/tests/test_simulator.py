from dataclasses import replace

import numpy as np
import pytest

from plannersim.actors import AdversaryScript
from plannersim.errors import ConfigInvalid
from plannersim.eventlog import check_linearizable, mutate_record
from plannersim.simulator import (
    World,
    WorldConfig,
    attack_suite,
    check_integrity,
    config_from_dict,
    config_to_dict,
    count_divergent,
    ideal_mirror_run,
    ideal_oracle,
    run,
    validate_config,
)


def test_run_is_deterministic(small_config, honest_result):
    again = run(small_config)
    assert again.log == honest_result.log
    assert again.chain == honest_result.chain
    assert all(
        np.array_equal(a, b)
        for a, b in zip(again.outputs, honest_result.outputs)
    )


def test_honest_run_passes_both_checkers(small_config, honest_result):
    ok, witness = check_linearizable(honest_result.log)
    assert ok and witness == [f"p{k}" for k in range(small_config.n_round)]
    ok, violations = check_integrity(
        honest_result.log, honest_result.chain, small_config
    )
    assert ok and violations == []


def test_chain_is_init_plus_one_entry_per_round(small_config, honest_result):
    assert len(honest_result.chain) == small_config.n_round + 1
    kinds = [e.kind for e in honest_result.chain.entries]
    assert kinds == ["init"] + ["update"] * small_config.n_round


def test_summary_shape(honest_result):
    s = honest_result.summary()
    assert s["rounds_completed"] == s["rounds_attempted"]
    assert s["attack_bypassed"] is False
    assert len(s["audit_broadcast_sizes"]) == 1  # constant size


@pytest.mark.parametrize(
    "overrides",
    [
        dict(n=0),
        dict(gamma=1.5),
        dict(kappa=0.0),
        dict(n_audit=0),
        dict(n_audit=25),
        dict(tau=2),  # not a strict majority of n_audit=5
        dict(tau=6),
        dict(cohort_size=0),
        dict(sigma=-1.0),
        dict(schema_variant="once", cohort_size=8),  # 8 * 4 rounds > n=20
    ],
)
def test_validate_config_rejects(small_config, overrides):
    with pytest.raises(ConfigInvalid):
        validate_config(replace(small_config, **overrides))


def test_config_dict_roundtrip(small_config):
    cfg = replace(
        small_config, adversary=AdversaryScript(strategy="fork", attack_round=2)
    )
    doc = config_to_dict(cfg)
    assert config_from_dict(doc) == cfg
    doc["bogus"] = 1
    with pytest.raises(ConfigInvalid):
        config_from_dict(doc)
    with pytest.raises(ConfigInvalid):
        config_from_dict({**config_to_dict(cfg), "adversary": {"oops": 1}})


def test_integrity_detects_forged_output(small_config, honest_result):
    respond_idx = next(
        k
        for k, r in enumerate(honest_result.log.records)
        if r.event == "respond"
    )
    bad = mutate_record(
        honest_result.log, respond_idx, output_digest=b"\x00" * 32
    )
    ok, violations = check_integrity(bad, honest_result.chain, small_config)
    assert not ok
    assert any("round 0" in v and "output" in v for v in violations)


def test_integrity_detects_tampered_chain(small_config, honest_result):
    from plannersim.evidence import mutate_entry

    bad = mutate_entry(honest_result.chain, 1, cohort=(0, 1, 2, 3))
    ok, violations = check_integrity(honest_result.log, bad, small_config)
    assert not ok and violations[0].startswith("chain:")


def test_integrity_detects_schema_breach_in_once_variant():
    cfg = WorldConfig(
        n=12, n_round=2, n_audit=3, tau=2, d=3, cohort_size=2, sigma=0.5,
        master_seed=5, schema_variant="once",
    )
    result = run(cfg)
    from plannersim.evidence import mutate_entry

    # Claim round 1 reused round 0's cohort; break only the schema bookkeeping
    # (the hash links then also fail, so restrict to the schema message).
    repeat = mutate_entry(
        result.chain, 2, cohort=result.chain.entries[1].cohort
    )
    ok, violations = check_integrity(result.log, repeat, cfg)
    assert not ok


def test_dropouts_thin_the_quorum():
    cfg = WorldConfig(
        n=20, n_round=4, n_audit=5, tau=5, d=3, cohort_size=3, sigma=0.5,
        beta=0.4, master_seed=13,
    )
    result = run(cfg)
    # tau = n_audit with 40% dropouts: some rounds must fail to reach quorum.
    assert result.rounds_completed < cfg.n_round
    reasons = [r.reason for r in result.log.records if r.event == "aborted"]
    assert any(r.startswith("QuorumNotReached") for r in reasons)
    # the failed rounds left no chain entry
    assert len(result.chain) == 1 + result.rounds_completed


def test_count_divergent_flags_forked_completions():
    d = [bytes([k]) * 32 for k in range(4)]
    from plannersim.eventlog import EventLog

    log = EventLog()
    for pid, loaded, emitted in [
        ("a", d[0], d[1]),
        ("b", d[1], d[2]),
        ("c", d[1], d[3]),
    ]:
        log.invoke(pid, loaded_digest=loaded, round_index=0)
        log.respond(pid, emitted_evidence_digest=emitted)
    assert count_divergent(log) == 1


# --- adversary strategies ----------------------------------------------------

@pytest.mark.parametrize(
    "strategy", ["fork", "rollback", "replay", "pretend_crash", "sybil_flood"]
)
def test_attacks_never_bypass(strategy):
    report = attack_suite(strategy, trials=10, base_seed=300, check=True)
    assert report["divergent_digests"] == 0
    assert report["runs_bypassed"] == 0
    assert report["checker_failures"] == 0


def test_fork_attack_only_one_branch_completes():
    report = attack_suite("fork", trials=10, base_seed=300)
    assert report["attack_processes_attempted"] == 2 * 10
    assert report["attack_processes_completed"] <= 10
    assert "QuorumNotReached" in report["abort_reasons"]


def test_rollback_attack_rejected_by_replayed_digest():
    report = attack_suite("rollback", trials=10, base_seed=300)
    assert report["attack_processes_completed"] == 0
    assert report["abort_reasons"].get("ReplayedDigest", 0) > 0


def test_replay_attack_rejected_by_nonce_mismatch():
    report = attack_suite("replay", trials=10, base_seed=300)
    assert report["attack_processes_completed"] == 0
    assert report["abort_reasons"] == {"QuorumNotReached": 10}


def test_sybil_pool_probe_rejected():
    report = attack_suite("sybil_flood", trials=5, base_seed=300, gamma=0.2)
    assert report["abort_reasons"].get("TooFewCandidates") == 5


def test_crash_recover_preserves_liveness_and_chain():
    cfg = WorldConfig(
        n=20, n_round=6, n_audit=5, tau=3, d=4, cohort_size=3, sigma=0.5,
        master_seed=11,
        adversary=AdversaryScript(strategy="crash_recover", attack_round=2),
    )
    result = run(cfg)
    assert result.report.extra["recovered_identical"] is True
    assert result.outputs[2] is None  # the crashed round's output is lost
    assert all(o is not None for o in result.outputs[3:])
    assert len(result.chain) == cfg.n_round + 1
    assert check_linearizable(result.log)[0]
    assert check_integrity(result.log, result.chain, cfg)[0]


# --- reference oracle --------------------------------------------------------

def test_ideal_oracle_matches_simulator(small_config, honest_result):
    outs = ideal_mirror_run(small_config)
    assert len(outs) == len(honest_result.outputs)
    for a, b in zip(honest_result.outputs, outs):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_ideal_oracle_skips_invalid_steps(small_config):
    theta = np.zeros(small_config.d)
    script = [
        {"k": 0, "cohort": (0, 1), "theta": theta},
        {"k": 0, "cohort": (2, 3), "theta": theta},  # reused round: skipped
        {"k": 99, "cohort": (2, 3), "theta": theta},  # out of range: skipped
        {"k": 1, "cohort": (2, 3), "theta": theta},
    ]
    outs = ideal_oracle(small_config, script)
    assert len(outs) == 2


def test_ideal_oracle_zero_updates_identity_noise():
    cfg = WorldConfig(
        n=6, n_round=2, n_audit=3, tau=2, d=3, cohort_size=2, sigma=1.0,
        gamma=1.0, zeta=2.0, master_seed=3, strategy="identity",
    )
    zeros = {j: np.zeros(3) for j in range(6)}
    outs = ideal_oracle(
        cfg, [{"k": 0, "cohort": (0, 1), "theta": np.zeros(3), "corrupted": zeros}]
    )
    from plannersim import primitives as prim
    from plannersim.dpftrl import NoiseMatrix

    seed = prim.seed_to_int(prim.derive_seed(3, b"noise"))
    Z = NoiseMatrix(seed=seed, sigma=1.0, d=3)
    assert np.allclose(outs[0], 2.0 * Z.row(0))
