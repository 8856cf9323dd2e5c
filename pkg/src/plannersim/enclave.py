"""Simulated planner enclave: initialization, replication from sealed state,
the three verifications, auditor selection, evidence generation, stateful
secure aggregation, and crash recovery.

An enclave instance owns its state; multiple instances may be alive at once
(that is the attack surface under test). Everything an enclave derives from its
sealed seeds is counter-based, so a replicated instance reproduces the same
noise rows and the same auditor draw for the same chain position.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import primitives as prim
from .dpftrl import (
    NoiseMatrix,
    ParticipationSchema,
    StrategyMatrix,
    correlated_noise,
    f_qualify,
)
from .errors import (
    BadQuorumParams,
    BadRecoverySignatures,
    BadSignature,
    CohortIncomplete,
    InitConsensusIncomplete,
    InvalidChain,
    MacFailure,
    QuorumNotReached,
    SchemaViolation,
    TooFewCandidates,
    WrongChainId,
    WrongNonce,
)
from .evidence import (
    KIND_INIT,
    KIND_UPDATE,
    Evidence,
    EvidenceChain,
    chain_digest,
    derive_history,
    evidence_payload,
    latest_auditors,
    next_round_index,
    verify_chain,
)
from .primitives import KeyPair, Quote, SealedBlob


@dataclass(frozen=True)
class Platform:
    """Simulated TEE manufacturer root of trust plus the planner code identity."""

    manufacturer: KeyPair
    planner_code_id: bytes

    @classmethod
    def create(cls, seed: int = 0) -> "Platform":
        return cls(
            manufacturer=prim.keygen(seed, owner_id="manufacturer"),
            planner_code_id=prim.hash_data(b"planner-enclave-code-v1"),
        )


@dataclass(frozen=True)
class ProtocolParams:
    """Quorum and aggregation parameters burned into the enclave at init."""

    n_audit: int
    tau: int
    kappa: float
    sigma: float
    schema: ParticipationSchema
    strategy: str  # "identity", "prefix", or a CSV path
    overselect_margin: int = 0


@dataclass(frozen=True)
class ArgsSecagg:
    """Per-round aggregation arguments: current model, dimension, clip bound."""

    theta: np.ndarray
    d: int
    zeta: float

    def encode(self) -> bytes:
        return prim.encode_fields(
            prim.encode_int(self.d),
            np.float64(self.zeta).tobytes(),
            np.asarray(self.theta, dtype=np.float64).tobytes(),
        )


def args_hash(cohort, args_secagg: ArgsSecagg) -> bytes:
    return prim.hash_data(
        prim.encode_fields(prim.encode_index_list(cohort), args_secagg.encode())
    )


@dataclass(frozen=True)
class InitBroadcast:
    chain_id: bytes
    thread_nonce: bytes
    pubkey_list_digest: bytes
    quote: Quote

    def payload(self) -> bytes:
        return prim.encode_fields(
            self.chain_id, self.thread_nonce, self.pubkey_list_digest
        )

    def size_bytes(self) -> int:
        return len(self.payload()) + len(self.quote.code_id) + len(self.quote.signature)


@dataclass(frozen=True)
class AgreementBroadcast:
    """Audit request: exactly the fields the client-side audit procedure checks,
    plus the recovery-encrypted next-auditor selection and the inputs needed to
    regenerate the evidence after a crash."""

    chain_id: bytes
    thread_nonce: bytes
    input_hash: bytes  # hash of (cohort, args_secagg)
    chain_digest: bytes
    encrypted_next_auditors: bytes
    cohort: tuple[int, ...]
    round_index: int
    quote: Quote

    def payload(self) -> bytes:
        return prim.encode_fields(
            self.chain_id,
            self.thread_nonce,
            self.input_hash,
            self.chain_digest,
            self.encrypted_next_auditors,
            prim.encode_index_list(self.cohort),
            prim.encode_int(self.round_index),
        )

    def size_bytes(self) -> int:
        return len(self.payload()) + len(self.quote.code_id) + len(self.quote.signature)


@dataclass(frozen=True)
class SecAggBroadcast:
    chain_id: bytes
    thread_nonce: bytes
    args_secagg: ArgsSecagg
    enclave_dh_pub: bytes
    quote: Quote

    def payload(self) -> bytes:
        return prim.encode_fields(
            self.chain_id,
            self.thread_nonce,
            self.args_secagg.encode(),
            self.enclave_dh_pub,
        )

    def control_size_bytes(self) -> int:
        """Byte size excluding the model-parameter payload."""
        theta_bytes = np.asarray(
            self.args_secagg.theta, dtype=np.float64
        ).tobytes()
        return (
            len(self.payload())
            - len(theta_bytes)
            + len(self.quote.code_id)
            + len(self.quote.signature)
        )


@dataclass(frozen=True)
class SecAggMessage:
    sender: int
    encrypted_update: bytes  # nonce || ciphertext || tag
    encrypted_decryption_key: bytes  # nonce || ciphertext || tag
    ec_pub_key: bytes
    mac: bytes
    thread_nonce: bytes

    def control_size_bytes(self) -> int:
        return (
            len(self.encrypted_decryption_key)
            + len(self.ec_pub_key)
            + len(self.mac)
            + len(self.thread_nonce)
        )


def f_select(candidates, n_audit: int, rng: np.random.Generator, min_candidates: int):
    """Uniform n_audit-subset of candidates; aborts on a shrunken pool."""
    pool = sorted(candidates)
    if len(pool) < min_candidates:
        raise TooFewCandidates(
            f"{len(pool)} candidates, need at least {min_candidates}"
        )
    if n_audit > len(pool):
        raise TooFewCandidates(f"{len(pool)} candidates, need n_audit={n_audit}")
    picked = rng.choice(len(pool), size=n_audit, replace=False)
    return sorted(pool[i] for i in picked)


def _min_candidates(n: int, kappa: float) -> int:
    return int(math.ceil(n * kappa - 1e-9))


# --- sealed state serialization ---------------------------------------------

def _params_to_dict(p: ProtocolParams) -> dict:
    return {
        "n_audit": p.n_audit,
        "tau": p.tau,
        "kappa": p.kappa,
        "sigma": p.sigma,
        "schema_variant": p.schema.variant,
        "schema_b": p.schema.b,
        "n_round": p.schema.n_round,
        "strategy": p.strategy,
        "overselect_margin": p.overselect_margin,
    }


def _params_from_dict(d: dict) -> ProtocolParams:
    return ProtocolParams(
        n_audit=d["n_audit"],
        tau=d["tau"],
        kappa=d["kappa"],
        sigma=d["sigma"],
        schema=ParticipationSchema(
            variant=d["schema_variant"], b=d["schema_b"], n_round=d["n_round"]
        ),
        strategy=d["strategy"],
        overselect_margin=d["overselect_margin"],
    )


def _encode_sealed_state(
    chain_id: bytes, noise_seed: int, recovery_key: bytes, pubkeys: list[bytes],
    params: ProtocolParams,
) -> bytes:
    doc = {
        "chain_id": chain_id.hex(),
        "noise_seed": noise_seed,
        "recovery_key": recovery_key.hex(),
        "pubkeys": [pk.hex() for pk in pubkeys],
        "params": _params_to_dict(params),
    }
    return json.dumps(doc, sort_keys=True).encode()


def _decode_sealed_state(raw: bytes):
    doc = json.loads(raw.decode())
    return (
        bytes.fromhex(doc["chain_id"]),
        doc["noise_seed"],
        bytes.fromhex(doc["recovery_key"]),
        [bytes.fromhex(pk) for pk in doc["pubkeys"]],
        _params_from_dict(doc["params"]),
    )


def _pubkey_list_digest(pubkeys: list[bytes]) -> bytes:
    return prim.hash_data(prim.encode_fields(*pubkeys))


class PlannerEnclave:
    """One simulated enclave instance. Phase transitions are monotone:
    created -> awaiting_init_consensus -> sealed_ready            (init instance)
    loaded -> awaiting_agreement -> agreed -> done                (replica)
    with `crashed` reachable from any phase."""

    def __init__(self, platform: Platform):
        self.platform = platform
        self.phase = "created"
        self.chain_id: bytes | None = None
        self.noise_seed: int | None = None
        self.recovery_key: bytes | None = None
        self.pubkeys: list[bytes] = []
        self.params: ProtocolParams | None = None
        self.thread_nonce: bytes | None = None
        self.loaded_chain: EvidenceChain | None = None
        self.cohort: tuple[int, ...] = ()
        self.args_secagg: ArgsSecagg | None = None
        self.candidates: list[int] = []
        self.audit_set: list[int] = []  # stale C_audit read from the chain
        self.next_auditors: list[int] = []
        self.round_index: int | None = None
        self.emitted_evidence: Evidence | None = None
        self._dh_keys: KeyPair | None = None

    # -- helpers -------------------------------------------------------------

    def _quote(self, payload: bytes) -> Quote:
        return prim.attest(
            self.platform.planner_code_id, payload, self.platform.manufacturer.secret_key
        )

    def _selection_rng(self, label: bytes, context: bytes) -> np.random.Generator:
        seed = prim.derive_seed(self.noise_seed, b"f_select", label, context)
        return np.random.default_rng(prim.seed_to_int(seed))

    def _derive_nonce(self, context: bytes) -> bytes:
        seed = prim.derive_seed(self.noise_seed, b"thread-nonce", context)
        return seed[: prim.NONCE_BYTES]

    def crash(self):
        self.phase = "crashed"

    def _require_phase(self, phase: str):
        if self.phase != phase:
            raise RuntimeError(f"enclave in phase {self.phase!r}, expected {phase!r}")

    # -- initialization ------------------------------------------------------

    @classmethod
    def init_enclave(
        cls,
        platform: Platform,
        pubkeys: list[bytes],
        args_selection,
        params: ProtocolParams,
        master_seed: int,
    ) -> tuple["PlannerEnclave", InitBroadcast]:
        if params.tau <= params.n_audit / 2:
            raise BadQuorumParams(
                f"tau={params.tau} must exceed n_audit/2={params.n_audit / 2}"
            )
        if len(args_selection) < 1:
            raise TooFewCandidates("empty selection pool")
        enc = cls(platform)
        enc.pubkeys = list(pubkeys)
        enc.params = params
        enc.candidates = sorted(args_selection)
        enc.noise_seed = prim.seed_to_int(prim.derive_seed(master_seed, b"noise"))
        enc.chain_id = prim.derive_seed(master_seed, b"chain-id")[: prim.NONCE_BYTES]
        enc.recovery_key = prim.derive_seed(master_seed, b"recovery-key")
        enc.thread_nonce = enc._derive_nonce(b"init")
        enc.phase = "awaiting_init_consensus"
        broadcast = InitBroadcast(
            chain_id=enc.chain_id,
            thread_nonce=enc.thread_nonce,
            pubkey_list_digest=_pubkey_list_digest(enc.pubkeys),
            quote=None,  # type: ignore[arg-type]
        )
        broadcast = replace(broadcast, quote=enc._quote(broadcast.payload()))
        return enc, broadcast

    def finish_init(self, signatures: dict[int, bytes]) -> tuple[SealedBlob, Evidence]:
        """Verify consensus by every client, select the first auditors, seal."""
        self._require_phase("awaiting_init_consensus")
        missing = [j for j in range(len(self.pubkeys)) if j not in signatures]
        if missing:
            raise InitConsensusIncomplete(missing)
        for j, sig in signatures.items():
            if not prim.verify(self.pubkeys[j], self.thread_nonce, sig):
                raise BadSignature(f"client {j} signed the wrong nonce")
        rng = self._selection_rng(b"init", self.chain_id)
        c_audit = f_select(
            self.candidates,
            self.params.n_audit,
            rng,
            _min_candidates(len(self.pubkeys), self.params.kappa),
        )
        ev = Evidence(
            chain_id=self.chain_id,
            prev_digest=None,
            kind=KIND_INIT,
            auditors_next=tuple(c_audit),
            cohort=(),
            round_index=None,
            args_secagg_hash=prim.hash_data(b""),
            pubkey_list_digest=_pubkey_list_digest(self.pubkeys),
            quote=None,  # type: ignore[arg-type]
        )
        ev = replace(ev, quote=self._quote(evidence_payload(ev)))
        blob = prim.seal(
            self.platform.planner_code_id,
            _encode_sealed_state(
                self.chain_id, self.noise_seed, self.recovery_key, self.pubkeys,
                self.params,
            ),
        )
        self.phase = "sealed_ready"
        return blob, ev

    # -- replication ---------------------------------------------------------

    def _load_blob(self, blob: SealedBlob):
        raw = prim.unseal(self.platform.planner_code_id, blob)
        (
            self.chain_id,
            self.noise_seed,
            self.recovery_key,
            self.pubkeys,
            self.params,
        ) = _decode_sealed_state(raw)

    @classmethod
    def replicate(
        cls,
        platform: Platform,
        blob: SealedBlob,
        chain: EvidenceChain,
        cohort,
        args_secagg: ArgsSecagg,
        candidates,
    ) -> tuple["PlannerEnclave", AgreementBroadcast]:
        enc = cls(platform)
        enc._load_blob(blob)
        ok, reason = verify_chain(
            chain, platform.manufacturer.public_key, platform.planner_code_id
        )
        if not ok:
            raise InvalidChain(reason)
        if chain.entries[0].chain_id != enc.chain_id:
            raise WrongChainId("chain belongs to a different shared object")
        i = next_round_index(chain)
        history = derive_history(chain, len(enc.pubkeys))
        qualified = f_qualify(enc.params.schema, history, i)
        bad = set(cohort) - qualified
        if bad:
            raise SchemaViolation(
                f"cohort members {sorted(bad)} not qualified for round {i}"
            )
        enc.phase = "loaded"
        enc.loaded_chain = chain
        enc.cohort = tuple(sorted(cohort))
        enc.args_secagg = args_secagg
        enc.candidates = sorted(candidates)
        enc.round_index = i
        enc.audit_set = latest_auditors(chain)

        digest = chain_digest(chain)
        input_hash = args_hash(enc.cohort, args_secagg)
        rng = enc._selection_rng(prim.encode_int(i), digest)
        enc.next_auditors = f_select(
            enc.candidates,
            enc.params.n_audit,
            rng,
            _min_candidates(len(enc.pubkeys), enc.params.kappa),
        )
        # Nonce is bound to (state, input); a crash-recovered run of the same
        # update reproduces it, a different update never does.
        enc.thread_nonce = enc._derive_nonce(
            prim.encode_fields(digest, input_hash)
        )
        enc_nonce = prim.derive_seed(
            enc.noise_seed, b"recovery-nonce", digest, input_hash
        )[: prim.NONCE_BYTES]
        ct, tag = prim.aead_encrypt(
            enc.recovery_key, enc_nonce, prim.encode_index_list(enc.next_auditors)
        )
        broadcast = AgreementBroadcast(
            chain_id=enc.chain_id,
            thread_nonce=enc.thread_nonce,
            input_hash=input_hash,
            chain_digest=digest,
            encrypted_next_auditors=enc_nonce + ct + tag,
            cohort=enc.cohort,
            round_index=i,
            quote=None,  # type: ignore[arg-type]
        )
        broadcast = replace(broadcast, quote=enc._quote(broadcast.payload()))
        enc.phase = "awaiting_agreement"
        enc._broadcast = broadcast
        return enc, broadcast

    # -- agreement -----------------------------------------------------------

    def count_valid_agreement(self, signatures: dict[int, bytes]) -> int:
        valid = 0
        audit_set = set(self.audit_set)
        for j, sig in signatures.items():
            if j not in audit_set:
                continue  # non-auditor signatures are ignored
            if prim.verify(self.pubkeys[j], self.thread_nonce, sig):
                valid += 1
        return valid

    def _build_update_evidence(self) -> Evidence:
        ev = Evidence(
            chain_id=self.chain_id,
            prev_digest=chain_digest(self.loaded_chain),
            kind=KIND_UPDATE,
            auditors_next=tuple(self.next_auditors),
            cohort=self.cohort,
            round_index=self.round_index,
            args_secagg_hash=args_hash(self.cohort, self.args_secagg),
            pubkey_list_digest=None,
            quote=None,  # type: ignore[arg-type]
        )
        return replace(ev, quote=self._quote(evidence_payload(ev)))

    def collect_agreement(self, signatures: dict[int, bytes]) -> Evidence:
        """Accept iff >= tau valid signatures over the thread nonce from
        distinct members of the stale auditor set, then emit update evidence."""
        self._require_phase("awaiting_agreement")
        valid = self.count_valid_agreement(signatures)
        if valid < self.params.tau:
            raise QuorumNotReached(valid, self.params.tau)
        self.emitted_evidence = self._build_update_evidence()
        self.phase = "agreed"
        return self.emitted_evidence

    # -- secure aggregation --------------------------------------------------

    def secagg_broadcast(self) -> SecAggBroadcast:
        self._require_phase("agreed")
        dh_seed = prim.derive_seed(
            self.noise_seed, b"process-dh", chain_digest(self.loaded_chain),
            prim.encode_int(self.round_index),
        )
        self._dh_keys = prim.keygen(prim.seed_to_int(dh_seed), owner_id="enclave")
        b = SecAggBroadcast(
            chain_id=self.chain_id,
            thread_nonce=self.thread_nonce,
            args_secagg=self.args_secagg,
            enclave_dh_pub=self._dh_keys.public_key,
            quote=None,  # type: ignore[arg-type]
        )
        return replace(b, quote=self._quote(b.payload()))

    def secure_aggregate(self, messages: list[SecAggMessage]) -> np.ndarray:
        """Sum of decrypted cohort updates plus the round's correlated noise.

        Aggregation proceeds once all but the overselection margin responded
        with verified MACs; tampered messages are treated as dropouts."""
        self._require_phase("agreed")
        if self._dh_keys is None:
            self.secagg_broadcast()
        d, zeta = self.args_secagg.d, self.args_secagg.zeta
        present: dict[int, np.ndarray] = {}
        rejected: list[int] = []
        for msg in messages:
            if msg.sender not in set(self.cohort) or msg.sender in present:
                continue
            if msg.thread_nonce != self.thread_nonce:
                raise WrongNonce(f"replayed message from client {msg.sender}")
            key = prim.dh_shared(self._dh_keys.secret_key, msg.ec_pub_key)
            body = prim.encode_fields(
                msg.thread_nonce,
                msg.encrypted_update,
                msg.encrypted_decryption_key,
                msg.ec_pub_key,
            )
            if not prim.mac_verify(key, body, msg.mac):
                rejected.append(msg.sender)  # corrupted message -> dropout
                continue
            try:
                kn = msg.encrypted_decryption_key
                sym_key = prim.aead_decrypt(
                    key, kn[:16], kn[16:-16], kn[-16:]
                )
                un = msg.encrypted_update
                update = prim.aead_decrypt(sym_key, un[:16], un[16:-16], un[-16:])
            except MacFailure:
                rejected.append(msg.sender)
                continue
            vec = np.frombuffer(update, dtype=np.float64)
            if vec.shape != (d,):
                rejected.append(msg.sender)
                continue
            present[msg.sender] = vec
        required = len(self.cohort) - self.params.overselect_margin
        if len(present) < required:
            raise CohortIncomplete(len(present), required)
        Z = NoiseMatrix(seed=self.noise_seed, sigma=self.params.sigma, d=d)
        C = StrategyMatrix.preset(self.params.strategy, self.params.schema.n_round)
        total = np.zeros(d)
        for j in sorted(present):
            total = total + present[j]
        result = total + correlated_noise(Z, C, self.round_index, d, zeta)
        self.participants = sorted(present)
        self.phase = "done"
        return result

    # -- recovery ------------------------------------------------------------

    @classmethod
    def recovery(
        cls,
        platform: Platform,
        blob: SealedBlob,
        chain: EvidenceChain,
        crashed_broadcast: AgreementBroadcast,
        signatures: dict[int, bytes],
    ) -> Evidence:
        """Regenerate the update evidence a crashed post-quorum process failed
        to commit. No aggregation output can be recovered."""
        enc = cls(platform)
        enc._load_blob(blob)
        ok, reason = verify_chain(
            chain, platform.manufacturer.public_key, platform.planner_code_id
        )
        if not ok:
            raise InvalidChain(reason)
        if crashed_broadcast.chain_id != enc.chain_id:
            raise WrongChainId("broadcast from a different shared object")
        if crashed_broadcast.chain_digest != chain_digest(chain):
            raise InvalidChain("broadcast does not extend the provided chain")
        if crashed_broadcast.quote.payload != crashed_broadcast.payload() or not (
            prim.verify_quote(
                crashed_broadcast.quote,
                platform.planner_code_id,
                platform.manufacturer.public_key,
            )
        ):
            raise InvalidChain("crashed broadcast quote invalid")
        audit_set = set(latest_auditors(chain))
        valid = 0
        for j, sig in signatures.items():
            if j in audit_set and prim.verify(
                enc.pubkeys[j], crashed_broadcast.thread_nonce, sig
            ):
                valid += 1
        if valid < enc.params.tau:
            raise BadRecoverySignatures(
                f"{valid} valid auditor signatures, need {enc.params.tau}"
            )
        raw = crashed_broadcast.encrypted_next_auditors
        plain = prim.aead_decrypt(
            enc.recovery_key, raw[:16], raw[16:-16], raw[-16:]
        )
        next_auditors = [
            int.from_bytes(plain[k : k + 4], "big") for k in range(0, len(plain), 4)
        ]
        ev = Evidence(
            chain_id=enc.chain_id,
            prev_digest=crashed_broadcast.chain_digest,
            kind=KIND_UPDATE,
            auditors_next=tuple(next_auditors),
            cohort=crashed_broadcast.cohort,
            round_index=crashed_broadcast.round_index,
            args_secagg_hash=crashed_broadcast.input_hash,
            pubkey_list_digest=None,
            quote=None,  # type: ignore[arg-type]
        )
        return replace(ev, quote=enc._quote(evidence_payload(ev)))
