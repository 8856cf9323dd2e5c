"""Client implementations (honest, corrupted, dropout-prone) and the audit /
secure-aggregation behaviors they run against planner-enclave broadcasts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import primitives as prim
from .dpftrl import ClientDataset, local_update
from .enclave import (
    AgreementBroadcast,
    InitBroadcast,
    Platform,
    SecAggBroadcast,
    SecAggMessage,
)

HONEST = "honest"
CORRUPTED = "corrupted"

# Audit abort reasons (each names the server misbehavior detected).
ATTESTATION_FAILED = "AttestationFailed"
WRONG_CHAIN_ID = "WrongChainId"
REPLAYED_DIGEST = "ReplayedDigest"
BAD_PUBKEY_DIGEST = "BadPubkeyDigest"


@dataclass
class AuditAbort:
    reason: str


@dataclass
class Client:
    index: int
    keys: prim.KeyPair
    dataset: ClientDataset
    behavior: str = HONEST
    dropout_rounds: set = field(default_factory=set)
    evidence_chain_id: bytes | None = None
    signed_digests: set = field(default_factory=set)
    known_pubkey_digest: bytes | None = None
    _nonce_source: prim.NonceSource | None = None

    @property
    def corrupted(self) -> bool:
        return self.behavior == CORRUPTED

    def dropped(self, round_index: int | None) -> bool:
        return round_index in self.dropout_rounds

    def _nonces(self) -> prim.NonceSource:
        if self._nonce_source is None:
            self._nonce_source = prim.NonceSource(self.keys.secret_key[:16])
        return self._nonce_source

    # -- audit ---------------------------------------------------------------

    def audit_init(self, broadcast: InitBroadcast, platform: Platform):
        """Consensus on the shared object: verify the quote and the public key
        list digest, adopt the chain id, sign the nonce."""
        if self.corrupted:
            return prim.sign(self.keys.secret_key, broadcast.thread_nonce)
        if broadcast.quote.payload != broadcast.payload() or not prim.verify_quote(
            broadcast.quote, platform.planner_code_id, platform.manufacturer.public_key
        ):
            return AuditAbort(ATTESTATION_FAILED)
        if broadcast.pubkey_list_digest != self.known_pubkey_digest:
            return AuditAbort(BAD_PUBKEY_DIGEST)
        if self.evidence_chain_id is None:
            self.evidence_chain_id = broadcast.chain_id
        if broadcast.chain_id != self.evidence_chain_id:
            return AuditAbort(WRONG_CHAIN_ID)
        return prim.sign(self.keys.secret_key, broadcast.thread_nonce)

    def audit(self, broadcast: AgreementBroadcast, platform: Platform, round_index=None):
        """Agreement on a planner enclave. Honest clients refuse foreign chain
        ids and digests they already signed; corrupted clients sign anything."""
        if self.dropped(round_index):
            return None
        if self.corrupted:
            return prim.sign(self.keys.secret_key, broadcast.thread_nonce)
        if broadcast.quote.payload != broadcast.payload() or not prim.verify_quote(
            broadcast.quote, platform.planner_code_id, platform.manufacturer.public_key
        ):
            return AuditAbort(ATTESTATION_FAILED)
        if self.evidence_chain_id is None:
            self.evidence_chain_id = broadcast.chain_id
        if broadcast.chain_id != self.evidence_chain_id:
            return AuditAbort(WRONG_CHAIN_ID)
        if broadcast.chain_digest in self.signed_digests:
            return AuditAbort(REPLAYED_DIGEST)
        self.signed_digests.add(broadcast.chain_digest)
        return prim.sign(self.keys.secret_key, broadcast.thread_nonce)

    # -- secure aggregation --------------------------------------------------

    def _make_message(
        self, update: np.ndarray, broadcast: SecAggBroadcast
    ) -> SecAggMessage:
        sym_key = prim.hash_data(self._nonces().next())
        update_nonce = self._nonces().next()
        key_nonce = self._nonces().next()
        ct, tag = prim.aead_encrypt(
            sym_key, update_nonce, np.asarray(update, dtype=np.float64).tobytes()
        )
        encrypted_update = update_nonce + ct + tag
        dh_key = prim.dh_shared(self.keys.secret_key, broadcast.enclave_dh_pub)
        kct, ktag = prim.aead_encrypt(dh_key, key_nonce, sym_key)
        encrypted_key = key_nonce + kct + ktag
        body = prim.encode_fields(
            broadcast.thread_nonce, encrypted_update, encrypted_key,
            self.keys.public_key,
        )
        return SecAggMessage(
            sender=self.index,
            encrypted_update=encrypted_update,
            encrypted_decryption_key=encrypted_key,
            ec_pub_key=self.keys.public_key,
            mac=prim.mac_tag(dh_key, body),
            thread_nonce=broadcast.thread_nonce,
        )

    def secagg(
        self, broadcast: SecAggBroadcast, platform: Platform, round_index=None
    ):
        if self.dropped(round_index):
            return None
        if not self.corrupted:
            if broadcast.quote.payload != broadcast.payload() or not (
                prim.verify_quote(
                    broadcast.quote,
                    platform.planner_code_id,
                    platform.manufacturer.public_key,
                )
            ):
                return AuditAbort(ATTESTATION_FAILED)
        args = broadcast.args_secagg
        if self.corrupted:
            # Adversary-chosen bounded-norm vector instead of a real gradient.
            update = np.zeros(args.d)
            if args.d > 0:
                update[0] = args.zeta
        else:
            update = local_update(self.dataset, args.theta, args.zeta)
        return self._make_message(update, broadcast)


def make_clients(
    n: int,
    master_seed: int,
    d: int,
    n_corrupted: int,
    samples_per_client: int = 4,
    corruption_rng: np.random.Generator | None = None,
) -> list[Client]:
    """Seeded client population; the corrupted subset is fixed for a run."""
    if corruption_rng is None:
        corrupted = set(range(n_corrupted))
    else:
        corrupted = set(
            corruption_rng.choice(n, size=n_corrupted, replace=False).tolist()
        )
    clients = []
    for j in range(n):
        key_seed = prim.seed_to_int(prim.derive_seed(master_seed, b"client-key", j))
        data_seed = prim.seed_to_int(prim.derive_seed(master_seed, b"client-data", j))
        clients.append(
            Client(
                index=j,
                keys=prim.keygen(key_seed, owner_id=f"client-{j}"),
                dataset=ClientDataset.synthetic(data_seed, samples_per_client, d),
                behavior=CORRUPTED if j in corrupted else HONEST,
            )
        )
    pubkey_digest = prim.hash_data(
        prim.encode_fields(*[c.keys.public_key for c in clients])
    )
    for c in clients:
        c.known_pubkey_digest = pubkey_digest
    return clients


@dataclass(frozen=True)
class AdversaryScript:
    """Scripted server deviation. The corrupted client set is fixed per run."""

    strategy: str = HONEST  # honest|fork|rollback|replay|sybil_flood|pretend_crash|crash_recover
    attack_round: int = 1
    params: dict = field(default_factory=dict)


@dataclass
class AttackReport:
    strategy: str
    processes_attempted: int = 0
    processes_completed: int = 0
    divergent_digests: int = 0
    bypassed: bool = False
    abort_reasons: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "processes_attempted": self.processes_attempted,
            "processes_completed": self.processes_completed,
            "divergent_digests": self.divergent_digests,
            "bypassed": self.bypassed,
            "abort_reasons": self.abort_reasons,
            **self.extra,
        }
