"""Hash-linked, quote-authenticated log of participation history and auditor
designations.

Each entry links to its predecessor by digest; the chain digest is the hash of
the latest entry. Only the latest entry's quote needs to verify (the hash links
authenticate the rest), but every entry retains its quote for forensics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

from . import primitives as prim
from .errors import EmptyChain, InvalidChain
from .primitives import Quote

KIND_INIT = "init"
KIND_UPDATE = "update"
KIND_RECOVERY = "recovery"
KIND_PARTICIPATION = "participation"

# Kinds that consume a round index.
_ROUND_KINDS = (KIND_UPDATE, KIND_RECOVERY)


@dataclass(frozen=True)
class Evidence:
    chain_id: bytes
    prev_digest: bytes | None
    kind: str
    auditors_next: tuple[int, ...]
    cohort: tuple[int, ...]
    round_index: int | None
    args_secagg_hash: bytes
    pubkey_list_digest: bytes | None
    quote: Quote


def evidence_payload(ev: Evidence) -> bytes:
    """Canonical encoding of everything the quote covers."""
    return prim.encode_fields(
        ev.chain_id,
        ev.prev_digest if ev.prev_digest is not None else b"",
        ev.kind.encode(),
        prim.encode_index_list(ev.auditors_next),
        prim.encode_index_list(ev.cohort),
        prim.encode_int(ev.round_index) if ev.round_index is not None else b"",
        ev.args_secagg_hash,
        ev.pubkey_list_digest if ev.pubkey_list_digest is not None else b"",
    )


def encode_evidence(ev: Evidence) -> bytes:
    return prim.encode_fields(
        evidence_payload(ev), ev.quote.code_id, ev.quote.payload, ev.quote.signature
    )


def evidence_digest(ev: Evidence) -> bytes:
    return prim.hash_data(encode_evidence(ev))


@dataclass(frozen=True)
class EvidenceChain:
    entries: tuple[Evidence, ...] = ()

    def append(self, ev: Evidence) -> "EvidenceChain":
        return EvidenceChain(self.entries + (ev,))

    def __len__(self) -> int:
        return len(self.entries)


def chain_digest(chain: EvidenceChain) -> bytes:
    if not chain.entries:
        raise EmptyChain("chain has no entries")
    return evidence_digest(chain.entries[-1])


def next_round_index(chain: EvidenceChain) -> int:
    return sum(1 for e in chain.entries if e.kind in _ROUND_KINDS)


def verify_chain(
    chain: EvidenceChain, manufacturer_pk: bytes, planner_code_id: bytes
) -> tuple[bool, str | None]:
    """Check hash links, uniform chain id, sequential round indices, and the
    latest entry's quote. Returns (ok, reason)."""
    if not chain.entries:
        return False, "EmptyChain"
    first = chain.entries[0]
    if first.kind != KIND_INIT or first.prev_digest is not None:
        return False, "BrokenLink"
    expected_round = 0
    for k, ev in enumerate(chain.entries):
        if ev.chain_id != first.chain_id:
            return False, "MixedChainId"
        if k > 0:
            if ev.kind == KIND_INIT or ev.prev_digest is None:
                return False, "BrokenLink"
            if ev.prev_digest != evidence_digest(chain.entries[k - 1]):
                return False, "BrokenLink"
        if ev.kind in _ROUND_KINDS:
            if ev.round_index != expected_round:
                return False, "BadRoundIndex"
            expected_round += 1
        elif ev.kind == KIND_INIT:
            if ev.round_index is not None:
                return False, "BadRoundIndex"
    last = chain.entries[-1]
    if last.quote.payload != evidence_payload(last):
        return False, "BadQuote"
    if not prim.verify_quote(last.quote, planner_code_id, manufacturer_pk):
        return False, "BadQuote"
    return True, None


def latest_auditors(chain: EvidenceChain) -> list[int]:
    if not chain.entries:
        raise InvalidChain("empty chain")
    return list(chain.entries[-1].auditors_next)


def derive_history(chain: EvidenceChain, n_clients: int) -> list[set[int]]:
    """Fold update entries into per-client participation sets. Recovery and
    participation entries contribute nothing."""
    history: list[set[int]] = [set() for _ in range(n_clients)]
    for ev in chain.entries:
        if ev.kind == KIND_UPDATE:
            for j in ev.cohort:
                history[j].add(ev.round_index)
    return history


# --- JSON serialization -----------------------------------------------------

def _hex_or_none(b: bytes | None) -> str | None:
    return b.hex() if b is not None else None


def evidence_to_dict(ev: Evidence) -> dict:
    return {
        "chain_id": ev.chain_id.hex(),
        "prev_digest": _hex_or_none(ev.prev_digest),
        "kind": ev.kind,
        "auditors_next": list(ev.auditors_next),
        "cohort": list(ev.cohort),
        "round_index": ev.round_index,
        "args_secagg_hash": ev.args_secagg_hash.hex(),
        "pubkey_list_digest": _hex_or_none(ev.pubkey_list_digest),
        "quote": {
            "code_id": ev.quote.code_id.hex(),
            "payload": ev.quote.payload.hex(),
            "signature": ev.quote.signature.hex(),
        },
    }


def evidence_from_dict(d: dict) -> Evidence:
    return Evidence(
        chain_id=bytes.fromhex(d["chain_id"]),
        prev_digest=bytes.fromhex(d["prev_digest"]) if d["prev_digest"] else None,
        kind=d["kind"],
        auditors_next=tuple(d["auditors_next"]),
        cohort=tuple(d["cohort"]),
        round_index=d["round_index"],
        args_secagg_hash=bytes.fromhex(d["args_secagg_hash"]),
        pubkey_list_digest=(
            bytes.fromhex(d["pubkey_list_digest"]) if d["pubkey_list_digest"] else None
        ),
        quote=Quote(
            code_id=bytes.fromhex(d["quote"]["code_id"]),
            payload=bytes.fromhex(d["quote"]["payload"]),
            signature=bytes.fromhex(d["quote"]["signature"]),
        ),
    )


def chain_to_json(chain: EvidenceChain, meta: dict | None = None) -> str:
    doc = {"entries": [evidence_to_dict(e) for e in chain.entries]}
    if meta is not None:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, sort_keys=True)


def chain_from_json(text: str) -> tuple[EvidenceChain, dict]:
    doc = json.loads(text)
    chain = EvidenceChain(tuple(evidence_from_dict(d) for d in doc["entries"]))
    return chain, doc.get("meta", {})


def mutate_entry(chain: EvidenceChain, index: int, **changes) -> EvidenceChain:
    """Return a chain with entry `index` field-mutated (test/attack helper)."""
    entries = list(chain.entries)
    entries[index] = replace(entries[index], **changes)
    return EvidenceChain(tuple(entries))
