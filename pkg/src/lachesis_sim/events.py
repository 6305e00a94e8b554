"""Event blocks and their canonical byte encoding.

An event is one vertex of a node's local DAG: it batches transactions,
references parent events by digest, and carries the creator's logical
(Lamport) and physical (creation) timestamps. Event identity is the
SHA-256 digest of the canonical encoding, so equal field values produce
equal ids on every node, every run, every platform.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

DIGEST_SIZE = 32

# 32-byte SHA-256 digest of an event's canonical encoding.
EventId = bytes


def tx_digest(transactions) -> bytes:
    """Digest over a transaction list: count-prefixed, each length-prefixed."""
    h = hashlib.sha256()
    h.update(struct.pack(">I", len(transactions)))
    for tx in transactions:
        h.update(struct.pack(">I", len(tx)))
        h.update(tx)
    return h.digest()


@dataclass
class Event:
    """One event block.

    ``parents`` is ordered: when ``seq > 1`` the first entry must reference
    the creator's previous event (the self-parent); a ``seq == 1`` event has
    no self-parent. ``frame`` is declarative only: it records what the
    creator's own election computed, is excluded from the digest, and every
    receiver re-derives it (a mismatch is a diagnostic, not a rejection).
    The gas counters are carried opaquely and never computed here.
    """

    epoch: int
    seq: int
    creator: int
    parents: tuple[EventId, ...]
    lamport: int
    creation_time: int  # simulated UnixNano
    transactions: tuple[bytes, ...] = ()
    gas_power_left: int = 0
    gas_power_used: int = 0
    tx_hash: bytes = b""
    frame: int = 0
    _digest: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.parents = tuple(self.parents)
        self.transactions = tuple(self.transactions)
        if not self.tx_hash:
            self.tx_hash = tx_digest(self.transactions)

    # ------------------------------------------------------------------
    # Identity
    # ------------------------------------------------------------------

    def encode(self) -> bytes:
        """Canonical encoding: the digest preimage.

        Field order and widths are pinned once: epoch, seq, creator,
        parents (count-prefixed), lamport, creation_time, tx_hash, then the
        two gas counters. Integers are big-endian fixed width. ``frame``
        and the signature are derived data and deliberately excluded.
        """
        out = [
            struct.pack(">QQQ", self.epoch, self.seq, self.creator),
            struct.pack(">I", len(self.parents)),
        ]
        out.extend(self.parents)
        out.append(struct.pack(">QQ", self.lamport, self.creation_time))
        out.append(self.tx_hash)
        out.append(struct.pack(">QQ", self.gas_power_left, self.gas_power_used))
        return b"".join(out)

    @property
    def id(self) -> EventId:
        if self._digest is None:
            self._digest = hashlib.sha256(self.encode()).digest()
        return self._digest

    @property
    def sig(self) -> bytes:
        """Simulated signature: creator id followed by the digest.

        Stands in for real ECDSA; swap :func:`sign_event` to change schemes.
        """
        return sign_event(self)

    @property
    def self_parent(self) -> EventId | None:
        if self.seq > 1 and self.parents:
            return self.parents[0]
        return None

    def short(self) -> str:
        return self.id.hex()[:8]


def sign_event(e: Event) -> bytes:
    return struct.pack(">Q", e.creator) + e.id


def verify_signature(e: Event, sig: bytes) -> bool:
    return sig == sign_event(e)


# ----------------------------------------------------------------------
# JSON transport (full event, unlike the digest preimage)
# ----------------------------------------------------------------------


def event_to_json(e: Event, **extra) -> str:
    rec = {
        "id": e.id.hex(),
        "epoch": e.epoch,
        "seq": e.seq,
        "creator": e.creator,
        "parents": [p.hex() for p in e.parents],
        "lamport": e.lamport,
        "time": e.creation_time,
        "frame": e.frame,
        "txs": [t.hex() for t in e.transactions],
        "gas_left": e.gas_power_left,
        "gas_used": e.gas_power_used,
    }
    rec.update(extra)
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def event_from_json(line: str) -> Event:
    rec = json.loads(line)
    return Event(
        epoch=rec["epoch"],
        seq=rec["seq"],
        creator=rec["creator"],
        parents=tuple(bytes.fromhex(p) for p in rec["parents"]),
        lamport=rec["lamport"],
        creation_time=rec["time"],
        transactions=tuple(bytes.fromhex(t) for t in rec["txs"]),
        gas_power_left=rec.get("gas_left", 0),
        gas_power_used=rec.get("gas_used", 0),
        frame=rec.get("frame", 0),
    )
