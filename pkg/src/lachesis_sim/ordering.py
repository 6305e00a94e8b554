"""Final ordering: from decided Atropos roots to blocks.

Each decided Atropos yields one block containing every event of its
subgraph not already included by an earlier block, in a deterministic
order. The block's consensus time is the stake-weighted median of the
highest creation times observed below the Atropos, with cheaters'
clocks excluded so a forking validator cannot steer timestamps.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .dag import Dag
from .events import EventId
from .stake import ValidatorSet

ORDER_LAMPORT = "lamport"   # (lamport, id)
ORDER_LAYERED = "layered"   # (layer, lamport, id)


class AtroposAlreadyBlocked(ValueError):
    """A block for this Atropos exists already."""


class MissingLayer(KeyError):
    """Layered ordering requested but an event has no layer assigned."""


def median_time(dag: Dag, eid: EventId, vs: ValidatorSet) -> int:
    """Stake-weighted median of highest observed creation times below ``eid``.

    One sample per validator: the creation time of its highest event inside
    ``subgraph(eid)``. Validators with no event there contribute nothing;
    validators whose fork is visible there are excluded outright. Returns
    the smallest time ``t`` whose cumulative stake strictly exceeds half
    the contributing stake.
    """
    dag.get(eid)
    samples: list[tuple[int, int]] = []
    contributing = 0
    for v in sorted(vs.powers):
        if dag.fork_visible(eid, v):
            continue
        h = dag.highest_observed(eid, v)
        if h is None:
            continue
        w = vs.powers[v]
        samples.append((dag.events[h].creation_time, w))
        contributing += w
    if not samples:
        return dag.events[eid].creation_time
    samples.sort()
    acc = 0
    for t, w in samples:
        acc += w
        if acc * 2 > contributing:
            return t
    return samples[-1][0]


@dataclass(frozen=True)
class Block:
    index: int
    atropos: EventId
    events: tuple[EventId, ...]
    consensus_time: int
    transactions: tuple[bytes, ...]
    parent: bytes
    digest: bytes


def _block_digest(index: int, atropos: EventId, events, consensus_time: int,
                  parent: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack(">Q", index))
    h.update(atropos)
    h.update(struct.pack(">I", len(events)))
    for eid in events:
        h.update(eid)
    h.update(struct.pack(">Q", consensus_time))
    h.update(parent)
    return h.digest()


class MainChain:
    """Append-only list of blocks caching the final order."""

    def __init__(self):
        self.blocks: list[Block] = []
        self.confirmed: set[EventId] = set()
        self._atropoi: set[EventId] = set()

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def last_digest(self) -> bytes:
        return self.blocks[-1].digest if self.blocks else b"\x00" * 32


def make_block(chain: MainChain, dag: Dag, atropos: EventId, vs: ValidatorSet,
               backend: str = ORDER_LAMPORT,
               layers: dict[EventId, int] | None = None) -> Block:
    """Peel the Atropos subgraph into the next block and append it.

    Events are the not-yet-confirmed part of ``subgraph(atropos)``, sorted
    by (lamport, id) — or (layer, lamport, id) with the layered backend —
    which puts parents before children either way. Transactions flatten in
    event order.
    """
    if atropos in chain._atropoi:
        raise AtroposAlreadyBlocked(atropos.hex())
    dag.get(atropos)

    fresh: list[EventId] = []
    seen: set[EventId] = set()
    stack = [atropos]
    while stack:
        cur = stack.pop()
        if cur in seen or cur in chain.confirmed:
            continue
        seen.add(cur)
        fresh.append(cur)
        stack.extend(dag.events[cur].parents)

    if backend == ORDER_LAMPORT:
        fresh.sort(key=lambda i: (dag.events[i].lamport, i))
    elif backend == ORDER_LAYERED:
        if layers is None:
            raise MissingLayer("no layer map supplied")
        try:
            fresh.sort(key=lambda i: (layers[i], dag.events[i].lamport, i))
        except KeyError as exc:
            raise MissingLayer(str(exc)) from None
    else:
        raise ValueError(f"unknown ordering backend: {backend}")

    txs: list[bytes] = []
    for eid in fresh:
        txs.extend(dag.events[eid].transactions)

    index = len(chain.blocks) + 1
    ct = median_time(dag, atropos, vs)
    parent = chain.last_digest
    block = Block(
        index=index,
        atropos=atropos,
        events=tuple(fresh),
        consensus_time=ct,
        transactions=tuple(txs),
        parent=parent,
        digest=_block_digest(index, atropos, fresh, ct, parent),
    )
    chain.blocks.append(block)
    chain.confirmed.update(fresh)
    chain._atropoi.add(atropos)
    return block


def topo_sort_layered(dag: Dag, atropos_list, layers: dict[EventId, int]) -> list[EventId]:
    """Order events by peeling Atropos subgraphs in (layer, lamport, id) order.

    Atropoi are processed sorted by the same key; each contributes the
    not-yet-emitted part of its subgraph. Overlap therefore lands under the
    earliest Atropos that covers it.
    """
    def key(eid: EventId):
        try:
            return (layers[eid], dag.events[eid].lamport, eid)
        except KeyError:
            raise MissingLayer(eid.hex()) from None

    out: list[EventId] = []
    done: set[EventId] = set()
    for a in sorted(atropos_list, key=key):
        part = [e for e in dag.subgraph(a) if e not in done]
        part.sort(key=key)
        out.extend(part)
        done.update(part)
    return out


def validation_score(dag: Dag, eid: EventId, roots: dict[EventId, bool],
                     vs: ValidatorSet) -> int:
    """Total power of the roots reachable from ``eid``. Diagnostic only."""
    dag.get(eid)
    return sum(vs.power(dag.events[r].creator)
               for r in dag.subgraph(eid) if roots.get(r))
