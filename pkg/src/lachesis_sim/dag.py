"""Per-node event store: the local append-only DAG.

Insertion validates the protocol invariants (sequence rule, Lamport rule,
parent availability, creation-time bounds) and keeps the ancestry indices
current. Forks (two events by one creator, neither a self-ancestor of the
other) are stored rather than dropped: the election has to be able to
observe a fork in order to vote its creator down.

Ancestry queries are answered from per-event observation summaries that
are filled in once at insert time:

* ``obs[e][c]`` is the highest sequence number of creator ``c`` visible in
  ``subgraph(e)``. Because the store is closed under ancestry, a fork-free
  creator's events below ``e`` are exactly the sequence prefix ``1..obs``.
* For creators with a recorded fork the sequence prefix is ambiguous, so
  ``cheater_obs[e][c]`` holds the exact id set of that creator's events
  below ``e``. A fork by ``c`` is visible inside ``subgraph(e)`` precisely
  when that set is larger than the highest observed sequence number.

Both summaries merge from the parents, so inserts stay O(#validators) and
every query about a fixed event is stable no matter when it is asked.

A Dag instance is single-writer. The simulator owns one per virtual node
and mutates it from a single logical thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import Event, EventId

# Reject the event if its creation time is this far past the local clock.
DEFAULT_MAX_FUTURE_NS = 10_000_000_000


class UnknownEvent(KeyError):
    """Query referenced an event id that is not stored."""


class Reject:
    """Reasons an event insertion can be refused."""

    DUPLICATE = "DuplicateEvent"
    MISSING_PARENT = "MissingParent"
    BAD_SEQ = "BadSeq"
    BAD_LAMPORT = "BadLamport"
    TOO_MANY_PARENTS = "TooManyParents"
    MALFORMED_PARENTS = "MalformedParents"
    TIME_REGRESSION = "TimeRegression"
    TOO_FAR_IN_FUTURE = "TooFarInFuture"
    WRONG_EPOCH = "WrongEpoch"


@dataclass(frozen=True)
class ForkPair:
    """Two events by one creator, neither a self-ancestor of the other."""

    a: EventId
    b: EventId
    creator: int


@dataclass
class InsertResult:
    accepted: bool
    reason: str | None = None
    new_forks: list[ForkPair] = field(default_factory=list)


class Dag:
    def __init__(self, epoch: int = 1, k: int = 2,
                 max_future_ns: int = DEFAULT_MAX_FUTURE_NS,
                 clock_ns: int | None = None):
        self.epoch = epoch
        self.k = k
        self.max_future_ns = max_future_ns
        # None disables the too-far-in-future guard (library use / tests).
        self.clock_ns = clock_ns

        self.events: dict[EventId, Event] = {}
        self.children: dict[EventId, list[EventId]] = {}
        # Events no stored event references yet, in insertion order.
        self.heads: dict[EventId, None] = {}
        self.by_creator: dict[int, list[EventId]] = {}
        self.by_creator_seq: dict[tuple[int, int], EventId] = {}
        self.latest: dict[int, EventId] = {}
        self.cheaters: set[int] = set()
        self.fork_pairs: list[ForkPair] = []

        self.obs: dict[EventId, dict[int, int]] = {}
        self.cheater_obs: dict[EventId, dict[int, frozenset]] = {}

    def __len__(self) -> int:
        return len(self.events)

    def __contains__(self, eid: EventId) -> bool:
        return eid in self.events

    def get(self, eid: EventId) -> Event:
        try:
            return self.events[eid]
        except KeyError:
            raise UnknownEvent(eid.hex()) from None

    # ------------------------------------------------------------------
    # Insertion
    # ------------------------------------------------------------------

    def insert(self, e: Event) -> InsertResult:
        """Validate and store one event.

        On rejection the store is untouched. On acceptance any fork newly
        completed by this event is recorded and the creator flagged.
        """
        eid = e.id
        if eid in self.events:
            return InsertResult(False, Reject.DUPLICATE)
        if e.epoch != self.epoch:
            return InsertResult(False, Reject.WRONG_EPOCH)
        ps = e.parents
        if len(ps) > self.k:
            return InsertResult(False, Reject.TOO_MANY_PARENTS)
        if len(set(ps)) != len(ps) or eid in ps:
            return InsertResult(False, Reject.MALFORMED_PARENTS)
        for p in ps:
            if p not in self.events:
                return InsertResult(False, Reject.MISSING_PARENT)

        sp = None
        if ps and self.events[ps[0]].creator == e.creator:
            sp = self.events[ps[0]]
        if sp is not None:
            if e.seq != sp.seq + 1:
                return InsertResult(False, Reject.BAD_SEQ)
        else:
            # Without a leading self-parent this must be the creator's first
            # event; an own-creator reference elsewhere in the list would
            # contradict that.
            if e.seq != 1:
                return InsertResult(False, Reject.BAD_SEQ)
            if any(self.events[p].creator == e.creator for p in ps):
                return InsertResult(False, Reject.BAD_SEQ)

        want_lamport = max((self.events[p].lamport for p in ps), default=0) + 1
        if e.lamport != want_lamport:
            return InsertResult(False, Reject.BAD_LAMPORT)

        if sp is not None and e.creation_time < sp.creation_time:
            return InsertResult(False, Reject.TIME_REGRESSION)
        if self.clock_ns is not None and \
                e.creation_time > self.clock_ns + self.max_future_ns:
            return InsertResult(False, Reject.TOO_FAR_IN_FUTURE)

        self._store(e, sp)
        new_forks = self._record_forks(e, sp)
        return InsertResult(True, None, new_forks)

    def _store(self, e: Event, sp: Event | None) -> None:
        eid = e.id
        self.events[eid] = e
        self.children[eid] = []
        for p in e.parents:
            self.children[p].append(eid)
            self.heads.pop(p, None)
        self.heads[eid] = None

        self.by_creator.setdefault(e.creator, []).append(eid)
        self.by_creator_seq.setdefault((e.creator, e.seq), eid)
        cur = self.latest.get(e.creator)
        if cur is None or (self.events[cur].seq, cur) < (e.seq, eid):
            self.latest[e.creator] = eid

        ob: dict[int, int] = {}
        for p in e.parents:
            for c, s in self.obs[p].items():
                if ob.get(c, 0) < s:
                    ob[c] = s
        if ob.get(e.creator, 0) < e.seq:
            ob[e.creator] = e.seq
        self.obs[eid] = ob

        if self.cheaters:
            co: dict[int, frozenset] = {}
            for c in self.cheaters:
                acc: set = set()
                for p in e.parents:
                    acc |= self.cheater_obs[p].get(c, frozenset())
                if e.creator == c:
                    acc.add(eid)
                co[c] = frozenset(acc)
            self.cheater_obs[eid] = co
        else:
            self.cheater_obs[eid] = {}

    def _record_forks(self, e: Event, sp: Event | None) -> list[ForkPair]:
        mine = self.by_creator[e.creator]
        if len(mine) == e.seq and mine[-1] == e.id and e.creator not in self.cheaters:
            return []  # plain chain extension, nothing to compare

        chain: set[EventId] = set()
        cur = sp
        while cur is not None:
            chain.add(cur.id)
            nxt = cur.self_parent
            cur = self.events[nxt] if nxt is not None else None

        new_pairs = []
        for other in mine:
            if other == e.id or other in chain:
                continue
            pair = ForkPair(other, e.id, e.creator)
            new_pairs.append(pair)
            self.fork_pairs.append(pair)
        if new_pairs and e.creator not in self.cheaters:
            self.cheaters.add(e.creator)
            self._backfill_cheater(e.creator)
        return new_pairs

    def _backfill_cheater(self, c: int) -> None:
        # Insertion order is parents-first, so one forward pass suffices.
        for eid, ev in self.events.items():
            acc: set = set()
            for p in ev.parents:
                acc |= self.cheater_obs[p].get(c, frozenset())
            if ev.creator == c:
                acc.add(eid)
            self.cheater_obs[eid][c] = frozenset(acc)

    # ------------------------------------------------------------------
    # Ancestry queries
    # ------------------------------------------------------------------

    def happened_before(self, x: EventId, y: EventId) -> bool:
        """True iff ``x`` is a strict ancestor of ``y``."""
        ex = self.get(x)
        self.get(y)
        if x == y:
            return False
        c = ex.creator
        if c in self.cheaters:
            return x in self.cheater_obs[y].get(c, frozenset())
        return self.obs[y].get(c, 0) >= ex.seq

    def observes(self, x: EventId, y: EventId) -> bool:
        """True iff ``x`` is in ``subgraph(y)`` (ancestor of ``y`` or equal)."""
        return x == y or self.happened_before(x, y)

    def fork_visible(self, y: EventId, c: int) -> bool:
        """True iff a fork by creator ``c`` lies inside ``subgraph(y)``.

        Exact: the id set of ``c``'s events below ``y`` is ancestry-closed,
        so it is fork-free iff it is a plain sequence prefix, i.e. iff its
        size equals the highest observed sequence number.
        """
        if c not in self.cheaters:
            return False
        if y not in self.events:
            raise UnknownEvent(y.hex())
        seen = self.cheater_obs[y].get(c)
        if not seen:
            return False
        return len(seen) > self.obs[y].get(c, 0)

    def highest_observed(self, y: EventId, c: int) -> EventId | None:
        """Highest event of creator ``c`` inside ``subgraph(y)``.

        Undefined while a fork by ``c`` is visible there; callers exclude
        that case via :meth:`fork_visible` first.
        """
        if c in self.cheaters:
            seen = self.cheater_obs[y].get(c)
            if not seen:
                return None
            return max(seen, key=lambda i: (self.events[i].seq, i))
        seq = self.obs[y].get(c, 0)
        if seq == 0:
            return None
        return self.by_creator_seq[(c, seq)]

    def subgraph(self, v: EventId) -> set[EventId]:
        """``{v}`` plus every ancestor of ``v``."""
        self.get(v)
        out: set[EventId] = set()
        stack = [v]
        while stack:
            cur = stack.pop()
            if cur in out:
                continue
            out.add(cur)
            stack.extend(p for p in self.events[cur].parents if p not in out)
        return out

    # ------------------------------------------------------------------
    # Sync support
    # ------------------------------------------------------------------

    def heights(self) -> dict[int, int]:
        """Per-creator count of locally stored events (the height vector)."""
        return {c: len(ids) for c, ids in self.by_creator.items()}

    def diff_known(self, remote_heights: dict[int, int]) -> list[Event]:
        """Events the remote is missing by its height vector.

        Unknown creators in the remote map count as height zero. The batch
        comes back in a topological order (parents before children), so a
        receiver that really has the claimed heights replays it cleanly.
        """
        picked: list[EventId] = []
        for c in sorted(self.by_creator):
            have = self.by_creator[c]
            start = remote_heights.get(c, 0)
            if start < len(have):
                picked.extend(have[start:])
        picked.sort(key=lambda i: (self.events[i].lamport, i))
        return [self.events[i] for i in picked]

    def diff_missing(self, known: set[EventId]) -> list[Event]:
        """Events not in ``known``, parents-first.

        Fallback for height-based sync: with forks, creator-local indices
        can disagree between nodes, so a receiver that hits MissingParent
        re-syncs with an explicit id set instead.
        """
        picked = [i for i in self.events if i not in known]
        picked.sort(key=lambda i: (self.events[i].lamport, i))
        return [self.events[i] for i in picked]

    def top_events(self) -> dict[int, list[EventId]]:
        """Per-creator events that no stored event references."""
        out: dict[int, list[EventId]] = {}
        for eid in self.heads:
            out.setdefault(self.events[eid].creator, []).append(eid)
        return out
