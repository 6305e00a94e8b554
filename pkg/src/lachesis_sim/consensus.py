"""Root election and finality voting.

One :class:`Election` wraps one node's DAG and validator set for one
epoch. It assigns every inserted event a frame number, registers roots,
and runs the deterministic stake-weighted virtual-voting rounds that
first decide which roots are candidates (Clotho) and then pick the final
root (Atropos) of each frame.

Everything here is a pure function of event subgraphs plus the fixed
validator set, which is what makes the outcome identical on every honest
node regardless of arrival order:

* an event's frame depends only on its own subgraph;
* a voter root's vote depends only on the voter's subgraph (the store is
  closed under ancestry, so any root it could observe is already local);
* decisions aggregate votes in a fixed (frame, lamport, id) order and are
  final once made.

Votes are cast per validator slot ``(frame, validator)`` rather than per
root event. A slot with no observed root collects NO votes and is decided
negatively once a quorum says so; this is what lets frames finalize while
a validator is offline, and it also copes with a cheater contributing
several roots to one slot (at most one of them can ever be vouched for,
because observing both branches of a fork disqualifies them both).
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass

from .dag import Dag, UnknownEvent
from .events import Event, EventId
from .stake import ValidatorSet

ATROPOS_DECIDED = "decided"
ATROPOS_UNDECIDED = "undecided"
ATROPOS_SKIPPED = "skipped"  # every slot of the frame decided negative


def forkless_cause(dag: Dag, x: EventId, y: EventId, vs: ValidatorSet) -> bool:
    """True iff ``y`` is forkless-caused by ``x`` (``x`` is the earlier event).

    Restricted to ``subgraph(y)``: no fork by ``x``'s creator may be visible
    there, and the validators that each have at least one fork-free event in
    ``subgraph(y)`` with ``x`` as ancestor (or equal to ``x``) must carry
    total power of at least the quorum. Stricter than happened-before and
    deliberately not transitive in the presence of forks.
    """
    ex = dag.get(x)
    dag.get(y)
    if dag.fork_visible(y, ex.creator):
        return False
    if not dag.observes(x, y):
        return False
    total = 0
    for v, w in vs.powers.items():
        if dag.fork_visible(y, v):
            continue
        h = dag.highest_observed(y, v)
        if h is None:
            continue
        if dag.observes(x, h):
            total += w
            if total >= vs.quorum:
                return True
    return total >= vs.quorum


@dataclass
class Vote:
    yes: bool
    seen: EventId | None  # root this vote vouches for (YES votes only)


@dataclass
class Decision:
    candidate: bool
    root: EventId | None  # the elected root when candidate is True


class Election:
    """Frame assignment plus Clotho/Atropos election over one DAG."""

    def __init__(self, dag: Dag, validators: ValidatorSet, trace=None):
        self.dag = dag
        self.vs = validators
        # frame -> creator -> root event ids (forks can add extra entries)
        self.frames: dict[int, dict[int, list[EventId]]] = {}
        # frame -> sorted [(lamport, id)] of that frame's roots (voter order)
        self.roots_by_frame: dict[int, list[tuple[int, EventId]]] = {}
        self.frame_of: dict[EventId, int] = {}
        self.is_root: dict[EventId, bool] = {}
        # (voter root id, frame, validator) -> Vote
        self.votes: dict[tuple[EventId, int, int], Vote] = {}
        # (frame, validator) -> Decision; never flips once present
        self.decisions: dict[tuple[int, int], Decision] = {}
        # frame -> atropos id (None when the whole frame decided negative)
        self.atropos: dict[int, EventId | None] = {}
        self.last_decided_frame = 0
        self.max_frame = 0
        self.frame_mismatches: list[EventId] = []
        self.trace = trace
        self._dirty = False

    # ------------------------------------------------------------------
    # Frame assignment
    # ------------------------------------------------------------------

    def observe(self, e: Event) -> tuple[int, bool]:
        """Assign ``e`` its frame, registering it as a root if it is one.

        Called once per event, parents first (insertion order). A leaf
        (parentless) event is a frame-1 root. Any other event stays at its
        self-parent's frame unless the roots of some frame ``g`` at or
        above it forkless-cause it with quorum power, in which case it
        starts frame ``g + 1`` as a root (the highest qualifying ``g``
        wins, so a validator that fell behind can jump frames).

        The lower bound is deliberately the self-parent's frame, not the
        maximum parent frame: referencing another validator's root must
        not drag an event into a frame it never qualified for, or lagging
        validators could become unable to ever produce a root again and
        frame progress would deadlock.
        """
        eid = e.id
        if eid in self.frame_of:
            return self.frame_of[eid], self.is_root[eid]
        if not e.parents:
            frame, root = 1, True
        else:
            sp = e.self_parent
            try:
                f0 = self.frame_of[sp] if sp is not None else 1
                for p in e.parents:
                    self.frame_of[p]
            except KeyError:
                raise UnknownEvent("parent not frame-assigned") from None
            frame, root = f0, False
            for g in range(self.max_frame, f0 - 1, -1):
                if self._causing_power(eid, g) >= self.vs.quorum:
                    frame, root = g + 1, True
                    break
        self.frame_of[eid] = frame
        self.is_root[eid] = root
        if root:
            self.frames.setdefault(frame, {}).setdefault(e.creator, []).append(eid)
            insort(self.roots_by_frame.setdefault(frame, []), (e.lamport, eid))
            if frame > self.max_frame:
                self.max_frame = frame
            self._dirty = True
        if e.frame and e.frame != frame:
            self.frame_mismatches.append(eid)
        return frame, root

    def assign_frame(self, e: Event) -> tuple[int, bool]:
        """Alias of :meth:`observe` named for what it computes."""
        return self.observe(e)

    def _causing_power(self, eid: EventId, frame: int) -> int:
        total = 0
        slots = self.frames.get(frame)
        if not slots:
            return 0
        for creator in slots:
            for r in slots[creator]:
                if forkless_cause(self.dag, r, eid, self.vs):
                    total += self.vs.power(creator)
                    break  # a validator's power counts once
        return total

    # ------------------------------------------------------------------
    # Clotho election (candidate decisions)
    # ------------------------------------------------------------------

    def decide_clotho(self) -> None:
        """Run the voting rounds over everything currently undecided.

        Idempotent: votes are memoized, decided slots are skipped, and a
        re-run with no new roots is a no-op.
        """
        if not self._dirty:
            return
        self._dirty = False
        for frame in range(self.last_decided_frame + 1, self.max_frame + 1):
            for validator in self.vs.sorted_ids:
                if (frame, validator) not in self.decisions:
                    self._elect_slot(frame, validator)

    def _elect_slot(self, frame: int, validator: int) -> None:
        for g in range(frame + 1, self.max_frame + 1):
            for _, voter in self.roots_by_frame.get(g, []):
                key = (voter, frame, validator)
                if key not in self.votes:
                    self.votes[key] = self._cast_vote(voter, g, frame, validator)
                if (frame, validator) in self.decisions:
                    return

    def _cast_vote(self, voter: EventId, voter_frame: int,
                   frame: int, validator: int) -> Vote:
        rnd = voter_frame - frame
        if rnd == 1:
            # Direct observation: vouch for the one branch this voter can
            # forkless-see, if any.
            seen = None
            for r in self.frames.get(frame, {}).get(validator, []):
                if forkless_cause(self.dag, r, voter, self.vs):
                    seen = r
                    break
            return Vote(seen is not None, seen)

        yes = no = 0
        seen_weight: dict[EventId, int] = {}
        for _, prev in self.roots_by_frame.get(voter_frame - 1, []):
            if not forkless_cause(self.dag, prev, voter, self.vs):
                continue
            pv = self.votes[(prev, frame, validator)]
            w = self.vs.power(self.dag.events[prev].creator)
            if pv.yes:
                yes += w
                if pv.seen is not None:
                    seen_weight[pv.seen] = seen_weight.get(pv.seen, 0) + w
            else:
                no += w
        vote_yes = (yes - no) >= 0
        seen = self._majority_root(seen_weight) if (vote_yes and seen_weight) else None
        vote = Vote(vote_yes, seen)

        decision = None
        if yes >= self.vs.quorum:
            decision = Decision(True, self._majority_root(seen_weight))
        elif no >= self.vs.quorum:
            decision = Decision(False, None)
        if decision is not None:
            self.decisions[(frame, validator)] = decision
        if self.trace is not None:
            self.trace({
                "subject": [frame, validator],
                "voter": voter.hex(),
                "round": rnd,
                "vote": vote_yes,
                "yes_power": yes,
                "no_power": no,
                "decision": (None if decision is None else decision.candidate),
            })
        return vote

    @staticmethod
    def _majority_root(seen_weight: dict[EventId, int]) -> EventId:
        # Heaviest vouched-for branch; ties break on the smaller id bytes.
        return min(seen_weight, key=lambda r: (-seen_weight[r], r))

    # ------------------------------------------------------------------
    # Atropos
    # ------------------------------------------------------------------

    def decide_atropos(self, frame: int) -> tuple[str, EventId | None]:
        """Pick the frame's final root from the decided candidates.

        Walks validators sorted by stake (descending, ids ascending on
        ties): an undecided slot stops the walk, the first positive slot
        yields the Atropos, negative slots are skipped. A frame whose
        slots all decided negative is reported as skipped.
        """
        for validator in self.vs.sorted_ids:
            d = self.decisions.get((frame, validator))
            if d is None:
                return ATROPOS_UNDECIDED, None
            if d.candidate:
                return ATROPOS_DECIDED, d.root
        return ATROPOS_SKIPPED, None

    def advance(self) -> list[tuple[int, EventId | None]]:
        """Decide everything decidable; return newly settled frames in order.

        Each entry is ``(frame, atropos_id_or_None)``. Settled frames are
        immutable: they are recorded and never revisited.
        """
        self.decide_clotho()
        settled = []
        while True:
            frame = self.last_decided_frame + 1
            status, aid = self.decide_atropos(frame)
            if status == ATROPOS_UNDECIDED:
                break
            self.atropos[frame] = aid
            self.last_decided_frame = frame
            settled.append((frame, aid))
        return settled

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    def candidate_flag(self, root: EventId) -> bool | None:
        """Decided candidate flag for a registered root, None if open."""
        frame = self.frame_of.get(root)
        if frame is None or not self.is_root.get(root):
            return None
        d = self.decisions.get((frame, self.dag.events[root].creator))
        if d is None:
            return None
        if d.candidate:
            return d.root == root
        return False
