"""Shared test helpers: explicit event construction and DAG replay."""

from __future__ import annotations

import random

from lachesis_sim import Dag, Election, Event, ValidatorSet


def make_event(creator, parents=(), t=None, txs=(), epoch=1, lamport=None, seq=None):
    """Build a valid event from parent Event objects (self-parent first)."""
    parents = tuple(parents)
    sp = parents[0] if parents and parents[0].creator == creator else None
    if seq is None:
        seq = sp.seq + 1 if sp is not None else 1
    if lamport is None:
        lamport = max((p.lamport for p in parents), default=0) + 1
    if t is None:
        t = max((p.creation_time for p in parents), default=0) + 1
    return Event(
        epoch=epoch, seq=seq, creator=creator,
        parents=tuple(p.id for p in parents),
        lamport=lamport, creation_time=t, transactions=tuple(txs),
    )


class Builder:
    """Incrementally grow an event list with per-creator chain tracking."""

    def __init__(self, epoch=1):
        self.epoch = epoch
        self.events: list[Event] = []
        self.top: dict[int, Event] = {}

    def leaf(self, creator, t=None) -> Event:
        e = make_event(creator, (), t=t if t is not None else 0, epoch=self.epoch)
        self.events.append(e)
        self.top[creator] = e
        return e

    def ev(self, creator, *others: Event, t=None, txs=()) -> Event:
        parents = []
        if creator in self.top:
            parents.append(self.top[creator])
        parents.extend(others)
        e = make_event(creator, parents, t=t, txs=txs, epoch=self.epoch)
        self.events.append(e)
        self.top[creator] = e
        return e

    def fork(self, creator, *others_a, others_b=()) -> tuple[Event, Event]:
        """Two events off the creator's current top (a fork pair)."""
        sp = self.top[creator]
        a = make_event(creator, (sp, *others_a), epoch=self.epoch)
        b = make_event(creator, (sp, *others_b),
                       t=a.creation_time + 1, epoch=self.epoch)
        self.events.extend([a, b])
        self.top[creator] = a
        return a, b


def replay(events, stakes, k=8) -> tuple[Dag, Election]:
    """Insert events (given order) into a fresh store plus election."""
    vs = ValidatorSet.from_powers(dict(enumerate(stakes)))
    dag = Dag(epoch=events[0].epoch if events else 1, k=k)
    el = Election(dag, vs)
    for e in events:
        res = dag.insert(e)
        if res.accepted:
            el.observe(e)
    return dag, el


def topo_shuffle(events, rng: random.Random):
    """Random permutation keeping every parent before its children."""
    pending = list(events)
    placed_ids = set()
    out = []
    while pending:
        ready = [e for e in pending if all(p in placed_ids for p in e.parents)]
        e = ready[int(rng.random() * len(ready)) % len(ready)]
        pending.remove(e)
        placed_ids.add(e.id)
        out.append(e)
    return out
