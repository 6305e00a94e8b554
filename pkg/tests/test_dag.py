"""Event store validation, fork recording and ancestry queries."""

import random

import pytest

from lachesis_sim import Dag, ForkPair, Reject, UnknownEvent

from helpers import Builder, make_event, replay, topo_shuffle
from oracles import (ancestor_closure, brute_happened_before, gen_events,
                     index_events, is_topological)


def fresh(k=8):
    return Dag(epoch=1, k=k)


# -- Insertion ---------------------------------------------------------------

def test_leaf_into_empty_dag_becomes_top():
    dag = fresh()
    leaf = make_event(0, t=0)
    res = dag.insert(leaf)
    assert res.accepted and not res.new_forks
    assert dag.top_events() == {0: [leaf.id]}
    assert dag.heights() == {0: 1}


def test_unknown_parent_rejected_and_dag_unchanged():
    dag = fresh()
    ghost = make_event(1, t=0)
    orphan = make_event(0, [ghost])
    res = dag.insert(orphan)
    assert (res.accepted, res.reason) == (False, Reject.MISSING_PARENT)
    assert len(dag) == 0


def test_duplicate_rejected():
    dag = fresh()
    leaf = make_event(0)
    assert dag.insert(leaf).accepted
    assert dag.insert(leaf).reason == Reject.DUPLICATE


def test_bad_seq_rejected():
    dag = fresh()
    leaf = make_event(0)
    dag.insert(leaf)
    skipper = make_event(0, [leaf], seq=5)
    assert dag.insert(skipper).reason == Reject.BAD_SEQ
    # claiming to be a first event while referencing your own chain
    liar = make_event(0, [leaf], seq=1)
    assert dag.insert(liar).reason == Reject.BAD_SEQ


def test_bad_lamport_rejected():
    dag = fresh()
    leaf = make_event(0)
    dag.insert(leaf)
    wrong = make_event(0, [leaf], lamport=9)
    assert dag.insert(wrong).reason == Reject.BAD_LAMPORT


def test_too_many_parents_rejected():
    dag = fresh(k=2)
    leaves = [make_event(c, t=0) for c in range(4)]
    for leaf in leaves:
        assert dag.insert(leaf).accepted
    fat = make_event(0, leaves)
    assert dag.insert(fat).reason == Reject.TOO_MANY_PARENTS


def test_duplicate_parent_entries_rejected():
    dag = fresh()
    a, b = make_event(0), make_event(1)
    dag.insert(a)
    dag.insert(b)
    e = make_event(2, [b, b], seq=1)
    assert dag.insert(e).reason == Reject.MALFORMED_PARENTS


def test_time_regression_rejected():
    dag = fresh()
    leaf = make_event(0, t=100)
    dag.insert(leaf)
    early = make_event(0, [leaf], t=99)
    assert dag.insert(early).reason == Reject.TIME_REGRESSION


def test_too_far_in_future_rejected_when_clock_known():
    dag = fresh()
    dag.clock_ns = 1_000
    ok = make_event(0, t=5_000)
    assert dag.insert(ok).accepted  # within the 10 s default window
    rushed = make_event(1, t=1_000 + dag.max_future_ns + 1)
    assert dag.insert(rushed).reason == Reject.TOO_FAR_IN_FUTURE


def test_wrong_epoch_rejected():
    dag = Dag(epoch=2)
    stale = make_event(0, epoch=1)
    assert dag.insert(stale).reason == Reject.WRONG_EPOCH


# -- Forks -------------------------------------------------------------------

def test_fork_recorded_and_creator_flagged():
    b = Builder()
    b.leaf(0)
    x, y = b.fork(0)
    dag = fresh()
    for e in b.events:
        res = dag.insert(e)
        assert res.accepted
    assert res.new_forks == [ForkPair(x.id, y.id, 0)]
    assert dag.cheaters == {0}
    assert len(dag) == 3  # fork events are stored, not dropped


def test_fork_detection_symmetric_under_arrival_order():
    b = Builder()
    b.leaf(0)
    x, y = b.fork(0)
    leaf = b.events[0]
    for first, second in ((x, y), (y, x)):
        dag = fresh()
        dag.insert(leaf)
        assert not dag.insert(first).new_forks
        forks = dag.insert(second).new_forks
        assert {forks[0].a, forks[0].b} == {x.id, y.id}


def test_chain_extension_is_not_a_fork():
    b = Builder()
    b.leaf(0)
    b.ev(0)
    b.ev(0)
    dag = fresh()
    for e in b.events:
        assert dag.insert(e).new_forks == []
    assert dag.cheaters == set()


# -- Ancestry ----------------------------------------------------------------

def test_happened_before_one_edge():
    b = Builder()
    leaf = b.leaf(0)
    child = b.ev(0)
    dag, _ = replay(b.events, [1])
    assert dag.happened_before(leaf.id, child.id)
    assert not dag.happened_before(child.id, leaf.id)


def test_happened_before_is_strict():
    b = Builder()
    leaf = b.leaf(0)
    dag, _ = replay(b.events, [1])
    assert not dag.happened_before(leaf.id, leaf.id)


def test_leaves_of_different_creators_are_concurrent():
    b = Builder()
    a, c = b.leaf(0), b.leaf(1)
    dag, _ = replay(b.events, [1, 1])
    assert not dag.happened_before(a.id, c.id)
    assert not dag.happened_before(c.id, a.id)


def test_happened_before_unknown_event_raises():
    dag = fresh()
    leaf = make_event(0)
    dag.insert(leaf)
    with pytest.raises(UnknownEvent):
        dag.happened_before(leaf.id, b"\x00" * 32)


def test_subgraph_examples():
    b = Builder()
    l0, l1 = b.leaf(0), b.leaf(1)
    top = b.ev(0, l1)
    dag, _ = replay(b.events, [1, 1])
    assert dag.subgraph(l0.id) == {l0.id}
    assert dag.subgraph(top.id) == {l0.id, l1.id, top.id}


def test_subgraph_matches_closure_oracle_on_random_dags():
    rng = random.Random(90)
    for trial in range(20):
        events = gen_events(rng, 4, 10 + trial % 6)
        dag, _ = replay(events, [1] * 4)
        by_id = index_events(events)
        for e in events:
            assert dag.subgraph(e.id) == ancestor_closure(by_id, e.id)


def test_happened_before_matches_oracle_with_forks():
    rng = random.Random(91)
    for trial in range(20):
        events = gen_events(rng, 4, 14, fork_creator=trial % 4)
        dag, _ = replay(events, [1] * 4)
        by_id = index_events(events)
        for x in events:
            for y in events:
                assert dag.happened_before(x.id, y.id) == \
                    brute_happened_before(by_id, x.id, y.id), (x.short(), y.short())


# -- Sync support ------------------------------------------------------------

def test_diff_known_equal_heights_is_empty():
    events = gen_events(random.Random(1), 3, 9)
    dag, _ = replay(events, [1] * 3)
    assert dag.diff_known(dag.heights()) == []


def test_diff_known_returns_missing_suffix_parents_first():
    b = Builder()
    b.leaf(0), b.leaf(1)
    b.ev(0)
    b.ev(1)
    b.ev(0)
    dag, _ = replay(b.events, [1, 1])
    remote = {0: 1, 1: 2}
    batch = dag.diff_known(remote)
    assert [e.creator for e in batch] == [0, 0]
    assert [e.seq for e in batch] == [2, 3]  # self-parent first
    assert is_topological(batch)


def test_diff_known_unknown_creator_counts_as_zero():
    b = Builder()
    b.leaf(0), b.leaf(1)
    b.ev(1)
    dag, _ = replay(b.events, [1, 1])
    batch = dag.diff_known({0: 1})
    assert [e.creator for e in batch] == [1, 1]


def test_diff_batch_replays_cleanly():
    events = gen_events(random.Random(8), 4, 20)
    full, _ = replay(events, [1] * 4)
    partial, _ = replay(events[:7], [1] * 4)
    batch = full.diff_known(partial.heights())
    for e in batch:
        assert partial.insert(e).accepted
    assert set(partial.events) == set(full.events)


# -- Store invariants --------------------------------------------------------

def test_lamport_edge_monotonicity():
    events = gen_events(random.Random(17), 5, 40)
    dag, _ = replay(events, [1] * 5)
    for e in dag.events.values():
        for p in e.parents:
            assert e.lamport > dag.events[p].lamport


def test_subgraphs_agree_across_insertion_orders():
    rng = random.Random(18)
    events = gen_events(rng, 4, 25)
    dag1, _ = replay(events, [1] * 4)
    dag2, _ = replay(topo_shuffle(events, rng), [1] * 4)
    for e in events:
        assert dag1.subgraph(e.id) == dag2.subgraph(e.id)


def test_happened_before_is_strict_partial_order():
    rng = random.Random(19)
    for trial in range(12):
        events = gen_events(rng, 3, 12)
        dag, _ = replay(events, [1] * 3)
        ids = [e.id for e in events]
        for x in ids:
            assert not dag.happened_before(x, x)
            for y in ids:
                if dag.happened_before(x, y):
                    assert not dag.happened_before(y, x)
                for z in ids:
                    if dag.happened_before(x, y) and dag.happened_before(y, z):
                        assert dag.happened_before(x, z)


def test_closed_under_ancestry_by_construction():
    events = gen_events(random.Random(20), 4, 30)
    dag, _ = replay(events, [1] * 4)
    for e in dag.events.values():
        for p in e.parents:
            assert p in dag
