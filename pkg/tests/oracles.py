"""Brute-force reference implementations.

Everything here works from raw event lists with naive graph walks, no
shared code with the fast paths it cross-checks: reachability by repeated
edge expansion, fork detection by pairwise self-ancestor walks, the
weighted median by unit expansion, layering by exhaustive path
enumeration.
"""

from __future__ import annotations

import random

from helpers import make_event


def index_events(events):
    return {e.id: e for e in events}


def ancestor_closure(by_id, eid):
    """{eid} plus all ancestors, via repeated edge expansion."""
    out = {eid}
    changed = True
    while changed:
        changed = False
        for cur in list(out):
            for p in by_id[cur].parents:
                if p not in out:
                    out.add(p)
                    changed = True
    return out


def brute_happened_before(by_id, x, y):
    return x != y and x in ancestor_closure(by_id, y)


def _self_chain(by_id, eid):
    chain = [eid]
    while True:
        e = by_id[chain[-1]]
        if e.seq == 1 or not e.parents:
            return chain
        sp = e.parents[0]
        if by_id[sp].creator != e.creator:
            return chain
        chain.append(sp)


def is_fork_pair(by_id, a, b):
    ea, eb = by_id[a], by_id[b]
    if a == b or ea.creator != eb.creator:
        return False
    return a not in _self_chain(by_id, b) and b not in _self_chain(by_id, a)


def forks_of_creator_in(by_id, sub, creator):
    mine = [i for i in sub if by_id[i].creator == creator]
    for i, a in enumerate(mine):
        for b in mine[i + 1:]:
            if is_fork_pair(by_id, a, b):
                return True
    return False


def brute_forkless_cause(by_id, x, y, powers, quorum):
    """Observer enumeration over the full subgraph closure."""
    sub = ancestor_closure(by_id, y)
    if forks_of_creator_in(by_id, sub, by_id[x].creator):
        return False
    total = 0
    for v, w in powers.items():
        if forks_of_creator_in(by_id, sub, v):
            continue
        for eid in sub:
            e = by_id[eid]
            if e.creator == v and (eid == x or x in ancestor_closure(by_id, eid)):
                total += w
                break
    return total >= quorum


def brute_weighted_median(samples):
    """Expand (time, weight) samples into unit copies and scan."""
    units = []
    for t, w in samples:
        units.extend([t] * w)
    units.sort()
    total = len(units)
    count = 0
    for t in units:
        count += 1
        if 2 * count > total:
            return t
    raise ValueError("no samples")


def brute_longest_path_layer(by_id, eid):
    """1 + length of the longest parent-path from eid, by full enumeration."""
    best = 0
    stack = [(eid, 0)]
    while stack:
        cur, depth = stack.pop()
        parents = by_id[cur].parents
        if not parents:
            best = max(best, depth)
        for p in parents:
            stack.append((p, depth + 1))
    return best + 1


def is_topological(events_in_order):
    pos = {e.id: i for i, e in enumerate(events_in_order)}
    for e in events_in_order:
        for p in e.parents:
            if p in pos and pos[p] >= pos[e.id]:
                return False
    return True


# ----------------------------------------------------------------------
# Random gossip-shaped DAG generation
# ----------------------------------------------------------------------


def gen_events(rng: random.Random, n_creators, n_events, k=3, fork_creator=None):
    """Random valid event list shaped like gossip traffic.

    Every creator starts with a leaf; afterwards each event extends its
    creator's chain and references up to ``k - 1`` recent events of other
    creators. With ``fork_creator`` set, one extra self-parent-sharing
    branch is inserted mid-run.
    """
    events = []
    top = {}
    recent = []
    clock = 0

    def emit(creator, parents):
        nonlocal clock
        clock += 1
        e = make_event(creator, parents, t=clock)
        events.append(e)
        recent.append(e)
        del recent[:-12]
        return e

    for c in range(n_creators):
        top[c] = emit(c, ())
    forked = fork_creator is None
    while len(events) < n_events:
        c = int(rng.random() * n_creators) % n_creators
        others = [e for e in recent if e.creator != c]
        rng.shuffle(others)
        picked = []
        for o in others:
            if len(picked) >= k - 1:
                break
            if all(p.creator != o.creator for p in picked):
                picked.append(o)
        if not forked and c == fork_creator and top[c].seq >= 2 and \
                rng.random() < 0.5:
            sp_id = top[c].parents[0]
            sp = next(e for e in events if e.id == sp_id)
            branch = make_event(c, (sp,), t=clock + 1)
            clock += 1
            events.append(branch)
            recent.append(branch)
            forked = True
            continue
        top[c] = emit(c, (top[c], *picked))
    return events
