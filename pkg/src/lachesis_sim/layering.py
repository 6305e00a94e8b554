"""Graph layering and the layering-driven frame assignment.

The longest-path layering puts every source (parentless event) on layer 1
and every other event one layer above its highest parent, which is the
minimum-height layering and respects happened-before. An online variant
extends an existing layer map with a batch of new events and matches the
from-scratch result exactly.

On top of the layering sits the root graph: roots as vertices, edges from
each root to the earlier roots it builds on, at most one edge per target
creator. Layering the root graph numbers the frames, and pushing those
numbers down to non-roots (max over parents) reproduces frame assignment
without touching the election machinery.

Two membership rules are supported for the root graph, because the
reachability rule and the election's forkless-cause rule provably
disagree:

* ``reach``: a vertex joins once the current per-creator root front it can
  reach carries more than two thirds of the total power. This is the
  self-contained scan and the default.
* ``forkless``: a vertex joins once the previous-frame roots that
  forkless-cause it reach a quorum, i.e. the same predicate the election
  uses. On fork-free DAGs the resulting frame assignment coincides with
  the election's, which is what the cross-check suite verifies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .consensus import forkless_cause
from .dag import Dag
from .events import EventId
from .stake import ValidatorSet

REACH = "reach"
FORKLESS = "forkless"


class ParentUnlayered(KeyError):
    """Online layering received an event before its parents."""


def lpl_layering(dag: Dag) -> dict[EventId, int]:
    """Longest-path layering of the whole DAG. Linear in events plus edges."""
    layers: dict[EventId, int] = {}
    for eid, e in dag.events.items():  # insertion order is parents-first
        if not e.parents:
            layers[eid] = 1
        else:
            layers[eid] = max(layers[p] for p in e.parents) + 1
    return layers


def online_lpl(layers: dict[EventId, int], diff) -> dict[EventId, int]:
    """Extend a layer map with new events (topological order within the batch).

    Returns an updated copy; equals :func:`lpl_layering` recomputed over
    the union.
    """
    out = dict(layers)
    for e in diff:
        if not e.parents:
            out[e.id] = 1
            continue
        try:
            out[e.id] = max(out[p] for p in e.parents) + 1
        except KeyError as exc:
            raise ParentUnlayered(str(exc)) from None
    return out


@dataclass
class RootGraph:
    """Roots as vertices; edges point from a root to the roots it builds on."""

    vertices: set[EventId] = field(default_factory=set)
    edges: dict[EventId, tuple[EventId, ...]] = field(default_factory=dict)

    def edge_count(self) -> int:
        return sum(len(ts) for ts in self.edges.values())


def _scan_order(dag: Dag, layers: dict[EventId, int]) -> list[EventId]:
    return sorted(dag.events, key=lambda i: (layers[i], dag.events[i].lamport, i))


def build_root_graph(dag: Dag, vs: ValidatorSet, mode: str = REACH) -> RootGraph:
    """Construct the root graph by scanning the DAG in ascending layers."""
    if mode == REACH:
        return _build_reach(dag, vs)
    if mode == FORKLESS:
        return _build_forkless(dag, vs)
    raise ValueError(f"unknown root graph mode: {mode}")


def _build_reach(dag: Dag, vs: ValidatorSet) -> RootGraph:
    layers = lpl_layering(dag)
    rg = RootGraph()
    front: dict[int, EventId] = {}  # creator -> current root
    for eid in _scan_order(dag, layers):
        e = dag.events[eid]
        if not e.parents:
            rg.vertices.add(eid)
            rg.edges[eid] = ()
            front[e.creator] = eid

    order = [i for i in _scan_order(dag, layers) if dag.events[i].parents]
    i = 0
    while i < len(order):
        # One layer at a time: the root front only advances between layers.
        layer = layers[order[i]]
        joined: list[EventId] = []
        while i < len(order) and layers[order[i]] == layer:
            eid = order[i]
            i += 1
            # The front holds one root per creator (the latest), which is
            # what enforces "at most one edge per target creator".
            reached: dict[int, EventId] = {}
            for creator in sorted(front):
                r = front[creator]
                if r != eid and dag.observes(r, eid):
                    reached[creator] = r
            power = sum(vs.power(c) for c in reached)
            if 3 * power > 2 * vs.total:
                rg.vertices.add(eid)
                rg.edges[eid] = tuple(sorted(reached.values()))
                joined.append(eid)
        for eid in joined:
            front[dag.events[eid].creator] = eid
    return rg


def _build_forkless(dag: Dag, vs: ValidatorSet) -> RootGraph:
    # Election-equivalent membership, organized as a batch layer scan:
    # an event roots frame g+1 when the frame-g roots that forkless-cause
    # it reach quorum (highest g wins), else it stays at its self-parent's
    # frame. Mirrors the election's rule so the cross-check can hold.
    layers = lpl_layering(dag)
    rg = RootGraph()
    frame_of: dict[EventId, int] = {}
    roots_at: dict[int, dict[int, list[EventId]]] = {}  # frame -> creator -> roots
    max_frame = 0
    for eid in _scan_order(dag, layers):
        e = dag.events[eid]
        if not e.parents:
            frame_of[eid] = 1
            rg.vertices.add(eid)
            rg.edges[eid] = ()
            roots_at.setdefault(1, {}).setdefault(e.creator, []).append(eid)
            max_frame = max(max_frame, 1)
            continue
        sp = e.self_parent
        f0 = frame_of[sp] if sp is not None else 1
        frame_of[eid] = f0
        for g in range(max_frame, f0 - 1, -1):
            causers: dict[int, EventId] = {}
            for creator in sorted(roots_at.get(g, {})):
                for r in roots_at[g][creator]:
                    if forkless_cause(dag, r, eid, vs):
                        causers[creator] = r
                        break
            if sum(vs.power(c) for c in causers) >= vs.quorum:
                frame_of[eid] = g + 1
                rg.vertices.add(eid)
                rg.edges[eid] = tuple(sorted(causers.values()))
                roots_at.setdefault(g + 1, {}).setdefault(e.creator, []).append(eid)
                max_frame = max(max_frame, g + 1)
                break
    return rg


def root_graph_layering(dag: Dag, rg: RootGraph) -> dict[EventId, int]:
    """Longest-path layering of the root graph itself (frames for roots)."""
    order = sorted(rg.vertices, key=lambda i: (dag.events[i].lamport, i))
    layers: dict[EventId, int] = {}
    for r in order:  # edge targets are ancestors, hence already layered
        targets = rg.edges.get(r, ())
        layers[r] = max((layers[t] for t in targets), default=0) + 1
    return layers


def frame_assignment_layered(dag: Dag, rg: RootGraph) -> dict[EventId, int]:
    """Frames for every event from a layered root graph.

    Roots take their root-graph layer; every other event continues at its
    self-parent's frame (frame 1 when it has none), matching the election's
    non-root rule.
    """
    root_frames = root_graph_layering(dag, rg)
    frames: dict[EventId, int] = {}
    for eid, e in dag.events.items():  # parents-first
        if eid in rg.vertices:
            frames[eid] = root_frames[eid]
        else:
            sp = e.self_parent
            frames[eid] = frames[sp] if sp is not None else 1
    return frames
