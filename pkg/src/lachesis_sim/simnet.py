"""Deterministic discrete-event network simulator.

N virtual nodes each run the full stack (event store, election, block
ordering) and exchange events through height-vector sync plus new-event
broadcast, under a configurable latency model, peer-selection strategy
and fault repertoire (equivocation, offline windows, extra latency).

Determinism contract: a transcript is a pure function of the scenario.
Virtual time is an integer nanosecond clock driven by a priority queue
with (time, sequence-number) ordering; every random draw comes from a
per-node stream seeded from (scenario seed, node id), so adding a node
never perturbs the others' draws.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
import struct
from dataclasses import dataclass, field, asdict

from .consensus import Election
from .dag import Dag, Reject
from .events import Event, EventId, event_to_json
from .ordering import MainChain, ORDER_LAMPORT, ORDER_LAYERED, make_block
from .stake import EpochState, ValidatorSet, seal_epoch

NS = 1_000_000_000

# Peer-selection strategies.
RANDOM = "random"
LEAST_USED = "least_used"
MOST_USED = "most_used"
FAIR = "fair"
STAKE_BASED = "stake_based"
LOWEST = "lowest"
HIGHEST = "highest"
BALANCED = "balanced"

STRATEGIES = (RANDOM, LEAST_USED, MOST_USED, FAIR, STAKE_BASED,
              LOWEST, HIGHEST, BALANCED)

# Fault kinds.
FORK = "fork"
OFFLINE = "offline"
EXTRA_LATENCY = "extra_latency"

# Message kinds (queue dispatch).
_TICK = "tick"
_SYNC_REQ = "sync_req"
_SYNC_RESP = "sync_resp"
_FULL_REQ = "full_req"
_EVENT = "event"
_FORK_AT = "fork_at"
_TX = "tx"


class InvalidScenario(ValueError):
    pass


class UnknownNode(ValueError):
    pass


class NoPeers(ValueError):
    pass


@dataclass
class Scenario:
    """Complete run configuration. Times are simulated nanoseconds."""

    seed: int = 1
    stakes: list[int] = field(default_factory=lambda: [1, 1, 1, 1])
    k: int = 2
    emission_interval: int = 200_000_000
    duration: int = 10 * NS
    latency_base: int = 10_000_000
    latency_jitter: int = 20_000_000
    peer_strategy: str = RANDOM
    tx_rate: float = 10.0        # transactions per simulated second
    tx_size: int = 100
    faults: list[dict] = field(default_factory=list)
    epoch_len_frames: int = 100
    order_backend: str = ORDER_LAMPORT
    name: str = "run"

    @property
    def n_nodes(self) -> int:
        return len(self.stakes)

    def validate(self) -> None:
        if self.n_nodes < 1:
            raise InvalidScenario("nodes: need at least one node")
        if self.k < 1:
            raise InvalidScenario("k: need at least one parent slot")
        if self.duration < 0:
            raise InvalidScenario("duration: must be non-negative")
        if self.emission_interval < 1:
            raise InvalidScenario("emission_interval: must be positive")
        if any(s <= 0 for s in self.stakes):
            raise InvalidScenario("stakes: must all be positive")
        if self.peer_strategy not in STRATEGIES:
            raise InvalidScenario(f"peer_strategy: unknown '{self.peer_strategy}'")
        if self.epoch_len_frames < 1:
            raise InvalidScenario("epoch_len_frames: must be positive")
        for f in self.faults:
            kind = f.get("kind")
            if kind not in (FORK, OFFLINE, EXTRA_LATENCY):
                raise InvalidScenario(f"faults: unknown kind '{kind}'")
            targets = f.get("nodes", [f.get("node")])
            for t in targets:
                if not isinstance(t, int) or not 0 <= t < self.n_nodes:
                    raise UnknownNode(f"faults: no such node {t!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidScenario(f"scenario: unknown fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Metrics:
    blocks_finalized: int = 0
    transactions_executed: int = 0
    events_emitted: int = 0
    avg_ttf: float = 0.0   # seconds
    avg_tps: float = 0.0

    CSV_FIELDS = ("name", "seed", "duration_s", "blocks_finalized",
                  "transactions_executed", "events_emitted", "avg_ttf", "avg_tps")

    def csv_row(self, scenario: Scenario) -> list:
        return [scenario.name, scenario.seed, scenario.duration / NS,
                self.blocks_finalized, self.transactions_executed,
                self.events_emitted, f"{self.avg_ttf:.6f}", f"{self.avg_tps:.3f}"]


def select_peer(node_id: int, candidates, freq: dict[int, int],
                powers: dict[int, int], strategy: str, rng: random.Random,
                alpha=None) -> int:
    """Pick the next sync peer. Never returns ``node_id`` itself.

    ``alpha`` scores a peer from (stake, use count) for the lowest /
    highest / balanced strategies; the default is ``w / (1 + f)``.
    """
    peers = sorted(c for c in candidates if c != node_id)
    if not peers:
        raise NoPeers(f"node {node_id} has nobody to sync with")
    if alpha is None:
        alpha = lambda w, f: w / (1 + f)

    if strategy == RANDOM:
        return peers[int(rng.random() * len(peers)) % len(peers)]
    if strategy == LEAST_USED:
        return min(peers, key=lambda p: (freq.get(p, 0), p))
    if strategy == MOST_USED:
        return min(peers, key=lambda p: (-freq.get(p, 0), p))
    if strategy == FAIR:
        low = min(freq.get(p, 0) for p in peers)
        pool = [p for p in peers if freq.get(p, 0) == low]
        return pool[int(rng.random() * len(pool)) % len(pool)]
    if strategy == STAKE_BASED:
        return _weighted_pick(peers, [powers.get(p, 0) for p in peers], rng)
    scores = [alpha(powers.get(p, 0), freq.get(p, 0)) for p in peers]
    if strategy == LOWEST:
        return min(zip(scores, peers))[1]
    if strategy == HIGHEST:
        return min(zip([-s for s in scores], peers))[1]
    if strategy == BALANCED:
        return _weighted_pick(peers, scores, rng)
    raise InvalidScenario(f"peer_strategy: unknown '{strategy}'")


def _weighted_pick(items, weights, rng: random.Random):
    total = sum(weights)
    if total <= 0:
        return items[int(rng.random() * len(items)) % len(items)]
    r = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if r < acc:
            return item
    return items[-1]


class NodeSim:
    """One virtual node: full consensus stack plus network-facing state."""

    def __init__(self, node_id: int, scenario: Scenario, vs: ValidatorSet):
        self.id = node_id
        self.scenario = scenario
        self.rng = random.Random(f"{scenario.seed}/{node_id}")
        self.dag = Dag(epoch=1, k=scenario.k)
        self.epoch_state = EpochState(validators=vs)
        self.election = Election(self.dag, vs)
        self.chain = MainChain()
        self.freq: dict[int, int] = {}
        self.layers: dict[EventId, int] = {}
        self.pending_txs: list[bytes] = []
        self.waiting: dict[EventId, list[Event]] = {}
        self.archives: dict[int, tuple[Dag, Election]] = {}
        self.epoch_records: list = []
        self.offline_windows: list[tuple[int, int]] = []
        self.reject_counts: dict[str, int] = {}
        self.is_attacker = False

    @property
    def vs(self) -> ValidatorSet:
        return self.epoch_state.validators

    def is_offline(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.offline_windows)

    def dag_for_epoch(self, epoch: int) -> Dag | None:
        if epoch == self.dag.epoch:
            return self.dag
        archived = self.archives.get(epoch)
        return archived[0] if archived else None

    def elections_by_epoch(self) -> dict[int, Election]:
        out = {epoch: el for epoch, (_, el) in self.archives.items()}
        out[self.dag.epoch] = self.election
        return out


@dataclass
class RunResult:
    scenario: Scenario
    metrics: Metrics
    nodes: list[NodeSim]
    block_log: list[tuple[int, int, int]]          # (time, node, block index)
    fork_events: list[tuple[int, EventId, EventId]]  # (node, branch a, branch b)
    event_log: list[str]                           # events.jsonl lines
    violations: list[str]
    chain_lines: dict[int, list[str]]              # node -> chain-transcript lines

    @property
    def attacker_ids(self) -> set[int]:
        return {n.id for n in self.nodes if n.is_attacker}

    def honest_nodes(self) -> list[NodeSim]:
        return [n for n in self.nodes if not n.is_attacker]


class Simulation:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        vs = ValidatorSet.from_powers({i: s for i, s in enumerate(scenario.stakes)})
        self.base_vs = vs
        self.nodes = [NodeSim(i, scenario, vs) for i in range(scenario.n_nodes)]
        self.now = 0
        self.queue: list = []
        self._qseq = 0
        self.events_emitted = 0
        self.ttf_samples: list[int] = []
        self.block_log: list[tuple[int, int, int]] = []
        self.fork_events: list[tuple[int, EventId, EventId]] = []
        self.event_log: list[str] = []
        self.extra_latency: list[tuple[set[int], int, int]] = []
        self._wire_faults()

    # ------------------------------------------------------------------
    # Setup
    # ------------------------------------------------------------------

    def _wire_faults(self) -> None:
        for f in self.sc.faults:
            kind = f["kind"]
            if kind == OFFLINE:
                node = self.nodes[f["node"]]
                node.offline_windows.append((int(f["from"]), int(f["to"])))
            elif kind == FORK:
                self.nodes[f["node"]].is_attacker = True
                self._schedule(int(f["at"]), _FORK_AT, f["node"])
            elif kind == EXTRA_LATENCY:
                members = set(f.get("nodes", [f.get("node")]))
                self.extra_latency.append((members, int(f["lo"]), int(f["hi"])))

    def _schedule(self, t: int, kind: str, payload) -> None:
        self._qseq += 1
        heapq.heappush(self.queue, (t, self._qseq, kind, payload))

    def _schedule_txs(self) -> None:
        if self.sc.tx_rate <= 0:
            return
        n = self.sc.n_nodes
        period = int(NS / self.sc.tx_rate)
        i = 0
        t = period
        while t < self.sc.duration:
            payload = struct.pack(">Q", i) + hashlib.sha256(
                f"{self.sc.seed}:{i}".encode()).digest()
            payload = (payload * (self.sc.tx_size // len(payload) + 1))[:self.sc.tx_size]
            self._schedule(t, _TX, (i % n, payload))
            i += 1
            t += period

    # ------------------------------------------------------------------
    # Latency model
    # ------------------------------------------------------------------

    def _latency(self, src: int, dst: int) -> int:
        rng = self.nodes[src].rng
        lat = self.sc.latency_base + int(rng.random() * self.sc.latency_jitter)
        for members, lo, hi in self.extra_latency:
            if src in members or dst in members:
                lat += lo + int(rng.random() * (hi - lo))
        return lat

    # ------------------------------------------------------------------
    # Event creation and insertion
    # ------------------------------------------------------------------

    def _insert_event(self, node: NodeSim, e: Event) -> bool:
        node.dag.clock_ns = self.now
        res = node.dag.insert(e)
        if res.accepted:
            node.election.observe(e)
            if self.sc.order_backend == ORDER_LAYERED:
                node.layers[e.id] = 1 + max(
                    (node.layers[p] for p in e.parents), default=0)
            waiters = node.waiting.pop(e.id, None)
            if waiters:
                for w in waiters:
                    self._insert_event(node, w)
            return True
        if res.reason == Reject.MISSING_PARENT:
            for p in e.parents:
                if p not in node.dag:
                    bucket = node.waiting.setdefault(p, [])
                    if all(w.id != e.id for w in bucket):
                        bucket.append(e)
                    break
        elif res.reason not in (Reject.DUPLICATE, Reject.WRONG_EPOCH):
            node.reject_counts[res.reason] = node.reject_counts.get(res.reason, 0) + 1
        return False

    def _insert_batch(self, node: NodeSim, batch) -> bool:
        missing = False
        for e in batch:
            if e.epoch != node.dag.epoch:
                continue
            if not self._insert_event(node, e):
                if any(p not in node.dag for p in e.parents):
                    missing = True
        return missing

    def _create_event(self, node: NodeSim, txs=()) -> Event | None:
        dag = node.dag
        sp_id = dag.latest.get(node.id)
        if sp_id is None:
            parents: list[EventId] = []
            seq = 1
        else:
            sp = dag.events[sp_id]
            parents = [sp_id]
            seq = sp.seq + 1
            others = [h for h in dag.heads
                      if dag.events[h].creator != node.id and h not in parents]
            others.sort(key=lambda i: (-dag.events[i].lamport, i))
            parents.extend(others[:dag.k - 1])
        lamport = max((dag.events[p].lamport for p in parents), default=0) + 1
        ct = self.now
        if sp_id is not None:
            ct = max(ct, dag.events[sp_id].creation_time)
        e = Event(
            epoch=dag.epoch, seq=seq, creator=node.id, parents=tuple(parents),
            lamport=lamport, creation_time=ct, transactions=tuple(txs),
        )
        if not self._insert_event(node, e):
            return None
        frame, root = node.election.frame_of[e.id], node.election.is_root[e.id]
        e.frame = frame
        self.events_emitted += 1
        self.event_log.append(event_to_json(e, root=root))
        return e

    def _broadcast(self, node: NodeSim, e: Event, targets=None) -> None:
        if targets is None:
            targets = [m.id for m in self.nodes if m.id != node.id]
        for peer in sorted(targets):
            self._schedule(self.now + self._latency(node.id, peer), _EVENT, (peer, e))

    def _emit(self, node: NodeSim) -> None:
        txs = tuple(node.pending_txs)
        node.pending_txs.clear()
        e = self._create_event(node, txs)
        if e is not None:
            self._broadcast(node, e)
            self._pipeline(node)

    # ------------------------------------------------------------------
    # Consensus pipeline
    # ------------------------------------------------------------------

    def _pipeline(self, node: NodeSim) -> None:
        settled = node.election.advance()
        for _frame, aid in settled:
            node.epoch_state.frames_finalized += 1
            if aid is not None:
                block = make_block(
                    node.chain, node.dag, aid, node.vs,
                    backend=self.sc.order_backend, layers=node.layers)
                node.epoch_state.last_block_digest = block.digest
                self.block_log.append((self.now, node.id, block.index))
                for eid in block.events:
                    self.ttf_samples.append(
                        self.now - node.dag.events[eid].creation_time)
        while node.epoch_state.frames_finalized >= self.sc.epoch_len_frames:
            self._seal(node)

    def _seal(self, node: NodeSim) -> None:
        record = seal_epoch(node.epoch_state, self.sc.epoch_len_frames)
        node.epoch_records.append(record)
        node.archives[node.dag.epoch] = (node.dag, node.election)
        node.dag = Dag(epoch=record.number, k=self.sc.k, clock_ns=self.now)
        node.election = Election(node.dag, node.vs)
        node.layers = {}
        node.waiting.clear()

    # ------------------------------------------------------------------
    # Message handlers
    # ------------------------------------------------------------------

    def _on_tick(self, node_id: int) -> None:
        node = self.nodes[node_id]
        self._schedule(self.now + self.sc.emission_interval, _TICK, node_id)
        if node.is_offline(self.now) or len(self.nodes) < 2:
            return
        peer = select_peer(
            node.id, [m.id for m in self.nodes], node.freq,
            self.base_vs.powers, self.sc.peer_strategy, node.rng)
        node.freq[peer] = node.freq.get(peer, 0) + 1
        payload = (node.id, peer, node.dag.heights(), node.dag.epoch)
        self._schedule(self.now + self._latency(node.id, peer), _SYNC_REQ, payload)

    def _on_sync_req(self, payload) -> None:
        requester, responder_id, heights, epoch = payload
        responder = self.nodes[responder_id]
        if responder.is_offline(self.now):
            return
        dag = responder.dag_for_epoch(epoch)
        batch = dag.diff_known(heights) if dag is not None else []
        self._schedule(self.now + self._latency(responder_id, requester),
                       _SYNC_RESP, (responder_id, requester, batch))

    def _on_sync_resp(self, payload) -> None:
        responder_id, requester, batch = payload
        node = self.nodes[requester]
        if node.is_offline(self.now):
            return
        missing = self._insert_batch(node, batch)
        self._pipeline(node)
        if missing:
            # Height-indexed diff can skip fork branches; ask for an
            # explicit id-set diff instead of crashing (re-sync semantics).
            known = set(node.dag.events)
            self._schedule(self.now + self._latency(requester, responder_id),
                           _FULL_REQ, (requester, responder_id, known, node.dag.epoch))
        self._emit(node)

    def _on_full_req(self, payload) -> None:
        requester, responder_id, known, epoch = payload
        responder = self.nodes[responder_id]
        if responder.is_offline(self.now):
            return
        dag = responder.dag_for_epoch(epoch)
        if dag is None:
            return
        batch = dag.diff_missing(known)
        self._schedule(self.now + self._latency(responder_id, requester),
                       _SYNC_RESP, (responder_id, requester, batch))

    def _on_event(self, payload) -> None:
        dst, e = payload
        node = self.nodes[dst]
        if node.is_offline(self.now):
            return
        self._insert_event(node, e)
        self._pipeline(node)

    def _on_tx(self, payload) -> None:
        dst, tx = payload
        self.nodes[dst].pending_txs.append(tx)

    def _on_fork_at(self, node_id: int) -> None:
        """Equivocate: two events off one self-parent, each shown to half
        the network. Branches carry no other-parents, which keeps their
        subgraphs equal to the self-parent's and so keeps either branch
        from ever qualifying as a root."""
        node = self.nodes[node_id]
        sp_id = node.dag.latest.get(node.id)
        if sp_id is None:
            return
        sp = node.dag.events[sp_id]
        branches = []
        for salt in (0, 1):
            e = Event(
                epoch=node.dag.epoch, seq=sp.seq + 1, creator=node.id,
                parents=(sp_id,), lamport=sp.lamport + 1,
                creation_time=max(self.now, sp.creation_time) + salt,
            )
            self._insert_event(node, e)
            e.frame = node.election.frame_of.get(e.id, 0)
            self.event_log.append(event_to_json(e, root=False))
            self.events_emitted += 1
            branches.append(e)
        self.fork_events.append((node_id, branches[0].id, branches[1].id))
        others = sorted(m.id for m in self.nodes if m.id != node_id)
        half = len(others) // 2
        self._broadcast(node, branches[0], targets=others[:half])
        self._broadcast(node, branches[1], targets=others[half:])

    # ------------------------------------------------------------------
    # Main loop
    # ------------------------------------------------------------------

    def run(self) -> RunResult:
        handlers = {
            _TICK: self._on_tick,
            _SYNC_REQ: self._on_sync_req,
            _SYNC_RESP: self._on_sync_resp,
            _FULL_REQ: self._on_full_req,
            _EVENT: self._on_event,
            _TX: self._on_tx,
            _FORK_AT: self._on_fork_at,
        }
        if self.sc.duration > 0:
            for node in self.nodes:
                self._schedule(0, _TICK, node.id)
            self._schedule_txs()
            # Leaf events seed the first frame.
            for node in self.nodes:
                e = self._create_event(node)
                if e is not None and not node.is_offline(0):
                    self._broadcast(node, e)
        while self.queue:
            t, _seq, kind, payload = heapq.heappop(self.queue)
            if t >= self.sc.duration:
                break
            self.now = t
            handlers[kind](payload)
        return self._finish()

    # ------------------------------------------------------------------
    # Wrap-up
    # ------------------------------------------------------------------

    def _finish(self) -> RunResult:
        metrics = Metrics(events_emitted=self.events_emitted)
        chains = {n.id: n.chain for n in self.nodes}
        ref = max(chains.values(), key=lambda c: len(c.blocks), default=None)
        if ref is not None:
            metrics.blocks_finalized = len(ref.blocks)
            metrics.transactions_executed = sum(
                len(b.transactions) for b in ref.blocks)
        if self.ttf_samples:
            metrics.avg_ttf = (sum(self.ttf_samples) / len(self.ttf_samples)) / NS
        if self.sc.duration > 0:
            metrics.avg_tps = metrics.transactions_executed / (self.sc.duration / NS)

        chain_lines = {n.id: chain_transcript(self.sc, n.chain) for n in self.nodes}
        violations = self._check_consistency(chain_lines)
        return RunResult(
            scenario=self.sc, metrics=metrics, nodes=self.nodes,
            block_log=self.block_log, fork_events=self.fork_events,
            event_log=self.event_log, violations=violations,
            chain_lines=chain_lines)

    def _check_consistency(self, chain_lines: dict[int, list[str]]) -> list[str]:
        out: list[str] = []
        honest = [n for n in self.nodes if not n.is_attacker]
        attacker_ids = {n.id for n in self.nodes if n.is_attacker}
        for i, a in enumerate(honest):
            for b in honest[i + 1:]:
                la, lb = chain_lines[a.id], chain_lines[b.id]
                for idx, (x, y) in enumerate(zip(la, lb)):
                    if x != y:
                        out.append(f"chain divergence nodes {a.id}/{b.id} at line {idx}")
                        break
                ea, eb = a.elections_by_epoch(), b.elections_by_epoch()
                for epoch in sorted(set(ea) & set(eb)):
                    da, db = ea[epoch].decisions, eb[epoch].decisions
                    for key in sorted(set(da) & set(db)):
                        if (da[key].candidate, da[key].root) != \
                                (db[key].candidate, db[key].root):
                            out.append(
                                f"decision divergence nodes {a.id}/{b.id} "
                                f"epoch {epoch} slot {key}")
        for n in honest:
            for d in [n.dag] + [dag for dag, _ in n.archives.values()]:
                bad = set(d.cheaters) - attacker_ids
                if bad:
                    out.append(f"honest node(s) {sorted(bad)} flagged as cheaters "
                               f"in node {n.id}'s store")
        return out


def chain_transcript(scenario: Scenario, chain: MainChain) -> list[str]:
    """Chain transcript lines: a config header then one block per line."""
    header = json.dumps(
        {"type": "header", "scenario": scenario.to_dict()},
        sort_keys=True, separators=(",", ":"))
    lines = [header]
    for b in chain.blocks:
        lines.append(json.dumps({
            "index": b.index,
            "atropos": b.atropos.hex(),
            "events": [e.hex() for e in b.events],
            "consensus_time": b.consensus_time,
            "transactions": [t.hex() for t in b.transactions],
            "parent": b.parent.hex(),
            "digest": b.digest.hex(),
        }, sort_keys=True, separators=(",", ":")))
    return lines


def run(scenario: Scenario, out_dir=None) -> RunResult:
    """Execute a scenario; optionally write the transcript bundle."""
    result = Simulation(scenario).run()
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: RunResult, out_dir) -> None:
    import csv
    import os

    from . import viz

    os.makedirs(out_dir, exist_ok=True)

    def _write(name: str, lines) -> None:
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")

    for node_id, lines in sorted(result.chain_lines.items()):
        _write(f"chain-{node_id}.jsonl", lines)
    _write("events.jsonl", result.event_log)

    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8",
              newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Metrics.CSV_FIELDS)
        w.writerow(result.metrics.csv_row(result.scenario))

    ref = max(result.nodes, key=lambda n: len(n.chain.blocks))
    atropos_ids = {b.atropos.hex() for b in ref.chain.blocks}
    _write("dag.dot", viz.dot_from_log(result.event_log, atropos_ids).splitlines())
