"""Stake-weighted aBFT DAG consensus in a deterministic network simulator.

Layers, bottom up: event blocks and the per-node DAG store, the stake
module, the root/candidate/final-root election, block ordering, graph
layering, and the discrete-event simulator that drives N virtual nodes
through the whole stack with fault injection.
"""

from .events import Event, EventId
from .dag import Dag, ForkPair, InsertResult, Reject, UnknownEvent
from .stake import (Account, EpochRecord, EpochState, ValidatorSet,
                    build_validator_set, seal_epoch, validate_delegation,
                    validating_power)
from .consensus import Election, forkless_cause
from .ordering import (Block, MainChain, make_block, median_time,
                       topo_sort_layered, validation_score)
from .layering import (RootGraph, build_root_graph, frame_assignment_layered,
                       lpl_layering, online_lpl)
from .simnet import Metrics, RunResult, Scenario, Simulation, run, select_peer

__version__ = "0.1.0"

__all__ = [
    "Event", "EventId", "Dag", "ForkPair", "InsertResult", "Reject",
    "UnknownEvent", "Account", "EpochRecord", "EpochState", "ValidatorSet",
    "build_validator_set", "seal_epoch", "validate_delegation",
    "validating_power", "Election", "forkless_cause", "Block", "MainChain",
    "make_block", "median_time", "topo_sort_layered", "validation_score",
    "RootGraph", "build_root_graph", "frame_assignment_layered",
    "lpl_layering", "online_lpl", "Metrics", "RunResult", "Scenario",
    "Simulation", "run", "select_peer",
]
