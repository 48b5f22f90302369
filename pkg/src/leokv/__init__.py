"""Distributed chunk cache striped over a grid constellation.

The package splits into geometry/topology (where satellites are and how far
apart), mapping (which satellite serves which logical server, and how that
changes as the constellation rotates), blockcodec/index (hash-chained block
keys and the local prefix index), store (per-satellite LRU with eviction
gossip), protocol (the end-to-end set/get manager), simnet (deterministic
latency simulation), netnode (real datagram nodes), and cli.
"""

__version__ = "0.1.0"

from .blockcodec import (
    BlockKey,
    ChunkRecord,
    TokenBlock,
    blockify,
    chain_hash,
    chunk_join,
    chunk_split,
    prompt_keys,
)
from .geometry import (
    ConstellationSpec,
    LinkDistances,
    ground_to_sat_distance,
    inter_plane_max_distance,
    intra_plane_distance,
    link_distances,
    propagation_latency,
)
from .index import BlockMeta, RadixIndex
from .mapping import (
    HOP_AWARE,
    ROTATION_AWARE,
    ROTATION_HOP_AWARE,
    STRATEGIES,
    LosWindow,
    MigrationPlan,
    PlacementPlan,
    build_plan,
    hop_aware_plan,
    locate_server,
    migration_plan,
    rotation_aware_plan,
    rotation_hop_aware_plan,
)
from .protocol import GetResult, KvcManager, KvcManagerConfig
from .simnet import SimConfig, SimNetwork, run_sweep, worst_case_get_latency
from .store import EvictionNotice, SatStore
from .topology import HopStep, SatCoord, directional_distances, hop_path, next_hop

__all__ = [name for name in dir() if not name.startswith("_")]
