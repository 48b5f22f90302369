"""Per-satellite chunk store: capacity-bounded LRU plus eviction gossip.

Each satellite holds an in-memory map of (namespace, block key, chunk id) to
payload bytes, evicting least-recently-used chunks when a write would exceed
capacity. Losing any chunk makes its whole block unusable, so every eviction
emits a notice that the surrounding stores apply and forward to their four
grid neighbors until the hop budget runs out.

A store is a serial actor: callers must not interleave operations on one
store from multiple threads (different stores are independent). Recency is
tracked per chunk and updated by get and set, not by existence probes.
"""

from collections import OrderedDict
from dataclasses import dataclass

from .topology import SatCoord

_ChunkKey = tuple[bytes, bytes, int]  # namespace, block key, chunk id


class StoreError(ValueError):
    pass


class OversizePayloadError(StoreError):
    """Payload larger than the whole store; it can never be admitted."""


@dataclass(frozen=True)
class EvictionNotice:
    """Tells neighboring stores to purge a block that just lost a chunk."""

    namespace: bytes
    block: bytes
    origin: SatCoord
    ttl_hops: int


@dataclass
class StoreMetrics:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    sets: int = 0

    def snapshot(self, used_bytes: int, entries: int) -> dict:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "sets": self.sets,
            "used_bytes": used_bytes,
            "entries": entries,
        }


@dataclass
class _Entry:
    payload: bytes
    total_chunks: int


class SatStore:
    """LRU chunk store bound to one satellite."""

    def __init__(
        self,
        coord: SatCoord,
        capacity_bytes: int,
        notice_ttl: int = 8,
    ) -> None:
        if capacity_bytes < 1:
            raise StoreError(f"capacity_bytes must be >= 1, got {capacity_bytes}")
        self.coord = coord
        self.capacity_bytes = capacity_bytes
        self.notice_ttl = notice_ttl
        self.used_bytes = 0
        self.metrics = StoreMetrics()
        self._entries: OrderedDict[_ChunkKey, _Entry] = OrderedDict()
        self._seen_notices: set[tuple[bytes, bytes, SatCoord]] = set()

    def __len__(self) -> int:
        return len(self._entries)

    def set(
        self,
        namespace: bytes,
        block: bytes,
        chunk_id: int,
        payload: bytes,
        total_chunks: int,
    ) -> list[EvictionNotice]:
        """Insert or refresh a chunk; returns notices for blocks evicted to fit."""
        if len(payload) > self.capacity_bytes:
            raise OversizePayloadError(
                f"payload of {len(payload)} bytes exceeds capacity "
                f"{self.capacity_bytes}"
            )
        key = (namespace, block, chunk_id)
        old = self._entries.pop(key, None)
        if old is not None:
            self.used_bytes -= len(old.payload)
        self._entries[key] = _Entry(payload, total_chunks)
        self.used_bytes += len(payload)
        self.metrics.sets += 1

        evicted_blocks: list[tuple[bytes, bytes]] = []
        while self.used_bytes > self.capacity_bytes:
            victim, entry = self._entries.popitem(last=False)
            self.used_bytes -= len(entry.payload)
            self.metrics.evictions += 1
            if (victim[0], victim[1]) not in evicted_blocks:
                evicted_blocks.append((victim[0], victim[1]))
        return [
            EvictionNotice(ns, blk, self.coord, self.notice_ttl)
            for ns, blk in evicted_blocks
        ]

    def get(self, namespace: bytes, block: bytes, chunk_id: int) -> bytes | None:
        """Payload for a chunk, refreshing its recency; None on miss."""
        entry = self._entries.get((namespace, block, chunk_id))
        if entry is None:
            self.metrics.misses += 1
            return None
        self._entries.move_to_end((namespace, block, chunk_id))
        self.metrics.hits += 1
        return entry.payload

    def get_record(
        self, namespace: bytes, block: bytes, chunk_id: int
    ) -> tuple[bytes, int] | None:
        """(payload, total_chunks) with recency refresh; None on miss."""
        entry = self._entries.get((namespace, block, chunk_id))
        if entry is None:
            self.metrics.misses += 1
            return None
        self._entries.move_to_end((namespace, block, chunk_id))
        self.metrics.hits += 1
        return entry.payload, entry.total_chunks

    def has(self, namespace: bytes, block: bytes, chunk_id: int) -> bool:
        """Existence probe; does not touch recency."""
        return (namespace, block, chunk_id) in self._entries

    def drop_chunk(self, namespace: bytes, block: bytes, chunk_id: int) -> bool:
        """Remove one chunk without gossip; used for faults and source drops."""
        entry = self._entries.pop((namespace, block, chunk_id), None)
        if entry is None:
            return False
        self.used_bytes -= len(entry.payload)
        return True

    def purge_block(self, namespace: bytes, block: bytes) -> int:
        """Drop every chunk of a block; returns how many were removed."""
        victims = [k for k in self._entries if k[0] == namespace and k[1] == block]
        for key in victims:
            entry = self._entries.pop(key)
            self.used_bytes -= len(entry.payload)
        return len(victims)

    def apply_eviction(self, notice: EvictionNotice) -> bool:
        """Purge the noticed block locally.

        Returns True when the notice was new and should be forwarded to the
        four grid neighbors (with ttl_hops - 1); False for duplicates, which
        are absorbed. Purging an absent block is a no-op but still forwards.
        """
        dedup = (notice.namespace, notice.block, notice.origin)
        if dedup in self._seen_notices:
            return False
        self._seen_notices.add(dedup)
        self.purge_block(notice.namespace, notice.block)
        return True

    def items(self) -> list[tuple[_ChunkKey, bytes, int]]:
        """All entries in recency order (least recent first)."""
        return [
            (key, entry.payload, entry.total_chunks)
            for key, entry in self._entries.items()
        ]

    def snapshot(self) -> dict:
        return self.metrics.snapshot(self.used_bytes, len(self._entries))


def migration_copy(
    stores: dict[SatCoord, "SatStore"], moves
) -> list[EvictionNotice]:
    """Phase one of a handoff: replicate every chunk to its destination.

    Both copies stay readable until migration_drop_sources runs, so reads
    issued during a handoff succeed from either side. Returns notices for
    any blocks the destinations had to evict to make room.
    """
    notices: list[EvictionNotice] = []
    for _sid, src, dst in moves:
        if src == dst or src not in stores:
            continue
        dst_store = stores[dst]
        for (ns, block, chunk_id), payload, total in stores[src].items():
            notices.extend(dst_store.set(ns, block, chunk_id, payload, total))
    return notices


def migration_drop_sources(stores: dict[SatCoord, "SatStore"], moves) -> None:
    """Phase two: clear source copies once destinations have confirmed."""
    for _sid, src, dst in moves:
        if src == dst or src not in stores:
            continue
        src_store = stores[src]
        for (ns, block, _chunk_id), _payload, _total in src_store.items():
            src_store.purge_block(ns, block)


def execute_migration(
    stores: dict[SatCoord, "SatStore"], plan
) -> list[EvictionNotice]:
    """Run a full handoff: copy everything, then drop the sources."""
    notices = migration_copy(stores, plan.moves)
    migration_drop_sources(stores, plan.moves)
    return notices
