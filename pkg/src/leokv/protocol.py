"""Cache manager: chained hashing, longest-match search, striped chunk I/O.

Writing a prompt's cache: tokens are cut into blocks, each block gets a
chained key, the deepest already-cached block is found, and every deeper
block's payload is split into chunks striped over the logical servers
(chunk i lands on server i mod n). Reading reverses it: find the deepest
cached block, compute where every chunk currently sits from the placement
and the rotation clock, fetch them all in parallel, and reassemble.

Longest-match search runs either against the local prefix index (fast path)
or purely remotely: a binary search over block positions probing existence
of (key, chunk 0), sound because a key match at depth d implies all
shallower blocks are cached too. A missing chunk inside a matched block
demotes that block and everything deeper to a miss: the intact shorter
prefix is returned, the damaged suffix is lazily evicted, and the value can
always be recomputed upstream.

Manager operations are serialized by an internal lock; chunk-level
parallelism is the backend's job (the simulated network models it, the
datagram client fans out over threads).
"""

import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .blockcodec import (
    DEFAULT_BLOCK_TOKENS,
    DEFAULT_CHUNK_BYTES,
    KEY_BYTES,
    BlockKey,
    ChunkRecord,
    chunk_join,
    chunk_split,
    prompt_keys,
)
from .geometry import ConstellationSpec
from .index import BlockMeta, RadixIndex
from .mapping import (
    ROTATION_HOP_AWARE,
    LosWindow,
    MigrationPlan,
    PlacementPlan,
    advance_plan,
    build_plan,
    locate_server,
)
from .simnet import ChunkAddress
from .topology import SatCoord


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class KvcManagerConfig:
    """Knobs shared by every operation of one manager.

    Entries are namespaced by model_fingerprint: any change to the model or
    tokenizer must change the fingerprint, which makes the old cache
    unreachable rather than wrong.
    """

    n_servers: int
    strategy: str = ROTATION_HOP_AWARE
    block_size_tokens: int = DEFAULT_BLOCK_TOKENS
    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    use_radix_index: bool = True
    model_fingerprint: bytes = bytes(KEY_BYTES)

    def __post_init__(self) -> None:
        if self.n_servers < 1:
            raise ProtocolError(f"n_servers must be >= 1, got {self.n_servers}")
        if len(self.model_fingerprint) != KEY_BYTES:
            raise ProtocolError(
                f"model_fingerprint must be {KEY_BYTES} bytes, "
                f"got {len(self.model_fingerprint)}"
            )


@dataclass
class GetResult:
    """Matched prefix of a get: one payload per intact block, in order."""

    matched_blocks: int
    payloads: list[bytes] = field(default_factory=list)
    fetch_latency_s: float = 0.0


class ChunkBackend(Protocol):
    """Transport the manager drives; simnet and netnode both satisfy it."""

    def store_chunks(
        self, puts: Sequence[tuple[ChunkAddress, ChunkRecord]]
    ) -> None: ...

    def fetch_chunks(
        self, gets: Sequence[ChunkAddress]
    ) -> tuple[list[ChunkRecord | None], float]: ...

    def probe_chunk(self, addr: ChunkAddress) -> bool: ...

    def evict_block(
        self, coord: SatCoord, namespace: bytes, block: bytes
    ) -> None: ...

    def migrate(self, plan: MigrationPlan) -> None: ...


class KvcManager:
    """End-to-end cache front end for one model fingerprint."""

    def __init__(
        self,
        config: KvcManagerConfig,
        backend: ChunkBackend,
        spec: ConstellationSpec,
        center: SatCoord,
        window: LosWindow | None = None,
    ) -> None:
        self.config = config
        self.backend = backend
        self.spec = spec
        self.plan: PlacementPlan = build_plan(
            config.strategy, center, config.n_servers, spec, epoch=0, window=window
        )
        self._plan0 = self.plan
        self.epoch = 0
        self.index = RadixIndex() if config.use_radix_index else None
        self._lock = threading.RLock()

    # -- placement ---------------------------------------------------------

    def server_coord(self, server_id: int) -> SatCoord:
        """Current satellite of a logical server, after all handoffs so far."""
        return locate_server(self._plan0, server_id, self.epoch, self.spec)

    def chunk_coord(self, chunk_id: int) -> SatCoord:
        return self.server_coord(chunk_id % self.config.n_servers)

    def advance_rotation(self, steps: int = 1) -> None:
        """Run handoff migrations and advance the epoch clock."""
        with self._lock:
            for _ in range(steps):
                mig, self.plan = advance_plan(self.plan, self.spec)
                self.backend.migrate(mig)
                self.epoch += 1

    # -- lookup ------------------------------------------------------------

    def lookup_longest_match(self, keys: Sequence[BlockKey]) -> int:
        """Depth of the deepest cached block along the chain (0 = nothing)."""
        if not keys:
            return 0
        if self.index is not None:
            found = self.index.longest_prefix(keys)
            return found[0] if found else 0
        return self._remote_longest_match(keys)

    def _remote_longest_match(self, keys: Sequence[BlockKey]) -> int:
        # Presence is monotone in depth, so binary-search block positions,
        # one existence probe of (key, chunk 0) per step.
        ns = self.config.model_fingerprint
        chunk0_coord = self.chunk_coord(0)
        lo, hi = 0, len(keys)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.backend.probe_chunk(
                ChunkAddress(chunk0_coord, ns, keys[mid - 1], 0)
            ):
                lo = mid
            else:
                hi = mid - 1
        return lo

    # -- write path ----------------------------------------------------------

    def add_blocks(self, tokens: Sequence[int], payloads: Sequence[bytes]) -> int:
        """Cache every block not already present; returns how many were stored."""
        with self._lock:
            keys = prompt_keys(tokens, self.config.block_size_tokens)
            if len(payloads) != len(keys):
                raise ProtocolError(
                    f"{len(keys)} blocks but {len(payloads)} payloads"
                )
            depth = self.lookup_longest_match(keys)
            ns = self.config.model_fingerprint
            for i in range(depth, len(keys)):
                records = chunk_split(keys[i], payloads[i], self.config.chunk_bytes)
                puts = [
                    (ChunkAddress(self.chunk_coord(r.chunk_id), ns, keys[i], r.chunk_id), r)
                    for r in records
                ]
                try:
                    self.backend.store_chunks(puts)
                except Exception:
                    # Never leave a half-written block behind.
                    self.backend.evict_block(self.chunk_coord(0), ns, keys[i])
                    raise
                if self.index is not None:
                    meta = BlockMeta(
                        total_chunks=len(records),
                        set_epoch=self.epoch,
                        n_servers_at_set=self.config.n_servers,
                        payload_bytes=len(payloads[i]),
                    )
                    self.index.insert(keys[: i + 1], [None] * i + [meta])
            return len(keys) - depth

    # -- read path -----------------------------------------------------------

    def get_cache(self, tokens: Sequence[int]) -> GetResult:
        """Fetch the deepest intact cached prefix for a prompt."""
        with self._lock:
            keys = prompt_keys(tokens, self.config.block_size_tokens)
            if not keys:
                return GetResult(0)
            depth = self.lookup_longest_match(keys)
            if depth == 0:
                return GetResult(0)

            ns = self.config.model_fingerprint
            latency = 0.0
            totals: list[int | None]
            prefetched: dict[tuple[int, int], ChunkRecord] = {}

            if self.index is not None:
                totals = [
                    meta.total_chunks
                    if (meta := self.index.meta_at(keys, i + 1)) is not None
                    else None
                    for i in range(depth)
                ]
            else:
                # Learn chunk counts from each block's first chunk.
                gets = [
                    ChunkAddress(self.chunk_coord(0), ns, keys[i], 0)
                    for i in range(depth)
                ]
                found, first_latency = self.backend.fetch_chunks(gets)
                latency += first_latency
                totals = []
                for i, record in enumerate(found):
                    totals.append(record.total_chunks if record else None)
                    if record:
                        prefetched[(i, 0)] = record

            # Truncate at the first block whose metadata is gone.
            known = depth
            for i, total in enumerate(totals):
                if total is None:
                    known = i
                    break

            gets = []
            for i in range(known):
                for chunk_id in range(totals[i]):
                    if (i, chunk_id) not in prefetched:
                        gets.append(
                            ChunkAddress(
                                self.chunk_coord(chunk_id), ns, keys[i], chunk_id
                            )
                        )
            found, fetch_latency = self.backend.fetch_chunks(gets)
            latency += fetch_latency

            position = {keys[i]: i for i in range(known)}
            by_block: dict[int, list[ChunkRecord]] = {
                i: [] for i in range(known)
            }
            for (i, _cid), record in prefetched.items():
                by_block[i].append(record)
            for addr, record in zip(gets, found):
                if record is not None:
                    by_block[position[addr.block]].append(record)

            payloads: list[bytes] = []
            intact = known
            for i in range(known):
                records = by_block[i]
                if len(records) != totals[i]:
                    intact = i
                    break
                payloads.append(chunk_join(records))

            if intact < depth:
                self._lazy_evict(keys, intact, depth)
            return GetResult(intact, payloads, latency)

    def _lazy_evict(self, keys: Sequence[BlockKey], intact: int, depth: int) -> None:
        """Purge a damaged block and its successors everywhere we know of."""
        ns = self.config.model_fingerprint
        for i in range(intact, depth):
            self.backend.evict_block(self.chunk_coord(0), ns, keys[i])
        if self.index is not None:
            self.index.evict(keys[: intact + 1])

    def evict_block_at(self, tokens: Sequence[int], block_index: int) -> None:
        """Client-initiated eviction of one block (and so its successors)."""
        with self._lock:
            keys = prompt_keys(tokens, self.config.block_size_tokens)
            if not 0 <= block_index < len(keys):
                raise ProtocolError(
                    f"block index {block_index} out of range for {len(keys)} blocks"
                )
            self._lazy_evict(keys, block_index, len(keys))
