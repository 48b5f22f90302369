"""Local prefix index over block-key chains.

Keeps the keys (never the payloads) of every cached block in a radix tree so
the deepest cached prefix of a prompt can be found without touching the
network. Because a block key already commits to its whole prefix, tree edges
are whole 32-byte keys and boundaries fall only on key multiples.

Writes are serialized with an internal lock; lookups take no lock and are
safe to run concurrently with each other (single-writer, multi-reader
discipline).
"""

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .blockcodec import KEY_BYTES, BlockKey

_SNAPSHOT_MAGIC = b"LKIX"
_SNAPSHOT_VERSION = 1


class BlockIndexError(ValueError):
    """Malformed index operation or snapshot."""


@dataclass(frozen=True)
class BlockMeta:
    """Per-block bookkeeping needed to locate chunks later without probing."""

    total_chunks: int
    set_epoch: int
    n_servers_at_set: int
    payload_bytes: int

    def __post_init__(self) -> None:
        if self.total_chunks < 1:
            raise BlockIndexError(f"total_chunks must be >= 1, got {self.total_chunks}")
        if self.payload_bytes < 1:
            raise BlockIndexError(f"payload_bytes must be >= 1, got {self.payload_bytes}")


class _Node:
    __slots__ = ("children", "meta")

    def __init__(self) -> None:
        self.children: dict[BlockKey, _Node] = {}
        self.meta: BlockMeta | None = None


class RadixIndex:
    """Prefix tree over block-key chains with metadata at each boundary.

    The tree is prefix-closed by construction: inserting a chain records a
    boundary (with meta) at every depth, and evicting a boundary removes all
    deeper ones, so no child boundary ever outlives its parent.
    """

    def __init__(self) -> None:
        self._root = _Node()
        self._lock = threading.Lock()

    def insert(
        self, keys: Sequence[BlockKey], metas: Sequence[BlockMeta | None]
    ) -> None:
        """Record a cached chain; metas[i] describes the block at depth i+1.

        A None meta leaves that depth's existing boundary untouched (used
        when extending an already-indexed prefix).
        """
        if len(keys) != len(metas):
            raise BlockIndexError(
                f"got {len(keys)} keys but {len(metas)} metadata entries"
            )
        self._check_keys(keys)
        with self._lock:
            node = self._root
            for key, meta in zip(keys, metas):
                node = node.children.setdefault(key, _Node())
                if meta is not None:
                    node.meta = meta

    def longest_prefix(
        self, keys: Sequence[BlockKey]
    ) -> tuple[int, BlockMeta] | None:
        """Deepest indexed boundary along the given chain.

        Returns (match_depth, meta at that depth), or None when not even the
        first block is indexed.
        """
        if not keys:
            raise BlockIndexError("longest_prefix requires a non-empty key chain")
        self._check_keys(keys)
        node = self._root
        best: tuple[int, BlockMeta] | None = None
        for depth, key in enumerate(keys, start=1):
            child = node.children.get(key)
            if child is None:
                break
            if child.meta is not None:
                best = (depth, child.meta)
            node = child
        return best

    def meta_at(self, keys: Sequence[BlockKey], depth: int) -> BlockMeta | None:
        """Metadata of the boundary at exactly `depth` blocks, if indexed."""
        node = self._root
        for key in keys[:depth]:
            node = node.children.get(key)
            if node is None:
                return None
        return node.meta

    def evict(self, keys: Sequence[BlockKey]) -> int:
        """Drop the boundary at the end of `keys` and every deeper extension.

        Evicting a block invalidates all of its successors: their payloads
        are unreachable for generation without the evicted prefix. Returns
        the number of boundaries removed; 0 when the chain was not indexed.
        """
        if not keys:
            raise BlockIndexError("evict requires a non-empty key chain")
        self._check_keys(keys)
        with self._lock:
            parent = self._root
            for key in keys[:-1]:
                nxt = parent.children.get(key)
                if nxt is None:
                    return 0
                parent = nxt
            target = parent.children.get(keys[-1])
            if target is None:
                return 0
            removed = self._count_boundaries(target)
            del parent.children[keys[-1]]
            return removed

    def __len__(self) -> int:
        return self._count_boundaries(self._root) - (
            1 if self._root.meta is not None else 0
        )

    @staticmethod
    def _count_boundaries(node: "_Node") -> int:
        count = 1 if node.meta is not None else 0
        for child in node.children.values():
            count += RadixIndex._count_boundaries(child)
        return count

    @staticmethod
    def _check_keys(keys: Sequence[BlockKey]) -> None:
        for key in keys:
            if len(key) != KEY_BYTES:
                raise BlockIndexError(
                    f"block keys must be {KEY_BYTES} bytes, got {len(key)}"
                )

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write a versioned binary snapshot of all boundaries."""
        entries: list[tuple[list[BlockKey], BlockMeta]] = []

        def walk(node: _Node, chain: list[BlockKey]) -> None:
            if node.meta is not None:
                entries.append((list(chain), node.meta))
            for key in sorted(node.children):
                chain.append(key)
                walk(node.children[key], chain)
                chain.pop()

        walk(self._root, [])
        out = bytearray()
        out += _SNAPSHOT_MAGIC
        out += struct.pack(">HI", _SNAPSHOT_VERSION, len(entries))
        for chain, meta in entries:
            out += struct.pack(">H", len(chain))
            out += b"".join(chain)
            out += struct.pack(
                ">IQIQ",
                meta.total_chunks,
                meta.set_epoch,
                meta.n_servers_at_set,
                meta.payload_bytes,
            )
        Path(path).write_bytes(bytes(out))

    @classmethod
    def load(cls, path: str | Path) -> "RadixIndex":
        data = Path(path).read_bytes()
        if data[:4] != _SNAPSHOT_MAGIC:
            raise BlockIndexError("not an index snapshot")
        version, count = struct.unpack_from(">HI", data, 4)
        if version != _SNAPSHOT_VERSION:
            raise BlockIndexError(f"unsupported snapshot version {version}")
        idx = cls()
        pos = 10
        for _ in range(count):
            (depth,) = struct.unpack_from(">H", data, pos)
            pos += 2
            chain = [
                data[pos + i * KEY_BYTES : pos + (i + 1) * KEY_BYTES]
                for i in range(depth)
            ]
            pos += depth * KEY_BYTES
            total, epoch, n_servers, nbytes = struct.unpack_from(">IQIQ", data, pos)
            pos += 24
            meta = BlockMeta(total, epoch, n_servers, nbytes)
            with idx._lock:
                node = idx._root
                for key in chain:
                    node = node.children.setdefault(key, _Node())
                node.meta = meta
        return idx
