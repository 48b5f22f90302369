"""Token blocks, chained block keys, and fixed-size payload chunks.

A prompt's token ids are cut into fixed-size blocks. Each block's key is a
sha256 digest over the previous block's key and the block's tokens, so one
key identifies the whole prefix ending at that block: equal prefixes give
equal keys, and a key match at depth d implies matches at every shallower
depth.

Cached bytes for one block are sliced into fixed-size chunks, the unit of
placement, transfer, migration, and eviction. Splitting and joining are
exact inverses.

Canonical digest input (cross-process, cross-language stable):

    sha256(prev_key(32 bytes) || u32le(len(tokens)) || u32le(token)...)

with 32 zero bytes as the key before the first block. Token ids must fit an
unsigned 32-bit integer.
"""

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_BLOCK_TOKENS = 128
DEFAULT_CHUNK_BYTES = 6144
KEY_BYTES = 32
ZERO_KEY = bytes(KEY_BYTES)

BlockKey = bytes


class CodecError(ValueError):
    """Malformed input to a codec operation."""


class IncompleteBlockError(CodecError):
    """A block cannot be reassembled because chunks are missing or damaged.

    Callers must treat the whole block as a cache miss and purge it.
    """


@dataclass(frozen=True)
class TokenBlock:
    tokens: tuple[int, ...]
    block_index: int


@dataclass(frozen=True)
class ChunkRecord:
    """One stored slice of a block's payload."""

    block: BlockKey
    chunk_id: int
    total_chunks: int
    payload: bytes


def blockify(tokens: Sequence[int], block_size: int = DEFAULT_BLOCK_TOKENS) -> list[TokenBlock]:
    """Cut a token sequence into blocks of block_size, last one possibly short."""
    if block_size < 1:
        raise CodecError(f"block_size must be >= 1, got {block_size}")
    return [
        TokenBlock(tuple(tokens[start : start + block_size]), start // block_size)
        for start in range(0, len(tokens), block_size)
    ]


def _encode_tokens(tokens: Sequence[int]) -> bytes:
    try:
        return struct.pack(f"<I{len(tokens)}I", len(tokens), *tokens)
    except struct.error as exc:
        raise CodecError(f"token ids must be unsigned 32-bit integers: {exc}") from exc


def block_key(prev: BlockKey, tokens: Sequence[int]) -> BlockKey:
    """Key of one block given its predecessor's key."""
    if len(prev) != KEY_BYTES:
        raise CodecError(f"previous key must be {KEY_BYTES} bytes, got {len(prev)}")
    return hashlib.sha256(prev + _encode_tokens(tokens)).digest()


def chain_hash(blocks: Iterable[TokenBlock]) -> list[BlockKey]:
    """Chained keys for a block sequence; key i commits to blocks 0..i."""
    keys: list[BlockKey] = []
    prev = ZERO_KEY
    for block in blocks:
        if not block.tokens:
            raise CodecError("blocks must be non-empty")
        prev = block_key(prev, block.tokens)
        keys.append(prev)
    return keys


def prompt_keys(tokens: Sequence[int], block_size: int = DEFAULT_BLOCK_TOKENS) -> list[BlockKey]:
    return chain_hash(blockify(tokens, block_size))


def chunk_split(
    block: BlockKey, payload: bytes, chunk_bytes: int = DEFAULT_CHUNK_BYTES
) -> list[ChunkRecord]:
    """Slice a block payload into chunk records; inverse of chunk_join."""
    if chunk_bytes < 1:
        raise CodecError(f"chunk_bytes must be >= 1, got {chunk_bytes}")
    if len(payload) == 0:
        raise CodecError("block payloads must be non-empty")
    total = (len(payload) + chunk_bytes - 1) // chunk_bytes
    return [
        ChunkRecord(block, i, total, payload[i * chunk_bytes : (i + 1) * chunk_bytes])
        for i in range(total)
    ]


def chunk_join(chunks: Sequence[ChunkRecord]) -> bytes:
    """Reassemble a block payload from its chunks, in any arrival order."""
    if not chunks:
        raise IncompleteBlockError("no chunks supplied")
    block = chunks[0].block
    total = chunks[0].total_chunks
    by_id: dict[int, ChunkRecord] = {}
    for c in chunks:
        if c.block != block or c.total_chunks != total:
            raise CodecError("chunks from different blocks cannot be joined")
        by_id[c.chunk_id] = c
    missing = [i for i in range(total) if i not in by_id]
    if missing:
        raise IncompleteBlockError(
            f"block {block.hex()[:12]} missing chunk ids {missing[:8]}"
            f"{'...' if len(missing) > 8 else ''} of {total}"
        )
    return b"".join(by_id[i].payload for i in range(total))
