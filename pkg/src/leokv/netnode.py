"""Standalone datagram store nodes and the client that drives them.

Each node is one satellite's chunk store behind a UDP socket, speaking a
compact self-describing format (one chunk per datagram, so no fragmentation
logic). Operations are idempotent and the client retries with exponential
backoff, which is the whole reliability story: duplicate SETs rewrite the
same bytes, duplicate EVICTs are absorbed by dedup, GETs are pure reads.

Wire layout, all integers big-endian:

    offset size field
    0      1    version (currently 1)
    1      1    op
    2      8    request_id
    10     32   model_fingerprint
    42     32   block_key
    74     4    chunk_id
    78     4    total_chunks
    82     4    payload_len
    86     ...  payload (payload_len bytes)

Ops: SET_CHUNK=1 GET_CHUNK=2 GET_RESP=3 EVICT=4 MIGRATE=5 ACK=6 NACK=7.
A datagram never exceeds 8 KiB (payload <= 8106 bytes; the 6144-byte default
chunk fits well inside). Field reuse on special ops:

* EVICT: chunk_id carries ttl_hops; the payload is the 8-byte gossip origin
  (u32 plane, u32 index). Nodes forward new notices to their grid neighbors
  with ttl - 1 and absorb duplicates.
* MIGRATE: the payload is the destination node address as ``host:port``
  text; the node pushes every held chunk there via SET_CHUNK, drops its
  copies once all are acknowledged, then ACKs the migration.
* NACK: the payload is one error byte (1 malformed, 2 oversize,
  3 not found, 4 failed).
"""

import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .blockcodec import KEY_BYTES, ChunkRecord
from .store import EvictionNotice, SatStore
from .topology import SatCoord

WIRE_VERSION = 1
HEADER = struct.Struct(">BBQ32s32sIII")
HEADER_BYTES = HEADER.size  # 86
MAX_DATAGRAM = 8192
MAX_PAYLOAD = MAX_DATAGRAM - HEADER_BYTES

OP_SET_CHUNK = 1
OP_GET_CHUNK = 2
OP_GET_RESP = 3
OP_EVICT = 4
OP_MIGRATE = 5
OP_ACK = 6
OP_NACK = 7

ERR_MALFORMED = 1
ERR_OVERSIZE = 2
ERR_NOT_FOUND = 3
ERR_FAILED = 4

Addr = tuple[str, int]


class WireError(ValueError):
    pass


class RequestTimeout(OSError):
    """No response after all retry attempts."""


@dataclass(frozen=True)
class WireMessage:
    op: int
    request_id: int
    model_fingerprint: bytes = bytes(KEY_BYTES)
    block_key: bytes = bytes(KEY_BYTES)
    chunk_id: int = 0
    total_chunks: int = 0
    payload: bytes = b""
    version: int = WIRE_VERSION

    def encode(self) -> bytes:
        if len(self.payload) > MAX_PAYLOAD:
            raise WireError(
                f"payload of {len(self.payload)} exceeds {MAX_PAYLOAD} bytes"
            )
        return (
            HEADER.pack(
                self.version,
                self.op,
                self.request_id,
                self.model_fingerprint,
                self.block_key,
                self.chunk_id,
                self.total_chunks,
                len(self.payload),
            )
            + self.payload
        )

    @classmethod
    def decode(cls, data: bytes) -> "WireMessage":
        if len(data) < HEADER_BYTES:
            raise WireError(f"datagram of {len(data)} bytes is shorter than header")
        version, op, request_id, fp, key, chunk_id, total, plen = HEADER.unpack_from(
            data
        )
        if version != WIRE_VERSION:
            raise WireError(f"unsupported wire version {version}")
        payload = data[HEADER_BYTES:]
        if len(payload) != plen:
            raise WireError(f"payload_len {plen} does not match {len(payload)} bytes")
        return cls(op, request_id, fp, key, chunk_id, total, payload, version)


def pack_origin(coord: SatCoord) -> bytes:
    return struct.pack(">II", coord.plane, coord.index)


def unpack_origin(payload: bytes) -> SatCoord:
    if len(payload) != 8:
        raise WireError("eviction origin must be 8 bytes")
    plane, index = struct.unpack(">II", payload)
    return SatCoord(plane, index)


@dataclass
class NodeConfig:
    """One store node: bind address, grid identity, capacity, gossip fanout.

    Neighbor addresses must mirror the node's four torus links for eviction
    gossip to reach everything it should.
    """

    bind: Addr
    coord: SatCoord
    capacity_bytes: int
    neighbors: tuple[Addr, ...] = ()
    notice_ttl: int = 8


class StoreNode:
    """Single-threaded datagram server around one SatStore."""

    def __init__(self, config: NodeConfig) -> None:
        self.config = config
        self.store = SatStore(config.coord, config.capacity_bytes, config.notice_ttl)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        self._sock.bind(config.bind)
        self._sock.settimeout(0.05)
        self.address: Addr = self._sock.getsockname()[:2]
        self._push_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._push_sock.settimeout(0.25)
        self._request_seq = 0

    def close(self) -> None:
        self._sock.close()
        self._push_sock.close()

    def serve(self, stop_event: threading.Event | None = None) -> None:
        """Answer datagrams until the stop event fires (or forever)."""
        try:
            while stop_event is None or not stop_event.is_set():
                try:
                    data, sender = self._sock.recvfrom(65535)
                except socket.timeout:
                    continue
                except OSError:
                    break
                reply = self._handle(data)
                if reply is not None:
                    self._sock.sendto(reply.encode(), sender)
        finally:
            self.close()

    # -- request handling ---------------------------------------------------

    def _handle(self, data: bytes) -> WireMessage | None:
        try:
            msg = WireMessage.decode(data)
        except WireError:
            return WireMessage(OP_NACK, 0, payload=bytes([ERR_MALFORMED]))
        try:
            if msg.op == OP_SET_CHUNK:
                return self._handle_set(msg)
            if msg.op == OP_GET_CHUNK:
                return self._handle_get(msg)
            if msg.op == OP_EVICT:
                return self._handle_evict(msg)
            if msg.op == OP_MIGRATE:
                return self._handle_migrate(msg)
            return WireMessage(
                OP_NACK, msg.request_id, payload=bytes([ERR_MALFORMED])
            )
        except Exception:
            return WireMessage(OP_NACK, msg.request_id, payload=bytes([ERR_FAILED]))

    def _handle_set(self, msg: WireMessage) -> WireMessage:
        if len(msg.payload) > self.store.capacity_bytes:
            return WireMessage(OP_NACK, msg.request_id, payload=bytes([ERR_OVERSIZE]))
        notices = self.store.set(
            msg.model_fingerprint,
            msg.block_key,
            msg.chunk_id,
            msg.payload,
            msg.total_chunks,
        )
        for notice in notices:
            self._gossip(notice)
        return WireMessage(OP_ACK, msg.request_id)

    def _handle_get(self, msg: WireMessage) -> WireMessage:
        record = self.store.get_record(
            msg.model_fingerprint, msg.block_key, msg.chunk_id
        )
        if record is None:
            return WireMessage(OP_NACK, msg.request_id, payload=bytes([ERR_NOT_FOUND]))
        payload, total = record
        return WireMessage(
            OP_GET_RESP,
            msg.request_id,
            msg.model_fingerprint,
            msg.block_key,
            msg.chunk_id,
            total,
            payload,
        )

    def _handle_evict(self, msg: WireMessage) -> WireMessage:
        notice = EvictionNotice(
            msg.model_fingerprint,
            msg.block_key,
            unpack_origin(msg.payload),
            msg.chunk_id,
        )
        if self.store.apply_eviction(notice) and notice.ttl_hops > 0:
            self._forward_evict(notice)
        return WireMessage(OP_ACK, msg.request_id)

    def _gossip(self, notice: EvictionNotice) -> None:
        # Local eviction: the node is the gossip origin.
        self.store.apply_eviction(notice)
        if notice.ttl_hops > 0:
            self._forward_evict(notice)

    def _forward_evict(self, notice: EvictionNotice) -> None:
        # Fire-and-forget fanout; duplicates downstream are absorbed.
        msg = WireMessage(
            OP_EVICT,
            self._next_request_id(),
            notice.namespace,
            notice.block,
            notice.ttl_hops - 1,
            0,
            pack_origin(notice.origin),
        )
        for addr in self.config.neighbors:
            self._push_sock.sendto(msg.encode(), addr)

    def _handle_migrate(self, msg: WireMessage) -> WireMessage:
        try:
            host, port_text = msg.payload.decode("ascii").rsplit(":", 1)
            dest = (host, int(port_text))
        except (UnicodeDecodeError, ValueError):
            return WireMessage(OP_NACK, msg.request_id, payload=bytes([ERR_MALFORMED]))
        items = self.store.items()
        for (ns, block, chunk_id), payload, total in items:
            push = WireMessage(
                OP_SET_CHUNK, self._next_request_id(), ns, block, chunk_id, total, payload
            )
            if not self._push_and_wait(push, dest):
                return WireMessage(
                    OP_NACK, msg.request_id, payload=bytes([ERR_FAILED])
                )
        # Every chunk acknowledged by the destination: drop source copies.
        for (ns, block, chunk_id), _payload, _total in items:
            self.store.drop_chunk(ns, block, chunk_id)
        return WireMessage(OP_ACK, msg.request_id)

    def _push_and_wait(self, msg: WireMessage, dest: Addr) -> bool:
        encoded = msg.encode()
        for _ in range(4):
            self._push_sock.sendto(encoded, dest)
            try:
                while True:
                    data, _ = self._push_sock.recvfrom(65535)
                    reply = WireMessage.decode(data)
                    if reply.request_id == msg.request_id:
                        return reply.op == OP_ACK
            except socket.timeout:
                continue
        return False

    def _next_request_id(self) -> int:
        self._request_seq += 1
        return (id(self) << 20 | self._request_seq) & 0xFFFFFFFFFFFFFFFF


class UdpClient:
    """Retrying request/response client; safe for concurrent use.

    Every worker thread keeps its own socket and runs stop-and-wait, so
    request/response correlation degenerates to matching the request_id on
    that socket. Attempt timeouts start at 50 ms and double per retry.
    """

    def __init__(
        self,
        timeout_s: float = 0.05,
        retries: int = 3,
        fanout: int = 32,
    ) -> None:
        self.timeout_s = timeout_s
        self.retries = retries
        self._local = threading.local()
        self.pool = ThreadPoolExecutor(max_workers=fanout)
        self._id_lock = threading.Lock()
        self._id_seq = int(time.monotonic_ns()) & 0xFFFFFF

    def close(self) -> None:
        self.pool.shutdown(wait=True)

    def _socket(self) -> socket.socket:
        sock = getattr(self._local, "sock", None)
        if sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 21)
            self._local.sock = sock
        return sock

    def _next_id(self) -> int:
        with self._id_lock:
            self._id_seq += 1
            return self._id_seq

    def request(
        self, addr: Addr, msg: WireMessage, timeout_s: float | None = None
    ) -> WireMessage:
        """Send and await the matching response, retrying on silence."""
        sock = self._socket()
        encoded = msg.encode()
        timeout = timeout_s if timeout_s is not None else self.timeout_s
        for attempt in range(self.retries + 1):
            sock.settimeout(timeout * (2**attempt))
            sock.sendto(encoded, addr)
            deadline = time.monotonic() + timeout * (2**attempt)
            try:
                while True:
                    data, _ = sock.recvfrom(65535)
                    reply = WireMessage.decode(data)
                    if reply.request_id == msg.request_id:
                        return reply
                    if time.monotonic() > deadline:
                        break
            except socket.timeout:
                continue
        raise RequestTimeout(f"no response from {addr} after {self.retries + 1} tries")

    # -- chunk operations -----------------------------------------------------

    def set_chunk(
        self, addr: Addr, namespace: bytes, record: ChunkRecord
    ) -> None:
        reply = self.request(
            addr,
            WireMessage(
                OP_SET_CHUNK,
                self._next_id(),
                namespace,
                record.block,
                record.chunk_id,
                record.total_chunks,
                record.payload,
            ),
        )
        if reply.op != OP_ACK:
            raise WireError(f"set rejected with code {reply.payload[:1].hex()}")

    def get_chunk(
        self, addr: Addr, namespace: bytes, block: bytes, chunk_id: int
    ) -> ChunkRecord | None:
        reply = self.request(
            addr,
            WireMessage(OP_GET_CHUNK, self._next_id(), namespace, block, chunk_id),
        )
        if reply.op == OP_GET_RESP:
            return ChunkRecord(block, chunk_id, reply.total_chunks, reply.payload)
        return None

    def evict_block(
        self, addr: Addr, namespace: bytes, block: bytes, origin: SatCoord, ttl: int
    ) -> None:
        self.request(
            addr,
            WireMessage(
                OP_EVICT, self._next_id(), namespace, block, ttl, 0, pack_origin(origin)
            ),
        )

    def migrate_node(self, addr: Addr, dest: Addr, timeout_s: float = 10.0) -> None:
        payload = f"{dest[0]}:{dest[1]}".encode("ascii")
        reply = self.request(
            addr,
            WireMessage(OP_MIGRATE, self._next_id(), payload=payload),
            timeout_s=timeout_s,
        )
        if reply.op != OP_ACK:
            raise WireError("migration rejected")

    # -- block-level conveniences ----------------------------------------------

    def set_block(
        self,
        namespace: bytes,
        records: list[ChunkRecord],
        addrs: list[Addr],
    ) -> None:
        """Stripe a block's chunks to their nodes in parallel."""
        futures = [
            self.pool.submit(self.set_chunk, addr, namespace, record)
            for addr, record in zip(addrs, records)
        ]
        for future in futures:
            future.result()

    def get_block(
        self,
        namespace: bytes,
        block: bytes,
        chunk_ids: list[int],
        addrs: list[Addr],
    ) -> list[ChunkRecord | None]:
        futures = [
            self.pool.submit(self.get_chunk, addr, namespace, block, chunk_id)
            for addr, chunk_id in zip(addrs, chunk_ids)
        ]
        return [future.result() for future in futures]


class UdpBackend:
    """Chunk backend over real datagram nodes; plugs into KvcManager."""

    def __init__(
        self,
        node_map: dict[SatCoord, Addr],
        client: UdpClient | None = None,
        notice_ttl: int = 8,
    ) -> None:
        self.node_map = dict(node_map)
        self.client = client or UdpClient()
        self.notice_ttl = notice_ttl
        self.probe_count = 0

    def store_chunks(self, puts) -> None:
        futures = [
            self.client.pool.submit(
                self.client.set_chunk, self.node_map[addr.coord], addr.namespace, record
            )
            for addr, record in puts
        ]
        for future in futures:
            future.result()

    def fetch_chunks(self, gets):
        start = time.monotonic()
        futures = [
            self.client.pool.submit(
                self.client.get_chunk,
                self.node_map[addr.coord],
                addr.namespace,
                addr.block,
                addr.chunk_id,
            )
            for addr in gets
        ]
        results = [future.result() for future in futures]
        return results, time.monotonic() - start

    def probe_chunk(self, addr) -> bool:
        self.probe_count += 1
        return (
            self.client.get_chunk(
                self.node_map[addr.coord], addr.namespace, addr.block, addr.chunk_id
            )
            is not None
        )

    def evict_block(self, coord: SatCoord, namespace: bytes, block: bytes) -> None:
        self.client.evict_block(
            self.node_map[coord], namespace, block, coord, self.notice_ttl
        )

    def migrate(self, plan) -> None:
        for _sid, src, dst in plan.moves:
            if src == dst:
                continue
            self.client.migrate_node(self.node_map[src], self.node_map[dst])


def spawn_local_nodes(
    coords: list[SatCoord],
    capacity_bytes: int = 1 << 32,
    grid: tuple[int, int] | None = None,
    notice_ttl: int = 8,
) -> tuple[dict[SatCoord, Addr], threading.Event, list[threading.Thread]]:
    """Desk-scale harness: one loopback node thread per coordinate.

    Ports are ephemeral unless LEOKV_PORT_BASE is set, in which case nodes
    bind sequential ports from that base (for sandboxes with restricted
    ranges). When grid dimensions are given, each node learns the addresses
    of its four torus neighbors that also have nodes, enabling eviction
    gossip.
    """
    import os

    port_base = int(os.environ.get("LEOKV_PORT_BASE", "0"))
    nodes: list[StoreNode] = []
    node_map: dict[SatCoord, Addr] = {}
    for offset, coord in enumerate(coords):
        port = port_base + offset if port_base else 0
        node = StoreNode(
            NodeConfig(("127.0.0.1", port), coord, capacity_bytes, (), notice_ttl)
        )
        nodes.append(node)
        node_map[coord] = node.address
    if grid is not None:
        planes, sats = grid
        for node in nodes:
            coord = node.config.coord
            neighbors = []
            for dp, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                nb = SatCoord((coord.plane + dp) % planes, (coord.index + di) % sats)
                if nb in node_map:
                    neighbors.append(node_map[nb])
            node.config.neighbors = tuple(neighbors)
    stop = threading.Event()
    threads = []
    for node in nodes:
        thread = threading.Thread(target=node.serve, args=(stop,), daemon=True)
        thread.start()
        threads.append(thread)
    return node_map, stop, threads
