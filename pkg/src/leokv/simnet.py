"""Deterministic constellation network simulation.

Models a ground host talking to a grid constellation: one store per
satellite, speed-of-light legs from the shell geometry, serial per-chunk
processing on each satellite, and a rotation clock that drives handoff
migrations.

Latency metric. A fetch contacts every holding satellite in parallel; each
satellite works through its chunk queue serially and every chunk pays one
propagation leg. The worst-case closed form for a whole value is therefore

    max over servers of  one_way_latency(server) + chunks_on_server * t_proc

and the event-driven simulation of individual chunk completions can meet but
never exceed it. Propagation is charged one way (a single leg per chunk);
column names and docs say so explicitly.

Ground-to-satellite legs use the slant range through the shell: the target's
along-grid displacement from the point under the window center composes the
in-plane and cross-plane hop lengths at right angles. Satellite-to-satellite
legs sum hop lengths along the greedy grid route.

Everything here is single-threaded and reproducible: equal configs produce
bit-identical sweep tables.
"""

import heapq
import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Sequence

from .blockcodec import ChunkRecord
from .geometry import (
    ConstellationSpec,
    LinkDistances,
    link_distances,
    propagation_latency,
)
from .mapping import (
    STRATEGIES,
    MigrationPlan,
    PlacementPlan,
    advance_plan,
    build_plan,
)
from .store import EvictionNotice, SatStore, migration_copy, migration_drop_sources
from .topology import SatCoord, hop_path, path_distance_m, validate_coord

GROUND = None  # sentinel source for message_latency

# Approximate access latency of the storage tiers a cache like this slots
# into, as (low, high) seconds. Reference points only; nothing simulates
# them. The orbital shell sits between SSD and HDD once optical links are
# assumed, which is what makes remote-memory caching there attractive.
MEMORY_TIER_LATENCY_S: dict[str, tuple[float, float]] = {
    "cpu_cache": (10e-9, 15e-9),
    "gpu_memory": (50e-9, 100e-9),
    "rdma": (2e-6, 5e-6),
    "ssd": (20e-6, 200e-6),
    "hdd": (2e-3, 20e-3),
    "nas": (30e-3, 40e-3),
    "orbital_shell_rf": (20e-3, 50e-3),
    "orbital_shell_laser": (2e-3, 4e-3),
}

# Simulation configuration bounds (grid, center, and sweep ranges).
GRID_PLANES = 15
GRID_SATS = 15
CENTER = SatCoord(7, 7)  # 1-based label 8:8
KVC_BYTES_RANGE = (2_000_000, 21_000_000)
SERVERS_RANGE = (9, 81)
PROCESSING_RANGE = (0.002, 0.02)
ALTITUDE_M_RANGE = (160_000.0, 2_000_000.0)


def _midpoint(lo: float, hi: float) -> float:
    return (lo + hi) / 2


@dataclass(frozen=True)
class SimConfig:
    """One simulation point; defaults sit at the midpoint of every range."""

    spec: ConstellationSpec = ConstellationSpec(
        GRID_PLANES, GRID_SATS, _midpoint(*ALTITUDE_M_RANGE)
    )
    center: SatCoord = CENTER
    n_servers: int = int(_midpoint(*SERVERS_RANGE))
    kvc_bytes: int = int(_midpoint(*KVC_BYTES_RANGE))
    chunk_bytes: int = 6144
    chunk_processing_s: float = _midpoint(*PROCESSING_RANGE)

    def __post_init__(self) -> None:
        validate_coord(self.center, self.spec)
        if self.n_servers < 1 or self.kvc_bytes < 1 or self.chunk_bytes < 1:
            raise ValueError("n_servers, kvc_bytes, chunk_bytes must be >= 1")
        if self.chunk_processing_s < 0:
            raise ValueError("chunk_processing_s must be >= 0")

    @property
    def total_chunks(self) -> int:
        return -(-self.kvc_bytes // self.chunk_bytes)


@dataclass(frozen=True)
class SimEvent:
    """Queue entry; processed in nondecreasing time, FIFO within a tick."""

    time_s: float
    kind: Literal["message_delivery", "rotation_step", "processing_done"]
    payload: object = None


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = itertools.count()

    def push(self, event: SimEvent) -> None:
        heapq.heappush(self._heap, (event.time_s, next(self._seq), event))

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)[2]

    def __len__(self) -> int:
        return len(self._heap)


def _ground_displacement_m(
    target: SatCoord, center: SatCoord, spec: ConstellationSpec, dists: LinkDistances
) -> float:
    """Along-grid offset of a satellite from the point under the center."""
    s, p = spec.sats_per_plane, spec.planes
    di = (target.index - center.index) % s
    if di > s // 2:
        di -= s
    dp = (target.plane - center.plane) % p
    if dp > p // 2:
        dp -= p
    return math.hypot(dists.intra_plane_m * di, dists.inter_plane_max_m * dp)


def message_latency(
    src: SatCoord | None,
    dst: SatCoord,
    cfg: SimConfig,
    dists: LinkDistances | None = None,
) -> float:
    """One-way propagation seconds from src (GROUND = under the center) to dst."""
    dists = dists or link_distances(cfg.spec)
    validate_coord(dst, cfg.spec)
    if src is GROUND:
        d = _ground_displacement_m(dst, cfg.center, cfg.spec, dists)
        return propagation_latency(math.hypot(d, cfg.spec.altitude_m))
    return propagation_latency(
        path_distance_m(hop_path(src, dst, cfg.spec), dists)
    )


def _chunks_per_server(total_chunks: int, n_servers: int) -> list[int]:
    base, extra = divmod(total_chunks, n_servers)
    return [base + (1 if sid < extra else 0) for sid in range(n_servers)]


def worst_case_get_latency(cfg: SimConfig, plan: PlacementPlan) -> float:
    """Closed-form fetch bound: slowest server's leg plus its serial queue."""
    dists = link_distances(cfg.spec)
    counts = _chunks_per_server(cfg.total_chunks, plan.n_servers)
    worst = 0.0
    for sid, coord in plan.assignments.items():
        leg = message_latency(GROUND, coord, cfg, dists)
        worst = max(worst, leg + counts[sid] * cfg.chunk_processing_s)
    return worst


def simulate_get_completions(cfg: SimConfig, plan: PlacementPlan) -> list[float]:
    """Event-driven per-chunk completion times for one full-value fetch.

    Each server processes its queue serially (processing_done events) and
    every chunk's delivery lands one propagation leg later. The maximum
    completion equals worst_case_get_latency; no chunk ever exceeds it.
    """
    dists = link_distances(cfg.spec)
    counts = _chunks_per_server(cfg.total_chunks, plan.n_servers)
    queue = EventQueue()
    for sid, coord in plan.assignments.items():
        done = 0.0
        for _ in range(counts[sid]):
            done += cfg.chunk_processing_s
            queue.push(SimEvent(done, "processing_done", sid))
            queue.push(
                SimEvent(
                    done + message_latency(GROUND, coord, cfg, dists),
                    "message_delivery",
                    sid,
                )
            )
    completions = []
    while len(queue):
        event = queue.pop()
        if event.kind == "message_delivery":
            completions.append(event.time_s)
    return completions


# -- parameter sweeps --------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    strategy: str
    max_latency_s: float


def sweep_values(
    altitude_km: tuple[float, float] = (160.0, 2000.0),
    kvc_mb: tuple[float, float] = (2.0, 21.0),
    servers: tuple[int, int] = SERVERS_RANGE,
    chunk_processing_s: tuple[float, float] = PROCESSING_RANGE,
) -> dict[str, list[float]]:
    """Evenly spaced grids over each parameter range (defaults span them all)."""

    def grid(lo: float, hi: float, points: int) -> list[float]:
        if points == 1 or lo == hi:
            return [lo]
        return [lo + k * (hi - lo) / (points - 1) for k in range(points)]

    return {
        "altitude_km": grid(*altitude_km, 11),
        "kvc_mb": grid(*kvc_mb, 20),
        "servers": [float(round(v)) for v in grid(*servers, 9)],
        "chunk_processing_s": grid(*chunk_processing_s, 10),
    }


def _config_for(base: SimConfig, parameter: str, value: float) -> SimConfig:
    if parameter == "altitude_km":
        return replace(base, spec=replace(base.spec, altitude_m=value * 1000.0))
    if parameter == "kvc_mb":
        return replace(base, kvc_bytes=int(value * 1_000_000))
    if parameter == "servers":
        return replace(base, n_servers=int(value))
    if parameter == "chunk_processing_s":
        return replace(base, chunk_processing_s=value)
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def run_sweep(
    base: SimConfig | None = None,
    values: dict[str, list[float]] | None = None,
    strategies: Sequence[str] = STRATEGIES,
) -> list[SweepRow]:
    """Max-latency table over each parameter range, others held at midpoints."""
    base = base or SimConfig()
    values = values or sweep_values()
    rows = []
    for parameter, points in values.items():
        for value in points:
            cfg = _config_for(base, parameter, value)
            for strategy in strategies:
                plan = build_plan(strategy, cfg.center, cfg.n_servers, cfg.spec)
                rows.append(
                    SweepRow(
                        parameter,
                        value,
                        strategy,
                        worst_case_get_latency(cfg, plan),
                    )
                )
    return rows


SWEEP_CSV_HEADER = "parameter,value,strategy,max_latency_s_oneway"


def sweep_to_csv(rows: Iterable[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        lines.append(
            f"{row.parameter},{row.value:g},{row.strategy},{row.max_latency_s:.9e}"
        )
    return "\n".join(lines) + "\n"


# -- simulated network backend ------------------------------------------------


@dataclass(frozen=True)
class ChunkAddress:
    coord: SatCoord
    namespace: bytes
    block: bytes
    chunk_id: int


class SimNetwork:
    """In-memory constellation: one store per satellite plus the rotation clock.

    Implements the chunk backend the cache manager drives (store, fetch with
    simulated latency, probe, evict, migrate). Also the fault-injection
    surface for tests: delete_chunk reaches into a store directly.
    """

    def __init__(
        self,
        cfg: SimConfig,
        capacity_bytes: int = 1 << 40,
        notice_ttl: int | None = None,
        sweep_interval: int | None = None,
    ) -> None:
        self.cfg = cfg
        self.dists = link_distances(cfg.spec)
        grid_diameter = cfg.spec.planes // 2 + cfg.spec.sats_per_plane // 2
        self.notice_ttl = notice_ttl if notice_ttl is not None else grid_diameter
        self.sweep_interval = sweep_interval
        self.stores: dict[SatCoord, SatStore] = {
            SatCoord(p, s): SatStore(
                SatCoord(p, s), capacity_bytes, self.notice_ttl
            )
            for p in range(cfg.spec.planes)
            for s in range(cfg.spec.sats_per_plane)
        }
        self.epoch = 0
        self.probe_count = 0

    # backend interface ------------------------------------------------

    def store_chunks(
        self, puts: Sequence[tuple[ChunkAddress, ChunkRecord]]
    ) -> None:
        for addr, record in puts:
            notices = self.stores[addr.coord].set(
                addr.namespace,
                addr.block,
                record.chunk_id,
                record.payload,
                record.total_chunks,
            )
            for notice in notices:
                self.broadcast_eviction(notice)

    def fetch_chunks(
        self, gets: Sequence[ChunkAddress]
    ) -> tuple[list[ChunkRecord | None], float]:
        """Parallel fetch: results in request order plus simulated seconds.

        Per-server queues are serviced serially; the reported latency is the
        slowest chunk's completion under the one-way metric.
        """
        results: list[ChunkRecord | None] = []
        queue_depth: dict[SatCoord, int] = {}
        latency = 0.0
        for addr in gets:
            found = self.stores[addr.coord].get_record(
                addr.namespace, addr.block, addr.chunk_id
            )
            if found is None:
                results.append(None)
                continue
            payload, total = found
            results.append(ChunkRecord(addr.block, addr.chunk_id, total, payload))
            queue_depth[addr.coord] = queue_depth.get(addr.coord, 0) + 1
            completion = (
                message_latency(GROUND, addr.coord, self.cfg, self.dists)
                + queue_depth[addr.coord] * self.cfg.chunk_processing_s
            )
            latency = max(latency, completion)
        return results, latency

    def probe_chunk(self, addr: ChunkAddress) -> bool:
        self.probe_count += 1
        return self.stores[addr.coord].has(addr.namespace, addr.block, addr.chunk_id)

    def evict_block(
        self, coord: SatCoord, namespace: bytes, block: bytes, ttl_hops: int | None = None
    ) -> None:
        notice = EvictionNotice(
            namespace, block, coord, ttl_hops if ttl_hops is not None else self.notice_ttl
        )
        self.broadcast_eviction(notice)

    def migrate(self, plan: MigrationPlan) -> None:
        overflow = migration_copy(self.stores, plan.moves)
        migration_drop_sources(self.stores, plan.moves)
        for notice in overflow:
            self.broadcast_eviction(notice)

    # gossip and rotation ------------------------------------------------

    def broadcast_eviction(self, notice: EvictionNotice) -> None:
        """Flood the notice outward with per-hop ttl decrement and dedup."""
        frontier = [(notice.origin, notice.ttl_hops)]
        self.stores[notice.origin].apply_eviction(notice)
        while frontier:
            coord, ttl = frontier.pop(0)
            if ttl <= 0:
                continue
            for dp, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                neighbor = SatCoord(
                    (coord.plane + dp) % self.cfg.spec.planes,
                    (coord.index + di) % self.cfg.spec.sats_per_plane,
                )
                if self.stores[neighbor].apply_eviction(notice):
                    frontier.append((neighbor, ttl - 1))

    def advance_rotation(self, plan: PlacementPlan) -> tuple[MigrationPlan, PlacementPlan]:
        """One handoff: run the migration and advance the epoch clock."""
        mig, nxt = advance_plan(plan, self.cfg.spec)
        self.migrate(mig)
        self.epoch += 1
        if self.sweep_interval and self.epoch % self.sweep_interval == 0:
            self.sweep_incomplete()
        return mig, nxt

    def sweep_incomplete(self) -> int:
        """Purge every block that no longer has all of its chunks anywhere.

        The periodic-cleanup policy: a network-wide integrity pass usable on
        a schedule (sweep_interval handoffs) or on demand. Returns how many
        blocks were purged.
        """
        present: dict[tuple[bytes, bytes], set[int]] = {}
        totals: dict[tuple[bytes, bytes], int] = {}
        for store in self.stores.values():
            for (ns, block, chunk_id), _payload, total in store.items():
                present.setdefault((ns, block), set()).add(chunk_id)
                totals[(ns, block)] = total
        purged = 0
        for (ns, block), chunk_ids in present.items():
            if len(chunk_ids) < totals[(ns, block)]:
                for store in self.stores.values():
                    store.purge_block(ns, block)
                purged += 1
        return purged

    # test instrumentation ------------------------------------------------

    def delete_chunk(
        self, coord: SatCoord, namespace: bytes, block: bytes, chunk_id: int
    ) -> None:
        """Fault injection: silently lose one chunk from one store."""
        self.stores[coord].drop_chunk(namespace, block, chunk_id)

    def chunks_of_block(self, namespace: bytes, block: bytes) -> list[ChunkAddress]:
        found = []
        for coord, store in self.stores.items():
            for (ns, blk, chunk_id), _payload, _total in store.items():
                if ns == namespace and blk == block:
                    found.append(ChunkAddress(coord, ns, blk, chunk_id))
        return found
