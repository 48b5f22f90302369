import random

import pytest

from leokv.geometry import ConstellationSpec
from leokv.mapping import rotation_hop_aware_plan, migration_plan
from leokv.simnet import SimConfig, SimNetwork
from leokv.store import (
    EvictionNotice,
    OversizePayloadError,
    SatStore,
    execute_migration,
    migration_copy,
    migration_drop_sources,
)
from leokv.topology import SatCoord

from oracles import LruOracle

NS = b"\x00" * 32
NS2 = b"\x01" * 32
HERE = SatCoord(0, 0)


def key(i: int) -> bytes:
    return bytes([i]) * 32


class TestSetGet:
    def test_round_trip(self):
        store = SatStore(HERE, 1000)
        assert store.set(NS, key(1), 0, b"abc", 1) == []
        assert store.get(NS, key(1), 0) == b"abc"
        assert store.get_record(NS, key(1), 0) == (b"abc", 1)

    def test_miss_on_empty(self):
        store = SatStore(HERE, 1000)
        assert store.get(NS, key(1), 0) is None
        assert store.metrics.misses == 1

    def test_oversize_rejected(self):
        store = SatStore(HERE, 10)
        with pytest.raises(OversizePayloadError):
            store.set(NS, key(1), 0, b"x" * 11, 1)

    def test_namespaces_are_disjoint(self):
        store = SatStore(HERE, 1000)
        store.set(NS, key(1), 0, b"abc", 1)
        assert store.get(NS2, key(1), 0) is None

    def test_reset_same_chunk_updates_bytes(self):
        store = SatStore(HERE, 1000)
        store.set(NS, key(1), 0, b"aaaa", 1)
        store.set(NS, key(1), 0, b"bb", 1)
        assert store.used_bytes == 2
        assert len(store) == 1


class TestLru:
    def test_capacity_two_chunks_evicts_oldest(self):
        store = SatStore(HERE, 8)
        store.set(NS, key(1), 0, b"aaaa", 1)
        store.set(NS, key(2), 0, b"bbbb", 1)
        notices = store.set(NS, key(3), 0, b"cccc", 1)
        assert store.get(NS, key(1), 0) is None
        assert store.get(NS, key(2), 0) == b"bbbb"
        assert [n.block for n in notices] == [key(1)]

    def test_get_refreshes_recency(self):
        store = SatStore(HERE, 8)
        store.set(NS, key(1), 0, b"aaaa", 1)
        store.set(NS, key(2), 0, b"bbbb", 1)
        store.get(NS, key(1), 0)  # 1 becomes most recent; 2 is now the victim
        store.set(NS, key(3), 0, b"cccc", 1)
        assert store.get(NS, key(1), 0) == b"aaaa"
        assert store.get(NS, key(2), 0) is None

    def test_probe_does_not_refresh(self):
        store = SatStore(HERE, 8)
        store.set(NS, key(1), 0, b"aaaa", 1)
        store.set(NS, key(2), 0, b"bbbb", 1)
        store.has(NS, key(1), 0)
        store.set(NS, key(3), 0, b"cccc", 1)
        assert store.get(NS, key(1), 0) is None  # probe kept 1 the LRU victim

    def test_one_notice_per_distinct_block(self):
        store = SatStore(HERE, 12)
        store.set(NS, key(1), 0, b"aaaa", 2)
        store.set(NS, key(1), 1, b"aaaa", 2)
        store.set(NS, key(2), 0, b"bbbb", 1)
        notices = store.set(NS, key(3), 0, b"c" * 12, 1)
        assert [n.block for n in notices] == [key(1), key(2)]

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_matches_reference_lru_model(self, seed):
        rng = random.Random(seed)
        store = SatStore(HERE, 64)
        oracle = LruOracle(64)
        for _ in range(2000):
            block = key(rng.randrange(12))
            chunk_id = rng.randrange(3)
            if rng.random() < 0.6:
                payload = rng.randbytes(rng.randint(1, 16))
                store.set(NS, block, chunk_id, payload, 3)
                oracle.set((NS, block, chunk_id), payload)
            else:
                assert store.get(NS, block, chunk_id) == oracle.get(
                    (NS, block, chunk_id)
                )
            assert store.used_bytes <= 64
        got = {k: p for k, p, _t in store.items()}
        assert got == oracle.data
        assert store.used_bytes == sum(len(p) for p in oracle.data.values())
        assert store.used_bytes <= 64


class TestEvictionNotices:
    def test_apply_purges_whole_block(self):
        store = SatStore(HERE, 1000)
        for chunk_id in range(4):
            store.set(NS, key(1), chunk_id, b"abc", 4)
        store.set(NS, key(2), 0, b"xyz", 1)
        notice = EvictionNotice(NS, key(1), SatCoord(1, 1), 3)
        assert store.apply_eviction(notice) is True
        assert len(store) == 1
        assert store.get(NS, key(2), 0) == b"xyz"

    def test_duplicate_notice_is_absorbed(self):
        store = SatStore(HERE, 1000)
        notice = EvictionNotice(NS, key(1), SatCoord(1, 1), 3)
        assert store.apply_eviction(notice) is True
        assert store.apply_eviction(notice) is False

    def test_absent_block_still_forwards(self):
        store = SatStore(HERE, 1000)
        notice = EvictionNotice(NS, key(9), SatCoord(2, 2), 1)
        assert store.apply_eviction(notice) is True

    def test_gossip_reaches_whole_grid_with_diameter_ttl(self):
        cfg = SimConfig(
            spec=ConstellationSpec(5, 5, 550_000.0),
            center=SatCoord(2, 2),
            n_servers=9,
        )
        net = SimNetwork(cfg, capacity_bytes=1 << 20)
        for coord in net.stores:
            net.stores[coord].set(NS, key(1), 0, b"abc", 1)
        net.broadcast_eviction(EvictionNotice(NS, key(1), SatCoord(2, 2), 4))
        assert all(len(store) == 0 for store in net.stores.values())

    def test_gossip_ttl_zero_stays_local(self):
        cfg = SimConfig(
            spec=ConstellationSpec(5, 5, 550_000.0),
            center=SatCoord(2, 2),
            n_servers=9,
        )
        net = SimNetwork(cfg, capacity_bytes=1 << 20)
        for coord in net.stores:
            net.stores[coord].set(NS, key(1), 0, b"abc", 1)
        net.broadcast_eviction(EvictionNotice(NS, key(1), SatCoord(2, 2), 0))
        purged = [coord for coord, s in net.stores.items() if len(s) == 0]
        assert purged == [SatCoord(2, 2)]


class TestMigrationExecution:
    def spec(self):
        return ConstellationSpec(15, 15, 550_000.0)

    def stores_for(self, plan):
        coords = set(plan.assignments.values())
        extra = {SatCoord(c.plane, (c.index - plan.box_width) % 15) for c in coords}
        return {c: SatStore(c, 1 << 20) for c in coords | extra}

    def test_empty_sources_no_op(self):
        plan = rotation_hop_aware_plan(SatCoord(7, 7), 9, self.spec())
        stores = self.stores_for(plan)
        execute_migration(stores, migration_plan(plan, self.spec()))
        assert all(len(s) == 0 for s in stores.values())

    def test_east_column_chunks_appear_on_west(self):
        plan = rotation_hop_aware_plan(SatCoord(7, 7), 9, self.spec())
        stores = self.stores_for(plan)
        mig = migration_plan(plan, self.spec())
        for sid, src, _dst in mig.moves:
            stores[src].set(NS, key(sid), 0, bytes([sid]) * 10, 1)
        execute_migration(stores, mig)
        for sid, src, dst in mig.moves:
            assert stores[src].get(NS, key(sid), 0) is None
            assert stores[dst].get(NS, key(sid), 0) == bytes([sid]) * 10

    def test_migration_preserves_every_triple(self):
        rng = random.Random(11)
        plan = rotation_hop_aware_plan(SatCoord(7, 7), 25, self.spec())
        stores = self.stores_for(plan)
        expected = {}
        for sid, coord in plan.assignments.items():
            for chunk_id in range(rng.randint(1, 5)):
                payload = rng.randbytes(rng.randint(1, 64))
                stores[coord].set(NS, key(sid), chunk_id, payload, 5)
                expected[(key(sid), chunk_id)] = payload
        mig = migration_plan(plan, self.spec())
        execute_migration(stores, mig)
        found = {}
        for store in stores.values():
            for (ns, block, chunk_id), payload, _t in store.items():
                assert ns == NS
                found[(block, chunk_id)] = payload
        assert found == expected

    def test_get_during_migration_succeeds_from_both(self):
        plan = rotation_hop_aware_plan(SatCoord(7, 7), 9, self.spec())
        stores = self.stores_for(plan)
        mig = migration_plan(plan, self.spec())
        sid, src, dst = mig.moves[0]
        stores[src].set(NS, key(sid), 0, b"payload", 1)
        migration_copy(stores, mig.moves)
        assert stores[src].get(NS, key(sid), 0) == b"payload"
        assert stores[dst].get(NS, key(sid), 0) == b"payload"
        migration_drop_sources(stores, mig.moves)
        assert stores[src].get(NS, key(sid), 0) is None
        assert stores[dst].get(NS, key(sid), 0) == b"payload"

    def test_metrics_snapshot(self):
        store = SatStore(HERE, 100)
        store.set(NS, key(1), 0, b"abc", 1)
        store.get(NS, key(1), 0)
        store.get(NS, key(2), 0)
        snap = store.snapshot()
        assert snap["hits"] == 1 and snap["misses"] == 1
        assert snap["used_bytes"] == 3 and snap["entries"] == 1
