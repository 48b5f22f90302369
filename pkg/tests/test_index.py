import random

import pytest

from leokv.blockcodec import prompt_keys
from leokv.index import BlockIndexError, BlockMeta, RadixIndex


def meta(total=5, epoch=0, servers=9, nbytes=1000):
    return BlockMeta(total, epoch, servers, nbytes)


def chain(seed, blocks, block_size=4):
    rng = random.Random(f"chain:{seed}")
    tokens = [rng.randrange(1 << 16) for _ in range(blocks * block_size)]
    return prompt_keys(tokens, block_size)


def insert_chain(index, keys, start_meta=0):
    index.insert(keys, [meta(epoch=start_meta + i) for i in range(len(keys))])


class TestInsertAndLookup:
    def test_full_depth_match(self):
        index = RadixIndex()
        keys = chain(1, 4)
        insert_chain(index, keys)
        found = index.longest_prefix(keys)
        assert found is not None
        depth, got = found
        assert depth == 4
        assert got.set_epoch == 3

    def test_partial_prefix_match(self):
        index = RadixIndex()
        full = chain(2, 4)
        insert_chain(index, full)
        # another prompt sharing only the first 2 blocks
        probe = full[:2] + chain(3, 2)
        depth, _ = index.longest_prefix(probe)
        assert depth == 2

    def test_extension_lookup_returns_last_boundary(self):
        index = RadixIndex()
        keys = chain(4, 3)
        insert_chain(index, keys)
        longer = keys + chain(5, 2)
        depth, _ = index.longest_prefix(longer)
        assert depth == 3

    def test_nothing_indexed(self):
        index = RadixIndex()
        assert index.longest_prefix(chain(6, 2)) is None

    def test_meta_at_depths(self):
        index = RadixIndex()
        keys = chain(7, 3)
        insert_chain(index, keys)
        assert index.meta_at(keys, 1).set_epoch == 0
        assert index.meta_at(keys, 3).set_epoch == 2
        assert index.meta_at(chain(8, 2), 1) is None

    def test_none_meta_extends_without_overwriting(self):
        index = RadixIndex()
        keys = chain(9, 3)
        index.insert(keys[:2], [meta(epoch=10), meta(epoch=11)])
        index.insert(keys, [None, None, meta(epoch=12)])
        assert index.meta_at(keys, 2).set_epoch == 11
        assert index.meta_at(keys, 3).set_epoch == 12

    def test_random_chains_match_flat_scan_oracle(self):
        rng = random.Random(99)
        index = RadixIndex()
        stored: set[tuple] = set()
        pool = [chain(s, rng.randint(1, 8)) for s in range(120)]
        for keys in pool[:80]:
            insert_chain(index, keys)
            for d in range(1, len(keys) + 1):
                stored.add(tuple(keys[:d]))
        for _ in range(1000):
            base = rng.choice(pool)
            cut = rng.randint(1, len(base))
            query = base[:cut] + (chain(rng.random(), rng.randint(0, 3)) if rng.random() < 0.5 else [])
            if not query:
                continue
            # linear scan from the deep end
            want = 0
            for d in range(len(query), 0, -1):
                if tuple(query[:d]) in stored:
                    want = d
                    break
            found = index.longest_prefix(query)
            got = found[0] if found else 0
            assert got == want


class TestEvict:
    def test_suffix_invalidation(self):
        index = RadixIndex()
        keys = chain(20, 4)
        insert_chain(index, keys)
        removed = index.evict(keys[:2])
        assert removed == 3  # depths 2, 3, 4
        depth, _ = index.longest_prefix(keys)
        assert depth == 1

    def test_evict_unknown_chain(self):
        index = RadixIndex()
        insert_chain(index, chain(21, 2))
        assert index.evict(chain(22, 1)) == 0

    def test_prefix_closure_preserved_under_random_ops(self):
        rng = random.Random(5)
        index = RadixIndex()
        oracle: set[tuple] = set()
        pool = [chain(s + 1000, rng.randint(1, 6)) for s in range(40)]
        for _ in range(600):
            keys = rng.choice(pool)
            cut = rng.randint(1, len(keys))
            if rng.random() < 0.6:
                insert_chain(index, keys[:cut])
                for d in range(1, cut + 1):
                    oracle.add(tuple(keys[:d]))
            else:
                index.evict(keys[:cut])
                oracle = {t for t in oracle if t[:cut] != tuple(keys[:cut])}
            # spot-check agreement
            probe = rng.choice(pool)
            found = index.longest_prefix(probe)
            got = found[0] if found else 0
            want = 0
            for d in range(len(probe), 0, -1):
                if tuple(probe[:d]) in oracle:
                    want = d
                    break
            assert got == want
        # closure: every stored boundary's parent is stored (depth > 1)
        for t in oracle:
            if len(t) > 1:
                assert t[:-1] in oracle

    def test_boundary_count(self):
        index = RadixIndex()
        insert_chain(index, chain(30, 3))
        assert len(index) == 3


class TestValidation:
    def test_bad_key_length(self):
        index = RadixIndex()
        with pytest.raises(BlockIndexError):
            index.insert([b"short"], [meta()])

    def test_mismatched_lengths(self):
        index = RadixIndex()
        with pytest.raises(BlockIndexError):
            index.insert(chain(31, 2), [meta()])

    def test_empty_lookup_rejected(self):
        with pytest.raises(BlockIndexError):
            RadixIndex().longest_prefix([])

    def test_bad_meta(self):
        with pytest.raises(BlockIndexError):
            BlockMeta(0, 0, 1, 10)
        with pytest.raises(BlockIndexError):
            BlockMeta(1, 0, 1, 0)


class TestPersistence:
    def test_snapshot_round_trip(self, tmp_path):
        index = RadixIndex()
        chains = [chain(s + 50, random.Random(s).randint(1, 6)) for s in range(20)]
        for keys in chains:
            insert_chain(index, keys, start_meta=7)
        path = tmp_path / "index.bin"
        index.save(path)
        loaded = RadixIndex.load(path)
        assert len(loaded) == len(index)
        for keys in chains:
            a = index.longest_prefix(keys)
            b = loaded.longest_prefix(keys)
            assert a == b

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a snapshot")
        with pytest.raises(BlockIndexError):
            RadixIndex.load(path)


class TestConcurrentReaders:
    def test_lookups_run_against_writer(self):
        import threading

        index = RadixIndex()
        chains = [chain(i + 2000, 4) for i in range(50)]
        errors = []

        def writer():
            try:
                for keys in chains:
                    insert_chain(index, keys)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        def reader():
            try:
                for _ in range(200):
                    for keys in chains[:5]:
                        found = index.longest_prefix(keys)
                        assert found is None or 1 <= found[0] <= 4
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer)] + [
            threading.Thread(target=reader) for _ in range(3)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        for keys in chains:
            assert index.longest_prefix(keys)[0] == 4
