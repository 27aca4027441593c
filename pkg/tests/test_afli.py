"""Tests for the after-flow learned index."""
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from nflindex.afli import Bucket, DenseNode, EntryTag, Index, ModelNode, bucket_capacity_for, bulkload, modelling
from nflindex.config import IndexConfig
from nflindex.conflict import LinearModel
from nflindex.enums import BucketMode, OpKind
from nflindex.errors import AlreadyExists, DepthExceeded, DuplicateKey, NotFound, OutOfKeySpace
from nflindex.operations import apply_operation
from nflindex.oracle import ref_bulkload


@pytest.fixture(name='small_index')
def fixture_small_index():
    return bulkload([1.0, 2.0, 3.0], [10, 20, 30], IndexConfig(alpha=2.0))


def test_bulkload_three_keys(small_index):
    root = small_index.root
    assert isinstance(root, ModelNode)
    assert root.model == LinearModel(slope=2.0, intercept=-2.0)
    assert root.size == 5
    assert [root.tag(slot) for slot in range(5)] == [EntryTag.DATA, EntryTag.EMPTY, EntryTag.DATA, EntryTag.EMPTY, EntryTag.DATA]
    small_index.audit()


def test_lookup(small_index):
    assert small_index.lookup(2.0) == 20
    assert small_index.lookup(1.0) == 10
    assert small_index.lookup(2.5) is None
    assert small_index.lookup(100.0) is None
    assert 3.0 in small_index
    assert 2.5 not in small_index


def test_empty_index():
    index = bulkload([], [])
    assert isinstance(index.root, DenseNode)
    assert index.lookup(1.0) is None
    stats = index.stats()
    assert stats.key_count == 0
    assert stats.node_counts == {'model': 0, 'bucket': 0, 'dense': 1}
    index.audit()


def test_insert_into_empty_slot_then_bucket(small_index):
    size_before = small_index.stats().size_bytes
    small_index.insert(2.5, 25)
    assert small_index.root.tag(3) == EntryTag.DATA
    assert small_index.lookup(2.5) == 25
    small_index.insert(2.6, 26)
    assert small_index.root.tag(3) == EntryTag.BUCKET
    assert small_index.lookup(2.5) == 25
    assert small_index.lookup(2.6) == 26
    stats = small_index.stats()
    assert stats.node_counts['bucket'] == 1
    assert stats.size_bytes > size_before
    assert len(small_index) == 5
    small_index.audit()


def test_insert_existing_key(small_index):
    stats_before = small_index.stats()
    with pytest.raises(AlreadyExists):
        small_index.insert(2.0, 99)
    assert small_index.lookup(2.0) == 20
    assert small_index.stats() == stats_before


def test_insert_outside_key_span(small_index):
    with pytest.raises(OutOfKeySpace):
        small_index.insert(0.5, 5)
    small_index.enforce_key_space = False
    small_index.insert(0.5, 5)
    assert small_index.lookup(0.5) == 5
    small_index.audit()


def test_update(small_index):
    stats_before = small_index.stats()
    small_index.update(2.0, 99)
    assert small_index.lookup(2.0) == 99
    stats_after = small_index.stats()
    assert (stats_after.size_bytes, stats_after.max_height) == (stats_before.size_bytes, stats_before.max_height)
    with pytest.raises(NotFound):
        small_index.update(2.5, 1)


def test_delete(small_index):
    small_index.delete(2.0)
    assert small_index.lookup(2.0) is None
    assert small_index.lookup(1.0) == 10
    assert small_index.lookup(3.0) == 30
    with pytest.raises(NotFound):
        small_index.delete(2.0)
    with pytest.raises(NotFound):
        small_index.delete(7.0)
    assert len(small_index) == 2
    small_index.audit()


def test_delete_from_bucket_keeps_link(small_index):
    small_index.insert(2.5, 25)
    small_index.insert(2.6, 26)
    small_index.delete(2.5)
    assert small_index.root.tag(3) == EntryTag.BUCKET
    assert len(small_index.root.links[3]) == 1
    assert small_index.lookup(2.6) == 26
    small_index.delete(2.6)
    assert small_index.root.tag(3) == EntryTag.EMPTY
    small_index.audit()


def test_stats_of_three_keys(small_index):
    stats = small_index.stats()
    assert stats.key_count == 3
    assert stats.node_counts == {'model': 1, 'bucket': 0, 'dense': 0}
    assert stats.max_height == 1
    assert stats.avg_height == 1.0
    # header, model, 5 entries and 10 bitmap bits
    assert stats.size_bytes == 32 + 16 + 5 * 16 + 2
    assert stats.bytes_per_key == stats.size_bytes / 3


def test_bulkload_sorts_and_rejects_duplicates():
    index = bulkload([3.0, 1.0, 2.0], [30, 10, 20])
    assert [index.lookup(key) for key in (1.0, 2.0, 3.0)] == [10, 20, 30]
    with pytest.raises(DuplicateKey):
        bulkload([1.0, 2.0, 1.0], [1, 2, 3])


def test_small_conflict_goes_into_a_bucket():
    keys = np.concatenate([np.arange(100, dtype=np.float64) * 10.0, [500.000001, 500.000002]])
    keys.sort()
    payloads = np.arange(keys.size, dtype=np.int64)
    root = modelling(keys, payloads, IndexConfig(), tail_degree=5)
    assert isinstance(root, ModelNode)
    slot = root.slot(500.0)
    assert root.tag(slot) == EntryTag.BUCKET
    bucket = root.links[slot]
    assert sorted(bucket.keys) == [500.0, 500.000001, 500.000002]
    assert bucket.capacity == bucket_capacity_for(5, IndexConfig())


def test_heavy_conflict_goes_into_a_child():
    cluster = 500.0 + np.arange(8) * 1e-6
    keys = np.sort(np.concatenate([np.arange(100, dtype=np.float64) * 10.0, cluster[1:]]))
    payloads = np.arange(keys.size, dtype=np.int64)
    index = bulkload(keys, payloads, IndexConfig())
    index.tail_degree = 2
    index.root = modelling(keys, payloads, index.config, tail_degree=2)
    slot = index.root.slot(500.0)
    assert index.root.tag(slot) == EntryTag.CHILD
    for key, payload in zip(keys, payloads):
        assert index.lookup(key) == payload
    assert index.stats().max_height == 2
    index.audit()


def test_modelling_depth_limit():
    config = IndexConfig(max_depth=3)
    with pytest.raises(DepthExceeded):
        modelling(np.array([1.0, 2.0]), np.array([1, 2]), config, depth=4)


def test_dense_node_build_and_find():
    node = DenseNode.build(np.array([1.0, 2.0, 3.0]), np.array([10, 20, 30]), 5)
    assert_array_equal(node.keys, [1.0, 1.0, 2.0, 3.0, 3.0])
    assert node.count == 3
    assert node.gaps == 2
    assert node.find(2.0) == 2
    assert node.find(3.0) == 3
    assert node.find(2.5) == -1
    keys, payloads = node.real_pairs()
    assert_array_equal(keys, [1.0, 2.0, 3.0])
    assert_array_equal(payloads, [10, 20, 30])


def test_dense_node_insert_and_delete():
    node = DenseNode.build(np.array([1.0, 2.0, 3.0]), np.array([10, 20, 30]), 6)
    for key in (0.5, 2.5, 3.5):
        node.insert(key, int(key * 10))
        assert np.all(np.diff(node.keys) >= 0)
    assert node.gaps == 0
    keys, _ = node.real_pairs()
    assert_array_equal(keys, [0.5, 1.0, 2.0, 2.5, 3.0, 3.5])
    assert node.payloads[node.find(2.5)] == 25
    node.delete(node.find(2.0))
    assert node.count == 5
    assert node.find(2.0) == -1
    assert np.all(np.diff(node.keys) >= 0)
    keys, _ = node.real_pairs()
    assert_array_equal(keys, [0.5, 1.0, 2.5, 3.0, 3.5])


def test_empty_index_fills_dense_root_then_remodels():
    index = Index()
    keys = np.linspace(1.0, 100.0, 40)
    for i, key in enumerate(keys):
        index.insert(key, i)
        index.audit()
    assert isinstance(index.root, ModelNode)
    for i, key in enumerate(keys):
        assert index.lookup(key) == i


@pytest.mark.parametrize('bucket_mode', [BucketMode.LINEAR, BucketMode.ORDERED])
def test_bucket_modes(bucket_mode):
    bucket = Bucket(4, ordered=bucket_mode == BucketMode.ORDERED)
    for key in (3.0, 1.0, 2.0):
        bucket.add(key, int(key))
    assert bucket.find(2.0) >= 0
    assert bucket.find(5.0) == -1
    bucket.remove(bucket.find(1.0))
    assert sorted(bucket.keys) == [2.0, 3.0]
    assert not bucket.full
    if bucket.ordered:
        assert bucket.keys == [2.0, 3.0]


def _fuzz(keys, bulk_mask, ops, seed, config, audit_every=1, placement=None):
    rng = np.random.default_rng(seed)
    payloads = np.arange(keys.size, dtype=np.int64)
    index = bulkload(keys[bulk_mask], payloads[bulk_mask], config, placement=placement)
    reference = ref_bulkload(keys[bulk_mask], payloads[bulk_mask])
    kinds = list(OpKind)
    for step in range(ops):
        kind = kinds[int(rng.integers(len(kinds)))]
        key = float(keys[int(rng.integers(keys.size))])
        payload = int(rng.integers(1 << 40))
        assert apply_operation(index, kind, key, payload) == apply_operation(reference, kind, key, payload)
        if step % audit_every == 0:
            index.audit()
    index.audit()
    for key in keys:
        assert index.lookup(float(key)) == reference.lookup(float(key))
    return index


@pytest.mark.parametrize('bucket_mode', [BucketMode.LINEAR, BucketMode.ORDERED])
def test_fuzz_against_reference_lognormal(bucket_mode):
    keys = np.unique(np.random.default_rng(1).lognormal(0.0, 2.0, size=3000) * 1e9)
    bulk_mask = np.random.default_rng(2).random(keys.size) < 0.5
    bulk_mask[[0, -1]] = True
    _fuzz(keys, bulk_mask, 2000, 3, IndexConfig(bucket_mode=bucket_mode))


def test_fuzz_against_reference_clustered():
    rng = np.random.default_rng(5)
    keys = np.unique(np.concatenate([rng.uniform(0.0, 1e6, size=500), 1000.0 + rng.uniform(0.0, 1e-3, size=500),
                                     rng.integers(0, 50, size=300).astype(np.float64) * 1e-9 + 5e5]))
    bulk_mask = rng.random(keys.size) < 0.3
    bulk_mask[[0, -1]] = True
    index = _fuzz(keys, bulk_mask, 3000, 6, IndexConfig(bucket_cap=3))
    stats = index.stats()
    assert stats.max_height <= index.config.max_depth + 1


def test_fuzz_from_empty_index():
    keys = np.unique(np.random.default_rng(7).uniform(0.0, 1e9, size=800))
    _fuzz(keys, np.zeros(keys.size, dtype=bool), 2000, 8, IndexConfig())


@pytest.mark.slow
def test_fuzz_ten_thousand_operations():
    keys = np.unique(np.random.default_rng(9).lognormal(0.0, 2.0, size=20_000) * 1e9)
    bulk_mask = np.random.default_rng(10).random(keys.size) < 0.5
    bulk_mask[[0, -1]] = True
    _fuzz(keys, bulk_mask, 10_000, 11, IndexConfig())


def _coarse_placement(keys):
    # many keys share a placement
    return np.floor(np.asarray(keys) / 2e9)


def _scrambled_placement(keys):
    # placements in no relation to the key order
    return np.mod(np.asarray(keys) * 0.6180339887, 1000.0)


@pytest.mark.parametrize('placement', [_coarse_placement, _scrambled_placement])
@pytest.mark.parametrize('bucket_mode', [BucketMode.LINEAR, BucketMode.ORDERED])
def test_fuzz_with_placement(placement, bucket_mode):
    keys = np.unique(np.random.default_rng(7).lognormal(0.0, 2.0, size=2000) * 1e9)
    bulk_mask = np.random.default_rng(8).random(keys.size) < 0.5
    bulk_mask[[0, -1]] = True
    index = _fuzz(keys, bulk_mask, 2000, 9, IndexConfig(bucket_mode=bucket_mode), audit_every=50, placement=placement)
    assert index.stats().key_count == len(index)


def test_entries_hold_keys_and_route_by_placement():
    keys = np.array([1.0, 2.0, 3.0, 4.0])
    # reverses the order, so key 1.0 lands in the last entry
    index = bulkload(keys, [10, 20, 30, 40], IndexConfig(alpha=1.0), placement=np.negative)
    root = index.root
    assert isinstance(root, ModelNode)
    data = np.flatnonzero(root.value_bits & ~root.pointer_bits)
    assert sorted(root.keys[data].tolist()) == keys.tolist()
    assert root.keys[root.slot(-1.0)] == 1.0
    assert index.lookup(1.0) == 10
    assert index.lookup(1.0, placement=-1.0) == 10
    # a wrong placement routes to another entry, which does not hold the key
    assert index.lookup(1.0, placement=-4.0) is None
    index.audit()


def test_shared_placements_stay_apart():
    keys = np.linspace(10.0, 20.0, 50)
    index = bulkload(keys, np.arange(50), placement=np.zeros_like)
    assert isinstance(index.root, DenseNode)
    assert len(index) == 50
    for i, key in enumerate(keys):
        assert index.lookup(float(key)) == i
    index.insert(10.5, 99)
    index.delete(float(keys[3]))
    assert index.lookup(10.5) == 99
    assert index.lookup(float(keys[3])) is None
    assert index.stats().key_count == 50
    index.audit()
