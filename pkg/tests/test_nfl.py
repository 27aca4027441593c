"""Tests for the two-stage index."""
import numpy as np
import pytest

from nflindex.afli import ModelNode
from nflindex.config import FlowConfig, IndexConfig
from nflindex.enums import DatasetKind, FlowMode, OpKind, Outcome, WorkloadMix
from nflindex.errors import AlreadyExists, DuplicateKey, NotFound, OutOfKeySpace
from nflindex.keycodec import fit_codec
from nflindex.nfl import nfl_bulkload, nfl_execute
from nflindex.numflow import FlowParams, bypass_params, initial_params, train_flow, transform_keys
from nflindex.operations import Operation, OpResult, RequestBatch, apply_operation
from nflindex.oracle import ref_bulkload
from nflindex.workloads import DatasetSpec, WorkloadSpec, gen_dataset, gen_ops


@pytest.fixture(name='keys')
def fixture_keys():
    return gen_dataset(DatasetSpec(kind=DatasetKind.LOGNORMAL, n=4000, seed=11))


def _bypass(keys):
    config = FlowConfig()
    return bypass_params(config, fit_codec(keys, config.theta, config.dims))


def _random_flow(keys, seed=0):
    config = FlowConfig(seed=seed)
    return initial_params(config, fit_codec(keys, config.theta, config.dims))


def _collapsing_flow(keys):
    # exp(-800) underflows to zero, every key lands on the bias
    config = FlowConfig(layers=1)
    return FlowParams(config=config, codec=fit_codec(keys, config.theta, config.dims), weights=np.full(3, -800.0),
                      biases=np.zeros(2))


def _payloads(keys):
    return np.arange(keys.size)


def test_flow_on_finds_every_key(keys):
    index = nfl_bulkload(keys, _payloads(keys), _bypass(keys), flow_mode=FlowMode.ON)
    assert index.use_flow
    assert index.report.use_flow
    assert index.report.tail_after is not None
    assert len(index) == keys.size
    for position in range(0, keys.size, 7):
        assert index.lookup(float(keys[position])) == position
    assert index.lookup(float(keys[0]) + 0.5) is None


def test_flow_off_indexes_original_keys(keys):
    index = nfl_bulkload(keys, _payloads(keys), _bypass(keys), flow_mode=FlowMode.OFF)
    assert not index.use_flow
    assert index.report.tail_after is None
    assert index.report.tail_before is not None
    assert index.report.transform_seconds == 0.0
    assert index.index.lookup(float(keys[10])) == 10
    assert index.lookup(float(keys[10])) == 10


def test_auto_follows_the_switch_report(keys):
    index = nfl_bulkload(keys, _payloads(keys), _random_flow(keys), flow_mode=FlowMode.AUTO)
    report = index.report
    assert report.tail_after is not None and report.tail_before is not None
    assert index.use_flow == (bool(report.order_preserved) and report.tail_after <= report.tail_before)


def test_key_span_and_duplicates(keys):
    index = nfl_bulkload(keys, _payloads(keys), _bypass(keys), flow_mode=FlowMode.ON)
    assert index.key_span == (float(keys[0]), float(keys[-1]))
    batch = nfl_execute(index, RequestBatch(ops=[Operation.insert(keys[5], 1), Operation.insert(keys[-1] + 1.0, 2),
                                                 Operation.insert(keys[0] - 1.0, 3), Operation.lookup(keys[5])]))
    assert [result.outcome for result in batch.results] == [Outcome.ALREADY_EXISTS, Outcome.OUT_OF_KEY_SPACE,
                                                            Outcome.OUT_OF_KEY_SPACE, Outcome.FOUND]
    assert batch.results[3].payload == 5
    with pytest.raises(OutOfKeySpace):
        index.insert(float(keys[-1]) * 2.0, 1)
    with pytest.raises(AlreadyExists):
        index.insert(float(keys[1]), 1)
    with pytest.raises(NotFound):
        index.delete(float(keys[1]) + 0.25)
    with pytest.raises(DuplicateKey):
        nfl_bulkload([1.0, 1.0, 2.0], [1, 2, 3], _bypass(keys))


def test_single_operations(keys):
    index = nfl_bulkload(keys, _payloads(keys), _random_flow(keys), flow_mode=FlowMode.ON)
    new_key = float(keys[100]) + 0.5
    index.insert(new_key, 77)
    assert index.lookup(new_key) == 77
    index.update(new_key, 78)
    assert index.lookup(new_key) == 78
    index.delete(new_key)
    assert index.lookup(new_key) is None
    assert len(index) == keys.size


@pytest.mark.parametrize('mode', list(FlowMode))
def test_batch_matches_single_requests(keys, mode):
    workload = gen_ops(keys, WorkloadSpec(mix=WorkloadMix.WRITE_HEAVY, op_count=1500, seed=2, batch_size=50,
                                          update_fraction=0.05, delete_fraction=0.05))
    batched = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, _random_flow(keys), flow_mode=mode)
    single = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, _random_flow(keys), flow_mode=mode)
    for batch in workload:
        executed = nfl_execute(batched, batch.fresh())
        assert executed.results == [apply_operation(single, op.kind, op.key, op.payload) for op in batch]


def _differential(index, workload):
    ref = ref_bulkload(workload.bulk_keys, workload.bulk_payloads)
    for batch in workload:
        assert index.execute(batch.fresh()).results == ref.execute(batch.fresh()).results
    assert len(index) == len(ref)
    for key in ref.keys[::13]:
        assert index.lookup(key) == ref.lookup(key)
    index.index.audit()


@pytest.mark.parametrize('mode', list(FlowMode))
@pytest.mark.parametrize('seed', [0, 1])
def test_behaves_like_reference_map(keys, mode, seed):
    workload = gen_ops(keys, WorkloadSpec(mix=WorkloadMix.WRITE_HEAVY, op_count=3000, seed=seed, batch_size=64,
                                          update_fraction=0.05, delete_fraction=0.1))
    index = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, _random_flow(keys, seed), flow_mode=mode)
    _differential(index, workload)


def test_colliding_transformed_keys(keys):
    workload = gen_ops(keys, WorkloadSpec(mix=WorkloadMix.WRITE_HEAVY, op_count=2000, seed=3, batch_size=32,
                                          update_fraction=0.05, delete_fraction=0.05))
    index = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, _collapsing_flow(keys), flow_mode=FlowMode.ON)
    assert index.use_flow
    assert index.report.collisions == workload.bulk_keys.size - 1
    # the colliding keys are all stored in the index itself
    assert len(index.index) == workload.bulk_keys.size
    assert index.stats().key_count == workload.bulk_keys.size
    _differential(index, workload)


def test_collapsing_flow_is_rejected_in_auto_mode(keys):
    index = nfl_bulkload(keys, _payloads(keys), _collapsing_flow(keys), flow_mode=FlowMode.AUTO)
    assert index.report.order_preserved is False
    assert not index.use_flow
    assert index.report.collisions == 0


def test_empty_bulk_load(keys):
    index = nfl_bulkload([], [], _bypass(keys), flow_mode=FlowMode.ON)
    assert len(index) == 0
    assert index.key_span is None
    assert not index.use_flow
    assert index.report.tail_before is None
    batch = nfl_execute(index, RequestBatch(ops=[Operation.lookup(5.0), Operation.insert(5.0, 1), Operation.insert(-3.0, 2),
                                                 Operation.lookup(5.0), Operation.delete(7.0)]))
    assert batch.results == [OpResult(Outcome.MISSING), OpResult(Outcome.OK), OpResult(Outcome.OK), OpResult(Outcome.FOUND, 1),
                             OpResult(Outcome.NOT_FOUND)]


@pytest.mark.parametrize('mode, use_flow', [(FlowMode.ON, True), (FlowMode.AUTO, False), (FlowMode.OFF, False)])
def test_single_key_bulk_load(keys, mode, use_flow):
    index = nfl_bulkload([42.0], [7], _bypass(keys), flow_mode=mode)
    assert index.use_flow == use_flow
    assert index.report.tail_after is None
    assert index.lookup(42.0) == 7
    assert index.key_span == (42.0, 42.0)
    assert apply_operation(index, OpKind.INSERT, 43.0, 1).outcome == Outcome.OUT_OF_KEY_SPACE


def test_stats(keys):
    config = IndexConfig(bucket_cap=4)
    index = nfl_bulkload(keys, _payloads(keys), _bypass(keys), config=config, flow_mode=FlowMode.OFF)
    stats = index.stats()
    assert stats.key_count == keys.size
    assert stats.size_bytes > 0
    assert stats.max_height >= 1
    assert 2 <= stats.bucket_capacity <= 4
    assert index.report.keys == keys.size
    assert index.report.build_seconds >= 0.0


def test_entries_hold_original_keys(keys):
    index = nfl_bulkload(keys, _payloads(keys), _random_flow(keys), flow_mode=FlowMode.ON)
    root = index.index.root
    assert isinstance(root, ModelNode)
    data = np.flatnonzero(root.value_bits & ~root.pointer_bits)
    assert np.isin(root.keys[data], keys).all()
    assert index.index.lookup(float(keys[7]), placement=float(transform_keys(keys[7:8], index.flow)[0])) == 7
    index.index.audit()


@pytest.fixture(name='trained_lognormal', scope='module')
def fixture_trained_lognormal():
    keys = gen_dataset(DatasetSpec(kind=DatasetKind.LOGNORMAL, n=50_000, seed=12))
    return keys, train_flow(keys, FlowConfig())


def test_trained_flow_is_used_on_lognormal_keys(trained_lognormal):
    keys, flow = trained_lognormal
    index = nfl_bulkload(keys, _payloads(keys), flow, flow_mode=FlowMode.AUTO)
    assert index.report.order_preserved
    assert index.report.tail_after <= index.report.tail_before
    assert index.use_flow
    assert index.report.collisions == 0
    for position in range(0, keys.size, 101):
        assert index.lookup(float(keys[position])) == position
    index.index.audit()


@pytest.mark.slow
def test_trained_flow_reduces_the_tail_of_a_million_lognormal_keys():
    keys = gen_dataset(DatasetSpec(kind=DatasetKind.LOGNORMAL, n=1_000_000, seed=0))
    index = nfl_bulkload(keys, _payloads(keys), train_flow(keys, FlowConfig()), flow_mode=FlowMode.AUTO)
    assert index.report.order_preserved
    assert index.report.tail_after < index.report.tail_before
    assert index.report.tail_after <= 8
    assert index.use_flow


@pytest.fixture(name='million_keys', scope='module', params=[DatasetKind.LOGNORMAL, DatasetKind.UNIFORM])
def fixture_million_keys(request):
    keys = gen_dataset(DatasetSpec(kind=request.param, n=1_000_000, seed=3))
    return keys, train_flow(keys, FlowConfig())


@pytest.mark.slow
@pytest.mark.parametrize('mode', list(FlowMode))
@pytest.mark.parametrize('mix', list(WorkloadMix))
def test_million_keys_behave_like_reference_map(million_keys, mix, mode):
    keys, flow = million_keys
    workload = gen_ops(keys, WorkloadSpec(mix=mix, op_count=100_000, seed=4, update_fraction=0.05, delete_fraction=0.05))
    index = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, flow, flow_mode=mode)
    _differential(index, workload)
