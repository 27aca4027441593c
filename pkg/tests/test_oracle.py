"""Tests for the reference ordered map."""
import pytest

from nflindex.enums import Outcome
from nflindex.errors import AlreadyExists, DuplicateKey, NotFound
from nflindex.operations import Operation, OpResult, RequestBatch
from nflindex.oracle import RefMap, ref_bulkload, ref_delete, ref_insert, ref_lookup, ref_update


def test_insert_lookup_delete():
    ref = RefMap()
    ref_insert(ref, 2.0, 20)
    ref_insert(ref, 1.0, 10)
    assert ref_lookup(ref, 2.0) == 20
    assert ref.keys == [1.0, 2.0]
    ref_update(ref, 2.0, 21)
    assert ref_lookup(ref, 2.0) == 21
    ref_delete(ref, 2.0)
    assert ref_lookup(ref, 2.0) is None
    assert len(ref) == 1
    assert 1.0 in ref


def test_errors():
    ref = ref_bulkload([1.0, 3.0], [10, 30])
    with pytest.raises(AlreadyExists):
        ref_insert(ref, 1.0, 11)
    with pytest.raises(NotFound):
        ref_update(ref, 2.0, 1)
    with pytest.raises(NotFound):
        ref_delete(ref, 2.0)
    with pytest.raises(DuplicateKey):
        ref_bulkload([1.0, 1.0], [1, 2])


def test_bulkload_sorts():
    ref = ref_bulkload([3.0, 1.0, 2.0], [30, 10, 20])
    assert ref.keys == [1.0, 2.0, 3.0]
    assert ref_lookup(ref, 1.0) == 10


def test_execute_records_outcomes():
    ref = ref_bulkload([1.0, 2.0], [10, 20])
    batch = ref.execute(RequestBatch(ops=[Operation.lookup(1.0), Operation.insert(1.0, 5), Operation.insert(1.5, 15),
                                          Operation.update(9.0, 1), Operation.delete(2.0), Operation.lookup(2.0)]))
    assert batch.results == [OpResult(Outcome.FOUND, 10), OpResult(Outcome.ALREADY_EXISTS), OpResult(Outcome.OK),
                             OpResult(Outcome.NOT_FOUND), OpResult(Outcome.OK), OpResult(Outcome.MISSING)]
    assert [result.ok for result in batch.results] == [True, False, True, False, True, True]
    assert batch.fresh().results == []
