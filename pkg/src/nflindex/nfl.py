"""
Module containing the two-stage index: the numerical flow in front of the after-flow learned index.

Requests are processed in batches. The keys of a batch are transformed in one flow call (when the
flow is in use) and the operations are then dispatched to the index in program order. The index
stores the original keys and uses the transformed ones only to place them.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import functools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from nflindex.afli import Index, IndexStats, bulkload, prepare_pairs
from nflindex.config import IndexConfig
from nflindex.conflict import SwitchReport, evaluate_switch, tail_of_keys
from nflindex.enums import FlowMode, OpKind, Outcome
from nflindex.errors import AlreadyExists, NotFound, OutOfKeySpace, IndexOperationError
from nflindex.numflow import FlowParams, transform_keys
from nflindex.operations import Operation, OpResult, RequestBatch, apply_operation

if TYPE_CHECKING:
    from typing import Optional, Sequence, Tuple

LOG: logging.Logger = logging.getLogger("nflindex")


@dataclass
class BulkLoadReport:  # pylint: disable=too-many-instance-attributes
    """
    Timings and decisions of one bulk load.

    Attributes:
        keys (int): Number of bulk-loaded keys.
        flow_mode (FlowMode): Requested flow mode.
        use_flow (bool): Whether the index routes keys by their transformed value.
        transform_seconds (float): Time spent transforming the bulk-loaded keys.
        build_seconds (float): Time spent building the index.
        tail_before (Optional[int]): Tail conflict degree of the original keys.
        tail_after (Optional[int]): Tail conflict degree of the transformed keys, None if they were not transformed.
        order_preserved (Optional[bool]): Whether the transformed keys kept the original order.
        collisions (int): Bulk-loaded keys whose transformed key was taken already.
    """
    keys: int = 0
    flow_mode: FlowMode = FlowMode.AUTO
    use_flow: bool = False
    transform_seconds: float = 0.0
    build_seconds: float = 0.0
    tail_before: Optional[int] = None
    tail_after: Optional[int] = None
    order_preserved: Optional[bool] = None
    collisions: int = 0


class _Routed:
    """
    One request's view of the index with the placement of its key computed already.
    """

    def __init__(self, index: Index, placement: float) -> None:
        self.index: Index = index
        self.placement: float = placement

    def lookup(self, key: float) -> Optional[int]:
        return self.index.lookup(key, self.placement)

    def insert(self, key: float, payload: int) -> None:
        self.index.insert(key, payload, self.placement)

    def update(self, key: float, payload: int) -> None:
        self.index.update(key, payload, self.placement)

    def delete(self, key: float) -> None:
        self.index.delete(key, self.placement)


@dataclass
class NflIndex:
    """
    Flow plus after-flow learned index.

    Attributes:
        flow (FlowParams): Flow (possibly the bypass) used for every key, frozen at bulk load.
        use_flow (bool): Whether the index routes keys by their transformed value. Entries always hold the keys.
        index (Index): The after-flow learned index.
        config (IndexConfig): Index configuration.
        report (BulkLoadReport): What happened during the bulk load.
        key_span (Optional[Tuple[float, float]]): Smallest and largest bulk-loaded original key.
    """
    flow: FlowParams
    use_flow: bool
    index: Index
    config: IndexConfig
    report: BulkLoadReport = field(default_factory=BulkLoadReport)
    key_span: Optional[Tuple[float, float]] = None

    def __len__(self) -> int:
        return len(self.index)

    def transform(self, keys: Sequence[float]) -> np.ndarray:
        """
        Placements the index routes the keys by, the keys themselves when the flow is not in use.
        """
        key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
        if not self.use_flow:
            return key_array
        return transform_keys(key_array, self.flow)

    def _apply(self, op: Operation, transformed: float) -> OpResult:
        if op.kind == OpKind.INSERT and self.key_span is not None and not self.key_span[0] <= op.key <= self.key_span[1]:
            return OpResult(Outcome.OUT_OF_KEY_SPACE)
        if not self.use_flow:
            return apply_operation(self.index, op.kind, op.key, op.payload)
        return apply_operation(_Routed(self.index, transformed), op.kind, op.key, op.payload)

    def execute(self, batch: RequestBatch) -> RequestBatch:
        """
        See nfl_execute.
        """
        return nfl_execute(self, batch)

    def _single(self, op: Operation) -> OpResult:
        return self._apply(op, float(self.transform([op.key])[0]) if self.use_flow else op.key)

    def lookup(self, key: float) -> Optional[int]:
        """
        Payload of key or None.
        """
        return self._single(Operation.lookup(key)).payload

    def insert(self, key: float, payload: int) -> None:
        """
        Insert a new pair.

        Raises:
            AlreadyExists: If key is stored already.
            OutOfKeySpace: If key lies outside the bulk-loaded key span.
        """
        _raise_for(self._single(Operation.insert(key, payload)), key)

    def update(self, key: float, payload: int) -> None:
        """
        Overwrite the payload of a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        _raise_for(self._single(Operation.update(key, payload)), key)

    def delete(self, key: float) -> None:
        """
        Remove a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        _raise_for(self._single(Operation.delete(key)), key)

    def stats(self) -> IndexStats:
        """
        Statistics of the underlying index.
        """
        return self.index.stats()


def _raise_for(result: OpResult, key: float) -> None:
    if result.outcome == Outcome.ALREADY_EXISTS:
        raise AlreadyExists(f'Key {key} already exists')
    if result.outcome == Outcome.NOT_FOUND:
        raise NotFound(f'Key {key} not found')
    if result.outcome == Outcome.OUT_OF_KEY_SPACE:
        raise OutOfKeySpace(f'Key {key} is outside the bulk-loaded key span')
    if result.outcome == Outcome.ERROR:
        raise IndexOperationError(f'Operation on key {key} failed')


# pylint: disable-next=too-many-locals
def nfl_bulkload(keys: Sequence[float], payloads: Sequence[int], flow: FlowParams, config: Optional[IndexConfig] = None,
                 flow_mode: FlowMode = FlowMode.AUTO) -> NflIndex:
    """
    Transform the keys, decide whether to use the flow and build the index.

    Args:
        keys (Sequence[float]): Unique keys, ascending.
        payloads (Sequence[int]): Aligned payloads.
        flow (FlowParams): Trained flow or bypass.
        config (Optional[IndexConfig]): Index configuration, defaults when None.
        flow_mode (FlowMode): auto applies the switching check, on and off force the decision.

    Returns:
        NflIndex: The loaded index.

    Raises:
        DuplicateKey: If a key appears more than once.
    """
    index_config: IndexConfig = config if config is not None else IndexConfig()
    key_array, payload_array = prepare_pairs(keys, payloads)
    n: int = int(key_array.size)
    report = BulkLoadReport(keys=n, flow_mode=flow_mode)
    key_span: Optional[Tuple[float, float]] = (float(key_array[0]), float(key_array[-1])) if n else None
    if n:
        report.tail_before = tail_of_keys(key_array, index_config.gamma, index_config.alpha)

    transformed: Optional[np.ndarray] = None
    if flow_mode != FlowMode.OFF and n:
        start: float = time.perf_counter()
        transformed = transform_keys(key_array, flow)
        report.transform_seconds = time.perf_counter() - start
        if n >= 2:
            switch: SwitchReport = evaluate_switch(key_array, transformed, index_config.gamma, index_config.alpha)
            report.tail_after = switch.tail_after
            report.order_preserved = switch.order_preserved
            report.use_flow = switch.use_flow if flow_mode == FlowMode.AUTO else True
        else:
            report.use_flow = flow_mode == FlowMode.ON

    start = time.perf_counter()
    if report.use_flow and transformed is not None:
        index: Index = bulkload(key_array, payload_array, index_config, placement=functools.partial(transform_keys, params=flow),
                                placements=transformed)
        report.collisions = n - int(np.unique(transformed).size)
        if report.collisions:
            LOG.warning('%d bulk-loaded keys share their transformed key with another key', report.collisions)
    else:
        index = bulkload(key_array, payload_array, index_config)
    index.enforce_key_space = False
    report.build_seconds = time.perf_counter() - start
    LOG.info('Bulk loaded %d keys (flow %s, %s): transform %.3fs, build %.3fs', n, flow_mode,
             'in use' if report.use_flow else 'not in use', report.transform_seconds, report.build_seconds)
    return NflIndex(flow=flow, use_flow=report.use_flow, index=index, config=index_config, report=report, key_span=key_span)


def nfl_execute(index: NflIndex, batch: RequestBatch) -> RequestBatch:
    """
    Execute a batch of requests.

    All keys are transformed in one flow call, then every request is applied in order. Failures of
    single requests are recorded in their results and never abort the batch.

    Args:
        index (NflIndex): Index to operate on.
        batch (RequestBatch): Requests.

    Returns:
        RequestBatch: The same batch with results aligned to its requests.
    """
    keys: np.ndarray = batch.keys()
    transformed: np.ndarray = index.transform(keys) if index.use_flow else keys
    batch.results = [index._apply(op, float(transformed[i])) for i, op in enumerate(batch.ops)]  # pylint: disable=protected-access
    return batch
