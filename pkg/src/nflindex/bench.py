"""
Module containing the benchmark driver: loading phase, running phase, latency statistics and reports.

Latency is measured per batch around the execution call only. Percentiles follow the batch rule:
sort the batch latencies ascending, take the batch at the requested percentile (nearest rank) and
divide its latency by the batch size.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from nflindex.afli import Index, bulkload
from nflindex.config import BenchConfig, FlowConfig, IndexConfig
from nflindex.conflict import LinearModel, SwitchReport, conflict_degrees, conflict_summary, evaluate_switch, fit_linear, scaled_positions, \
    tail_of_keys
from nflindex.enums import Engine, FlowMode, OpKind
from nflindex.errors import VerificationError
from nflindex.json_util import ExtendedEncoder
from nflindex.keycodec import fit_codec
from nflindex.nfl import BulkLoadReport, NflIndex, nfl_bulkload, nfl_execute
from nflindex.numflow import FlowParams, bypass_params, initial_params, parameter_count, train_flow, transform_keys
from nflindex.operations import Operation, OpResult, RequestBatch, apply_operation
from nflindex.oracle import RefMap, ref_bulkload
from nflindex.util import monotonic_ns
from nflindex.workloads import Workload, WorkloadSpec, gen_ops

if TYPE_CHECKING:
    from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

LOG: logging.Logger = logging.getLogger("nflindex")

CSV_COLUMNS: Tuple[str, ...] = ('engine', 'workload', 'dataset', 'n', 'ops', 'flow_mode', 'use_flow', 'throughput_mops', 'p99_ns',
                                'p9999_ns', 'max_ns', 'bulk_transform_s', 'bulk_build_s', 'index_bytes', 'tail_before', 'tail_after', 'seed')
INSPECT_COLUMNS: Tuple[str, ...] = ('section', 'item', 'value')
SWEEP_BATCH_SIZES: Tuple[int, ...] = (1, 8, 32, 128, 256, 1024, 2048)
# hidden multiplier and layers of the architectures in the latency table
SWEEP_ARCHITECTURES: Tuple[Tuple[int, int], ...] = ((2, 2), (2, 4), (4, 3), (4, 4))


def batch_percentile_ns(batch_latencies_ns: Sequence[int], percentile: float, batch_sizes: Union[int, Sequence[int]]) -> float:
    """
    Per-operation latency of the batch at a percentile.

    Args:
        batch_latencies_ns (Sequence[int]): Latency of every batch in nanoseconds.
        percentile (float): Percentile in (0, 100].
        batch_sizes (Union[int, Sequence[int]]): Requests per batch, one size for all batches or one per batch.

    Returns:
        float: Latency of the nearest-rank batch divided by the number of requests it held, nan without samples.
    """
    if len(batch_latencies_ns) == 0:
        return float('nan')
    sizes: Sequence[int] = [batch_sizes] * len(batch_latencies_ns) if isinstance(batch_sizes, int) else batch_sizes
    ordered: List[Tuple[int, int]] = sorted(zip(batch_latencies_ns, sizes), key=lambda sample: sample[0])
    rank: int = min(max(math.ceil(percentile / 100.0 * len(ordered)), 1), len(ordered))
    latency, size = ordered[rank - 1]
    return latency / size


def results_digest(batches: Sequence[RequestBatch]) -> str:
    """
    Fingerprint of the results of all batches, equal for engines that behave identically.
    """
    digest = hashlib.sha256()
    for batch in batches:
        for result in batch.results:
            digest.update(f'{result.outcome.value}:{result.payload};'.encode('utf-8'))
    return digest.hexdigest()


class AfliEngine:
    """
    The bare after-flow learned index over the original keys.
    """

    def __init__(self, index: Index) -> None:
        self.index: Index = index

    def execute(self, batch: RequestBatch) -> RequestBatch:
        """
        Execute requests in order.
        """
        batch.results = [apply_operation(self.index, op.kind, op.key, op.payload) for op in batch.ops]
        return batch


@dataclass
class RunResult:  # pylint: disable=too-many-instance-attributes
    """
    Measurements of one run (loading phase plus running phase).
    """
    throughput_mops: float
    p99_ns: float
    p9999_ns: float
    max_ns: float
    batch_latencies_ns: List[int]
    batch_sizes: List[int]
    bulk: BulkLoadReport
    index_bytes: int
    key_count: int
    inserts: int
    results_digest: str

    @property
    def bytes_per_key(self) -> float:
        """Index size per stored key."""
        return self.index_bytes / self.key_count if self.key_count else float(self.index_bytes)


@dataclass
class BenchReport:
    """
    All runs of one benchmark invocation.
    """
    engine: Engine
    workload: str
    dataset: str
    n: int
    ops: int
    flow_mode: FlowMode
    batch_size: int
    seed: int
    runs: List[RunResult] = field(default_factory=list)

    def _mean(self, name: str) -> float:
        return float(np.mean([getattr(run, name) for run in self.runs])) if self.runs else float('nan')

    @property
    def throughput_mops(self) -> float:
        """Mean throughput over the runs."""
        return self._mean('throughput_mops')

    @property
    def p99_ns(self) -> float:
        """Mean P99 over the runs."""
        return self._mean('p99_ns')

    @property
    def p9999_ns(self) -> float:
        """Mean P99.99 over the runs."""
        return self._mean('p9999_ns')

    @property
    def max_ns(self) -> float:
        """Mean maximum over the runs."""
        return self._mean('max_ns')

    @property
    def use_flow(self) -> bool:
        """Flow decision of the first run, all runs decide the same."""
        return self.runs[0].bulk.use_flow if self.runs else False

    def rows(self) -> List[Dict[str, Any]]:
        """
        One CSV row per run.
        """
        rows: List[Dict[str, Any]] = []
        for run in self.runs:
            rows.append({'engine': self.engine.value, 'workload': self.workload, 'dataset': self.dataset, 'n': self.n, 'ops': self.ops,
                         'flow_mode': self.flow_mode.value, 'use_flow': run.bulk.use_flow, 'throughput_mops': run.throughput_mops,
                         'p99_ns': run.p99_ns, 'p9999_ns': run.p9999_ns, 'max_ns': run.max_ns,
                         'bulk_transform_s': run.bulk.transform_seconds, 'bulk_build_s': run.bulk.build_seconds,
                         'index_bytes': run.index_bytes, 'tail_before': '' if run.bulk.tail_before is None else run.bulk.tail_before,
                         'tail_after': '' if run.bulk.tail_after is None else run.bulk.tail_after, 'seed': self.seed})
        return rows

    def summary(self) -> Dict[str, Any]:
        """
        Means over the runs plus every run, for the JSON report.
        """
        return {'engine': self.engine, 'workload': self.workload, 'dataset': self.dataset, 'n': self.n, 'ops': self.ops,
                'flow_mode': self.flow_mode, 'use_flow': self.use_flow, 'batch_size': self.batch_size, 'seed': self.seed,
                'throughput_mops': self.throughput_mops, 'p99_ns': self.p99_ns, 'p9999_ns': self.p9999_ns, 'max_ns': self.max_ns,
                'runs': [{key: value for key, value in dataclasses.asdict(run).items() if key != 'batch_latencies_ns'}
                         | {'batch_latencies_ns': run.batch_latencies_ns, 'bytes_per_key': run.bytes_per_key} for run in self.runs]}

    def table(self) -> str:
        """
        Human readable summary.
        """
        lines: List[str] = [f'{self.engine} on {self.dataset} (n={self.n}), {self.workload}, {self.ops} ops, flow {self.flow_mode}, '
                            f'{len(self.runs)} run(s)']
        lines.append(f'  {"run":>4} {"Mops/s":>10} {"P99 ns":>10} {"P99.99 ns":>10} {"max ns":>10} {"transform s":>12} {"build s":>9} '
                     f'{"bytes":>12} {"B/key":>8} {"tail":>9} {"flow":>5}')
        for number, run in enumerate(self.runs, start=1):
            tails: str = f'{run.bulk.tail_before if run.bulk.tail_before is not None else "-"}->' \
                         f'{run.bulk.tail_after if run.bulk.tail_after is not None else "-"}'
            lines.append(f'  {number:>4} {run.throughput_mops:>10.3f} {run.p99_ns:>10.1f} {run.p9999_ns:>10.1f} {run.max_ns:>10.1f} '
                         f'{run.bulk.transform_seconds:>12.4f} {run.bulk.build_seconds:>9.4f} {run.index_bytes:>12} '
                         f'{run.bytes_per_key:>8.2f} {tails:>9} {"yes" if run.bulk.use_flow else "no":>5}')
        lines.append(f'  {"mean":>4} {self.throughput_mops:>10.3f} {self.p99_ns:>10.1f} {self.p9999_ns:>10.1f} {self.max_ns:>10.1f}')
        return '\n'.join(lines)


def write_csv(path: Union[str, os.PathLike], reports: Sequence[BenchReport]) -> None:
    """
    Write the runs of all reports; the header row is always present.
    """
    with open(path, 'w', newline='', encoding='utf-8') as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=list(CSV_COLUMNS))
        writer.writeheader()
        for report in reports:
            writer.writerows(report.rows())


def write_json(path: Union[str, os.PathLike], reports: Sequence[BenchReport]) -> None:
    """
    Write the summaries of all reports.
    """
    with open(path, 'w', encoding='utf-8') as json_file:
        json.dump([report.summary() for report in reports], json_file, cls=ExtendedEncoder, indent=2)


def prepare_flow(bulk_keys: np.ndarray, flow_config: FlowConfig, flow: Optional[FlowParams], flow_mode: FlowMode) -> FlowParams:
    """
    Flow for the loading phase: the given one, a bypass when the flow is off, or one trained on the bulk-loaded keys.
    """
    if flow is not None:
        return flow
    if flow_mode == FlowMode.OFF:
        return bypass_params(flow_config, fit_codec(bulk_keys, flow_config.theta, flow_config.dims))
    LOG.info('No flow given, training one on %d bulk-loaded keys', bulk_keys.size)
    return train_flow(bulk_keys, flow_config)


def _load(engine: Engine, workload: Workload, index_config: IndexConfig, flow: Optional[FlowParams],
          flow_mode: FlowMode) -> Tuple[Union[NflIndex, AfliEngine, RefMap], BulkLoadReport]:
    if engine == Engine.NFL:
        assert flow is not None
        nfl_index: NflIndex = nfl_bulkload(workload.bulk_keys, workload.bulk_payloads, flow, index_config, flow_mode)
        return nfl_index, nfl_index.report
    report = BulkLoadReport(keys=int(workload.bulk_keys.size), flow_mode=FlowMode.OFF)
    start: int = monotonic_ns()
    target: Union[AfliEngine, RefMap]
    if engine == Engine.AFLI:
        target = AfliEngine(bulkload(workload.bulk_keys, workload.bulk_payloads, index_config))
        report.tail_before = target.index.tail_degree
    else:
        target = ref_bulkload(workload.bulk_keys, workload.bulk_payloads)
        if workload.bulk_keys.size:
            report.tail_before = tail_of_keys(workload.bulk_keys, index_config.gamma, index_config.alpha)
    report.build_seconds = (monotonic_ns() - start) / 1e9
    return target, report


def _size_of(target: Union[NflIndex, AfliEngine, RefMap]) -> Tuple[int, int]:
    if isinstance(target, NflIndex):
        stats = target.stats()
        return stats.size_bytes, stats.key_count
    if isinstance(target, AfliEngine):
        stats = target.index.stats()
        return stats.size_bytes, stats.key_count
    # sorted key list plus payload per key
    return len(target) * 16, len(target)


def _audit(target: Union[NflIndex, AfliEngine, RefMap]) -> None:
    if isinstance(target, NflIndex):
        target.index.audit()
    elif isinstance(target, AfliEngine):
        target.index.audit()


def verify_against_reference(workload: Workload, batches: Sequence[RequestBatch]) -> None:
    """
    Replay the workload on the reference map and compare every result.

    Raises:
        VerificationError: If any result differs.
    """
    reference: RefMap = ref_bulkload(workload.bulk_keys, workload.bulk_payloads)
    mismatches: int = 0
    first: Optional[str] = None
    for batch in batches:
        expected: List[OpResult] = reference.execute(batch.fresh()).results
        for op, got, want in zip(batch.ops, batch.results, expected):
            if got != want:
                mismatches += 1
                if first is None:
                    first = f'{op.kind} {op.key}: got {got.outcome} {got.payload}, expected {want.outcome} {want.payload}'
    if mismatches:
        raise VerificationError(f'{mismatches} results differ from the reference map, first: {first}', mismatches=mismatches)
    LOG.info('All %d batches match the reference map', len(batches))


# pylint: disable-next=too-many-locals,too-many-arguments,too-many-positional-arguments
def run_once(workload: Workload, engine: Engine, index_config: IndexConfig, flow: Optional[FlowParams], flow_mode: FlowMode,
             warmup_fraction: float, verify: bool) -> RunResult:
    """
    One loading phase and one timed running phase.

    Args:
        workload (Workload): Bulk-load pairs and batches.
        engine (Engine): Engine to measure.
        index_config (IndexConfig): Index configuration.
        flow (Optional[FlowParams]): Flow for the nfl engine.
        flow_mode (FlowMode): Flow override for the nfl engine.
        warmup_fraction (float): Share of requests replayed as untimed lookups before timing.
        verify (bool): Compare all results with the reference map and audit the index afterwards.

    Returns:
        RunResult: Measurements.
    """
    target, bulk_report = _load(engine, workload, index_config, flow, flow_mode)
    batches: List[RequestBatch] = [batch.fresh() for batch in workload.batches]
    warmup_ops: List[Operation] = [Operation.lookup(op.key) for batch in batches for op in batch.ops][:int(workload.op_count * warmup_fraction)]
    if warmup_ops:
        _execute(target, RequestBatch(ops=warmup_ops))
    latencies: List[int] = []
    for batch in batches:
        start: int = monotonic_ns()
        _execute(target, batch)
        latencies.append(monotonic_ns() - start)
    total_ns: int = sum(latencies)
    ops: int = sum(len(batch) for batch in batches)
    index_bytes, key_count = _size_of(target)
    if verify:
        verify_against_reference(workload, batches)
        _audit(target)
    sizes: List[int] = [len(batch) for batch in batches]
    return RunResult(throughput_mops=(ops / (total_ns / 1e9) / 1e6) if total_ns else 0.0,
                     p99_ns=batch_percentile_ns(latencies, 99.0, sizes), p9999_ns=batch_percentile_ns(latencies, 99.99, sizes),
                     max_ns=batch_percentile_ns(latencies, 100.0, sizes), batch_latencies_ns=latencies, batch_sizes=sizes,
                     bulk=bulk_report, index_bytes=index_bytes, key_count=key_count,
                     inserts=sum(1 for batch in batches for op in batch.ops if op.kind == OpKind.INSERT),
                     results_digest=results_digest(batches))


def _execute(target: Union[NflIndex, AfliEngine, RefMap], batch: RequestBatch) -> RequestBatch:
    if isinstance(target, NflIndex):
        return nfl_execute(target, batch)
    return target.execute(batch)


def run_bench(keys: np.ndarray, config: BenchConfig, index_config: IndexConfig, flow_config: FlowConfig,
              flow: Optional[FlowParams] = None, dataset: str = 'keys') -> BenchReport:
    """
    Generate the workload and run it config.repeat times, each run on a freshly loaded index.

    Args:
        keys (np.ndarray): Sorted unique dataset.
        config (BenchConfig): Workload, engine and measurement settings.
        index_config (IndexConfig): Index configuration.
        flow_config (FlowConfig): Flow configuration used when no flow is given.
        flow (Optional[FlowParams]): Pre-trained flow.
        dataset (str): Dataset name for the report.

    Returns:
        BenchReport: All runs.

    Raises:
        VerificationError: If verification is on and a result differs from the reference map.
    """
    workload: Workload = gen_ops(keys, WorkloadSpec(mix=config.workload, bulk_fraction=config.bulk_fraction, op_count=config.ops,
                                                    zipf_s=config.zipf_s, seed=config.seed, batch_size=config.batch))
    run_flow: Optional[FlowParams] = flow
    if config.engine == Engine.NFL:
        run_flow = prepare_flow(workload.bulk_keys, flow_config, flow, config.flow_mode)
    report = BenchReport(engine=config.engine, workload=config.workload.value, dataset=dataset, n=int(np.asarray(keys).size),
                         ops=workload.op_count, flow_mode=config.flow_mode if config.engine == Engine.NFL else FlowMode.OFF,
                         batch_size=config.batch, seed=config.seed)
    for repeat in range(config.repeat):
        run: RunResult = run_once(workload, config.engine, index_config, run_flow, config.flow_mode, config.warmup_fraction,
                                  config.verify)
        LOG.info('Run %d/%d: %.3f Mops/s, P99 %.1f ns', repeat + 1, config.repeat, run.throughput_mops, run.p99_ns)
        report.runs.append(run)
    return report


def transform_latency_sweep(keys: np.ndarray, flow: FlowParams, batch_sizes: Sequence[int] = SWEEP_BATCH_SIZES,
                            sample: int = 8192) -> List[Tuple[int, float]]:
    """
    Per-key flow transform latency at several batch sizes.

    Args:
        keys (np.ndarray): Keys to transform; a prefix of sample keys is used.
        flow (FlowParams): Flow to measure.
        batch_sizes (Sequence[int]): Batch sizes.
        sample (int): Number of keys transformed per batch size.

    Returns:
        List[Tuple[int, float]]: (batch size, nanoseconds per key).
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    if key_array.size < sample:
        key_array = np.resize(key_array, sample)
    key_array = key_array[:sample]
    results: List[Tuple[int, float]] = []
    for batch_size in batch_sizes:
        sized = FlowParams(config=dataclasses.replace(flow.config, batch_size=batch_size), codec=flow.codec, weights=flow.weights,
                           biases=flow.biases, bypass=flow.bypass)
        transform_keys(key_array[:batch_size], sized)
        start: int = monotonic_ns()
        transform_keys(key_array, sized)
        results.append((batch_size, (monotonic_ns() - start) / key_array.size))
    return results


def architecture_sweep(keys: np.ndarray, flow_config: FlowConfig, batch_sizes: Sequence[int] = SWEEP_BATCH_SIZES,
                       sample: int = 8192) -> List[Tuple[str, int, List[Tuple[int, float]]]]:
    """
    Transform latency of the architectures of the latency table. Latency does not depend on trained values,
    so every architecture is measured with its seeded initialization.

    Returns:
        List[Tuple[str, int, List[Tuple[int, float]]]]: (name like 2H2L, parameter count, sweep).
    """
    codec = fit_codec(keys, flow_config.theta, flow_config.dims)
    results: List[Tuple[str, int, List[Tuple[int, float]]]] = []
    for hidden_mult, layers in SWEEP_ARCHITECTURES:
        config: FlowConfig = dataclasses.replace(flow_config, hidden_mult=hidden_mult, layers=layers)
        results.append((f'{hidden_mult}H{layers}L', parameter_count(config),
                        transform_latency_sweep(keys, initial_params(config, codec), batch_sizes, sample)))
    return results


@dataclass
class InspectReport:
    """
    Rows of the inspect command. Every row is (section, item, value).
    """
    rows: List[Tuple[str, str, Any]] = field(default_factory=list)

    def add(self, section: str, item: str, value: Any) -> None:
        """Append one row."""
        self.rows.append((section, item, value))

    def table(self) -> str:
        """
        Human readable dump grouped by section.
        """
        lines: List[str] = []
        section: Optional[str] = None
        for row_section, item, value in self.rows:
            if row_section != section:
                section = row_section
                lines.append(f'{section}:')
            lines.append(f'  {item:<28} {value:.4f}' if isinstance(value, float) else f'  {item:<28} {value}')
        return '\n'.join(lines)

    def write_csv(self, path: Union[str, os.PathLike]) -> None:
        """
        Write all rows below the header row.
        """
        with open(path, 'w', newline='', encoding='utf-8') as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(INSPECT_COLUMNS)
            writer.writerows(self.rows)


def _add_summary(report: InspectReport, section: str, keys: np.ndarray, index_config: IndexConfig) -> None:
    model: LinearModel = fit_linear(keys, scaled_positions(keys.size, index_config.alpha))
    for item, value in conflict_summary(conflict_degrees(keys, model), index_config.gamma).as_dict().items():
        report.add(section, item, value)


# pylint: disable-next=too-many-arguments,too-many-positional-arguments
def inspect_keys(keys: np.ndarray, flow: FlowParams, index_config: IndexConfig, bulk: bool = False,
                 architectures: bool = False, sample: int = 8192) -> InspectReport:
    """
    Conflict figures before and after the flow, transform latencies and optionally index statistics.

    Args:
        keys (np.ndarray): Sorted unique keys, at least two.
        flow (FlowParams): Flow to inspect.
        index_config (IndexConfig): Alpha and gamma of the conflict figures, index configuration for the bulk load.
        bulk (bool): Also bulk load the keys and report index statistics.
        architectures (bool): Also sweep the architectures of the latency table.
        sample (int): Keys transformed per batch size.

    Returns:
        InspectReport: The rows.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    report = InspectReport()
    for item, value in flow.codec.as_dict().items():
        report.add('codec', item, value)
    _add_summary(report, 'original', key_array, index_config)
    transformed: np.ndarray = transform_keys(key_array, flow)
    _add_summary(report, 'transformed', np.sort(transformed), index_config)
    switch: SwitchReport = evaluate_switch(key_array, transformed, index_config.gamma, index_config.alpha)
    report.add('switch', 'use_flow', switch.use_flow)
    report.add('switch', 'order_preserved', switch.order_preserved)
    report.add('flow', 'parameters', parameter_count(flow.config))
    for batch_size, latency in transform_latency_sweep(key_array, flow, sample=sample):
        report.add('flow', f'ns_per_key_batch_{batch_size}', latency)
    if architectures:
        for name, parameters, sweep in architecture_sweep(key_array, flow.config, sample=sample):
            report.add(f'architecture {name}', 'parameters', parameters)
            for batch_size, latency in sweep:
                report.add(f'architecture {name}', f'ns_per_key_batch_{batch_size}', latency)
    if bulk:
        nfl_index: NflIndex = nfl_bulkload(key_array, np.arange(key_array.size, dtype=np.int64), flow, index_config)
        stats = nfl_index.stats()
        report.add('index', 'use_flow', nfl_index.use_flow)
        report.add('index', 'keys', stats.key_count)
        for kind, count in stats.node_counts.items():
            report.add('index', f'{kind}_nodes', count)
        report.add('index', 'max_height', stats.max_height)
        report.add('index', 'avg_height', stats.avg_height)
        report.add('index', 'size_bytes', stats.size_bytes)
        report.add('index', 'bytes_per_key', stats.bytes_per_key)
        report.add('index', 'tail_degree', stats.tail_degree)
        report.add('index', 'bucket_capacity', stats.bucket_capacity)
    return report
