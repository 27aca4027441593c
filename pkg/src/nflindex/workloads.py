"""
Module containing dataset generation, key files and request streams.

Datasets are sorted arrays of unique float keys. A workload splits a dataset into a bulk-loaded half
and a reserve of insert keys that lies inside the bulk-loaded key span, and produces batches of
requests whose read targets follow a Zipf distribution over the keys loaded so far.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from nflindex.enums import DatasetKind, OpKind, WorkloadMix
from nflindex.errors import ConfigurationError, FileFormatError, InsufficientUnique, ExhaustedInserts
from nflindex.operations import Operation, RequestBatch

if TYPE_CHECKING:
    from typing import List, Optional, Iterator, Union, Callable

LOG: logging.Logger = logging.getLogger("nflindex")

LOGNORMAL_SIGMA: float = 2.0
LOGNORMAL_SCALE: float = 1e9
MAX_DRAW_ROUNDS: int = 64
LONGITUDE_CLUSTERS: int = 12
PAYLOAD_LIMIT: int = 2 ** 62


@dataclass(frozen=True)
class DatasetSpec:
    """
    Description of a key set.

    Attributes:
        kind (DatasetKind): Generator or file.
        n (int): Number of keys; for files 0 keeps all keys.
        seed (int): Generator seed.
        path (Optional[str]): Key file for the file kind.
        low (float): Lower end of the uniform kind.
        high (float): Upper end of the uniform kind.
        header (Optional[bool]): Force reading a key file with or without count header, None detects it.
    """
    kind: DatasetKind
    n: int
    seed: int = 0
    path: Optional[str] = None
    low: float = 0.0
    high: float = 1e12
    header: Optional[bool] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, DatasetKind):
            try:
                object.__setattr__(self, 'kind', DatasetKind(self.kind))
            except ValueError:
                raise ConfigurationError(f'Invalid dataset kind \'{self.kind}\'. Must be one of {[x.value for x in DatasetKind]}') from None
        if self.kind == DatasetKind.FILE:
            if self.path is None:
                raise ConfigurationError('Dataset kind file needs a path')
            if self.n < 0:
                raise ConfigurationError(f'Invalid dataset size {self.n}')
        elif self.n < 2:
            raise ConfigurationError(f'Datasets need at least 2 keys (got {self.n})')
        if not self.high > self.low:
            raise ConfigurationError(f'Invalid uniform span [{self.low}, {self.high})')


@dataclass(frozen=True)
class WorkloadSpec:  # pylint: disable=too-many-instance-attributes
    """
    Description of a request stream.

    Attributes:
        mix (WorkloadMix): Read/insert ratio.
        bulk_fraction (float): Fraction of the dataset that is bulk loaded.
        op_count (int): Number of requests.
        zipf_s (float): Zipf skew of read targets, 0 is uniform.
        seed (int): Generator seed.
        batch_size (int): Requests per batch.
        update_fraction (float): Fraction of requests turned from reads into updates.
        delete_fraction (float): Fraction of requests turned from reads into deletes.
    """
    mix: WorkloadMix = WorkloadMix.READ_HEAVY
    bulk_fraction: float = 0.5
    op_count: int = 100_000
    zipf_s: float = 0.99
    seed: int = 0
    batch_size: int = 256
    update_fraction: float = 0.0
    delete_fraction: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.mix, WorkloadMix):
            try:
                object.__setattr__(self, 'mix', WorkloadMix(self.mix))
            except ValueError:
                raise ConfigurationError(f'Invalid workload \'{self.mix}\'. Must be one of {[x.value for x in WorkloadMix]}') from None
        if not 0.0 < self.bulk_fraction < 1.0:
            raise ConfigurationError(f'bulk_fraction must be in (0, 1) (got {self.bulk_fraction})')
        if self.op_count < 0 or self.batch_size < 1 or self.zipf_s < 0:
            raise ConfigurationError('op_count and zipf_s must be >= 0 and batch_size >= 1')
        if self.update_fraction < 0 or self.delete_fraction < 0 or self.update_fraction + self.delete_fraction > self.mix.read_ratio:
            raise ConfigurationError(f'Update and delete fractions must be >= 0 and fit into the read share of {self.mix}')


@dataclass
class Workload:
    """
    Bulk-load pairs and the request batches of the running phase.
    """
    bulk_keys: np.ndarray
    bulk_payloads: np.ndarray
    batches: List[RequestBatch] = field(default_factory=list)

    def __iter__(self) -> Iterator[RequestBatch]:
        return iter(self.batches)

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def op_count(self) -> int:
        """Number of requests over all batches."""
        return sum(len(batch) for batch in self.batches)


def _unique_keys(draw: Callable[[np.random.Generator, int], np.ndarray], n: int, rng: np.random.Generator, what: str) -> np.ndarray:
    """
    Draw until n unique finite keys are collected, then keep a seeded subset of exactly n.
    """
    collected: np.ndarray = np.empty(0, dtype=np.float64)
    for round_number in range(MAX_DRAW_ROUNDS):
        missing: int = n - collected.size
        fresh: np.ndarray = draw(rng, max(missing + missing // 10, 16))
        collected = np.unique(np.concatenate([collected, fresh[np.isfinite(fresh)]]))
        if collected.size >= n:
            break
        LOG.debug('%s: %d of %d unique keys after round %d', what, collected.size, n, round_number + 1)
    else:
        raise InsufficientUnique(f'Could not draw {n} unique {what} keys in {MAX_DRAW_ROUNDS} rounds (got {collected.size})')
    if collected.size > n:
        collected = np.sort(collected[rng.choice(collected.size, size=n, replace=False)])
    return collected


def _lognormal(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.floor(rng.lognormal(mean=0.0, sigma=LOGNORMAL_SIGMA, size=size) * LOGNORMAL_SCALE)


def longlat_key(longitude: Union[float, np.ndarray], latitude: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Combine a coordinate into one key: 180 * floor(longitude) + latitude.
    """
    return 180.0 * np.floor(longitude) + latitude


def _longlat(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.asarray(longlat_key(rng.uniform(-180.0, 180.0, size=size), rng.uniform(-90.0, 90.0, size=size)), dtype=np.float64)


def _longitudes(seed: int) -> Callable[[np.random.Generator, int], np.ndarray]:
    # cluster layout is part of the dataset, fixed per seed
    layout: np.random.Generator = np.random.default_rng([seed, 2])
    centers: np.ndarray = layout.uniform(-180.0, 180.0, size=LONGITUDE_CLUSTERS)
    widths: np.ndarray = layout.uniform(0.5, 15.0, size=LONGITUDE_CLUSTERS)
    weights: np.ndarray = layout.dirichlet(np.ones(LONGITUDE_CLUSTERS))

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        cluster: np.ndarray = rng.choice(LONGITUDE_CLUSTERS, size=size, p=weights)
        values: np.ndarray = rng.normal(centers[cluster], widths[cluster])
        return values[(values >= -180.0) & (values < 180.0)]
    return draw


def gen_dataset(spec: DatasetSpec) -> np.ndarray:
    """
    Produce a sorted array of unique keys.

    Args:
        spec (DatasetSpec): What to produce.

    Returns:
        np.ndarray: Sorted unique float64 keys, deterministic per seed.

    Raises:
        InsufficientUnique: If not enough unique keys can be drawn or the file holds too few.
        FileFormatError: If the key file is malformed.
    """
    rng: np.random.Generator = np.random.default_rng(spec.seed)
    if spec.kind == DatasetKind.LOGNORMAL:
        return _unique_keys(_lognormal, spec.n, rng, 'lognormal')
    if spec.kind == DatasetKind.LONGLAT:
        return _unique_keys(_longlat, spec.n, rng, 'longlat')
    if spec.kind == DatasetKind.LONGITUDES:
        return _unique_keys(_longitudes(spec.seed), spec.n, rng, 'longitudes')
    if spec.kind == DatasetKind.UNIFORM:
        return _unique_keys(lambda generator, size: generator.uniform(spec.low, spec.high, size=size), spec.n, rng, 'uniform')
    assert spec.path is not None
    keys: np.ndarray = np.unique(load_keys(spec.path, spec.header))
    if spec.n == 0 or spec.n == keys.size:
        return keys
    if keys.size < spec.n:
        raise InsufficientUnique(f'Key file {spec.path} holds {keys.size} unique keys, {spec.n} requested')
    return np.sort(keys[rng.choice(keys.size, size=spec.n, replace=False)])


def save_keys(path: Union[str, os.PathLike], keys: np.ndarray, header: bool = True) -> None:
    """
    Write keys as little-endian float64 values, optionally after a little-endian u64 count.

    Args:
        path (Union[str, os.PathLike]): Target file.
        keys (np.ndarray): Keys to write.
        header (bool): Write the count header.
    """
    key_array: np.ndarray = np.asarray(keys, dtype='<f8')
    with open(path, 'wb') as key_file:
        if header:
            key_file.write(np.asarray([key_array.size], dtype='<u8').tobytes())
        key_file.write(key_array.tobytes())


def load_keys(path: Union[str, os.PathLike], header: Optional[bool] = None) -> np.ndarray:
    """
    Read a key file.

    Args:
        path (Union[str, os.PathLike]): Key file.
        header (Optional[bool]): True or False forces reading with or without count header; None detects
            a header when the first u64 matches the number of values that follow.

    Returns:
        np.ndarray: Keys in file order.

    Raises:
        FileFormatError: If the length or the header does not fit, or a key is not finite.
    """
    with open(path, 'rb') as key_file:
        data: bytes = key_file.read()
    if len(data) % 8 != 0:
        raise FileFormatError(f'Key file {path} has {len(data)} bytes, not a multiple of 8')
    if header is None:
        header = len(data) >= 8 and int(np.frombuffer(data[:8], dtype='<u8')[0]) * 8 == len(data) - 8
    if header:
        if len(data) < 8:
            raise FileFormatError(f'Key file {path} is too short for a count header')
        count: int = int(np.frombuffer(data[:8], dtype='<u8')[0])
        if count * 8 != len(data) - 8:
            raise FileFormatError(f'Key file {path} announces {count} keys but holds {(len(data) - 8) // 8}')
        data = data[8:]
    keys: np.ndarray = np.frombuffer(data, dtype='<f8').astype(np.float64)
    if not np.all(np.isfinite(keys)):
        raise FileFormatError(f'Key file {path} contains values that are not finite')
    return keys


def zipf_probabilities(m: int, s: float) -> np.ndarray:
    """
    Probability of every rank 1..m under Zipf(s): proportional to 1 / rank^s.
    """
    weights: np.ndarray = 1.0 / np.power(np.arange(1, m + 1, dtype=np.float64), s)
    return weights / weights.sum()


def zipf_ranks(rng: np.random.Generator, cumulative: np.ndarray, population: np.ndarray) -> np.ndarray:
    """
    Draw one 0-based rank per entry of population, each from the first population[i] ranks.

    Args:
        rng (np.random.Generator): Random source.
        cumulative (np.ndarray): Cumulative Zipf weights of ranks 1..N.
        population (np.ndarray): Number of ranks eligible for each draw, >= 1.

    Returns:
        np.ndarray: Ranks.
    """
    limits: np.ndarray = cumulative[population - 1]
    ranks: np.ndarray = np.searchsorted(cumulative, rng.random(population.size) * limits, side='right')
    return np.minimum(ranks, population - 1)


def zipf_sample(rng: np.random.Generator, m: int, s: float, size: int) -> np.ndarray:
    """
    Draw 0-based ranks of m items under Zipf(s).
    """
    cumulative: np.ndarray = np.cumsum(1.0 / np.power(np.arange(1, m + 1, dtype=np.float64), s))
    return zipf_ranks(rng, cumulative, np.full(size, m, dtype=np.int64))


def split_bulk(n: int, bulk_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """
    Seeded permutation of 0..n-1 whose first floor(bulk_fraction * n) entries form the bulk-load set.

    The smallest and the largest key are moved into the bulk-load set, so every remaining key lies
    inside the bulk-loaded key span.
    """
    order: np.ndarray = rng.permutation(n)
    bulk_count: int = max(2, int(bulk_fraction * n))
    for front, extreme in enumerate((0, n - 1)):
        at: int = int(np.flatnonzero(order == extreme)[0])
        if at >= bulk_count:
            swap: int = front if order[front] not in (0, n - 1) else 1 - front
            order[at], order[swap] = order[swap], order[at]
    return order


# pylint: disable-next=too-many-locals
def gen_ops(keys: np.ndarray, spec: WorkloadSpec) -> Workload:
    """
    Split a dataset into bulk-load pairs and request batches.

    Read targets are drawn with Zipf(s) over the keys loaded so far, ranked by the order in which
    they were loaded (bulk-load set in shuffled order, then inserted keys). Insert keys are taken
    without replacement from the keys that were not bulk loaded. Payloads are the positions of the
    keys in the dataset.

    Args:
        keys (np.ndarray): Sorted unique dataset.
        spec (WorkloadSpec): Mix, sizes and seed.

    Returns:
        Workload: Sorted bulk-load pairs and the batches.

    Raises:
        ExhaustedInserts: If more inserts are requested than keys are left.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    n: int = int(key_array.size)
    rng: np.random.Generator = np.random.default_rng(spec.seed)
    order: np.ndarray = split_bulk(n, spec.bulk_fraction, rng)
    bulk_count: int = max(2, int(spec.bulk_fraction * n))
    bulk_positions: np.ndarray = np.sort(order[:bulk_count])

    insert_count: int = int(round(spec.op_count * (1.0 - spec.mix.read_ratio)))
    update_count: int = int(round(spec.op_count * spec.update_fraction))
    delete_count: int = int(round(spec.op_count * spec.delete_fraction))
    if insert_count > n - bulk_count:
        raise ExhaustedInserts(f'{insert_count} inserts requested but only {n - bulk_count} keys are not bulk loaded')
    read_count: int = spec.op_count - insert_count - update_count - delete_count
    kinds: np.ndarray = np.concatenate([np.full(read_count, 0), np.full(insert_count, 1), np.full(update_count, 2),
                                        np.full(delete_count, 3)]).astype(np.int8)
    kinds = kinds[rng.permutation(kinds.size)]

    is_insert: np.ndarray = kinds == 1
    loaded_before: np.ndarray = bulk_count + np.cumsum(is_insert) - is_insert
    cumulative: np.ndarray = np.cumsum(1.0 / np.power(np.arange(1, bulk_count + insert_count + 1, dtype=np.float64), spec.zipf_s))
    targets: np.ndarray = np.empty(kinds.size, dtype=np.int64)
    targets[is_insert] = order[bulk_count:bulk_count + insert_count]
    drawn: np.ndarray = ~is_insert
    targets[drawn] = order[zipf_ranks(rng, cumulative, loaded_before[drawn])]
    update_payloads: np.ndarray = rng.integers(0, PAYLOAD_LIMIT, size=kinds.size)

    operations: List[Operation] = []
    for kind, target, new_payload in zip(kinds.tolist(), targets.tolist(), update_payloads.tolist()):
        key: float = float(key_array[target])
        if kind == 0:
            operations.append(Operation(OpKind.LOOKUP, key))
        elif kind == 1:
            operations.append(Operation(OpKind.INSERT, key, int(target)))
        elif kind == 2:
            operations.append(Operation(OpKind.UPDATE, key, int(new_payload)))
        else:
            operations.append(Operation(OpKind.DELETE, key))
    batches: List[RequestBatch] = [RequestBatch(ops=operations[begin:begin + spec.batch_size])
                                   for begin in range(0, len(operations), spec.batch_size)]
    LOG.debug('Workload %s: %d bulk-loaded keys, %d requests in %d batches', spec.mix, bulk_count, len(operations), len(batches))
    return Workload(bulk_keys=key_array[bulk_positions], bulk_payloads=bulk_positions.astype(np.int64), batches=batches)
