"""
Module containing the after-flow learned index.

The index is a tree of three node kinds:

* model nodes: a linear model and an array of entries. Every key is stored exactly at the position
  its model predicts for the key's placement (clamped to the array), so lookups never search inside a
  model node. The placement is the key itself unless the index routes by a placement function.
  Each entry is one of four kinds, encoded by two bitmaps:

      value bit | pointer bit | entry
      ----------+-------------+-------------------------------
          0     |      0      | empty slot
          1     |      0      | key/payload pair
          0     |      1      | link to a bucket
          1     |      1      | link to a child node

  Consecutive entries may link the same child ("duplicated" links); the child then holds exactly
  the keys predicted into that run of entries.
* buckets: a short array of pairs that share one predicted position.
* dense nodes: an ordered array with gaps for keys a linear model cannot tell apart. A gap holds
  a copy of the closest real element in front of it, so the array stays non-decreasing and the
  first occurrence of a key is always the real element.

The index is single-writer and has no internal synchronization.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import bisect
import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from nflindex.config import IndexConfig
from nflindex.conflict import LinearModel, fit_linear, scaled_positions, tail_of_keys
from nflindex.enums import BucketMode
from nflindex.errors import IndexOperationError, DuplicateKey, AlreadyExists, NotFound, OutOfKeySpace, DepthExceeded, IndexAuditError

if TYPE_CHECKING:
    from typing import Callable, Dict, List, Optional, Tuple, Union, Iterator, Sequence

    Node = Union['ModelNode', 'DenseNode']
    Placement = Callable[[np.ndarray], np.ndarray]

LOG: logging.Logger = logging.getLogger("nflindex")

# size accounting, in bytes
KEY_BYTES: int = 8
PAYLOAD_BYTES: int = 8
POINTER_BYTES: int = 8
ENTRY_BYTES: int = KEY_BYTES + PAYLOAD_BYTES
NODE_HEADER_BYTES: int = 32
MODEL_BYTES: int = 16
BITMAP_BITS_PER_ENTRY: int = 2

EMPTY_DENSE_CAPACITY: int = 16


class EntryTag(IntEnum):
    """
    Entry kinds of a model node, value bit + 2 * pointer bit.
    """
    EMPTY = 0
    DATA = 1
    BUCKET = 2
    CHILD = 3


class Bucket:
    """
    Short array of pairs predicted into the same position of a model node.
    """

    __slots__ = ('keys', 'payloads', 'capacity', 'ordered')

    def __init__(self, capacity: int, ordered: bool = False) -> None:
        self.keys: List[float] = []
        self.payloads: List[int] = []
        self.capacity: int = capacity
        self.ordered: bool = ordered

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def full(self) -> bool:
        """True if no further pair fits."""
        return len(self.keys) >= self.capacity

    def find(self, key: float) -> int:
        """
        Position of key in the bucket or -1.
        """
        if self.ordered:
            for i, stored in enumerate(self.keys):
                if stored == key:
                    return i
                if stored > key:
                    return -1
            return -1
        for i, stored in enumerate(self.keys):
            if stored == key:
                return i
        return -1

    def add(self, key: float, payload: int) -> None:
        """
        Append (linear) or insert in order (ordered). The caller checks capacity and duplicates.
        """
        if self.ordered:
            at: int = bisect.bisect_left(self.keys, key)
            self.keys.insert(at, key)
            self.payloads.insert(at, payload)
        else:
            self.keys.append(key)
            self.payloads.append(payload)

    def remove(self, i: int) -> None:
        """
        Remove the pair at i: overwrite with the trailing pair (linear) or shift left (ordered).
        """
        if self.ordered:
            del self.keys[i]
            del self.payloads[i]
            return
        last_key: float = self.keys.pop()
        last_payload: int = self.payloads.pop()
        if i < len(self.keys):
            self.keys[i] = last_key
            self.payloads[i] = last_payload

    def sorted_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Content sorted by key.
        """
        order: np.ndarray = np.argsort(np.asarray(self.keys, dtype=np.float64), kind='stable')
        return np.asarray(self.keys, dtype=np.float64)[order], np.asarray(self.payloads, dtype=np.int64)[order]

    def size_bytes(self) -> int:
        """Allocated size: header plus capacity pairs."""
        return NODE_HEADER_BYTES + self.capacity * ENTRY_BYTES


class DenseNode:
    """
    Ordered, gapped array of pairs.

    Attributes:
        keys (np.ndarray): Non-decreasing keys; a gap repeats the key in front of it.
        payloads (np.ndarray): Payloads aligned with keys.
        count (int): Number of real elements; 0 means the node is empty and the arrays carry no data.
    """

    __slots__ = ('keys', 'payloads', 'count')

    def __init__(self, keys: np.ndarray, payloads: np.ndarray, count: int) -> None:
        self.keys: np.ndarray = keys
        self.payloads: np.ndarray = payloads
        self.count: int = count

    @classmethod
    def empty(cls, capacity: int = EMPTY_DENSE_CAPACITY) -> DenseNode:
        """
        Dense node without elements.
        """
        return cls(np.zeros(capacity, dtype=np.float64), np.zeros(capacity, dtype=np.int64), 0)

    @classmethod
    def build(cls, keys: np.ndarray, payloads: np.ndarray, size: int) -> DenseNode:
        """
        Spread n sorted pairs evenly over size slots, the first pair in slot 0.

        Args:
            keys (np.ndarray): Sorted unique keys.
            payloads (np.ndarray): Aligned payloads.
            size (int): Number of slots, at least len(keys).

        Returns:
            DenseNode: The gapped node.
        """
        n: int = keys.size
        if n == 0:
            return cls.empty(max(size, 1))
        size = max(size, n)
        starts: np.ndarray = (np.arange(n, dtype=np.int64) * size) // n
        widths: np.ndarray = np.diff(np.append(starts, size))
        return cls(np.repeat(np.asarray(keys, dtype=np.float64), widths), np.repeat(np.asarray(payloads, dtype=np.int64), widths), n)

    @property
    def size(self) -> int:
        """Number of slots."""
        return int(self.keys.size)

    @property
    def gaps(self) -> int:
        """Number of gap slots."""
        return self.size - self.count

    def find(self, key: float) -> int:
        """
        Slot of the real element holding key, or -1.
        """
        if self.count == 0:
            return -1
        slot: int = int(np.searchsorted(self.keys, key, side='left'))
        if slot < self.size and self.keys[slot] == key:
            return slot
        return -1

    def real_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Real elements without gap copies.
        """
        if self.count == 0:
            return np.empty(0, dtype=np.float64), np.empty(0, dtype=np.int64)
        first: np.ndarray = np.ones(self.size, dtype=bool)
        first[1:] = self.keys[1:] != self.keys[:-1]
        return self.keys[first].copy(), self.payloads[first].copy()

    def insert(self, key: float, payload: int) -> None:
        """
        Insert a key that is not present into a node with at least one gap.
        """
        if self.count == 0:
            self.keys[:] = key
            self.payloads[:] = payload
            self.count = 1
            return
        size: int = self.size
        slot: int = int(np.searchsorted(self.keys, key, side='left'))
        # slot - 1 holds a copy of its predecessor: overwrite it
        if slot >= 2 and self.keys[slot - 1] == self.keys[slot - 2]:
            self.keys[slot - 1] = key
            self.payloads[slot - 1] = payload
            self.count += 1
            return
        gap_slots: np.ndarray = np.flatnonzero(self.keys[1:] == self.keys[:-1]) + 1
        split: int = int(np.searchsorted(gap_slots, slot, side='left'))
        right: Optional[int] = int(gap_slots[split]) if split < gap_slots.size else None
        left: Optional[int] = int(gap_slots[split - 1]) if split > 0 else None
        if right is not None and (left is None or right - slot <= (slot - 1) - left):
            self.keys[slot + 1:right + 1] = self.keys[slot:right]
            self.payloads[slot + 1:right + 1] = self.payloads[slot:right]
            self.keys[slot] = key
            self.payloads[slot] = payload
        elif left is not None:
            self.keys[left:slot - 1] = self.keys[left + 1:slot]
            self.payloads[left:slot - 1] = self.payloads[left + 1:slot]
            self.keys[slot - 1] = key
            self.payloads[slot - 1] = payload
        else:
            raise IndexAuditError(f'Dense node of {size} slots has no gap for key {key}', path='dense')
        self.count += 1

    def delete(self, slot: int) -> None:
        """
        Remove the real element at slot with its gap copies, shift the rest left and repeat the tail.
        """
        size: int = self.size
        end: int = slot + 1
        while end < size and self.keys[end] == self.keys[slot]:
            end += 1
        width: int = end - slot
        self.keys[slot:size - width] = self.keys[end:size]
        self.payloads[slot:size - width] = self.payloads[end:size]
        self.count -= 1
        if self.count == 0:
            self.keys[:] = 0.0
            self.payloads[:] = 0
            return
        self.keys[size - width:] = self.keys[size - width - 1]
        self.payloads[size - width:] = self.payloads[size - width - 1]

    def size_bytes(self) -> int:
        """Header plus all slots, gaps included."""
        return NODE_HEADER_BYTES + self.size * ENTRY_BYTES


class ModelNode:
    """
    Linear model plus an array of entries with precise placement.
    """

    __slots__ = ('model', 'keys', 'payloads', 'value_bits', 'pointer_bits', 'links')

    def __init__(self, model: LinearModel, size: int) -> None:
        self.model: LinearModel = model
        self.keys: np.ndarray = np.zeros(size, dtype=np.float64)
        self.payloads: np.ndarray = np.zeros(size, dtype=np.int64)
        self.value_bits: np.ndarray = np.zeros(size, dtype=bool)
        self.pointer_bits: np.ndarray = np.zeros(size, dtype=bool)
        self.links: Dict[int, Union[Bucket, ModelNode, DenseNode]] = {}

    @property
    def size(self) -> int:
        """Number of entries."""
        return int(self.keys.size)

    def slot(self, key: float) -> int:
        """
        Predicted position clamped to the entry array.
        """
        position: int = self.model.predict(key)
        if position < 0:
            return 0
        if position >= self.keys.size:
            return int(self.keys.size) - 1
        return position

    def slots(self, keys: np.ndarray) -> np.ndarray:
        """
        Vectorized slot.
        """
        return np.clip(self.model.predict_batch(keys), 0, self.size - 1)

    def tag(self, slot: int) -> EntryTag:
        """
        Decode the entry kind from the two bitmaps.
        """
        return EntryTag(int(self.value_bits[slot]) | (int(self.pointer_bits[slot]) << 1))

    def set_tag(self, slot: int, tag: EntryTag) -> None:
        """
        Encode the entry kind into the two bitmaps.
        """
        self.value_bits[slot] = bool(tag & 1)
        self.pointer_bits[slot] = bool(tag & 2)

    def put(self, slot: int, key: float, payload: int) -> None:
        """
        Store a pair in an empty slot.
        """
        self.keys[slot] = key
        self.payloads[slot] = payload
        self.set_tag(slot, EntryTag.DATA)

    def link(self, first: int, last: int, target: Union[Bucket, ModelNode, DenseNode]) -> None:
        """
        Point the entries first..last at a bucket or a child node.
        """
        tag: EntryTag = EntryTag.BUCKET if isinstance(target, Bucket) else EntryTag.CHILD
        for slot in range(first, last + 1):
            self.links[slot] = target
            self.set_tag(slot, tag)

    def child_run(self, slot: int) -> Tuple[int, int]:
        """
        First and last entry linking the same child as slot.
        """
        child = self.links[slot]
        first: int = slot
        while first > 0 and self.links.get(first - 1) is child:
            first -= 1
        last: int = slot
        while last + 1 < self.size and self.links.get(last + 1) is child:
            last += 1
        return first, last

    def size_bytes(self) -> int:
        """Header, model, entries and both bitmaps."""
        return NODE_HEADER_BYTES + MODEL_BYTES + self.size * ENTRY_BYTES + (self.size * BITMAP_BITS_PER_ENTRY + 7) // 8


@dataclass
class IndexStats:  # pylint: disable=too-many-instance-attributes
    """
    Structure and size of an index.

    Attributes:
        key_count (int): Number of stored keys.
        node_counts (Dict[str, int]): Number of model nodes, buckets and dense nodes.
        max_height (int): Deepest level holding a key, the root is level 1 and a bucket adds one level.
        avg_height (float): Key-weighted average level.
        size_bytes (int): Allocated size including empty slots, gaps and bucket capacity.
        tail_degree (int): Tail conflict degree frozen at bulk load.
        bucket_capacity (int): Capacity of every bucket.
    """
    key_count: int = 0
    node_counts: Dict[str, int] = field(default_factory=lambda: {'model': 0, 'bucket': 0, 'dense': 0})
    max_height: int = 0
    avg_height: float = 0.0
    size_bytes: int = 0
    tail_degree: int = 1
    bucket_capacity: int = 2

    @property
    def bytes_per_key(self) -> float:
        """Allocated bytes per stored key."""
        return self.size_bytes / self.key_count if self.key_count else float(self.size_bytes)


def bucket_capacity_for(tail_degree: int, config: IndexConfig) -> int:
    """
    Capacity of buckets: the tail conflict degree, at most bucket_cap and at least 2.
    """
    return max(2, min(tail_degree, config.bucket_cap))


def _dense_node(keys: np.ndarray, payloads: np.ndarray, size: int) -> DenseNode:
    order: np.ndarray = np.argsort(keys, kind='stable')
    return DenseNode.build(keys[order], payloads[order], size)


# pylint: disable-next=too-many-locals,too-many-arguments,too-many-positional-arguments
def modelling(keys: np.ndarray, payloads: np.ndarray, config: IndexConfig, tail_degree: Optional[int] = None, depth: int = 0,
              parent_count: Optional[int] = None, placements: Optional[np.ndarray] = None) -> Node:
    """
    Build a subtree for unique pairs sorted by placement.

    A linear model is fitted against the scaled positions. If it cannot tell the placements apart a dense
    node of n + tail_degree slots is built. Otherwise a model node of min(n * alpha, span of the
    predictions) entries gets single pairs in place, small conflicts in buckets and every run of
    heavily conflicting positions modelled into one child linked from all entries of the run.
    Entries always hold the keys themselves; placements only decide where they go.

    Args:
        keys (np.ndarray): Unique keys.
        payloads (np.ndarray): Aligned payloads.
        config (IndexConfig): Index configuration.
        tail_degree (Optional[int]): Tail conflict degree; computed from the placements when not given.
        depth (int): Depth of the node to build, the root is 0.
        parent_count (Optional[int]): Number of keys of the caller; a child receiving all of them becomes a dense node.
        placements (Optional[np.ndarray]): Non-decreasing values the models are fitted on, aligned with keys.
            None places every key by itself, the keys must then be sorted.

    Returns:
        Node: The root of the subtree.

    Raises:
        DepthExceeded: If the tree would grow deeper than max_depth.
    """
    if depth > config.max_depth:
        raise DepthExceeded(f'Modelling exceeded the maximum depth of {config.max_depth}')
    n: int = int(keys.size)
    if n == 0:
        return DenseNode.empty()
    routes: np.ndarray = keys if placements is None else placements
    if tail_degree is None:
        tail_degree = tail_of_keys(routes, config.gamma, config.alpha)
    if parent_count is not None and n >= parent_count:
        LOG.debug('Modelling received the key set of its caller (%d keys) at depth %d, building a dense node', n, depth)
        return _dense_node(keys, payloads, n + tail_degree)

    model: LinearModel = fit_linear(routes, scaled_positions(n, config.alpha))
    predictions: np.ndarray = model.predict_batch(routes)
    if not model.slope > 0 or predictions[0] == predictions[-1]:
        return _dense_node(keys, payloads, n + tail_degree)
    model = model.shifted(-int(predictions[0]))
    predictions = model.predict_batch(routes)
    size: int = min(int(n * config.alpha), int(predictions[-1]) - int(predictions[0]) + 1)
    if size < 2:
        return _dense_node(keys, payloads, n + tail_degree)

    node = ModelNode(model, size)
    slots: np.ndarray = np.clip(predictions, 0, size - 1)
    positions, starts, counts = np.unique(slots, return_index=True, return_counts=True)

    single: np.ndarray = counts == 1
    node.keys[positions[single]] = keys[starts[single]]
    node.payloads[positions[single]] = payloads[starts[single]]
    node.value_bits[positions[single]] = True

    capacity: int = bucket_capacity_for(tail_degree, config)
    ordered: bool = config.bucket_mode == BucketMode.ORDERED
    conflicting: np.ndarray = np.flatnonzero(~single)
    i: int = 0
    while i < conflicting.size:
        group: int = int(conflicting[i])
        count: int = int(counts[group])
        start: int = int(starts[group])
        position: int = int(positions[group])
        if count < tail_degree and count <= capacity:
            bucket = Bucket(capacity, ordered)
            group_keys: np.ndarray = keys[start:start + count]
            group_payloads: np.ndarray = payloads[start:start + count]
            if ordered:
                order: np.ndarray = np.argsort(group_keys, kind='stable')
                group_keys, group_payloads = group_keys[order], group_payloads[order]
            bucket.keys = group_keys.tolist()
            bucket.payloads = group_payloads.tolist()
            node.link(position, position, bucket)
            i += 1
            continue
        # run of following positions with degree above the tail degree
        last_group: int = group
        while (last_group + 1 < positions.size and int(positions[last_group + 1]) == int(positions[last_group]) + 1
               and int(counts[last_group + 1]) > tail_degree):
            last_group += 1
        end: int = int(starts[last_group]) + int(counts[last_group])
        child: Node = modelling(keys[start:end], payloads[start:end], config, tail_degree, depth + 1, parent_count=n,
                                placements=None if placements is None else placements[start:end])
        node.link(position, int(positions[last_group]), child)
        while i < conflicting.size and int(conflicting[i]) <= last_group:
            i += 1
    return node


def prepare_pairs(keys: Sequence[float], payloads: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    payload_array: np.ndarray = np.asarray(payloads, dtype=np.int64)
    if key_array.shape != payload_array.shape or key_array.ndim != 1:
        raise IndexOperationError(f'Keys and payloads must be aligned one-dimensional arrays (got {key_array.shape} and {payload_array.shape})')
    if key_array.size > 1 and not np.all(key_array[1:] > key_array[:-1]):
        order: np.ndarray = np.argsort(key_array, kind='stable')
        key_array = key_array[order]
        payload_array = payload_array[order]
        duplicates: np.ndarray = np.flatnonzero(key_array[1:] == key_array[:-1])
        if duplicates.size:
            raise DuplicateKey(f'Bulk load keys must be unique, {key_array[duplicates[0]]} appears more than once')
    return key_array, payload_array


class Index:
    """
    After-flow learned index over float keys with integer payloads.

    Models route every key by its placement: the key itself, or the value a placement function maps it
    to. Entries, buckets and dense nodes hold the keys themselves, so distinct keys sharing a placement
    are told apart wherever they land.

    Attributes:
        config (IndexConfig): Index configuration.
        placement (Optional[Placement]): Maps a key array to the values the models route by, None for the keys.
        root (Node): Root node.
        tail_degree (int): Tail conflict degree of the bulk-loaded placements.
        key_span (Optional[Tuple[float, float]]): Smallest and largest bulk-loaded key.
        enforce_key_space (bool): Reject inserts outside key_span.
    """

    def __init__(self, config: Optional[IndexConfig] = None, placement: Optional[Placement] = None) -> None:
        self.config: IndexConfig = config if config is not None else IndexConfig()
        self.placement: Optional[Placement] = placement
        self.root: Node = DenseNode.empty()
        self.tail_degree: int = 1
        self.key_span: Optional[Tuple[float, float]] = None
        self.enforce_key_space: bool = True
        self._count: int = 0

    def __len__(self) -> int:
        return self._count

    def __contains__(self, key: object) -> bool:
        return isinstance(key, (int, float, np.floating, np.integer)) and self.lookup(float(key)) is not None

    @property
    def bucket_capacity(self) -> int:
        """Capacity of every bucket of this index."""
        return bucket_capacity_for(self.tail_degree, self.config)

    def place(self, keys: Sequence[float]) -> np.ndarray:
        """
        Placements of keys.
        """
        key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
        if self.placement is None or key_array.size == 0:
            return key_array
        return np.asarray(self.placement(key_array), dtype=np.float64)

    def _route(self, key: float, placement: Optional[float]) -> float:
        if placement is not None:
            return placement
        if self.placement is None:
            return key
        return float(self.place([key])[0])

    def _model(self, keys: np.ndarray, payloads: np.ndarray, depth: int) -> Node:
        """
        Re-model pairs given in any order.
        """
        routes: np.ndarray = self.place(keys)
        order: np.ndarray = np.lexsort((keys, routes))
        return modelling(keys[order], payloads[order], self.config, self.tail_degree, depth,
                         placements=None if self.placement is None else routes[order])

    def lookup(self, key: float, placement: Optional[float] = None) -> Optional[int]:
        """
        Payload of key or None. placement is computed when not given.
        """
        route: float = self._route(key, placement)
        node: Node = self.root
        while True:
            if isinstance(node, DenseNode):
                slot: int = node.find(key)
                return int(node.payloads[slot]) if slot >= 0 else None
            slot = node.slot(route)
            tag: EntryTag = node.tag(slot)
            if tag == EntryTag.EMPTY:
                return None
            if tag == EntryTag.DATA:
                return int(node.payloads[slot]) if node.keys[slot] == key else None
            target = node.links[slot]
            if tag == EntryTag.BUCKET:
                assert isinstance(target, Bucket)
                found: int = target.find(key)
                return target.payloads[found] if found >= 0 else None
            assert not isinstance(target, Bucket)
            node = target

    def _replace(self, parent: Optional[ModelNode], slot: int, new_node: Node) -> None:
        if parent is None:
            self.root = new_node
            return
        first, last = parent.child_run(slot)
        parent.link(first, last, new_node)

    # pylint: disable-next=too-many-branches
    def insert(self, key: float, payload: int, placement: Optional[float] = None) -> None:
        """
        Insert a new pair.

        Raises:
            AlreadyExists: If key is stored already.
            OutOfKeySpace: If key lies outside the bulk-loaded key span.
        """
        if self.enforce_key_space and self.key_span is not None and not self.key_span[0] <= key <= self.key_span[1]:
            raise OutOfKeySpace(f'Key {key} is outside the bulk-loaded key span [{self.key_span[0]}, {self.key_span[1]}]')
        route: float = self._route(key, placement)
        node: Node = self.root
        parent: Optional[ModelNode] = None
        parent_slot: int = 0
        depth: int = 0
        while True:
            if isinstance(node, DenseNode):
                if node.find(key) >= 0:
                    raise AlreadyExists(f'Key {key} already exists')
                if node.count > 0 and node.gaps == 0:
                    keys, payloads = node.real_pairs()
                    rebuilt: Node = self._model(np.append(keys, key), np.append(payloads, payload), depth)
                    LOG.debug('Dense node of %d keys is full, re-modelled at depth %d', keys.size, depth)
                    self._replace(parent, parent_slot, rebuilt)
                else:
                    node.insert(key, payload)
                self._count += 1
                return
            slot: int = node.slot(route)
            tag: EntryTag = node.tag(slot)
            if tag == EntryTag.EMPTY:
                node.put(slot, key, payload)
            elif tag == EntryTag.DATA:
                if node.keys[slot] == key:
                    raise AlreadyExists(f'Key {key} already exists')
                bucket = Bucket(self.bucket_capacity, self.config.bucket_mode == BucketMode.ORDERED)
                bucket.add(float(node.keys[slot]), int(node.payloads[slot]))
                bucket.add(key, payload)
                node.link(slot, slot, bucket)
            elif tag == EntryTag.BUCKET:
                bucket = node.links[slot]  # type: ignore[assignment]
                if bucket.find(key) >= 0:
                    raise AlreadyExists(f'Key {key} already exists')
                if bucket.full:
                    keys, payloads = bucket.sorted_pairs()
                    child: Node = self._model(np.append(keys, key), np.append(payloads, payload), depth + 1)
                    node.link(slot, slot, child)
                else:
                    bucket.add(key, payload)
            else:
                parent, parent_slot, depth = node, slot, depth + 1
                node = node.links[slot]  # type: ignore[assignment]
                continue
            self._count += 1
            return

    def update(self, key: float, payload: int, placement: Optional[float] = None) -> None:
        """
        Overwrite the payload of a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        route: float = self._route(key, placement)
        node: Node = self.root
        while True:
            if isinstance(node, DenseNode):
                slot: int = node.find(key)
                if slot < 0:
                    break
                node.payloads[slot] = payload
                return
            slot = node.slot(route)
            tag: EntryTag = node.tag(slot)
            if tag == EntryTag.DATA and node.keys[slot] == key:
                node.payloads[slot] = payload
                return
            if tag == EntryTag.BUCKET:
                bucket: Bucket = node.links[slot]  # type: ignore[assignment]
                found: int = bucket.find(key)
                if found < 0:
                    break
                bucket.payloads[found] = payload
                return
            if tag != EntryTag.CHILD:
                break
            node = node.links[slot]  # type: ignore[assignment]
        raise NotFound(f'Key {key} not found')

    def delete(self, key: float, placement: Optional[float] = None) -> None:
        """
        Remove a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        route: float = self._route(key, placement)
        node: Node = self.root
        while True:
            if isinstance(node, DenseNode):
                slot: int = node.find(key)
                if slot < 0:
                    break
                node.delete(slot)
                self._count -= 1
                return
            slot = node.slot(route)
            tag: EntryTag = node.tag(slot)
            if tag == EntryTag.DATA and node.keys[slot] == key:
                node.set_tag(slot, EntryTag.EMPTY)
                self._count -= 1
                return
            if tag == EntryTag.BUCKET:
                bucket: Bucket = node.links[slot]  # type: ignore[assignment]
                found: int = bucket.find(key)
                if found < 0:
                    break
                bucket.remove(found)
                if len(bucket) == 0:
                    del node.links[slot]
                    node.set_tag(slot, EntryTag.EMPTY)
                self._count -= 1
                return
            if tag != EntryTag.CHILD:
                break
            node = node.links[slot]  # type: ignore[assignment]
        raise NotFound(f'Key {key} not found')

    def _walk(self) -> Iterator[Tuple[Union[Node, Bucket], int]]:
        """
        Every node and bucket once with its level (root = 1).
        """
        stack: List[Tuple[Union[Node, Bucket], int]] = [(self.root, 1)]
        while stack:
            item, level = stack.pop()
            yield item, level
            if isinstance(item, ModelNode):
                seen: set[int] = set()
                for slot in sorted(item.links):
                    target = item.links[slot]
                    if id(target) not in seen:
                        seen.add(id(target))
                        stack.append((target, level + 1))

    def stats(self) -> IndexStats:
        """
        Key count, node counts, heights and allocated size.
        """
        stats = IndexStats(key_count=self._count, tail_degree=self.tail_degree, bucket_capacity=self.bucket_capacity)
        weighted_height: int = 0
        for item, level in self._walk():
            stats.size_bytes += item.size_bytes()
            if isinstance(item, ModelNode):
                stats.node_counts['model'] += 1
                keys_here: int = int(item.value_bits[~item.pointer_bits].sum())
            elif isinstance(item, Bucket):
                stats.node_counts['bucket'] += 1
                keys_here = len(item)
            else:
                stats.node_counts['dense'] += 1
                keys_here = item.count
            if keys_here:
                stats.max_height = max(stats.max_height, level)
                weighted_height += keys_here * level
        stats.avg_height = weighted_height / self._count if self._count else 0.0
        if stats.max_height == 0:
            stats.max_height = 1
        return stats

    def _pairs_of(self, node: Union[Node, Bucket]) -> Iterator[Tuple[float, int]]:
        if isinstance(node, Bucket):
            yield from zip(node.keys, node.payloads)
        elif isinstance(node, DenseNode):
            keys, payloads = node.real_pairs()
            yield from zip(keys.tolist(), payloads.tolist())
        else:
            data: np.ndarray = np.flatnonzero(node.value_bits & ~node.pointer_bits)
            yield from zip(node.keys[data].tolist(), node.payloads[data].tolist())
            seen: set[int] = set()
            for slot in sorted(node.links):
                target = node.links[slot]
                if id(target) not in seen:
                    seen.add(id(target))
                    yield from self._pairs_of(target)

    def audit(self) -> None:
        """
        Check the structural invariants of the whole tree.

        Raises:
            IndexAuditError: On the first violation, with the path of the offending node.
        """
        total: int = self._audit_node(self.root, 'root', 1)
        if total != self._count:
            raise IndexAuditError(f'Index reports {self._count} keys but holds {total}', path='root')

    # pylint: disable-next=too-many-branches,too-many-locals
    def _audit_node(self, node: Node, path: str, level: int) -> int:
        if level > self.config.max_depth + 1:
            raise IndexAuditError(f'Node deeper than the maximum depth {self.config.max_depth}', path=path)
        if isinstance(node, DenseNode):
            if node.count == 0:
                return 0
            if np.any(node.keys[1:] < node.keys[:-1]):
                raise IndexAuditError('Dense node keys are not non-decreasing', path=path)
            distinct: int = 1 + int(np.count_nonzero(node.keys[1:] != node.keys[:-1]))
            if distinct != node.count:
                raise IndexAuditError(f'Dense node counts {node.count} elements but holds {distinct}', path=path)
            return node.count
        total: int = 0
        data: np.ndarray = np.flatnonzero(node.value_bits & ~node.pointer_bits)
        if data.size:
            predicted: np.ndarray = node.slots(self.place(node.keys[data]))
            wrong: np.ndarray = np.flatnonzero(predicted != data)
            if wrong.size:
                raise IndexAuditError(f'Key {node.keys[data[wrong[0]]]} is stored in entry {data[wrong[0]]} but predicts '
                                      f'{predicted[wrong[0]]}', path=path)
        total += int(data.size)
        for slot in np.flatnonzero(node.pointer_bits).tolist():
            if slot not in node.links:
                raise IndexAuditError(f'Entry {slot} is a link without target', path=path)
        runs: Dict[int, List[int]] = {}
        for slot in sorted(node.links):
            runs.setdefault(id(node.links[slot]), []).append(slot)
        for slots in runs.values():
            if slots[-1] - slots[0] + 1 != len(slots):
                raise IndexAuditError(f'Entries {slots[0]}..{slots[-1]} linking one target are not contiguous', path=path)
        bucket_keys: List[float] = []
        bucket_slots: List[int] = []
        visited: set[int] = set()
        for slot in sorted(node.links):
            target = node.links[slot]
            tag: EntryTag = node.tag(slot)
            if isinstance(target, Bucket):
                if tag != EntryTag.BUCKET:
                    raise IndexAuditError(f'Entry {slot} links a bucket but is tagged {tag.name}', path=path)
                if not 0 < len(target) <= self.bucket_capacity or target.capacity > self.bucket_capacity:
                    raise IndexAuditError(f'Bucket at entry {slot} holds {len(target)} of {target.capacity} pairs', path=path)
                if target.ordered and target.keys != sorted(target.keys):
                    raise IndexAuditError(f'Ordered bucket at entry {slot} is not sorted', path=path)
                bucket_keys.extend(target.keys)
                bucket_slots.extend([slot] * len(target))
                total += len(target)
                continue
            if tag != EntryTag.CHILD:
                raise IndexAuditError(f'Entry {slot} links a child but is tagged {tag.name}', path=path)
            if id(target) in visited:
                continue
            visited.add(id(target))
            first, last = node.child_run(slot)
            child_path: str = f'{path}/{first}-{last}'
            child_keys: np.ndarray = np.asarray([key for key, _ in self._pairs_of(target)], dtype=np.float64)
            if child_keys.size:
                child_slots: np.ndarray = node.slots(self.place(child_keys))
                outside: np.ndarray = np.flatnonzero((child_slots < first) | (child_slots > last))
                if outside.size:
                    raise IndexAuditError(f'Key {child_keys[outside[0]]} in child of run {first}..{last} predicts entry '
                                          f'{child_slots[outside[0]]}', path=child_path)
            total += self._audit_node(target, child_path, level + 1)
        if bucket_keys:
            bucket_predicted: np.ndarray = node.slots(self.place(bucket_keys))
            misplaced: np.ndarray = np.flatnonzero(bucket_predicted != np.asarray(bucket_slots))
            if misplaced.size:
                raise IndexAuditError(f'Bucket at entry {bucket_slots[misplaced[0]]} holds a key predicting another entry', path=path)
        return total


def bulkload(keys: Sequence[float], payloads: Sequence[int], config: Optional[IndexConfig] = None,
             placement: Optional[Placement] = None, placements: Optional[np.ndarray] = None) -> Index:
    """
    Build an index over pairs sorted by key.

    Args:
        keys (Sequence[float]): Unique keys, ascending.
        payloads (Sequence[int]): Aligned payloads.
        config (Optional[IndexConfig]): Index configuration, defaults when None.
        placement (Optional[Placement]): Maps keys to the values the models route by, None for the keys themselves.
        placements (Optional[np.ndarray]): placement of every key if already at hand, aligned with the sorted keys.

    Returns:
        Index: The loaded index; an empty key set yields an empty dense root.

    Raises:
        DuplicateKey: If a key appears more than once.
        IndexOperationError: If placements and keys are not aligned.
    """
    index = Index(config, placement)
    key_array, payload_array = prepare_pairs(keys, payloads)
    if key_array.size == 0:
        return index
    routes: np.ndarray = index.place(key_array) if placements is None or placement is None else np.asarray(placements, dtype=np.float64)
    if routes.shape != key_array.shape:
        raise IndexOperationError(f'Placements of shape {routes.shape} do not match {key_array.size} keys')
    order: np.ndarray = np.lexsort((key_array, routes))
    sorted_routes: np.ndarray = routes[order]
    index.tail_degree = tail_of_keys(sorted_routes, index.config.gamma, index.config.alpha)
    index.key_span = (float(key_array[0]), float(key_array[-1]))
    index.root = modelling(key_array[order], payload_array[order], index.config, index.tail_degree, 0,
                           placements=None if placement is None else sorted_routes)
    index._count = int(key_array.size)  # pylint: disable=protected-access
    LOG.debug('Bulk loaded %d keys, tail conflict degree %d', key_array.size, index.tail_degree)
    return index
