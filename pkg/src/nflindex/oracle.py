"""
Module containing the reference ordered map used as ground truth and as the comparison-based baseline.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import bisect

from nflindex.errors import AlreadyExists, DuplicateKey, NotFound
from nflindex.operations import RequestBatch, apply_operation

if TYPE_CHECKING:
    from typing import Dict, List, Optional, Sequence


class RefMap:
    """
    Sorted list of keys with a dict of payloads.
    """

    def __init__(self) -> None:
        self.keys: List[float] = []
        self.payloads: Dict[float, int] = {}

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: object) -> bool:
        return key in self.payloads

    def lookup(self, key: float) -> Optional[int]:
        """
        Payload of key or None.
        """
        return self.payloads.get(key)

    def insert(self, key: float, payload: int) -> None:
        """
        Insert a new pair.

        Raises:
            AlreadyExists: If key is stored already.
        """
        if key in self.payloads:
            raise AlreadyExists(f'Key {key} already exists')
        bisect.insort(self.keys, key)
        self.payloads[key] = payload

    def update(self, key: float, payload: int) -> None:
        """
        Overwrite the payload of a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        if key not in self.payloads:
            raise NotFound(f'Key {key} not found')
        self.payloads[key] = payload

    def delete(self, key: float) -> None:
        """
        Remove a stored key.

        Raises:
            NotFound: If key is not stored.
        """
        if key not in self.payloads:
            raise NotFound(f'Key {key} not found')
        del self.keys[bisect.bisect_left(self.keys, key)]
        del self.payloads[key]

    def execute(self, batch: RequestBatch) -> RequestBatch:
        """
        Execute a batch of requests in order, results aligned with the requests.
        """
        batch.results = [apply_operation(self, op.kind, op.key, op.payload) for op in batch.ops]
        return batch


def ref_bulkload(keys: Sequence[float], payloads: Sequence[int]) -> RefMap:
    """
    Build a reference map from pairs.

    Raises:
        DuplicateKey: If a key appears more than once.
    """
    ref = RefMap()
    for key, payload in zip(keys, payloads):
        if float(key) in ref.payloads:
            raise DuplicateKey(f'Bulk load keys must be unique, {key} appears more than once')
        ref.payloads[float(key)] = int(payload)
    ref.keys = sorted(ref.payloads)
    return ref


def ref_lookup(ref: RefMap, key: float) -> Optional[int]:
    """Payload of key or None."""
    return ref.lookup(key)


def ref_insert(ref: RefMap, key: float, payload: int) -> None:
    """Insert a new pair, AlreadyExists if present."""
    ref.insert(key, payload)


def ref_update(ref: RefMap, key: float, payload: int) -> None:
    """Overwrite a payload, NotFound if missing."""
    ref.update(key, payload)


def ref_delete(ref: RefMap, key: float) -> None:
    """Remove a key, NotFound if missing."""
    ref.delete(key)
