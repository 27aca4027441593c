"""
Module containing the operation vocabulary shared by the index front end, the reference map and the workloads.
"""
from __future__ import annotations
from typing import TYPE_CHECKING, Protocol

from dataclasses import dataclass, field

import numpy as np

from nflindex.enums import OpKind, Outcome
from nflindex.errors import AlreadyExists, NotFound, OutOfKeySpace, IndexOperationError

if TYPE_CHECKING:
    from typing import List, Optional, Iterator


@dataclass(frozen=True)
class Operation:
    """
    One request.

    Attributes:
        kind (OpKind): lookup, insert, update or delete.
        key (float): Key the request refers to.
        payload (Optional[int]): Payload for insert and update.
    """
    kind: OpKind
    key: float
    payload: Optional[int] = None

    @classmethod
    def lookup(cls, key: float) -> Operation:
        """Lookup request."""
        return cls(OpKind.LOOKUP, float(key))

    @classmethod
    def insert(cls, key: float, payload: int) -> Operation:
        """Insert request."""
        return cls(OpKind.INSERT, float(key), int(payload))

    @classmethod
    def update(cls, key: float, payload: int) -> Operation:
        """Update request."""
        return cls(OpKind.UPDATE, float(key), int(payload))

    @classmethod
    def delete(cls, key: float) -> Operation:
        """Delete request."""
        return cls(OpKind.DELETE, float(key))


@dataclass(frozen=True)
class OpResult:
    """
    Outcome of one request.

    Attributes:
        outcome (Outcome): What happened.
        payload (Optional[int]): Payload found by a lookup.
    """
    outcome: Outcome
    payload: Optional[int] = None

    @property
    def ok(self) -> bool:
        """True if the request completed as asked (a lookup that found nothing counts as completed)."""
        return self.outcome in (Outcome.OK, Outcome.FOUND, Outcome.MISSING)


@dataclass
class RequestBatch:
    """
    A batch of requests and, after execution, their positionally aligned results.
    """
    ops: List[Operation] = field(default_factory=list)
    results: List[OpResult] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self) -> Iterator[Operation]:
        return iter(self.ops)

    def keys(self) -> np.ndarray:
        """
        Keys of all requests in order.
        """
        return np.fromiter((op.key for op in self.ops), dtype=np.float64, count=len(self.ops))

    def fresh(self) -> RequestBatch:
        """
        Same requests without results.
        """
        return RequestBatch(ops=list(self.ops))


class OrderedMap(Protocol):
    """
    Anything offering the four point operations; failures are raised as IndexOperationError.
    """

    def lookup(self, key: float) -> Optional[int]:  # pylint: disable=missing-function-docstring
        ...

    def insert(self, key: float, payload: int) -> None:  # pylint: disable=missing-function-docstring
        ...

    def update(self, key: float, payload: int) -> None:  # pylint: disable=missing-function-docstring
        ...

    def delete(self, key: float) -> None:  # pylint: disable=missing-function-docstring
        ...


def outcome_of(error: IndexOperationError) -> Outcome:
    """
    Outcome recorded for an index error.
    """
    if isinstance(error, AlreadyExists):
        return Outcome.ALREADY_EXISTS
    if isinstance(error, NotFound):
        return Outcome.NOT_FOUND
    if isinstance(error, OutOfKeySpace):
        return Outcome.OUT_OF_KEY_SPACE
    return Outcome.ERROR


def apply_operation(target: OrderedMap, kind: OpKind, key: float, payload: Optional[int]) -> OpResult:
    """
    Run one request against a map, capturing index errors as outcomes.

    Args:
        target (OrderedMap): Map to operate on.
        kind (OpKind): Operation kind.
        key (float): Key as the map stores it.
        payload (Optional[int]): Payload for insert and update.

    Returns:
        OpResult: The outcome.
    """
    try:
        if kind == OpKind.LOOKUP:
            found: Optional[int] = target.lookup(key)
            return OpResult(Outcome.MISSING) if found is None else OpResult(Outcome.FOUND, found)
        if kind == OpKind.INSERT:
            target.insert(key, 0 if payload is None else payload)
        elif kind == OpKind.UPDATE:
            target.update(key, 0 if payload is None else payload)
        else:
            target.delete(key)
    except IndexOperationError as err:
        return OpResult(outcome_of(err))
    return OpResult(Outcome.OK)
