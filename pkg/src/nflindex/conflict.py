"""
Module containing the conflict metrics of linear models and the flow on/off switch.

Keys that a linear model predicts into the same position are in conflict. The conflict degree of a
position is the number of keys predicted into it, the tail conflict degree is the gamma quantile of
the degrees of all occupied positions and serves as the quality measure of a key transformation.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from nflindex.errors import ConflictError, EmptyHistogram

if TYPE_CHECKING:
    from typing import Dict, Any, Sequence, Union

    ArrayLike = Union[Sequence[float], np.ndarray]

LOG: logging.Logger = logging.getLogger("nflindex")

# predictions are clipped into this range before the integer conversion
_POSITION_LIMIT: float = float(2 ** 62)


@dataclass(frozen=True)
class LinearModel:
    """
    Linear model predicting array positions from keys.

    Attributes:
        slope (float): a in a*k + b.
        intercept (float): b in a*k + b.
    """
    slope: float
    intercept: float

    def predict(self, key: float) -> int:
        """
        Predicted position, rounded half up.

        Args:
            key (float): Key to place.

        Returns:
            int: floor(a*k + b + 0.5).
        """
        value: float = self.slope * key + self.intercept
        return int(math.floor(min(max(value, -_POSITION_LIMIT), _POSITION_LIMIT) + 0.5))

    def predict_batch(self, keys: ArrayLike) -> np.ndarray:
        """
        Vectorized predict, same rounding as the scalar form.
        """
        values: np.ndarray = self.slope * np.asarray(keys, dtype=np.float64) + self.intercept
        return np.floor(np.clip(values, -_POSITION_LIMIT, _POSITION_LIMIT) + 0.5).astype(np.int64)

    def shifted(self, positions: int) -> LinearModel:
        """
        Same slope, intercept moved by a number of positions.
        """
        return LinearModel(slope=self.slope, intercept=self.intercept + positions)


@dataclass
class ConflictHistogram:
    """
    Conflict degree of every occupied position.

    Attributes:
        degrees (Dict[int, int]): Position to number of keys predicted into it, only positive counts.
    """
    degrees: Dict[int, int] = field(default_factory=dict)

    @property
    def occupied(self) -> int:
        """Number of positions with at least one key."""
        return len(self.degrees)

    @property
    def total(self) -> int:
        """Number of keys scored."""
        return sum(self.degrees.values())

    def sorted_degrees(self) -> np.ndarray:
        """
        Degrees of all occupied positions, ascending.
        """
        return np.sort(np.fromiter(self.degrees.values(), dtype=np.int64, count=len(self.degrees)))


@dataclass(frozen=True)
class ConflictSummary:
    """
    Summary figures of a histogram, as printed by the inspect command.
    """
    keys: int
    occupied: int
    mean_degree: float
    max_degree: int
    tail_degree: int
    gamma: float

    def as_dict(self) -> Dict[str, Any]:
        """
        Summary as a dictionary.
        """
        return {'keys': self.keys, 'occupied': self.occupied, 'mean_degree': self.mean_degree,
                'max_degree': self.max_degree, 'tail_degree': self.tail_degree, 'gamma': self.gamma}


@dataclass(frozen=True)
class SwitchReport:
    """
    Outcome of the switching check between original and transformed keys.

    Attributes:
        use_flow (bool): Whether the transformed keys should be indexed.
        tail_before (int): Tail conflict degree of the original keys.
        tail_after (int): Tail conflict degree of the transformed keys.
        order_preserved (bool): Whether the transformed keys are strictly increasing in original order.
    """
    use_flow: bool
    tail_before: int
    tail_after: int
    order_preserved: bool


def scaled_positions(n: int, alpha: float) -> np.ndarray:
    """
    Training targets of the linear models: rank * alpha.

    Args:
        n (int): Number of keys.
        alpha (float): Space amplification factor.

    Returns:
        np.ndarray: Positions 0, alpha, 2*alpha, ...
    """
    return np.arange(n, dtype=np.float64) * alpha


def fit_linear(keys: ArrayLike, positions: ArrayLike) -> LinearModel:
    """
    Ordinary least squares fit of positions against keys.

    Args:
        keys (ArrayLike): Sorted keys.
        positions (ArrayLike): Target positions, same length.

    Returns:
        LinearModel: Fitted model; slope 0 and intercept mean(positions) if the keys have no spread.

    Raises:
        ConflictError: If the lengths differ or are zero.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    position_array: np.ndarray = np.asarray(positions, dtype=np.float64)
    if key_array.shape != position_array.shape or key_array.size == 0:
        raise ConflictError(f'Cannot fit a linear model on {key_array.size} keys and {position_array.size} positions')
    mean_position: float = float(position_array.mean())
    if key_array.size == 1:
        return LinearModel(slope=0.0, intercept=mean_position)
    mean_key: float = float(key_array.mean())
    centered: np.ndarray = key_array - mean_key
    denominator: float = float(np.dot(centered, centered))
    if not denominator > 0 or not math.isfinite(denominator):
        return LinearModel(slope=0.0, intercept=mean_position)
    slope: float = float(np.dot(centered, position_array - mean_position)) / denominator
    if not math.isfinite(slope):
        return LinearModel(slope=0.0, intercept=mean_position)
    return LinearModel(slope=slope, intercept=mean_position - slope * mean_key)


def conflict_degrees(keys: ArrayLike, model: LinearModel) -> ConflictHistogram:
    """
    Count the keys per predicted position.

    Args:
        keys (ArrayLike): Sorted keys.
        model (LinearModel): Model to evaluate.

    Returns:
        ConflictHistogram: Degrees of the occupied positions.
    """
    predictions: np.ndarray = model.predict_batch(keys)
    if predictions.size == 0:
        return ConflictHistogram()
    positions, counts = np.unique(predictions, return_counts=True)
    return ConflictHistogram(degrees={int(position): int(count) for position, count in zip(positions, counts)})


def tail_conflict_degree(hist: ConflictHistogram, gamma: float) -> int:
    """
    The gamma quantile of the conflict degrees.

    Args:
        hist (ConflictHistogram): Histogram with at least one occupied position.
        gamma (float): Tail percent in (0, 1].

    Returns:
        int: Element of rank t = clamp(INT(m * gamma), 1, m) of the degrees sorted ascending.

    Raises:
        EmptyHistogram: If no position is occupied.
    """
    occupied: int = hist.occupied
    if occupied == 0:
        raise EmptyHistogram('Tail conflict degree of an empty histogram is undefined')
    rank: int = min(max(int(occupied * gamma), 1), occupied)
    return int(hist.sorted_degrees()[rank - 1])


def tail_of_keys(keys: ArrayLike, gamma: float, alpha: float) -> int:
    """
    Tail conflict degree of one linear model fitted over all keys against scaled positions.

    Args:
        keys (ArrayLike): Sorted keys.
        gamma (float): Tail percent.
        alpha (float): Space amplification factor.

    Returns:
        int: The tail conflict degree.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    model: LinearModel = fit_linear(key_array, scaled_positions(key_array.size, alpha))
    return tail_conflict_degree(conflict_degrees(key_array, model), gamma)


def conflict_summary(hist: ConflictHistogram, gamma: float) -> ConflictSummary:
    """
    Summary figures of a histogram.

    Args:
        hist (ConflictHistogram): Histogram with at least one occupied position.
        gamma (float): Tail percent.

    Returns:
        ConflictSummary: keys, occupied positions, mean and max degree, tail degree.
    """
    degrees: np.ndarray = hist.sorted_degrees()
    return ConflictSummary(keys=int(degrees.sum()) if degrees.size else 0, occupied=hist.occupied,
                           mean_degree=float(degrees.mean()) if degrees.size else 0.0,
                           max_degree=int(degrees[-1]) if degrees.size else 0,
                           tail_degree=tail_conflict_degree(hist, gamma), gamma=gamma)


def evaluate_switch(original_keys: ArrayLike, transformed_keys: ArrayLike, gamma: float, alpha: float = 2.0) -> SwitchReport:
    """
    Compare the tail conflict degrees of the original and the transformed keys.

    The flow is kept unless the transformed tail is strictly larger, or the transformed keys are not
    strictly increasing in the order of the original keys.

    Args:
        original_keys (ArrayLike): Sorted original keys.
        transformed_keys (ArrayLike): Transformed keys, positionally aligned with the originals.
        gamma (float): Tail percent.
        alpha (float): Space amplification factor for the scaled positions.

    Returns:
        SwitchReport: The decision and both tail degrees.

    Raises:
        ConflictError: If the arrays differ in length or have fewer than two keys.
    """
    original: np.ndarray = np.asarray(original_keys, dtype=np.float64)
    transformed: np.ndarray = np.asarray(transformed_keys, dtype=np.float64)
    if original.shape != transformed.shape or original.size < 2:
        raise ConflictError(f'Switching needs two aligned key sets of at least two keys (got {original.size} and {transformed.size})')
    order_preserved: bool = bool(np.all(np.diff(transformed) > 0))
    tail_before: int = tail_of_keys(original, gamma, alpha)
    tail_after: int = tail_of_keys(np.sort(transformed), gamma, alpha)
    use_flow: bool = order_preserved and not tail_after > tail_before
    if not order_preserved:
        LOG.warning('Transformed keys are not strictly increasing, the flow is disabled')
    LOG.info('Tail conflict degree %d before and %d after the transformation: %s the flow', tail_before, tail_after,
             'using' if use_flow else 'not using')
    return SwitchReport(use_flow=use_flow, tail_before=tail_before, tail_after=tail_after, order_preserved=order_preserved)


def switch_decision(original_keys: ArrayLike, transformed_keys: ArrayLike, gamma: float, alpha: float = 2.0) -> bool:
    """
    Decide whether the transformed keys should be indexed instead of the original keys.

    Args:
        original_keys (ArrayLike): Sorted original keys.
        transformed_keys (ArrayLike): Transformed keys, positionally aligned with the originals.
        gamma (float): Tail percent.
        alpha (float): Space amplification factor.

    Returns:
        bool: use_flow.
    """
    return evaluate_switch(original_keys, transformed_keys, gamma, alpha).use_flow
