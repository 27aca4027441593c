"""
Module containing the key codec that prepares keys for the normalizing flow.

Keys are normalized with a scaled min-max normalization and then expanded into a feature vector:
the integral part, d-2 base-theta digits of the fraction (most significant first) and the residual
fraction. The decoder merges flow outputs back into one scalar by summing the components.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import logging
import math
from dataclasses import dataclass

import numpy as np

from nflindex.errors import DegenerateRange, CodecError

if TYPE_CHECKING:
    from typing import Dict, Any, Sequence, Union

    ArrayLike = Union[Sequence[float], np.ndarray]

LOG: logging.Logger = logging.getLogger("nflindex")


@dataclass(frozen=True)
class CodecParams:
    """
    Parameters of a fitted codec.

    Attributes:
        mu (float): Minimum of the keys the codec was fitted on.
        sigma (float): Key range divided by theta.
        theta (float): Scale factor, also the base of the fraction digits.
        dims (int): Number of features per key.
    """
    mu: float
    sigma: float
    theta: float
    dims: int

    def __post_init__(self) -> None:
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise CodecError(f'Invalid codec: sigma must be a positive finite number (got {self.sigma})')
        if not self.theta > 1:
            raise CodecError(f'Invalid codec: theta must be > 1 (got {self.theta})')
        if self.dims < 2:
            raise CodecError(f'Invalid codec: dims must be >= 2 (got {self.dims})')

    def as_dict(self) -> Dict[str, Any]:
        """
        Summary of the codec for reports.

        Returns:
            Dict[str, Any]: mu, sigma, theta and dims.
        """
        return {'mu': self.mu, 'sigma': self.sigma, 'theta': self.theta, 'dims': self.dims}


def fit_codec(keys: ArrayLike, theta: float, dims: int) -> CodecParams:
    """
    Fit the scaled min-max normalization on a sorted key set.

    Args:
        keys (ArrayLike): Keys sorted ascending.
        theta (float): Scale factor, > 1.
        dims (int): Target dimension, >= 2.

    Returns:
        CodecParams: mu = min(keys) and sigma = (max(keys) - min(keys)) / theta.

    Raises:
        DegenerateRange: If the keys do not span a range.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    if key_array.size == 0:
        raise DegenerateRange('Cannot fit a codec on an empty key set')
    lowest: float = float(key_array[0])
    highest: float = float(key_array[-1])
    if not highest > lowest:
        raise DegenerateRange(f'Cannot fit a codec on keys without range (min = max = {lowest})')
    return CodecParams(mu=lowest, sigma=(highest - lowest) / theta, theta=float(theta), dims=int(dims))


def normalize(key: float, params: CodecParams) -> float:
    """
    Normalize one key.

    Args:
        key (float): Raw key.
        params (CodecParams): Fitted codec.

    Returns:
        float: (key - mu) / sigma, in [0, theta] for keys inside the fitted range.
    """
    return (key - params.mu) / params.sigma


def normalize_batch(keys: ArrayLike, params: CodecParams) -> np.ndarray:
    """
    Vectorized normalize.
    """
    return (np.asarray(keys, dtype=np.float64) - params.mu) / params.sigma


def expand(x_norm: float, params: CodecParams) -> np.ndarray:
    """
    Expand one normalized key into its feature vector.

    Args:
        x_norm (float): Normalized key.
        params (CodecParams): Fitted codec providing theta and dims.

    Returns:
        np.ndarray: Vector of dims components.
    """
    return expand_batch(np.asarray([x_norm], dtype=np.float64), params)[0]


def expand_batch(x_norm: ArrayLike, params: CodecParams) -> np.ndarray:
    """
    Expand normalized keys into a (n, dims) feature matrix.

    The integral part is the floor, so the residual fraction stays in [0, 1) and the expansion
    is order embedding for negative inputs as well.

    Args:
        x_norm (ArrayLike): Normalized keys.
        params (CodecParams): Fitted codec.

    Returns:
        np.ndarray: Feature matrix, one row per key.
    """
    values: np.ndarray = np.asarray(x_norm, dtype=np.float64)
    features: np.ndarray = np.empty((values.shape[0], params.dims), dtype=np.float64)
    integral: np.ndarray = np.floor(values)
    fraction: np.ndarray = values - integral
    features[:, 0] = integral
    for k in range(1, params.dims - 1):
        scaled: np.ndarray = fraction * params.theta
        digit: np.ndarray = np.minimum(np.floor(scaled), params.theta - 1.0)
        fraction = scaled - digit
        features[:, k] = digit
    features[:, params.dims - 1] = fraction
    return features


def reconstruct(features: ArrayLike, params: CodecParams) -> float:
    """
    Weighted reconstruction of a normalized key from its feature vector (inverse of expand).

    Args:
        features (ArrayLike): One feature vector.
        params (CodecParams): Fitted codec.

    Returns:
        float: integral + sum(digit_k / theta^k) + fraction / theta^(dims - 2).
    """
    vector: np.ndarray = np.asarray(features, dtype=np.float64)
    value: float = float(vector[0])
    for k in range(1, params.dims - 1):
        value += float(vector[k]) / params.theta ** k
    return value + float(vector[params.dims - 1]) / params.theta ** (params.dims - 2)


def merge(z_vec: ArrayLike) -> float:
    """
    Merge one flow output back into a scalar key.

    Args:
        z_vec (ArrayLike): Flow output vector.

    Returns:
        float: Plain sum of the components, accumulated left to right.
    """
    return float(merge_batch(np.asarray(z_vec, dtype=np.float64).reshape(1, -1))[0])


def merge_batch(z_batch: np.ndarray) -> np.ndarray:
    """
    Merge a (n, dims) matrix of flow outputs into n scalar keys.

    Components are accumulated column by column so every row is summed in the same order,
    independent of the batch it belongs to.
    """
    merged: np.ndarray = z_batch[:, 0].copy()
    for k in range(1, z_batch.shape[1]):
        merged = merged + z_batch[:, k]
    return merged
