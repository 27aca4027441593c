"""
Module containing the numerical normalizing flow.

The flow maps expanded keys x to latent vectors z (the density estimation direction). It is a stack of
masked affine layers whose weight matrices are lower block-triangular: output block k only sees input
blocks 0..k. Weights are stored as unconstrained reals and exponentiated when the layer is evaluated, so
every weight is strictly positive. In the first layer an off-diagonal weight also carries the largest
possible contribution of the less significant components it precedes, which makes every first layer unit
non-decreasing in the key order of the expanded features. Between layers asinh is applied elementwise.
The merged output is therefore strictly increasing in the key.

The log-determinant of the Jacobian is the sum over blocks of the log of the diagonal Jacobian entries;
each of them is the product of the diagonal blocks and the activation derivatives along the block and is
accumulated in log space with log-sum-exp.

Training maximizes the mean log-likelihood under a wide normal latent with plain stochastic gradient
ascent (torch autograd in float64).
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import contextlib
import io
import logging
import math
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from nflindex.config import FlowConfig
from nflindex.errors import ShapeMismatch, FlowDiverged, BadMagic, TruncatedFile, VersionMismatch, FlowFileError, ConfigurationError, \
    CodecError
from nflindex.keycodec import CodecParams, fit_codec, normalize_batch, expand_batch, merge_batch

if TYPE_CHECKING:
    from typing import List, Tuple, Optional, Union, BinaryIO, Any

    FileTarget = Union[str, os.PathLike, BinaryIO]

LOG: logging.Logger = logging.getLogger("nflindex")

FLOW_FILE_MAGIC: bytes = b'NFL1'
FLOW_FILE_VERSION: int = 1
# rows per inference chunk are padded to a multiple of this so vectorized kernels never run a scalar tail
ROW_ALIGNMENT: int = 16
INIT_RANGE: float = 0.1
SMOOTHING_WINDOW: int = 10

_HEADER = struct.Struct('<4sI')
_ARCHITECTURE = struct.Struct('<IIIddddB')
_COUNT = struct.Struct('<Q')


def layer_blocks(dims: int, layers: int, hidden_mult: int) -> List[Tuple[int, int]]:
    """
    Block sizes (input block, output block) of every layer.

    Args:
        dims (int): Number of features.
        layers (int): Number of layers.
        hidden_mult (int): Hidden width per feature.

    Returns:
        List[Tuple[int, int]]: One (in_block, out_block) pair per layer, d*in_block -> d*out_block units.
    """
    del dims
    if layers == 1:
        return [(1, 1)]
    return [(1, hidden_mult)] + [(hidden_mult, hidden_mult)] * (layers - 2) + [(hidden_mult, 1)]


def weight_count(dims: int, layers: int, hidden_mult: int) -> int:
    """
    Number of stored weights: out_block * in_block * d(d+1)/2 per layer.
    """
    triangle: int = dims * (dims + 1) // 2
    return sum(in_block * out_block * triangle for in_block, out_block in layer_blocks(dims, layers, hidden_mult))


def bias_count(dims: int, layers: int, hidden_mult: int) -> int:
    """
    Number of stored biases: out_block * d per layer.
    """
    return sum(out_block * dims for _, out_block in layer_blocks(dims, layers, hidden_mult))


def parameter_count(config: FlowConfig) -> int:
    """
    Total number of trainable parameters of a flow built from the configuration.

    Args:
        config (FlowConfig): Flow configuration.

    Returns:
        int: Weights plus biases.
    """
    return weight_count(config.dims, config.layers, config.hidden_mult) + bias_count(config.dims, config.layers, config.hidden_mult)


@dataclass(frozen=True, eq=False)
class FlowParams:
    """
    All parameters of a flow plus the codec it was trained with.

    Attributes:
        config (FlowConfig): Architecture and training configuration.
        codec (CodecParams): Codec fitted on the training keys.
        weights (np.ndarray): Flat float64 weights, layer by layer, block row by block row.
        biases (np.ndarray): Flat float64 biases, layer by layer.
        bypass (bool): If True the flow is the identity with log-determinant 0.
    """
    config: FlowConfig
    codec: CodecParams
    weights: np.ndarray
    biases: np.ndarray
    bypass: bool = False
    _module_cache: List[Any] = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'weights', np.ascontiguousarray(self.weights, dtype=np.float64))
        object.__setattr__(self, 'biases', np.ascontiguousarray(self.biases, dtype=np.float64))
        self.weights.setflags(write=False)
        self.biases.setflags(write=False)
        expected_weights: int = weight_count(self.config.dims, self.config.layers, self.config.hidden_mult)
        expected_biases: int = bias_count(self.config.dims, self.config.layers, self.config.hidden_mult)
        if self.weights.shape != (expected_weights,) or self.biases.shape != (expected_biases,):
            raise ShapeMismatch(f'Flow with dims={self.config.dims}, layers={self.config.layers}, hidden_mult={self.config.hidden_mult} '
                                f'needs {expected_weights} weights and {expected_biases} biases '
                                f'(got {self.weights.size} and {self.biases.size})')
        if self.codec.dims != self.config.dims:
            raise ShapeMismatch(f'Codec dims {self.codec.dims} do not match flow dims {self.config.dims}')

    def __eq__(self, other: object) -> bool:
        """
        Equality of everything a flow file stores, weights compared bit by bit.
        """
        if not isinstance(other, FlowParams):
            return NotImplemented
        return (architecture_of(self.config) == architecture_of(other.config)
                and self.codec == other.codec
                and self.bypass == other.bypass
                and self.weights.tobytes() == other.weights.tobytes()
                and self.biases.tobytes() == other.biases.tobytes())

    def __hash__(self) -> int:
        return hash((architecture_of(self.config), self.codec, self.bypass, self.weights.tobytes(), self.biases.tobytes()))

    @property
    def module(self) -> MaskedBlockFlow:
        """
        Evaluation module for these parameters, built on first use.
        """
        if not self._module_cache:
            module = MaskedBlockFlow(self.config.dims, self.config.layers, self.config.hidden_mult, self.codec.theta)
            module.load_flat(self.weights, self.biases)
            module.requires_grad_(False)
            self._module_cache.append(module)
        return self._module_cache[0]


def architecture_of(config: FlowConfig) -> Tuple[int, int, int, float, float]:
    """
    The part of a flow configuration a flow file stores.
    """
    return (config.dims, config.layers, config.hidden_mult, config.sigma_latent, config.theta)


@dataclass(frozen=True)
class TransformResult:
    """
    Output of the flow for a batch.

    Attributes:
        z_batch (np.ndarray): (n, dims) latent vectors.
        logdet_batch (np.ndarray): (n,) log |det J| per item.
    """
    z_batch: np.ndarray
    logdet_batch: np.ndarray


@dataclass
class TrainingReport:
    """
    Progress information of one training run.

    Attributes:
        initial_log_likelihood (float): Mean log-likelihood of the training sample before the first step.
        final_log_likelihood (float): Mean log-likelihood of the training sample after the last step.
        epoch_log_likelihood (List[float]): Window-averaged step log-likelihood at the end of every epoch.
        steps (int): Number of gradient steps.
        sample_size (int): Number of keys trained on.
        seconds (float): Wall time of training.
    """
    initial_log_likelihood: float = float('nan')
    final_log_likelihood: float = float('nan')
    epoch_log_likelihood: List[float] = field(default_factory=list)
    steps: int = 0
    sample_size: int = 0
    seconds: float = 0.0


def log_asinh_derivative(pre: torch.Tensor) -> torch.Tensor:
    """
    log asinh'(a) = -log(1 + a^2) / 2.
    """
    return -0.5 * torch.log1p(pre * pre)


def feature_spans(dims: int, theta: float) -> List[float]:
    """
    Largest difference between two values of every feature below the integral part.

    Digits lie in [0, theta - 1] and the residual fraction in [0, 1). The first entry belongs to the integral
    part, which never follows another feature, and is unused.
    """
    return [theta - 1.0] * (dims - 1) + [1.0]


class MaskedBlockFlow(torch.nn.Module):
    """
    Block autoregressive flow with masked affine layers, float64 throughout.

    Parameters are kept flat in the storage order of flow files; index buffers scatter them into the
    dense masked matrices on every forward pass so autograd reaches the flat tensors directly.
    """

    def __init__(self, dims: int, layers: int, hidden_mult: int, theta: float) -> None:
        super().__init__()
        self.dims: int = dims
        self.blocks: List[Tuple[int, int]] = layer_blocks(dims, layers, hidden_mult)
        self.spans: List[float] = feature_spans(dims, theta)
        self.weights = torch.nn.Parameter(torch.zeros(weight_count(dims, layers, hidden_mult), dtype=torch.float64))
        self.biases = torch.nn.Parameter(torch.zeros(bias_count(dims, layers, hidden_mult), dtype=torch.float64))
        self._layout: List[Tuple[int, int, torch.Tensor, torch.Tensor, torch.Tensor]] = []
        weight_offset: int = 0
        bias_offset: int = 0
        for in_block, out_block in self.blocks:
            rows: List[int] = []
            cols: List[int] = []
            diagonal_positions: List[int] = []
            for k in range(dims):
                for j in range(k + 1):
                    for row in range(out_block):
                        for col in range(in_block):
                            if j == k:
                                diagonal_positions.append(weight_offset + len(rows))
                            rows.append(k * out_block + row)
                            cols.append(j * in_block + col)
            count: int = len(rows)
            self._layout.append((weight_offset, bias_offset,
                                 torch.tensor(rows, dtype=torch.long), torch.tensor(cols, dtype=torch.long),
                                 torch.tensor(diagonal_positions, dtype=torch.long).reshape(dims, out_block, in_block)))
            weight_offset += count
            bias_offset += out_block * dims

    def load_flat(self, weights: np.ndarray, biases: np.ndarray) -> None:
        """
        Copy flat numpy parameters into the module.
        """
        with torch.no_grad():
            self.weights.copy_(torch.from_numpy(np.array(weights, dtype=np.float64)))
            self.biases.copy_(torch.from_numpy(np.array(biases, dtype=np.float64)))

    def flat(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Current parameters as flat numpy arrays.
        """
        return self.weights.detach().numpy().copy(), self.biases.detach().numpy().copy()

    def _carry_dominant(self, matrix: torch.Tensor) -> torch.Tensor:
        """
        First layer weights: column j additionally gets sum over l > j of w[:, l] * span_l.

        Columns are built from the least significant feature up. A row of block k has zeros in the columns
        after k, so nothing is carried into its masked columns.
        """
        columns: List[torch.Tensor] = [matrix[:, 0]] * self.dims
        carry: torch.Tensor = torch.zeros(matrix.shape[0], dtype=torch.float64)
        for column in reversed(range(self.dims)):
            columns[column] = matrix[:, column] + carry
            carry = carry + columns[column] * self.spans[column]
        return torch.stack(columns, dim=1)

    def forward(self, x: torch.Tensor, with_logdet: bool = True) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:  # pylint: disable=too-many-locals
        """
        Transform a (n, dims) batch.

        Args:
            x (torch.Tensor): Expanded keys.
            with_logdet (bool): Also compute log |det J|.

        Returns:
            Tuple[torch.Tensor, Optional[torch.Tensor]]: z of shape (n, dims) and logdet of shape (n,) or None.
        """
        hidden: torch.Tensor = x
        log_diagonal: Optional[torch.Tensor] = None
        last: int = len(self.blocks) - 1
        for layer, ((in_block, out_block), (weight_offset, bias_offset, rows, cols, diagonal_positions)) \
                in enumerate(zip(self.blocks, self._layout)):
            count: int = rows.shape[0]
            values: torch.Tensor = torch.exp(self.weights[weight_offset:weight_offset + count])
            matrix: torch.Tensor = torch.zeros((self.dims * out_block, self.dims * in_block), dtype=torch.float64)
            matrix = matrix.index_put((rows, cols), values)
            if layer == 0:
                matrix = self._carry_dominant(matrix)
            bias: torch.Tensor = self.biases[bias_offset:bias_offset + self.dims * out_block]
            # accumulate input column by column, each output is summed in the same order for every batch size
            pre: torch.Tensor = bias.unsqueeze(0).expand(hidden.shape[0], -1)
            for column in range(self.dims * in_block):
                pre = pre + hidden[:, column:column + 1] * matrix[:, column]
            if with_logdet:
                # diagonal blocks carry nothing, their log weights are the raw parameters
                log_block: torch.Tensor = self.weights[diagonal_positions]
                if log_diagonal is None:
                    log_diagonal = log_block.unsqueeze(0).expand(hidden.shape[0], -1, -1, -1)
                else:
                    # (n, dims, out, in) + (n, dims, 1, in) -> log-sum-exp over in
                    log_diagonal = torch.logsumexp(log_block.unsqueeze(0) + log_diagonal.transpose(2, 3), dim=3, keepdim=True)
                if layer != last:
                    log_derivative: torch.Tensor = log_asinh_derivative(pre).reshape(hidden.shape[0], self.dims, out_block, 1)
                    log_diagonal = log_diagonal + log_derivative
            hidden = torch.asinh(pre) if layer != last else pre
        if not with_logdet or log_diagonal is None:
            return hidden, None
        return hidden, log_diagonal.reshape(hidden.shape[0], self.dims).sum(dim=1)


def _aligned_forward(module: MaskedBlockFlow, features: np.ndarray, with_logdet: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Evaluate a chunk with its rows padded to a multiple of ROW_ALIGNMENT, so a key gives the same bits in every batch.
    """
    count: int = features.shape[0]
    padded_count: int = -(-count // ROW_ALIGNMENT) * ROW_ALIGNMENT
    padded: np.ndarray = np.zeros((padded_count, features.shape[1]), dtype=np.float64)
    padded[:count] = features
    with torch.no_grad():
        z, logdet = module(torch.from_numpy(padded), with_logdet=with_logdet)
    return z.numpy()[:count].copy(), (logdet.numpy()[:count].copy() if logdet is not None else None)


def initial_params(config: FlowConfig, codec: CodecParams) -> FlowParams:
    """
    Seeded initialization: weights uniform in [-0.1, 0.1], biases zero.

    Args:
        config (FlowConfig): Architecture and seed.
        codec (CodecParams): Codec to embed.

    Returns:
        FlowParams: Untrained parameters.
    """
    rng: np.random.Generator = np.random.default_rng(config.seed)
    weights: np.ndarray = rng.uniform(-INIT_RANGE, INIT_RANGE, size=weight_count(config.dims, config.layers, config.hidden_mult))
    biases: np.ndarray = np.zeros(bias_count(config.dims, config.layers, config.hidden_mult), dtype=np.float64)
    return FlowParams(config=config, codec=codec, weights=weights, biases=biases)


def bypass_params(config: FlowConfig, codec: CodecParams) -> FlowParams:
    """
    Identity flow for the given codec (the path used when the flow is switched off).
    """
    return FlowParams(config=config, codec=codec,
                      weights=np.zeros(weight_count(config.dims, config.layers, config.hidden_mult)),
                      biases=np.zeros(bias_count(config.dims, config.layers, config.hidden_mult)),
                      bypass=True)


def _check_shape(x_batch: np.ndarray, dims: int) -> np.ndarray:
    array: np.ndarray = np.asarray(x_batch, dtype=np.float64)
    if array.ndim == 1 and array.size == 0:
        return array.reshape(0, dims)
    if array.ndim != 2 or array.shape[1] != dims:
        raise ShapeMismatch(f'Feature vectors must have {dims} components (got shape {array.shape})')
    return array


def flow_forward(x_batch: np.ndarray, params: FlowParams) -> TransformResult:
    """
    Transform a batch of feature vectors and compute the log-determinants.

    Args:
        x_batch (np.ndarray): (n, dims) feature vectors.
        params (FlowParams): Flow parameters.

    Returns:
        TransformResult: Latent vectors and log |det J| per item.

    Raises:
        ShapeMismatch: If a vector does not have dims components.
    """
    features: np.ndarray = _check_shape(x_batch, params.config.dims)
    if params.bypass:
        return TransformResult(z_batch=features.copy(), logdet_batch=np.zeros(features.shape[0], dtype=np.float64))
    z_batch, logdet_batch = _aligned_forward(params.module, features, with_logdet=True)
    assert logdet_batch is not None
    return TransformResult(z_batch=z_batch, logdet_batch=logdet_batch)


def _gaussian_log_normalizer(sigma_latent: float) -> float:
    return math.log(sigma_latent) + 0.5 * math.log(2.0 * math.pi)


def log_likelihood(result: TransformResult, sigma_latent: float) -> float:
    """
    Mean log-likelihood of a transformed batch under N(0, sigma_latent^2 I).

    Args:
        result (TransformResult): Flow output.
        sigma_latent (float): Latent standard deviation.

    Returns:
        float: mean over items of sum_k(-z_k^2 / (2 sigma^2) - log(sigma sqrt(2 pi))) + logdet.
    """
    z: np.ndarray = np.asarray(result.z_batch, dtype=np.float64)
    if z.shape[0] == 0:
        return float('nan')
    per_item: np.ndarray = (-(z * z) / (2.0 * sigma_latent * sigma_latent) - _gaussian_log_normalizer(sigma_latent)).sum(axis=1)
    return float(np.mean(per_item + np.asarray(result.logdet_batch, dtype=np.float64)))


def _torch_log_likelihood(module: MaskedBlockFlow, features: torch.Tensor, sigma_latent: float) -> torch.Tensor:
    z, logdet = module(features)
    assert logdet is not None
    per_item: torch.Tensor = (-(z * z) / (2.0 * sigma_latent * sigma_latent) - _gaussian_log_normalizer(sigma_latent)).sum(dim=1)
    return (per_item + logdet).mean()


def training_loss(params: FlowParams, x_batch: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Negative mean log-likelihood of a batch and its gradients with respect to the flat parameters.

    Args:
        params (FlowParams): Point at which the loss is evaluated.
        x_batch (np.ndarray): (n, dims) feature vectors.

    Returns:
        Tuple[float, np.ndarray, np.ndarray]: Loss, gradient for the weights, gradient for the biases.
    """
    module = MaskedBlockFlow(params.config.dims, params.config.layers, params.config.hidden_mult, params.codec.theta)
    module.load_flat(params.weights, params.biases)
    features: torch.Tensor = torch.from_numpy(np.ascontiguousarray(_check_shape(x_batch, params.config.dims)))
    loss: torch.Tensor = -_torch_log_likelihood(module, features, params.config.sigma_latent)
    loss.backward()
    assert module.weights.grad is not None and module.biases.grad is not None
    return float(loss.item()), module.weights.grad.numpy().copy(), module.biases.grad.numpy().copy()


def features_of(keys: np.ndarray, codec: CodecParams) -> np.ndarray:
    """
    Normalize and expand keys.
    """
    return expand_batch(normalize_batch(keys, codec), codec)


def evaluate_log_likelihood(keys: np.ndarray, params: FlowParams) -> float:
    """
    Mean log-likelihood of raw keys under the flow.

    Args:
        keys (np.ndarray): Raw keys.
        params (FlowParams): Flow parameters (with their codec).

    Returns:
        float: Mean log-likelihood.
    """
    return log_likelihood(flow_forward(features_of(np.asarray(keys, dtype=np.float64), params.codec), params), params.config.sigma_latent)


def train_flow(keys: np.ndarray, config: FlowConfig) -> FlowParams:
    """
    Fit the codec and train a flow on a sample of the keys.

    Args:
        keys (np.ndarray): Sorted keys with at least two distinct values.
        config (FlowConfig): Architecture and training settings.

    Returns:
        FlowParams: Trained parameters.

    Raises:
        DegenerateRange: If the keys do not span a range.
        FlowDiverged: If a step produces a non-finite loss or gradient.
    """
    return train_flow_with_report(keys, config)[0]


# pylint: disable-next=too-many-locals
def train_flow_with_report(keys: np.ndarray, config: FlowConfig) -> Tuple[FlowParams, TrainingReport]:
    """
    Like train_flow, also returns a TrainingReport.
    """
    start: float = time.perf_counter()
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    codec: CodecParams = fit_codec(key_array, config.theta, config.dims)
    params: FlowParams = initial_params(config, codec)
    report = TrainingReport()
    # separate stream so sampling does not shift the initialization
    rng: np.random.Generator = np.random.default_rng([config.seed, 1])
    sample_size: int = max(1, min(key_array.size, int(round(config.sample_fraction * key_array.size))))
    sample: np.ndarray = np.sort(rng.choice(key_array.size, size=sample_size, replace=False))
    features: torch.Tensor = torch.from_numpy(np.ascontiguousarray(features_of(key_array[sample], codec)))
    report.sample_size = sample_size

    module = MaskedBlockFlow(config.dims, config.layers, config.hidden_mult, codec.theta)
    module.load_flat(params.weights, params.biases)
    with torch.no_grad():
        report.initial_log_likelihood = float(_torch_log_likelihood(module, features, config.sigma_latent).item())
    if config.epochs == 0:
        report.final_log_likelihood = report.initial_log_likelihood
        report.seconds = time.perf_counter() - start
        return params, report

    optimizer = torch.optim.SGD(module.parameters(), lr=config.learning_rate)
    history: List[float] = []
    for epoch in range(config.epochs):
        order: np.ndarray = rng.permutation(sample_size)
        for begin in range(0, sample_size, config.batch_size):
            batch: torch.Tensor = features[torch.from_numpy(order[begin:begin + config.batch_size])]
            optimizer.zero_grad()
            log_likelihood_value: torch.Tensor = _torch_log_likelihood(module, batch, config.sigma_latent)
            if not torch.isfinite(log_likelihood_value):
                raise FlowDiverged(f'Non-finite log-likelihood in epoch {epoch} step {report.steps}')
            (-log_likelihood_value).backward()
            grad_norm: torch.Tensor = torch.nn.utils.clip_grad_norm_(module.parameters(), config.clip_norm)
            if not torch.isfinite(grad_norm):
                raise FlowDiverged(f'Non-finite gradient in epoch {epoch} step {report.steps}')
            optimizer.step()
            history.append(float(log_likelihood_value.item()))
            report.steps += 1
        window: List[float] = history[-SMOOTHING_WINDOW:]
        report.epoch_log_likelihood.append(sum(window) / len(window))
        LOG.info('Flow training epoch %d/%d: smoothed log-likelihood %.6f', epoch + 1, config.epochs, report.epoch_log_likelihood[-1])

    weights, biases = module.flat()
    trained = FlowParams(config=config, codec=codec, weights=weights, biases=biases)
    with torch.no_grad():
        report.final_log_likelihood = float(_torch_log_likelihood(trained.module, features, config.sigma_latent).item())
    report.seconds = time.perf_counter() - start
    LOG.info('Trained flow on %d keys in %d steps (%.2fs): log-likelihood %.6f -> %.6f', sample_size, report.steps, report.seconds,
             report.initial_log_likelihood, report.final_log_likelihood)
    return trained, report


def transform_features(features: np.ndarray, params: FlowParams) -> np.ndarray:
    """
    Run expanded keys through the flow (no log-determinant) and merge them.

    Args:
        features (np.ndarray): (n, dims) feature vectors.
        params (FlowParams): Flow parameters.

    Returns:
        np.ndarray: Merged transformed keys.
    """
    features = _check_shape(features, params.config.dims)
    if params.bypass:
        return merge_batch(features)
    outputs: List[np.ndarray] = []
    for begin in range(0, features.shape[0], params.config.batch_size):
        z_batch, _ = _aligned_forward(params.module, features[begin:begin + params.config.batch_size], with_logdet=False)
        outputs.append(merge_batch(z_batch))
    if not outputs:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(outputs)


def transform_keys(keys: np.ndarray, params: FlowParams) -> np.ndarray:
    """
    normalize -> expand -> flow -> merge for every key, in batches of config.batch_size.

    Args:
        keys (np.ndarray): Raw keys.
        params (FlowParams): Flow parameters.

    Returns:
        np.ndarray: Transformed keys, same length as keys.
    """
    key_array: np.ndarray = np.asarray(keys, dtype=np.float64)
    if key_array.size == 0:
        return np.empty(0, dtype=np.float64)
    return transform_features(features_of(key_array, params.codec), params)


def _open_for(target: FileTarget, mode: str) -> Any:
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode)  # pylint: disable=unspecified-encoding,consider-using-with
    # caller owns the stream, leave it open
    return contextlib.nullcontext(target)


def dump_flow(params: FlowParams) -> bytes:
    """
    Serialize flow parameters into the flow file format.

    Args:
        params (FlowParams): Parameters to serialize.

    Returns:
        bytes: Little-endian flow file content.
    """
    buffer = io.BytesIO()
    buffer.write(_HEADER.pack(FLOW_FILE_MAGIC, FLOW_FILE_VERSION))
    buffer.write(_ARCHITECTURE.pack(params.config.dims, params.config.layers, params.config.hidden_mult,
                                    params.config.sigma_latent, params.codec.theta, params.codec.mu, params.codec.sigma,
                                    1 if params.bypass else 0))
    buffer.write(_COUNT.pack(params.weights.size))
    buffer.write(params.weights.astype('<f8').tobytes())
    buffer.write(_COUNT.pack(params.biases.size))
    buffer.write(params.biases.astype('<f8').tobytes())
    return buffer.getvalue()


def save_flow(params: FlowParams, sink: FileTarget) -> None:
    """
    Write flow parameters to a path or a binary stream.

    Args:
        params (FlowParams): Parameters to write.
        sink (FileTarget): Path or writable binary stream.
    """
    with _open_for(sink, 'wb') as stream:
        stream.write(dump_flow(params))


class _Reader:  # pylint: disable=too-few-public-methods
    def __init__(self, data: bytes) -> None:
        self.data: bytes = data
        self.offset: int = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise TruncatedFile(f'Flow file ends while reading {what} ({len(self.data) - self.offset} of {size} bytes left)')
        chunk: bytes = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def parse_flow(data: bytes) -> FlowParams:  # pylint: disable=too-many-locals
    """
    Parse the content of a flow file.

    Args:
        data (bytes): File content.

    Returns:
        FlowParams: Parameters; training-only settings take their defaults.

    Raises:
        BadMagic: If the magic bytes do not match.
        VersionMismatch: If the format version is not supported.
        TruncatedFile: If the content ends early.
        FlowFileError: If the stored counts do not match the architecture.
    """
    reader = _Reader(data)
    if len(data) < len(FLOW_FILE_MAGIC) and FLOW_FILE_MAGIC.startswith(data):
        raise TruncatedFile(f'Flow file ends inside the magic bytes ({len(data)} bytes)')
    if data[:len(FLOW_FILE_MAGIC)] != FLOW_FILE_MAGIC:
        raise BadMagic(f'Not a flow file: magic is {data[:len(FLOW_FILE_MAGIC)]!r}, expected {FLOW_FILE_MAGIC!r}')
    _, version = _HEADER.unpack(reader.take(_HEADER.size, 'header'))
    if version != FLOW_FILE_VERSION:
        raise VersionMismatch(f'Flow file format version {version} is not supported (expected {FLOW_FILE_VERSION})', version=version)
    dims, layers, hidden_mult, sigma_latent, theta, mu, sigma, bypass = _ARCHITECTURE.unpack(reader.take(_ARCHITECTURE.size, 'architecture'))
    (n_weights,) = _COUNT.unpack(reader.take(_COUNT.size, 'weight count'))
    weights: np.ndarray = np.frombuffer(reader.take(8 * n_weights, 'weights'), dtype='<f8').astype(np.float64)
    (n_biases,) = _COUNT.unpack(reader.take(_COUNT.size, 'bias count'))
    biases: np.ndarray = np.frombuffer(reader.take(8 * n_biases, 'biases'), dtype='<f8').astype(np.float64)
    try:
        config = FlowConfig(dims=dims, layers=layers, hidden_mult=hidden_mult, sigma_latent=sigma_latent, theta=theta)
        return FlowParams(config=config, codec=CodecParams(mu=mu, sigma=sigma, theta=theta, dims=dims),
                          weights=weights, biases=biases, bypass=bool(bypass))
    except (ShapeMismatch, ConfigurationError, CodecError) as err:
        raise FlowFileError(f'Flow file content is inconsistent: {err}') from err


def load_flow(source: FileTarget) -> FlowParams:
    """
    Read flow parameters from a path or a binary stream.

    Args:
        source (FileTarget): Path or readable binary stream.

    Returns:
        FlowParams: Parameters as written by save_flow.
    """
    with _open_for(source, 'rb') as stream:
        return parse_flow(stream.read())
