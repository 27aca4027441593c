"""
Module containing the configuration of the index, the flow and the benchmark.

Configurations are frozen dataclasses validated on construction. They can be read from a JSON file
that may contain comments:

    {
        "nflindex": {
            "log_level": "info",
            "index": {"alpha": 2.0, "gamma": 0.99},
            "flow": {"epochs": 3, "seed": 7},  // flow training
            "bench": {"workload": "read-heavy"}
        }
    }
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

from json_minify import json_minify

from nflindex.enums import BucketMode, Engine, FlowMode, WorkloadMix
from nflindex.errors import ConfigurationError
from nflindex.util import log_extra_keys

if TYPE_CHECKING:
    from typing import Any, Dict, Optional, Set, Type, TypeVar

    T = TypeVar('T')

LOG: logging.Logger = logging.getLogger("nflindex")

SEED_ENVIRONMENT_VARIABLE: str = 'NFL_SEED'
DEFAULT_THETA: float = float(2 ** 20)


@dataclass(frozen=True)
class IndexConfig:
    """
    Configuration of the after-flow learned index.

    Attributes:
        alpha (float): Space amplification factor, scales rank positions and entry arrays.
        gamma (float): Tail percent used for the tail conflict degree.
        bucket_cap (int): Upper limit of the bucket capacity.
        max_depth (int): Deepest modelling recursion allowed.
        bucket_mode (BucketMode): Linear (append) or ordered (insertion sort) buckets.
    """
    alpha: float = 2.0
    gamma: float = 0.99
    bucket_cap: int = 6
    max_depth: int = 64
    bucket_mode: BucketMode = BucketMode.LINEAR

    def __post_init__(self) -> None:
        if not self.alpha >= 1.0:
            raise ConfigurationError(f'Invalid index configuration: alpha must be >= 1 (got {self.alpha})')
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f'Invalid index configuration: gamma must be in (0, 1] (got {self.gamma})')
        if self.bucket_cap < 2:
            raise ConfigurationError(f'Invalid index configuration: bucket_cap must be >= 2 (got {self.bucket_cap})')
        if self.max_depth < 1:
            raise ConfigurationError(f'Invalid index configuration: max_depth must be >= 1 (got {self.max_depth})')
        if not isinstance(self.bucket_mode, BucketMode):
            object.__setattr__(self, 'bucket_mode', _to_enum(BucketMode, self.bucket_mode, 'bucket_mode'))


@dataclass(frozen=True)
class FlowConfig:  # pylint: disable=too-many-instance-attributes
    """
    Configuration of the numerical normalizing flow and its training.

    Attributes:
        dims (int): Number of features each key is expanded into.
        layers (int): Number of masked affine layers.
        hidden_mult (int): Hidden width per input dimension.
        sigma_latent (float): Standard deviation of the normal latent distribution.
        batch_size (int): Minibatch size for training and batch size for inference.
        epochs (int): Passes over the training sample.
        sample_fraction (float): Fraction of the keys sampled for training.
        learning_rate (float): Step size of stochastic gradient ascent.
        seed (int): Seed for sampling and initialization.
        theta (float): Scale factor of the key codec.
        clip_norm (float): Maximum gradient norm per step.
    """
    dims: int = 2
    layers: int = 2
    hidden_mult: int = 2
    sigma_latent: float = 1e8
    batch_size: int = 256
    epochs: int = 3
    sample_fraction: float = 0.1
    learning_rate: float = 1e-2
    seed: int = 0
    theta: float = DEFAULT_THETA
    clip_norm: float = 10.0

    def __post_init__(self) -> None:
        if self.dims < 2:
            raise ConfigurationError(f'Invalid flow configuration: dims must be >= 2 (got {self.dims})')
        if self.layers < 1:
            raise ConfigurationError(f'Invalid flow configuration: layers must be >= 1 (got {self.layers})')
        if self.hidden_mult < 1:
            raise ConfigurationError(f'Invalid flow configuration: hidden_mult must be >= 1 (got {self.hidden_mult})')
        if not self.sigma_latent > 0:
            raise ConfigurationError(f'Invalid flow configuration: sigma_latent must be > 0 (got {self.sigma_latent})')
        if self.batch_size < 1:
            raise ConfigurationError(f'Invalid flow configuration: batch_size must be >= 1 (got {self.batch_size})')
        if self.epochs < 0:
            raise ConfigurationError(f'Invalid flow configuration: epochs must be >= 0 (got {self.epochs})')
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigurationError(f'Invalid flow configuration: sample_fraction must be in (0, 1] (got {self.sample_fraction})')
        if not self.learning_rate > 0:
            raise ConfigurationError(f'Invalid flow configuration: learning_rate must be > 0 (got {self.learning_rate})')
        if not self.theta > 1:
            raise ConfigurationError(f'Invalid flow configuration: theta must be > 1 (got {self.theta})')
        if not self.clip_norm > 0:
            raise ConfigurationError(f'Invalid flow configuration: clip_norm must be > 0 (got {self.clip_norm})')


@dataclass(frozen=True)
class BenchConfig:  # pylint: disable=too-many-instance-attributes
    """
    Configuration of one benchmark invocation.
    """
    workload: WorkloadMix = WorkloadMix.READ_HEAVY
    bulk_fraction: float = 0.5
    ops: int = 100_000
    zipf_s: float = 0.99
    batch: int = 256
    flow_mode: FlowMode = FlowMode.AUTO
    engine: Engine = Engine.NFL
    repeat: int = 5
    warmup_fraction: float = 0.01
    verify: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        for name, enum_type in (('workload', WorkloadMix), ('flow_mode', FlowMode), ('engine', Engine)):
            value = getattr(self, name)
            if not isinstance(value, enum_type):
                object.__setattr__(self, name, _to_enum(enum_type, value, name))
        if not 0.0 < self.bulk_fraction < 1.0:
            raise ConfigurationError(f'Invalid bench configuration: bulk_fraction must be in (0, 1) (got {self.bulk_fraction})')
        if self.ops < 0:
            raise ConfigurationError(f'Invalid bench configuration: ops must be >= 0 (got {self.ops})')
        if self.zipf_s < 0:
            raise ConfigurationError(f'Invalid bench configuration: zipf must be >= 0 (got {self.zipf_s})')
        if self.batch < 1:
            raise ConfigurationError(f'Invalid bench configuration: batch must be >= 1 (got {self.batch})')
        if self.repeat < 1:
            raise ConfigurationError(f'Invalid bench configuration: repeat must be >= 1 (got {self.repeat})')
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigurationError(f'Invalid bench configuration: warmup_fraction must be in [0, 1) (got {self.warmup_fraction})')


@dataclass
class Settings:
    """
    Everything read from a configuration file.
    """
    index: IndexConfig = field(default_factory=IndexConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    log_level: Optional[str] = None
    log_format: Optional[str] = None
    log_date_format: Optional[str] = None
    # sections whose seed was set in the file
    explicit_seeds: Set[str] = field(default_factory=set)

    def seed_for(self, section: str, flag: Optional[int] = None) -> int:
        """
        Seed for a section: the command line flag, the configuration file, NFL_SEED, then 0.
        """
        if flag is not None:
            return flag
        if section in self.explicit_seeds:
            return getattr(self, section).seed
        seed: Optional[int] = env_seed()
        return 0 if seed is None else seed


def _to_enum(enum_type: Type[T], value: Any, name: str) -> T:
    try:
        return enum_type(value)  # type: ignore[call-arg]
    except ValueError:
        raise ConfigurationError(f'Invalid value \'{value}\' for {name}. '
                                 f'Must be one of {[x.value for x in enum_type]}') from None  # type: ignore[attr-defined]


def _build(config_type: Type[T], section: Dict[str, Any], where: str) -> T:
    allowed: set[str] = {f.name for f in dataclasses.fields(config_type)}  # type: ignore[arg-type]
    log_extra_keys(LOG, where, section, allowed)
    try:
        return config_type(**{key: value for key, value in section.items() if key in allowed})
    except TypeError as err:
        raise ConfigurationError(f'Invalid configuration in {where}: {err}') from err


def env_seed(default: Optional[int] = None) -> Optional[int]:
    """
    Read the global seed fallback from the environment.

    Args:
        default (Optional[int]): Value returned when the variable is not set.

    Returns:
        Optional[int]: The seed from NFL_SEED or the default.

    Raises:
        ConfigurationError: If NFL_SEED is not an integer.
    """
    value: Optional[str] = os.environ.get(SEED_ENVIRONMENT_VARIABLE)
    if value is None or value.strip() == '':
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f'Invalid {SEED_ENVIRONMENT_VARIABLE}: "{value}" is not an integer') from None


def settings_from_dict(config: Dict[str, Any]) -> Settings:
    """
    Build settings from an already parsed configuration dictionary.

    Args:
        config (Dict[str, Any]): Dictionary with a top level 'nflindex' section.

    Returns:
        Settings: The validated settings.

    Raises:
        ConfigurationError: If the section is missing or a value is invalid.
    """
    if 'nflindex' not in config or not isinstance(config['nflindex'], dict):
        raise ConfigurationError("Invalid configuration: 'nflindex' is missing")
    section: Dict[str, Any] = config['nflindex']
    log_extra_keys(LOG, 'configuration', section, {'index', 'flow', 'bench', 'log_level', 'log_format', 'log_date_format'})
    settings = Settings()
    if 'index' in section and section['index'] is not None:
        settings.index = _build(IndexConfig, section['index'], 'index configuration')
    if 'flow' in section and section['flow'] is not None:
        settings.flow = _build(FlowConfig, section['flow'], 'flow configuration')
    if 'bench' in section and section['bench'] is not None:
        settings.bench = _build(BenchConfig, section['bench'], 'bench configuration')
    settings.explicit_seeds = {name for name in ('flow', 'bench') if isinstance(section.get(name), dict) and 'seed' in section[name]}
    if 'log_level' in section and section['log_level'] is not None:
        log_level: str = str(section['log_level']).upper()
        if log_level not in logging._nameToLevel:  # pylint: disable=protected-access
            raise ConfigurationError(f'Invalid log level: "{log_level}" not in {list(logging._nameToLevel.keys())}')  # pylint: disable=protected-access
        settings.log_level = log_level
    settings.log_format = section.get('log_format')
    settings.log_date_format = section.get('log_date_format')
    return settings


def load_config(path: str) -> Settings:
    """
    Read settings from a JSON file that may contain comments.

    Args:
        path (str): Path to the configuration file.

    Returns:
        Settings: The validated settings.

    Raises:
        ConfigurationError: If the file is not valid JSON or contains invalid values.
        FileNotFoundError: If the file does not exist.
    """
    with open(file=path, mode='r', encoding='utf-8') as config_file:
        try:
            config_dict: Dict[str, Any] = json.loads(json_minify(config_file.read(), strip_space=False))
        except json.JSONDecodeError as err:
            raise ConfigurationError(f'Could not load configuration file {path} ({err})') from err
    LOG.debug('Loaded configuration from %s', path)
    return settings_from_dict(config_dict)
