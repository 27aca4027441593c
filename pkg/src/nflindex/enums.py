"""
This module defines general enums shared by the index, the workloads and the benchmark.
"""

from enum import Enum


class GenericEnum(Enum,):
    """
    GenericEnum is the base of all string valued enums of nflindex.
    The string representation is the value so that enums can be used as CLI choices and CSV cells.
    """

    def __str__(self) -> str:
        return self.value


class FlowMode(GenericEnum,):
    """
    Enum for the flow switching override.

    Attributes:
        AUTO (str): Decide by comparing tail conflict degrees.
        ON (str): Always transform keys with the flow.
        OFF (str): Never transform keys.
    """
    AUTO = 'auto'
    ON = 'on'
    OFF = 'off'


class Engine(GenericEnum,):
    """
    Enum for the index engine driven by the benchmark.
    """
    NFL = 'nfl'
    AFLI = 'afli'
    ORACLE = 'oracle'


class WorkloadMix(GenericEnum,):
    """
    Enum for the read/insert ratios of the running phase.
    """
    READ_ONLY = 'read-only'
    READ_HEAVY = 'read-heavy'
    WRITE_HEAVY = 'write-heavy'
    WRITE_ONLY = 'write-only'

    @property
    def read_ratio(self) -> float:
        """
        Fraction of lookups in the mix.

        Returns:
            float: 1.0, 0.8, 0.2 or 0.0.
        """
        return {'read-only': 1.0, 'read-heavy': 0.8, 'write-heavy': 0.2, 'write-only': 0.0}[self.value]


class DatasetKind(GenericEnum,):
    """
    Enum for the sources of key sets.
    """
    LOGNORMAL = 'lognormal'
    LONGLAT = 'longlat'
    LONGITUDES = 'longitudes'
    UNIFORM = 'uniform'
    FILE = 'file'


class BucketMode(GenericEnum,):
    """
    Enum for the two bucket flavours.

    Attributes:
        LINEAR (str): Appends on insert and scans the whole bucket on lookup (default).
        ORDERED (str): Keeps the bucket sorted and stops scanning early.
    """
    LINEAR = 'linear'
    ORDERED = 'ordered'


class OpKind(GenericEnum,):
    """
    Enum for the operation vocabulary of request batches.
    """
    LOOKUP = 'lookup'
    INSERT = 'insert'
    UPDATE = 'update'
    DELETE = 'delete'


class Outcome(GenericEnum,):
    """
    Enum for the per-operation outcome recorded in request batches.
    """
    OK = 'ok'
    FOUND = 'found'
    MISSING = 'missing'
    ALREADY_EXISTS = 'already_exists'
    NOT_FOUND = 'not_found'
    OUT_OF_KEY_SPACE = 'out_of_key_space'
    ERROR = 'error'
