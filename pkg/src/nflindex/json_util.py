"""Module containing custom json encoders for the nflindex package."""
from __future__ import annotations
from typing import TYPE_CHECKING

from enum import Enum
import dataclasses
import json

import numpy as np

if TYPE_CHECKING:
    from typing import Any


class ExtendedEncoder(json.JSONEncoder):
    """Encoder for reports: enums, dataclasses and numpy values"""

    def default(self, o: Any) -> Any:
        """Serialize objects the standard encoder does not know

        Args:
            o (Any): object to encode

        Returns:
            Any: a json serializable representation
        """
        if isinstance(o, Enum):
            return o.value
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        return super().default(o)
