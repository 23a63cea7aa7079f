"""Deposit-weighted finality overlay with accountable slashing, dynamic
validator sets, defensive fork choice, and a deterministic adversarial
simulator."""

from .config import ProtocolConfig
from .leak import LeakConfig

__all__ = ["ProtocolConfig", "LeakConfig"]

__version__ = "0.1.0"
