"""Protocol-level knobs shared by the engine, the simulator, and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConfigInvalid
from .leak import LeakConfig


@dataclass(frozen=True)
class ProtocolConfig:
    spacing: int = 100               # E: blocks between checkpoints
    delta: int = 8                   # max message delay, in ticks
    withdrawal_delay: int = 100      # omega, in epochs
    leak: LeakConfig = field(default_factory=LeakConfig)
    finder_fee: Fraction = Fraction(1, 100)
    stitching: bool = True           # require 2/3 of both forward and rear sets
    hash_name: str = "sha256"        # digest pinned so runs are reproducible

    def __post_init__(self):
        if self.spacing < 1:
            raise ConfigInvalid("spacing must be >= 1")
        if self.delta < 0:
            raise ConfigInvalid("delta must be >= 0")
        if self.withdrawal_delay < 0:
            raise ConfigInvalid("withdrawal delay must be >= 0")
        if not (0 <= self.finder_fee < 1):
            raise ConfigInvalid("finder fee must be in [0, 1)")

    def deadline(self, target_cp_height: int) -> int:
        """Last block number at which votes for a link into this target still
        count toward finalizing the link's source."""
        return (target_cp_height + 1) * self.spacing

    def epoch_of_height(self, height: int) -> int:
        return height // self.spacing
