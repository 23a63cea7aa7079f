"""Validator lifecycle: deposits, dynasties, exits, and the two membership sets.

A validator joining (or leaving) via a message included at dynasty d becomes
active (or inactive) at dynasty d+2.  For a dynasty d the two deposit-weighted
sets are

    forward(d) = { v : start <= d <  end }
    rear(d)    = { v : start <  d <= end }

so forward(d) == rear(d+1).  All 2/3 and 1/3 comparisons elsewhere use
cross-multiplication on integer deposits; no floats ever enter the math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (AlreadyLeaving, AlreadySlashed, NotActive, NotLeaving,
                     Rejoin, UnknownValidator, ZeroDeposit)


@dataclass(frozen=True, slots=True)
class ValidatorId:
    index: int
    pubkey: bytes


@dataclass(slots=True)
class ValidatorRecord:
    vid: ValidatorId
    deposit: int
    start_dynasty: int
    end_dynasty: int | None = None      # None while no withdraw message is included
    unlock_epoch: int | None = None
    slashed: bool = False
    withdrawn: bool = False
    leaked: int = 0

    def copy(self) -> "ValidatorRecord":
        return ValidatorRecord(self.vid, self.deposit, self.start_dynasty,
                               self.end_dynasty, self.unlock_epoch,
                               self.slashed, self.withdrawn, self.leaked)

    @property
    def weight(self) -> int:
        """Deposit that counts toward thresholds; zero once slashed or paid out."""
        if self.slashed or self.withdrawn:
            return 0
        return self.deposit

    def in_forward(self, dynasty: int) -> bool:
        end = self.end_dynasty
        return self.start_dynasty <= dynasty and (end is None or dynasty < end)

    def in_rear(self, dynasty: int) -> bool:
        end = self.end_dynasty
        return self.start_dynasty < dynasty and (end is None or dynasty <= end)


@dataclass
class ValidatorRegistry:
    """Chain-local validator state; cloneable for fork evaluation."""

    records: dict[ValidatorId, ValidatorRecord] = field(default_factory=dict)

    def clone(self) -> "ValidatorRegistry":
        return ValidatorRegistry({vid: rec.copy() for vid, rec in self.records.items()})

    def get(self, vid: ValidatorId) -> ValidatorRecord:
        try:
            return self.records[vid]
        except KeyError:
            raise UnknownValidator(vid.index) from None

    def by_index(self, index: int) -> ValidatorRecord | None:
        for rec in self.records.values():
            if rec.vid.index == index:
                return rec
        return None

    def add_genesis_validator(self, vid: ValidatorId, deposit: int) -> None:
        """Bootstrap member, active from dynasty 0."""
        if deposit <= 0:
            raise ZeroDeposit(vid.index)
        if vid in self.records:
            raise Rejoin(vid.index)
        self.records[vid] = ValidatorRecord(vid, deposit, start_dynasty=0)

    def process_deposit(self, vid: ValidatorId, amount: int, current_dynasty: int) -> None:
        """Join request included at dynasty d: active from dynasty d+2.

        Identifiers are never reused, so any previously seen id (even a fully
        withdrawn one) is a Rejoin error.
        """
        if amount <= 0:
            raise ZeroDeposit(vid.index)
        if vid in self.records:
            raise Rejoin(vid.index)
        self.records[vid] = ValidatorRecord(vid, amount, start_dynasty=current_dynasty + 2)

    def process_withdraw(self, vid: ValidatorId, current_dynasty: int) -> None:
        """Leave request included at dynasty d: inactive from dynasty d+2.

        The withdrawal-delay countdown starts later, at the first block of the
        end dynasty on the chain being evaluated (see mark_end_dynasty_started).
        """
        rec = self.get(vid)
        if rec.end_dynasty is not None:
            raise AlreadyLeaving(vid.index)
        if rec.start_dynasty > current_dynasty:
            raise NotActive(vid.index)
        rec.end_dynasty = current_dynasty + 2

    def mark_end_dynasty_started(self, dynasty: int, epoch: int,
                                 withdrawal_delay: int, previous: int | None = None) -> None:
        """Anchor unlock epochs for validators whose end dynasty just began.

        `previous` is the dynasty before the jump; a single block can complete
        several finalizations, so every end dynasty in (previous, dynasty]
        starts here.
        """
        low = dynasty - 1 if previous is None else previous
        for rec in self.records.values():
            if rec.end_dynasty is None or rec.unlock_epoch is not None:
                continue
            if low < rec.end_dynasty <= dynasty:
                rec.unlock_epoch = epoch + withdrawal_delay

    def slash(self, vid: ValidatorId) -> int:
        """Zero the deposit; returns the amount taken.  Idempotence is the caller's
        job (AlreadySlashed)."""
        rec = self.get(vid)
        if rec.slashed:
            raise AlreadySlashed(vid.index)
        taken = rec.deposit
        rec.deposit = 0
        rec.slashed = True
        return taken

    def withdrawable(self, vid: ValidatorId, current_epoch: int) -> bool:
        rec = self.get(vid)
        if rec.end_dynasty is None:
            raise NotLeaving(vid.index)
        if rec.slashed:
            return False
        return rec.unlock_epoch is not None and current_epoch >= rec.unlock_epoch

    # -- membership sets --------------------------------------------------------

    def forward_set(self, dynasty: int) -> set[ValidatorId]:
        return {vid for vid, rec in self.records.items() if rec.in_forward(dynasty)}

    def rear_set(self, dynasty: int) -> set[ValidatorId]:
        return {vid for vid, rec in self.records.items() if rec.in_rear(dynasty)}

    def total_weight(self, members) -> int:
        return sum(self.get(vid).weight for vid in members)

    def total_deposit(self) -> int:
        return sum(rec.weight for rec in self.records.values())
