"""Block tree and the derived checkpoint tree.

Blocks form a tree rooted at a fixed genesis block whose id is 32 zero bytes.
Every block whose height is a multiple of the configured spacing E is a
checkpoint; the checkpoint height of the block at height k*E is k.  The tree
answers ancestry, height, and conflict queries; everything here is pure and
immutable after insertion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from . import codec
from .errors import (DigestMismatch, DuplicateId, NonMonotonicTimestamp,
                     NotACheckpoint, UnknownBlock, UnknownParent)

GENESIS_ID = b"\x00" * 32


@dataclass(frozen=True, slots=True)
class VoteData:
    """The single vote message: validator, source/target checkpoints, heights.

    The signature is a keyed digest over the canonical encoding of
    (source, target, source_height, target_height) under the validator's
    secret; see `votes.Keyring`.
    """
    validator_index: int
    validator_pubkey: bytes
    source: bytes
    target: bytes
    source_height: int
    target_height: int
    signature: bytes

    @property
    def key(self) -> tuple:
        """Identity of the vote minus the signature; used for deduplication."""
        return (self.validator_index, self.source, self.target,
                self.source_height, self.target_height)

    def encode(self) -> bytes:
        return codec.encode_vote(self.validator_index, self.validator_pubkey,
                                 self.source, self.target, self.source_height,
                                 self.target_height, self.signature)


@dataclass(frozen=True, slots=True)
class VoteInclusion:
    vote: VoteData

    def encode(self) -> bytes:
        return b"\x01" + codec.blob(self.vote.encode())


@dataclass(frozen=True, slots=True)
class SlashEvidence:
    """Two votes by the same validator exhibiting a slashing violation."""
    first: VoteData
    second: VoteData

    def encode(self) -> bytes:
        return b"\x02" + codec.blob(self.first.encode()) + codec.blob(self.second.encode())


@dataclass(frozen=True, slots=True)
class Deposit:
    validator_index: int
    validator_pubkey: bytes
    amount: int

    def encode(self) -> bytes:
        return (b"\x03" + codec.u64(self.validator_index)
                + self.validator_pubkey + codec.u64(self.amount))


@dataclass(frozen=True, slots=True)
class Withdraw:
    validator_index: int
    validator_pubkey: bytes

    def encode(self) -> bytes:
        return b"\x04" + codec.u64(self.validator_index) + self.validator_pubkey


Transaction = Union[VoteInclusion, SlashEvidence, Deposit, Withdraw]


@dataclass(frozen=True, slots=True)
class Block:
    id: bytes
    parent: bytes | None          # None only for the genesis block
    height: int
    timestamp: int
    proposer: int | None          # validator index, None for the external engine
    payload: tuple[Transaction, ...]


def encode_block_body(parent: bytes, height: int, timestamp: int,
                      proposer: int | None, payload: tuple[Transaction, ...]) -> bytes:
    prop = codec.EXTERNAL_PROPOSER if proposer is None else proposer
    parts = [parent, codec.u64(height), codec.u64(timestamp), codec.u64(prop),
             codec.u32(len(payload))]
    parts.extend(codec.blob(tx.encode()) for tx in payload)
    return b"".join(parts)


def block_id(parent: bytes, height: int, timestamp: int, proposer: int | None,
             payload: tuple[Transaction, ...], hash_name: str = "sha256") -> bytes:
    return codec.digest(encode_block_body(parent, height, timestamp, proposer, payload),
                        hash_name)


def make_block(parent_block: Block, timestamp: int, proposer: int | None,
               payload: tuple[Transaction, ...] = (),
               hash_name: str = "sha256") -> Block:
    """Build a child of `parent_block` with the canonical digest id."""
    height = parent_block.height + 1
    bid = block_id(parent_block.id, height, timestamp, proposer, payload, hash_name)
    return Block(bid, parent_block.id, height, timestamp, proposer, payload)


class BlockTree:
    """Connected, acyclic block store with parent/children indexes.

    Single writer; all queries are pure.  E is the checkpoint spacing.
    """

    def __init__(self, spacing: int, hash_name: str = "sha256"):
        self.spacing = spacing
        self.hash_name = hash_name
        root = Block(GENESIS_ID, None, 0, 0, None, ())
        self.root = GENESIS_ID
        self.blocks: dict[bytes, Block] = {GENESIS_ID: root}
        self.children: dict[bytes, list[bytes]] = {GENESIS_ID: []}

    def __contains__(self, bid: bytes) -> bool:
        return bid in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def get(self, bid: bytes) -> Block:
        try:
            return self.blocks[bid]
        except KeyError:
            raise UnknownBlock(bid.hex()) from None

    def insert_block(self, block: Block) -> None:
        if block.id in self.blocks:
            raise DuplicateId(block.id.hex())
        if block.parent is None or block.parent not in self.blocks:
            raise UnknownParent(block.id.hex())
        parent = self.blocks[block.parent]
        if block.height != parent.height + 1:
            raise DigestMismatch("height must be parent height + 1")
        if block.timestamp <= parent.timestamp:
            raise NonMonotonicTimestamp(
                f"timestamp {block.timestamp} not after parent {parent.timestamp}")
        expect = block_id(block.parent, block.height, block.timestamp,
                          block.proposer, block.payload, self.hash_name)
        if expect != block.id:
            raise DigestMismatch(block.id.hex())
        self.blocks[block.id] = block
        self.children[block.id] = []
        self.children[block.parent].append(block.id)

    # -- checkpoint queries ---------------------------------------------------

    def is_checkpoint(self, bid: bytes) -> bool:
        return self.get(bid).height % self.spacing == 0

    def checkpoint_height(self, bid: bytes) -> int | None:
        """k for a block at height k*E, else None ("not a checkpoint")."""
        height = self.get(bid).height
        if height % self.spacing:
            return None
        return height // self.spacing

    def require_checkpoint(self, bid: bytes) -> int:
        cp = self.checkpoint_height(bid)
        if cp is None:
            raise NotACheckpoint(bid.hex())
        return cp

    # -- ancestry -------------------------------------------------------------

    def is_ancestor(self, a: bytes, b: bytes) -> bool:
        """True iff `a` lies on the parent path from `b` to the root (a == b counts)."""
        target = self.get(a)
        cursor = self.get(b)
        while cursor.height > target.height:
            cursor = self.blocks[cursor.parent]
        return cursor.id == a

    def ancestor_at(self, bid: bytes, height: int) -> bytes:
        cursor = self.get(bid)
        if height > cursor.height:
            raise NotAncestor(f"no ancestor of {bid.hex()} at height {height}")
        while cursor.height > height:
            cursor = self.blocks[cursor.parent]
        return cursor.id

    def latest_checkpoint(self, bid: bytes) -> bytes:
        """Nearest checkpoint on the path from `bid` to the root (self included)."""
        h = self.get(bid).height
        return self.ancestor_at(bid, h - h % self.spacing)

    def conflicting(self, a: bytes, b: bytes) -> bool:
        """True iff the checkpoints sit on distinct branches."""
        self.require_checkpoint(a)
        self.require_checkpoint(b)
        return not (self.is_ancestor(a, b) or self.is_ancestor(b, a))

    def checkpoint_chain(self, c: bytes) -> list[bytes]:
        """Checkpoints from the root to `c` inclusive, in root-first order."""
        self.require_checkpoint(c)
        chain = []
        cursor = self.get(c)
        while True:
            if cursor.height % self.spacing == 0:
                chain.append(cursor.id)
            if cursor.parent is None:
                break
            cursor = self.blocks[cursor.parent]
        chain.reverse()
        return chain

    def path(self, bid: bytes) -> list[bytes]:
        """All blocks from the root to `bid` inclusive."""
        out = []
        cursor = self.get(bid)
        while True:
            out.append(cursor.id)
            if cursor.parent is None:
                break
            cursor = self.blocks[cursor.parent]
        out.reverse()
        return out

    def leaves(self) -> list[bytes]:
        return [bid for bid, kids in self.children.items() if not kids]

    def iter_blocks(self) -> Iterator[Block]:
        return iter(self.blocks.values())
