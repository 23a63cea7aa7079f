"""Vote construction, keyed-digest signatures, validity classes, and the pool.

Signatures are HMAC-SHA256 digests over the canonical vote core under
per-validator secrets derived from the run seed.  That keeps runs
deterministic; nothing in the safety analysis depends on a particular
signature scheme.

A vote is classified one of three ways:

    COUNTABLE       signature valid, source is an ancestor of the target,
                    heights match the tree, and the validator belongs to the
                    forward or rear set of the target's dynasty.  Only these
                    votes feed supermajority tallies.
    SIGNATURE_ONLY  signature valid but some chain-dependent check failed.
                    Kept forever: slashing violations are judged on the vote's
                    own fields, independent of any chain.
    INVALID         signature failed; dropped.
"""

from __future__ import annotations

import hashlib
import hmac
from enum import Enum

from . import codec
from .chain import BlockTree, VoteData
from .errors import BadSignature
from .validators import ValidatorId


class Keyring:
    """Per-run key material: secrets, public keys, signing, verification."""

    def __init__(self, seed: int):
        self.seed = seed
        self._secrets: dict[int, bytes] = {}
        self._ids: dict[int, ValidatorId] = {}
        self._verified: dict[tuple, bool] = {}

    def register(self, index: int) -> ValidatorId:
        if index not in self._secrets:
            secret = hashlib.sha256(b"ffg-secret" + codec.u64(self.seed) +
                                    codec.u64(index)).digest()
            pubkey = hashlib.sha256(b"ffg-public" + secret).digest()
            self._secrets[index] = secret
            self._ids[index] = ValidatorId(index, pubkey)
        return self._ids[index]

    def vid(self, index: int) -> ValidatorId:
        return self._ids[index]

    def known(self, index: int) -> bool:
        return index in self._secrets

    def sign(self, index: int, message: bytes) -> bytes:
        return hmac.new(self._secrets[index], message, hashlib.sha256).digest()

    def verify(self, vote: VoteData) -> bool:
        # the same vote is verified once per view; memoize per run
        memo_key = (vote.key, vote.signature)
        cached = self._verified.get(memo_key)
        if cached is not None:
            return cached
        vid = self._ids.get(vote.validator_index)
        if vid is None or vid.pubkey != vote.validator_pubkey:
            return False
        core = codec.encode_vote_core(vote.source, vote.target,
                                      vote.source_height, vote.target_height)
        expect = hmac.new(self._secrets[vote.validator_index], core,
                          hashlib.sha256).digest()
        ok = hmac.compare_digest(expect, vote.signature)
        self._verified[memo_key] = ok
        return ok


def sign_vote(keyring: Keyring, index: int, source: bytes, target: bytes,
              source_height: int, target_height: int) -> VoteData:
    vid = keyring.register(index)
    core = codec.encode_vote_core(source, target, source_height, target_height)
    return VoteData(index, vid.pubkey, source, target, source_height,
                    target_height, keyring.sign(index, core))


class VoteClass(Enum):
    COUNTABLE = "countable"
    SIGNATURE_ONLY = "signature-only"
    INVALID = "invalid"


def classify_vote(tree: BlockTree, snapshot_for, keyring: Keyring,
                  vote: VoteData) -> VoteClass:
    """Classification, not failure: see module docstring for the three classes.

    `snapshot_for(target_id)` returns the target checkpoint's dynasty snapshot
    (or None when its chain is not yet known to the caller).
    """
    if not keyring.verify(vote):
        return VoteClass.INVALID
    if vote.source not in tree or vote.target not in tree:
        return VoteClass.SIGNATURE_ONLY
    hs = tree.checkpoint_height(vote.source)
    ht = tree.checkpoint_height(vote.target)
    if hs is None or ht is None:
        return VoteClass.SIGNATURE_ONLY
    if hs != vote.source_height or ht != vote.target_height or hs >= ht:
        return VoteClass.SIGNATURE_ONLY
    if not tree.is_ancestor(vote.source, vote.target):
        return VoteClass.SIGNATURE_ONLY
    snap = snapshot_for(vote.target)
    if snap is None:
        return VoteClass.SIGNATURE_ONLY
    idx = vote.validator_index
    if idx not in snap.forward and idx not in snap.rear:
        return VoteClass.SIGNATURE_ONLY
    return VoteClass.COUNTABLE


class VotePool:
    """Multiset of signature-valid votes, indexed for tallies and slashing scans.

    Duplicates (same five-tuple) are ignored.  Votes that fail chain-dependent
    checks stay in the pool: the slashing scanner must see them.
    """

    def __init__(self, keyring: Keyring):
        self.keyring = keyring
        self.votes: list[VoteData] = []
        self.by_validator: dict[int, list[VoteData]] = {}
        self.by_link: dict[tuple[bytes, bytes], list[VoteData]] = {}
        self._keys: set[tuple] = set()

    def __len__(self) -> int:
        return len(self.votes)

    def __contains__(self, vote: VoteData) -> bool:
        return vote.key in self._keys

    def add(self, vote: VoteData) -> bool:
        """Index a verified vote; returns False for duplicates."""
        if not self.keyring.verify(vote):
            raise BadSignature(vote.validator_index)
        if vote.key in self._keys:
            return False
        self._keys.add(vote.key)
        self.votes.append(vote)
        self.by_validator.setdefault(vote.validator_index, []).append(vote)
        self.by_link.setdefault((vote.source, vote.target), []).append(vote)
        return True

    def link_votes(self, source: bytes, target: bytes) -> list[VoteData]:
        return self.by_link.get((source, target), [])

    def validator_votes(self, index: int) -> list[VoteData]:
        return self.by_validator.get(index, [])
