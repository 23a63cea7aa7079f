"""Commandment violations: detection, evidence, penalties, and the
constructive accountable-safety audit.

The two slashing conditions on a pair of distinct votes by one validator:

    I.  same target height
    II. one vote strictly inside the span of the other:
        h(s1) < h(s2) < h(t2) < h(t1)

Both are judged purely on the votes' own fields, so detection works across
branches and regardless of which chain (if any) included the votes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .chain import BlockTree, VoteData
from .errors import (AlreadySlashed, DifferentValidators, NotConflicting,
                     NotFinalized)
from .validators import ValidatorId, ValidatorRegistry
from .votes import VotePool


class ViolationKind(Enum):
    DOUBLE_VOTE = "I"
    SURROUND_VOTE = "II"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    vote_a: VoteData
    vote_b: VoteData
    validator_index: int

    @property
    def key(self) -> tuple:
        a, b = sorted((self.vote_a.key, self.vote_b.key))
        return (self.validator_index, a, b)


def violates(hs1: int, ht1: int, hs2: int, ht2: int) -> bool:
    """Strict nesting in either orientation."""
    return (hs1 < hs2 < ht2 < ht1) or (hs2 < hs1 < ht1 < ht2)


def check_pair(v1: VoteData, v2: VoteData) -> Violation | None:
    """Classify one pair of same-validator votes; identical votes are not
    distinct and never violate."""
    if v1.validator_index != v2.validator_index:
        raise DifferentValidators(f"{v1.validator_index} vs {v2.validator_index}")
    if v1.key == v2.key:
        return None
    if v1.target_height == v2.target_height:
        return Violation(ViolationKind.DOUBLE_VOTE, v1, v2, v1.validator_index)
    if violates(v1.source_height, v1.target_height,
                v2.source_height, v2.target_height):
        return Violation(ViolationKind.SURROUND_VOTE, v1, v2, v1.validator_index)
    return None


def scan(pool: VotePool) -> list[Violation]:
    """All violations among all signature-valid vote pairs in the pool."""
    found: list[Violation] = []
    seen: set[tuple] = set()
    for index in sorted(pool.by_validator):
        votes = pool.validator_votes(index)
        for i in range(len(votes)):
            for j in range(i + 1, len(votes)):
                v = check_pair(votes[i], votes[j])
                if v is not None and v.key not in seen:
                    seen.add(v.key)
                    found.append(v)
    return found


def find_new_violations(history: list[VoteData], incoming: VoteData) -> list[Violation]:
    """Violations created by one new vote against a same-validator history."""
    out = []
    for old in history:
        v = check_pair(old, incoming)
        if v is not None:
            out.append(v)
    return out


def apply_slash(registry: ValidatorRegistry, violation: Violation,
                finder: ValidatorId | None, fee: Fraction) -> int:
    """Take the whole deposit; credit the finder floor(deposit * fee).

    Self-reporting is allowed and still pays the fee.  Raises AlreadySlashed on
    a second application (no double fee).  Returns the amount burned.
    """
    rec = registry.by_index(violation.validator_index)
    if rec is None or rec.slashed:
        raise AlreadySlashed(violation.validator_index)
    taken = registry.slash(rec.vid)
    reward = (taken * fee.numerator) // fee.denominator
    if finder is not None:
        frec = registry.get(finder)
        if not frec.slashed and not frec.withdrawn:
            frec.deposit += reward
            return taken - reward
    return taken


# ---------------------------------------------------------------------------
# Accountable safety, constructively: given two conflicting finalized
# checkpoints, extract a violator set worth at least a third of the deposits.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditResult:
    violators: tuple[tuple[int, Violation], ...]
    violator_weight: int
    reference_total: int    # min over the implicated sets' totals
    implicated_links: tuple[tuple[bytes, bytes], ...]

    @property
    def bound_holds(self) -> bool:
        return self.reference_total > 0 and 3 * self.violator_weight >= self.reference_total


def _established_links_into(tree, pool, snapshot_for, stitching, cp,
                            justified) -> list[tuple[bytes, bytes]]:
    from .finality import tally  # local import to avoid a cycle
    links = []
    for source in sorted(justified):
        if source == cp or not tree.is_ancestor(source, cp):
            continue
        if tally(tree, pool, snapshot_for, source, cp, stitching).established:
            links.append((source, cp))
    return links


def _justification_chain(tree, pool, snapshot_for, stitching, cp, justified):
    """Links root -> ... -> cp, each established from a justified source.
    Deterministic: prefer the highest source, then the lowest id."""
    chain = []
    cursor = cp
    while cursor != tree.root:
        options = _established_links_into(tree, pool, snapshot_for, stitching,
                                          cursor, justified)
        if not options:
            return None
        options.sort(key=lambda link: (-tree.require_checkpoint(link[0]), link[0]))
        best = options[0]
        chain.append(best)
        cursor = best[0]
    chain.reverse()
    return chain


def _finalizing_link(tree, pool, snapshot_for, stitching, cp):
    """Established link from cp to a direct checkpoint child, if any."""
    from .finality import tally
    h = tree.require_checkpoint(cp)
    kids = sorted(b.id for b in tree.iter_blocks()
                  if b.height == (h + 1) * tree.spacing and tree.is_ancestor(cp, b.id))
    for kid in kids:
        if tally(tree, pool, snapshot_for, cp, kid, stitching).established:
            return (cp, kid)
    return None


def _link_voters(tree, pool, snapshot_for, link) -> dict[int, VoteData]:
    from .votes import VoteClass, classify_vote
    out: dict[int, VoteData] = {}
    for vote in pool.link_votes(*link):
        if vote.validator_index in out:
            continue
        if classify_vote(tree, snapshot_for, pool.keyring, vote) is VoteClass.COUNTABLE:
            out[vote.validator_index] = vote
    return out


def _member_weight(snap, index: int) -> int:
    return max(snap.forward.get(index, 0), snap.rear.get(index, 0))


def safety_audit(tree: BlockTree, pool: VotePool, a_m: bytes, b_n: bytes,
                 snapshot_for, stitching: bool = True) -> AuditResult:
    """Walk the two finalization structures and surface the overlapping voters.

    Equal finalized heights: the two links targeting that height (and the two
    finalizing links one height up) share voters who double-voted.  Unequal
    heights: the lower side's finalizing link a_m -> a_{m+1} is either hit at
    the same target height by the other side's justification chain (double
    vote) or straddled by one of its links (surround vote).
    """
    from .finality import compute_justified

    if not tree.conflicting(a_m, b_n):
        raise NotConflicting("checkpoints are on one chain")
    justified = compute_justified(tree, pool, snapshot_for, stitching)

    def finalization_of(cp):
        if cp not in justified:
            return None, None
        chain = _justification_chain(tree, pool, snapshot_for, stitching, cp, justified)
        fin = _finalizing_link(tree, pool, snapshot_for, stitching, cp)
        if chain is None or fin is None:
            return None, None
        return chain, fin

    chain_a, fin_a = finalization_of(a_m)
    chain_b, fin_b = finalization_of(b_n)
    if fin_a is None or fin_b is None:
        raise NotFinalized("both checkpoints must carry a finalization structure")

    if tree.require_checkpoint(a_m) > tree.require_checkpoint(b_n):
        a_m, b_n = b_n, a_m
        chain_a, chain_b = chain_b, chain_a
        fin_a, fin_b = fin_b, fin_a

    h_a = tree.require_checkpoint(a_m)
    h_a1 = h_a + 1
    just_a = chain_a[-1] if chain_a else None

    crossing: list[tuple[tuple[bytes, bytes], tuple[bytes, bytes]]] = []
    b_links = list(chain_b) + [fin_b]
    if tree.require_checkpoint(b_n) == h_a:
        if just_a is not None and chain_b:
            crossing.append((just_a, chain_b[-1]))
        crossing.append((fin_a, fin_b))
    for link in b_links:
        hs = tree.require_checkpoint(link[0])
        ht = tree.require_checkpoint(link[1])
        if link == fin_a or (hs, ht) == (h_a, h_a1):
            continue
        if ht == h_a1 or ht == h_a:
            other = fin_a if ht == h_a1 else just_a
            if other is not None:
                crossing.append((other, link))
        elif hs < h_a and ht > h_a1:
            crossing.append((fin_a, link))

    violators: dict[int, Violation] = {}
    weight = 0
    ref_total = 0
    implicated: list[tuple[bytes, bytes]] = []
    best: tuple[int, int] | None = None
    for link1, link2 in crossing:
        voters1 = _link_voters(tree, pool, snapshot_for, link1)
        voters2 = _link_voters(tree, pool, snapshot_for, link2)
        snap1 = snapshot_for(link1[1])
        snap2 = snapshot_for(link2[1])
        common = sorted(set(voters1) & set(voters2))
        pair_weight = 0
        pair_violators: dict[int, Violation] = {}
        for idx in common:
            violation = check_pair(voters1[idx], voters2[idx])
            if violation is None:
                continue
            pair_violators[idx] = violation
            pair_weight += min(_member_weight(snap1, idx), _member_weight(snap2, idx))
        totals = [t for t in (snap1.forward_total, snap1.rear_total,
                              snap2.forward_total, snap2.rear_total) if t > 0]
        pair_total = min(totals) if totals else 0
        if best is None or (3 * pair_weight >= pair_total) > (3 * best[0] >= best[1]) \
                or ((3 * pair_weight >= pair_total) == (3 * best[0] >= best[1])
                    and pair_weight > best[0]):
            best = (pair_weight, pair_total)
            violators = pair_violators
            weight = pair_weight
            ref_total = pair_total
            implicated = [link1, link2]

    return AuditResult(tuple(sorted(violators.items())), weight, ref_total,
                       tuple(implicated))
