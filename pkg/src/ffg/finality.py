"""Supermajority links, justification, finalization, and the liveness oracle.

Two engines live here, matching the two routes a checkpoint's status can take:

* `ChainState` / `ChainStateCache`: chain-local state derived purely from the
  transactions included along one path of the block tree.  This is the engine
  that decides dynasties, applies the inactivity leak, enforces the
  vote-inclusion deadline for finalization, and pays out withdrawals.  Each
  block's state is a pure function of its parent's state plus its payload, so
  states are memoized per block id and shared across forks.

* `FinalityState`: per-view justification computed from gossiped votes (the
  vote pool), with no inclusion requirement.  Clients use it for fork choice.

A link s -> t, with t's block in dynasty d, is established when the tallied
deposits reach 2/3 of the forward set of d and (when stitching is enabled)
2/3 of the rear set of d.  Weights come from the registry as recorded at the
start of t's voting window on t's own chain, so the tally for a given target
is objective: every honest party computes the same snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chain import (BlockTree, Deposit, SlashEvidence, VoteData, VoteInclusion,
                    Withdraw)
from .config import ProtocolConfig
from .errors import NoExtension, NotAncestor
from .leak import apply_epoch_leak
from .slashing import check_pair, violates
from .validators import ValidatorRegistry
from .votes import Keyring, VoteClass, VotePool, classify_vote


class DynastySnapshot:
    """Weights and membership for links targeting one checkpoint.

    forward/rear map validator index -> deposit at the start of the target's
    voting window on the target's own chain; zero-weight members are omitted.
    """

    __slots__ = ("checkpoint", "cp_height", "dynasty", "forward", "rear",
                 "forward_total", "rear_total")

    def __init__(self, checkpoint: bytes, cp_height: int, dynasty: int,
                 forward: dict[int, int], rear: dict[int, int]):
        self.checkpoint = checkpoint
        self.cp_height = cp_height
        self.dynasty = dynasty
        self.forward = forward
        self.rear = rear
        self.forward_total = sum(forward.values())
        self.rear_total = sum(rear.values())


def snapshot_registry(checkpoint: bytes, cp_height: int, dynasty: int,
                      registry: ValidatorRegistry) -> DynastySnapshot:
    forward: dict[int, int] = {}
    rear: dict[int, int] = {}
    for rec in registry.records.values():
        w = rec.weight
        if w <= 0:
            continue
        if rec.in_forward(dynasty):
            forward[rec.vid.index] = w
        if rec.in_rear(dynasty):
            rear[rec.vid.index] = w
    return DynastySnapshot(checkpoint, cp_height, dynasty, forward, rear)


def link_established(fwd_sum: int, rear_sum: int, snap: DynastySnapshot,
                     stitching: bool) -> bool:
    """2/3 threshold via cross-multiplication; empty sides pass vacuously but a
    link with no weighable set at all never establishes."""
    if stitching:
        if snap.forward_total == 0 and snap.rear_total == 0:
            return False
        return (3 * fwd_sum >= 2 * snap.forward_total
                and 3 * rear_sum >= 2 * snap.rear_total)
    if snap.forward_total == 0:
        return False
    return 3 * fwd_sum >= 2 * snap.forward_total


@dataclass(frozen=True)
class LinkStatus:
    source: bytes
    target: bytes
    forward_voted: int
    rear_voted: int
    forward_total: int
    rear_total: int
    established: bool


def tally(tree: BlockTree, pool: VotePool, snapshot_for, source: bytes,
          target: bytes, stitching: bool = True) -> LinkStatus:
    """Deposit-weighted tally of countable votes source -> target.

    Distinct validators only; each contributes its snapshot weight to the
    forward and/or rear side it belongs to.
    """
    if not tree.is_ancestor(source, target) or source == target:
        raise NotAncestor(f"{source.hex()} !-> {target.hex()}")
    snap = snapshot_for(target)
    fwd = rear = 0
    seen: set[int] = set()
    for vote in pool.link_votes(source, target):
        if vote.validator_index in seen:
            continue
        if classify_vote(tree, snapshot_for, pool.keyring, vote) is not VoteClass.COUNTABLE:
            continue
        seen.add(vote.validator_index)
        fwd += snap.forward.get(vote.validator_index, 0)
        rear += snap.rear.get(vote.validator_index, 0)
    return LinkStatus(source, target, fwd, rear, snap.forward_total,
                      snap.rear_total, link_established(fwd, rear, snap, stitching))


# ---------------------------------------------------------------------------
# Chain-local engine (inclusion-based): dynasties, leak, deadline, payouts.
# ---------------------------------------------------------------------------

class ChainState:
    """State after processing one block; immutable once built."""

    __slots__ = ("block_id", "height", "epoch", "dynasty", "finalized_count",
                 "registry", "snapshots", "tallies", "established", "by_source",
                 "by_target", "justified", "finalized_at", "included_votes",
                 "included_evidence", "voted_window", "payouts", "stall_epochs",
                 "slashed_at")

    def checkpoint_heights(self) -> dict[bytes, int]:
        return {cp: snap.cp_height for cp, snap in self.snapshots.items()}


def genesis_state(root_id: bytes, registry: ValidatorRegistry) -> ChainState:
    st = ChainState()
    st.block_id = root_id
    st.height = 0
    st.epoch = 0
    st.dynasty = 0
    st.finalized_count = 0
    st.registry = registry
    st.snapshots = {root_id: snapshot_registry(root_id, 0, 0, registry)}
    st.tallies = {}
    st.established = {}
    st.by_source = {}
    st.by_target = {}
    st.justified = frozenset((root_id,))
    st.finalized_at = {root_id: 0}
    st.included_votes = frozenset()
    st.included_evidence = frozenset()
    st.voted_window = frozenset()
    st.payouts = ()
    st.stall_epochs = 0
    st.slashed_at = ()
    return st


def violation_key(first: VoteData, second: VoteData) -> tuple:
    a, b = sorted((first.key, second.key))
    return (first.validator_index, a, b)


class _StepContext:
    """Mutable working copy used while folding one block into a state."""

    def __init__(self, parent: ChainState, cfg: ProtocolConfig):
        self.cfg = cfg
        self.st = st = ChainState()
        for name in ChainState.__slots__:
            setattr(st, name, getattr(parent, name))
        self._own_registry = False
        self._own = set()

    def owned(self, name: str):
        if name not in self._own:
            setattr(self.st, name, dict(getattr(self.st, name)))
            self._own.add(name)
        return getattr(self.st, name)

    def registry(self) -> ValidatorRegistry:
        if not self._own_registry:
            self.st.registry = self.st.registry.clone()
            self._own_registry = True
        return self.st.registry

    # -- link bookkeeping -----------------------------------------------------

    def _justify(self, target: bytes, queue: list[bytes]):
        st = self.st
        if target in st.justified:
            return
        st.justified = st.justified | {target}
        queue.append(target)

    def _maybe_finalize(self, source: bytes):
        """Finalize `source` when a timely direct-child link plus a timely
        justifying link exist.  Increments the dynasty counter for later blocks."""
        st = self.st
        if source in st.finalized_at or source not in st.justified:
            return
        h_s = st.snapshots[source].cp_height
        for target, est_h in st.by_source.get(source, ()):
            if st.snapshots[target].cp_height != h_s + 1:
                continue
            deadline = self.cfg.deadline(st.snapshots[target].cp_height)
            if est_h > deadline:
                continue
            # the link justifying the source must land by the same deadline
            # (the root needs none)
            if h_s > 0 and not any(src in st.justified and jh <= deadline
                                   for src, jh in st.by_target.get(source, ())):
                continue
            fin = self.owned("finalized_at")
            fin[source] = st.height
            if h_s > 0:
                st.finalized_count += 1
                st.stall_epochs = 0
            return

    def _establish(self, source: bytes, target: bytes):
        st = self.st
        link = (source, target)
        est = self.owned("established")
        est[link] = st.height
        by_source = self.owned("by_source")
        by_source[source] = by_source.get(source, ()) + ((target, st.height),)
        by_target = self.owned("by_target")
        by_target[target] = by_target.get(target, ()) + ((source, st.height),)
        if source in st.justified:
            queue: list[bytes] = []
            self._justify(target, queue)
            while queue:
                cp = queue.pop()
                self._maybe_finalize(cp)
                for tgt, _h in st.by_source.get(cp, ()):
                    self._justify(tgt, queue)
            self._maybe_finalize(source)

    def include_vote(self, vote: VoteData):
        st = self.st
        if vote.key in st.included_votes:
            return
        st.included_votes = st.included_votes | {vote.key}
        src_snap = st.snapshots.get(vote.source)
        snap = st.snapshots.get(vote.target)
        if snap is None or src_snap is None:
            return
        if (snap.cp_height != vote.target_height
                or src_snap.cp_height != vote.source_height
                or vote.source_height >= vote.target_height):
            return
        idx = vote.validator_index
        fw = snap.forward.get(idx, 0)
        rw = snap.rear.get(idx, 0)
        if fw == 0 and rw == 0:
            return
        st.voted_window = st.voted_window | {idx}
        link = (vote.source, vote.target)
        tallies = self.owned("tallies")
        fwd, rear, voters = tallies.get(link, (0, 0, frozenset()))
        if idx in voters:
            return
        tallies[link] = (fwd + fw, rear + rw, voters | {idx})
        if link not in st.established and link_established(
                fwd + fw, rear + rw, snap, self.cfg.stitching):
            self._establish(vote.source, vote.target)

    def include_evidence(self, tx: SlashEvidence, proposer: int | None,
                         keyring: Keyring):
        st = self.st
        key = violation_key(tx.first, tx.second)
        if key in st.included_evidence:
            return
        st.included_evidence = st.included_evidence | {key}
        if not (keyring.verify(tx.first) and keyring.verify(tx.second)):
            return
        if check_pair(tx.first, tx.second) is None:
            return
        reg = self.registry()
        rec = reg.by_index(tx.first.validator_index)
        if rec is None or rec.slashed:
            return
        taken = reg.slash(rec.vid)
        st.slashed_at = st.slashed_at + ((rec.vid.index, st.height),)
        fee = (taken * self.cfg.finder_fee.numerator) // self.cfg.finder_fee.denominator
        if proposer is not None:
            finder = reg.by_index(proposer)
            if finder is not None and not finder.slashed and not finder.withdrawn:
                finder.deposit += fee
        # remainder (or everything, with no eligible finder) is burned


def step_state(parent: ChainState, block, cfg: ProtocolConfig,
               keyring: Keyring) -> ChainState:
    """Fold one block into its parent's chain state."""
    ctx = _StepContext(parent, cfg)
    st = ctx.st
    st.block_id = block.id
    st.height = block.height
    st.epoch = cfg.epoch_of_height(block.height)
    st.dynasty = parent.finalized_count
    st.payouts = ()
    st.slashed_at = ()

    if st.dynasty != parent.dynasty:
        ctx.registry().mark_end_dynasty_started(st.dynasty, st.epoch,
                                                cfg.withdrawal_delay,
                                                previous=parent.dynasty)

    for tx in block.payload:
        if isinstance(tx, VoteInclusion):
            ctx.include_vote(tx.vote)
        elif isinstance(tx, SlashEvidence):
            ctx.include_evidence(tx, block.proposer, keyring)
        elif isinstance(tx, Deposit):
            ctx.registry().process_deposit(
                keyring.register(tx.validator_index), tx.amount, st.dynasty)
        elif isinstance(tx, Withdraw):
            ctx.registry().process_withdraw(
                keyring.register(tx.validator_index), st.dynasty)

    if block.height % cfg.spacing == 0:
        # a checkpoint block closes the previous voting window: leak, then
        # snapshot the registry for links that will target this checkpoint.
        # The window before the first checkpoint has no votable target, so the
        # leak starts one spacing later.
        reg = ctx.registry()
        if block.height > cfg.spacing:
            apply_epoch_leak(reg, set(st.voted_window), st.dynasty, cfg.leak,
                             st.stall_epochs)
            st.stall_epochs += 1
        st.voted_window = frozenset()
        for rec in reg.records.values():
            if (rec.unlock_epoch is not None and not rec.slashed
                    and not rec.withdrawn and st.epoch >= rec.unlock_epoch):
                rec.withdrawn = True
                st.payouts = st.payouts + ((rec.vid.index, block.height),)
        snaps = ctx.owned("snapshots")
        cp_height = block.height // cfg.spacing
        snaps[block.id] = snapshot_registry(block.id, cp_height, st.dynasty, reg)
    return st


class ChainStateCache:
    """Memoized chain states over one block tree, keyed by block id."""

    def __init__(self, tree: BlockTree, cfg: ProtocolConfig, keyring: Keyring,
                 genesis_registry: ValidatorRegistry):
        self.tree = tree
        self.cfg = cfg
        self.keyring = keyring
        self.states: dict[bytes, ChainState] = {
            tree.root: genesis_state(tree.root, genesis_registry.clone())}

    def get(self, block_id: bytes) -> ChainState:
        states = self.states
        missing = []
        cursor = block_id
        while cursor not in states:
            missing.append(cursor)
            cursor = self.tree.get(cursor).parent
        state = states[cursor]
        for bid in reversed(missing):
            state = step_state(state, self.tree.get(bid), self.cfg, self.keyring)
            states[bid] = state
        return state

    def snapshot_for(self, checkpoint: bytes) -> DynastySnapshot | None:
        if checkpoint not in self.tree:
            return None
        if self.tree.get(checkpoint).height % self.cfg.spacing:
            return None
        return self.get(checkpoint).snapshots[checkpoint]


# ---------------------------------------------------------------------------
# Pool-based justification (per client view): no inclusion requirement.
# ---------------------------------------------------------------------------

class FinalityState:
    """Justified set of one view, updated incrementally as votes arrive.

    Checkpoints must be registered (mark_checkpoint) before votes targeting
    them can be tallied; earlier votes are buffered.  The highest justified
    checkpoint is tracked with the deterministic tie-break: greatest height,
    then earliest receipt, then lowest id.
    """

    def __init__(self, root_id: bytes, cfg: ProtocolConfig, keyring: Keyring):
        self.cfg = cfg
        self.keyring = keyring
        self.root = root_id
        self.heights: dict[bytes, int] = {root_id: 0}
        self.order: dict[bytes, int] = {root_id: 0}
        self.tallies: dict[tuple[bytes, bytes], tuple[int, int, frozenset]] = {}
        self.established: dict[tuple[bytes, bytes], int] = {}
        self.by_source: dict[bytes, list[bytes]] = {}
        self.justified: set[bytes] = {root_id}
        self.justified_order: dict[bytes, int] = {root_id: 0}
        self._buffer: dict[bytes, list] = {}
        self._best = (0, 0, root_id)
        self._events = 0
        self.max_height = 0

    # -- queries ---------------------------------------------------------------

    def highest_justified(self) -> bytes:
        return self._best[2]

    def is_justified(self, cp: bytes) -> bool:
        return cp in self.justified

    def justified_by_height(self) -> list[tuple[int, bytes]]:
        return sorted((self.heights[cp], cp) for cp in self.justified)

    # -- updates ----------------------------------------------------------------

    def mark_checkpoint(self, cp: bytes, cp_height: int, order: int,
                        tree: BlockTree, snapshot_for) -> None:
        if cp in self.heights:
            return
        self.heights[cp] = cp_height
        self.order[cp] = order
        self.max_height = max(self.max_height, cp_height)
        for vote in self._buffer.pop(cp, []):
            self.on_vote(vote, tree, snapshot_for)

    def on_vote(self, vote: VoteData, tree: BlockTree, snapshot_for) -> None:
        """Tally a signature-valid vote; buffers until both endpoints are known."""
        if vote.target not in self.heights:
            self._buffer.setdefault(vote.target, []).append(vote)
            return
        if vote.source not in self.heights:
            self._buffer.setdefault(vote.source, []).append(vote)
            return
        snap = snapshot_for(vote.target)
        if snap is None:
            self._buffer.setdefault(vote.target, []).append(vote)
            return
        if classify_vote(tree, snapshot_for, self.keyring, vote) is not VoteClass.COUNTABLE:
            return
        idx = vote.validator_index
        link = (vote.source, vote.target)
        fwd, rear, voters = self.tallies.get(link, (0, 0, frozenset()))
        if idx in voters:
            return
        fwd += snap.forward.get(idx, 0)
        rear += snap.rear.get(idx, 0)
        self.tallies[link] = (fwd, rear, voters | {idx})
        if link not in self.established and link_established(
                fwd, rear, snap, self.cfg.stitching):
            self._events += 1
            self.established[link] = self._events
            self.by_source.setdefault(vote.source, []).append(vote.target)
            if vote.source in self.justified:
                self._propagate(vote.target)

    def _propagate(self, start: bytes) -> None:
        queue = [start]
        while queue:
            cp = queue.pop()
            if cp in self.justified:
                continue
            self.justified.add(cp)
            self.justified_order[cp] = self.order.get(cp, self._events)
            cand = (self.heights[cp], self.justified_order[cp], cp)
            if self._better(cand, self._best):
                self._best = cand
            queue.extend(self.by_source.get(cp, ()))

    @staticmethod
    def _better(a: tuple, b: tuple) -> bool:
        # greater height wins; then earlier receipt; then lower id
        if a[0] != b[0]:
            return a[0] > b[0]
        if a[1] != b[1]:
            return a[1] < b[1]
        return a[2] < b[2]


def compute_justified(tree: BlockTree, pool: VotePool, snapshot_for,
                      stitching: bool = True) -> set[bytes]:
    """Fixed point of the justification recursion, recomputed from scratch.

    Processes checkpoints in increasing height; a checkpoint is justified when
    it is the root or the target of an established link from a justified
    source.  Links may skip heights.
    """
    checkpoints = sorted(
        (b.height // tree.spacing, b.id) for b in tree.iter_blocks()
        if b.height % tree.spacing == 0)
    justified: set[bytes] = {tree.root}
    changed = True
    while changed:
        changed = False
        for _h, cp in checkpoints:
            if cp in justified:
                continue
            snap = snapshot_for(cp)
            if snap is None:
                continue
            for source in sorted(justified):
                if not tree.is_ancestor(source, cp) or source == cp:
                    continue
                status = tally(tree, pool, snapshot_for, source, cp, stitching)
                if status.established:
                    justified.add(cp)
                    changed = True
                    break
    return justified


def chain_finalized(cache: ChainStateCache, tip: bytes) -> dict[bytes, int]:
    """Finalized checkpoints (id -> height finalized) on the chain through tip."""
    return dict(cache.get(tip).finalized_at)


# ---------------------------------------------------------------------------
# Liveness oracle: a two-round plan that always exists and never self-slashes.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LivenessPlan:
    source: bytes               # highest justified checkpoint
    source_height: int
    middle: bytes               # descendant at height max_vote_target + 1
    middle_height: int
    child: bytes                # direct checkpoint child of middle
    votes: tuple[tuple[bytes, bytes, int, int], ...]  # (s, t, h_s, h_t) rounds


def liveness_plan(tree: BlockTree, pool: VotePool, justified: set[bytes],
                  slashed: set[int] = frozenset()) -> LivenessPlan:
    """Plan new links that justify then finalize a fresh checkpoint.

    The first round targets one height above the greatest vote target any
    unslashed validator has published, so it cannot repeat a target height;
    the second round's source is above every prior target, so it cannot be
    nested.  Raises NoExtension when the tree lacks the needed descendants
    (grow the chain first, then re-plan).
    """
    heights = {cp: tree.checkpoint_height(cp) for cp in justified}
    # deterministic: greatest height, lowest id on ties
    h_a = max(heights.values())
    a = min(cp for cp in justified if heights[cp] == h_a)
    h_b = h_a
    for vote in pool.votes:
        if vote.validator_index in slashed:
            continue
        if vote.target_height > h_b:
            h_b = vote.target_height
    middle_h = h_b + 1
    middles = sorted(b.id for b in tree.iter_blocks()
                     if b.height == middle_h * tree.spacing
                     and tree.is_ancestor(a, b.id))
    middle = child = None
    for cand in middles:
        kids = sorted(b.id for b in tree.iter_blocks()
                      if b.height == (middle_h + 1) * tree.spacing
                      and tree.is_ancestor(cand, b.id))
        if kids:
            middle, child = cand, kids[0]
            break
    if middle is None or child is None:
        raise NoExtension(
            f"need checkpoints at heights {middle_h} and {middle_h + 1} under {a.hex()[:8]}")
    votes = ((a, middle, h_a, middle_h),
             (middle, child, middle_h, middle_h + 1))
    return LivenessPlan(a, h_a, middle, middle_h, child, votes)


def plan_safe_for(plan: LivenessPlan, history: list[VoteData]) -> bool:
    """True when executing both planned votes violates no commandment against
    any vote in `history` (nor between the two planned votes themselves)."""
    planned = [(s_h, t_h) for (_s, _t, s_h, t_h) in plan.votes]
    for hs, ht in planned:
        for old in history:
            if (old.source_height, old.target_height) == (hs, ht):
                continue
            if violates(hs, ht, old.source_height, old.target_height):
                return False
    (h1, t1), (h2, t2) = planned
    return not violates(h1, t1, h2, t2)
