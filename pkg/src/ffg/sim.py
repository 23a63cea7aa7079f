"""Deterministic discrete-event simulator.

One run is fully determined by (config, seed): the proposal engine, network
jitter, and adversary scripts all draw from dedicated PRNG streams seeded from
the single run seed, messages are delivered to every view within
[send, send + delta], and the report serializes to canonical JSON whose digest
is byte-stable across reruns.

The proposal engine stands in for an external block producer: one block per
tick extending the engine's fork-choice head, occasionally (per the configured
fork rate) a sibling of the head instead, which models latency forks.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .chain import (Block, BlockTree, Deposit, SlashEvidence, VoteData,
                    VoteInclusion, Withdraw, make_block)
from .config import ProtocolConfig
from .errors import ConfigInvalid
from .finality import ChainStateCache, compute_justified, tally
from .fork_choice import ClientView
from .leak import LeakConfig
from .slashing import check_pair, scan, violates
from .validators import ValidatorRegistry
from .votes import Keyring, VotePool, sign_vote

HONEST = "honest"
OFFLINE = "offline"
DOUBLE_VOTER = "double_voter"
SURROUND_VOTER = "surround_voter"

BEHAVIOR_KINDS = (HONEST, OFFLINE, DOUBLE_VOTER, SURROUND_VOTER)

GENERIC = "generic"
LONG_RANGE = "long_range"
SPLIT_FINALITY = "split_finality"
DYNAMIC_ATTACK = "dynamic_attack"

SCENARIO_KINDS = (GENERIC, LONG_RANGE, SPLIT_FINALITY, DYNAMIC_ATTACK)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Behavior:
    kind: str = HONEST
    from_epoch: int = 0


@dataclass(frozen=True)
class ValidatorSpec:
    index: int
    deposit: int
    behavior: Behavior = Behavior()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    validators: tuple[ValidatorSpec, ...] = ()
    duration_epochs: int = 6
    observers: int = 2
    proposer_fork_rate: Fraction = Fraction(0)
    scenario: str = GENERIC
    params: dict = field(default_factory=dict)
    deposits: tuple[tuple[int, int, int], ...] = ()    # (epoch, index, amount)
    withdraws: tuple[tuple[int, int], ...] = ()        # (epoch, index)
    censor_evidence: bool = False

    def validate(self) -> None:
        if self.scenario not in SCENARIO_KINDS:
            raise ConfigInvalid(f"unknown scenario kind {self.scenario!r}")
        if self.duration_epochs < 1:
            raise ConfigInvalid("duration must be >= 1 epoch")
        if not self.validators:
            raise ConfigInvalid("at least one validator required")
        seen = set()
        for spec in self.validators:
            if spec.deposit <= 0:
                raise ConfigInvalid(f"validator {spec.index} deposit must be positive")
            if spec.index in seen:
                raise ConfigInvalid(f"duplicate validator index {spec.index}")
            if spec.behavior.kind not in BEHAVIOR_KINDS:
                raise ConfigInvalid(f"unknown behavior {spec.behavior.kind!r}")
            if spec.behavior.kind == SURROUND_VOTER and spec.behavior.from_epoch < 3:
                raise ConfigInvalid("surround voter needs from_epoch >= 3")
            seen.add(spec.index)
        if not (0 <= self.proposer_fork_rate < 1):
            raise ConfigInvalid("fork rate must be in [0, 1)")


# -- JSON round trip ----------------------------------------------------------

def _frac_str(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def _parse_frac(text) -> Fraction:
    return Fraction(text)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    p = cfg.protocol
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "seed": cfg.seed,
        "protocol": {
            "spacing": p.spacing,
            "delta": p.delta,
            "withdrawal_delay": p.withdrawal_delay,
            "leak_rate": _frac_str(p.leak.rate),
            "leak_disposition": p.leak.disposition,
            "finder_fee": _frac_str(p.finder_fee),
            "stitching": p.stitching,
            "hash_name": p.hash_name,
        },
        "validators": [
            {"index": s.index, "deposit": s.deposit,
             "behavior": {"kind": s.behavior.kind, "from_epoch": s.behavior.from_epoch}}
            for s in cfg.validators
        ],
        "duration_epochs": cfg.duration_epochs,
        "observers": cfg.observers,
        "proposer_fork_rate": _frac_str(cfg.proposer_fork_rate),
        "scenario": cfg.scenario,
        "params": cfg.params,
        "deposits": [list(d) for d in cfg.deposits],
        "withdraws": [list(w) for w in cfg.withdraws],
        "censor_evidence": cfg.censor_evidence,
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        proto = data.get("protocol", {})
        pcfg = ProtocolConfig(
            spacing=proto.get("spacing", 100),
            delta=proto.get("delta", 8),
            withdrawal_delay=proto.get("withdrawal_delay", 100),
            leak=LeakConfig(rate=_parse_frac(proto.get("leak_rate", "1/10")),
                            disposition=proto.get("leak_disposition", "burn")),
            finder_fee=_parse_frac(proto.get("finder_fee", "1/100")),
            stitching=proto.get("stitching", True),
            hash_name=proto.get("hash_name", "sha256"),
        )
        validators = tuple(
            ValidatorSpec(v["index"], v["deposit"],
                          Behavior(v.get("behavior", {}).get("kind", HONEST),
                                   v.get("behavior", {}).get("from_epoch", 0)))
            for v in data["validators"])
        cfg = ScenarioConfig(
            name=data.get("name", "scenario"),
            seed=data.get("seed", 0),
            protocol=pcfg,
            validators=validators,
            duration_epochs=data.get("duration_epochs", 6),
            observers=data.get("observers", 2),
            proposer_fork_rate=_parse_frac(data.get("proposer_fork_rate", "0")),
            scenario=data.get("scenario", GENERIC),
            params=data.get("params", {}),
            deposits=tuple(tuple(d) for d in data.get("deposits", [])),
            withdraws=tuple(tuple(w) for w in data.get("withdraws", [])),
            censor_evidence=data.get("censor_evidence", False),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    cfg.validate()
    return cfg


# -----------------------------------------------------------------------------
# Agents
# -----------------------------------------------------------------------------

class Agent:
    """A validator: a client view plus a behavior-driven voting policy."""

    def __init__(self, spec: ValidatorSpec, view: ClientView, keyring: Keyring):
        self.spec = spec
        self.view = view
        self.keyring = keyring
        self.history: list[VoteData] = []
        self.last_voted_height = 0
        self._surround_stage = 0

    def _would_violate(self, h_s: int, h_t: int) -> bool:
        for old in self.history:
            if old.target_height == h_t:
                return True
            if violates(h_s, h_t, old.source_height, old.target_height):
                return True
        return False

    def _sign(self, source: bytes, target: bytes, h_s: int, h_t: int) -> VoteData:
        vote = sign_vote(self.keyring, self.spec.index, source, target, h_s, h_t)
        self.history.append(vote)
        return vote

    def _source_for(self, target: bytes, h_t: int) -> tuple[bytes, int]:
        """Highest justified checkpoint below the target on its chain; ties
        break on the lower id so runs replay identically across processes."""
        view = self.view
        best, best_h = view.tree.root, 0
        for cp in view.fstate.justified:
            if cp not in view.tree:
                continue
            h = view.fstate.heights[cp]
            if h >= h_t or h < best_h or (h == best_h and cp >= best):
                continue
            if view.tree.is_ancestor(cp, target):
                best, best_h = cp, h
        return best, best_h

    def maybe_vote(self) -> list[VoteData]:
        """Vote for the head chain's checkpoint of the newest epoch, skipping
        anything that would violate a commandment against our own history."""
        view = self.view
        head = view.head()
        target = view.tree.latest_checkpoint(head)
        h_t = view.tree.require_checkpoint(target)
        if h_t <= self.last_voted_height:
            return []
        self.last_voted_height = h_t
        behavior = self.spec.behavior

        if behavior.kind == OFFLINE and h_t >= behavior.from_epoch:
            return []

        if behavior.kind == SURROUND_VOTER:
            return self._surround_votes(target, h_t)

        source, h_s = self._source_for(target, h_t)
        if self._would_violate(h_s, h_t):
            return []
        votes = [self._sign(source, target, h_s, h_t)]
        if behavior.kind == DOUBLE_VOTER and h_t >= behavior.from_epoch:
            second = self._second_vote(source, target, h_s, h_t)
            if second is not None:
                votes.append(second)
        return votes

    def _second_vote(self, source: bytes, target: bytes, h_s: int,
                     h_t: int) -> VoteData | None:
        """A second, distinct vote for the same target height."""
        view = self.view
        if source != view.tree.root:
            return self._sign(view.tree.root, target, 0, h_t)
        for cp in sorted(view.fstate.heights):
            if cp in (source, target):
                continue
            h = view.fstate.heights[cp]
            if h == h_t and cp in view.tree:
                return self._sign(source, cp, h_s, h_t)
        return None

    def _surround_votes(self, target: bytes, h_t: int) -> list[VoteData]:
        """First a wide vote from the root, then one nested strictly inside it."""
        view = self.view
        if h_t < self.spec.behavior.from_epoch:
            return []
        if self._surround_stage == 0:
            self._surround_stage = 1
            return [self._sign(view.tree.root, target, 0, h_t)]
        if self._surround_stage == 1:
            self._surround_stage = 2
            try:
                inner_s = view.tree.ancestor_at(target, view.tree.spacing)
                inner_t = view.tree.ancestor_at(target, 2 * view.tree.spacing)
            except Exception:
                return []
            return [self._sign(inner_s, inner_t, 1, 2)]
        source, h_s = self._source_for(target, h_t)
        if self._would_violate(h_s, h_t):
            return []
        return [self._sign(source, target, h_s, h_t)]


# -----------------------------------------------------------------------------
# The run loop
# -----------------------------------------------------------------------------

class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.proto = cfg.protocol
        self.keyring = Keyring(cfg.seed)
        registry = ValidatorRegistry()
        for spec in cfg.validators:
            registry.add_genesis_validator(self.keyring.register(spec.index),
                                           spec.deposit)
        for _epoch, index, _amount in cfg.deposits:
            self.keyring.register(index)
        self.tree = BlockTree(self.proto.spacing, self.proto.hash_name)
        self.cache = ChainStateCache(self.tree, self.proto, self.keyring, registry)
        self.pool = VotePool(self.keyring)        # omniscient pool for audits
        self.rng_net = random.Random(cfg.seed ^ 0x6E65745F)
        self.rng_prop = random.Random(cfg.seed ^ 0x70726F70)

        self.views: dict[str, ClientView] = {}
        self.agents: dict[str, Agent] = {}
        for spec in cfg.validators:
            view = ClientView(f"v{spec.index}", self.proto, self.keyring, self.cache)
            self.views[view.name] = view
            self.agents[view.name] = Agent(spec, view, self.keyring)
        for i in range(cfg.observers):
            view = ClientView(f"client{i}", self.proto, self.keyring, self.cache)
            self.views[view.name] = view
        self.proposer = ClientView("proposer", self.proto, self.keyring, self.cache)
        self.views[self.proposer.name] = self.proposer

        self.events: list[tuple[int, int, str, object, str]] = []
        self._seq = 0
        self.pending_evidence: dict[tuple, SlashEvidence] = {}
        self._included_evidence_keys: set[tuple] = set()
        self._trace = hashlib.sha256()
        self._max_jitter = 0
        self._monotonic_ok = True
        self._mono_counts: dict[str, tuple[int, int]] = {}

    # -- plumbing ----------------------------------------------------------------

    def _push(self, time: int, kind: str, payload, target: str) -> None:
        self._seq += 1
        heapq.heappush(self.events, (time, self._seq, kind, payload, target))

    def _trace_line(self, text: str) -> None:
        self._trace.update(text.encode())
        self._trace.update(b"\n")

    def broadcast_block(self, block: Block, now: int) -> None:
        self._trace_line(f"{now}|block|{block.id.hex()}")
        for name in self.views:
            jitter = 0 if name == self.proposer.name else \
                self.rng_net.randint(0, self.proto.delta)
            self._max_jitter = max(self._max_jitter, jitter)
            self._push(now + jitter, "block", block, name)

    def broadcast_vote(self, vote: VoteData, sender: str, now: int) -> None:
        self.pool.add(vote)
        self._trace_line(f"{now}|vote|{vote.key}")
        for name in self.views:
            jitter = 0 if name == sender else self.rng_net.randint(0, self.proto.delta)
            self._max_jitter = max(self._max_jitter, jitter)
            self._push(now + jitter, "vote", vote, name)

    def submit_evidence(self, violation, now: int) -> None:
        if violation.key in self.pending_evidence or \
                violation.key in self._included_evidence_keys:
            return
        self._trace_line(f"{now}|evidence|{violation.key}")
        self.pending_evidence[violation.key] = SlashEvidence(
            violation.vote_a, violation.vote_b)

    # -- proposer ----------------------------------------------------------------

    def _scheduled_txs(self, epoch: int, parent_state) -> list:
        txs = []
        for ep, index, amount in self.cfg.deposits:
            if ep == epoch:
                vid = self.keyring.vid(index)
                rec = parent_state.registry.records.get(vid)
                if rec is None:
                    txs.append(Deposit(index, vid.pubkey, amount))
        for ep, index in self.cfg.withdraws:
            if ep == epoch:
                vid = self.keyring.vid(index)
                rec = parent_state.registry.records.get(vid)
                if rec is not None and rec.end_dynasty is None:
                    txs.append(Withdraw(index, vid.pubkey))
        return txs

    def propose(self, now: int) -> None:
        head = self.proposer.head()
        parent_id = head
        if self.cfg.proposer_fork_rate and head != self.tree.root:
            rate = self.cfg.proposer_fork_rate
            if self.rng_prop.random() < rate.numerator / rate.denominator:
                parent_id = self.tree.get(head).parent
        parent = self.tree.get(parent_id)
        parent_state = self.cache.get(parent_id)
        epoch = self.proto.epoch_of_height(parent.height + 1)
        txs = self._scheduled_txs(epoch, parent_state)
        if not self.cfg.censor_evidence:
            for key in sorted(self.pending_evidence):
                if key not in parent_state.included_evidence:
                    txs.append(self.pending_evidence[key])
        included = parent_state.included_votes
        for vote in self.proposer.pool.votes:
            if vote.key not in included:
                txs.append(VoteInclusion(vote))
        block = make_block(parent, now, None, tuple(txs), self.proto.hash_name)
        self.tree.insert_block(block)
        for key in parent_state.included_evidence:
            self._included_evidence_keys.add(key)
        self.broadcast_block(block, now)

    # -- delivery ----------------------------------------------------------------

    def _check_monotonic(self, view: ClientView) -> None:
        j, f = len(view.fstate.justified), len(view.observed_finalized)
        old = self._mono_counts.get(view.name, (0, 0))
        if j < old[0] or f < old[1]:
            self._monotonic_ok = False
        self._mono_counts[view.name] = (j, f)

    def deliver(self, kind: str, payload, name: str, now: int) -> None:
        view = self.views[name]
        self._trace_line(f"{now}|deliver|{name}|{kind}")
        if kind == "block":
            view.receive_block(payload, now)
            agent = self.agents.get(name)
            if agent is not None \
                    and view.fstate.max_height > agent.last_voted_height:
                for vote in agent.maybe_vote():
                    self.broadcast_vote(vote, name, now)
        elif kind == "vote":
            new_violations = view.receive_vote(payload, now)
            agent = self.agents.get(name)
            if agent is not None and agent.spec.behavior.kind != OFFLINE:
                for violation in new_violations:
                    self.submit_evidence(violation, now)
        self._check_monotonic(view)

    def run_loop(self) -> None:
        total_ticks = self.cfg.duration_epochs * self.proto.spacing
        drain = self.proto.delta + 1
        for now in range(1, total_ticks + drain + 1):
            while self.events and self.events[0][0] <= now - 1:
                t, _seq, kind, payload, name = heapq.heappop(self.events)
                self.deliver(kind, payload, name, t)
            for view in self.views.values():
                view.advance_clock(now)
            if now <= total_ticks:
                self.propose(now)
        while self.events:
            t, _seq, kind, payload, name = heapq.heappop(self.events)
            self.deliver(kind, payload, name, t)


# -----------------------------------------------------------------------------
# Invariant sweep and report
# -----------------------------------------------------------------------------

def established_links(tree: BlockTree, pool: VotePool, snapshot_for,
                      stitching: bool) -> list:
    """Every established link derivable from the pool, one tally per voted pair."""
    out = []
    for (source, target) in sorted(pool.by_link):
        if source not in tree or target not in tree:
            continue
        if tree.checkpoint_height(source) is None \
                or tree.checkpoint_height(target) is None:
            continue
        if source == target or not tree.is_ancestor(source, target):
            continue
        if snapshot_for(target) is None:
            continue
        status = tally(tree, pool, snapshot_for, source, target, stitching)
        if status.established:
            out.append(status)
    return out


def check_link_properties(tree: BlockTree, links) -> dict:
    """Distinct links must not share a target height nor strictly nest."""
    by_target_height: dict[int, int] = {}
    unique_targets = True
    for st in links:
        h = tree.require_checkpoint(st.target)
        by_target_height[h] = by_target_height.get(h, 0) + 1
    same_height_ok = all(n <= 1 for n in by_target_height.values())
    nesting_ok = True
    hs = [(tree.require_checkpoint(s.source), tree.require_checkpoint(s.target))
          for s in links]
    for i in range(len(hs)):
        for j in range(len(hs)):
            if i != j and hs[i][0] < hs[j][0] < hs[j][1] < hs[i][1]:
                nesting_ok = False
    targets_per_height_ok = same_height_ok
    return {"no_double_target_height": same_height_ok,
            "no_nested_links": nesting_ok,
            "single_link_per_height": targets_per_height_ok}


class RunWorld:
    """Everything a finished run exposes to the report builder and tests."""

    def __init__(self, cfg: ScenarioConfig, tree: BlockTree, cache: ChainStateCache,
                 pool: VotePool, keyring: Keyring, views: dict[str, ClientView],
                 agents: dict[str, Agent] | None = None, trace_digest: str = "",
                 extra: dict | None = None):
        self.cfg = cfg
        self.tree = tree
        self.cache = cache
        self.pool = pool
        self.keyring = keyring
        self.views = views
        self.agents = agents or {}
        self.trace_digest = trace_digest
        self.extra = extra or {}


def sweep_invariants(world: RunWorld, delivery_bound_ok: bool = True,
                     monotonic_ok: bool = True) -> dict:
    cfg = world.cfg
    tree, pool, cache = world.tree, world.pool, world.cache
    stitching = cfg.protocol.stitching

    # conflicting finalization across client views
    finalized_union: dict[bytes, str] = {}
    for name in sorted(world.views):
        for cp in world.views[name].observed_finalized:
            finalized_union.setdefault(cp, name)
    conflict_pair = None
    cps = sorted(finalized_union)
    for i in range(len(cps)):
        for j in range(i + 1, len(cps)):
            if tree.conflicting(cps[i], cps[j]):
                conflict_pair = (cps[i], cps[j])
                break
        if conflict_pair:
            break
    safety_ok = conflict_pair is None

    violations = scan(pool)
    violator_indexes = sorted({v.validator_index for v in violations})
    genesis_weights = {s.index: s.deposit for s in cfg.validators}
    total = sum(genesis_weights.values())
    violator_weight = sum(genesis_weights.get(i, 0) for i in violator_indexes)
    under_third = 3 * violator_weight < total

    links = established_links(tree, pool, cache.snapshot_for, stitching)
    properties = check_link_properties(tree, links)
    justified = compute_justified(tree, pool, cache.snapshot_for, stitching)
    per_height: dict[int, int] = {}
    for cp in justified:
        h = tree.require_checkpoint(cp)
        per_height[h] = per_height.get(h, 0) + 1
    properties["single_justified_per_height"] = all(n <= 1 for n in per_height.values())
    properties_ok = (not under_third) or all(properties.values())

    honest = {s.index for s in cfg.validators if s.behavior.kind == HONEST}
    honest_unslashed = not (honest & set(violator_indexes))
    for leaf in tree.leaves():
        state = cache.get(leaf)
        for rec in state.registry.records.values():
            if rec.slashed and rec.vid.index in honest:
                honest_unslashed = False

    accountability = None
    static_set = not cfg.deposits and not cfg.withdraws
    if conflict_pair is not None and static_set:
        from .slashing import safety_audit
        result = safety_audit(tree, pool, conflict_pair[0], conflict_pair[1],
                              cache.snapshot_for, stitching)
        accountability = {
            "violators": [i for i, _v in result.violators],
            "violator_weight": result.violator_weight,
            "reference_total": result.reference_total,
            "bound_holds": result.bound_holds,
        }

    return {
        "safety_no_conflicting_finalized": safety_ok,
        "conflict_pair": [cp.hex() for cp in conflict_pair] if conflict_pair else None,
        "slashable_weight_under_third": under_third,
        "link_properties": properties,
        "link_properties_ok": properties_ok,
        "honest_never_slashed": honest_unslashed,
        "delivery_within_delta": delivery_bound_ok,
        "justified_finalized_monotonic": monotonic_ok,
        "accountability": accountability,
    }


# true/false facts that are context, not pass/fail checks
_INFORMATIONAL = {"slashable_weight_under_third"}


def invariants_pass(inv: dict) -> bool:
    ok = all(value for key, value in inv.items()
             if isinstance(value, bool) and key not in _INFORMATIONAL)
    if inv.get("accountability") is not None:
        # a run that dual-finalized is only "accounted for" when the audit
        # recovers a third of the deposits; safety itself already failed
        ok = ok and inv["accountability"]["bound_holds"]
    return ok


def _tx_to_dict(tx) -> dict:
    if isinstance(tx, VoteInclusion):
        return {"kind": "vote", "vote": _vote_to_dict(tx.vote)}
    if isinstance(tx, SlashEvidence):
        return {"kind": "evidence", "first": _vote_to_dict(tx.first),
                "second": _vote_to_dict(tx.second)}
    if isinstance(tx, Deposit):
        return {"kind": "deposit", "index": tx.validator_index, "amount": tx.amount}
    return {"kind": "withdraw", "index": tx.validator_index}


def _vote_to_dict(vote: VoteData) -> dict:
    return {"validator": vote.validator_index,
            "source": vote.source.hex(), "target": vote.target.hex(),
            "source_height": vote.source_height,
            "target_height": vote.target_height,
            "signature": vote.signature.hex()}


def vote_from_dict(data: dict, keyring: Keyring) -> VoteData:
    vid = keyring.register(data["validator"])
    return VoteData(data["validator"], vid.pubkey,
                    bytes.fromhex(data["source"]), bytes.fromhex(data["target"]),
                    data["source_height"], data["target_height"],
                    bytes.fromhex(data["signature"]))


def build_report(world: RunWorld, invariants: dict,
                 heuristics: list | None = None) -> "RunReport":
    tree, cache = world.tree, world.cache
    heuristics = list(heuristics or [])
    for name in sorted(world.views):
        for height, cp in world.views[name].ignored_finalized:
            heuristics.append(f"first-seen-kept:{name}:{height}:{cp.hex()[:8]}")
    blocks = []
    for block in sorted(tree.iter_blocks(), key=lambda b: (b.height, b.id)):
        blocks.append({
            "id": block.id.hex(),
            "parent": block.parent.hex() if block.parent else None,
            "height": block.height,
            "timestamp": block.timestamp,
            "proposer": block.proposer,
            "txs": [_tx_to_dict(tx) for tx in block.payload],
        })

    slashings = []
    for block in sorted(tree.iter_blocks(), key=lambda b: (b.height, b.id)):
        for tx in block.payload:
            if isinstance(tx, SlashEvidence):
                violation = check_pair(tx.first, tx.second)
                if violation is None:
                    continue
                slashings.append({
                    "validator": violation.validator_index,
                    "kind": violation.kind.value,
                    "included_in": block.id.hex(),
                    "height": block.height,
                })

    clients = {}
    for name in sorted(world.views):
        view = world.views[name]
        head = view.head()
        head_state = cache.get(head)
        clients[name] = {
            "head": head.hex(),
            "head_height": tree.get(head).height,
            "justified": sorted(cp.hex() for cp in view.fstate.justified),
            "finalized": sorted(cp.hex() for cp in view.observed_finalized),
            "first_seen_finalized": {str(h): cp.hex()
                                     for h, cp in sorted(view.first_seen_finalized.items())},
            "violations_heard": len(view.violations_heard),
            "leak_totals": {str(rec.vid.index): rec.leaked
                            for rec in sorted(head_state.registry.records.values(),
                                              key=lambda r: r.vid.index)
                            if rec.leaked},
            "payouts": sorted({(i, h) for i, _b, h in view.payout_seen}),
        }

    report = RunReport(
        schema_version=SCHEMA_VERSION,
        config=config_to_dict(world.cfg),
        clients=clients,
        slashings=slashings,
        votes=[_vote_to_dict(v) for v in
               sorted(world.pool.votes, key=lambda v: v.key)],
        blocks=blocks,
        invariants=invariants,
        heuristics=sorted(heuristics or []),
        trace_digest=world.trace_digest,
        extra=world.extra,
    )
    return report


@dataclass
class RunReport:
    schema_version: int
    config: dict
    clients: dict
    slashings: list
    votes: list
    blocks: list
    invariants: dict
    heuristics: list
    trace_digest: str
    extra: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "clients": self.clients,
            "slashings": self.slashings,
            "votes": self.votes,
            "blocks": self.blocks,
            "invariants": self.invariants,
            "heuristics": self.heuristics,
            "trace_digest": self.trace_digest,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @property
    def passed(self) -> bool:
        return invariants_pass(self.invariants)


def run(cfg: ScenarioConfig) -> RunReport:
    """Run a scenario to completion and assemble its report."""
    cfg.validate()
    if cfg.scenario != GENERIC:
        from . import scenarios
        if cfg.scenario == LONG_RANGE:
            return scenarios.scenario_longrange(cfg)
        if cfg.scenario == SPLIT_FINALITY:
            return scenarios.scenario_split_finality(cfg)
        return scenarios.scenario_dynamic_attack(cfg)

    sim = Simulation(cfg)
    sim.run_loop()
    world = RunWorld(cfg, sim.tree, sim.cache, sim.pool, sim.keyring, sim.views,
                     sim.agents, sim._trace.hexdigest())
    invariants = sweep_invariants(
        world,
        delivery_bound_ok=sim._max_jitter <= cfg.protocol.delta,
        monotonic_ok=sim._monotonic_ok)
    return build_report(world, invariants)
