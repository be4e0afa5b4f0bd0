"""Deterministic round-lockstep network simulator.

One :class:`Simulation` owns a block tree, ``n`` validators, an adversary
strategy and an in-flight message queue.  Each round it

1. applies corruptions and sleep/wake transitions scheduled for the round,
2. delivers due messages (queueing them for sleeping recipients),
3. lets every awake honest validator relay what it newly received and run
   its phase hook,
4. lets the adversary act, and
5. records membership sets and every honest validator's outputs.

Everything is ordered canonically, so a run is a pure function of its
:class:`SimConfig`.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable

from .chain_store import GENESIS, Block, BlockTree, insert_block
from .forkchoice import eta_for
from .messages import (
    AckMsg,
    Message,
    ProposeRlmd,
    ProposeTob,
    VoteMsg,
    message_id,
)
from .validator import ProtocolParams, RoundClock, Status, Validator, Variant, voting_round

if TYPE_CHECKING:  # pragma: no cover
    from .adversary import Strategy
    from .trace import Trace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Everything a run depends on.

    ``corrupt`` holds ``(validator, round)`` pairs, ``sleep`` holds
    ``(validator, start, end)`` triples meaning asleep during rounds
    ``[start, end)``, and ``txs`` holds ``(round, tx_id)`` injections.
    """

    n: int = 4
    delta: int = 1
    kappa: int = 2
    pi: int = 0
    gst: int = 0
    gat: int = 0
    t_a: int | None = None
    num_slots: int = 10
    variant: Variant = Variant.TOB_3SF
    acks: bool = False
    seed: int = 0
    corrupt: tuple[tuple[int, int], ...] = ()
    sleep: tuple[tuple[int, int, int], ...] = ()
    txs: tuple[tuple[int, str], ...] = ()
    adversary: str = "passive"
    adversary_params: tuple[tuple[str, str], ...] = ()
    uniform_chainfin: bool = False
    sender_level: bool = True
    tight_expiry: bool = False
    c4_threshold: str = "2/3"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.delta < 1:
            raise ConfigError("delta must be at least 1")
        if self.kappa <= 1:
            raise ConfigError("kappa must be greater than 1")
        if self.pi < 0 or self.num_slots < 0:
            raise ConfigError("pi and num_slots must be non-negative")
        for vid, _ in self.corrupt:
            if not 0 <= vid < self.n:
                raise ConfigError(f"corrupt id {vid} out of range")
        for vid, start, end in self.sleep:
            if not 0 <= vid < self.n or start >= end or start < 0:
                raise ConfigError(f"bad sleep interval {(vid, start, end)}")
        ids = [tx for _, tx in self.txs]
        if len(ids) != len(set(ids)):
            raise ConfigError("duplicate transaction id")

    @property
    def eta(self) -> int:
        return eta_for(self.pi)

    @property
    def slot_len(self) -> int:
        return 4 * self.delta

    @property
    def rounds(self) -> int:
        return self.num_slots * self.slot_len

    @property
    def window(self) -> tuple[int, int] | None:
        """Asynchrony window ``[4Δ(t_a+1), 4Δ(t_a+π+1))`` or None."""
        if self.t_a is None or self.pi == 0:
            return None
        return (self.slot_len * (self.t_a + 1), self.slot_len * (self.t_a + self.pi + 1))

    @property
    def max_faulty(self) -> int:
        return len({vid for vid, _ in self.corrupt})

    def param(self, key: str, default: str | None = None) -> str | None:
        return dict(self.adversary_params).get(key, default)

    def protocol(self) -> ProtocolParams:
        return ProtocolParams(
            n=self.n,
            delta=self.delta,
            kappa=self.kappa,
            eta=self.eta,
            variant=self.variant,
            acks_enabled=self.acks,
            uniform_chainfin=self.uniform_chainfin,
            sender_level=self.sender_level,
            tight_expiry=self.tight_expiry,
        )

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def elect_proposer(seed: int, slot: int, n: int) -> int:
    digest = hashlib.sha256(f"proposer:{seed}:{slot}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % n


def delivery_bounds(send_round: int, config: SimConfig) -> tuple[int, int]:
    """Earliest and latest delivery round for a message sent at ``send_round``."""
    lo = send_round + 1
    win = config.window
    if send_round < config.gst:
        hi = config.gst + config.delta
    elif win is not None and win[0] <= send_round < win[1]:
        hi = win[1] + config.delta
    else:
        hi = send_round + config.delta
    return lo, max(lo, hi)


def schedule_delivery(
    msg: Message, send_round: int, recipient: int, config: SimConfig, adversary: "Strategy", sender: int = -1
) -> int:
    lo, hi = delivery_bounds(send_round, config)
    r = adversary.delay(msg, send_round, recipient, lo, hi, sender)
    return min(max(r, lo), hi)


def inject_txs(pool: set[str], round_: int, tx_schedule: Iterable[tuple[int, str]]) -> set[str]:
    """Pool after adding every transaction scheduled at ``round_``."""
    new = {tx for r, tx in tx_schedule if r == round_}
    if new & pool:
        raise ConfigError(f"duplicate transaction ids {sorted(new & pool)}")
    return pool | new


@dataclass
class ProposalRecord:
    slot: int
    proposer: int
    chain: str
    pool: frozenset[str]


@dataclass
class Simulation:
    config: SimConfig
    strategy: "Strategy"
    tree: BlockTree = field(default_factory=BlockTree)
    round: int = 0

    def __post_init__(self) -> None:
        cfg = self.config
        params = cfg.protocol()
        self.proposers = [elect_proposer(cfg.seed, t, cfg.n) for t in range(cfg.num_slots + 1)]
        self.validators = [
            Validator(i, params, self.tree, self._proposer_of) for i in range(cfg.n)
        ]
        self.corrupt_at = {}
        for vid, r in cfg.corrupt:
            self.corrupt_at[vid] = min(r, self.corrupt_at.get(vid, r))
        self.corrupted: set[int] = set()
        self.sleep_events: dict[int, list[tuple[int, str]]] = defaultdict(list)
        for vid, start, end in cfg.sleep:
            self.sleep_events[start].append((vid, "sleep"))
            self.sleep_events[end].append((vid, "wake"))
        self.asleep: set[int] = set()
        self.inflight: dict[int, list[tuple[int, Message, int]]] = defaultdict(list)
        self.scheduled: dict[tuple[int, Message], int] = {}
        self.sleep_queue: dict[int, list[Message]] = defaultdict(list)
        self.tx_by_round: dict[int, list[str]] = defaultdict(list)
        for r, tx in cfg.txs:
            self.tx_by_round[r].append(tx)
        self.pool: set[str] = set()
        from .trace import Trace

        self.trace = Trace(cfg)
        self.strategy.bind(self)

    # -- queries used by strategies and validators -------------------------
    def _proposer_of(self, t: int) -> int:
        if t < 0:
            return -1
        if t >= len(self.proposers):
            self.proposers.extend(
                elect_proposer(self.config.seed, s, self.config.n)
                for s in range(len(self.proposers), t + 1)
            )
        return self.proposers[t]

    def revealed_proposer(self, t: int) -> int | None:
        """Proposer of slot ``t`` if its propose round has been reached."""
        if self.round < t * self.config.slot_len:
            return None
        return self._proposer_of(t)

    def is_honest(self, vid: int) -> bool:
        return vid not in self.corrupted

    def honest_ids(self) -> list[int]:
        return [i for i in range(self.config.n) if i not in self.corrupted]

    # -- network ------------------------------------------------------------
    def _schedule(self, msg: Message, send_round: int, recipient: int, sender: int) -> None:
        v = self.validators[recipient]
        if recipient not in self.corrupted and msg in v.view:
            return
        r = schedule_delivery(msg, send_round, recipient, self.config, self.strategy, sender)
        key = (recipient, msg)
        prev = self.scheduled.get(key)
        if prev is not None and prev <= r:
            return
        self.scheduled[key] = r
        self.inflight[r].append((recipient, msg, sender))

    def broadcast(self, msg: Message, send_round: int, sender: int, honest: bool) -> None:
        self.trace.record_send(send_round, sender, msg, honest)
        if isinstance(msg, Block):
            insert_block(self.tree, msg)
        for j in range(self.config.n):
            if j != sender:
                self._schedule(msg, send_round, j, sender)

    def deliver_to(self, msg: Message, recipients: Iterable[int], at_round: int, sender: int = -1) -> None:
        """Adversarial targeted delivery (no Δ bound applies to the choice of recipients)."""
        if isinstance(msg, Block):
            insert_block(self.tree, msg)
        at_round = max(at_round, self.round + 1)
        for j in recipients:
            key = (j, msg)
            prev = self.scheduled.get(key)
            if prev is None or prev > at_round:
                self.scheduled[key] = at_round
                self.inflight[at_round].append((j, msg, sender))

    def _relay(self, vid: int, msg: Message, r: int) -> None:
        if isinstance(msg, (ProposeTob, ProposeRlmd)):
            in_window = r <= msg.slot * self.config.slot_len + self.config.delta
            if not in_window:
                # Late proposals are not forwarded, but what they carry is.
                block = self.tree.blocks[msg.chain_p]
                inner: list[Message] = [block]
                inner += sorted(msg.cert if isinstance(msg, ProposeTob) else msg.view.votes, key=message_id)
                for m in inner:
                    for j in range(self.config.n):
                        if j != vid:
                            self._schedule(m, r, j, vid)
                return
        for j in range(self.config.n):
            if j != vid:
                self._schedule(msg, r, j, vid)

    # -- main loop ----------------------------------------------------------
    def _apply_events(self, r: int) -> None:
        for vid in sorted(v for v, cr in self.corrupt_at.items() if cr == r):
            self.corrupted.add(vid)
            self.strategy.on_corrupt(vid, r)
        woke: list[int] = []
        for vid, kind in sorted(self.sleep_events.get(r, ()), key=lambda e: (e[1] != "wake", e[0])):
            v = self.validators[vid]
            if kind == "sleep":
                self.asleep.add(vid)
                v.on_sleep()
            elif vid in self.asleep:
                self.asleep.discard(vid)
                woke.append(vid)
                v.on_wake(r)
        self._woke = woke

    def _collect_inbox(self, r: int) -> dict[int, list[Message]]:
        inbox: dict[int, list[Message]] = defaultdict(list)
        for vid in self._woke:
            inbox[vid].extend(self.sleep_queue.pop(vid, ()))
        for recipient, msg, sender in self.inflight.pop(r, ()):
            if self.scheduled.get((recipient, msg)) == r:
                del self.scheduled[(recipient, msg)]
            if recipient in self.corrupted:
                self.strategy.observe(recipient, msg, r, sender)
            elif recipient in self.asleep:
                self.sleep_queue[recipient].append(msg)
            else:
                inbox[recipient].append(msg)
        return inbox

    def step_round(self) -> None:
        r = self.round
        cfg = self.config
        self._apply_events(r)
        for tx in self.tx_by_round.get(r, ()):
            self.pool.add(tx)
            self.trace.record_tx(r, tx)
        inbox = self._collect_inbox(r)
        clock = RoundClock(r, cfg.delta)
        pool = frozenset(self.pool)
        for vid in range(cfg.n):
            if vid in self.corrupted or vid in self.asleep:
                continue
            v = self.validators[vid]
            msgs = sorted(inbox.get(vid, ()), key=message_id)
            relaying = v.is_active(r)
            for m in msgs:
                if v.receive(m, r):
                    self.trace.record_recv(r, vid, m)
                    if relaying:
                        self._relay(vid, m, r)
            out = v.step(r, (), pool)
            for m in out:
                self.broadcast(m, r, vid, honest=True)
                if isinstance(m, (ProposeTob, ProposeRlmd)):
                    self.trace.record_proposal(ProposalRecord(m.slot, vid, m.chain_p, pool))
        self.strategy.act(r)
        self._record(r, clock)
        self.round += 1

    def _record(self, r: int, clock: RoundClock) -> None:
        honest_active = frozenset(
            i
            for i in range(self.config.n)
            if i not in self.corrupted and i not in self.asleep and self.validators[i].is_active(r)
        )
        outputs = {
            i: (self.validators[i].chainava, self.validators[i].chainfin)
            for i in range(self.config.n)
            if i not in self.corrupted
        }
        self.trace.record_round(r, honest_active, frozenset(self.corrupted), outputs)

    def run(self) -> "Trace":
        while self.round < self.config.rounds:
            self.step_round()
        self.trace.finish(self.tree, self.proposers[: self.config.num_slots])
        return self.trace


def run(config: SimConfig, strategy: "Strategy | None" = None) -> "Trace":
    from .adversary import make_strategy

    sim = Simulation(config, strategy if strategy is not None else make_strategy(config))
    return sim.run()
