"""Adversary strategies and the participation-constraint evaluator.

Strategies see every message (deliveries to corrupted validators are
forwarded to :meth:`Strategy.observe`) and choose the delay of every
message within the bounds the network model allows.  Corrupted validators
keep an honest replica of the protocol around so that the shipped attacks
can be phrased as small edits of honest behaviour.

The constraint evaluators work on a :class:`MembershipRecord`, which only
depends on who was active, asleep or corrupted when; it can be built from
a finished :class:`~ebbflow.trace.Trace` or predicted from a config alone.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Callable

from .chain_store import GENESIS, Block, insert_block
from .messages import AckMsg, Message, ProposeRlmd, ProposeTob, VoteMsg, checkpoint
from .validator import Status, Validator, activation_round

if TYPE_CHECKING:  # pragma: no cover
    from .simnet import SimConfig, Simulation
    from .trace import Trace


# ---------------------------------------------------------------------------
# Membership and constraints


@dataclass(frozen=True)
class MembershipRecord:
    """Per-round active-honest and corrupted sets, plus a few run parameters."""

    H_rounds: tuple[frozenset[int], ...]
    A_rounds: tuple[frozenset[int], ...]
    delta: int
    n: int

    @classmethod
    def from_trace(cls, trace: "Trace") -> "MembershipRecord":
        cfg = trace.config
        return cls(tuple(trace.honest_active), tuple(trace.corrupted), cfg.delta, cfg.n)

    @classmethod
    def predict(cls, cfg: "SimConfig") -> "MembershipRecord":
        """Membership implied by a config's sleep and corruption schedules."""
        corrupt_at: dict[int, int] = {}
        for vid, r in cfg.corrupt:
            corrupt_at[vid] = min(r, corrupt_at.get(vid, r))
        asleep_spans: dict[int, list[tuple[int, int]]] = {}
        for vid, s, e in cfg.sleep:
            asleep_spans.setdefault(vid, []).append((s, e))
        # Replay wake-ups the way the simulator does: waking starts joining.
        active_from: dict[int, list[tuple[int, int]]] = {}
        for vid in range(cfg.n):
            spans = sorted(asleep_spans.get(vid, []))
            state_active = 0  # round from which the validator is active
            periods = []
            asleep = False
            events = []
            for s, e in spans:
                events.append((s, "sleep"))
                events.append((e, "wake"))
            events.sort(key=lambda ev: (ev[0], ev[1] != "wake"))
            for r, kind in events:
                if kind == "sleep" and not asleep:
                    if state_active < r:
                        periods.append((state_active, r))
                    asleep = True
                elif kind == "wake" and asleep:
                    asleep = False
                    state_active = activation_round(r, cfg.delta)
            if not asleep:
                periods.append((state_active, cfg.rounds))
            active_from[vid] = periods
        H, A = [], []
        for r in range(cfg.rounds):
            corrupted = frozenset(v for v, cr in corrupt_at.items() if cr <= r)
            h = frozenset(
                v
                for v in range(cfg.n)
                if v not in corrupted and any(a <= r < b for a, b in active_from[v])
            )
            H.append(h)
            A.append(corrupted)
        return cls(tuple(H), tuple(A), cfg.delta, cfg.n)

    @property
    def rounds(self) -> int:
        return len(self.H_rounds)

    def H(self, r: int) -> frozenset[int]:
        return self.H_rounds[r] if 0 <= r < self.rounds else frozenset()

    def A(self, r: int) -> frozenset[int]:
        if r < 0 or not self.A_rounds:
            return frozenset()
        return self.A_rounds[min(r, self.rounds - 1)]

    @property
    def A_inf(self) -> frozenset[int]:
        return self.A(self.rounds - 1)

    def v(self, t: int) -> int:
        return 4 * self.delta * t + self.delta

    def Hv(self, t: int) -> frozenset[int]:
        return self.H(self.v(t))

    def Av(self, t: int) -> frozenset[int]:
        return self.A(self.v(t))

    def H_span(self, t0: int, t1: int) -> frozenset[int]:
        """``H_{voting(t0), voting(t1)}``; empty when ``t0 > t1``."""
        out: set[int] = set()
        for r in range(max(self.v(t0), 0), min(self.v(t1), self.rounds - 1) + 1):
            out |= self.H_rounds[r]
        return frozenset(out)


def eval_constraint_1(rec: MembershipRecord, t: int, eta: int) -> bool:
    adv = rec.Av(t + 1)
    left = rec.Hv(t) - adv
    right = adv | (rec.H_span(t - eta + 1, t - 1) - rec.Hv(t))
    return len(left) > len(right)


def eval_constraint_2(rec: MembershipRecord, t_a: int | None, pi: int, eta: int) -> bool:
    if t_a is None or pi == 0:
        return True
    base = rec.Hv(t_a)
    for tp in range(t_a + 1, t_a + pi + 3):
        adv = rec.Av(tp)
        if not len(base - adv) > len(adv | (rec.H_span(tp - eta, tp - 1) - base)):
            return False
    return True


def eval_constraint_3(rec: MembershipRecord, t_a: int | None, pi: int = 1) -> bool:
    if t_a is None or pi == 0:
        return True
    return (rec.Hv(t_a) - rec.Av(t_a + 1)) <= rec.H(rec.v(t_a) + rec.delta)


def eval_constraint_4(
    rec: MembershipRecord, t_a: int | None, pi: int, n: int, threshold: Fraction = Fraction(2, 3)
) -> bool:
    if t_a is None or pi == 0:
        return True
    joined = rec.H_span(t_a + 1, t_a + pi + 1) - rec.Hv(t_a)
    return len(joined | rec.A_inf) < threshold * n


def eval_constraint_5(rec: MembershipRecord, t: int, eta: int) -> bool:
    adv = rec.Av(t + 1)
    right = adv | (rec.H_span(t - eta + 1, t - 1) - rec.Hv(t))
    return len(rec.Hv(t)) > len(right)


def compliance_report(rec: MembershipRecord, cfg: "SimConfig") -> list[str]:
    """Names of violated constraints (empty when the schedule is compliant)."""
    problems = []
    slot_len = 4 * cfg.delta
    first = -(-cfg.gst // slot_len)
    last = (rec.rounds - 1 - cfg.delta) // slot_len
    per_slot = eval_constraint_1 if cfg.variant.is_tob else eval_constraint_5
    label = "1" if cfg.variant.is_tob else "5"
    for t in range(first, last + 1):
        if not per_slot(rec, t, cfg.eta):
            problems.append(f"constraint {label} at slot {t}")
    if cfg.pi > 0 and cfg.t_a is not None:
        if not eval_constraint_2(rec, cfg.t_a, cfg.pi, cfg.eta):
            problems.append("constraint 2")
        if not eval_constraint_3(rec, cfg.t_a, cfg.pi):
            problems.append("constraint 3")
        if not eval_constraint_4(rec, cfg.t_a, cfg.pi, cfg.n, Fraction(cfg.c4_threshold)):
            problems.append("constraint 4")
    return problems


def is_eta_compliant(trace_or_rec: "Trace | MembershipRecord", cfg: "SimConfig | None" = None) -> bool:
    if isinstance(trace_or_rec, MembershipRecord):
        assert cfg is not None
        rec = trace_or_rec
    else:
        cfg = cfg or trace_or_rec.config
        rec = MembershipRecord.from_trace(trace_or_rec)
    return not compliance_report(rec, cfg)


# ---------------------------------------------------------------------------
# Strategies


class Strategy:
    """Passive adversary: corrupted validators stay silent.

    The ``delay`` parameter (``min`` or ``max``) picks the delivery round of
    every message inside its allowed interval.
    """

    name = "passive"

    def __init__(self, params: dict[str, str] | None = None) -> None:
        self.params = dict(params or {})
        self.delay_mode = self.params.get("delay", "min")
        if self.delay_mode not in ("min", "max"):
            raise ValueError(f"unknown delay mode {self.delay_mode!r}")
        self.sim: "Simulation | None" = None

    def bind(self, sim: "Simulation") -> None:
        self.sim = sim

    def delay(self, msg: Message, send_round: int, recipient: int, lo: int, hi: int, sender: int = -1) -> int:
        return hi if self.delay_mode == "max" else lo

    def on_corrupt(self, vid: int, r: int) -> None:
        pass

    def observe(self, vid: int, msg: Message, r: int, sender: int = -1) -> None:
        pass

    def act(self, r: int) -> None:
        pass

    # helpers for subclasses
    def send(self, msg: Message, sender: int, recipients=None, at_round: int | None = None) -> None:
        """Send a fabricated message; defaults to an ordinary broadcast."""
        sim = self.sim
        assert sim is not None
        if not isinstance(msg, Block):
            assert msg.sender in sim.corrupted, "only corrupted validators can be impersonated"
        if recipients is None:
            sim.broadcast(msg, sim.round, sender, honest=False)
            return
        sim.trace.record_send(sim.round, sender, msg, False)
        sim.deliver_to(msg, recipients, at_round if at_round is not None else sim.round + 1, sender)


class MaxDelay(Strategy):
    name = "max-delay"

    def __init__(self, params: dict[str, str] | None = None) -> None:
        params = dict(params or {})
        params.setdefault("delay", "max")
        super().__init__(params)


class _ReplicaStrategy(Strategy):
    """Base for attacks that start from an honest replica's behaviour."""

    def observe(self, vid: int, msg: Message, r: int, sender: int = -1) -> None:
        self.sim.validators[vid].receive(msg, r)

    def on_corrupt(self, vid: int, r: int) -> None:
        v = self.sim.validators[vid]
        if v.status is Status.ASLEEP:
            v.status = Status.ACTIVE

    def act(self, r: int) -> None:
        sim = self.sim
        for vid in sorted(sim.corrupted):
            replica = sim.validators[vid]
            replica.status = Status.ACTIVE
            for msg in replica.step(r, (), frozenset(sim.pool)):
                self.emit(vid, msg, r)

    def emit(self, vid: int, msg: Message, r: int) -> None:
        self.send(msg, vid)


class Equivocator(_ReplicaStrategy):
    """Corrupted validators send two conflicting votes every slot.

    Half of the honest validators receive the replica's vote first and the
    other half a vote for a different chain; as proposers they likewise
    split two sibling blocks between the halves.
    """

    name = "equivocator"

    def _halves(self) -> tuple[list[int], list[int]]:
        honest = self.sim.honest_ids()
        return honest[::2], honest[1::2]

    def _all_but(self, vid: int) -> list[int]:
        return [j for j in range(self.sim.config.n) if j != vid]

    def emit(self, vid: int, msg: Message, r: int) -> None:
        sim = self.sim
        left, right = self._halves()
        at = self.delay(msg, r, -1, r + 1, r + sim.config.delta)
        if isinstance(msg, VoteMsg):
            blk = sim.tree.blocks[msg.chain]
            alt_chain = blk.parent if blk.parent is not None else None
            if alt_chain is None:
                self.send(msg, vid)
                return
            alt = VoteMsg(alt_chain, msg.ffg, msg.slot, vid)
            self.send(msg, vid, left + sorted(sim.corrupted), at)
            self.send(alt, vid, right, at)
        elif isinstance(msg, Block):
            self._pending_block = msg
        elif isinstance(msg, (ProposeTob, ProposeRlmd)):
            block = sim.tree.blocks[msg.chain_p]
            twin = Block.make(block.parent, block.slot, block.body | {f"eq{block.slot}.{vid}"})
            insert_block(sim.tree, twin)
            if isinstance(msg, ProposeTob):
                twin_prop: Message = ProposeTob(twin.id, msg.fast_chain, msg.cert, msg.gj, msg.slot, vid)
            else:
                snap = type(msg.view)(msg.view.blocks | {twin.id}, msg.view.votes)
                twin_prop = ProposeRlmd(twin.id, snap, msg.slot, vid)
            self.send(block, vid, left, at)
            self.send(msg, vid, left, at)
            self.send(twin, vid, right, at)
            self.send(twin_prop, vid, right, at)
        else:
            self.send(msg, vid)


class FfgWithholder(_ReplicaStrategy):
    """Corrupted validators point their FFG votes at a stale checkpoint and hold them back.

    The target is the source chain itself (re-stamped with the current
    slot), so each vote is a valid link that, on its own, cannot justify
    anything new.  Votes are released ``hold`` slots later.
    """

    name = "ffg-withholder"

    def __init__(self, params: dict[str, str] | None = None) -> None:
        super().__init__(params)
        self.hold = int(self.params.get("hold", "2"))
        self.held: list[tuple[int, int, Message]] = []

    def emit(self, vid: int, msg: Message, r: int) -> None:
        sim = self.sim
        if isinstance(msg, VoteMsg) and msg.ffg is not None:
            src = msg.ffg.source
            stale = checkpoint(sim.tree, src.chain, msg.slot)
            ffg = type(msg.ffg)(src, stale, vid) if stale.c > src.c else msg.ffg
            self.held.append((r + self.hold * sim.config.slot_len, vid, VoteMsg(msg.chain, ffg, msg.slot, vid)))
            return
        self.send(msg, vid)

    def act(self, r: int) -> None:
        super().act(r)
        due = [h for h in self.held if h[0] <= r]
        self.held = [h for h in self.held if h[0] > r]
        for _, vid, msg in due:
            self.send(msg, vid)


class Partitioner(Strategy):
    """Split the honest validators in two groups until GST.

    Messages crossing groups before GST arrive at the latest allowed round.
    With ``double=true`` each corrupted validator runs one replica per
    group and shows each group only that replica, so it double votes
    whenever the groups disagree.
    """

    name = "partitioner"

    def bind(self, sim: "Simulation") -> None:
        super().bind(sim)
        layout = self.params.get("groups")
        if layout:
            groups = [[int(x) for x in g.split(".") if x] for g in layout.split("/")]
        else:
            honest = [i for i in range(sim.config.n) if i not in {v for v, _ in sim.config.corrupt}]
            half = (len(honest) + 1) // 2
            groups = [honest[:half], honest[half:]]
        self.side = {vid: k for k, g in enumerate(groups) for vid in g}
        self.groups = groups
        self.double = self.params.get("double", "false") == "true"
        self.replicas: dict[int, list[Validator]] = {}
        self.replica_inbox: dict[tuple[int, int], list[Message]] = {}

    def _cross(self, a: int, b: int) -> bool:
        sa, sb = self.side.get(a), self.side.get(b)
        return sa is not None and sb is not None and sa != sb

    def delay(self, msg: Message, send_round: int, recipient: int, lo: int, hi: int, sender: int = -1) -> int:
        sim = self.sim
        if send_round < sim.config.gst and self._cross(sender, recipient):
            return hi
        return super().delay(msg, send_round, recipient, lo, hi, sender)

    def on_corrupt(self, vid: int, r: int) -> None:
        if not self.double:
            return
        sim = self.sim
        base = sim.validators[vid]
        reps = [base]
        for _ in range(1, len(self.groups)):
            reps.append(Validator(vid, base.params, sim.tree, base.proposer_of))
        self.replicas[vid] = reps

    def observe(self, vid: int, msg: Message, r: int, sender: int = -1) -> None:
        reps = self.replicas.get(vid)
        if not reps:
            return
        side = self.side.get(sender)
        if r >= self.sim.config.gst or side is None:
            for rep in reps:
                rep.receive(msg, r)
        else:
            reps[side].receive(msg, r)

    def act(self, r: int) -> None:
        sim = self.sim
        if not self.double:
            return
        pool = frozenset(sim.pool)
        for vid in sorted(self.replicas):
            for k, rep in enumerate(self.replicas[vid]):
                inbox = self.replica_inbox.pop((vid, k), [])
                for m in inbox:
                    rep.receive(m, r)
                rep.status = Status.ACTIVE
                for msg in rep.step(r, (), pool):
                    targets = [j for j in self.groups[k] if j not in sim.corrupted]
                    self.send(msg, vid, targets, r + 1)
                    if r >= sim.config.gst:
                        others = [j for g in self.groups[:k] + self.groups[k + 1:] for j in g]
                        self.send(msg, vid, others, r + sim.config.delta)
                    for other in self.replicas:
                        if other != vid:
                            self.replica_inbox.setdefault((other, k), []).append(msg)


STRATEGIES: dict[str, Callable[[dict[str, str]], Strategy]] = {
    "passive": Strategy,
    "max-delay": MaxDelay,
    "equivocator": Equivocator,
    "ffg-withholder": FfgWithholder,
    "partitioner": Partitioner,
}


def make_strategy(cfg: "SimConfig") -> Strategy:
    try:
        factory = STRATEGIES[cfg.adversary]
    except KeyError:
        raise ValueError(f"unknown adversary {cfg.adversary!r}") from None
    return factory(dict(cfg.adversary_params))


# ---------------------------------------------------------------------------
# Randomized schedules


class NoCompliantSchedule(RuntimeError):
    pass


def random_sleep_schedule(
    cfg: "SimConfig",
    rng: random.Random,
    max_naps: int = 2,
    nap_prob: float = 0.5,
    protect: frozenset[int] = frozenset(),
) -> tuple[tuple[int, int, int], ...]:
    """A random set of naps (each a few slots long) ending before GAT or the run end."""
    slot_len = cfg.slot_len
    horizon = cfg.gat if cfg.gat > 0 else cfg.rounds
    out = []
    for vid in range(cfg.n):
        if vid in protect:
            continue
        for _ in range(max_naps):
            if rng.random() >= nap_prob:
                continue
            start = rng.randrange(0, max(1, horizon - slot_len))
            length = rng.randint(1, 4 * slot_len)
            end = min(start + length, horizon)
            if end > start:
                out.append((vid, start, end))
    return tuple(_merge_naps(out))


def _merge_naps(naps: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    merged: list[tuple[int, int, int]] = []
    for vid, s, e in sorted(naps):
        if merged and merged[-1][0] == vid and s <= merged[-1][2]:
            prev = merged[-1]
            merged[-1] = (vid, prev[1], max(prev[2], e))
        else:
            merged.append((vid, s, e))
    return merged


def sample_compliant(
    cfg: "SimConfig",
    rng: random.Random,
    corrupt_count: int = 0,
    max_tries: int = 200,
    **nap_kwargs,
) -> tuple["SimConfig", int]:
    """Rejection-sample sleep and corruption schedules until the config is compliant.

    Returns the accepted config and the number of rejected candidates.
    """
    rejected = 0
    for _ in range(max_tries):
        corrupt = tuple((vid, 0) for vid in sorted(rng.sample(range(cfg.n), corrupt_count)))
        candidate = cfg.with_(corrupt=corrupt, sleep=())
        sleep = random_sleep_schedule(candidate, rng, protect=frozenset(v for v, _ in corrupt), **nap_kwargs)
        candidate = candidate.with_(sleep=sleep)
        if not compliance_report(MembershipRecord.predict(candidate), candidate):
            return candidate, rejected
        rejected += 1
    raise NoCompliantSchedule(f"no compliant schedule in {max_tries} tries")
