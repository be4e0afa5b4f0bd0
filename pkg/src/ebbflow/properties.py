"""Post-hoc checkers over a finished :class:`~ebbflow.trace.Trace`.

Each checker reads only what the trace recorded (outputs, membership,
sent and received messages) and returns a :class:`Verdict`.  Guarantees in
this protocol family are conditional, so every checker first restricts its
quantifier to the cases where the guarantee is promised (honest proposer,
post-GST slots, fewer than a third corrupted, compliant participation)
and reports ``skip`` with a reason when nothing is left to check.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator

from . import chain_store as cs
from .adversary import compliance_report, MembershipRecord
from .messages import View
from .slashing import detect_all
from .validator import observer_finalize

if TYPE_CHECKING:  # pragma: no cover
    from .simnet import SimConfig
    from .trace import Trace

PASS, FAIL, SKIP = "pass", "fail", "skip"

# Synchronous safety of the available chain is not promised across an
# asynchrony window; only the aware-validator guarantees of
# check_async_resilience are.
_WINDOW_REASON = "run has an asynchrony window (see async_resilience)"


@dataclass(frozen=True)
class Verdict:
    name: str
    status: str
    witness: tuple | None = None
    reason: str = ""
    checked: int = 0
    details: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def line(self) -> str:
        parts = [self.name, self.status, f"checked={self.checked}"]
        if self.reason:
            parts.append(self.reason)
        if self.witness is not None:
            parts.append("witness=" + ",".join(map(str, self.witness)))
        return " | ".join(parts)


class _Chains:
    """Memoized prefix and transaction queries on one trace's block tree."""

    def __init__(self, tree: cs.BlockTree) -> None:
        self.tree = tree
        self._prefix: dict[tuple[str, str], bool] = {}
        self._txs: dict[str, frozenset[str]] = {}

    def prefix(self, a: str, b: str) -> bool:
        key = (a, b)
        hit = self._prefix.get(key)
        if hit is None:
            hit = self._prefix[key] = cs.is_prefix(self.tree, a, b)
        return hit

    def conflict(self, a: str, b: str) -> bool:
        return not self.prefix(a, b) and not self.prefix(b, a)

    def txs(self, c: str) -> frozenset[str]:
        hit = self._txs.get(c)
        if hit is None:
            hit = self._txs[c] = frozenset(cs.chain_txs(self.tree, c))
        return hit


def _chains(trace: "Trace") -> _Chains:
    cached = getattr(trace, "_chain_cache", None)
    if cached is None or cached.tree is not trace.tree:
        cached = _Chains(trace.tree)
        trace._chain_cache = cached  # type: ignore[attr-defined]
    return cached


def _slot_len(cfg: "SimConfig") -> int:
    return 4 * cfg.delta


def _in_async(cfg: "SimConfig", first_slot: int, last_slot: int) -> bool:
    """Whether slots ``[first_slot, last_slot]`` touch the asynchrony window."""
    if cfg.t_a is None or cfg.pi == 0:
        return False
    return first_slot <= cfg.t_a + cfg.pi + 1 and last_slot >= cfg.t_a


def _compliance_skip(trace: "Trace", cfg: "SimConfig") -> str | None:
    problems = compliance_report(MembershipRecord.from_trace(trace), cfg)
    return "not eta-compliant: " + "; ".join(problems) if problems else None


def _first_conflict(chains: _Chains, tips: Iterable[str]) -> tuple[str, str] | None:
    """A conflicting pair among ``tips``, or None when they form one chain."""
    ordered = sorted(set(tips), key=lambda c: (chains.tree.slot(c), c))
    for a, b in zip(ordered, ordered[1:]):
        if not chains.prefix(a, b):
            return a, b
    return None


# ---------------------------------------------------------------------------
# safety


def check_available_safety(trace: "Trace", t_after: int = 0) -> Verdict:
    """No two honest-active available outputs from round ``t_after`` on conflict."""
    if trace.config.window is not None:
        return Verdict("available_safety", SKIP, reason=_WINDOW_REASON)
    chains = _chains(trace)
    where: dict[str, tuple[int, int]] = {}
    for r in range(max(t_after, 0), trace.rounds):
        outs = trace.outputs[r]
        for vid in trace.H(r) - trace.A_inf:
            where.setdefault(outs[vid][0], (vid, r))
    if not where:
        return Verdict("available_safety", SKIP, reason="no honest outputs")
    pair = _first_conflict(chains, where)
    if pair is None:
        return Verdict("available_safety", PASS, checked=len(where))
    a, b = pair
    return Verdict("available_safety", FAIL, witness=(*where[a], a, *where[b], b), checked=len(where))


def finalized_conflict(trace: "Trace") -> tuple | None:
    chains = _chains(trace)
    where: dict[str, tuple[int, int]] = {}
    honest = set(range(trace.config.n)) - trace.A_inf
    for r, outs in enumerate(trace.outputs):
        for vid in honest:
            if vid in outs:
                where.setdefault(outs[vid][1], (vid, r))
    pair = _first_conflict(chains, where)
    if pair is None:
        return None
    a, b = pair
    return (*where[a], a, *where[b], b)


def check_finalized_safety_and_accountability(trace: "Trace", n: int | None = None) -> Verdict:
    """Finalized outputs agree, or at least n/3 guilty validators are identified."""
    n = trace.config.n if n is None else n
    name = "finalized_safety_accountability"
    conflict = finalized_conflict(trace)
    if conflict is None:
        return Verdict(name, PASS, reason="no conflicting finalization", details={"conflict": False})
    flagged = detect_all(trace.all_messages())
    guilty = frozenset(flagged)
    need = math.ceil(n / 3)
    honest_flagged = guilty - trace.A_inf
    details = {"conflict": True, "flagged": sorted(guilty), "rules": {k: v[0] for k, v in flagged.items()}}
    if honest_flagged:
        return Verdict(name, FAIL, witness=tuple(sorted(honest_flagged)), reason="honest validator flagged", details=details)
    if len(guilty) < need:
        return Verdict(name, FAIL, witness=conflict, reason=f"only {len(guilty)} flagged, need {need}", details=details)
    return Verdict(name, PASS, reason=f"conflict attributed to {sorted(guilty)}", checked=len(guilty), details=details)


def check_reorg_resilience(trace: "Trace", t_reorg: int = 0, T_reorg: int = 0, require_compliance: bool = True) -> Verdict:
    """Honest proposals from slot ``t_reorg`` on never conflict with aware honest available chains."""
    cfg = trace.config
    name = "reorg_resilience"
    if cfg.window is not None:
        return Verdict(name, SKIP, reason=_WINDOW_REASON)
    if require_compliance:
        why = _compliance_skip(trace, cfg)
        if why:
            return Verdict(name, SKIP, reason=why)
    chains = _chains(trace)
    slot_len = _slot_len(cfg)
    first = max(t_reorg, -(-cfg.gst // slot_len))
    props = [p for t, p in sorted(trace.proposals.items()) if t >= first and not _in_async(cfg, t, t)]
    if not props:
        return Verdict(name, PASS, reason="vacuous: no qualifying honest proposals")
    checked = 0
    for r in range(max(T_reorg, 0), trace.rounds):
        outs = trace.outputs[r]
        tips = {outs[vid][0]: vid for vid in sorted(trace.W(r) - trace.A_inf, reverse=True)}
        for p in props:
            if p.slot * slot_len > r:
                break
            for tip, vid in tips.items():
                checked += 1
                if chains.conflict(p.chain, tip):
                    return Verdict(name, FAIL, witness=(p.slot, p.chain, vid, r), checked=checked)
    return Verdict(name, PASS, checked=checked)


def check_prefix_and_monotone(trace: "Trace") -> Verdict:
    """Finalized output is a prefix of the available one and never goes backwards."""
    chains = _chains(trace)
    name = "prefix_and_monotone"
    last: dict[int, str] = {}
    checked = 0
    for r, outs in enumerate(trace.outputs):
        for vid, (ava, fin) in outs.items():
            checked += 1
            if not chains.prefix(fin, ava):
                return Verdict(name, FAIL, witness=("prefix", vid, r, fin, ava), checked=checked)
            prev = last.get(vid)
            if prev is not None and prev != fin and not chains.prefix(prev, fin):
                return Verdict(name, FAIL, witness=("monotone", vid, r, prev, fin), checked=checked)
            last[vid] = fin
    return Verdict(name, PASS, checked=checked)


def check_async_resilience(trace: "Trace", cfg: "SimConfig | None" = None) -> Verdict:
    """Pre-window proposals and pre-window available chains survive the asynchrony window."""
    cfg = cfg or trace.config
    name = "async_resilience"
    if cfg.pi == 0 or cfg.t_a is None:
        return Verdict(name, SKIP, reason="no asynchrony window")
    slot_len = _slot_len(cfg)
    if cfg.gst > slot_len * cfg.t_a:
        return Verdict(name, SKIP, reason="window starts before GST")
    why = _compliance_skip(trace, cfg)
    if why:
        return Verdict(name, SKIP, reason=why)
    chains = _chains(trace)
    v_ta = slot_len * cfg.t_a + cfg.delta
    first = -(-cfg.gst // slot_len)
    props = [p for t, p in sorted(trace.proposals.items()) if first <= t <= cfg.t_a]
    early: dict[str, tuple[int, int]] = {}
    for r in range(cfg.gst, min(v_ta, trace.rounds - 1) + 1):
        for vid in trace.H(r) - trace.A_inf:
            early.setdefault(trace.outputs[r][vid][0], (vid, r))
    reorg = safety = 0
    for r in range(trace.rounds):
        outs = trace.outputs[r]
        aware = {outs[vid][0]: vid for vid in sorted(trace.W(r) - trace.A_inf, reverse=True)}
        for p in props:
            if p.slot * slot_len > r:
                continue
            for tip, vid in aware.items():
                reorg += 1
                if chains.conflict(p.chain, tip):
                    return Verdict(name, FAIL, witness=("proposal", p.slot, p.chain, vid, r), checked=reorg + safety)
        for tip0, (vid0, r0) in early.items():
            if r0 > r:
                continue
            for tip, vid in aware.items():
                safety += 1
                if chains.conflict(tip0, tip):
                    return Verdict(name, FAIL, witness=("chain", vid0, r0, tip0, vid, r, tip), checked=reorg + safety)
    # The proposal half and the chain half are reported separately so callers
    # can tell that both were exercised.
    return Verdict(name, PASS, checked=reorg + safety, details={"reorg": reorg, "safety": safety})


# ---------------------------------------------------------------------------
# liveness


def effective_gat(trace: "Trace", cfg: "SimConfig") -> int:
    """The configured GAT, pushed past the last round some honest validator was inactive."""
    gat = cfg.gat
    for r in range(trace.rounds - 1, -1, -1):
        if set(trace.outputs[r]) != set(trace.H(r)):
            return max(gat, r + 1)
    return gat


def _live_slots(trace: "Trace", cfg: "SimConfig", span: int, from_slot: int = 0) -> Iterator:
    """Honest-proposal slots eligible for a liveness deadline ``span`` slots later."""
    slot_len = _slot_len(cfg)
    start = max(cfg.gst, effective_gat(trace, cfg)) + slot_len
    for t, p in sorted(trace.proposals.items()):
        if t < from_slot or slot_len * t < start:
            continue
        if _in_async(cfg, t, t + span):
            continue
        yield t, p


def check_finality_liveness(trace: "Trace", cfg: "SimConfig | None" = None, from_slot: int = 0) -> Verdict:
    """Every eligible honest proposal is finalized by round 4Δ(t+2)+2Δ."""
    cfg = cfg or trace.config
    name = "finality_liveness"
    if not cfg.variant.is_3sf:
        return Verdict(name, SKIP, reason="variant has no finality gadget")
    if 3 * len(trace.A_inf) >= cfg.n:
        return Verdict(name, SKIP, reason="at least n/3 corrupted")
    chains = _chains(trace)
    checked = 0
    for t, p in _live_slots(trace, cfg, 2, from_slot):
        deadline = _slot_len(cfg) * (t + 2) + 2 * cfg.delta
        if deadline >= trace.rounds:
            break
        for vid, (_, fin) in sorted(trace.outputs[deadline].items()):
            checked += 1
            if not chains.prefix(p.chain, fin):
                return Verdict(name, FAIL, witness=(t, p.chain, vid, deadline, fin), checked=checked)
            missing = p.pool - chains.txs(fin)
            if missing:
                return Verdict(name, FAIL, witness=(t, vid, deadline, min(missing)), checked=checked)
    if not checked:
        return Verdict(name, SKIP, reason="no eligible slot")
    return Verdict(name, PASS, checked=checked)


class _ViewReplay:
    """Incrementally rebuilds one validator's view from the trace."""

    def __init__(self, trace: "Trace", vid: int) -> None:
        events = [(s.round, 0, s.msg) for s in trace.sends if s.sender == vid and s.honest]
        events += [(r, 1, m) for r, who, m in trace.recvs if who == vid]
        events.sort(key=lambda e: (e[0], e[1]))
        self.events = events
        self.pos = 0
        self.view = View(trace.tree)

    def upto(self, r: int) -> View:
        while self.pos < len(self.events) and self.events[self.pos][0] <= r:
            self.view.insert(self.events[self.pos][2])
            self.pos += 1
        return self.view


def check_two_slot_liveness(trace: "Trace", cfg: "SimConfig | None" = None, from_slot: int = 0) -> Verdict:
    """With acknowledgments, eligible proposals are observer-finalized by 4Δ(t+1)+3Δ."""
    cfg = cfg or trace.config
    name = "two_slot_liveness"
    if not cfg.variant.is_3sf or not cfg.acks:
        return Verdict(name, SKIP, reason="acknowledgments disabled")
    if 3 * len(trace.A_inf) >= cfg.n:
        return Verdict(name, SKIP, reason="at least n/3 corrupted")
    chains = _chains(trace)
    replays: dict[int, _ViewReplay] = {}
    checked = 0
    for t, p in _live_slots(trace, cfg, 1, from_slot):
        deadline = _slot_len(cfg) * (t + 1) + 3 * cfg.delta
        if deadline >= trace.rounds:
            break
        for vid in sorted(trace.outputs[deadline]):
            replay = replays.setdefault(vid, _ViewReplay(trace, vid))
            view = replay.upto(deadline)
            done = observer_finalize(view.acks, view, cfg.n)
            checked += 1
            if not any(chains.prefix(p.chain, cp.chain) for cp in done):
                return Verdict(name, FAIL, witness=(t, p.chain, vid, deadline), checked=checked)
    if not checked:
        return Verdict(name, SKIP, reason="no eligible slot")
    return Verdict(name, PASS, checked=checked)


def check_fastconf_liveness(trace: "Trace", cfg: "SimConfig | None" = None, from_slot: int = 0) -> Verdict:
    """With a supermajority awake, an honest proposal is fast confirmed in its own slot."""
    cfg = cfg or trace.config
    name = "fastconf_liveness"
    chains = _chains(trace)
    slot_len = _slot_len(cfg)
    quorum = (2 * cfg.n + 2) // 3
    checked = 0
    for t, p in sorted(trace.proposals.items()):
        if t < from_slot or slot_len * t < cfg.gst or _in_async(cfg, t, t):
            continue
        r = slot_len * t + 2 * cfg.delta
        if r >= trace.rounds:
            break
        if len(trace.H(slot_len * t + cfg.delta)) < quorum:
            continue
        for vid in sorted(trace.H(r)):
            ava = trace.outputs[r][vid][0]
            checked += 1
            if not chains.prefix(p.chain, ava):
                return Verdict(name, FAIL, witness=(t, p.chain, vid, r, ava), checked=checked)
    if not checked:
        return Verdict(name, SKIP, reason="no slot with supermajority participation")
    return Verdict(name, PASS, checked=checked)


def check_kappa_liveness(trace: "Trace", cfg: "SimConfig | None" = None, from_round: int = 0) -> Verdict:
    """Transactions reach every active available chain within 8κΔ+Δ rounds.

    A transaction only counts when an honest proposal was actually made in
    one of the κ slots after its injection, since the bound relies on one.
    """
    cfg = cfg or trace.config
    name = "kappa_liveness"
    why = _compliance_skip(trace, cfg)
    if why:
        return Verdict(name, SKIP, reason=why)
    chains = _chains(trace)
    slot_len = _slot_len(cfg)
    t_conf = 8 * cfg.kappa * cfg.delta + cfg.delta
    checked = 0
    for r_tx, tx in sorted(trace.txs):
        if r_tx < max(from_round, cfg.gst):
            continue
        due = r_tx + t_conf
        if due >= trace.rounds:
            continue
        s = r_tx // slot_len
        if _in_async(cfg, s, due // slot_len):
            continue
        if not any(t in trace.proposals for t in range(s + 1, s + cfg.kappa + 1)):
            continue
        for r in range(due, trace.rounds):
            outs = trace.outputs[r]
            for vid in trace.H(r):
                checked += 1
                if tx not in chains.txs(outs[vid][0]):
                    return Verdict(name, FAIL, witness=(tx, r_tx, vid, r), checked=checked)
    if not checked:
        return Verdict(name, SKIP, reason="no transaction with a full confirmation window")
    return Verdict(name, PASS, checked=checked)


# ---------------------------------------------------------------------------
# healing and metrics


def find_t_heal(trace: "Trace", cfg: "SimConfig | None" = None) -> int | None:
    """First post-GST slot with an honest proposer and every honest validator active at fast confirmation."""
    cfg = cfg or trace.config
    slot_len = _slot_len(cfg)
    for t in range(cfg.num_slots):
        if slot_len * t < cfg.gst + cfg.delta:
            continue
        r = slot_len * t + 2 * cfg.delta
        if r >= trace.rounds:
            return None
        if t not in trace.proposals:
            continue
        if set(trace.outputs[r]) == set(trace.H(r)):
            return t
    return None


@dataclass(frozen=True)
class LatencyReport:
    available: dict[str, int]
    finalized: dict[str, int]

    @staticmethod
    def _summary(values: Iterable[int]) -> dict:
        vals = sorted(values)
        if not vals:
            return {"count": 0}
        return {"count": len(vals), "min": vals[0], "median": statistics.median(vals), "max": vals[-1]}

    def summary(self) -> dict:
        return {
            "available": self._summary(self.available.values()),
            "finalized": self._summary(self.finalized.values()),
        }


def latency_metrics(trace: "Trace") -> LatencyReport:
    """Rounds from injection until every active honest validator's output includes the transaction."""
    chains = _chains(trace)
    ava: dict[str, int] = {}
    fin: dict[str, int] = {}
    for r_tx, tx in sorted(trace.txs):
        for r in range(r_tx, trace.rounds):
            outs = trace.outputs[r]
            active = trace.H(r)
            if not active:
                continue
            if tx not in ava and all(tx in chains.txs(outs[v][0]) for v in active):
                ava[tx] = r - r_tx
            if tx not in fin and all(tx in chains.txs(outs[v][1]) for v in active):
                fin[tx] = r - r_tx
                break
    return LatencyReport(ava, fin)


def run_all_checks(trace: "Trace", cfg: "SimConfig | None" = None) -> list[Verdict]:
    """Every checker, with synchronous checks starting after healing when GST > 0."""
    cfg = cfg or trace.config
    t_after, from_slot = 0, 0
    verdicts: list[Verdict] = []
    if cfg.gst > 0:
        t_heal = find_t_heal(trace, cfg)
        if t_heal is None:
            verdicts.append(Verdict("healing", SKIP, reason="no healing slot in the run"))
            from_slot = cfg.num_slots
            t_after = trace.rounds
        else:
            from_slot = t_heal
            t_after = _slot_len(cfg) * t_heal + 2 * cfg.delta
            verdicts.append(Verdict("healing", PASS, witness=(t_heal,), reason=f"t_heal={t_heal}"))
    verdicts += [
        check_available_safety(trace, t_after),
        check_finalized_safety_and_accountability(trace, cfg.n),
        check_reorg_resilience(trace, from_slot, t_after),
        check_prefix_and_monotone(trace),
        check_finality_liveness(trace, cfg, from_slot),
        check_two_slot_liveness(trace, cfg, from_slot),
        check_fastconf_liveness(trace, cfg, from_slot),
        check_kappa_liveness(trace, cfg, t_after),
        check_async_resilience(trace, cfg),
    ]
    return verdicts
