"""Append-only record of a simulation run.

The trace is what every property checker reads.  It holds, per round, the
active-honest and corrupted sets plus each honest validator's
``(available, finalized)`` chain tips, and globally every sent message,
every first receipt, every honest proposal and every transaction
injection.  :meth:`Trace.serialize` renders it as ``round|kind|fields``
lines in a canonical order so that equal runs give equal bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .chain_store import Block, BlockTree
from .messages import AckMsg, Checkpoint, Message, ProposeRlmd, ProposeTob, VoteMsg, message_id, View

if TYPE_CHECKING:  # pragma: no cover
    from .simnet import ProposalRecord, SimConfig


@dataclass(frozen=True)
class SendRecord:
    round: int
    sender: int
    msg: Message
    honest: bool


def _cp(cp: Checkpoint) -> str:
    return f"{cp.chain}:{cp.c}:{cp.p}"


def message_fields(msg: Message) -> str:
    if isinstance(msg, Block):
        return f"block|{msg.id}|{msg.parent or '-'}|{msg.slot}|{','.join(sorted(msg.body))}"
    if isinstance(msg, VoteMsg):
        ffg = f"{_cp(msg.ffg.source)}>{_cp(msg.ffg.target)}" if msg.ffg else "-"
        return f"vote|{msg.mid}|{msg.chain}|{ffg}|{msg.slot}|{msg.sender}"
    if isinstance(msg, AckMsg):
        return f"ack|{msg.mid}|{_cp(msg.checkpoint)}|{msg.slot}|{msg.sender}"
    if isinstance(msg, ProposeTob):
        cert = ",".join(sorted(v.mid for v in msg.cert))
        return (
            f"propose|{msg.mid}|{msg.chain_p}|{msg.fast_chain}|{cert}|{_cp(msg.gj)}"
            f"|{msg.slot}|{msg.sender}"
        )
    if isinstance(msg, ProposeRlmd):
        votes = ",".join(sorted(v.mid for v in msg.view.votes))
        return f"propose|{msg.mid}|{msg.chain_p}|{len(msg.view.blocks)}|{votes}|{msg.slot}|{msg.sender}"
    raise TypeError(msg)


@dataclass
class Trace:
    config: "SimConfig"
    honest_active: list[frozenset[int]] = field(default_factory=list)
    corrupted: list[frozenset[int]] = field(default_factory=list)
    outputs: list[dict[int, tuple[str, str]]] = field(default_factory=list)
    sends: list[SendRecord] = field(default_factory=list)
    recvs: list[tuple[int, int, Message]] = field(default_factory=list)
    proposals: dict[int, "ProposalRecord"] = field(default_factory=dict)
    txs: list[tuple[int, str]] = field(default_factory=list)
    proposers: list[int] = field(default_factory=list)
    tree: BlockTree = field(default_factory=BlockTree)

    # -- recording -----------------------------------------------------------
    def record_send(self, r: int, sender: int, msg: Message, honest: bool) -> None:
        self.sends.append(SendRecord(r, sender, msg, honest))

    def record_recv(self, r: int, vid: int, msg: Message) -> None:
        self.recvs.append((r, vid, msg))

    def record_tx(self, r: int, tx: str) -> None:
        self.txs.append((r, tx))

    def record_proposal(self, rec: "ProposalRecord") -> None:
        self.proposals.setdefault(rec.slot, rec)

    def record_round(
        self,
        r: int,
        honest_active: frozenset[int],
        corrupted: frozenset[int],
        outputs: dict[int, tuple[str, str]],
    ) -> None:
        assert r == len(self.outputs)
        self.honest_active.append(honest_active)
        self.corrupted.append(corrupted)
        self.outputs.append(outputs)

    def finish(self, tree: BlockTree, proposers: list[int]) -> None:
        self.tree = tree
        self.proposers = list(proposers)

    # -- queries ---------------------------------------------------------------
    @property
    def rounds(self) -> int:
        return len(self.outputs)

    def H(self, r: int) -> frozenset[int]:
        """Active honest validators at round ``r`` (empty outside the run)."""
        if 0 <= r < len(self.honest_active):
            return self.honest_active[r]
        return frozenset()

    def A(self, r: int) -> frozenset[int]:
        if r < 0:
            return frozenset()
        if r >= len(self.corrupted):
            return self.corrupted[-1] if self.corrupted else frozenset()
        return self.corrupted[r]

    @property
    def A_inf(self) -> frozenset[int]:
        return self.A(self.rounds - 1)

    def H_range(self, r0: int, r1: int) -> frozenset[int]:
        out: set[int] = set()
        for r in range(max(r0, 0), min(r1, self.rounds - 1) + 1):
            out |= self.honest_active[r]
        return frozenset(out)

    def W(self, r: int) -> frozenset[int]:
        cfg = self.config
        h = self.H(r)
        if cfg.t_a is None or cfg.pi == 0:
            return h
        t = r // cfg.slot_len
        if cfg.t_a <= t <= cfg.t_a + cfg.pi + 1:
            return h & self.H(4 * cfg.delta * cfg.t_a + cfg.delta)
        return h

    def honest_at(self, r: int) -> list[int]:
        return sorted(self.outputs[r])

    def available(self, vid: int, r: int) -> str:
        return self.outputs[r][vid][0]

    def finalized(self, vid: int, r: int) -> str:
        return self.outputs[r][vid][1]

    def honest_messages(self) -> list[Message]:
        return [s.msg for s in self.sends if s.honest]

    def all_messages(self) -> list[Message]:
        return [s.msg for s in self.sends]

    def view_of(self, vid: int, upto: int) -> View:
        """Reconstruct what ``vid`` had received (and sent) by round ``upto``."""
        view = View(self.tree)
        for s in self.sends:
            if s.sender == vid and s.round <= upto and s.honest:
                view.insert(s.msg)
        for r, who, msg in self.recvs:
            if who == vid and r <= upto:
                view.insert(msg)
        return view

    # -- serialization -----------------------------------------------------------
    def lines(self) -> list[str]:
        from .scenario import serialize_config

        out = ["-1|config|" + serialize_config(self.config).replace("\n", ";")]
        events: list[tuple[int, int, str]] = []
        seq = 0
        for rec in self.sends:
            seq += 1
            events.append((rec.round, seq, f"send|{rec.sender}|{int(rec.honest)}|{message_fields(rec.msg)}"))
        for r, vid, msg in self.recvs:
            seq += 1
            events.append((r, seq, f"recv|{vid}|{message_id(msg)}"))
        for r, tx in self.txs:
            seq += 1
            events.append((r, seq, f"tx|{tx}"))
        for slot in sorted(self.proposals):
            p = self.proposals[slot]
            seq += 1
            events.append((slot * self.config.slot_len, seq, f"proposal|{slot}|{p.proposer}|{p.chain}"))
        prev: dict[int, tuple[str, str]] = {}
        for r in range(self.rounds):
            seq += 1
            ids = lambda s: ",".join(map(str, sorted(s)))
            events.append((r, seq, f"mem|H={ids(self.H(r))}|A={ids(self.A(r))}|W={ids(self.W(r))}"))
            for vid, tips in sorted(self.outputs[r].items()):
                if prev.get(vid) != tips:
                    prev[vid] = tips
                    seq += 1
                    events.append((r, seq, f"out|{vid}|{tips[0]}|{tips[1]}"))
        events.sort(key=lambda e: (e[0], e[1]))
        out.extend(f"{r}|{body}" for r, _, body in events)
        return out

    def serialize(self) -> str:
        return "\n".join(self.lines()) + "\n"
