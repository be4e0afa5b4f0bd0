"""Round-driven validator state machines.

Four protocol variants share one skeleton.  Each slot of ``4Δ`` rounds
has four phases:

============  ==========  ==============================================
phase         round       what happens
============  ==========  ==============================================
propose       4Δt         the elected proposer extends its fork choice
vote          4Δt + Δ     every active validator votes (and, for the 3SF
                          variants, casts an FFG vote)
fastconfirm   4Δt + 2Δ    a supermajority of slot-t votes confirms fast
merge         4Δt + 3Δ    the view is frozen for the next vote
============  ==========  ==============================================

The TOB variants use the majority fork choice over a frozen view, the RLMD
variants use the heaviest-subtree walk.  The two 3SF variants add the
FFG gadget and output a finalized chain alongside the available chain.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import chain_store as cs
from .chain_store import GENESIS, Block, BlockTree, ChainRef, insert_block, is_prefix
from .ffg import greatest_finalized, greatest_justified, is_justified, justified_set
from .forkchoice import fast_confirm_gj, fast_confirm_simple, mfc, rlmd_ghost
from .messages import (
    GENESIS_CHECKPOINT,
    AckMsg,
    Checkpoint,
    FfgVote,
    Message,
    ProposeRlmd,
    ProposeTob,
    View,
    VoteMsg,
    checkpoint,
    checkpoint_leq,
    quorum_cert_valid,
    supermajority,
)


class Variant(str, enum.Enum):
    TOB = "tob"
    TOB_3SF = "tob3sf"
    RLMD = "rlmd"
    RLMD_3SF = "rlmd3sf"

    @property
    def is_3sf(self) -> bool:
        return self in (Variant.TOB_3SF, Variant.RLMD_3SF)

    @property
    def is_tob(self) -> bool:
        return self in (Variant.TOB, Variant.TOB_3SF)


class Phase(str, enum.Enum):
    PROPOSE = "propose"
    VOTE = "vote"
    FASTCONFIRM = "fastconfirm"
    MERGE = "merge"
    OTHER = "other"


class Status(str, enum.Enum):
    ASLEEP = "asleep"
    JOINING = "joining"
    ACTIVE = "active"


@dataclass(frozen=True)
class RoundClock:
    round: int
    delta: int

    @property
    def slot(self) -> int:
        return self.round // (4 * self.delta)

    @property
    def phase(self) -> Phase:
        offset = self.round % (4 * self.delta)
        if offset % self.delta:
            return Phase.OTHER
        return (Phase.PROPOSE, Phase.VOTE, Phase.FASTCONFIRM, Phase.MERGE)[offset // self.delta]


def voting_round(t: int, delta: int) -> int:
    return 4 * delta * t + delta


def activation_round(wake_round: int, delta: int) -> int:
    """First voting round at which a validator waking at ``wake_round`` may act.

    A wake-up in ``(voting(t-2)+Δ, voting(t-1)+Δ]`` activates at ``voting(t)``.
    """
    t = -((2 * delta - wake_round) // (4 * delta)) + 1
    return voting_round(t, delta)


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    delta: int = 1
    kappa: int = 2
    eta: int = 1
    variant: Variant = Variant.TOB_3SF
    acks_enabled: bool = False
    uniform_chainfin: bool = False
    sender_level: bool = True
    tight_expiry: bool = False

    @property
    def fc_eta(self) -> int:
        """Expiry handed to the fork choice.

        The fork choice keeps votes from slot ``t - eta - 1`` on; with
        ``tight_expiry`` it keeps only the last ``eta`` slots, the window
        the participation constraints are stated for.
        """
        return self.eta - 1 if self.tight_expiry else self.eta


@dataclass
class Validator:
    """One honest validator.

    ``chainava`` doubles as the confirmed chain of the non-3SF variants,
    where it is updated by the κ-deep rule and fast confirmation only.
    """

    id: int
    params: ProtocolParams
    tree: BlockTree
    proposer_of: Callable[[int], int]
    status: Status = Status.ACTIVE
    activation: int = 0
    view: View = field(init=False)
    v_frozen: View = field(init=False)
    chain_frozen: ChainRef = GENESIS.id
    gj_frozen: Checkpoint = GENESIS_CHECKPOINT
    chainava: ChainRef = GENESIS.id
    chainfin: ChainRef = GENESIS.id
    window: list = field(default_factory=list)
    window_slot: int = -1

    def __post_init__(self) -> None:
        self.view = View(self.tree)
        self.v_frozen = self.view.copy()

    @property
    def chain_out(self) -> ChainRef:
        return self.chainava

    @property
    def n(self) -> int:
        return self.params.n

    # -- lifecycle --------------------------------------------------------
    def on_sleep(self) -> None:
        self.status = Status.ASLEEP

    def on_wake(self, r: int) -> None:
        if self.status is not Status.ASLEEP:
            return
        self.status = Status.JOINING
        self.activation = activation_round(r, self.params.delta)

    def is_active(self, r: int) -> bool:
        return self.status is Status.ACTIVE or (
            self.status is Status.JOINING and r >= self.activation
        )

    # -- message handling ------------------------------------------------
    def receive(self, msg: Message, r: int) -> bool:
        """Integrate one delivered message; returns True when it was new."""
        new = self.view.insert(msg)
        if new and isinstance(msg, (ProposeTob, ProposeRlmd)):
            clock = RoundClock(r, self.params.delta)
            t = clock.slot
            if msg.slot == t and r <= 4 * self.params.delta * t + self.params.delta:
                self.on_propose_received(msg, t)
        return new

    def _open_window(self, t: int) -> None:
        if self.window_slot != t:
            self.window_slot = t
            self.window = []

    def proposal_valid(self, msg: ProposeTob | ProposeRlmd, t: int) -> bool:
        if msg.sender != self.proposer_of(t) or msg.slot != t:
            return False
        if self.tree.slot(msg.chain_p) != t:
            return False
        if isinstance(msg, ProposeRlmd):
            return True
        fallback = msg.gj.chain if self.params.variant is Variant.TOB_3SF else GENESIS.id
        return quorum_cert_valid(msg.cert, msg.fast_chain, t - 1, self.n, self.tree, fallback)

    def on_propose_received(self, msg: ProposeTob | ProposeRlmd, t: int) -> None:
        self._open_window(t)
        self.window.append(msg)
        variant = self.params.variant
        if variant is Variant.TOB:
            if self.proposal_valid(msg, t) and is_prefix(self.tree, self.chain_frozen, msg.fast_chain):
                self.chain_frozen = msg.fast_chain
        elif not variant.is_tob:
            if self.proposal_valid(msg, t):
                self.v_frozen.merge(msg.view)
        # TOB_3SF proposals wait for the voting round.

    def _apply_buffered_3sf(self, t: int) -> None:
        for msg in sorted(self.window, key=lambda m: m.mid):
            if not isinstance(msg, ProposeTob) or not self.proposal_valid(msg, t):
                continue
            gj_p = msg.gj
            if not is_justified(self.view, self.n, gj_p) or not checkpoint_leq(self.gj_frozen, gj_p):
                continue
            self.gj_frozen = gj_p
            if not is_prefix(self.tree, gj_p.chain, self.chain_frozen):
                self.chain_frozen = gj_p.chain
            if is_prefix(self.tree, self.chain_frozen, msg.fast_chain):
                self.chain_frozen = msg.fast_chain

    # -- phases -----------------------------------------------------------
    def step(self, r: int, inbox: Iterable[Message], txpool: Iterable[str] = ()) -> list[Message]:
        """Process this round's deliveries, then run the phase hook if any."""
        for m in inbox:
            self.receive(m, r)
        if self.status is Status.JOINING and r >= self.activation:
            self.status = Status.ACTIVE
        clock = RoundClock(r, self.params.delta)
        t = clock.slot
        self._open_window(t)
        active = self.is_active(r)
        out: list[Message] = []
        if clock.phase is Phase.PROPOSE:
            if active and self.proposer_of(t) == self.id:
                out = self.phase_propose(t, txpool)
        elif clock.phase is Phase.VOTE:
            vote = self.phase_vote(t)
            out = [vote]
        elif clock.phase is Phase.FASTCONFIRM:
            ack = self.phase_fastconfirm(t)
            out = [ack] if ack is not None else []
        elif clock.phase is Phase.MERGE:
            self.phase_merge(t)
        if not active:
            return []
        for m in out:
            self.receive(m, r)
        return out

    def phase_propose(self, t: int, txpool: Iterable[str]) -> list[Message]:
        p = self.params
        view, tree = self.view, self.tree
        if p.variant.is_tob:
            if p.variant is Variant.TOB_3SF:
                fast, cert = fast_confirm_gj(view, t - 1, p.n)
                gj = greatest_justified(view, p.n)
            else:
                fast, cert = fast_confirm_simple(view, t - 1, p.n)
                gj = GENESIS_CHECKPOINT
            can = mfc(view, view, fast, t, p.fc_eta, p.n, p.sender_level)
        else:
            root = greatest_justified(view, p.n).chain if p.variant is Variant.RLMD_3SF else GENESIS.id
            can = cs.kappa_deep_prefix(tree, rlmd_ghost(view, root, t, p.fc_eta), 1, t)
        block = cs.extend(tree, can, t, txpool)
        insert_block(tree, block)
        self.view.insert(block)
        if p.variant.is_tob:
            prop: Message = ProposeTob(block.id, fast, cert, gj, t, self.id)
        else:
            prop = ProposeRlmd(block.id, self.view.snapshot(), t, self.id)
        return [block, prop]

    def _vote_target_chain(self, can: ChainRef, t: int) -> ChainRef:
        """The slot-t proposal extending ``can`` if one arrived, else ``can``."""
        best = None
        for msg in self.window:
            if (
                isinstance(msg, ProposeTob)
                and self.proposal_valid(msg, t)
                and is_prefix(self.tree, can, msg.chain_p)
                and (best is None or msg.chain_p < best)
            ):
                best = msg.chain_p
        return best if best is not None else can

    def _update_available(self, can: ChainRef, t: int, gj_chain: ChainRef | None) -> None:
        tree = self.tree
        cands = [self.chainava, cs.kappa_deep_prefix(tree, can, self.params.kappa, t)]
        if gj_chain is not None:
            cands.append(gj_chain)
        self.chainava = cs.max_chain(tree, [c for c in cands if is_prefix(tree, c, can)])

    def _finalized_prefix(self) -> ChainRef:
        gf = greatest_finalized(self.view, self.n)
        return cs.common_prefix(self.tree, self.chainava, gf.chain)

    def phase_vote(self, t: int) -> VoteMsg:
        p = self.params
        tree = self.tree
        if p.variant is Variant.TOB_3SF:
            self._apply_buffered_3sf(t)
        ffg = None
        if p.variant.is_tob:
            can = mfc(self.v_frozen, self.view, self.chain_frozen, t, p.fc_eta, p.n, p.sender_level)
            if p.variant is Variant.TOB_3SF:
                self._update_available(can, t, self.gj_frozen.chain)
                self.chainfin = self._finalized_prefix()
                ffg = FfgVote(self.gj_frozen, checkpoint(tree, self.chainava, t), self.id)
            else:
                self._update_available(can, t, None)
            chain = self._vote_target_chain(can, t)
        else:
            if p.variant is Variant.RLMD_3SF:
                gj = greatest_justified(self.v_frozen, p.n)
                can = rlmd_ghost(self.v_frozen, gj.chain, t, p.fc_eta)
                self._update_available(can, t, gj.chain)
                self.chainfin = self._finalized_prefix()
                ffg = FfgVote(gj, checkpoint(tree, self.chainava, t), self.id)
            else:
                can = rlmd_ghost(self.v_frozen, GENESIS.id, t, p.fc_eta)
                self._update_available(can, t, None)
            chain = can
        return VoteMsg(chain, ffg, t, self.id)

    def phase_fastconfirm(self, t: int) -> AckMsg | None:
        p = self.params
        tree = self.tree
        if not p.variant.is_3sf:
            fc, cert = fast_confirm_simple(self.view, t, p.n)
            if cert:
                self.chainava = fc
            return None
        fc, _ = fast_confirm_gj(self.view, t, p.n)
        if not is_prefix(tree, fc, self.chainava):
            self.chainava = fc
        if p.variant is Variant.TOB_3SF and not p.uniform_chainfin:
            self.chainfin = greatest_finalized(self.view, p.n).chain
        else:
            self.chainfin = self._finalized_prefix()
        if p.acks_enabled:
            gj = greatest_justified(self.view, p.n)
            if gj.c == t:
                return AckMsg(gj, t, self.id)
        return None

    def phase_merge(self, t: int) -> None:
        p = self.params
        self.v_frozen = self.view.copy()
        if p.variant is Variant.TOB_3SF:
            self.chain_frozen, _ = fast_confirm_gj(self.view, t, p.n)
            self.gj_frozen = greatest_justified(self.view, p.n)
        elif p.variant is Variant.TOB:
            self.chain_frozen, _ = fast_confirm_simple(self.view, t, p.n)


def observer_finalize(acks: Iterable[AckMsg], view: View, n: int) -> set[Checkpoint]:
    """Checkpoints justified in ``view`` that a supermajority has acknowledged."""
    justified = justified_set(view, n)
    senders: dict[Checkpoint, set[int]] = {}
    for a in acks:
        senders.setdefault(a.checkpoint, set()).add(a.sender)
    quorum = supermajority(n)
    return {cp for cp, s in senders.items() if cp in justified and len(s) >= quorum}
