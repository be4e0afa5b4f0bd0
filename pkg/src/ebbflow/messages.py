"""Wire messages, checkpoints and validator views.

Messages are immutable values compared structurally.  Because they are
hashed constantly (views are sets of them), each class caches its hash and
a short canonical id used in trace files.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Union

from .chain_store import GENESIS, Block, BlockTree, ChainRef, insert_block, is_prefix


def supermajority(n: int) -> int:
    """Smallest integer count that is at least two thirds of ``n``."""
    return (2 * n + 2) // 3


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class _Cached:
    """Mixin caching ``hash`` and the canonical id of a frozen dataclass."""

    def _canon(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError

    def __post_init__(self) -> None:
        canon = self._canon()
        object.__setattr__(self, "_h", hash(canon))
        object.__setattr__(self, "_canon_text", canon)

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]

    @property
    def mid(self) -> str:
        cached = self.__dict__.get("_mid")
        if cached is None:
            cached = _digest(self._canon_text)  # type: ignore[attr-defined]
            object.__setattr__(self, "_mid", cached)
        return cached


@dataclass(frozen=True, eq=True)
class Checkpoint(_Cached):
    chain: ChainRef
    c: int
    p: int

    def _canon(self) -> str:
        return f"{self.chain}:{self.c}:{self.p}"

    @property
    def key(self) -> tuple[int, int]:
        return (self.c, self.p)

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


GENESIS_CHECKPOINT = Checkpoint(GENESIS.id, 0, GENESIS.slot)


def checkpoint(tree: BlockTree, chain: ChainRef, c: int) -> Checkpoint:
    """Build a checkpoint with the proposal slot read off the tree."""
    return Checkpoint(chain, c, tree.slot(chain))


def checkpoint_leq(c1: Checkpoint, c2: Checkpoint) -> bool:
    return (c1.c, c1.p) <= (c2.c, c2.p)


def checkpoint_lt(c1: Checkpoint, c2: Checkpoint) -> bool:
    """Strict order: equal ``(c, p)`` pairs are never strictly ordered."""
    return (c1.c, c1.p) < (c2.c, c2.p)


def checkpoint_rank(cp: Checkpoint) -> tuple[int, int, str]:
    """Sort key whose minimum is the preferred maximal checkpoint.

    Higher ``(c, p)`` wins; among equals the smaller chain id wins.
    """
    return (-cp.c, -cp.p, cp.chain)


def max_checkpoint(cps: Iterable[Checkpoint]) -> Checkpoint:
    return min(cps, key=checkpoint_rank)


def checkpoint_well_formed(cp: Checkpoint, tree: BlockTree) -> bool:
    blk = tree.blocks.get(cp.chain)
    return blk is not None and blk.slot == cp.p and cp.c >= cp.p


@dataclass(frozen=True, eq=True)
class FfgVote(_Cached):
    source: Checkpoint
    target: Checkpoint
    sender: int

    def _canon(self) -> str:
        return f"{self.source._canon()}>{self.target._canon()}@{self.sender}"

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


def ffg_vote_valid(v: FfgVote, tree: BlockTree) -> bool:
    s, t = v.source, v.target
    return (
        checkpoint_well_formed(s, tree)
        and checkpoint_well_formed(t, tree)
        and s.c < t.c
        and is_prefix(tree, s.chain, t.chain)
    )


@dataclass(frozen=True, eq=True)
class VoteMsg(_Cached):
    chain: ChainRef
    ffg: FfgVote | None
    slot: int
    sender: int

    def _canon(self) -> str:
        ffg = self.ffg._canon() if self.ffg is not None else "-"
        return f"vote,{self.chain},{ffg},{self.slot},{self.sender}"

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=True)
class AckMsg(_Cached):
    checkpoint: Checkpoint
    slot: int
    sender: int

    def _canon(self) -> str:
        return f"ack,{self.checkpoint._canon()},{self.slot},{self.sender}"

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=True)
class ViewSnapshot(_Cached):
    """The immutable payload of an RLMD proposal: known blocks and votes."""

    blocks: frozenset[str]
    votes: frozenset[VoteMsg]

    def _canon(self) -> str:
        body = ",".join(sorted(self.blocks)) + ";" + ",".join(sorted(v.mid for v in self.votes))
        return "snap," + _digest(body)

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=True)
class ProposeTob(_Cached):
    chain_p: ChainRef
    fast_chain: ChainRef
    cert: frozenset[VoteMsg]
    gj: Checkpoint
    slot: int
    sender: int

    def _canon(self) -> str:
        cert = ",".join(sorted(v.mid for v in self.cert))
        return (
            f"ptob,{self.chain_p},{self.fast_chain},[{cert}],"
            f"{self.gj._canon()},{self.slot},{self.sender}"
        )

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


@dataclass(frozen=True, eq=True)
class ProposeRlmd(_Cached):
    chain_p: ChainRef
    view: ViewSnapshot
    slot: int
    sender: int

    def _canon(self) -> str:
        return f"prlmd,{self.chain_p},{self.view._canon()},{self.slot},{self.sender}"

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]


ProposeMsg = Union[ProposeTob, ProposeRlmd]
Message = Union[Block, VoteMsg, AckMsg, ProposeTob, ProposeRlmd]


def message_id(msg: Message) -> str:
    return msg.id if isinstance(msg, Block) else msg.mid


def equivocators_of(votes: Iterable[VoteMsg]) -> set[int]:
    seen: dict[tuple[int, int], ChainRef] = {}
    out: set[int] = set()
    for v in votes:
        prev = seen.setdefault((v.sender, v.slot), v.chain)
        if prev != v.chain:
            out.add(v.sender)
    return out


def equivocators(view: "View | Iterable[VoteMsg]") -> set[int]:
    if isinstance(view, View):
        return set(view.equivocating)
    return equivocators_of(view)


def quorum_cert_valid(
    cert: Iterable[VoteMsg],
    fast_chain: ChainRef,
    slot: int,
    n: int,
    tree: BlockTree,
    empty_fallback: ChainRef | None = None,
) -> bool:
    """Validate a fast-confirmation certificate.

    An empty certificate is accepted only for ``empty_fallback`` (genesis
    by default), which is what the fast-confirmation rule outputs when no
    quorum exists.
    """
    cert = list(cert)
    if not cert:
        return fast_chain == (empty_fallback if empty_fallback is not None else GENESIS.id)
    if fast_chain not in tree:
        return False
    senders = set()
    for v in cert:
        if v.slot != slot or v.chain not in tree or not is_prefix(tree, fast_chain, v.chain):
            return False
        senders.add(v.sender)
    return len(senders) >= supermajority(n)


def referenced_chains(msg: Message) -> list[ChainRef]:
    """Block ids a message needs resolved before it can enter a view."""
    if isinstance(msg, Block):
        return [msg.parent] if msg.parent is not None else []
    if isinstance(msg, VoteMsg):
        refs = [msg.chain]
        if msg.ffg is not None:
            refs += [msg.ffg.source.chain, msg.ffg.target.chain]
        return refs
    if isinstance(msg, AckMsg):
        return [msg.checkpoint.chain]
    if isinstance(msg, ProposeTob):
        return [msg.chain_p, msg.fast_chain, msg.gj.chain]
    if isinstance(msg, ProposeRlmd):
        return [msg.chain_p, *msg.view.blocks]
    raise TypeError(f"not a message: {msg!r}")


class View:
    """The set of messages one validator has received.

    Blocks live in a shared, content-addressed :class:`BlockTree`; the view
    records which of them it has actually seen in ``blocks``.  A message
    whose referenced blocks are missing from the tree waits in ``pending``
    until they arrive, so the final view does not depend on arrival order.
    """

    def __init__(self, tree: BlockTree | None = None) -> None:
        self.tree = tree if tree is not None else BlockTree()
        self.blocks: set[str] = {GENESIS.id}
        self.votes: set[VoteMsg] = set()
        self.proposals: set[ProposeTob | ProposeRlmd] = set()
        self.acks: set[AckMsg] = set()
        self.pending: dict[str, set[Message]] = defaultdict(set)
        self.by_slot: dict[int, set[VoteMsg]] = defaultdict(set)
        self.equivocating: set[int] = set()
        self._first_chain: dict[tuple[int, int], ChainRef] = {}
        self._vote_key: frozenset[VoteMsg] | None = None

    # -- identity ---------------------------------------------------------
    def vote_key(self) -> frozenset[VoteMsg]:
        if self._vote_key is None:
            self._vote_key = frozenset(self.votes)
        return self._vote_key

    def content(self) -> tuple:
        pending = frozenset(m for ms in self.pending.values() for m in ms)
        return (
            frozenset(self.blocks),
            frozenset(self.votes),
            frozenset(self.proposals),
            frozenset(self.acks),
            pending,
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, View) and self.content() == other.content()

    __hash__ = None  # type: ignore[assignment]

    def __contains__(self, msg: object) -> bool:
        if isinstance(msg, Block):
            return msg.id in self.blocks
        return msg in self.votes or msg in self.proposals or msg in self.acks

    def copy(self) -> "View":
        v = View.__new__(View)
        v.tree = self.tree
        v.blocks = set(self.blocks)
        v.votes = set(self.votes)
        v.proposals = set(self.proposals)
        v.acks = set(self.acks)
        v.pending = defaultdict(set, {k: set(s) for k, s in self.pending.items()})
        v.by_slot = defaultdict(set, {k: set(s) for k, s in self.by_slot.items()})
        v.equivocating = set(self.equivocating)
        v._first_chain = dict(self._first_chain)
        v._vote_key = self._vote_key
        return v

    def snapshot(self) -> ViewSnapshot:
        return ViewSnapshot(frozenset(self.blocks), self.vote_key())

    # -- insertion --------------------------------------------------------
    def _know_chain(self, c: ChainRef) -> None:
        for blk in self.tree.ancestors(c):
            if blk.id in self.blocks:
                return
            self.blocks.add(blk.id)

    def _add_vote(self, v: VoteMsg) -> bool:
        if v in self.votes:
            return False
        self.votes.add(v)
        self.by_slot[v.slot].add(v)
        self._vote_key = None
        first = self._first_chain.setdefault((v.sender, v.slot), v.chain)
        if first != v.chain:
            self.equivocating.add(v.sender)
        return True

    def insert(self, msg: Message) -> bool:
        """Merge ``msg`` and everything it carries; return True if anything changed."""
        if isinstance(msg, Block):
            if msg.id in self.blocks:
                return False
            if msg.parent is not None and msg.parent not in self.tree:
                self.pending[msg.parent].add(msg)
                return False
            insert_block(self.tree, msg)
            self._know_chain(msg.id)
            self._release(msg.id)
            return True
        if msg in self:
            return False
        for ref in referenced_chains(msg):
            if ref not in self.tree:
                self.pending[ref].add(msg)
                return False
        for ref in referenced_chains(msg):
            self._know_chain(ref)
        if isinstance(msg, VoteMsg):
            self._add_vote(msg)
        elif isinstance(msg, AckMsg):
            self.acks.add(msg)
        elif isinstance(msg, ProposeTob):
            self.proposals.add(msg)
            for v in msg.cert:
                self.insert(v)
        elif isinstance(msg, ProposeRlmd):
            self.proposals.add(msg)
            for v in msg.view.votes:
                self.insert(v)
        return True

    def _release(self, block_id: str) -> None:
        waiting = self.pending.pop(block_id, None)
        if not waiting:
            return
        # Sorted so the retry order (and hence the result) is canonical.
        for m in sorted(waiting, key=message_id):
            self.insert(m)

    def merge(self, other: "View | ViewSnapshot") -> None:
        for b in sorted(other.blocks):
            if b in self.tree:
                self._know_chain(b)
        for v in other.votes:
            self.insert(v)


def view_insert(view: View, msg: Message) -> View:
    view.insert(msg)
    return view
