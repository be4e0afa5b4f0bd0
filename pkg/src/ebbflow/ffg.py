"""Casper-style finality gadget over checkpoint votes.

Justification is recursive only on strictly smaller checkpoint slots (a
valid link has ``source.c < target.c``), so a single pass in ascending
order of target slot computes the whole justified set.  A checkpoint can
only be justified if it sits between the source and target chains of some
vote, which bounds the candidate universe.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .chain_store import BlockTree, ChainRef, is_prefix
from .messages import (
    GENESIS_CHECKPOINT,
    Checkpoint,
    FfgVote,
    View,
    VoteMsg,
    ffg_vote_valid,
    max_checkpoint,
    supermajority,
)

_MEMO_LIMIT = 4096


@dataclass(frozen=True)
class CheckpointLattice:
    justified: frozenset[Checkpoint]
    finalized: frozenset[Checkpoint]

    @property
    def gj(self) -> Checkpoint:
        return max_checkpoint(self.justified)

    @property
    def gf(self) -> Checkpoint:
        return max_checkpoint(self.finalized)


def _valid_ffg(votes: Iterable[VoteMsg], tree: BlockTree) -> list[FfgVote]:
    seen: set[FfgVote] = set()
    out = []
    for v in votes:
        f = v.ffg
        if f is None or f in seen:
            continue
        seen.add(f)
        if ffg_vote_valid(f, tree):
            out.append(f)
    return out


def compute_lattice(ffg_votes: Iterable[FfgVote], n: int, tree: BlockTree) -> CheckpointLattice:
    """Justified and finalized checkpoints for a set of *valid* FFG votes."""
    quorum = supermajority(n)
    by_target: dict[int, list[FfgVote]] = defaultdict(list)
    by_source: dict[Checkpoint, list[FfgVote]] = defaultdict(list)
    for f in ffg_votes:
        by_target[f.target.c].append(f)
        by_source[f.source].append(f)

    justified = {GENESIS_CHECKPOINT}
    for c in sorted(by_target):
        support: dict[ChainRef, set[int]] = defaultdict(set)
        for f in by_target[c]:
            if f.source not in justified:
                continue
            stop = f.source.chain
            for blk in tree.ancestors(f.target.chain):
                support[blk.id].add(f.sender)
                if blk.id == stop:
                    break
        for chain, senders in support.items():
            if len(senders) >= quorum:
                justified.add(Checkpoint(chain, c, tree.slot(chain)))

    finalized = {GENESIS_CHECKPOINT}
    for cp in justified:
        senders = {f.sender for f in by_source.get(cp, ()) if f.target.c == cp.c + 1}
        if len(senders) >= quorum:
            finalized.add(cp)
    return CheckpointLattice(frozenset(justified), frozenset(finalized))


def lattice(view: View, n: int) -> CheckpointLattice:
    """Memoized lattice of a view; the cache lives on the view's block tree."""
    key = ("ffg", view.vote_key(), n)
    memo = view.tree.memo
    hit = memo.get(key)
    if hit is None:
        if len(memo) > _MEMO_LIMIT:
            memo.clear()
        hit = compute_lattice(_valid_ffg(view.votes, view.tree), n, view.tree)
        memo[key] = hit
    return hit


def justified_set(view: View, n: int) -> frozenset[Checkpoint]:
    return lattice(view, n).justified


def finalized_set(view: View, n: int) -> frozenset[Checkpoint]:
    return lattice(view, n).finalized


def is_justified(view: View, n: int, cp: Checkpoint) -> bool:
    return cp in lattice(view, n).justified


def greatest_justified(view: View, n: int) -> Checkpoint:
    return lattice(view, n).gj


def greatest_finalized(view: View, n: int) -> Checkpoint:
    return lattice(view, n).gf


def is_finalized_chain(view: View, n: int, c: ChainRef) -> bool:
    return is_prefix(view.tree, c, greatest_finalized(view, n).chain)
