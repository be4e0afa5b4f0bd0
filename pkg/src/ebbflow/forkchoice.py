"""Fork-choice rules and fast confirmation.

Two fork choices live here.  ``mfc`` is the majority rule used by the
TOB-style protocols: starting from a root it follows the longest chain
backed by more than half of the recently active senders, counting only
votes present in both a frozen view and the current view.  ``rlmd_ghost``
is the greedy heaviest-subtree walk used by the RLMD-style protocols.

Both rely on the same vote filters: drop equivocators, drop expired votes,
keep each sender's latest votes.  The filters are plain set functions over
votes; they also accept a :class:`View` and read its vote set.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .chain_store import GENESIS, BlockTree, ChainRef, is_prefix
from .ffg import greatest_justified
from .messages import View, VoteMsg, equivocators_of, supermajority


class UnknownRoot(Exception):
    pass


@dataclass(frozen=True)
class FilterParams:
    t: int
    eta: int
    n: int

    @staticmethod
    def eta_for(pi: int) -> int:
        return pi + 2 if pi > 0 else 1


def eta_for(pi: int) -> int:
    """Vote expiry period: one slot when there is no asynchrony, else ``π + 2``."""
    return FilterParams.eta_for(pi)


def expiry_floor(t: int, eta: int) -> int:
    """Oldest vote slot still counted by the fork choice at slot ``t``."""
    return t - eta - 1


def _votes(x: View | Iterable[VoteMsg]) -> Iterable[VoteMsg]:
    return x.votes if isinstance(x, View) else x


def fil_eq(view: View | Iterable[VoteMsg]) -> frozenset[VoteMsg]:
    votes = list(_votes(view))
    bad = view.equivocating if isinstance(view, View) else equivocators_of(votes)
    return frozenset(v for v in votes if v.sender not in bad)


def fil_exp(view: View | Iterable[VoteMsg], t: int, eta: int) -> frozenset[VoteMsg]:
    floor = expiry_floor(t, eta)
    return frozenset(v for v in _votes(view) if v.slot >= floor)


def fil_lmd(view: View | Iterable[VoteMsg]) -> frozenset[VoteMsg]:
    votes = list(_votes(view))
    latest: dict[int, int] = {}
    for v in votes:
        if v.slot > latest.get(v.sender, v.slot - 1):
            latest[v.sender] = v.slot
    return frozenset(v for v in votes if v.slot == latest[v.sender])


def _recent(view: View | Iterable[VoteMsg], t: int, eta: int) -> list[VoteMsg]:
    floor = expiry_floor(t, eta)
    if isinstance(view, View):
        return [v for s, vs in view.by_slot.items() if s >= floor for v in vs]
    return [v for v in view if v.slot >= floor]


def filtered_votes(view: View | Iterable[VoteMsg], t: int, eta: int) -> frozenset[VoteMsg]:
    """``FIL_lmd(FIL_exp(FIL_eq(V), t))``, computed from the recent-slot index."""
    if not isinstance(view, View):
        view = list(view)
    bad = view.equivocating if isinstance(view, View) else equivocators_of(view)
    recent = [v for v in _recent(view, t, eta) if v.sender not in bad]
    return fil_lmd(recent)


def senders_s(view: View | Iterable[VoteMsg], t: int, eta: int) -> set[int]:
    """Senders of non-expired votes; equivocators are deliberately kept."""
    return {v.sender for v in _recent(view, t, eta)}


def votes_for(view: View, chain: ChainRef, t: int, eta: int) -> frozenset[VoteMsg]:
    tree = view.tree
    return frozenset(v for v in filtered_votes(view, t, eta) if is_prefix(tree, chain, v.chain))


def _support(
    tree: BlockTree, votes: Iterable[VoteMsg], root: ChainRef, max_slot: int | None = None
) -> dict[ChainRef, set[int]]:
    """Map each block strictly above ``root`` to the senders voting for a descendant of it.

    Votes whose chain does not extend ``root`` (or whose tip is beyond
    ``max_slot``) contribute nothing.
    """
    root_slot = tree.slot(root)
    support: dict[ChainRef, set[int]] = defaultdict(set)
    for v in votes:
        if max_slot is not None and tree.slot(v.chain) > max_slot:
            continue
        path = []
        for blk in tree.ancestors(v.chain):
            if blk.slot <= root_slot:
                if blk.id == root:
                    for b in path:
                        support[b].add(v.sender)
                break
            path.append(blk.id)
    return support


def mfc(
    v: View,
    v_prime: View,
    root: ChainRef,
    t: int,
    eta: int,
    n: int,
    sender_level: bool = True,
) -> ChainRef:
    """Longest chain extending ``root`` backed by a majority of recent senders.

    A chain qualifies when more than half of ``S(v_prime, t)`` are senders
    whose latest filtered vote extends it in both views.  Setting
    ``sender_level=False`` instead intersects the two filtered vote sets
    by message identity, which discards a sender as soon as the views
    disagree on which of its votes is latest (a late vote arriving after
    the frozen snapshot is enough).
    """
    tree = v_prime.tree
    if root not in tree:
        raise UnknownRoot(root)
    fv = filtered_votes(v, t, eta)
    fvp = filtered_votes(v_prime, t, eta)
    active = len(senders_s(v_prime, t, eta))
    if sender_level:
        sa, sb = _support(tree, fv, root), _support(tree, fvp, root)
        support = {b: sa[b] & sb[b] for b in sa.keys() & sb.keys()}
    else:
        support = _support(tree, fv & fvp, root)
    best = root
    best_key = (tree.slot(root), "")
    for b, senders in support.items():
        if 2 * len(senders) > active:
            key = (tree.slot(b), b)
            if key[0] > best_key[0] or (key[0] == best_key[0] and b < best):
                best, best_key = b, key
    return best


def rlmd_ghost(view: View, b_start: ChainRef, t: int, eta: int) -> ChainRef:
    """Greedy heaviest-child walk from ``b_start`` over blocks with slot ≤ ``t``.

    Children with zero weight are still eligible, so the walk always ends at
    a leaf of the (slot-bounded) subtree the view knows.  Ties go to the
    smaller block id.
    """
    tree = view.tree
    if b_start not in tree:
        raise UnknownRoot(b_start)
    weight = _support(tree, filtered_votes(view, t, eta), b_start, max_slot=t)
    known = view.blocks
    b = b_start
    while True:
        kids = [c for c in tree.children.get(b, ()) if c in known and tree.slot(c) <= t]
        if not kids:
            return b
        b = min(kids, key=lambda c: (-len(weight.get(c, ())), c))


def fast_confirm_simple(view: View, t: int, n: int) -> tuple[ChainRef, frozenset[VoteMsg]]:
    """Deepest chain supported by a supermajority of slot-``t`` votes."""
    tree = view.tree
    votes = view.by_slot.get(t, set())
    support: dict[ChainRef, set[int]] = defaultdict(set)
    for v in votes:
        for blk in tree.ancestors(v.chain):
            support[blk.id].add(v.sender)
    quorum = supermajority(n)
    cands = [b for b, s in support.items() if len(s) >= quorum]
    if not cands:
        return GENESIS.id, frozenset()
    best = min(cands, key=lambda b: (-tree.slot(b), b))
    return best, frozenset(v for v in votes if is_prefix(tree, best, v.chain))


def fast_confirm_gj(view: View, t: int, n: int) -> tuple[ChainRef, frozenset[VoteMsg]]:
    """Fast confirmation that never contradicts the greatest justified checkpoint."""
    chain, cert = fast_confirm_simple(view, t, n)
    gj = greatest_justified(view, n)
    if is_prefix(view.tree, gj.chain, chain):
        return chain, cert
    return gj.chain, frozenset()
