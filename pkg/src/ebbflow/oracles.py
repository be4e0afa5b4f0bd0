"""Brute-force reference implementations and random fixtures.

The functions here recompute fork choice and justification straight from
their set definitions, with no indexes, caches or early exits, so they can
serve as independent oracles for the optimized versions.  They are only
meant for tiny inputs (a handful of validators, slots and blocks).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

from .chain_store import GENESIS, Block, BlockTree, insert_block
from .ffg import finalized_set, justified_set
from .forkchoice import mfc, rlmd_ghost
from .messages import GENESIS_CHECKPOINT, Checkpoint, FfgVote, View, VoteMsg, supermajority


# ---------------------------------------------------------------------------
# naive primitives


def _prefix(tree: BlockTree, a: str, b: str) -> bool:
    cur: str | None = b
    while cur is not None:
        if cur == a:
            return True
        cur = tree.blocks[cur].parent
    return False


def _filtered(votes: set[VoteMsg], t: int, eta: int) -> set[VoteMsg]:
    equivocators = {
        a.sender
        for a in votes
        for b in votes
        if a.sender == b.sender and a.slot == b.slot and a.chain != b.chain
    }
    kept = {v for v in votes if v.sender not in equivocators and v.slot >= t - eta - 1}
    return {v for v in kept if not any(w.sender == v.sender and w.slot > v.slot for w in kept)}


def _senders(votes: set[VoteMsg], t: int, eta: int) -> set[int]:
    return {v.sender for v in votes if v.slot >= t - eta - 1}


def naive_mfc(v: View, v_prime: View, root: str, t: int, eta: int, sender_level: bool = True) -> str:
    tree = v_prime.tree
    fa = _filtered(set(v.votes), t, eta)
    fb = _filtered(set(v_prime.votes), t, eta)
    threshold = len(_senders(set(v_prime.votes), t, eta))
    qualifying = []
    for chain in tree.blocks:
        if chain == root or not _prefix(tree, root, chain):
            continue
        va = {x for x in fa if _prefix(tree, chain, x.chain)}
        vb = {x for x in fb if _prefix(tree, chain, x.chain)}
        if sender_level:
            count = len({x.sender for x in va} & {x.sender for x in vb})
        else:
            count = len(va & vb)
        if 2 * count > threshold:
            qualifying.append(chain)
    if not qualifying:
        return root
    return min(qualifying, key=lambda c: (-tree.slot(c), c))


def naive_rlmd_ghost(view: View, start: str, t: int, eta: int) -> str:
    tree = view.tree
    latest = _filtered(set(view.votes), t, eta)
    b = start
    while True:
        kids = [
            c
            for c, blk in tree.blocks.items()
            if blk.parent == b and c in view.blocks and blk.slot <= t
        ]
        if not kids:
            return b

        def weight(c: str) -> int:
            return len({x.sender for x in latest if tree.slot(x.chain) <= t and _prefix(tree, c, x.chain)})

        top = max(weight(c) for c in kids)
        b = min(c for c in kids if weight(c) == top)


def _valid(f: FfgVote, tree: BlockTree) -> bool:
    def ok(cp: Checkpoint) -> bool:
        return cp.chain in tree.blocks and tree.slot(cp.chain) == cp.p and cp.c >= cp.p

    return ok(f.source) and ok(f.target) and f.source.c < f.target.c and _prefix(tree, f.source.chain, f.target.chain)


def naive_lattice(view: View, n: int) -> tuple[frozenset[Checkpoint], frozenset[Checkpoint]]:
    tree = view.tree
    q = supermajority(n)
    links = {v.ffg for v in view.votes if v.ffg is not None and _valid(v.ffg, tree)}
    slots = {f.target.c for f in links} | {0}

    @lru_cache(maxsize=None)
    def justified(cp: Checkpoint) -> bool:
        if cp == GENESIS_CHECKPOINT:
            return True
        senders = {
            f.sender
            for f in links
            if f.target.c == cp.c
            and _prefix(tree, f.source.chain, cp.chain)
            and _prefix(tree, cp.chain, f.target.chain)
            and justified(f.source)
        }
        return len(senders) >= q

    candidates = {Checkpoint(b, c, tree.slot(b)) for b in tree.blocks for c in slots}
    candidates.add(GENESIS_CHECKPOINT)
    js = frozenset(cp for cp in candidates if justified(cp))
    fs = frozenset(
        cp
        for cp in js
        if cp == GENESIS_CHECKPOINT
        or len({f.sender for f in links if f.source == cp and f.target.c == cp.c + 1}) >= q
    )
    return js, fs


# ---------------------------------------------------------------------------
# fixtures


@dataclass
class Fixture:
    tree: BlockTree
    blocks: list[str]
    n: int
    t: int
    eta: int


def random_tree(rng: random.Random, max_blocks: int = 6, max_slot: int = 4) -> tuple[BlockTree, list[str]]:
    tree = BlockTree()
    ids = [GENESIS.id]
    for i in range(rng.randint(1, max_blocks)):
        parent = rng.choice(ids)
        lo = tree.slot(parent) + 1
        if lo > max_slot:
            continue
        blk = Block.make(parent, rng.randint(lo, max_slot), frozenset({f"f{i}"}))
        insert_block(tree, blk)
        ids.append(blk.id)
    return tree, ids


def _view(tree: BlockTree, ids: list[str], votes) -> View:
    view = View(tree)
    for b in ids[1:]:
        view.insert(tree.blocks[b])
    for v in votes:
        view.insert(v)
    return view


def random_vote_views(rng: random.Random) -> tuple[View, View, Fixture]:
    tree, ids = random_tree(rng)
    n = rng.randint(1, 5)
    t = rng.randint(0, 5)
    eta = rng.randint(1, 3)
    votes = []
    for sender in range(n):
        for _ in range(rng.randint(0, 3)):
            votes.append(VoteMsg(rng.choice(ids), None, rng.randint(0, t), sender))
    extra = [VoteMsg(rng.choice(ids), None, rng.randint(0, t), rng.randrange(n)) for _ in range(rng.randint(0, 3))]
    base = [v for v in votes if rng.random() < 0.8]
    v = _view(tree, ids, base)
    vp = _view(tree, ids, votes + extra)
    return v, vp, Fixture(tree, ids, n, t, eta)


def random_ffg_view(rng: random.Random) -> tuple[View, int]:
    tree, ids = random_tree(rng, max_blocks=6, max_slot=3)
    n = rng.randint(1, 5)
    cps = [GENESIS_CHECKPOINT]
    votes = []
    for _ in range(rng.randint(1, 6)):
        src = rng.choice(cps)
        targets = [b for b in ids if _prefix(tree, src.chain, b)]
        chain = rng.choice(targets)
        lo = max(src.c + 1, tree.slot(chain))
        c = rng.randint(lo, max(lo, 5)) if rng.random() < 0.9 else rng.randint(0, 5)
        tgt = Checkpoint(chain, c, tree.slot(chain))
        cps.append(tgt)
        for sender in range(n):
            if rng.random() < 0.8:
                votes.append(VoteMsg(chain, FfgVote(src, tgt, sender), c, sender))
    return _view(tree, ids, votes), n


# ---------------------------------------------------------------------------
# equivalence suites


@dataclass(frozen=True)
class OracleResult:
    kind: str
    cases: int
    mismatches: int
    first_mismatch: int | None

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def _suite(kind: str, cases: int, seed: int, case: Callable[[random.Random], bool]) -> OracleResult:
    bad, first = 0, None
    for i in range(cases):
        if not case(random.Random(f"{kind}:{seed}:{i}")):
            bad += 1
            first = i if first is None else first
    return OracleResult(kind, cases, bad, first)


def _mfc_case(rng: random.Random) -> bool:
    v, vp, fx = random_vote_views(rng)
    root = rng.choice(fx.blocks)
    return all(
        mfc(v, vp, root, fx.t, fx.eta, fx.n, sl) == naive_mfc(v, vp, root, fx.t, fx.eta, sl)
        for sl in (True, False)
    )


def _ghost_case(rng: random.Random) -> bool:
    _, vp, fx = random_vote_views(rng)
    start = rng.choice(fx.blocks)
    return rlmd_ghost(vp, start, fx.t, fx.eta) == naive_rlmd_ghost(vp, start, fx.t, fx.eta)


def _ffg_case(rng: random.Random) -> bool:
    view, n = random_ffg_view(rng)
    js, fs = naive_lattice(view, n)
    return justified_set(view, n) == js and finalized_set(view, n) == fs


def run_oracle(kind: str, cases: int, seed: int = 0) -> list[OracleResult]:
    """Run one oracle family: ``forkchoice`` (mfc and rlmd-ghost) or ``ffg``."""
    if kind == "forkchoice":
        return [
            _suite("mfc", cases, seed, _mfc_case),
            _suite("rlmd_ghost", cases, seed, _ghost_case),
        ]
    if kind == "ffg":
        return [_suite("ffg", cases, seed, _ffg_case)]
    raise ValueError(f"unknown oracle kind {kind!r}")
