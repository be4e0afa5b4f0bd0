"""Detectors for the three slashable FFG behaviours.

E1 (double vote)
    two distinct FFG votes with the same target checkpoint slot.
E2 (surround vote)
    votes ``C1→C2`` and ``C3→C4`` with ``C3 < C1`` and ``C2.c < C4.c``.
E3 (ack surround)
    a vote ``C1→C2`` and an acknowledgment of ``Ca`` with ``C1 < Ca`` and
    ``Ca.c < C2.c``.

Each detector returns one witness pair per offending sender.  The pair is
self-contained: re-running the detector on just those two items flags the
same sender again.
"""

from __future__ import annotations

from collections import defaultdict
from itertools import combinations
from typing import Iterable, Union

from .chain_store import conflicts
from .ffg import greatest_finalized
from .messages import AckMsg, FfgVote, View, VoteMsg, checkpoint_lt

Evidence = tuple[Union[FfgVote, AckMsg], Union[FfgVote, AckMsg]]


class NoConflict(Exception):
    """Raised when the two views do not finalize conflicting chains."""


def _ffg_votes(items: Iterable[Union[FfgVote, VoteMsg, AckMsg]]) -> list[FfgVote]:
    out = []
    for x in items:
        if isinstance(x, VoteMsg):
            if x.ffg is not None:
                out.append(x.ffg)
        elif isinstance(x, FfgVote):
            out.append(x)
    return out


def _by_sender(votes: Iterable[FfgVote]) -> dict[int, list[FfgVote]]:
    grouped: dict[int, set[FfgVote]] = defaultdict(set)
    for f in votes:
        grouped[f.sender].add(f)
    return {s: sorted(fs, key=lambda f: f.mid) for s, fs in grouped.items()}


def _surrounds(a: FfgVote, b: FfgVote) -> bool:
    """True when ``b`` surrounds ``a``: b.source < a.source and a.target.c < b.target.c."""
    return checkpoint_lt(b.source, a.source) and a.target.c < b.target.c


def detect_e1(votes: Iterable) -> dict[int, Evidence]:
    found: dict[int, Evidence] = {}
    for sender, fs in sorted(_by_sender(_ffg_votes(votes)).items()):
        by_c: dict[int, FfgVote] = {}
        for f in fs:
            other = by_c.setdefault(f.target.c, f)
            if other != f:
                found[sender] = (other, f)
                break
    return found


def detect_e2(votes: Iterable) -> dict[int, Evidence]:
    found: dict[int, Evidence] = {}
    for sender, fs in sorted(_by_sender(_ffg_votes(votes)).items()):
        for a, b in combinations(fs, 2):
            if _surrounds(a, b) or _surrounds(b, a):
                found[sender] = (a, b)
                break
    return found


def detect_e3(votes: Iterable, acks: Iterable[AckMsg]) -> dict[int, Evidence]:
    acks_by: dict[int, list[AckMsg]] = defaultdict(list)
    for a in acks:
        acks_by[a.sender].append(a)
    found: dict[int, Evidence] = {}
    for sender, fs in sorted(_by_sender(_ffg_votes(votes)).items()):
        for ack in sorted(acks_by.get(sender, ()), key=lambda a: a.mid):
            ca = ack.checkpoint
            hit = next(
                (f for f in fs if checkpoint_lt(f.source, ca) and ca.c < f.target.c), None
            )
            if hit is not None:
                found[sender] = (hit, ack)
                break
    return found


def detect_all(messages: Iterable) -> dict[int, tuple[str, Evidence]]:
    """Union of E1, E2 and E3 over a mixed collection of votes and acks."""
    messages = list(messages)
    acks = [m for m in messages if isinstance(m, AckMsg)]
    out: dict[int, tuple[str, Evidence]] = {}
    for name, hits in (
        ("E3", detect_e3(messages, acks)),
        ("E2", detect_e2(messages)),
        ("E1", detect_e1(messages)),
    ):
        for sender, ev in hits.items():
            out[sender] = (name, ev)
    return out


def accountable_set(all_votes: Iterable, view1: View, view2: View, n: int) -> dict[int, tuple[str, Evidence]]:
    """Validators provably at fault for two views finalizing conflicting chains.

    The keys of the returned mapping are the flagged validator ids; values
    hold the rule name and a witness pair.
    """
    gf1 = greatest_finalized(view1, n).chain
    gf2 = greatest_finalized(view2, n).chain
    if not conflicts(view1.tree, gf1, gf2):
        raise NoConflict(f"{gf1} and {gf2} do not conflict")
    return detect_all(all_votes)
