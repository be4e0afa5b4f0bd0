"""Simulator and property checkers for two ebb-and-flow consensus protocols.

Both protocols pair a dynamically available chain (majority fork choice or
RLMD-GHOST, each with fast confirmation) with an FFG-style finality gadget
that finalizes in three slots.  The package is organised bottom-up:
``chain_store`` and ``messages`` model data, ``ffg`` and ``forkchoice``
are pure functions of a view, ``validator`` is the per-node state machine,
``simnet`` runs the network, ``adversary`` attacks it and ``properties``
judges the resulting :class:`~ebbflow.trace.Trace`.
"""

from .scenario import parse_scenario, serialize_config
from .simnet import SimConfig, Simulation, run
from .trace import Trace
from .validator import Variant

__all__ = ["SimConfig", "Simulation", "Trace", "Variant", "parse_scenario", "run", "serialize_config"]
