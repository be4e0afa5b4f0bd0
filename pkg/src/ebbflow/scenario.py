"""Scenario files: a strict ``key = value`` format.

Grammar (one entry per line)::

    line     := blank | comment | entry
    comment  := "#" anything
    entry    := key ws* "=" ws* value ws* comment?
    key      := [a-z_][a-z0-9_.]*

Recognised keys and value syntax:

==================  =====================================================
``n``               validator count
``delta``           Δ in rounds
``kappa``           κ, must exceed 1
``pi``              π, asynchrony bound in slots (``eta`` is derived)
``eta``             optional; must equal the derived value when given
``gst``, ``gat``    rounds
``t_a``             slot where the asynchrony window starts, or ``none``
``slots``           number of slots to run
``variant``         ``tob``, ``tob3sf``, ``rlmd`` or ``rlmd3sf``
``acks``            ``true``/``false``
``seed``            integer
``corrupt``         ``id@round, id@round, ...``
``sleep``           ``id:start-end, ...`` (asleep during ``[start, end)``)
``txs``             ``round:txid, ...``
``tx_every``        inject ``tx<r>`` at every ``k``-th round (expands ``txs``)
``adversary``       strategy name
``adversary.KEY``   strategy parameter
``uniform_chainfin``, ``sender_level``, ``tight_expiry``  ``true``/``false``
``c4_threshold``    rational bound for the churn constraint, e.g. ``2/3``
==================  =====================================================

Unknown or repeated keys are errors.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .simnet import ConfigError, SimConfig
from .validator import Variant


class ParseError(ValueError):
    def __init__(self, line: int, column: int, message: str) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ConstraintError(ValueError):
    pass


_KEY = re.compile(r"[a-z_][a-z0-9_.]*")
_INT_KEYS = {"n", "delta", "kappa", "pi", "gst", "gat", "slots", "seed", "eta", "tx_every"}
_BOOL_KEYS = {"acks", "uniform_chainfin", "sender_level", "tight_expiry"}
_OTHER_KEYS = {"t_a", "variant", "corrupt", "sleep", "txs", "adversary", "c4_threshold"}
KNOWN_KEYS = _INT_KEYS | _BOOL_KEYS | _OTHER_KEYS


def _int(text: str, line: int, col: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(line, col, f"expected an integer, got {text!r}") from None


def _bool(text: str, line: int, col: int) -> bool:
    if text in ("true", "false"):
        return text == "true"
    raise ParseError(line, col, f"expected true or false, got {text!r}")


def _items(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _pair(item: str, sep: str, line: int, col: int) -> tuple[str, str]:
    if sep not in item:
        raise ParseError(line, col, f"expected '{sep}' in {item!r}")
    a, b = item.split(sep, 1)
    return a.strip(), b.strip()


def parse_scenario(text: str) -> SimConfig:
    fields: dict = {}
    params: dict[str, str] = {}
    seen: set[str] = set()
    eta_given: int | None = None
    tx_every: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indent = len(stripped) - len(stripped.lstrip())
        if "=" not in stripped:
            raise ParseError(lineno, indent + 1, "expected 'key = value'")
        key_part, value_part = stripped.split("=", 1)
        key = key_part.strip()
        value = value_part.strip()
        vcol = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not _KEY.fullmatch(key):
            raise ParseError(lineno, indent + 1, f"malformed key {key!r}")
        if key in seen:
            raise ParseError(lineno, indent + 1, f"duplicate key {key!r}")
        seen.add(key)
        if key.startswith("adversary."):
            params[key.split(".", 1)[1]] = value
            continue
        if key not in KNOWN_KEYS:
            raise ParseError(lineno, indent + 1, f"unknown key {key!r}")
        if not value:
            raise ParseError(lineno, vcol, "missing value")
        if key in _BOOL_KEYS:
            fields[key] = _bool(value, lineno, vcol)
        elif key == "eta":
            eta_given = _int(value, lineno, vcol)
        elif key == "tx_every":
            tx_every = _int(value, lineno, vcol)
            if tx_every < 1:
                raise ParseError(lineno, vcol, "tx_every must be positive")
        elif key == "slots":
            fields["num_slots"] = _int(value, lineno, vcol)
        elif key in _INT_KEYS:
            fields[key] = _int(value, lineno, vcol)
        elif key == "t_a":
            fields["t_a"] = None if value == "none" else _int(value, lineno, vcol)
        elif key == "variant":
            try:
                fields["variant"] = Variant(value)
            except ValueError:
                raise ParseError(lineno, vcol, f"unknown variant {value!r}") from None
        elif key == "corrupt":
            out = []
            for item in _items(value):
                a, b = _pair(item, "@", lineno, vcol)
                out.append((_int(a, lineno, vcol), _int(b, lineno, vcol)))
            fields["corrupt"] = tuple(out)
        elif key == "sleep":
            out3 = []
            for item in _items(value):
                a, span = _pair(item, ":", lineno, vcol)
                s, e = _pair(span, "-", lineno, vcol)
                out3.append((_int(a, lineno, vcol), _int(s, lineno, vcol), _int(e, lineno, vcol)))
            fields["sleep"] = tuple(out3)
        elif key == "txs":
            txs = []
            for item in _items(value):
                a, b = _pair(item, ":", lineno, vcol)
                txs.append((_int(a, lineno, vcol), b))
            fields["txs"] = tuple(txs)
        elif key == "adversary":
            fields["adversary"] = value
        elif key == "c4_threshold":
            try:
                Fraction(value)
            except (ValueError, ZeroDivisionError):
                raise ParseError(lineno, vcol, f"bad rational {value!r}") from None
            fields["c4_threshold"] = value
    if params:
        fields["adversary_params"] = tuple(sorted(params.items()))
    kappa = fields.get("kappa", SimConfig.kappa)
    if kappa <= 1:
        raise ConstraintError(f"kappa must be greater than 1 (got {kappa})")
    try:
        cfg = SimConfig(**fields)
    except ConfigError as exc:
        raise ConstraintError(str(exc)) from None
    if tx_every is not None:
        extra = tuple((r, f"tx{r}") for r in range(0, cfg.rounds, tx_every))
        cfg = cfg.with_(txs=tuple(sorted(set(cfg.txs) | set(extra))))
    if eta_given is not None and eta_given != cfg.eta:
        raise ConstraintError(f"eta={eta_given} does not match pi={cfg.pi} (expected {cfg.eta})")
    return cfg


def serialize_config(cfg: SimConfig) -> str:
    def b(x: bool) -> str:
        return "true" if x else "false"

    lines = [
        f"n = {cfg.n}",
        f"delta = {cfg.delta}",
        f"kappa = {cfg.kappa}",
        f"pi = {cfg.pi}",
        f"eta = {cfg.eta}",
        f"gst = {cfg.gst}",
        f"gat = {cfg.gat}",
        f"t_a = {'none' if cfg.t_a is None else cfg.t_a}",
        f"slots = {cfg.num_slots}",
        f"variant = {cfg.variant.value}",
        f"acks = {b(cfg.acks)}",
        f"seed = {cfg.seed}",
        "corrupt = " + ", ".join(f"{i}@{r}" for i, r in cfg.corrupt),
        "sleep = " + ", ".join(f"{i}:{s}-{e}" for i, s, e in cfg.sleep),
        "txs = " + ", ".join(f"{r}:{tx}" for r, tx in cfg.txs),
        f"adversary = {cfg.adversary}",
        f"uniform_chainfin = {b(cfg.uniform_chainfin)}",
        f"sender_level = {b(cfg.sender_level)}",
        f"tight_expiry = {b(cfg.tight_expiry)}",
        f"c4_threshold = {cfg.c4_threshold}",
    ]
    lines += [f"adversary.{k} = {v}" for k, v in cfg.adversary_params]
    # Empty list values are legal in the file format only when omitted.
    return "\n".join(line for line in lines if not line.endswith("= ")) + "\n"
