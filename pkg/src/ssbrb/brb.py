"""Self-stabilizing Byzantine reliable broadcast object with a recycling interface.

One ``BrbState`` holds a row per node.  Row ``me`` is what this node sends;
row ``j`` is the union of everything merged from ``j`` since its last recycle.
Delivery is pull-based through :func:`brb_deliver`.
"""

from __future__ import annotations

from collections import Counter
from enum import Enum
from itertools import chain
from typing import Callable, Iterable, Optional, Union

from .params import NodeId, Params, Value

Pair = tuple[NodeId, Value]


class BrbMsgKind(Enum):
    INIT = "init"
    ECHO = "echo"
    READY = "ready"


class BrbEntry:
    __slots__ = ("init", "echo", "ready")

    def __init__(
        self,
        init: Iterable[Value] = (),
        echo: Iterable[Pair] = (),
        ready: Iterable[Pair] = (),
    ):
        self.init: set[Value] = set(init)
        self.echo: set[Pair] = set(echo)
        self.ready: set[Pair] = set(ready)

    def copy(self) -> BrbEntry:
        e = BrbEntry.__new__(BrbEntry)
        e.init = set(self.init)
        e.echo = set(self.echo)
        e.ready = set(self.ready)
        return e

    def is_empty(self) -> bool:
        return not (self.init or self.echo or self.ready)

    def clear(self) -> None:
        self.init = set()
        self.echo = set()
        self.ready = set()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BrbEntry):
            return NotImplemented
        return (self.init, self.echo, self.ready) == (other.init, other.echo, other.ready)

    def __repr__(self) -> str:
        return f"BrbEntry(init={sorted(self.init)}, echo={sorted(self.echo)}, ready={sorted(self.ready)})"


class BrbState:
    __slots__ = ("me", "entries", "was_delivered", "flagged")

    def __init__(self, me: NodeId, n: int):
        self.me = me
        self.entries = [BrbEntry() for _ in range(n)]
        self.was_delivered = [False] * n
        # set when two values both reached the delivery quorum for one slot
        self.flagged = False

    @property
    def mine(self) -> BrbEntry:
        return self.entries[self.me]

    def copy(self) -> BrbState:
        s = BrbState.__new__(BrbState)
        s.me = self.me
        s.entries = [e.copy() for e in self.entries]
        s.was_delivered = list(self.was_delivered)
        s.flagged = self.flagged
        return s


def echo_quorum(params: Params) -> int:
    """Smallest echo count strictly above (n+t)/2."""
    return (params.n + params.t) // 2 + 1


def amplify_quorum(params: Params) -> int:
    return params.t + 1


def delivery_quorum(params: Params) -> int:
    return 2 * params.t + 1


def support(entries: list[BrbEntry], kind: str) -> Counter:
    return Counter(chain.from_iterable(getattr(e, kind) for e in entries))


def has_conflict(pairs: set[Pair]) -> bool:
    seen: dict[NodeId, Value] = {}
    for k, m in pairs:
        if seen.setdefault(k, m) != m:
            return True
    return False


def recycle(state: BrbState, k: NodeId) -> None:
    state.entries[k].clear()
    state.was_delivered[k] = False


def brb_broadcast(state: BrbState, v: Value, tx_available: bool) -> bool:
    if not v:
        raise ValueError("broadcast value must be non-empty")
    if not tx_available:
        return False
    recycle(state, state.me)
    state.entries[state.me].init = {v}
    return True


def payload_ok(payload: BrbEntry, params: Params) -> bool:
    cap = 3 * params.n
    if len(payload.init) > cap or len(payload.echo) > cap or len(payload.ready) > cap:
        return False
    lim = params.max_value_len
    if any(not v or len(v) > lim for v in payload.init):
        return False
    for pairs in (payload.echo, payload.ready):
        for k, m in pairs:
            if not 0 <= k < params.n or not m or len(m) > lim:
                return False
    return True


def merge_incoming(state: BrbState, j: NodeId, payload: BrbEntry, params: Params) -> bool:
    """Union ``payload`` into row ``j``; returns False if the payload was rejected."""
    if j == state.me:
        raise ValueError("cannot merge into own row")
    if not payload_ok(payload, params):
        return False
    union_into(state.entries[j], payload)
    return True


def union_into(row: BrbEntry, payload: BrbEntry) -> None:
    """Unchecked merge of an already validated payload into one row."""
    if payload.init:
        union = row.init | payload.init
        if len(union) <= 1:
            row.init = union
    if payload.echo:
        row.echo |= payload.echo
    if payload.ready:
        row.ready |= payload.ready


def _justified(pair: Pair, echoes: Counter, readies: Counter, params: Params) -> bool:
    return echoes[pair] >= echo_quorum(params) or readies[pair] >= amplify_quorum(params)


def _unjustified_ready(state: BrbState, params: Params) -> bool:
    entries = state.entries
    mine = entries[state.me]
    if mine.ready:
        echoes = support(entries, "echo")
        readies = support(entries, "ready")
        for pair in mine.ready:
            if not _justified(pair, echoes, readies, params):
                return True
    return False


def _self_inconsistent(state: BrbState, params: Params) -> bool:
    entries = state.entries
    for j, m in entries[state.me].echo:
        if m not in entries[j].init:
            return True
    return _unjustified_ready(state, params)


def local_step(state: BrbState, params: Params) -> BrbEntry:
    """One do-forever iteration; returns a copy of the row to send."""
    entries = state.entries
    me = state.me
    if _self_inconsistent(state, params):
        # the test inspects only echo and ready; keeping init stops a Byzantine
        # retraction of ready support from erasing our own pending broadcast
        keep = entries[me].init
        recycle(state, me)
        entries[me].init = keep
    for e in entries:
        if len(e.init) > 1:
            e.init = set()
        if len(e.echo) > 1 and has_conflict(e.echo):
            e.echo = set()
        if len(e.ready) > 1 and has_conflict(e.ready):
            e.ready = set()
    mine = entries[me]
    echoed = {k for k, _ in mine.echo}
    for k, e in enumerate(entries):
        if e.init and k not in echoed:
            (m,) = e.init
            mine.echo.add((k, m))
    eq = echo_quorum(params)
    aq = amplify_quorum(params)
    # one ready per broadcaster: stale rows left by a corruption can justify two
    # values at once, and re-adding both after every scrub never settles
    readied = {k for k, _ in mine.ready}
    for kind, q in (("echo", eq), ("ready", aq)):
        for pair, c in sorted(support(entries, kind).items()):
            if c >= q and pair[0] not in readied:
                mine.ready.add(pair)
                readied.add(pair[0])
    return mine.copy()


def brb_deliver(
    state: BrbState,
    k: NodeId,
    rx_available: Union[bool, Callable[[], bool]],
    params: Params,
    accept: Optional[Callable[[Value], bool]] = None,
) -> Optional[Value]:
    """Pull delivery for slot ``k``.

    ``rx_available`` may be a callable; it is then invoked only once a quorum
    exists, so an effectful availability test is not consumed needlessly.
    """
    q = delivery_quorum(params)
    counts: Counter = Counter()
    for e in state.entries:
        for kk, m in e.ready:
            if kk == k:
                counts[m] += 1
    found = sorted(m for m, c in counts.items() if c >= q and (accept is None or accept(m)))
    if not found:
        return None
    ok = rx_available() if callable(rx_available) else rx_available
    if not ok:
        return None
    if len(found) > 1:
        state.flagged = True
    state.was_delivered[k] = True
    return found[0]


def brb_was_delivered(state: BrbState, k: NodeId) -> bool:
    return state.was_delivered[k]


def is_consistent(state: BrbState, params: Params, rows: Optional[Iterable[NodeId]] = None,
                  justification: bool = True) -> bool:
    """brb.i on ``rows`` (default: all) and, unless disabled, brb.ii on the own row."""
    entries = state.entries
    for j in range(len(entries)) if rows is None else rows:
        e = entries[j]
        if len(e.init) > 1 or has_conflict(e.echo) or has_conflict(e.ready):
            return False
    return not (justification and _unjustified_ready(state, params))
