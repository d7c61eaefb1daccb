"""Self-stabilizing independent round counter (bounded, mod-B, stop-and-wait)."""

from __future__ import annotations

from typing import Callable, NamedTuple, Optional

from .params import SENTINEL, NodeId, Params

Hook = Callable[[NodeId], None]

# cleared only by the mutation suite
RESET_LABELS_ON_INCREMENT = True


class IrcWire(NamedTuple):
    ack: bool
    seq: int
    lbl: int


class IrcState:
    __slots__ = ("me", "cur", "nxt", "lbl")

    def __init__(self, me: NodeId, n: int):
        self.me = me
        self.cur = [SENTINEL] * n
        self.nxt = [SENTINEL] * n
        self.lbl = [0] * n

    def copy(self) -> IrcState:
        s = IrcState.__new__(IrcState)
        s.me = self.me
        s.cur = list(self.cur)
        s.nxt = list(self.nxt)
        s.lbl = list(self.lbl)
        return s


def behind(d: int, s: int, c: int, params: Params) -> bool:
    """True iff ``s`` lies in the mod-B window of width d*lambda+1 ending at ``c``."""
    b = params.big_b
    if s == SENTINEL:
        s = b - 1
    if c == SENTINEL:
        c = b - 1
    return (c - s) % b <= d * params.lam


def label_threshold(params: Params) -> int:
    return 2 * (params.capacity + 1)


def increment_enabled(state: IrcState, trusted: set[NodeId], params: Params) -> bool:
    if state.cur[state.me] == SENTINEL:
        return True
    th = label_threshold(params)
    return all(state.lbl[j] > th for j in trusted if j != state.me)


def increment(
    state: IrcState,
    trusted: set[NodeId],
    params: Params,
    recycle_hook: Hook,
    md_reset_hook: Callable[[], None],
) -> Optional[int]:
    if not increment_enabled(state, trusted, params):
        return None
    md_reset_hook()
    me = state.me
    c = state.cur[me]
    state.cur[me] = 0 if c == SENTINEL else (c + 1) % params.big_b
    if RESET_LABELS_ON_INCREMENT:
        state.lbl = [0] * len(state.lbl)
    recycle_hook(me)
    return state.cur[me]


def fetch(state: IrcState, k: NodeId, params: Params) -> Optional[int]:
    if behind(1, state.cur[k], state.nxt[k], params):
        return None
    state.nxt[k] = state.cur[k]
    return state.nxt[k]


def tx_irc(state: IrcState, j: NodeId) -> IrcWire:
    return IrcWire(True, state.cur[state.me], state.lbl[j])


def rx_irc(
    state: IrcState,
    j: NodeId,
    w: IrcWire,
    params: Params,
    recycle_hook: Hook,
    md_cnt_hook: Hook,
) -> Optional[IrcWire]:
    if not w.ack and behind(2, state.cur[state.me], w.seq, params) and state.lbl[j] == w.lbl:
        md_cnt_hook(j)
        state.lbl[j] = min(params.big_b, w.lbl + 1)
        return None
    # An acknowledgment's seq belongs to our own counter, so only requests
    # may advance our view of j's counter.
    if w.ack and not behind(1, w.seq, state.cur[j], params):
        state.cur[j] = w.seq
        recycle_hook(j)
    return IrcWire(False, state.nxt[j], w.lbl)


def tx_available(
    state: IrcState,
    trusted: set[NodeId],
    params: Params,
    recycle_hook: Hook,
    md_reset_hook: Callable[[], None],
) -> bool:
    return increment(state, trusted, params, recycle_hook, md_reset_hook) is not None


def rx_available(state: IrcState, k: NodeId, params: Params) -> bool:
    return fetch(state, k, params) is not None
