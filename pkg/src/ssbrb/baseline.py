"""Classic non-stabilizing broadcast oracles: ND-broadcast and Bracha-Toueg BRB.

Both are pure event handlers.  A handler returns the messages to broadcast to
every node (self included) and an optional delivery.  They assume a
well-initialized start and reliable channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .params import NodeId, Params, Value


class Init(NamedTuple):
    value: Value


class Echo(NamedTuple):
    k: NodeId
    value: Value


class Ready(NamedTuple):
    k: NodeId
    value: Value


BaselineMsg = Union[Init, Echo, Ready]


class Broadcast(NamedTuple):
    value: Value


class Arrival(NamedTuple):
    sender: NodeId
    msg: BaselineMsg


Event = Union[Broadcast, Arrival]


class Outcome(NamedTuple):
    outgoing: list
    delivery: Optional[tuple[NodeId, Value]]


@dataclass
class NdState:
    me: NodeId
    params: Params
    init_seen: set[NodeId] = field(default_factory=set)
    echoed: dict[tuple[NodeId, Value], set[NodeId]] = field(default_factory=dict)
    delivered: dict[NodeId, Value] = field(default_factory=dict)


@dataclass
class BtState:
    me: NodeId
    params: Params
    init_seen: set[NodeId] = field(default_factory=set)
    echoed: dict[tuple[NodeId, Value], set[NodeId]] = field(default_factory=dict)
    readied: dict[tuple[NodeId, Value], set[NodeId]] = field(default_factory=dict)
    sent_echo: set[NodeId] = field(default_factory=set)
    sent_ready: set[tuple[NodeId, Value]] = field(default_factory=set)
    delivered: dict[NodeId, Value] = field(default_factory=dict)


def _echo_exceeds(count: int, p: Params) -> bool:
    return 2 * count > p.n + p.t


def nd_handle(state: NdState, event: Event) -> Outcome:
    if isinstance(event, Broadcast):
        return Outcome([Init(event.value)], None)
    j, msg = event
    if isinstance(msg, Init):
        if j in state.init_seen:
            return Outcome([], None)
        state.init_seen.add(j)
        return Outcome([Echo(j, msg.value)], None)
    if isinstance(msg, Echo):
        key = (msg.k, msg.value)
        senders = state.echoed.setdefault(key, set())
        senders.add(j)
        if msg.k not in state.delivered and _echo_exceeds(len(senders), state.params):
            state.delivered[msg.k] = msg.value
            return Outcome([], key)
    return Outcome([], None)


def bt_handle(state: BtState, event: Event) -> Outcome:
    p = state.params
    if isinstance(event, Broadcast):
        return Outcome([Init(event.value)], None)
    j, msg = event
    out: list = []
    if isinstance(msg, Init):
        if j not in state.init_seen:
            state.init_seen.add(j)
            if j not in state.sent_echo:
                state.sent_echo.add(j)
                out.append(Echo(j, msg.value))
        return Outcome(out, None)
    key = (msg.k, msg.value)
    if isinstance(msg, Echo):
        senders = state.echoed.setdefault(key, set())
        senders.add(j)
        if _echo_exceeds(len(senders), p) and key not in state.sent_ready:
            state.sent_ready.add(key)
            out.append(Ready(*key))
        return Outcome(out, None)
    senders = state.readied.setdefault(key, set())
    senders.add(j)
    if len(senders) >= p.t + 1 and key not in state.sent_ready:
        state.sent_ready.add(key)
        out.append(Ready(*key))
    delivery = None
    if len(senders) >= 2 * p.t + 1 and msg.k not in state.delivered:
        state.delivered[msg.k] = msg.value
        delivery = key
    return Outcome(out, delivery)
