"""Node composition, wire format, and the repeated/FIFO broadcast layer.

Three node flavours share one interface (``tick``, ``on_message``, ``round_of``):

* ``BrbNode``: one broadcast object, availability always true (asynchronous mode).
* ``IrcNode``: counter plus detector only.
* ``Node``: delta independent (broadcast, counter, detector) instances.

Inside an instance of ``Node`` each broadcaster has its own broadcast object,
so that a new round from ``k`` can wipe everything concerning ``k`` without
touching the node's own in-flight broadcast.  Values are prefixed with the
round number they were broadcast in; pairs whose round does not match the
receiver's view of the broadcaster's counter are not merged.
"""

from __future__ import annotations

import struct
from collections import deque
from typing import Callable, NamedTuple, Optional

from . import brb, irc, muteness
from .brb import BrbEntry, BrbState
from .irc import IrcState, IrcWire
from .muteness import MutenessState
from .params import SENTINEL, NodeId, Params, Value

Outgoing = list[tuple[NodeId, "WireMessage"]]
Emit = Callable[..., None]

EMPTY = BrbEntry()


class WireMessage(NamedTuple):
    instance: int
    brb: BrbEntry
    irc: IrcWire


# --- canonical encoding -------------------------------------------------

_H = struct.Struct("<H")
_I = struct.Struct("<I")
_IRC = struct.Struct("<?iI")


def _enc_value(v: bytes) -> bytes:
    return _I.pack(len(v)) + v


def encode(w: WireMessage) -> bytes:
    parts = [_H.pack(w.instance), _H.pack(len(w.brb.init))]
    parts += [_enc_value(v) for v in sorted(w.brb.init)]
    for pairs in (w.brb.echo, w.brb.ready):
        parts.append(_H.pack(len(pairs)))
        for k, m in sorted(pairs):
            parts.append(_H.pack(k) + _enc_value(m))
    parts.append(_IRC.pack(w.irc.ack, w.irc.seq, w.irc.lbl))
    return b"".join(parts)


def decode(data: bytes) -> WireMessage:
    pos = 0

    def take(st: struct.Struct) -> tuple:
        nonlocal pos
        if pos + st.size > len(data):
            raise ValueError("truncated message")
        out = st.unpack_from(data, pos)
        pos += st.size
        return out

    def value() -> bytes:
        nonlocal pos
        (ln,) = take(_I)
        if pos + ln > len(data):
            raise ValueError("truncated value")
        v = data[pos:pos + ln]
        pos += ln
        return v

    (inst,) = take(_H)
    (cnt,) = take(_H)
    init = [value() for _ in range(cnt)]
    kinds = []
    for _ in range(2):
        (cnt,) = take(_H)
        pairs = []
        for _ in range(cnt):
            (k,) = take(_H)
            pairs.append((k, value()))
        kinds.append(pairs)
    ack, seq, lbl = take(_IRC)
    if pos != len(data):
        raise ValueError("trailing bytes")
    return WireMessage(inst, BrbEntry(init, kinds[0], kinds[1]), IrcWire(ack, seq, lbl))


# --- round tags ----------------------------------------------------------

def tag_value(round_no: int, v: Value) -> Value:
    return _H.pack(round_no) + v


def value_round(m: Value) -> int:
    if len(m) < 2:
        return -2
    return _H.unpack_from(m)[0]


def untag(m: Value) -> Value:
    return m[2:]


def _noop(*_a, **_kw) -> None:
    return None


# --- asynchronous single-object node --------------------------------------

class BrbNode:
    """Single broadcast object, tx/rx availability always true."""

    def __init__(self, me: NodeId, params: Params):
        self.me = me
        self.params = params
        self.brb = BrbState(me, params.n)
        self.emit: Emit = _noop
        self.last_delivered: list[Optional[Value]] = [None] * params.n
        self.rejected = 0
        self._irc = IrcWire(True, SENTINEL, 0)

    def round_of(self, instance: int) -> int:
        return SENTINEL

    def broadcast(self, v: Value) -> bool:
        ok = brb.brb_broadcast(self.brb, v, True)
        if ok:
            self.emit("broadcast", k=self.me, inst=0, round=SENTINEL, value=v.hex())
        return ok

    def poll(self) -> list[tuple[NodeId, Value]]:
        out = []
        for k in range(self.params.n):
            m = brb.brb_deliver(self.brb, k, True, self.params)
            if m is not None and m != self.last_delivered[k]:
                self.last_delivered[k] = m
                self.emit("deliver", k=k, inst=0, round=SENTINEL, value=m.hex())
                out.append((k, m))
        return out

    def tick(self) -> Outgoing:
        payload = brb.local_step(self.brb, self.params)
        self.poll()
        w = WireMessage(0, payload, self._irc)
        return [(j, w) for j in range(self.params.n) if j != self.me]

    def on_message(self, j: NodeId, w: WireMessage) -> Optional[tuple[NodeId, WireMessage]]:
        if w.instance != 0 or not brb.merge_incoming(self.brb, j, w.brb, self.params):
            self.rejected += 1
        return None

    def forget_delivered(self) -> None:
        self.last_delivered = [None] * self.params.n


# --- counter-only node ---------------------------------------------------

class IrcNode:
    """Counter and detector without broadcast payloads; increments whenever enabled."""

    def __init__(self, me: NodeId, params: Params, trust_all: bool = True,
                 reply_only_to_ack_requests: bool = False):
        self.me = me
        self.params = params
        self.irc = IrcState(me, params.n)
        self.md = MutenessState(me, params.n, trust_all=trust_all)
        self.reply_only = reply_only_to_ack_requests
        self.emit: Emit = _noop
        self.quota: Optional[int] = None
        self.increments = 0
        self.enabled_logged = False

    def round_of(self, instance: int) -> int:
        return self.irc.cur[self.me]

    def md_of(self, instance: int) -> MutenessState:
        return self.md

    def _md_reset(self) -> None:
        muteness.md_reset(self.md)

    def tick(self) -> Outgoing:
        p = self.params
        tr = muteness.trusted(self.md, p)
        if self.quota is None or self.increments < self.quota:
            s = irc.increment(self.irc, tr, p, _noop, self._md_reset)
            if s is not None:
                self.increments += 1
                self.enabled_logged = False
                self.emit("increment", inst=0, round=s)
        elif not self.enabled_logged and irc.increment_enabled(self.irc, tr, p):
            self.enabled_logged = True
            self.emit("enabled", inst=0, round=self.irc.cur[self.me])
        for k in range(p.n):
            s = irc.fetch(self.irc, k, p)
            if s is not None:
                self.emit("fetch", k=k, inst=0, round=s)
        return [(j, WireMessage(0, EMPTY, irc.tx_irc(self.irc, j))) for j in range(p.n) if j != self.me]

    def on_message(self, j: NodeId, w: WireMessage) -> Optional[tuple[NodeId, WireMessage]]:
        reply = irc.rx_irc(self.irc, j, w.irc, self.params, _noop,
                           lambda x: muteness.md_cnt(self.md, x, self.params))
        if reply is None or (self.reply_only and not w.irc.ack):
            return None
        return j, WireMessage(0, EMPTY, reply)


# --- integrated node -----------------------------------------------------

class Instance:
    __slots__ = ("objs", "irc", "md", "own_pending", "trusted_view", "enabled_logged", "dirty", "idle",
                 "increments", "last_value")

    def __init__(self, me: NodeId, n: int, trust_all: bool):
        self.objs = [BrbState(me, n) for _ in range(n)]
        self.irc = IrcState(me, n)
        self.md = MutenessState(me, n, trust_all=trust_all)
        self.own_pending = False
        self.trusted_view: set[NodeId] = {j for j in range(n) if j != me}
        self.enabled_logged = False
        # objects whose rows changed since their last local step; a clean object
        # is already at the fixpoint of local_step, so the step can be skipped
        self.dirty = [True] * n
        # objects known to hold no deliverable value; cleared on any change
        self.idle = [False] * n
        self.increments = 0
        self.last_value: Optional[Value] = None

    def touch(self, k: NodeId) -> None:
        self.dirty[k] = True
        self.idle[k] = False

    def mark_all_dirty(self) -> None:
        self.dirty = [True] * len(self.objs)
        self.idle = [False] * len(self.objs)

    def copy(self) -> Instance:
        c = Instance.__new__(Instance)
        c.objs = [o.copy() for o in self.objs]
        c.irc = self.irc.copy()
        c.md = self.md.copy()
        c.own_pending = self.own_pending
        c.trusted_view = set(self.trusted_view)
        c.enabled_logged = self.enabled_logged
        c.dirty = list(self.dirty)
        c.idle = list(self.idle)
        c.increments = self.increments
        c.last_value = self.last_value
        return c


class Node:
    """delta independent instances plus the repeated-broadcast queue.

    ``fifo`` switches both sides to label order: the c-th own broadcast uses
    instance ``c mod delta`` and deliveries are drained per broadcaster in
    label order.
    """

    def __init__(self, me: NodeId, params: Params, *, fifo: bool = False, trust_all: bool = False,
                 reply_only_to_ack_requests: bool = False, max_queue: int = 1 << 16):
        self.me = me
        self.params = params
        self.instances = [Instance(me, params.n, trust_all) for _ in range(params.delta)]
        self.pending: deque[Value] = deque()
        self.fifo = fifo
        self.fifo_next = [0] * params.n
        self.fifo_tx = 0
        self.reply_only = reply_only_to_ack_requests
        self.max_queue = max_queue
        self.emit: Emit = _noop
        self.rejected = 0
        self.delivered: list[tuple[int, NodeId, Value]] = []
        self.delivered_from = [0] * params.n
        self.broadcasts = 0

    def md_of(self, instance: int) -> Optional[MutenessState]:
        return self.instances[instance].md if 0 <= instance < len(self.instances) else None

    def round_of(self, instance: int) -> int:
        return self.instances[instance].irc.cur[self.me]

    # hooks
    def _recycle_all(self, inst: Instance, k: NodeId) -> None:
        obj = inst.objs[k]
        for j in range(self.params.n):
            brb.recycle(obj, j)
        inst.touch(k)

    # broadcasting
    def _free(self, a: int) -> bool:
        return not self.instances[a].own_pending

    def _try_start(self, a: int, v: Value) -> bool:
        inst = self.instances[a]
        if inst.own_pending:
            return False
        p = self.params
        tr = muteness.trusted(inst.md, p)
        ok = irc.tx_available(inst.irc, tr, p, lambda k: self._recycle_all(inst, k),
                              lambda: muteness.md_reset(inst.md))
        if not ok:
            return False
        s = inst.irc.cur[self.me]
        brb.brb_broadcast(inst.objs[self.me], tag_value(s, v), True)
        inst.touch(self.me)
        inst.own_pending = True
        inst.enabled_logged = False
        inst.increments += 1
        inst.last_value = v
        self.broadcasts += 1
        self.emit("increment", inst=a, round=s)
        self.emit("broadcast", k=self.me, inst=a, round=s, value=v.hex())
        return True

    def repeated_broadcast(self, v: Value) -> Optional[int]:
        """Start ``v`` on a free instance now if possible, else queue it.

        Returns the instance id, or None when queued.  Raises OverflowError
        when the queue is full.
        """
        if not self.pending:
            if self.fifo:
                if self._try_start(self.fifo_tx, v):
                    a = self.fifo_tx
                    self.fifo_tx = (a + 1) % self.params.delta
                    return a
            else:
                for a in range(self.params.delta):
                    if self._try_start(a, v):
                        return a
        if len(self.pending) >= self.max_queue:
            raise OverflowError("broadcast queue full")
        self.pending.append(v)
        return None

    def _drain_queue(self) -> None:
        p = self.params
        while self.pending:
            if self.fifo:
                if not self._try_start(self.fifo_tx, self.pending[0]):
                    return
                self.fifo_tx = (self.fifo_tx + 1) % p.delta
            else:
                for a in range(p.delta):
                    if self._try_start(a, self.pending[0]):
                        break
                else:
                    return
            self.pending.popleft()

    # delivery
    def _deliver(self, a: int, k: NodeId) -> Optional[Value]:
        inst = self.instances[a]
        if inst.idle[k]:
            return None
        cur = inst.irc.cur
        p = self.params
        m = brb.brb_deliver(inst.objs[k], k, lambda: irc.rx_available(inst.irc, k, p), p, accept=lambda x: value_round(x) == cur[k])
        if m is None:
            # no quorum, or the round was already fetched: both stay so until
            # the object or the counter for k changes, which touches k
            inst.idle[k] = True
            return None
        r = value_round(m)
        v = untag(m)
        self.emit("fetch", k=k, inst=a, round=r)
        self.emit("deliver", k=k, inst=a, round=r, value=v.hex())
        if k == self.me:
            inst.own_pending = False
        self.delivered.append((a, k, v))
        self.delivered_from[k] += 1
        return v

    def fifo_poll(self, k: NodeId) -> list[tuple[int, Value]]:
        out = []
        for _ in range(self.params.delta):
            a = self.fifo_next[k]
            v = self._deliver(a, k)
            if v is None:
                break
            self.emit("fifo", k=k, label=a)
            out.append((a, v))
            self.fifo_next[k] = (a + 1) % self.params.delta
        return out

    def poll(self) -> None:
        n = self.params.n
        if self.fifo:
            for k in range(n):
                self.fifo_poll(k)
        else:
            for a in range(self.params.delta):
                for k in range(n):
                    self._deliver(a, k)

    # do-forever
    def _object_ok(self, obj: BrbState, k: NodeId, c: int) -> bool:
        """Whether object ``k`` holds only pairs about ``k`` tagged with round ``c``."""
        tag = _H.pack(c) if 0 <= c <= 0xFFFF else None
        for j, e in enumerate(obj.entries):
            if e.init and (j != k or any(m[:2] != tag for m in e.init)):
                return False
            for b, m in e.echo:
                if b != k or m[:2] != tag:
                    return False
            for b, m in e.ready:
                if b != k or m[:2] != tag:
                    return False
        return True

    def _self_test(self, inst: Instance) -> None:
        """Repair per-object state that no legal run produces.

        Legal runs keep every value in object k tagged with cur[k], and set
        the delivered flag only together with the fetch of that round.  A
        corrupted object that breaks either rule may never deliver, and the
        stale fetch mark then blocks k's round trips for good.
        """
        p = self.params
        me = self.me
        cur = inst.irc.cur
        nxt = inst.irc.nxt
        for k, obj in enumerate(inst.objs):
            if inst.dirty[k] and not self._object_ok(obj, k, cur[k]):
                own = set(obj.entries[me].init) if k == me else set()
                self._recycle_all(inst, k)
                if len(own) == 1 and 0 <= cur[me] <= 0xFFFF and next(iter(own))[:2] == _H.pack(cur[me]):
                    obj.entries[me].init = own
            if obj.was_delivered[k] and not irc.behind(1, cur[k], nxt[k], p):
                obj.was_delivered[k] = False
                inst.touch(k)
        if inst.own_pending:
            # the own value was lost to corruption, or its round already
            # counts as fetched; either way it can never be self-delivered
            if not inst.objs[me].entries[me].init or irc.behind(1, cur[me], nxt[me], p):
                inst.own_pending = False

    def _log_trust(self, a: int, inst: Instance) -> None:
        tr = muteness.trusted(inst.md, self.params)
        if tr != inst.trusted_view:
            for j in sorted(inst.trusted_view - tr):
                self.emit("suspect", inst=a, peer=j)
            for j in sorted(tr - inst.trusted_view):
                self.emit("trust", inst=a, peer=j)
            inst.trusted_view = tr

    def tick(self) -> Outgoing:
        p = self.params
        n = p.n
        me = self.me
        for a, inst in enumerate(self.instances):
            self._log_trust(a, inst)
            self._self_test(inst)
        self._drain_queue()
        out: Outgoing = []
        for inst in self.instances:
            dirty = inst.dirty
            for k, obj in enumerate(inst.objs):
                if dirty[k]:
                    brb.local_step(obj, p)
                    dirty[k] = False
                    inst.idle[k] = False
        self.poll()
        for a, inst in enumerate(self.instances):
            if not inst.own_pending and not inst.enabled_logged and not self.pending:
                tr = muteness.trusted(inst.md, p)
                if irc.increment_enabled(inst.irc, tr, p):
                    inst.enabled_logged = True
                    self.emit("enabled", inst=a, round=inst.irc.cur[me])
            payload = self.payload(a)
            for j in range(n):
                if j != me:
                    out.append((j, WireMessage(a, payload, irc.tx_irc(inst.irc, j))))
        return out

    def payload(self, a: int) -> BrbEntry:
        inst = self.instances[a]
        me = self.me
        e = BrbEntry()
        e.init = set(inst.objs[me].entries[me].init)
        for obj in inst.objs:
            row = obj.entries[me]
            e.echo |= row.echo
            e.ready |= row.ready
        return e

    def on_message(self, j: NodeId, w: WireMessage) -> Optional[tuple[NodeId, WireMessage]]:
        p = self.params
        if not 0 <= w.instance < p.delta or not brb.payload_ok(w.brb, p):
            self.rejected += 1
            return None
        inst = self.instances[w.instance]
        pl = w.brb
        if pl.init or pl.echo or pl.ready:
            self._merge(inst, j, pl)
        reply = irc.rx_irc(inst.irc, j, w.irc, p, lambda k: self._recycle_all(inst, k),
                           lambda x: muteness.md_cnt(inst.md, x, p))
        if reply is None or (self.reply_only and not w.irc.ack):
            return None
        return j, WireMessage(w.instance, EMPTY, reply)

    def _merge(self, inst: Instance, j: NodeId, pl: BrbEntry) -> None:
        """Route each pair to its broadcaster's object, keeping only values tagged
        with the round this node currently holds for that broadcaster.

        The payload was already validated in on_message.
        """
        cur = inst.irc.cur
        objs = inst.objs
        tags = [_H.pack(c) if 0 <= c <= 0xFFFF else None for c in cur]
        if pl.init and all(v[:2] == tags[j] for v in pl.init):
            row = objs[j].entries[j]
            union = row.init | pl.init
            if len(union) <= 1 and union != row.init:
                row.init = union
                inst.touch(j)
        for k, m in pl.echo:
            if m[:2] == tags[k]:
                row = objs[k].entries[j].echo
                if (k, m) not in row:
                    row.add((k, m))
                    inst.touch(k)
        for k, m in pl.ready:
            if m[:2] == tags[k]:
                row = objs[k].entries[j].ready
                if (k, m) not in row:
                    row.add((k, m))
                    inst.touch(k)
