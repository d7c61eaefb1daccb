"""Round-trip based muteness detector with top-t exclusion."""

from __future__ import annotations

from .params import NodeId, Params


class MutenessState:
    """``rt[k][j]`` counts round trips completed with ``j`` since the last one with ``k``.

    Rows and columns are indexed by node id; the ``me`` row and column stay zero.
    """

    __slots__ = ("me", "rt", "trust_all")

    def __init__(self, me: NodeId, n: int, trust_all: bool = False):
        self.me = me
        self.rt = [[0] * n for _ in range(n)]
        self.trust_all = trust_all

    def copy(self) -> MutenessState:
        s = MutenessState.__new__(MutenessState)
        s.me = self.me
        s.rt = [list(r) for r in self.rt]
        s.trust_all = self.trust_all
        return s


def md_reset(state: MutenessState) -> None:
    n = len(state.rt)
    state.rt = [[0] * n for _ in range(n)]


def md_cnt(state: MutenessState, j: NodeId, params: Params) -> None:
    if j == state.me:
        raise ValueError("no round trips with self")
    cap = params.big_b
    for k, row in enumerate(state.rt):
        if k != state.me and k != j and row[j] < cap:
            row[j] += 1
    state.rt[j] = [0] * len(state.rt)


def excess_sum(row: list[int], me: NodeId, drop: int) -> int:
    vals = row[:me] + row[me + 1:]
    vals.sort(reverse=True)
    return sum(vals[drop:])


def trusted(state: MutenessState, params: Params, drop: int | None = None) -> set[NodeId]:
    """Peers whose round-trip backlog, minus its ``drop`` largest terms, is below theta.

    ``drop`` defaults to t; passing 0 disables the top-t exclusion.
    """
    me = state.me
    peers = {j for j in range(len(state.rt)) if j != me}
    if state.trust_all:
        return peers
    d = params.t if drop is None else drop
    return {j for j in peers if params.theta > excess_sum(state.rt[j], me, d)}
