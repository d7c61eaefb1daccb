"""Scenario configuration and the per-seed runner."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Optional

from . import verify
from .adversary import STRATEGIES, Adversary, AdversarySpec, make_adversary
from .baseline import BtState, bt_handle
from .node import BrbNode, IrcNode, Node
from .params import Params, validate
from .simnet import BaselineWorld, CorruptionSpec, NetConfig, World
from .trace import TraceView, header_lines, parse_trace

MODES = ("single-brb-async", "irc-only", "integrated", "baseline-differential")
CHECKS = ("brb", "irc", "muteness", "consistency", "differential", "fifo")
DEFAULT_CHECKS = {
    "single-brb-async": ("brb", "consistency"),
    "irc-only": ("irc",),
    "integrated": ("brb", "irc", "muteness"),
    "baseline-differential": ("differential", "brb"),
}


@dataclass
class Scenario:
    params: Params = field(default_factory=Params)
    mode: str = "integrated"
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    net: NetConfig = field(default_factory=NetConfig)
    horizon: int = 50_000
    transient_at: Optional[int] = None
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    recycle_when_consistent: bool = False
    settle_rounds: int = 50  # full rounds after the corruption before checking starts
    seeds: list[int] = field(default_factory=lambda: [0])
    checks: tuple[str, ...] = ()
    broadcasters: Optional[int] = None  # single mode: number of correct broadcasters (None: random)
    rounds: int = 4  # integrated / irc-only: broadcasts per node and instance
    fifo: bool = False
    trust_all: bool = False
    reply_only_to_ack_requests: bool = False
    stop_when_done: bool = True

    def selected_checks(self) -> tuple[str, ...]:
        return self.checks or DEFAULT_CHECKS[self.mode]


class ConfigError(ValueError):
    pass


# --- parsing ---------------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ids(s: str) -> list[int]:
    return [int(x) for x in s.replace(";", ",").split(",") if x.strip()]


def parse_seeds(s: str) -> list[int]:
    s = s.strip()
    if ".." in s:
        a, b = s.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError("empty seed range")
        return list(range(lo, hi + 1))
    return _ids(s)


_PARAM_KEYS = {"n": "n", "t": "t", "capacity": "capacity", "lambda": "lam", "big_b": "big_b", "b": "big_b",
               "theta": "theta", "delta": "delta", "max_value_len": "max_value_len"}


def parse_scenario(text: str) -> Scenario:
    """Parse flat ``section.key = value`` lines (``#`` starts a comment)."""
    seen: dict[str, int] = {}
    errors: list[str] = []
    sc = Scenario()
    pkw: dict[str, int] = {}
    adv: dict[str, Any] = {}
    net: dict[str, Any] = {}
    cor: dict[str, Any] = {}
    lines_of: dict[str, int] = {}

    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {no}: expected 'section.key = value'")
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.lower()
        if key in seen:
            errors.append(f"line {no}: duplicate key {key!r} (first on line {seen[key]})")
            continue
        seen[key] = no
        if "." not in key:
            errors.append(f"line {no}: key {key!r} lacks a section")
            continue
        sec, name = key.split(".", 1)
        try:
            if sec == "params" and name in _PARAM_KEYS:
                pkw[_PARAM_KEYS[name]] = int(val)
                lines_of[_PARAM_KEYS[name]] = no
            elif sec == "run" and name == "mode":
                if val not in MODES:
                    raise ValueError(f"mode must be one of {MODES}")
                sc.mode = val
            elif sec == "run" and name == "seeds":
                sc.seeds = parse_seeds(val)
            elif sec == "run" and name == "seed":
                sc.seeds = [int(val)]
            elif sec == "run" and name == "horizon":
                sc.horizon = int(val)
            elif sec == "run" and name == "checks":
                cs = tuple(c.strip() for c in val.split(",") if c.strip())
                bad = [c for c in cs if c not in CHECKS]
                if bad:
                    raise ValueError(f"unknown checks {bad}")
                sc.checks = cs
            elif sec == "run" and name == "stop_when_done":
                sc.stop_when_done = _bool(val)
            elif sec == "network" and name in ("p_loss", "p_dup"):
                x = float(val)
                if not 0 <= x < 1:
                    raise ValueError(f"{name} must be in [0, 1)")
                net[name] = x
            elif sec == "network" and name in ("fairness_k", "capacity"):
                net[name] = int(val)
            elif sec == "network" and name in ("bml", "theta_bound", "trace_messages"):
                net[name] = _bool(val)
            elif sec == "adversary" and name == "corrupt":
                adv["corrupt"] = tuple(_ids(val))
            elif sec == "adversary" and name == "strategy":
                if val not in STRATEGIES:
                    raise ValueError(f"strategy must be one of {STRATEGIES}")
                adv["strategy"] = val
            elif sec == "adversary" and name == "at":
                adv["at"] = int(val)
            elif sec == "adversary" and name == "value":
                adv["value"] = val.encode()
            elif sec == "transient" and name == "at":
                sc.transient_at = int(val)
            elif sec == "transient" and name == "nodes":
                cor["nodes"] = _ids(val)
            elif sec == "transient" and name == "instances":
                cor["instances"] = _ids(val)
            elif sec == "transient" and name in ("brb", "irc", "muteness", "channels"):
                cor[name] = _bool(val)
            elif sec == "transient" and name == "recycle_when_consistent":
                sc.recycle_when_consistent = _bool(val)
            elif sec == "transient" and name == "settle_rounds":
                sc.settle_rounds = int(val)
                if sc.settle_rounds < 0:
                    raise ValueError("must be >= 0")
            elif sec == "workload" and name == "broadcasters":
                sc.broadcasters = int(val)
            elif sec == "workload" and name == "rounds":
                sc.rounds = int(val)
            elif sec == "workload" and name == "fifo":
                sc.fifo = _bool(val)
            elif sec == "options" and name == "trust_all":
                sc.trust_all = _bool(val)
            elif sec == "options" and name == "reply_only_to_ack_requests":
                sc.reply_only_to_ack_requests = _bool(val)
            else:
                errors.append(f"line {no}: unknown key {key!r}")
        except ValueError as exc:
            errors.append(f"line {no}: {key}: {exc}")

    try:
        sc.params = Params(**pkw)
    except TypeError as exc:
        errors.append(str(exc))
    for v in validate(sc.params):
        where = sorted(lines_of.values())
        errors.append(f"params (lines {','.join(map(str, where)) or '-'}): violates {v}")
    sc.adversary = AdversarySpec(**adv)
    for v in sc.adversary.validate(sc.params):
        errors.append(f"adversary (line {seen.get('adversary.corrupt', '-')}): violates {v}")
    sc.net = NetConfig(**net)
    sc.corruption = CorruptionSpec(**cor)
    if sc.mode == "single-brb-async":
        sc.net.bml = False
    if errors:
        raise ConfigError("\n".join(errors))
    return sc


# --- running -----------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    trace: list[str]
    reports: list[verify.PropertyReport]
    world: Any = None
    view: Optional[TraceView] = None
    converged_round: Optional[int] = None

    @property
    def violated(self) -> bool:
        return verify.any_violated(self.reports)


def _derive(seed: int, salt: int) -> int:
    return (seed * 1_000_003 + salt) & 0xFFFFFFFF


def _honest(sc: Scenario) -> Callable[[int], Any]:
    p = sc.params
    if sc.mode == "single-brb-async":
        return lambda i: BrbNode(i, p)
    if sc.mode == "irc-only":
        return lambda i: IrcNode(i, p, trust_all=True, reply_only_to_ack_requests=sc.reply_only_to_ack_requests)
    return lambda i: Node(i, p, fifo=sc.fifo, trust_all=sc.trust_all,
                          reply_only_to_ack_requests=sc.reply_only_to_ack_requests)


def build_world(sc: Scenario, seed: int) -> World:
    p = sc.params
    honest = _honest(sc)
    byz = sorted(set(sc.adversary.corrupt))
    correct = [i for i in range(p.n) if i not in byz]
    adv_rng = random.Random(_derive(seed, 1))
    nodes: list[Any] = []
    for i in range(p.n):
        if i in byz:
            nodes.append(make_adversary(sc.adversary, i, p, adv_rng, sc.mode, honest))
        else:
            nodes.append(honest(i))
    net = sc.net if sc.mode != "single-brb-async" else replace(sc.net, bml=False)
    w = World(p, nodes, correct, seed, net)
    for nd in nodes:
        if isinstance(nd, Adversary):
            nd.world = w
    w.trace.extend(header_lines(sc.mode, p, seed, correct, byz, sc.adversary.strategy if byz else "",
                                sc.adversary.at, sc.fifo, sc.horizon))
    return w


def _inner(nd: Any) -> Any:
    return getattr(nd, "inner", nd)


def _single_done(w: World, expected: dict[int, bytes]) -> bool:
    correct = w.correct
    for i in correct:
        ld = w.nodes[i].last_delivered
        for k, v in expected.items():
            if ld[k] != v:
                return False
    for k in range(w.n):
        if k in w.correct_set:
            continue
        got = sum(1 for i in correct if w.nodes[i].last_delivered[k] is not None)
        if got not in (0, len(correct)):
            return False
    return True


def _integrated_done(w: World, sc: Scenario) -> bool:
    p = sc.params
    total = sc.rounds * p.delta
    for i in w.correct:
        nd = w.nodes[i]
        if nd.pending or nd.broadcasts < total:
            return False
        for inst in nd.instances:
            if inst.own_pending or not inst.enabled_logged:
                return False
    if sc.transient_at is not None and not sc.recycle_when_consistent:
        # values in flight at the corruption may be lost for good, so only the
        # latest value of every broadcaster and instance has to arrive
        for i in w.correct:
            got = set(w.nodes[i].delivered)
            for k in w.correct:
                for a, inst in enumerate(w.nodes[k].instances):
                    if inst.last_value is not None and (a, k, inst.last_value) not in got:
                        return False
        return True
    for i in w.correct:
        nd = w.nodes[i]
        for k in w.correct:
            if nd.delivered_from[k] < total:
                return False
    return True


def _irc_done(w: World) -> bool:
    return all(w.nodes[i].increments >= w.nodes[i].quota and w.nodes[i].enabled_logged for i in w.correct)


def _increments(w: World) -> dict[tuple[int, int], int]:
    """Increments so far per (correct node, instance); empty for the single-object mode.

    A counter view corrupted to just ahead of the real counter blocks fetches
    until the counter has advanced lambda+1 times, so the settle window waits
    for that many increments everywhere."""
    out = {}
    for i in w.correct:
        nd = _inner(w.nodes[i])
        if isinstance(nd, Node):
            for a, inst in enumerate(nd.instances):
                out[(i, a)] = inst.increments
        elif isinstance(nd, IrcNode):
            out[(i, 0)] = nd.increments
    return out


def run_seed(sc: Scenario, seed: int, keep_world: bool = False) -> RunResult:
    p = sc.params
    w = build_world(sc, seed)
    wl = random.Random(_derive(seed, 2))
    converged: list[Optional[int]] = [None]
    expected: dict[int, bytes] = {}
    stop: Optional[Callable[[World], bool]] = None
    phase = {"recycled": not sc.recycle_when_consistent}

    def single_broadcasts() -> None:
        bcs = sc.broadcasters if sc.broadcasters is not None else wl.randint(1, len(w.correct))
        for i in sorted(wl.sample(w.correct, min(bcs, len(w.correct)))):
            v = bytes(wl.randrange(256) for _ in range(6))
            w.nodes[i].broadcast(v)
            expected[i] = v

    if sc.mode == "single-brb-async":
        if not sc.recycle_when_consistent:
            single_broadcasts()
        stop = lambda ww: phase["recycled"] and _single_done(ww, expected)
    elif sc.mode == "integrated":
        for i in range(p.n):
            nd = _inner(w.nodes[i])
            if isinstance(nd, Node):
                for c in range(sc.rounds * p.delta):
                    nd.repeated_broadcast(f"{i}.{c}".encode())
        stop = lambda ww: _integrated_done(ww, sc)
    else:
        for i in range(p.n):
            nd = _inner(w.nodes[i])
            nd.quota = sc.rounds
        stop = _irc_done

    track = "consistency" in sc.selected_checks() or sc.recycle_when_consistent
    start_round = [0]
    injected = [False]
    settled = [False]
    base_incs: dict[tuple[int, int], int] = {}
    last_ok: list[Optional[bool]] = [None]

    def on_round(ww: World) -> None:
        if injected[0] and settle and not settled[0] and ww.rounds - start_round[0] >= sc.settle_rounds:
            if all(c - base_incs.get(key, 0) > p.lam for key, c in _increments(ww).items()):
                settled[0] = True
                ww.theta_hold = ww.net.theta_bound
                ww.log("-", "settled", round=ww.rounds - start_round[0])
        if not track:
            return
        ok = all(verify.check_consistency(ww).values())
        if ok != last_ok[0]:
            ww.log("-", "consistent", ok=int(ok), round=ww.rounds - start_round[0])
            last_ok[0] = ok
        if ok and converged[0] is None:
            converged[0] = ww.rounds - start_round[0]
            if not phase["recycled"]:
                ww.recycle_correct()
                phase["recycled"] = True
                single_broadcasts()

    # a recycle ends the unsettled phase by itself
    settle = sc.transient_at is not None and not sc.recycle_when_consistent
    if track or settle:
        w.on_round = on_round

    if sc.transient_at is not None:
        w.run(sc.transient_at)
        w.inject_transient(sc.corruption, _derive(seed, 3))
        start_round[0] = w.rounds
        injected[0] = True
        base_incs.update(_increments(w))
        last_ok[0] = None
    w.run(sc.horizon, stop if sc.stop_when_done else None)
    done = stop(w) if stop is not None else False
    if sc.mode == "single-brb-async" and not done and verify.correct_fixpoint(w):
        w.log("-", "fixpoint")
    w.log("-", "end", steps=w.clock, rounds=w.rounds, stopped=int(done), drops=w.drops, purged=w.purged)
    view = parse_trace(w.trace)
    reports = run_checks(view, sc.selected_checks())
    return RunResult(seed, w.trace, reports, w if keep_world else None, view, converged[0])


def run_checks(view: TraceView, checks: tuple[str, ...]) -> list[verify.PropertyReport]:
    out: list[verify.PropertyReport] = []
    unsettled = view.unsettled
    for c in checks:
        reps: list[verify.PropertyReport] = []
        if c == "brb":
            reps = verify.check_brb(view)
        elif c == "irc":
            reps = verify.check_irc(view)
        elif c == "muteness":
            reps = verify.check_muteness(view)
        elif c == "fifo":
            reps = verify.check_fifo(view)
        elif c == "consistency":
            out += check_consistency_trace(view)
            continue
        # still converging: the suffix after the corruption is not legal,
        # so nothing in it can confirm or refute a property
        out += verify.suspend(reps, view.cut) if unsettled else reps
    if any(e.node == "-" and e.name == "corrupt" for e in view.events):
        out.append(check_stabilization(view))
    return out


def check_stabilization(view: TraceView) -> verify.PropertyReport:
    """Holds when the run left the unsettled phase after its last corruption."""
    rep = verify.PropertyReport("stabilization")
    last = max(e.index for e in view.events if e.node == "-" and e.name == "corrupt")
    if not any(e.node == "-" and e.name in ("settled", "recycle") and e.index > last for e in view.events):
        rep.unsure("no settle or recycle marker after the corruption; later checks are vacuous", last)
    return rep


def check_consistency_trace(view: TraceView) -> list[verify.PropertyReport]:
    """Convergence and closure from the per-round consistency samples."""
    conv = verify.PropertyReport("consistency-convergence")
    closure = verify.PropertyReport("consistency-closure")
    marks = [e for e in view.events if e.node == "-" and e.name == "corrupt"]
    start = marks[-1].index if marks else -1
    samples = [e for e in view.named("consistent") if e.index > start]
    if not samples:
        conv.unsure("no full round sampled")
        return [conv, closure]
    ok_seen = None
    for e in samples:
        if e.kv["ok"] == "1":
            ok_seen = ok_seen or e
        elif ok_seen is not None:
            closure.violate("inconsistent again after convergence", ok_seen.index, e.index)
    if ok_seen is None:
        conv.unsure("not consistent by the horizon", samples[-1].index)
    return [conv, closure]


# --- differential -------------------------------------------------------------

def run_differential(sc: Scenario, seed: int) -> tuple[RunResult, TraceView, Optional[str]]:
    """Run the self-stabilizing object and the classic oracle on the same seed and workload."""
    p = sc.params
    ss = replace(sc, mode="single-brb-async", adversary=AdversarySpec(), transient_at=None,
                 recycle_when_consistent=False, checks=("brb",),
                 net=replace(sc.net, p_loss=0.0, p_dup=0.0, bml=False))
    res = run_seed(ss, seed)
    bt = BaselineWorld(p, seed, bt_handle, lambda i: BtState(i, p))
    bt.trace.extend(header_lines("baseline", p, seed, list(range(p.n)), [], horizon=sc.horizon))
    for e in res.view.named("broadcast"):
        bt.broadcast(e.nid, bytes.fromhex(e.kv["value"]))
    bt.run(sc.horizon * 10)
    bt.log("-", "end", steps=bt.clock, stopped=1)
    bview = parse_trace(bt.trace)
    res.view.mode = "single-brb-async"
    diff = verify.differential_oracle(res.view, bview)
    rep = verify.PropertyReport("differential")
    if diff is not None:
        rep.violate(diff)
    res.reports.append(rep)
    return res, bview, diff
