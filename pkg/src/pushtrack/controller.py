"""The Push-and-Track control loop and its reference controllers.

The controller only knows what control messages tell it: who subscribed
(ENTER/LEAVE), who acknowledged, and optionally positions or neighbor lists.
Every ``delta_t`` seconds it compares the acknowledged infection ratio with
an objective curve and pushes the shortfall over the infrastructure. In the
final push-duration of a message's lifetime (the panic zone) it pushes to
everyone still missing the content.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .contacts import components_of
from .engine import EventKind, Message, MsgKind, Simulator, Status, Transfer
from .oracle import oracle_initial_pushes
from .quadtree import DEFAULT_MAX_DEPTH, QuadTree

log = logging.getLogger(__name__)


class WhenStrategy(Enum):
    SINGLE_COPY = "single-copy"
    TEN_COPIES = "ten-copies"
    QUADRATIC = "quadratic"
    SLOW_LINEAR = "slow-linear"
    LINEAR = "linear"
    FAST_LINEAR = "fast-linear"
    SQUARE_ROOT = "square-root"

    @property
    def initial_copies(self) -> int | None:
        return {WhenStrategy.SINGLE_COPY: 1, WhenStrategy.TEN_COPIES: 10}.get(self)


class WhomStrategy(Enum):
    RANDOM = "random"
    CONNECTED_COMPONENTS = "cc"
    ENTRY_OLDEST = "entry-oldest"
    ENTRY_AVERAGE = "entry-average"
    ENTRY_NEWEST = "entry-newest"
    GPS_DENSITY = "gps-density"
    GPS_POTENTIAL = "gps-potential"

    @property
    def needs_positions(self) -> bool:
        return self in (WhomStrategy.GPS_DENSITY, WhomStrategy.GPS_POTENTIAL)

    @property
    def needs_neighbors(self) -> bool:
        return self is WhomStrategy.CONNECTED_COMPONENTS


class ConfigError(ValueError):
    pass


def objective_value(w: WhenStrategy, x: float) -> float:
    """Target infection ratio at elapsed lifetime fraction ``x``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if w is WhenStrategy.QUADRATIC:
        return x * x
    if w is WhenStrategy.SQUARE_ROOT:
        return math.sqrt(x)
    if w is WhenStrategy.LINEAR:
        return x
    if w is WhenStrategy.SLOW_LINEAR:
        return x / 2 if x <= 0.5 else 1.5 * x - 0.5
    if w is WhenStrategy.FAST_LINEAR:
        return 1.5 * x if x <= 0.5 else min(1.0, x / 2 + 0.5)
    return 0.0


@dataclass
class ControllerState:
    subscribed: set[int] = field(default_factory=set)
    acked: set[int] = field(default_factory=set)
    pending_pushes: set[int] = field(default_factory=set)
    entry_time: dict[int, float] = field(default_factory=dict)
    last_position: dict[int, tuple[tuple[float, float], float]] = field(default_factory=dict)
    last_neighbors: dict[int, tuple[frozenset, float]] = field(default_factory=dict)
    ever_subscribed: set[int] = field(default_factory=set)
    content_id: int | None = None
    anomalies: list[str] = field(default_factory=list)

    @property
    def infected_estimate(self) -> set[int]:
        return self.acked | self.pending_pushes

    def candidates(self) -> list[int]:
        return sorted(self.subscribed - self.acked - self.pending_pushes)

    def begin_message(self, content_id: int | None, seeded=()) -> None:
        self.content_id = content_id
        self.acked = set(seeded)
        self.pending_pushes = set()

    def handle_control(self, msg: Message, t: float) -> None:
        n = msg.node
        if msg.kind is MsgKind.ENTER:
            self.subscribed.add(n)
            self.ever_subscribed.add(n)
            self.entry_time[n] = msg.created
        elif msg.kind is MsgKind.LEAVE:
            self.subscribed.discard(n)
            self.acked.discard(n)
            self.pending_pushes.discard(n)
            self.entry_time.pop(n, None)
            self.last_position.pop(n, None)
            self.last_neighbors.pop(n, None)
        elif msg.kind is MsgKind.ACK:
            if n not in self.ever_subscribed:
                self.anomalies.append(f"t={t}: ACK from never-subscribed node {n}")
                log.warning("ACK from never-subscribed node %s ignored", n)
            elif msg.about == self.content_id and n in self.subscribed:
                self.acked.add(n)
                self.pending_pushes.discard(n)
        elif msg.kind is MsgKind.GPS_REPORT:
            if n in self.subscribed and msg.payload is not None:
                self.last_position[n] = (tuple(msg.payload), t)
        elif msg.kind is MsgKind.NEIGHBOR_REPORT:
            if n in self.subscribed:
                self.last_neighbors[n] = (frozenset(msg.payload), t)


def copies_needed(state: ControllerState, w: WhenStrategy, x: float, first_decision: bool = False) -> int:
    """Minimal number of extra copies to reach the objective at ``x``."""
    if w.initial_copies is not None:
        return min(w.initial_copies, len(state.candidates())) if first_decision else 0
    n_sub = len(state.subscribed)
    # tolerance keeps exact products such as 0.5 * 100 from rounding up
    target = math.ceil(objective_value(w, x) * n_sub - 1e-9)
    have = len(state.infected_estimate & state.subscribed)
    return max(0, target - have)


# -- whom strategies -----------------------------------------------------------

def side_potential(x: float, y: float, bounds) -> float:
    """Potential from the four area sides, each acting like one infected node at perpendicular distance."""
    total = 0.0
    for d in (x - bounds.xmin, bounds.xmax - x, y - bounds.ymin, bounds.ymax - y):
        total += math.inf if d <= 0 else 1.0 / d
    return total


def potentials(cand_xy: np.ndarray, infected_xy: np.ndarray, bounds) -> np.ndarray:
    """Coulomb potential ``sum 1/d`` from infected positions plus side terms."""
    cand_xy = np.asarray(cand_xy, dtype=float).reshape(-1, 2)
    infected_xy = np.asarray(infected_xy, dtype=float).reshape(-1, 2)
    out = np.array([side_potential(x, y, bounds) for x, y in cand_xy])
    if len(infected_xy) and len(cand_xy):
        d = np.hypot(cand_xy[:, None, 0] - infected_xy[None, :, 0], cand_xy[:, None, 1] - infected_xy[None, :, 1])
        with np.errstate(divide="ignore"):
            out = out + (1.0 / d).sum(axis=1)
    return out


def _by_density(state: ControllerState, cands: list[int], bounds, max_depth: int) -> list[int]:
    located = sorted(n for n in state.subscribed if n in state.last_position)
    cand_set = set(cands)
    order: list[int] = []
    if located:
        pts = np.array([state.last_position[n][0] for n in located])
        tree = QuadTree(pts, bounds, max_depth)
        for leaf in tree.leaves_by_density():
            order.extend(sorted(located[i] for i in leaf.members if located[i] in cand_set))
    seen = set(order)
    return order + [n for n in cands if n not in seen]


def _by_potential(state: ControllerState, cands: list[int], bounds) -> list[int]:
    located = [n for n in cands if n in state.last_position]
    infected = [n for n in sorted(state.infected_estimate) if n in state.last_position]
    order: list[int] = []
    if located:
        pot = potentials([state.last_position[n][0] for n in located],
                         [state.last_position[n][0] for n in infected], bounds)
        order = [n for _, n in sorted(zip(pot.tolist(), located))]
    seen = set(order)
    return order + [n for n in cands if n not in seen]


def _by_components(state: ControllerState, cands: list[int], k: int, rng: np.random.Generator) -> list[int]:
    sub = sorted(state.subscribed)
    sub_set = set(sub)
    edges = set()
    for u, (nbrs, _) in state.last_neighbors.items():
        if u not in sub_set:
            continue
        for v in nbrs:
            if v in sub_set and v != u:
                edges.add((min(u, v), max(u, v)))
    comps = components_of(sub, edges)
    infected = state.infected_estimate
    cand_set = set(cands)
    uninf = [[n for n in c if n in cand_set] for c in comps]
    has_inf = [any(n in infected for n in c) for c in comps]
    targets: list[int] = []
    while len(targets) < k:
        pure = [i for i in range(len(comps)) if not has_inf[i] and uninf[i]]
        if pure:
            i = min(pure, key=lambda j: (-len(comps[j]), comps[j][0]))
        else:
            live = [j for j in range(len(comps)) if uninf[j]]
            if not live:
                break
            i = min(live, key=lambda j: (-len(uninf[j]), comps[j][0]))
        pick = uninf[i].pop(int(rng.integers(len(uninf[i]))))
        has_inf[i] = True
        targets.append(pick)
    return targets


def select_targets(state: ControllerState, whom: WhomStrategy, k: int, t: float,
                   rng: np.random.Generator, bounds=None, max_depth: int = DEFAULT_MAX_DEPTH) -> list[int]:
    """Choose up to ``k`` distinct subscribed nodes that are neither acked nor being pushed to."""
    cands = state.candidates()
    k = min(k, len(cands))
    if k <= 0:
        return []
    if whom.needs_positions and bounds is None:
        raise ConfigError(f"{whom.value} needs area bounds and position reports")
    if whom is WhomStrategy.RANDOM:
        picked = rng.choice(len(cands), size=k, replace=False)
        return [cands[i] for i in picked]
    if whom is WhomStrategy.ENTRY_OLDEST:
        return sorted(cands, key=lambda n: (state.entry_time[n], n))[:k]
    if whom is WhomStrategy.ENTRY_NEWEST:
        return sorted(cands, key=lambda n: (-state.entry_time[n], n))[:k]
    if whom is WhomStrategy.ENTRY_AVERAGE:
        mean = float(np.mean([state.entry_time[n] for n in state.subscribed]))
        return sorted(cands, key=lambda n: (abs(state.entry_time[n] - mean), n))[:k]
    if whom is WhomStrategy.GPS_DENSITY:
        return _by_density(state, cands, bounds, max_depth)[:k]
    if whom is WhomStrategy.GPS_POTENTIAL:
        return _by_potential(state, cands, bounds)[:k]
    if whom is WhomStrategy.CONNECTED_COMPONENTS:
        return _by_components(state, cands, k, rng)
    raise ConfigError(f"unknown whom strategy {whom}")


# -- runtime controllers ---------------------------------------------------------

@dataclass
class PushStats:
    pushes: int = 0
    panic_pushes: int = 0
    initial_pushes: int = 0
    panic_start_subscribed: frozenset = frozenset()
    dominating_set_size: int | None = None


class BaseController:
    """Bookkeeping shared by every controller: state updates and push tracking."""

    push_on_enter = False

    def __init__(self, sim: Simulator, rng: np.random.Generator | None = None):
        self.sim = sim
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.state = ControllerState()
        self.content: Message | None = None
        self.panic = False
        self.stats: dict[int, PushStats] = {}

    def push_duration(self, msg: Message) -> float:
        return msg.size / self.sim.links.infra_down_rate

    def push(self, node: int, panic: bool = False) -> Transfer | None:
        if node in self.sim.downlinks:
            return None
        tr = self.sim.begin_infra_push(node)
        if tr is None:
            return None
        self.state.pending_pushes.add(node)
        st = self.stats[self.content.id]
        st.pushes += 1
        st.panic_pushes += bool(panic)
        return tr

    def on_content(self, msg: Message, seeds=()) -> None:
        self.content = msg
        self.panic = False
        self.state.begin_message(msg.id, seeds)
        self.stats[msg.id] = PushStats()

    def on_expire(self, msg: Message) -> None:
        if self.content is msg:
            self.content = None
            self.state.begin_message(None)

    def handle_control(self, msg: Message, t: float) -> None:
        self.state.handle_control(msg, t)
        if msg.kind is MsgKind.ENTER and self.content is not None:
            self.on_subscribe(msg.node, t)

    def on_subscribe(self, node: int, t: float) -> None:
        if (self.panic or self.push_on_enter) and node in self.state.candidates():
            self.push(node, panic=self.panic)

    def push_ended(self, tr: Transfer, t: float) -> None:
        if self.content is None or tr.message is not self.content:
            return
        if tr.status is Status.COMPLETED:
            self.state.pending_pushes.discard(tr.dst)
            if tr.dst in self.state.subscribed:
                self.state.acked.add(tr.dst)
        elif tr.status is Status.FAILED:
            self.state.pending_pushes.discard(tr.dst)

    def schedule_panic(self, msg: Message) -> None:
        self.sim.schedule(msg.expires - self.push_duration(msg), EventKind.PANIC, (msg.id,), self._panic, msg)

    def _panic(self, msg: Message) -> None:
        if self.content is not msg:
            return
        self.panic = True
        self.stats[msg.id].panic_start_subscribed = frozenset(self.state.subscribed)
        for n in self.state.candidates():
            self.push(n, panic=True)


class PushAndTrack(BaseController):
    def __init__(self, sim: Simulator, when: WhenStrategy, whom: WhomStrategy, rng=None,
                 delta_t: float = 20.0, first_decision: float = 1.0, bounds=None,
                 max_depth: int = DEFAULT_MAX_DEPTH):
        super().__init__(sim, rng)
        if whom.needs_positions and not sim.gps_reports:
            raise ConfigError(f"{whom.value} requires GPS reports")
        if whom.needs_neighbors and not sim.neighbor_reports:
            raise ConfigError(f"{whom.value} requires neighbor reports")
        self.when, self.whom = when, whom
        self.delta_t = delta_t
        self.first_decision = first_decision
        self.bounds = bounds
        self.max_depth = max_depth

    def on_content(self, msg: Message, seeds=()) -> None:
        super().on_content(msg, seeds)
        self.sim.schedule(msg.created + self.first_decision, EventKind.TICK, (msg.id,), self.tick, msg, True)
        self.schedule_panic(msg)

    def tick(self, msg: Message, first: bool = False) -> list[int]:
        t = self.sim.now
        panic_start = msg.expires - self.push_duration(msg)
        if self.content is not msg or t >= panic_start:
            return []
        x = (t - msg.created) / (msg.expires - msg.created)
        n = copies_needed(self.state, self.when, x, first_decision=first)
        targets = select_targets(self.state, self.whom, n, t, self.rng, self.bounds, self.max_depth)
        for node in targets:
            self.push(node)
        nxt = t + self.delta_t
        if nxt < panic_start:
            self.sim.schedule(nxt, EventKind.TICK, (msg.id,), self.tick, msg, False)
        return targets


class OracleController(BaseController):
    """Push once to a dominating set of the message's reachability digraph, then wait for panic."""

    def __init__(self, sim: Simulator, contacts, rng=None):
        super().__init__(sim, rng)
        self.contacts = contacts

    def on_content(self, msg: Message, seeds=()) -> None:
        super().on_content(msg, seeds)
        ds = oracle_initial_pushes(self.contacts, msg.created, msg.expires)
        st = self.stats[msg.id]
        st.dominating_set_size = len(ds)
        for n in sorted(ds & self.state.subscribed):
            if self.push(n):
                st.initial_pushes += 1
        self.schedule_panic(msg)


class InfraOnlyController(BaseController):
    """Reference: push to every subscriber at creation and to every newcomer."""

    push_on_enter = True

    def on_content(self, msg: Message, seeds=()) -> None:
        super().on_content(msg, seeds)
        for n in self.state.candidates():
            self.push(n)


class FloatingController(BaseController):
    """Push to a newcomer that still lacks the content ``tolerance`` seconds after entering.

    ``tolerance=None`` disables pushes entirely (no-feedback baseline).
    """

    def __init__(self, sim: Simulator, tolerance: float | None, rng=None):
        super().__init__(sim, rng)
        self.tolerance = tolerance

    def on_subscribe(self, node: int, t: float) -> None:
        if self.tolerance is None:
            return
        when = max(t, self.state.entry_time[node] + self.tolerance)
        self.sim.schedule(when, EventKind.DEADLINE, (node,), self._deadline, node)

    def _deadline(self, node: int) -> None:
        if self.content is not None and node in self.state.candidates():
            self.push(node)
