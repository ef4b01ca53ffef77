"""Experiment drivers: periodic flooding, floating data, and their infrastructure-only references."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .contacts import ContactTrace
from .controller import (BaseController, ConfigError, FloatingController, InfraOnlyController,
                         OracleController, PushAndTrack, WhenStrategy, WhomStrategy)
from .engine import (CONTENT_SIZE, CONTROL_SIZE, EventKind, LinkSpec, Message, MsgKind,
                     Simulator, Status)
from .metrics import FloatingNodeRecord, MessageRecord, RunReport, infection_series, offload_ratio
from .mobility import MobilityTrace
from .quadtree import DEFAULT_MAX_DEPTH


class Mode(str, Enum):
    PUSH_AND_TRACK = "pnt"
    ORACLE = "oracle"
    INFRA_ONLY = "infra-only"
    NO_FEEDBACK = "no-feedback"


@dataclass(frozen=True)
class PeriodicConfig:
    period: float = 60.0
    size: int = CONTENT_SIZE
    when: WhenStrategy = WhenStrategy.LINEAR
    whom: WhomStrategy = WhomStrategy.RANDOM
    mode: Mode = Mode.PUSH_AND_TRACK
    replication: int = 0
    phase_shift: float | None = None  # default: replication * period / 10
    delta_t: float = 20.0
    first_decision: float = 1.0
    links: LinkSpec = field(default_factory=LinkSpec)
    control_size: int = CONTROL_SIZE
    report_interval: float = 60.0
    max_depth: int = DEFAULT_MAX_DEPTH

    @property
    def offset(self) -> float:
        if self.phase_shift is not None:
            return self.phase_shift
        return self.replication * self.period / 10

    @property
    def push_time(self) -> float:
        return self.size / self.links.infra_down_rate

    def validate(self) -> None:
        if self.mode not in (Mode.PUSH_AND_TRACK, Mode.ORACLE, Mode.INFRA_ONLY):
            raise ConfigError(f"mode {self.mode.value} is not a periodic mode")
        if not self.period > self.push_time:
            raise ConfigError(f"period {self.period} s must exceed push time {self.push_time} s")
        if self.mode is Mode.PUSH_AND_TRACK and not self.delta_t > self.push_time:
            raise ConfigError(f"delta_t {self.delta_t} s must exceed push time {self.push_time} s")
        if self.first_decision < 0 or self.offset < 0:
            raise ConfigError("first_decision and phase shift must be >= 0")

    def echo(self) -> dict:
        d = asdict(self)
        d.update(when=self.when.value, whom=self.whom.value, mode=self.mode.value, offset=self.offset,
                 scenario="periodic")
        return d


@dataclass(frozen=True)
class FloatingConfig:
    tolerance: float | None = 60.0  # user delay-tolerance U; None disables pushes
    size: int = CONTENT_SIZE
    mode: Mode = Mode.PUSH_AND_TRACK
    links: LinkSpec = field(default_factory=LinkSpec)
    control_size: int = CONTROL_SIZE

    def validate(self) -> None:
        if self.mode is Mode.ORACLE:
            raise ConfigError("the oracle only applies to periodic flooding")
        if self.tolerance is not None and self.tolerance < 0:
            raise ConfigError("tolerance must be >= 0")

    def echo(self) -> dict:
        d = asdict(self)
        d.update(mode=self.mode.value, scenario="floating")
        return d


def controller_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1]))


def replication_seed(base_seed: int, replication: int) -> int:
    """Seed of replication ``r``: first 63 bits drawn from SeedSequence([base_seed, r])."""
    state = np.random.SeedSequence([int(base_seed), int(replication)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


class _Recorder:
    """Ground-truth observer: presence changes, deliveries, ENTER receipt times."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.events: list[tuple[float, str, int]] = []
        self.enter_known: dict[int, float] = {}
        self.infected_at: dict[int, tuple[float, str]] = {}
        self.counts: Counter = Counter()

    def on_enter(self, node, t):
        self.events.append((t, "enter", node))
        if node in self.sim.holders:  # floating seeds hold the content on arrival
            self.events.append((t, "deliver", node))

    def on_leave(self, node, t):
        self.events.append((t, "leave", node))

    def on_deliver(self, node, msg, via, t):
        self.events.append((t, "deliver", node))
        self.infected_at.setdefault(node, (t, via.value))

    def on_transfer_end(self, tr):
        self.counts[f"{tr.medium.value}:{tr.status.value}"] += 1
        if tr.message.kind is MsgKind.ENTER and tr.status is Status.COMPLETED:
            self.enter_known[tr.src] = tr.end


def _make_sim(trace: MobilityTrace | None, links: LinkSpec, control_size: int, adhoc: bool,
              gps: bool = False, neighbors: bool = False, report_interval: float = 60.0) -> Simulator:
    if gps and trace is None:
        raise ConfigError("GPS-based strategies need a waypoint trace, not bare contacts")
    pos = (lambda n, t: trace.position_at(n, t)) if trace is not None else None
    return Simulator(links, control_size, adhoc_enabled=adhoc, report_interval=report_interval,
                     gps_reports=gps, neighbor_reports=neighbors, position_fn=pos)


def _finish(report: RunReport, sim: Simulator, rec: _Recorder, controller: BaseController) -> RunReport:
    report.infra_load = sim.infra_load
    report.adhoc_load = sim.adhoc_load
    report.control_load = sim.infra_control_load
    report.content_infra_load = sim.infra_content_load
    report.transfer_counts = dict(sorted(rec.counts.items()))
    report.anomalies = list(controller.state.anomalies)
    return report


def message_times(duration: float, period: float, offset: float) -> list[tuple[float, float]]:
    """Back-to-back lifetimes ``[offset + k T, offset + (k+1) T]`` that fit in the trace."""
    out = []
    k = 0
    while offset + (k + 1) * period <= duration + 1e-9:
        out.append((offset + k * period, offset + (k + 1) * period))
        k += 1
    return out


def run_periodic(trace: MobilityTrace | None, contacts: ContactTrace, cfg: PeriodicConfig, seed: int,
                 reference_load: float | None = None, with_reference: bool = True,
                 probe: Callable[[Message, Simulator], None] | None = None) -> RunReport:
    """Issue messages back to back over the trace and control each one with ``cfg``.

    Unless ``reference_load`` is given (or ``with_reference`` is False) the
    infrastructure-only run with the same message schedule is simulated too, and
    the report carries the resulting offload ratio. ``probe(msg, sim)`` runs at
    each expiry before the content is dropped.
    """
    cfg.validate()
    gps = cfg.mode is Mode.PUSH_AND_TRACK and cfg.whom.needs_positions
    nbr = cfg.mode is Mode.PUSH_AND_TRACK and cfg.whom.needs_neighbors
    sim = _make_sim(trace, cfg.links, cfg.control_size, cfg.mode is not Mode.INFRA_ONLY,
                    gps, nbr, cfg.report_interval)
    rng = controller_seed(seed)
    if cfg.mode is Mode.PUSH_AND_TRACK:
        ctl: BaseController = PushAndTrack(sim, cfg.when, cfg.whom, rng, cfg.delta_t, cfg.first_decision,
                                           trace.bounds if trace is not None else None, cfg.max_depth)
    elif cfg.mode is Mode.ORACLE:
        ctl = OracleController(sim, contacts, rng)
    else:
        ctl = InfraOnlyController(sim, rng)
    rec = _Recorder(sim)
    sim.controller, sim.observer = ctl, rec
    sim.load_schedule(contacts.presence, contacts.contacts)

    report = RunReport(config={**cfg.echo(), "seed": int(seed), "nodes": len(contacts.presence),
                               "duration": contacts.duration})
    live: dict[int, dict] = {}

    def create(mid: int, created: float, expires: float) -> None:
        msg = Message(mid, MsgKind.CONTENT, cfg.size, created, expires)
        live[mid] = {"msg": msg, "present": set(sim.present), "ev_start": len(rec.events)}
        sim.create_content(msg)
        ctl.on_content(msg)
        sim.schedule(expires, EventKind.MESSAGE_EXPIRE, (mid,), expire, mid)

    def expire(mid: int) -> None:
        info = live.pop(mid)
        msg = info["msg"]
        t = sim.now
        present = set(sim.present)
        subscribed = {n for n in present if rec.enter_known.get(n, math.inf) <= t}
        got = subscribed & sim.holders
        late = subscribed - got
        panic_start = msg.expires - cfg.push_time
        # entered the controller's view before the panic zone, so a push could still land
        servable = {n for n in subscribed if rec.enter_known[n] <= panic_start}
        st = ctl.stats[mid]
        report.messages.append(MessageRecord(
            msg_id=mid, created=msg.created, expires=msg.expires,
            delivery_ratio=len(got) / len(subscribed) if subscribed else 1.0,
            present_at_expiry=len(subscribed), delivered=len(got), late_count=len(late),
            missed_count=len(late & servable), pushes=st.pushes, panic_pushes=st.panic_pushes,
            infra_bytes=0.0, adhoc_bytes=0.0, dominating_set_size=st.dominating_set_size,
            unservable_count=len(late - servable)))
        evs = rec.events[info["ev_start"]:]
        for t, inf, sub in infection_series(evs, info["present"], (), msg.created):
            report.infection_series.append([mid, t, inf, sub])
        if probe is not None:
            probe(msg, sim)
        sim.expire_content()
        ctl.on_expire(msg)

    for mid, (c, e) in enumerate(message_times(contacts.duration, cfg.period, cfg.offset)):
        sim.schedule(c, EventKind.MESSAGE_CREATE, (mid,), create, mid, c, e)
    sim.run()

    for m in report.messages:
        m.infra_bytes = sim.content_infra_bytes.get(m.msg_id, 0.0)
        m.adhoc_bytes = sim.content_adhoc_bytes.get(m.msg_id, 0.0)
    _finish(report, sim, rec, ctl)
    if cfg.mode is Mode.INFRA_ONLY:
        reference_load = report.infra_load
    elif reference_load is None and with_reference:
        reference_load = run_reference(trace, contacts, cfg, seed).infra_load
    if reference_load is not None:
        report.reference_infra_load = reference_load
        report.offload_ratio = offload_ratio(report.infra_load, reference_load) if reference_load > 0 else None
    return report


def run_floating(trace: MobilityTrace | None, contacts: ContactTrace, cfg: FloatingConfig, seed: int,
                 reference_load: float | None = None, with_reference: bool = True) -> RunReport:
    """One content item for the whole run, held by every node present at t=0.

    Newcomers that have not received it ``tolerance`` seconds after entering
    get an infrastructure push.
    """
    cfg.validate()
    sim = _make_sim(trace, cfg.links, cfg.control_size, cfg.mode is not Mode.INFRA_ONLY)
    rng = controller_seed(seed)
    if cfg.mode is Mode.INFRA_ONLY:
        ctl: BaseController = InfraOnlyController(sim, rng)
    else:
        tol = None if cfg.mode is Mode.NO_FEEDBACK else cfg.tolerance
        ctl = FloatingController(sim, tol, rng)
    rec = _Recorder(sim)
    sim.controller, sim.observer = ctl, rec
    sim.load_schedule(contacts.presence, contacts.contacts)
    seeds = {n for n, (s, _) in contacts.presence.items() if s <= 0.0}
    msg = Message(0, MsgKind.CONTENT, cfg.size, 0.0, contacts.duration)

    def create() -> None:
        sim.create_content(msg, seeds)
        ctl.on_content(msg, seeds)

    sim.schedule(0.0, EventKind.MESSAGE_CREATE, (0,), create)
    sim.run()

    report = RunReport(config={**cfg.echo(), "seed": int(seed), "nodes": len(contacts.presence),
                               "duration": contacts.duration})
    tol = cfg.tolerance if cfg.mode is Mode.PUSH_AND_TRACK else None
    for n in sorted(contacts.presence):
        s, e = contacts.presence[n]
        initial = n in seeds
        got = rec.infected_at.get(n)
        t_inf, via = (s, "initial") if initial else (got if got else (None, None))
        within = None
        if tol is not None and not initial:
            # the deadline cannot precede the controller hearing the ENTER
            deadline = max(s + tol, rec.enter_known.get(n, math.inf))
            within = t_inf is not None and t_inf <= deadline + cfg.size / cfg.links.infra_down_rate + 1e-9
        report.floating_nodes.append(FloatingNodeRecord(n, s, e, initial, t_inf, via, t_inf is not None, within))
    for t, inf, sub in infection_series(rec.events, (), seeds, 0.0):
        report.infection_series.append([0, t, inf, sub])
    report.messages.append(MessageRecord(
        msg_id=0, created=0.0, expires=contacts.duration,
        delivery_ratio=report.floating_summary()["delivery_ratio"] or 0.0,
        present_at_expiry=0, delivered=sum(r.delivered for r in report.floating_nodes if not r.initial),
        late_count=sum(1 for r in report.floating_nodes if not r.initial and not r.delivered),
        missed_count=0, pushes=ctl.stats[0].pushes, panic_pushes=0,
        infra_bytes=sim.content_infra_bytes.get(0, 0.0), adhoc_bytes=sim.content_adhoc_bytes.get(0, 0.0)))
    _finish(report, sim, rec, ctl)
    if cfg.mode is Mode.INFRA_ONLY:
        reference_load = report.infra_load
    elif reference_load is None and with_reference:
        reference_load = run_reference(trace, contacts, cfg, seed).infra_load
    if reference_load is not None:
        report.reference_infra_load = reference_load
        report.offload_ratio = offload_ratio(report.infra_load, reference_load) if reference_load > 0 else None
    return report


def run_reference(trace: MobilityTrace | None, contacts: ContactTrace, cfg, seed: int) -> RunReport:
    """Infrastructure-only counterpart of a periodic or floating configuration."""
    if isinstance(cfg, PeriodicConfig):
        return run_periodic(trace, contacts, replace(cfg, mode=Mode.INFRA_ONLY), seed)
    if isinstance(cfg, FloatingConfig):
        return run_floating(trace, contacts, replace(cfg, mode=Mode.INFRA_ONLY), seed)
    raise TypeError(f"unsupported config {type(cfg).__name__}")
