"""Discrete-event core: event queue, ad hoc and infrastructure media, transfers.

Transfers are constant-rate byte streams. A transfer that ends early (contact
lost, node left, message expired, or cancelled because the other medium won)
still counts the whole bytes it moved before ending.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Callable

CONTROL_SIZE = 256
CONTENT_SIZE = 1_000_000


class EventKind(IntEnum):
    """Priority of simultaneous events (lower runs first)."""

    TRANSFER_DONE = 0
    MESSAGE_EXPIRE = 1
    CONTACT_DOWN = 2
    NODE_LEAVE = 3
    MESSAGE_CREATE = 4
    NODE_ENTER = 5
    CONTACT_UP = 6
    REPORT = 7
    DEADLINE = 8
    PANIC = 9
    TICK = 10


class MsgKind(str, Enum):
    CONTENT = "content"
    ENTER = "ENTER"
    LEAVE = "LEAVE"
    ACK = "ACK"
    GPS_REPORT = "GPS_REPORT"
    NEIGHBOR_REPORT = "NEIGHBOR_REPORT"


class Medium(str, Enum):
    ADHOC = "adhoc"
    INFRA_DOWN = "infra_down"
    INFRA_UP = "infra_up"


class Status(str, Enum):
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class LinkSpec:
    adhoc_rate: float = 1e6
    infra_down_rate: float = 1e5
    infra_up_rate: float = 1e4

    def __post_init__(self):
        if min(self.adhoc_rate, self.infra_down_rate, self.infra_up_rate) <= 0:
            raise ValueError("link rates must be > 0")


@dataclass(eq=False)
class Message:
    id: int
    kind: MsgKind
    size: int
    created: float
    expires: float = math.inf
    node: int | None = None   # sender of a control message
    about: int | None = None  # content id an ACK refers to
    payload: Any = None


@dataclass(eq=False)
class Transfer:
    id: int
    message: Message
    src: int | None
    dst: int | None
    medium: Medium
    start: float
    rate: float
    status: Status = Status.IN_PROGRESS
    end: float | None = None
    bytes_moved: float = 0.0

    @property
    def bytes_total(self) -> int:
        return self.message.size

    @property
    def done_time(self) -> float:
        return self.start + self.bytes_total / self.rate


class SimulationError(RuntimeError):
    pass


class TransferRejected(SimulationError):
    """A transfer's preconditions do not hold (busy node, duplicate push, ...)."""


class EventQueue:
    """Two merged streams: a presorted static list and a heap of dynamic events.

    Entries order by ``(time, kind, key, seq)``; popping never goes back in time.
    """

    def __init__(self):
        self._heap: list = []
        self._static: list = []
        self._si = 0
        self._seq = itertools.count()
        self.now = -math.inf

    def push(self, time: float, kind: EventKind, key: tuple, fn: Callable, *args) -> None:
        if time < self.now:
            raise SimulationError(f"event at {time} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (time, int(kind), key, next(self._seq), fn, args))

    def load_static(self, events) -> None:
        """``events``: iterable of ``(time, kind, key, fn, args)``."""
        items = [(t, int(k), key, next(self._seq), fn, args) for t, k, key, fn, args in events]
        items.sort(key=lambda e: e[:4])
        self._static = items
        self._si = 0

    def peek_time(self) -> float:
        t = math.inf
        if self._heap:
            t = self._heap[0][0]
        if self._si < len(self._static):
            t = min(t, self._static[self._si][0])
        return t

    def pop(self):
        use_static = self._si < len(self._static) and (
            not self._heap or self._static[self._si][:4] < self._heap[0][:4])
        if use_static:
            item = self._static[self._si]
            self._si += 1
        else:
            item = heapq.heappop(self._heap)
        if item[0] < self.now:
            raise SimulationError("event queue went backwards")
        self.now = item[0]
        return item

    def __len__(self) -> int:
        return len(self._heap) + len(self._static) - self._si


class NullController:
    def handle_control(self, msg: Message, t: float) -> None:
        pass

    def push_ended(self, tr: Transfer, t: float) -> None:
        pass


class NullObserver:
    def on_enter(self, node, t): pass
    def on_leave(self, node, t): pass
    def on_deliver(self, node, msg, via, t): pass
    def on_transfer_end(self, tr): pass


class Simulator:
    """Network state and media for one run.

    At most one content message is active. The controller receives control
    messages when their uplink transfer completes and is told when each of
    its pushes ends. ``observer`` sees ground truth (presence, deliveries).
    """

    def __init__(self, links: LinkSpec = LinkSpec(), control_size: int = CONTROL_SIZE,
                 adhoc_enabled: bool = True, report_interval: float = 60.0,
                 gps_reports: bool = False, neighbor_reports: bool = False,
                 position_fn: Callable[[int, float], Any] | None = None):
        self.links = links
        self.control_size = control_size
        self.adhoc_enabled = adhoc_enabled
        self.report_interval = report_interval
        self.gps_reports = gps_reports
        self.neighbor_reports = neighbor_reports
        self.position_fn = position_fn
        if gps_reports and position_fn is None:
            raise ValueError("GPS reports need node positions (a mobility trace)")

        self.queue = EventQueue()
        self.now = 0.0
        self.controller = NullController()
        self.observer = NullObserver()

        self.present: set[int] = set()
        self.neighbors: dict[int, dict[int, float]] = {}
        self.adhoc_active: dict[int, Transfer] = {}
        self.downlinks: dict[int, Transfer] = {}
        self.uplink_queue: dict[int, deque] = {}
        self.uplink_active: dict[int, Transfer] = {}

        self.content: Message | None = None
        self.holders: set[int] = set()
        self._dirty: set[int] = set()
        self._ids = itertools.count()
        self._msg_ids = itertools.count(1_000_000)

        self.log: list[Transfer] = []
        self.adhoc_load = 0.0
        self.infra_content_load = 0.0
        self.infra_control_load = 0.0
        self.content_infra_bytes: dict[int, float] = {}
        self.content_adhoc_bytes: dict[int, float] = {}

    # -- setup -------------------------------------------------------------

    def load_schedule(self, presence: dict[int, tuple[float, float]], contacts) -> None:
        """Queue ENTER/LEAVE for every node and up/down for every contact."""
        evs = []
        for n, (s, e) in presence.items():
            evs.append((s, EventKind.NODE_ENTER, (n,), self._on_enter, (n,)))
            evs.append((e, EventKind.NODE_LEAVE, (n,), self._on_leave, (n,)))
        for c in contacts:
            evs.append((c.start, EventKind.CONTACT_UP, (c.a, c.b), self._on_contact_up, (c.a, c.b)))
            evs.append((c.end, EventKind.CONTACT_DOWN, (c.a, c.b), self._on_contact_down, (c.a, c.b)))
        self.queue.load_static(evs)

    def schedule(self, time: float, kind: EventKind, key: tuple, fn: Callable, *args) -> None:
        self.queue.push(time, kind, key, fn, *args)

    def run(self, until: float = math.inf) -> None:
        while self.queue and self.queue.peek_time() <= until:
            t, _, _, _, fn, args = self.queue.pop()
            self.now = t
            fn(*args)
            self._flush()
        if until < math.inf:
            self.now = max(self.now, until)

    @property
    def infra_load(self) -> float:
        return self.infra_content_load + self.infra_control_load

    # -- presence and contacts -------------------------------------------

    def _on_enter(self, node: int) -> None:
        self.present.add(node)
        self.neighbors.setdefault(node, {})
        self.observer.on_enter(node, self.now)
        self.send_control(node, MsgKind.ENTER)
        if self.gps_reports:
            self.schedule(self.now, EventKind.REPORT, (node, 0), self._report, node, MsgKind.GPS_REPORT)
        if self.neighbor_reports:
            self.schedule(self.now, EventKind.REPORT, (node, 1), self._report, node, MsgKind.NEIGHBOR_REPORT)

    def _on_leave(self, node: int) -> None:
        if node not in self.present:
            return
        for m in list(self.neighbors.get(node, {})):
            self._on_contact_down(min(node, m), max(node, m))
        tr = self.adhoc_active.get(node)
        if tr is not None:
            self._terminate(tr, Status.FAILED)
        tr = self.downlinks.get(node)
        if tr is not None:
            self._terminate(tr, Status.FAILED)
        tr = self.uplink_active.get(node)
        self.uplink_queue.pop(node, None)
        if tr is not None:
            self._terminate(tr, Status.FAILED)
        self.present.discard(node)
        self.neighbors.pop(node, None)
        self.holders.discard(node)
        # LEAVE reaches the controller instantly and cannot fail
        leave = Message(next(self._msg_ids), MsgKind.LEAVE, self.control_size, self.now, node=node)
        tr = Transfer(next(self._ids), leave, node, None, Medium.INFRA_UP, self.now, math.inf,
                      status=Status.COMPLETED, end=self.now, bytes_moved=float(self.control_size))
        self._account(tr)
        self.observer.on_leave(node, self.now)
        self.controller.handle_control(leave, self.now)

    def _on_contact_up(self, a: int, b: int) -> None:
        if a not in self.present or b not in self.present:
            return
        self.neighbors[a][b] = self.now
        self.neighbors[b][a] = self.now
        self._dirty.update((a, b))

    def _on_contact_down(self, a: int, b: int) -> None:
        na, nb = self.neighbors.get(a), self.neighbors.get(b)
        if na is None or b not in na:
            return
        del na[b]
        del nb[a]
        tr = self.adhoc_active.get(a)
        if tr is not None and {tr.src, tr.dst} == {a, b}:
            self._terminate(tr, Status.FAILED)

    def _report(self, node: int, kind: MsgKind) -> None:
        if node not in self.present:
            return
        if kind is MsgKind.GPS_REPORT:
            payload = self.position_fn(node, self.now)
        else:
            payload = frozenset(self.neighbors.get(node, ()))
        self.send_control(node, kind, payload=payload)
        slot = 0 if kind is MsgKind.GPS_REPORT else 1
        self.schedule(self.now + self.report_interval, EventKind.REPORT, (node, slot), self._report, node, kind)

    # -- uplink (control) ----------------------------------------------------

    def send_control(self, node: int, kind: MsgKind, about: int | None = None, payload=None) -> Message:
        msg = Message(next(self._msg_ids), kind, self.control_size, self.now, node=node, about=about,
                      payload=payload)
        self.uplink_queue.setdefault(node, deque()).append(msg)
        if node not in self.uplink_active:
            self._next_uplink(node)
        return msg

    def _next_uplink(self, node: int) -> None:
        q = self.uplink_queue.get(node)
        if not q:
            return
        msg = q.popleft()
        tr = Transfer(next(self._ids), msg, node, None, Medium.INFRA_UP, self.now, self.links.infra_up_rate)
        self.uplink_active[node] = tr
        self.schedule(tr.done_time, EventKind.TRANSFER_DONE, (tr.id,), self._on_transfer_done, tr)

    # -- content lifecycle ---------------------------------------------------

    def create_content(self, msg: Message, seeds=()) -> None:
        if self.content is not None:
            raise SimulationError("a content message is already active")
        self.content = msg
        self.holders = set(seeds)
        self.content_infra_bytes.setdefault(msg.id, 0.0)
        self.content_adhoc_bytes.setdefault(msg.id, 0.0)
        self._dirty.update(self.holders)

    def expire_content(self) -> None:
        """Abort every transfer of the active content and drop it everywhere."""
        msg = self.content
        if msg is None:
            return
        for tr in sorted({*self.adhoc_active.values(), *self.downlinks.values()}, key=lambda x: x.id):
            if tr.message is msg:
                self._terminate(tr, Status.ABORTED)
        self.content = None
        self.holders = set()

    def begin_adhoc_transfer(self, src: int, dst: int) -> Transfer:
        msg = self.content
        if msg is None or self.now >= msg.expires:
            raise TransferRejected("no active content")
        if dst not in self.neighbors.get(src, {}):
            raise TransferRejected(f"no contact between {src} and {dst}")
        if src in self.adhoc_active or dst in self.adhoc_active:
            raise TransferRejected("ad hoc interface busy")
        if src not in self.holders or dst in self.holders:
            raise TransferRejected("sender lacks content or receiver already has it")
        tr = Transfer(next(self._ids), msg, src, dst, Medium.ADHOC, self.now, self.links.adhoc_rate)
        self.adhoc_active[src] = tr
        self.adhoc_active[dst] = tr
        self.schedule(tr.done_time, EventKind.TRANSFER_DONE, (tr.id,), self._on_transfer_done, tr)
        return tr

    def begin_infra_push(self, dst: int) -> Transfer | None:
        """Start a dedicated downlink push; returns None if ``dst`` already holds the content."""
        msg = self.content
        if msg is None:
            raise TransferRejected("no active content")
        if dst not in self.present:
            raise TransferRejected(f"node {dst} not present")
        if dst in self.downlinks:
            raise TransferRejected(f"push to {dst} already in progress")
        if dst in self.holders:
            return None
        tr = Transfer(next(self._ids), msg, None, dst, Medium.INFRA_DOWN, self.now, self.links.infra_down_rate)
        self.downlinks[dst] = tr
        self.schedule(tr.done_time, EventKind.TRANSFER_DONE, (tr.id,), self._on_transfer_done, tr)
        return tr

    # -- transfer termination ------------------------------------------------

    def _on_transfer_done(self, tr: Transfer) -> None:
        if tr.status is not Status.IN_PROGRESS:
            return
        tr.status = Status.COMPLETED
        tr.end = self.now
        tr.bytes_moved = float(tr.bytes_total)
        self._release(tr)
        self._account(tr)
        if tr.medium is Medium.INFRA_UP:
            self.controller.handle_control(tr.message, self.now)
            self._next_uplink(tr.src)
            return
        self.deliver(tr.dst, tr.message, tr)
        if tr.medium is Medium.INFRA_DOWN:
            self.controller.push_ended(tr, self.now)

    def _terminate(self, tr: Transfer, status: Status) -> None:
        if tr.status is not Status.IN_PROGRESS:
            return
        tr.status = status
        tr.end = self.now
        # whole bytes only, so load totals add up exactly in any grouping
        moved = math.floor(tr.rate * (self.now - tr.start) + 1e-6)
        tr.bytes_moved = float(min(tr.bytes_total, moved))
        self._release(tr)
        self._account(tr)
        if tr.medium is Medium.INFRA_DOWN:
            self.controller.push_ended(tr, self.now)
        elif tr.medium is Medium.INFRA_UP and tr.src in self.present:
            self._next_uplink(tr.src)

    def _release(self, tr: Transfer) -> None:
        if tr.medium is Medium.ADHOC:
            for n in (tr.src, tr.dst):
                if self.adhoc_active.get(n) is tr:
                    del self.adhoc_active[n]
                    self._dirty.add(n)
        elif tr.medium is Medium.INFRA_DOWN:
            if self.downlinks.get(tr.dst) is tr:
                del self.downlinks[tr.dst]
        elif self.uplink_active.get(tr.src) is tr:
            del self.uplink_active[tr.src]

    def _account(self, tr: Transfer) -> None:
        self.log.append(tr)
        b = tr.bytes_moved
        if tr.medium is Medium.ADHOC:
            self.adhoc_load += b
            self.content_adhoc_bytes[tr.message.id] = self.content_adhoc_bytes.get(tr.message.id, 0.0) + b
        elif tr.message.kind is MsgKind.CONTENT:
            self.infra_content_load += b
            self.content_infra_bytes[tr.message.id] = self.content_infra_bytes.get(tr.message.id, 0.0) + b
        else:
            self.infra_control_load += b
        self.observer.on_transfer_end(tr)

    def deliver(self, dst: int, msg: Message, via: Transfer) -> None:
        """``dst`` now holds ``msg``: cancel the other medium, ACK, start forwarding."""
        self.holders.add(dst)
        if via.medium is Medium.ADHOC:
            other = self.downlinks.get(dst)
        else:
            other = self.adhoc_active.get(dst)
            if other is not None and other.dst != dst:
                other = None
        if other is not None and other.message is msg:
            self._terminate(other, Status.ABORTED)
        self.observer.on_deliver(dst, msg, via.medium, self.now)
        self.send_control(dst, MsgKind.ACK, about=msg.id)
        self._dirty.add(dst)

    # -- epidemic forwarding ---------------------------------------------------

    def epidemic_scheduler(self, node: int) -> Transfer | None:
        """If ``node`` holds the content and is idle, serve its longest-connected idle uninfected neighbor."""
        if (not self.adhoc_enabled or self.content is None or node not in self.holders
                or node in self.adhoc_active or self.now >= self.content.expires):
            return None
        best = None
        for m, since in self.neighbors.get(node, {}).items():
            if m in self.holders or m in self.adhoc_active:
                continue
            if best is None or (since, m) < best:
                best = (since, m)
        if best is None:
            return None
        return self.begin_adhoc_transfer(node, best[1])

    def _flush(self) -> None:
        while self._dirty:
            dirty = sorted(self._dirty)
            self._dirty.clear()
            for n in dirty:
                if n not in self.present:
                    continue
                if n in self.holders:
                    self.epidemic_scheduler(n)
                elif n not in self.adhoc_active:
                    for m in sorted(self.neighbors.get(n, ())):
                        if m in self.holders and m not in self.adhoc_active:
                            self.epidemic_scheduler(m)
                            if n in self.adhoc_active:
                                break
