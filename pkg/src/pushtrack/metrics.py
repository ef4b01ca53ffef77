"""Run reports: loads, offload ratio, infection series, per-message and per-node records."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import IO

MESSAGES_HEADER = ["msg_id", "created_s", "expires_s", "delivery_ratio", "late_count",
                   "pushes", "panic_pushes", "infra_bytes", "adhoc_bytes"]
SERIES_HEADER = ["msg_id", "time_s", "infected", "subscribed", "ratio"]
FLOATING_HEADER = ["node_id", "enter_s", "leave_s", "initial", "infected_s", "via",
                   "delivered", "within_tolerance"]


def offload_ratio(load: float, reference_load: float) -> float:
    """``1 - L / L_ref``; negative when the run used more infrastructure than the reference."""
    if reference_load == 0:
        raise ZeroDivisionError("reference infrastructure load is zero")
    return 1.0 - load / reference_load


def infection_series(events, present=(), infected=(), start: float = 0.0) -> list[tuple[float, int, int]]:
    """Step series of ``(time, infected_present, present)``.

    ``events`` are ``(t, kind, node)`` with kind ``enter``, ``leave`` or
    ``deliver``, in time order. A point is emitted at ``start`` and after each
    instant where the pair changed; simultaneous events collapse into the
    value after the last of them (right-continuous).
    """
    present = set(present)
    infected = set(infected) & present
    out = [(start, len(infected), len(present))]
    evs = list(events)
    for i, (t, kind, node) in enumerate(evs):
        if kind == "enter":
            present.add(node)
        elif kind == "leave":
            present.discard(node)
            infected.discard(node)
        elif kind == "deliver":
            if node in present:
                infected.add(node)
        else:
            raise ValueError(f"unknown event kind {kind!r}")
        if i + 1 < len(evs) and evs[i + 1][0] == t:
            continue
        point = (t, len(infected), len(present))
        if point[1:] != out[-1][1:]:
            if out[-1][0] == t:
                out[-1] = point
            else:
                out.append(point)
    return out


@dataclass
class MessageRecord:
    msg_id: int
    created: float
    expires: float
    delivery_ratio: float
    present_at_expiry: int
    delivered: int
    late_count: int
    missed_count: int
    pushes: int
    panic_pushes: int
    infra_bytes: float
    adhoc_bytes: float
    dominating_set_size: int | None = None
    unservable_count: int = 0


@dataclass
class FloatingNodeRecord:
    node: int
    enter: float
    leave: float
    initial: bool
    infected_at: float | None
    via: str | None
    delivered: bool
    within_tolerance: bool | None


@dataclass
class RunReport:
    config: dict
    infra_load: float = 0.0
    adhoc_load: float = 0.0
    control_load: float = 0.0
    content_infra_load: float = 0.0
    reference_infra_load: float | None = None
    offload_ratio: float | None = None
    messages: list[MessageRecord] = field(default_factory=list)
    infection_series: list[list] = field(default_factory=list)  # [msg_id, t, infected, subscribed]
    floating_nodes: list[FloatingNodeRecord] = field(default_factory=list)
    transfer_counts: dict[str, int] = field(default_factory=dict)
    anomalies: list[str] = field(default_factory=list)

    # -- summaries ---------------------------------------------------------
    def floating_summary(self) -> dict:
        entrants = [r for r in self.floating_nodes if not r.initial]
        if not entrants:
            return {"entrants": 0, "delivery_ratio": None, "mean_time_to_infection": None}
        got = [r for r in entrants if r.delivered]
        delays = [r.infected_at - r.enter for r in got]
        return {
            "entrants": len(entrants),
            "delivery_ratio": len(got) / len(entrants),
            "mean_time_to_infection": sum(delays) / len(delays) if delays else None,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        d["messages"] = [MessageRecord(**m) for m in d.get("messages", [])]
        d["floating_nodes"] = [FloatingNodeRecord(**r) for r in d.get("floating_nodes", [])]
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_csv(path: str, header: list[str], rows) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    data = buf.getvalue().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def export(report: RunReport, sink: str | IO[str], format: str = "json") -> int:
    """Write ``report``; returns bytes written.

    ``json`` writes one document to ``sink`` (a path or text stream).
    ``csv-bundle`` treats ``sink`` as a directory and writes ``messages.csv``,
    ``infection_series.csv`` and ``floating_nodes.csv``.
    """
    if format == "json":
        data = report.to_json() + "\n"
        if isinstance(sink, str):
            with open(sink, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(data)
        else:
            sink.write(data)
        return len(data.encode("utf-8"))
    if format == "csv-bundle":
        if not isinstance(sink, str):
            raise TypeError("csv-bundle needs a directory path")
        os.makedirs(sink, exist_ok=True)
        n = _write_csv(os.path.join(sink, "messages.csv"), MESSAGES_HEADER, (
            (m.msg_id, m.created, m.expires, m.delivery_ratio, m.late_count, m.pushes,
             m.panic_pushes, m.infra_bytes, m.adhoc_bytes) for m in report.messages))
        n += _write_csv(os.path.join(sink, "infection_series.csv"), SERIES_HEADER, (
            (mid, t, inf, sub, (inf / sub) if sub else 0.0) for mid, t, inf, sub in report.infection_series))
        n += _write_csv(os.path.join(sink, "floating_nodes.csv"), FLOATING_HEADER, (
            (r.node, r.enter, r.leave, r.initial, r.infected_at, r.via, r.delivered, r.within_tolerance)
            for r in report.floating_nodes))
        return n
    raise ValueError(f"unknown export format {format!r}")


def load_report(path: str) -> RunReport:
    with open(path, encoding="utf-8") as fh:
        return RunReport.from_json(fh.read())


def transfer_totals(log) -> dict[str, float]:
    """Re-sum a transfer log by medium and payload class (cross-check for the engine's counters)."""
    out = {"adhoc": 0.0, "infra_content": 0.0, "infra_control": 0.0}
    for tr in log:
        if tr.medium.value == "adhoc":
            out["adhoc"] += tr.bytes_moved
        elif tr.message.kind.value == "content":
            out["infra_content"] += tr.bytes_moved
        else:
            out["infra_control"] += tr.bytes_moved
    return out
