"""Node mobility: waypoint traces, a synthetic generator and participation subsampling.

A trace maps each node to a time-ordered array of ``(t, x, y)`` rows. A node is
present from its first waypoint to its last one and moves linearly in between.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

BOUNDS_PREFIX = "# bounds"
WAYPOINT_HEADER = ["node_id", "time_s", "x_m", "y_m"]


class TraceError(ValueError):
    """Raised for malformed or inconsistent mobility input."""


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise TraceError(f"degenerate bounds {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass
class MobilityTrace:
    bounds: Bounds
    duration: float
    trajectories: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for node, wp in self.trajectories.items():
            _check_trajectory(node, wp, self.bounds)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.trajectories)

    def presence(self, node: int) -> tuple[float, float]:
        wp = self.trajectories[node]
        return float(wp[0, 0]), float(wp[-1, 0])

    def presence_map(self) -> dict[int, tuple[float, float]]:
        return {n: self.presence(n) for n in self.nodes}

    def present_at(self, t: float) -> list[int]:
        return [n for n in self.nodes if self.trajectories[n][0, 0] <= t <= self.trajectories[n][-1, 0]]

    def position_at(self, node: int, t: float) -> tuple[float, float] | None:
        return position_at(self, node, t)

    def __len__(self) -> int:
        return len(self.trajectories)


def _check_trajectory(node: int, wp: np.ndarray, bounds: Bounds) -> None:
    if wp.ndim != 2 or wp.shape[1] != 3 or len(wp) == 0:
        raise TraceError(f"node {node}: trajectory must be a non-empty (k, 3) array")
    if np.any(np.diff(wp[:, 0]) <= 0):
        raise TraceError(f"node {node}: waypoint times must strictly increase")
    inside = ((wp[:, 1] >= bounds.xmin) & (wp[:, 1] <= bounds.xmax)
              & (wp[:, 2] >= bounds.ymin) & (wp[:, 2] <= bounds.ymax))
    if not inside.all():
        raise TraceError(f"node {node}: waypoint outside bounds")


def position_at(trace: MobilityTrace, node: int, t: float) -> tuple[float, float] | None:
    """Linearly interpolated position, or None outside the node's presence interval."""
    try:
        wp = trace.trajectories[node]
    except KeyError:
        raise KeyError(f"unknown node {node}") from None
    if t < wp[0, 0] or t > wp[-1, 0]:
        return None
    x = float(np.interp(t, wp[:, 0], wp[:, 1]))
    y = float(np.interp(t, wp[:, 0], wp[:, 2]))
    return x, y


def positions_on_grid(trace: MobilityTrace, times: np.ndarray) -> dict[int, tuple[int, np.ndarray]]:
    """Sample every node on a shared time grid.

    Returns ``node -> (first_index, xy)`` where ``xy[i]`` is the position at
    ``times[first_index + i]``. Nodes not present at any grid time are omitted.
    """
    out = {}
    for node in trace.nodes:
        wp = trace.trajectories[node]
        lo = np.searchsorted(times, wp[0, 0], side="left")
        hi = np.searchsorted(times, wp[-1, 0], side="right")
        if hi <= lo:
            continue
        ts = times[lo:hi]
        xy = np.column_stack([np.interp(ts, wp[:, 0], wp[:, 1]), np.interp(ts, wp[:, 0], wp[:, 2])])
        out[node] = (int(lo), xy)
    return out


# -- CSV ingestion ---------------------------------------------------------

def load_trace(source: IO[str] | IO[bytes] | str, format: str = "waypoint-csv") -> MobilityTrace:
    """Parse a waypoint CSV (``# bounds,...`` line then ``node_id,time_s,x_m,y_m``)."""
    if format != "waypoint-csv":
        raise TraceError(f"unsupported trace format {format!r}")
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return load_trace(fh, format)
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    bounds = None
    header_seen = False
    rows: dict[int, list[tuple[float, float, float]]] = {}
    last_line: dict[int, int] = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.replace(" ", "").startswith("#bounds"):
                parts = line.split(",")
                if len(parts) != 5:
                    raise TraceError(f"line {lineno}: bounds line needs 4 values")
                try:
                    bounds = Bounds(*(float(p) for p in parts[1:]))
                except ValueError as exc:
                    raise TraceError(f"line {lineno}: {exc}") from None
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != WAYPOINT_HEADER:
                raise TraceError(f"line {lineno}: expected header {','.join(WAYPOINT_HEADER)}")
            header_seen = True
            continue
        if len(fields) != 4:
            raise TraceError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            node = int(fields[0])
            t, x, y = (float(f) for f in fields[1:])
        except ValueError:
            raise TraceError(f"line {lineno}: malformed row {line!r}") from None
        if node < 0:
            raise TraceError(f"line {lineno}: negative node id {node}")
        if t < 0:
            raise TraceError(f"line {lineno}: negative time")
        if bounds is None:
            raise TraceError(f"line {lineno}: waypoint before '# bounds' line")
        if not bounds.contains(x, y):
            raise TraceError(f"line {lineno}: node {node} waypoint ({x}, {y}) outside bounds")
        seq = rows.setdefault(node, [])
        if seq and t <= seq[-1][0]:
            raise TraceError(f"line {lineno}: node {node} time {t} not after {seq[-1][0]} (line {last_line[node]})")
        seq.append((t, x, y))
        last_line[node] = lineno
    if not header_seen:
        raise TraceError("missing header line")
    if bounds is None:
        raise TraceError("missing '# bounds,xmin,ymin,xmax,ymax' line")
    trajectories = {n: np.array(r, dtype=float) for n, r in sorted(rows.items())}
    duration = max((wp[-1, 0] for wp in trajectories.values()), default=0.0)
    return MobilityTrace(bounds, float(duration), trajectories)


def dump_trace(trace: MobilityTrace, sink: IO[str]) -> None:
    b = trace.bounds
    sink.write(f"{BOUNDS_PREFIX},{float(b.xmin)!r},{float(b.ymin)!r},{float(b.xmax)!r},{float(b.ymax)!r}\n")
    sink.write(",".join(WAYPOINT_HEADER) + "\n")
    for node in trace.nodes:
        for t, x, y in trace.trajectories[node]:
            sink.write(f"{node},{float(t)!r},{float(x)!r},{float(y)!r}\n")


# -- synthetic generator ---------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    bounds: Bounds = Bounds(0.0, 0.0, 1000.0, 1000.0)
    arrival_rate: float = 0.1
    mean_transit: float = 600.0
    speed_range: tuple[float, float] = (5.0, 15.0)
    waypoint_count_range: tuple[int, int] = (1, 3)
    horizon: float = 3600.0
    initial_nodes: int = 0

    def validate(self) -> None:
        if self.arrival_rate <= 0 or self.mean_transit <= 0:
            raise TraceError("arrival_rate and mean_transit must be > 0")
        if self.horizon < 0:
            raise TraceError("horizon must be >= 0")
        lo, hi = self.speed_range
        if not (0 < lo <= hi <= 50):
            raise TraceError("speed_range must lie within (0, 50] m/s")
        wlo, whi = self.waypoint_count_range
        if not (0 <= wlo <= whi):
            raise TraceError("bad waypoint_count_range")
        if self.initial_nodes < 0:
            raise TraceError("initial_nodes must be >= 0")


def _boundary_point(rng: np.random.Generator, b: Bounds) -> np.ndarray:
    perimeter = 2 * (b.width + b.height)
    s = rng.uniform(0, perimeter)
    if s < b.width:
        return np.array([b.xmin + s, b.ymin])
    s -= b.width
    if s < b.height:
        return np.array([b.xmax, b.ymin + s])
    s -= b.height
    if s < b.width:
        return np.array([b.xmax - s, b.ymax])
    s -= b.width
    return np.array([b.xmin, b.ymax - s])


def _interior_point(rng: np.random.Generator, b: Bounds) -> np.ndarray:
    return np.array([rng.uniform(b.xmin, b.xmax), rng.uniform(b.ymin, b.ymax)])


def _walk(rng: np.random.Generator, cfg: SyntheticConfig, start: float, stop: float,
          origin: np.ndarray) -> np.ndarray:
    """Piecewise-linear walk from ``origin`` between ``start`` and ``stop``.

    Legs visit the drawn number of interior waypoints and then head for a
    boundary exit; if time remains after exiting, the node turns back inward.
    """
    b = cfg.bounds
    n_interior = int(rng.integers(cfg.waypoint_count_range[0], cfg.waypoint_count_range[1] + 1))
    targets = [_interior_point(rng, b) for _ in range(n_interior)] + [_boundary_point(rng, b)]
    rows = [(start, origin[0], origin[1])]
    t, pos = start, origin
    while t < stop:
        if not targets:
            targets = [_interior_point(rng, b)]
        target = targets.pop(0)
        speed = rng.uniform(*cfg.speed_range)
        dist = float(np.hypot(*(target - pos)))
        if dist == 0.0:
            continue
        dt = dist / speed
        if t + dt >= stop:
            frac = (stop - t) / dt
            pos = pos + frac * (target - pos)
            t = stop
        else:
            t, pos = t + dt, target
        if t > rows[-1][0]:
            rows.append((t, pos[0], pos[1]))
    wp = np.array(rows, dtype=float)
    wp[:, 1] = np.clip(wp[:, 1], b.xmin, b.xmax)
    wp[:, 2] = np.clip(wp[:, 2], b.ymin, b.ymax)
    return wp


def generate_synthetic(config: SyntheticConfig, seed: int) -> MobilityTrace:
    """Poisson arrivals, exponential transit times, straight-leg trajectories.

    ``initial_nodes`` nodes are already inside the area at t=0 (at uniform
    interior positions) so that a run does not start from an empty network.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    horizon = float(config.horizon)
    trajectories: dict[int, np.ndarray] = {}
    if horizon == 0:
        return MobilityTrace(config.bounds, 0.0, trajectories)

    starts: list[tuple[float, bool]] = [(0.0, True)] * config.initial_nodes
    t = rng.exponential(1.0 / config.arrival_rate)
    while t < horizon:
        starts.append((float(t), False))
        t += rng.exponential(1.0 / config.arrival_rate)

    node = 0
    for start, initial in starts:
        transit = rng.exponential(config.mean_transit)
        stop = min(start + transit, horizon)
        origin = _interior_point(rng, config.bounds) if initial else _boundary_point(rng, config.bounds)
        if stop <= start:
            continue
        trajectories[node] = _walk(rng, config, start, stop, origin)
        node += 1
    return MobilityTrace(config.bounds, horizon, trajectories)


def subsample(trace: MobilityTrace, p: float, seed: int) -> MobilityTrace:
    """Keep each node independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"participation must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    nodes = trace.nodes
    keep = rng.random(len(nodes)) < p
    kept = {n: trace.trajectories[n] for n, k in zip(nodes, keep) if k}
    return MobilityTrace(trace.bounds, trace.duration, kept)


def trace_from_rows(bounds: Bounds, rows: Iterable[tuple[int, float, float, float]],
                    duration: float | None = None) -> MobilityTrace:
    """Build a trace from ``(node, t, x, y)`` tuples, mostly for tests and demos."""
    per: dict[int, list] = {}
    for node, t, x, y in rows:
        per.setdefault(node, []).append((t, x, y))
    traj = {n: np.array(sorted(r), dtype=float) for n, r in sorted(per.items())}
    if duration is None:
        duration = max((wp[-1, 0] for wp in traj.values()), default=0.0)
    return MobilityTrace(bounds, float(duration), traj)
