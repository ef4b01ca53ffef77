"""Contact intervals, connectivity snapshots and dataset statistics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

from .mobility import MobilityTrace, positions_on_grid

CONTACT_HEADER = ["node_a", "node_b", "start_s", "end_s"]
DEFAULT_RANGE = 100.0
DEFAULT_STEP = 1.0


class Contact(NamedTuple):
    a: int
    b: int
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


class ContactEvent(NamedTuple):
    time: float
    up: bool
    a: int
    b: int


@dataclass
class ContactTrace:
    """Undirected contacts plus the presence intervals they were derived under.

    ``range`` and ``step`` are None when contacts were loaded from CSV.
    """

    contacts: list[Contact]
    presence: dict[int, tuple[float, float]]
    duration: float
    range: float | None = None
    step: float | None = None
    _arrays: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.contacts = sorted(self.contacts, key=lambda c: (c.start, c.a, c.b, c.end))

    def events(self) -> list[ContactEvent]:
        """Up/down events ordered by time, then pair, then up before down."""
        evs = []
        for c in self.contacts:
            evs.append(ContactEvent(c.start, True, c.a, c.b))
            evs.append(ContactEvent(c.end, False, c.a, c.b))
        evs.sort(key=lambda e: (e.time, e.a, e.b, not e.up))
        return evs

    def by_pair(self) -> dict[tuple[int, int], list[Contact]]:
        out: dict[tuple[int, int], list[Contact]] = {}
        for c in self.contacts:
            out.setdefault((c.a, c.b), []).append(c)
        return out

    def arrays(self):
        if self._arrays is None:
            n = len(self.contacts)
            a = np.fromiter((c.a for c in self.contacts), dtype=np.int64, count=n)
            b = np.fromiter((c.b for c in self.contacts), dtype=np.int64, count=n)
            s = np.fromiter((c.start for c in self.contacts), dtype=float, count=n)
            e = np.fromiter((c.end for c in self.contacts), dtype=float, count=n)
            self._arrays = (a, b, s, e)
        return self._arrays

    def present_at(self, t: float) -> list[int]:
        return sorted(n for n, (s, e) in self.presence.items() if s <= t <= e)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.presence)


def derive_contacts(trace: MobilityTrace, range: float = DEFAULT_RANGE,
                    step: float = DEFAULT_STEP) -> ContactTrace:
    """Sample pairwise distances every ``step`` seconds; runs within ``range`` become contacts.

    A contact spans the first to the last qualifying sample of a run, so runs
    of a single sample (zero length) are dropped.
    """
    if range <= 0 or step <= 0:
        raise ValueError("range and step must be > 0")
    presence = trace.presence_map()
    n_steps = int(math.floor(trace.duration / step + 1e-9)) + 1 if trace.duration > 0 else 0
    times = step * np.arange(n_steps, dtype=float)
    sampled = positions_on_grid(trace, times)

    # bucket samples by grid index
    idx_parts, node_parts, xy_parts = [], [], []
    for node, (lo, xy) in sampled.items():
        idx_parts.append(np.arange(lo, lo + len(xy)))
        node_parts.append(np.full(len(xy), node, dtype=np.int64))
        xy_parts.append(xy)
    contacts: list[Contact] = []
    if not idx_parts:
        return ContactTrace(contacts, presence, trace.duration, range, step)
    idx = np.concatenate(idx_parts)
    nodes = np.concatenate(node_parts)
    xy = np.concatenate(xy_parts)
    order = np.argsort(idx, kind="stable")
    idx, nodes, xy = idx[order], nodes[order], xy[order]
    bounds = np.searchsorted(idx, np.arange(n_steps + 1))

    shift = np.int64(1) << np.int64(32)
    active: dict[int, float] = {}  # pair key -> start time
    prev: set[int] = set()
    prev_t = 0.0
    for k in np.arange(n_steps):
        lo, hi = bounds[k], bounds[k + 1]
        t = float(times[k])
        if hi - lo >= 2:
            ij = cKDTree(xy[lo:hi]).query_pairs(range, output_type="ndarray")
            ids = nodes[lo:hi][ij]
            ids.sort(axis=1)
            keys = ids[:, 0] * shift + ids[:, 1]
            cur = set(keys.tolist())
        else:
            cur = set()
        for key in prev - cur:
            start = active.pop(key)
            if prev_t > start:
                contacts.append(Contact(int(key >> 32), int(key & 0xFFFFFFFF), start, prev_t))
        for key in cur - prev:
            active[key] = t
        prev, prev_t = cur, t
    for key, start in active.items():
        if prev_t > start:
            contacts.append(Contact(int(key >> 32), int(key & 0xFFFFFFFF), start, prev_t))
    return ContactTrace(contacts, presence, trace.duration, range, step)


def restrict(ct: ContactTrace, nodes) -> ContactTrace:
    """Sub-trace over ``nodes`` only (non-participants become invisible)."""
    keep = set(nodes)
    return ContactTrace([c for c in ct.contacts if c.a in keep and c.b in keep],
                        {n: p for n, p in ct.presence.items() if n in keep}, ct.duration, ct.range, ct.step)


def subsample_contacts(ct: ContactTrace, p: float, seed: int) -> ContactTrace:
    """Same Bernoulli draw as mobility.subsample, applied to a contact trace's nodes."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"participation must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    nodes = ct.nodes
    keep = rng.random(len(nodes)) < p
    return restrict(ct, [n for n, k in zip(nodes, keep) if k])


def load_contacts(source: IO[str] | IO[bytes] | str) -> ContactTrace:
    """Read ``node_a,node_b,start_s,end_s`` rows.

    Without mobility there is no presence information, so each node is taken
    to be present from its first contact start to its last contact end.
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return load_contacts(fh)
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    contacts = []
    header_seen = False
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not header_seen:
            if fields != CONTACT_HEADER:
                raise ValueError(f"line {lineno}: expected header {','.join(CONTACT_HEADER)}")
            header_seen = True
            continue
        try:
            a, b = int(fields[0]), int(fields[1])
            s, e = float(fields[2]), float(fields[3])
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: malformed row {line!r}") from None
        if a == b or a < 0 or b < 0:
            raise ValueError(f"line {lineno}: bad node pair ({a}, {b})")
        if not s < e:
            raise ValueError(f"line {lineno}: contact must have start < end")
        a, b = min(a, b), max(a, b)
        contacts.append(Contact(a, b, s, e))
    if not header_seen:
        raise ValueError("missing header line")
    presence: dict[int, tuple[float, float]] = {}
    for c in contacts:
        for n in (c.a, c.b):
            lo, hi = presence.get(n, (c.start, c.end))
            presence[n] = (min(lo, c.start), max(hi, c.end))
    ct = ContactTrace(contacts, dict(sorted(presence.items())), max((c.end for c in contacts), default=0.0))
    for pair, cs in ct.by_pair().items():
        cs = sorted(cs, key=lambda c: c.start)
        for x, y in zip(cs, cs[1:]):
            if y.start <= x.end:
                raise ValueError(f"overlapping contacts for pair {pair}")
    return ct


def dump_contacts(ct: ContactTrace, sink: IO[str]) -> None:
    sink.write(",".join(CONTACT_HEADER) + "\n")
    for c in ct.contacts:
        sink.write(f"{c.a},{c.b},{c.start!r},{c.end!r}\n")


# -- snapshots -------------------------------------------------------------

@dataclass(frozen=True)
class ConnectivitySnapshot:
    time: float
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    def adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def degree(self, node: int) -> int:
        return sum(1 for e in self.edges if node in e)


def snapshot(ct: ContactTrace, t: float) -> ConnectivitySnapshot:
    """Graph over nodes present at ``t``; an edge for each contact containing ``t``."""
    nodes = tuple(ct.present_at(t))
    a, b, s, e = ct.arrays()
    mask = (s <= t) & (e >= t)
    present = set(nodes)
    edges = frozenset((int(x), int(y)) for x, y in zip(a[mask], b[mask]) if x in present and y in present)
    return ConnectivitySnapshot(float(t), nodes, edges)


def connected_components(g: ConnectivitySnapshot) -> list[list[int]]:
    """Partition of ``g.nodes``; each component sorted, components ordered by smallest member."""
    return components_of(g.nodes, g.edges)


def components_of(nodes, edges) -> list[list[int]]:
    nodes = list(nodes)
    if not nodes:
        return []
    pos = {n: i for i, n in enumerate(nodes)}
    if edges:
        ij = np.array([(pos[u], pos[v]) for u, v in edges], dtype=np.int64)
        m = coo_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(len(nodes), len(nodes)))
    else:
        m = coo_matrix((len(nodes), len(nodes)))
    _, labels = _cc(m, directed=False)
    groups: dict[int, list[int]] = {}
    for n, lab in zip(nodes, labels):
        groups.setdefault(int(lab), []).append(n)
    comps = [sorted(g) for g in groups.values()]
    comps.sort(key=lambda c: c[0])
    return comps


# -- dataset statistics ------------------------------------------------------

@dataclass
class DatasetStats:
    avg_nodes: float
    avg_components: float
    avg_singletons: float
    avg_component_size: float
    avg_degree: float
    contact_duration_ccdf: list[tuple[float, float]]
    time_to_first_contact: dict[int, float | None]

    def to_dict(self) -> dict:
        ttfc = [v for v in self.time_to_first_contact.values() if v is not None]
        return {
            "avg_nodes": self.avg_nodes,
            "avg_components": self.avg_components,
            "avg_singletons": self.avg_singletons,
            "avg_component_size": self.avg_component_size,
            "avg_degree": self.avg_degree,
            "contact_duration_ccdf": [list(p) for p in self.contact_duration_ccdf],
            "mean_time_to_first_contact": float(np.mean(ttfc)) if ttfc else None,
            "time_to_first_contact": {str(k): v for k, v in self.time_to_first_contact.items()},
        }


def contact_duration_ccdf(durations) -> list[tuple[float, float]]:
    """Points ``(d, P(D > d))`` at 0 and at each distinct duration."""
    d = np.sort(np.asarray(list(durations), dtype=float))
    if len(d) == 0:
        return [(0.0, 1.0)]
    n = len(d)
    out = [(0.0, 1.0)]
    for v in np.unique(d):
        out.append((float(v), float(n - np.searchsorted(d, v, side="right")) / n))
    return out


def _eval_points(ct: ContactTrace, step: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation instants and their weights covering [0, duration]."""
    T = ct.duration
    if T <= 0:
        return np.zeros(0), np.zeros(0)
    if step is None:
        cuts = {0.0, T}
        for s, e in ct.presence.values():
            cuts.update((s, e))
        for c in ct.contacts:
            cuts.update((c.start, c.end))
        cuts = np.array(sorted(x for x in cuts if 0.0 <= x <= T))
        w = np.diff(cuts)
        keep = w > 0
        return (cuts[:-1] + w / 2)[keep], w[keep]
    if step <= 0:
        raise ValueError("step must be > 0")
    left = np.arange(0.0, T, step)
    right = np.minimum(left + step, T)
    return (left + right) / 2, right - left


def dataset_stats(ct: ContactTrace, step: float | None = DEFAULT_STEP) -> DatasetStats:
    """Time-weighted connectivity statistics over the trace duration.

    With ``step=None`` the averages are exact integrals over the piecewise
    constant graph; otherwise the graph is evaluated at the midpoint of each
    ``step``-long cell. Degree and component size are weighted by node-time
    and component-time respectively.
    """
    pts, w = _eval_points(ct, step)
    pres_nodes = np.array(list(ct.presence.keys()), dtype=np.int64)
    pres = np.array(list(ct.presence.values()), dtype=float).reshape(-1, 2)
    a, b, s, e = ct.arrays()
    node_time = comp_time = single_time = edge_time = 0.0
    for t, wt in zip(pts, w):
        pm = (pres[:, 0] <= t) & (pres[:, 1] >= t)
        nodes = pres_nodes[pm]
        em = (s <= t) & (e >= t)
        edges = list(zip(a[em].tolist(), b[em].tolist()))
        comps = components_of(nodes.tolist(), edges)
        node_time += wt * len(nodes)
        comp_time += wt * len(comps)
        single_time += wt * sum(1 for c in comps if len(c) == 1)
        edge_time += wt * len(edges)
    T = ct.duration
    first: dict[int, float] = {}
    for c in ct.contacts:
        for n in (c.a, c.b):
            if n not in first or c.start < first[n]:
                first[n] = c.start
    ttfc = {n: (first[n] - ct.presence[n][0]) if n in first else None for n in ct.nodes}
    return DatasetStats(
        avg_nodes=node_time / T if T > 0 else 0.0,
        avg_components=comp_time / T if T > 0 else 0.0,
        avg_singletons=single_time / T if T > 0 else 0.0,
        avg_component_size=node_time / comp_time if comp_time > 0 else 0.0,
        avg_degree=2 * edge_time / node_time if node_time > 0 else 0.0,
        contact_duration_ccdf=contact_duration_ccdf(c.duration for c in ct.contacts),
        time_to_first_contact=ttfc,
    )
