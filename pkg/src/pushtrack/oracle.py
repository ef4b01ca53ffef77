"""Dominating-set reference strategy.

For a message window, node ``u`` reaches ``v`` if a chain of contacts can
carry the content from ``u`` to ``v`` with zero transmission time and
non-decreasing contact times. The oracle pushes the message once to a greedy
dominating set of that reachability digraph.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .contacts import ContactTrace


@dataclass(frozen=True)
class ReachabilityDigraph:
    vertices: frozenset[int]
    succ: dict[int, frozenset[int]]

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u, vs in self.succ.items() for v in vs}

    def max_out_degree(self) -> int:
        return max((len(v) for v in self.succ.values()), default=0)


def window_vertices(ct: ContactTrace, t0: float, t1: float) -> set[int]:
    return {n for n, (s, e) in ct.presence.items() if s <= t1 and e >= t0}


def earliest_arrival(adj: dict[int, list[tuple[int, float, float]]], source: int,
                     t0: float, t1: float) -> dict[int, float]:
    """Earliest instantaneous-relay arrival time at every node reachable from ``source``."""
    arrival = {source: t0}
    heap = [(t0, source)]
    while heap:
        t, u = heapq.heappop(heap)
        if t > arrival[u]:
            continue
        for v, s, e in adj.get(u, ()):
            if e < t:
                continue
            cand = max(t, s)
            if cand <= e and cand < arrival.get(v, math.inf):
                arrival[v] = cand
                heapq.heappush(heap, (cand, v))
    return arrival


def _clipped(ct: ContactTrace, t0: float, t1: float):
    for c in ct.contacts:
        s, e = max(c.start, t0), min(c.end, t1)
        if s <= e:
            yield c.a, c.b, s, e


def reachability_by_search(ct: ContactTrace, t0: float, t1: float) -> ReachabilityDigraph:
    """Same digraph as ``reachability_digraph``, via one earliest-arrival search per source."""
    if not t0 < t1:
        raise ValueError("window must satisfy t0 < t1")
    verts = window_vertices(ct, t0, t1)
    adj: dict[int, list[tuple[int, float, float]]] = {}
    for a, b, s, e in _clipped(ct, t0, t1):
        adj.setdefault(a, []).append((b, s, e))
        adj.setdefault(b, []).append((a, s, e))
    succ = {}
    for u in sorted(verts):
        reached = earliest_arrival(adj, u, t0, t1)
        succ[u] = frozenset(v for v in reached if v != u and v in verts)
    return ReachabilityDigraph(frozenset(verts), succ)


def reachability_digraph(ct: ContactTrace, t0: float, t1: float) -> ReachabilityDigraph:
    """``u -> v`` when a time-respecting contact chain inside ``[t0, t1]`` links them.

    One sweep over contact starts in time order. Each node carries a bitset of
    the sources that have reached it; nodes joined by currently open contacts
    always share the same bitset, so a new contact only has to merge two
    already-uniform groups. Contacts closing at ``t`` still relay at ``t``.
    """
    if not t0 < t1:
        raise ValueError("window must satisfy t0 < t1")
    verts = sorted(window_vertices(ct, t0, t1))
    bit = {v: i for i, v in enumerate(verts)}
    reach = {v: 1 << i for v, i in bit.items()}
    open_adj: dict[int, dict[int, int]] = {v: {} for v in verts}  # neighbor -> open contact count
    evs = []
    for a, b, s, e in _clipped(ct, t0, t1):
        if a in bit and b in bit:
            evs.append((s, 0, a, b))
            evs.append((e, 1, a, b))
    evs.sort()

    def group(x: int) -> list[int]:
        seen, stack = {x}, [x]
        while stack:
            u = stack.pop()
            for w in open_adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return list(seen)

    for _, closing, a, b in evs:
        if closing:
            na = open_adj[a]
            na[b] -= 1
            if not na[b]:
                del na[b]
                del open_adj[b][a]
            continue
        open_adj[a][b] = open_adj[a].get(b, 0) + 1
        open_adj[b][a] = open_adj[b].get(a, 0) + 1
        ra, rb = reach[a], reach[b]
        if ra == rb:
            continue
        merged = ra | rb
        for u in group(a):
            reach[u] = merged

    succ: dict[int, set[int]] = {v: set() for v in verts}
    for v in verts:
        r = reach[v] & ~(1 << bit[v])
        while r:
            low = r & -r
            succ[verts[low.bit_length() - 1]].add(v)
            r ^= low
    return ReachabilityDigraph(frozenset(verts), {u: frozenset(vs) for u, vs in succ.items()})


def greedy_dominating_set(g: ReachabilityDigraph) -> set[int]:
    """Repeatedly take the vertex covering most uncovered vertices (itself plus successors).

    Ties go to the smallest node id.
    """
    uncovered = set(g.vertices)
    cover = {u: {u} | set(g.succ.get(u, ())) for u in g.vertices}
    chosen: set[int] = set()
    while uncovered:
        best, best_gain = None, -1
        for u in sorted(g.vertices):
            if u in chosen:
                continue
            gain = len(cover[u] & uncovered)
            if gain > best_gain:
                best, best_gain = u, gain
        chosen.add(best)
        uncovered -= cover[best]
    return chosen


def greedy_bound(g: ReachabilityDigraph) -> float:
    """Greedy set-cover guarantee ``1 + ln K`` with ``K`` the most vertices one choice covers."""
    return 1.0 + math.log(g.max_out_degree() + 1) if g.vertices else 1.0


def is_dominating(g: ReachabilityDigraph, d: set[int]) -> bool:
    covered = set(d)
    for u in d:
        covered |= g.succ.get(u, frozenset())
    return covered >= g.vertices


def oracle_initial_pushes(ct: ContactTrace, t0: float, t1: float) -> set[int]:
    return greedy_dominating_set(reachability_digraph(ct, t0, t1))
