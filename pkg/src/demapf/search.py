"""Best-first search for a traveller's schedule under forbidden intervals.

States are ``(location, entry tick)``.  From a state the head may enter a
neighbour as soon as it reaches the end of the current location, or later,
at the start of one of the neighbour's free windows; any later wait would
only lengthen the stay on the current location.  Paths never revisit a
location.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .netmodel import RoadNetwork, TravellerSpec, Unreachable, tpp, traversal_duration
from .plan import Plan, build_schedule

__all__ = ["Constraint", "TravelTimes", "constrained_shortest_path", "violates"]


class Constraint(NamedTuple):
    """Do not occupy ``location`` at any tick in ``[start, end)``."""

    location: str
    start: int
    end: int

    def to_json(self) -> dict:
        return {"loc": self.location, "start": self.start, "end": self.end}


def violates(plan: Plan, constraints: Iterable[Constraint]) -> bool:
    occupied = {loc: slot for loc, slot in plan.steps}
    for c in constraints:
        slot = occupied.get(c.location)
        if slot is not None and slot.entry < c.end and c.start < slot.exit:
            return True
    return False


@dataclass
class TravelTimes:
    """Per-traveller duration table and an admissible cost-to-go."""

    spec: TravellerSpec
    net: RoadNetwork

    def __post_init__(self):
        self.lag = tpp(self.spec)
        self.dur = {lid: traversal_duration(self.spec, loc) for lid, loc in self.net.locations.items()}
        self.to_go = self._cost_to_go(self.spec.destination)

    def _cost_to_go(self, target: str) -> dict[str, int]:
        # remaining cost from a location, counting that location itself
        dist = {target: self.dur[target]}
        heap = [(self.dur[target], target)]
        while heap:
            d, here = heapq.heappop(heap)
            if d > dist[here]:
                continue
            for nxt in self.net.adjacency[here]:
                nd = d + self.dur[nxt]
                if nd < dist.get(nxt, nd + 1):
                    dist[nxt] = nd
                    heapq.heappush(heap, (nd, nxt))
        return dist


def _merge(intervals: list[tuple[int, int]]) -> tuple[list[int], list[int]]:
    intervals.sort()
    starts: list[int] = []
    ends: list[int] = []
    for a, b in intervals:
        if starts and a <= ends[-1]:
            ends[-1] = max(ends[-1], b)
        else:
            starts.append(a)
            ends.append(b)
    return starts, ends


class _Forbidden:
    def __init__(self, constraints: Iterable[Constraint]):
        raw: dict[str, list[tuple[int, int]]] = {}
        for c in constraints:
            if c.end > c.start:
                raw.setdefault(c.location, []).append((c.start, c.end))
        self.table = {loc: _merge(iv) for loc, iv in raw.items()}
        self.latest_end = max((e[-1] for _, e in self.table.values()), default=0)

    def free(self, loc: str, a: int, b: int) -> bool:
        """Is ``[a, b)`` clear of every forbidden interval on ``loc``?"""
        entry = self.table.get(loc)
        if entry is None:
            return True
        starts, ends = entry
        k = bisect_right(starts, a) - 1
        if k >= 0 and ends[k] > a:
            return False
        return k + 1 >= len(starts) or starts[k + 1] >= b

    def openings(self, loc: str, after: int) -> list[int]:
        """Ends of forbidden intervals on ``loc`` later than ``after``."""
        entry = self.table.get(loc)
        if entry is None:
            return []
        return [e for e in entry[1] if e > after]


def constrained_shortest_path(spec: TravellerSpec, net: RoadNetwork,
                              constraints: Iterable[Constraint] = (),
                              depart: int | None = None,
                              times: TravelTimes | None = None,
                              horizon: int | None = None) -> Plan | None:
    """Cheapest plan whose occupancy avoids every constraint, or ``None``.

    The search is bounded by ``horizon`` (default: latest constraint end plus
    the unconstrained plan cost), which makes "no plan" decidable.
    """
    times = times or TravelTimes(spec, net)
    depart = spec.depart_not_before if depart is None else depart
    dur, lag, to_go = times.dur, times.lag, times.to_go
    src, dst = spec.source, spec.destination
    if src not in to_go:
        return None
    forb = _Forbidden(constraints)
    if horizon is None:
        horizon = max(depart, forb.latest_end) + to_go[src]

    # heap entries: (f, path, waits, entry, done)
    heap: list[tuple] = []
    for e0 in [depart] + forb.openings(src, depart):
        if e0 <= horizon and forb.free(src, e0, e0 + dur[src]):
            w0 = e0 - depart
            heapq.heappush(heap, (w0 + to_go[src], (src,), (w0,), e0, False))
    closed: set[tuple[str, int]] = set()
    while heap:
        f, path, waits, e, done = heapq.heappop(heap)
        here = path[-1]
        if done:
            return build_schedule(spec, path, depart, waits, net)
        if (here, e) in closed:
            continue
        closed.add((here, e))
        g = f - to_go[here]
        if here == dst:
            if forb.free(here, e, e + dur[here]):
                heapq.heappush(heap, (g + dur[here], path, waits, e, True))
            continue
        earliest = e + dur[here] - lag
        g_next = g + dur[here]
        for nxt in net.adjacency[here]:
            if nxt in path or nxt not in to_go:
                continue
            for t in [earliest] + forb.openings(nxt, earliest):
                if t > horizon or not forb.free(here, e, t + lag):
                    break
                if (nxt, t) in closed or not forb.free(nxt, t, t + dur[nxt]):
                    continue
                w = t - earliest
                heapq.heappush(heap, (g_next + w + to_go[nxt], path + (nxt,), waits + (w,), t, False))
    return None


def unconstrained_plan(spec: TravellerSpec, net: RoadNetwork,
                       times: TravelTimes | None = None) -> Plan:
    plan = constrained_shortest_path(spec, net, (), spec.depart_not_before, times)
    if plan is None:
        raise Unreachable(f"{spec.destination} is unreachable from {spec.source}")
    return plan
