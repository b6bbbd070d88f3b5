"""Timed plans for spatially extended travellers.

Time is measured in integer ticks.  A plan visits locations in order; for
consecutive steps the tail of the traveller clears location ``i`` exactly
``tpp`` ticks after the head enters location ``i + 1``::

    exit(i) - entry(i + 1) == tpp

A wait charged to the transition into step ``i`` delays that entry and
everything after it, and keeps the traveller on step ``i - 1`` for longer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .netmodel import (
    Kind,
    NetworkError,
    RoadNetwork,
    TravellerSpec,
    WorldConfig,
    tpp,
    traversal_duration,
)

__all__ = [
    "TimeSlot", "Plan", "ProposedPlan", "SolutionSet", "FirstDeviation", "Conflict",
    "ProtocolViolation", "PlanError", "traversal_duration", "tpp", "build_schedule",
    "plan_cost", "check_consistency", "validate_plan", "validate_solution", "solution_cost",
    "separated",
]


class PlanError(ValueError):
    pass


class ProtocolViolation(RuntimeError):
    """A message or proposal broke the negotiation contract."""

    def __init__(self, msg: str, offending=None):
        super().__init__(msg)
        self.offending = offending


class TimeSlot(NamedTuple):
    entry: int
    exit: int

    @property
    def duration(self) -> int:
        return self.exit - self.entry


def separated(a: TimeSlot, b: TimeSlot, t_min: int) -> bool:
    """True when one slot ends at least ``t_min`` ticks before the other starts."""
    return b.entry >= a.exit + t_min or a.entry >= b.exit + t_min


@dataclass(frozen=True)
class Plan:
    traveller: str
    steps: tuple[tuple[str, TimeSlot], ...]
    waits: tuple[int, ...]

    def __post_init__(self):
        if not self.steps:
            raise PlanError("plan has no steps")
        if len(self.waits) != len(self.steps):
            raise PlanError("waits must align with steps")
        for loc, slot in self.steps:
            if slot.exit <= slot.entry:
                raise PlanError(f"empty slot on {loc}: {slot}")

    @property
    def locations(self) -> tuple[str, ...]:
        return tuple(loc for loc, _ in self.steps)

    @property
    def slots(self) -> tuple[TimeSlot, ...]:
        return tuple(slot for _, slot in self.steps)

    @property
    def start(self) -> int:
        return self.steps[0][1].entry

    @property
    def finish(self) -> int:
        return self.steps[-1][1].exit

    def key(self) -> tuple:
        """Canonical hashable encoding, used for duplicate detection."""
        return (self.steps, self.waits)

    def to_json(self) -> dict:
        return {
            "traveller": self.traveller,
            "steps": [{"loc": loc, "entry": s.entry, "exit": s.exit} for loc, s in self.steps],
            "waits": list(self.waits),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Plan":
        try:
            steps = tuple((st["loc"], TimeSlot(int(st["entry"]), int(st["exit"])))
                          for st in obj["steps"])
            return cls(obj["traveller"], steps, tuple(int(w) for w in obj["waits"]))
        except (KeyError, TypeError) as exc:
            raise PlanError(f"bad plan JSON: {exc}") from exc


@dataclass(frozen=True)
class ProposedPlan:
    """Router counter-offers for one request batch, in request order."""

    traveller: str
    steps: tuple[tuple[str, TimeSlot], ...]
    deviated: tuple[bool, ...] = ()

    @classmethod
    def assemble(cls, request: Plan, proposals: Mapping[str, TimeSlot]) -> "ProposedPlan":
        """Pair each requested location with the slot its Router proposed."""
        extra = set(proposals) - set(request.locations)
        if extra:
            raise ProtocolViolation(f"proposal for unrequested locations {sorted(extra)}", extra)
        missing = [loc for loc in request.locations if loc not in proposals]
        if missing:
            raise ProtocolViolation(f"no proposal for {missing}", missing)
        steps = tuple((loc, proposals[loc]) for loc in request.locations)
        flags = tuple(p.entry > r.entry for (_, p), r in zip(steps, request.slots))
        return cls(request.traveller, steps, flags)


class FirstDeviation(NamedTuple):
    index: int
    delay: int


class Conflict(NamedTuple):
    location: str
    travellers: tuple[str, str]
    slots: tuple[TimeSlot, TimeSlot]


def _durations(traveller: TravellerSpec, path: Sequence[str], net: RoadNetwork) -> list[int]:
    return [traversal_duration(traveller, net[loc]) for loc in path]


def build_schedule(traveller: TravellerSpec, path: Sequence[str], start: int,
                   waits: Sequence[int] | None, net: RoadNetwork) -> Plan:
    """Lay ``path`` out in time from ``start`` with per-transition ``waits``.

    ``waits[0]`` delays departure; ``waits[i]`` holds the head at the end of
    step ``i - 1`` before it enters step ``i``.
    """
    path = list(path)
    if not path:
        raise PlanError("empty path")
    waits = [0] * len(path) if waits is None else [int(w) for w in waits]
    if len(waits) != len(path):
        raise PlanError("waits must have one entry per path location")
    if any(w < 0 for w in waits):
        raise PlanError("waits must be non-negative")
    if start < traveller.depart_not_before:
        raise PlanError(f"start {start} precedes departure time {traveller.depart_not_before}")
    for loc in path:
        if loc not in net:
            raise PlanError(f"unknown location {loc}")
    for a, b in zip(path, path[1:]):
        if not net.adjacent(a, b):
            raise PlanError(f"{a} and {b} are not adjacent")
    lag = tpp(traveller)
    dur = _durations(traveller, path, net)
    entries = [start + waits[0]]
    for i in range(len(path) - 1):
        entries.append(entries[i] + dur[i] - lag + waits[i + 1])
    exits = [entries[i + 1] + lag for i in range(len(path) - 1)]
    exits.append(entries[-1] + dur[-1])
    steps = tuple((loc, TimeSlot(e, x)) for loc, e, x in zip(path, entries, exits))
    return Plan(traveller.id, steps, tuple(waits))


def plan_cost(p: Plan, traveller: TravellerSpec, net: RoadNetwork) -> int:
    """Sum of per-location traversal durations plus all imposed waits."""
    return sum(_durations(traveller, p.locations, net)) + sum(p.waits)


def validate_plan(p: Plan, traveller: TravellerSpec, net: RoadNetwork) -> None:
    """Raise :class:`PlanError` unless ``p`` is a well-formed plan for ``traveller``."""
    if p.traveller != traveller.id:
        raise PlanError(f"plan belongs to {p.traveller}, not {traveller.id}")
    locs = p.locations
    if locs[0] != traveller.source or locs[-1] != traveller.destination:
        raise PlanError(f"plan for {traveller.id} does not run source to destination")
    if net[locs[0]].kind is not Kind.NODE:
        raise PlanError("plan must start on a node")
    if len(set(locs)) != len(locs):
        raise PlanError(f"plan for {traveller.id} revisits a location")
    if p.start < traveller.depart_not_before:
        raise PlanError(f"plan for {traveller.id} departs before {traveller.depart_not_before}")
    try:
        rebuilt = build_schedule(traveller, locs, p.start - p.waits[0], p.waits, net)
    except (PlanError, NetworkError) as exc:
        raise PlanError(str(exc)) from exc
    if rebuilt.steps != p.steps:
        raise PlanError(f"plan for {traveller.id} is not a contiguous schedule of its path")


def check_consistency(request: Plan, proposal: ProposedPlan) -> FirstDeviation | None:
    """Compare Router proposals against the requested plan.

    Returns ``None`` when every proposed slot equals the requested one,
    otherwise the earliest delayed step and its delay.
    """
    if len(proposal.steps) != len(request.steps):
        raise ProtocolViolation("proposal does not cover the request", proposal)
    first = None
    for i, ((rloc, rslot), (ploc, pslot)) in enumerate(zip(request.steps, proposal.steps)):
        if rloc != ploc:
            raise ProtocolViolation(f"proposal names {ploc} where {rloc} was requested", proposal)
        if pslot.entry < rslot.entry or pslot.duration != rslot.duration:
            raise ProtocolViolation(f"proposal {pslot} on {ploc} breaks request {rslot}", proposal)
        if first is None and pslot.entry > rslot.entry:
            first = FirstDeviation(i, pslot.entry - rslot.entry)
    return first


@dataclass(frozen=True)
class SolutionSet:
    plans: Mapping[str, Plan]
    cost: int

    def to_json(self) -> dict:
        return {
            "cost": self.cost,
            "plans": [self.plans[k].to_json() for k in sorted(self.plans)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, obj: Mapping) -> "SolutionSet":
        try:
            plans = [Plan.from_json(p) for p in obj["plans"]]
            cost = int(obj["cost"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"bad solution JSON: {exc}") from exc
        by_id = {p.traveller: p for p in plans}
        if len(by_id) != len(plans):
            raise PlanError("solution lists a traveller twice")
        return cls(by_id, cost)

    @property
    def makespan(self) -> int:
        return max((p.finish for p in self.plans.values()), default=0)


def solution_cost(plans: Iterable[Plan], specs: Mapping[str, TravellerSpec], net: RoadNetwork) -> int:
    return sum(plan_cost(p, specs[p.traveller], net) for p in plans)


def make_solution(plans: Iterable[Plan], specs: Mapping[str, TravellerSpec], net: RoadNetwork) -> SolutionSet:
    plans = {p.traveller: p for p in plans}
    return SolutionSet(plans, solution_cost(plans.values(), specs, net))


def validate_solution(s: SolutionSet, specs: Mapping[str, TravellerSpec], net: RoadNetwork,
                      cfg: WorldConfig) -> Conflict | None:
    """First pair of slots on one location that breaks the t_min separation.

    Scan order is location id, then entry time, then traveller id, so the
    verdict and the reported conflict do not depend on plan order.
    """
    by_loc: dict[str, list[tuple[TimeSlot, str]]] = {}
    for p in s.plans.values():
        for loc, slot in p.steps:
            by_loc.setdefault(loc, []).append((slot, p.traveller))
    for loc in sorted(by_loc):
        uses = sorted(by_loc[loc])
        for i, (a, ta) in enumerate(uses):
            for b, tb in uses[i + 1:]:
                if b.entry >= a.exit + cfg.t_min:
                    break
                if ta != tb and not separated(a, b, cfg.t_min):
                    return Conflict(loc, (ta, tb), (a, b))
    return None
