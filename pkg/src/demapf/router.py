"""Router agents: per-location time-slot allocation by traveller precedence."""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .plan import TimeSlot, separated

__all__ = ["Request", "ReserveList", "Router", "precedence_key", "allocate_round"]


@dataclass(frozen=True)
class Request:
    traveller: str
    slot: TimeSlot
    speed: float
    length: float
    committed: bool = False  # re-sent by a traveller that has already accepted its plan

    def __post_init__(self):
        if self.slot.exit - self.slot.entry <= 0:
            raise ValueError(f"request from {self.traveller} has an empty slot {self.slot}")

    def to_json(self) -> dict:
        return {
            "traveller": self.traveller,
            "entry": self.slot.entry,
            "exit": self.slot.exit,
            "speed": self.speed,
            "length": self.length,
            "committed": self.committed,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Request":
        return cls(obj["traveller"], TimeSlot(obj["entry"], obj["exit"]), obj["speed"],
                   obj["length"], bool(obj.get("committed", False)))


def precedence_key(r: Request) -> tuple:
    """Faster first, then longer, then smaller traveller id."""
    return (-r.speed, -r.length, r.traveller)


def allocation_order(r: Request) -> tuple:
    # accepted plans are held ahead of anything still under negotiation
    return (not r.committed,) + precedence_key(r)


@dataclass
class ReserveList:
    """Time-ordered reservations on one location for the current round."""

    t_min: int
    entries: list[tuple[TimeSlot, str]] = field(default_factory=list)

    def clashes(self, slot: TimeSlot) -> bool:
        return any(not separated(slot, other, self.t_min) for other, _ in self.entries)

    def earliest_fit(self, slot: TimeSlot) -> TimeSlot:
        """First slot of the same duration, not before ``slot``, that clashes with nothing."""
        length = slot.duration
        candidates = [slot.entry] + sorted(
            s.exit + self.t_min for s, _ in self.entries if s.exit + self.t_min > slot.entry)
        for start in candidates:
            cand = TimeSlot(start, start + length)
            if not self.clashes(cand):
                return cand
        raise AssertionError("unreachable: a slot after the last reservation always fits")

    def add(self, slot: TimeSlot, traveller: str) -> None:
        insort(self.entries, (slot, traveller))


def allocate_round(requests: Iterable[Request], t_min: int) -> dict[str, TimeSlot]:
    """Propose one slot per request, honouring precedence.

    Requests are served in precedence order; each gets its requested slot
    when that is free, otherwise the earliest later slot of equal duration.
    """
    reqs = sorted(requests, key=allocation_order)
    seen = set()
    for r in reqs:
        if r.traveller in seen:
            raise ValueError(f"two requests from {r.traveller} in one round")
        seen.add(r.traveller)
    reserve = ReserveList(t_min)
    out: dict[str, TimeSlot] = {}
    for r in reqs:
        slot = r.slot if not reserve.clashes(r.slot) else reserve.earliest_fit(r.slot)
        reserve.add(slot, r.traveller)
        out[r.traveller] = slot
    return out


@dataclass
class Router:
    """Owns one location; collects a round's requests and answers them all."""

    location: str
    t_min: int
    inbox: list[Request] = field(default_factory=list)
    trace: list[tuple[str, TimeSlot, TimeSlot]] = field(default_factory=list)

    def receive(self, request: Request) -> None:
        self.inbox.append(request)

    def allocate(self) -> dict[str, TimeSlot]:
        requests, self.inbox = self.inbox, []
        proposals = allocate_round(requests, self.t_min)
        self.trace = [(r.traveller, r.slot, proposals[r.traveller]) for r in requests]
        return proposals
