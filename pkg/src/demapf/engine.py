"""Synchronous negotiation rounds between Travellers and Routers.

A round has three phases separated by barriers:

1. every negotiating Traveller sends requests for its cheapest open plan;
   Travellers that already accepted a plan re-send it so Routers see the
   full load;
2. every Router allocates everything addressed to it;
3. every negotiating Traveller processes the proposals it received.

Within a phase the order in which agents run does not matter: Routers are
pure functions of their inbox and Travellers only see their own mail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .netmodel import RoadNetwork, TravellerSpec, WorldConfig
from .plan import (
    Plan,
    ProtocolViolation,
    SolutionSet,
    TimeSlot,
    make_solution,
    validate_plan,
    validate_solution,
)
from .protocol import (
    COORDINATOR,
    LocalTransport,
    MessageKind,
    Postmarks,
    RoundMessage,
    SequenceCheck,
    Transport,
)
from .router import Request, allocate_round
from .traveller import Accepted, InvariantBreach, Status, Traveller

__all__ = [
    "EngineConfig", "Engine", "LocalHost", "RoundReport", "FailureReport",
    "default_max_rounds", "load_config",
]

MAX_ROUNDS_CAP = 100_000


@dataclass(frozen=True)
class EngineConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    max_rounds: int | None = None
    transport: str = "local"
    listen: str | None = None
    connect: str | None = None

    @classmethod
    def from_json(cls, obj: Mapping) -> "EngineConfig":
        known = {"t_min", "edge_length", "node_length", "default_speed_limit",
                 "max_rounds", "transport", "seedless"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        world_kw = {k: obj[k] for k in ("t_min", "edge_length", "node_length") if k in obj}
        if obj.get("default_speed_limit") is not None:
            world_kw["default_speed_limit"] = obj["default_speed_limit"]
        transport = obj.get("transport") or {}
        return cls(WorldConfig(**world_kw), obj.get("max_rounds"),
                   transport.get("mode", "local"), transport.get("listen"), transport.get("connect"))


def load_config(path) -> EngineConfig:
    with open(path) as f:
        return EngineConfig.from_json(json.load(f))


def default_max_rounds(path_lengths: Iterable[int]) -> int:
    return min(MAX_ROUNDS_CAP, sum(2 ** min(k, 12) for k in path_lengths)) or 1


@dataclass
class RoundReport:
    round: int
    requests: int = 0
    proposals: int = 0
    acceptances: list[str] = field(default_factory=list)
    expansions: int = 0
    failures: list[str] = field(default_factory=list)


@dataclass
class FailureReport:
    statuses: dict[str, str]
    rounds: int
    ct_nodes: dict[str, int]
    partial: SolutionSet
    reason: str

    @property
    def failed(self) -> list[str]:
        return sorted(k for k, v in self.statuses.items() if v != Status.PLAN_FOUND.value)

    def to_json(self) -> dict:
        return {"reason": self.reason, "rounds": self.rounds, "statuses": self.statuses,
                "ct_nodes": self.ct_nodes, "partial": self.partial.to_json()}


def _slot_payload(slot: TimeSlot) -> dict:
    return {"entry": slot.entry, "exit": slot.exit}


class LocalHost:
    """Runs a group of Travellers inside this process."""

    def __init__(self, travellers: Sequence[Traveller]):
        self.travellers = {t.id: t for t in travellers}
        self.order = [t.id for t in travellers]
        self.post = Postmarks()
        self.check = SequenceCheck()

    @property
    def ids(self) -> list[str]:
        return list(self.order)

    def _status_msg(self, t: Traveller, rnd: int) -> RoundMessage:
        if t.status is Status.PLAN_FOUND:
            payload = {"plan": t.final_plan.to_json(), **self._stats(t)}
            return self.post.stamp(MessageKind.FINALIZED, rnd, t.id, COORDINATOR, payload)
        return self.post.stamp(MessageKind.FAILED, rnd, t.id, COORDINATOR, self._stats(t))

    @staticmethod
    def _stats(t: Traveller) -> dict:
        return {"explored": t.explored, "generated": t.generated}

    def start(self) -> list[RoundMessage]:
        return [self._status_msg(self.travellers[i], 0) for i in self.order
                if self.travellers[i].status is Status.FAILED]

    def emit(self, rnd: int) -> list[RoundMessage]:
        out = []
        for tid in self.order:
            t = self.travellers[tid]
            if t.status is Status.FAILED:
                continue
            for loc, req in t.next_request():
                out.append(self.post.stamp(MessageKind.RESERVE_REQUEST, rnd, tid, loc, req.to_json()))
            if t.status is Status.FAILED:
                out.append(self._status_msg(t, rnd))
        return out

    def deliver(self, rnd: int, proposals: Iterable[RoundMessage]) -> list[RoundMessage]:
        inbox: dict[str, dict[str, TimeSlot]] = {}
        for msg in proposals:
            self.check.accept(msg)
            if msg.kind is not MessageKind.ALLOCATION_PROPOSAL or msg.round != rnd:
                raise ProtocolViolation("expected a proposal for the current round", msg)
            box = inbox.setdefault(msg.recipient, {})
            if msg.sender in box:
                raise ProtocolViolation("two proposals from one Router", msg)
            box[msg.sender] = TimeSlot(msg.payload["entry"], msg.payload["exit"])
        out = []
        for tid in self.order:
            t = self.travellers[tid]
            if t.status is not Status.NEGOTIATING:
                continue
            try:
                result = t.process_proposals(inbox.get(tid, {}))
            except ProtocolViolation as exc:
                exc.offending = exc.offending or inbox.get(tid)
                raise
            if isinstance(result, Accepted):
                out.append(self._status_msg(t, rnd))
        return out

    def stats(self) -> dict[str, dict]:
        return {tid: self._stats(t) for tid, t in self.travellers.items()}

    def close(self) -> None:
        pass


class Engine:
    """Coordinates rounds; hosts the Routers and any number of Traveller hosts."""

    def __init__(self, net: RoadNetwork, specs: Sequence[TravellerSpec],
                 cfg: WorldConfig | None = None, hosts: Sequence | None = None,
                 transport: Transport | None = None, order: Sequence[str] | None = None):
        self.net = net
        self.cfg = cfg or WorldConfig()
        self.specs = {s.id: s for s in specs}
        if len(self.specs) != len(specs):
            raise ValueError("duplicate traveller ids")
        for s in specs:
            for n in (s.source, s.destination):
                if n not in net:
                    raise ValueError(f"traveller {s.id} references unknown node {n}")
        if hosts is None:
            ids = list(order) if order is not None else [s.id for s in specs]
            hosts = [LocalHost([Traveller(self.specs[i], net, self.cfg) for i in ids])]
        self.hosts = list(hosts)
        self.transport = transport or LocalTransport()
        self.post = Postmarks()
        self.inbox_check = SequenceCheck()
        self.round = 0
        self.statuses = {tid: Status.NEGOTIATING for tid in self.specs}
        self.plans: dict[str, Plan] = {}
        self.ct_stats: dict[str, dict] = {}
        self.messages = 0
        self.reports: list[RoundReport] = []
        self.router_trace: list[tuple] = []
        self.trace = False
        hosted = [tid for h in self.hosts for tid in h.ids]
        if sorted(hosted) != sorted(self.specs):
            raise ValueError("hosts must cover every traveller exactly once")
        self._owner = {tid: h for h in self.hosts for tid in h.ids}
        for h in self.hosts:
            for msg in h.start():
                self._status(msg, RoundReport(0))

    @property
    def converged(self) -> bool:
        return all(s is not Status.NEGOTIATING for s in self.statuses.values())

    def _status(self, msg: RoundMessage, report: RoundReport) -> None:
        self.inbox_check.accept(msg)
        self.messages += 1
        tid = msg.sender
        prev = self.statuses[tid]
        if prev is not Status.NEGOTIATING:
            raise ProtocolViolation(f"{tid} reported a status twice", msg)
        stats = {k: msg.payload[k] for k in ("explored", "generated")}
        self.ct_stats[tid] = stats
        if msg.kind is MessageKind.FINALIZED:
            self.statuses[tid] = Status.PLAN_FOUND
            self.plans[tid] = Plan.from_json(msg.payload["plan"])
            report.acceptances.append(tid)
        elif msg.kind is MessageKind.FAILED:
            self.statuses[tid] = Status.FAILED
            report.failures.append(tid)
        else:
            raise ProtocolViolation("unexpected message kind for the engine", msg)

    def run_round(self) -> RoundReport:
        if self.converged:
            raise RuntimeError("engine already converged")
        self.round += 1
        rnd = self.round
        report = RoundReport(rnd)

        # phase 1: requests
        for h in self.hosts:
            for msg in h.emit(rnd):
                if msg.kind is MessageKind.RESERVE_REQUEST:
                    if msg.recipient not in self.net:
                        raise ProtocolViolation("request for a location with no Router", msg)
                    self.transport.send(msg)
                    report.requests += 1
                else:
                    self._status(msg, report)

        # phase 2: Routers
        outgoing: dict[str, list[RoundMessage]] = {}
        for loc in self.transport.pending():
            msgs = self.transport.recv(loc)
            requests = []
            for m in msgs:
                if m.kind is not MessageKind.RESERVE_REQUEST or m.round != rnd:
                    raise ProtocolViolation("Router expected a request for this round", m)
                requests.append(Request.from_json(m.payload))
            proposals = allocate_round(requests, self.cfg.t_min)
            if len(proposals) != len(requests):
                raise ProtocolViolation(f"Router {loc} lost a request", msgs)
            for r in requests:
                slot = proposals[r.traveller]
                if self.trace:
                    self.router_trace.append((rnd, loc, r.traveller, tuple(r.slot), tuple(slot)))
                out = self.post.stamp(MessageKind.ALLOCATION_PROPOSAL, rnd, loc, r.traveller,
                                      _slot_payload(slot))
                outgoing.setdefault(r.traveller, []).append(out)
                report.proposals += 1
        self.messages += report.requests + report.proposals

        # phase 3: Travellers digest proposals
        for h in self.hosts:
            batch = []
            for tid in h.ids:
                if self.statuses[tid] is Status.NEGOTIATING:
                    batch.extend(outgoing.get(tid, []))
            for msg in h.deliver(rnd, batch):
                self._status(msg, report)
        report.expansions = sum(1 for t, s in self.statuses.items()
                                if s is Status.NEGOTIATING)
        self.reports.append(report)
        return report

    def default_max_rounds(self) -> int:
        from .search import TravelTimes, constrained_shortest_path

        lengths = []
        for s in self.specs.values():
            plan = constrained_shortest_path(s, self.net, (), None, TravelTimes(s, self.net))
            lengths.append(len(plan.steps) if plan else 1)
        return default_max_rounds(lengths)

    def run_to_convergence(self, max_rounds: int | None = None) -> SolutionSet | FailureReport:
        if max_rounds is None:
            max_rounds = self.default_max_rounds()
        if max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        while not self.converged and self.round < max_rounds:
            self.run_round()
        for h in self.hosts:
            for tid, st in h.stats().items():
                self.ct_stats[tid] = st
        solution = make_solution(self.plans.values(), self.specs, self.net)
        if all(s is Status.PLAN_FOUND for s in self.statuses.values()):
            for tid, p in self.plans.items():
                validate_plan(p, self.specs[tid], self.net)
            conflict = validate_solution(solution, self.specs, self.net, self.cfg)
            if conflict is not None:
                raise InvariantBreach(f"converged solution has a conflict: {conflict}")
            return solution
        reason = "traveller failed" if any(
            s is Status.FAILED for s in self.statuses.values()) else "max_rounds exhausted"
        return FailureReport({k: v.value for k, v in sorted(self.statuses.items())}, self.round,
                             {k: v["explored"] for k, v in sorted(self.ct_stats.items())},
                             solution, reason)

    @property
    def ct_nodes_expanded(self) -> int:
        return sum(v["explored"] for v in self.ct_stats.values())

    def close(self) -> None:
        for h in self.hosts:
            h.close()


def solve(net: RoadNetwork, specs: Sequence[TravellerSpec], cfg: WorldConfig | None = None,
          max_rounds: int | None = None, order: Sequence[str] | None = None) -> SolutionSet | FailureReport:
    """Run the in-process negotiation to convergence."""
    engine = Engine(net, specs, cfg, order=order)
    return engine.run_to_convergence(max_rounds)
