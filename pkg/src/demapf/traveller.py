"""Traveller agents: constraint-tree negotiation of a single agent's plan."""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterator

from .netmodel import RoadNetwork, TravellerSpec, WorldConfig
from .plan import (
    FirstDeviation,
    Plan,
    ProposedPlan,
    ProtocolViolation,
    TimeSlot,
    build_schedule,
    check_consistency,
    plan_cost,
)
from .router import Request
from .search import Constraint, TravelTimes, constrained_shortest_path, violates

__all__ = [
    "Constraint", "CTNode", "OpenSet", "Status", "Traveller", "InvariantBreach",
    "constrained_shortest_path",
]


class InvariantBreach(AssertionError):
    """A search-tree guarantee (cost monotonicity, least-cost acceptance) failed."""


class Status(str, enum.Enum):
    NEGOTIATING = "negotiating"
    PLAN_FOUND = "plan_found"
    FAILED = "failed"


@dataclass(eq=False)
class CTNode:
    plan: Plan
    constraints: frozenset[Constraint]
    cost: int
    parent: "CTNode | None" = None
    seq: int = 0
    kind: str = "root"
    children: list["CTNode"] = field(default_factory=list, repr=False)

    @property
    def depth(self) -> int:
        d, node = 0, self
        while node.parent is not None:
            d, node = d + 1, node.parent
        return d

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "cost": self.cost,
            "plan": self.plan.to_json(),
            "constraints": [c.to_json() for c in sorted(self.constraints)],
            "children": [c.to_json() for c in self.children],
        }


class OpenSet:
    """Unexplored leaves ordered by cost, then insertion order."""

    def __init__(self):
        self._heap: list[tuple[int, int, tuple, CTNode]] = []
        self._members: set[tuple] = set()

    def __len__(self) -> int:
        return len(self._heap)

    def __iter__(self) -> Iterator[CTNode]:
        return (entry[-1] for entry in self._heap)

    def push(self, node: CTNode) -> None:
        key = (node.plan.key(), node.constraints)
        if key in self._members:
            raise ValueError("node already in the open set")
        self._members.add(key)
        heapq.heappush(self._heap, (node.cost, node.seq, node.plan.key(), node))

    def pop(self) -> CTNode:
        node = heapq.heappop(self._heap)[-1]
        self._members.discard((node.plan.key(), node.constraints))
        return node

    def min_cost(self) -> int | None:
        return self._heap[0][0] if self._heap else None


@dataclass
class Accepted:
    plan: Plan


@dataclass
class Expanded:
    children: list[CTNode]
    deviation: FirstDeviation


class Traveller:
    """One Traveller agent.

    Lifecycle per round: :meth:`next_request` picks the cheapest open
    constraint-tree node and turns its plan into per-location requests;
    :meth:`process_proposals` either accepts the Routers' answer or grows the
    tree with a wait child and a detour child.
    """

    def __init__(self, spec: TravellerSpec, net: RoadNetwork, cfg: WorldConfig | None = None,
                 check_invariants: bool = True):
        self.spec = spec
        self.net = net
        self.cfg = cfg or WorldConfig()
        self.check_invariants = check_invariants
        self.times = TravelTimes(spec, net)
        self.open = OpenSet()
        self.seen: set[tuple] = set()
        self.current: CTNode | None = None
        self.final_plan: Plan | None = None
        self.status = Status.NEGOTIATING
        self.explored = 0
        self.generated = 0
        self.discarded = {"duplicate": 0, "violates_constraints": 0, "below_parent": 0, "infeasible": 0}
        self._seq = itertools.count()
        root_plan = constrained_shortest_path(spec, net, (), spec.depart_not_before, self.times)
        if root_plan is None:
            self.root = None
            self.status = Status.FAILED
        else:
            self.root = self._node(root_plan, frozenset(), None, "root")
            self.seen.add(root_plan.key())
            self.open.push(self.root)

    @property
    def id(self) -> str:
        return self.spec.id

    def _node(self, plan: Plan, constraints: frozenset, parent: CTNode | None, kind: str) -> CTNode:
        self.generated += 1
        node = CTNode(plan, constraints, plan_cost(plan, self.spec, self.net), parent,
                      next(self._seq), kind)
        if parent is not None:
            parent.children.append(node)
        return node

    def _requests(self, plan: Plan, committed: bool) -> list[tuple[str, Request]]:
        return [(loc, Request(self.id, slot, self.spec.speed, self.spec.length, committed))
                for loc, slot in plan.steps]

    def next_request(self) -> list[tuple[str, Request]]:
        """Requests for this round, one per plan location."""
        if self.status is Status.PLAN_FOUND:
            return self._requests(self.final_plan, committed=True)
        if self.status is Status.FAILED:
            return []
        if not self.open:
            self.status = Status.FAILED
            self.current = None
            return []
        self.current = self.open.pop()
        self.explored += 1
        return self._requests(self.current.plan, committed=False)

    def process_proposals(self, proposals: dict[str, TimeSlot]) -> Accepted | Expanded:
        if self.status is not Status.NEGOTIATING or self.current is None:
            raise ProtocolViolation(f"{self.id} received proposals while not negotiating", proposals)
        node = self.current
        proposal = ProposedPlan.assemble(node.plan, proposals)
        deviation = check_consistency(node.plan, proposal)
        if deviation is None:
            if self.check_invariants:
                least = self.open.min_cost()
                if least is not None and node.cost > least:
                    raise InvariantBreach(f"{self.id} accepted cost {node.cost} above open minimum {least}")
            self.final_plan = node.plan
            self.status = Status.PLAN_FOUND
            return Accepted(node.plan)

        children = []
        wait = self._wait_child(node, deviation)
        if wait is not None:
            children.append(wait)
        detour = self._detour_child(node, deviation, proposal)
        if detour is not None:
            children.append(detour)
        for child in children:
            if self.check_invariants and child.cost < node.cost:
                raise InvariantBreach(f"{self.id}: child cost {child.cost} < parent {node.cost}")
            self.open.push(child)
        self.current = None
        return Expanded(children, deviation)

    def _admit(self, plan: Plan) -> bool:
        key = plan.key()
        if key in self.seen:
            self.discarded["duplicate"] += 1
            return False
        self.seen.add(key)
        return True

    def _wait_child(self, node: CTNode, dev: FirstDeviation) -> CTNode | None:
        waits = list(node.plan.waits)
        waits[dev.index] += dev.delay
        plan = build_schedule(self.spec, node.plan.locations, node.plan.start - node.plan.waits[0],
                              waits, self.net)
        if violates(plan, node.constraints):
            self.discarded["violates_constraints"] += 1
            return None
        if not self._admit(plan):
            return None
        return self._node(plan, node.constraints, node, "wait")

    def _detour_child(self, node: CTNode, dev: FirstDeviation, proposal: ProposedPlan) -> CTNode | None:
        loc, requested = node.plan.steps[dev.index]
        offered = proposal.steps[dev.index][1]
        constraints = node.constraints | {Constraint(loc, requested.entry, offered.entry)}
        plan = constrained_shortest_path(self.spec, self.net, constraints,
                                         self.spec.depart_not_before, self.times)
        if plan is None:
            self.discarded["infeasible"] += 1
            return None
        if plan_cost(plan, self.spec, self.net) < node.cost:
            self.discarded["below_parent"] += 1
            return None
        if not self._admit(plan):
            return None
        return self._node(plan, frozenset(constraints), node, "detour")

    def tree_json(self) -> dict:
        return {"traveller": self.id, "status": self.status.value,
                "explored": self.explored, "root": self.root.to_json() if self.root else None}
