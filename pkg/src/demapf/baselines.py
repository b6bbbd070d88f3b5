"""Reference planners: sequential prioritized planning and an exact oracle.

``brute_force_optimal`` enumerates every simple route for every traveller
and, for each joint route choice, solves the wait assignment exactly as a
small mixed-integer program (either traveller may go first on each shared
location).  It is only meant for tiny instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .engine import FailureReport
from .netmodel import RoadNetwork, TravellerSpec, WorldConfig, tpp, traversal_duration
from .plan import Plan, SolutionSet, TimeSlot, build_schedule, make_solution, separated
from .router import Request, precedence_key
from .search import Constraint, TravelTimes, constrained_shortest_path

__all__ = [
    "ReservationTable", "priority_plan", "brute_force_optimal", "simple_paths",
    "OversizedInstance", "ORACLE_MAX_TRAVELLERS", "ORACLE_MAX_LOCATIONS", "ORACLE_MAX_HORIZON",
]

ORACLE_MAX_TRAVELLERS = 3
ORACLE_MAX_LOCATIONS = 12
ORACLE_MAX_HORIZON = 64


class OversizedInstance(ValueError):
    pass


@dataclass
class ReservationTable:
    t_min: int
    slots: dict[str, list[tuple[TimeSlot, str]]] = field(default_factory=dict)

    def reserve(self, plan: Plan) -> None:
        for loc, slot in plan.steps:
            self.slots.setdefault(loc, []).append((slot, plan.traveller))

    def constraints(self) -> list[Constraint]:
        # a slot [a, b) clashes with reservation [e, x) iff it meets [e - t_min, x + t_min)
        return [Constraint(loc, s.entry - self.t_min, s.exit + self.t_min)
                for loc, uses in self.slots.items() for s, _ in uses]

    def admits(self, plan: Plan) -> bool:
        return all(separated(slot, other, self.t_min)
                   for loc, slot in plan.steps for other, _ in self.slots.get(loc, ()))


def _precedence(spec: TravellerSpec) -> tuple:
    return precedence_key(Request(spec.id, TimeSlot(0, 1), spec.speed, spec.length))


def priority_plan(specs: Sequence[TravellerSpec], net: RoadNetwork,
                  cfg: WorldConfig | None = None,
                  reroute: bool = False) -> SolutionSet | FailureReport:
    """Plan travellers one at a time in precedence order around earlier reservations.

    By default each traveller keeps the route it planned alone on an empty
    network and only its timing is resolved against higher-precedence
    reservations.  With ``reroute=True`` every traveller instead searches the
    whole network around the reservations.
    """
    cfg = cfg or WorldConfig()
    if not specs:
        raise ValueError("no travellers")
    table = ReservationTable(cfg.t_min)
    plans: list[Plan] = []
    statuses = {}
    for spec in sorted(specs, key=_precedence):
        times = TravelTimes(spec, net)
        plan = None
        alone = constrained_shortest_path(spec, net, (), spec.depart_not_before, times)
        if alone is not None:
            area = net if reroute else net.restrict(alone.locations)
            plan = constrained_shortest_path(spec, area, table.constraints(), spec.depart_not_before,
                                             times if reroute else None)
        if plan is None:
            statuses[spec.id] = "failed"
            continue
        statuses[spec.id] = "plan_found"
        table.reserve(plan)
        plans.append(plan)
    by_id = {s.id: s for s in specs}
    solution = make_solution(plans, by_id, net)
    if len(plans) < len(specs):
        return FailureReport(dict(sorted(statuses.items())), 0, {}, solution, "traveller infeasible")
    return solution


def simple_paths(net: RoadNetwork, source: str, target: str) -> list[tuple[str, ...]]:
    """Every location sequence from ``source`` to ``target`` without repeats."""
    out = []

    def walk(path: list[str], seen: set[str]):
        here = path[-1]
        if here == target:
            out.append(tuple(path))
            return
        for nxt in net.adjacency[here]:
            if nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                walk(path, seen)
                path.pop()
                seen.discard(nxt)

    walk([source], {source})
    return sorted(out)


class _WaitProgram:
    """Exact minimum total wait for fixed routes, as a small MILP."""

    def __init__(self, specs, routes, net, t_min, horizon):
        self.specs, self.routes = specs, routes
        self.var = {}  # (traveller index, step) -> column
        for j, route in enumerate(routes):
            for i in range(len(route)):
                self.var[j, i] = len(self.var)
        self.n_wait = len(self.var)
        self.lags = [tpp(s) for s in specs]
        self.durs = [[traversal_duration(s, net[loc]) for loc in r] for s, r in zip(specs, routes)]
        self.t_min, self.horizon = t_min, horizon

    def _entry(self, j: int, i: int) -> tuple[np.ndarray, int]:
        """Entry tick of step i as (coefficients over waits, constant)."""
        coef = np.zeros(self.n_wait)
        for m in range(i + 1):
            coef[self.var[j, m]] = 1
        const = self.specs[j].depart_not_before + sum(d - self.lags[j] for d in self.durs[j][:i])
        return coef, const

    def _exit(self, j: int, i: int) -> tuple[np.ndarray, int]:
        if i + 1 < len(self.routes[j]):
            coef, const = self._entry(j, i + 1)
            return coef, const + self.lags[j]
        coef, const = self._entry(j, i)
        return coef, const + self.durs[j][i]

    def solve(self) -> list[list[int]] | None:
        pairs = []
        for j, k in itertools.combinations(range(len(self.routes)), 2):
            pos_k = {loc: m for m, loc in enumerate(self.routes[k])}
            for i, loc in enumerate(self.routes[j]):
                if loc in pos_k:
                    pairs.append((j, i, k, pos_k[loc]))
        n = self.n_wait + len(pairs)
        big = 4 * (self.horizon + self.t_min + 1)
        rows, lo, hi = [], [], []
        for p, (j, i, k, m) in enumerate(pairs):
            y = np.zeros(n)
            y[self.n_wait + p] = 1
            ej, cej = self._entry(j, i)
            xj, cxj = self._exit(j, i)
            ek, cek = self._entry(k, m)
            xk, cxk = self._exit(k, m)
            # y = 0: k after j   e_k - x_j + big*y >= t_min + cx_j - ce_k
            rows.append(np.concatenate([ek - xj, np.zeros(len(pairs))]) + big * y)
            lo.append(self.t_min + cxj - cek)
            hi.append(np.inf)
            # y = 1: j after k   e_j - x_k - big*y >= t_min + cx_k - ce_j - big
            rows.append(np.concatenate([ej - xk, np.zeros(len(pairs))]) - big * y)
            lo.append(self.t_min + cxk - cej - big)
            hi.append(np.inf)
        for j, route in enumerate(self.routes):
            xj, cxj = self._exit(j, len(route) - 1)
            rows.append(np.concatenate([xj, np.zeros(len(pairs))]))
            lo.append(-np.inf)
            hi.append(self.horizon - cxj)
        c = np.concatenate([np.ones(self.n_wait), np.zeros(len(pairs))])
        upper = np.concatenate([np.full(self.n_wait, self.horizon), np.ones(len(pairs))])
        res = milp(c, integrality=np.ones(n), bounds=Bounds(np.zeros(n), upper),
                   constraints=LinearConstraint(np.array(rows), lo, hi) if rows else None)
        if res.status != 0:
            return None
        w = np.rint(res.x[:self.n_wait]).astype(int)
        return [[int(w[self.var[j, i]]) for i in range(len(r))] for j, r in enumerate(self.routes)]


def brute_force_optimal(specs: Sequence[TravellerSpec], net: RoadNetwork,
                        cfg: WorldConfig | None = None,
                        horizon: int = ORACLE_MAX_HORIZON) -> SolutionSet | None:
    """Minimum-cost conflict-free solution finishing by ``horizon``; ``None`` if none exists."""
    cfg = cfg or WorldConfig()
    if len(specs) > ORACLE_MAX_TRAVELLERS or len(net.locations) > ORACLE_MAX_LOCATIONS \
            or horizon > ORACLE_MAX_HORIZON:
        raise OversizedInstance(
            f"oracle limited to {ORACLE_MAX_TRAVELLERS} travellers, {ORACLE_MAX_LOCATIONS} "
            f"locations, horizon {ORACLE_MAX_HORIZON}")
    specs = list(specs)
    options = []
    for s in specs:
        routes = simple_paths(net, s.source, s.destination)
        priced = sorted((sum(traversal_duration(s, net[loc]) for loc in r), r) for r in routes)
        options.append(priced)
    combos = sorted(itertools.product(*options), key=lambda combo: (sum(b for b, _ in combo),
                                                                   [r for _, r in combo]))
    best_cost, best = None, None
    for combo in combos:
        base = sum(b for b, _ in combo)
        if best_cost is not None and base >= best_cost:
            break
        routes = [r for _, r in combo]
        waits = _WaitProgram(specs, routes, net, cfg.t_min, horizon).solve()
        if waits is None:
            continue
        total = base + sum(map(sum, waits))
        if best_cost is None or total < best_cost:
            plans = [build_schedule(s, r, s.depart_not_before, w, net)
                     for s, r, w in zip(specs, routes, waits)]
            best_cost, best = total, plans
    if best is None:
        return None
    return make_solution(best, {s.id: s for s in specs}, net)
