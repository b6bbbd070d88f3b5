import heapq

from hypothesis import given, settings
from hypothesis import strategies as st

from demapf.netmodel import RoadNetwork, TravellerSpec, tpp, traversal_duration
from demapf.plan import plan_cost, validate_plan
from demapf.search import Constraint, constrained_shortest_path, unconstrained_plan, violates

from instances import TINY_CFG, line, tiny_networks

# top route a-b-d is short; bottom route a-c-e-d has one more node and edge
DETOUR = RoadNetwork.from_links("abcde", [("a", "b"), ("b", "d"), ("a", "c"), ("c", "e"), ("e", "d")],
                                TINY_CFG)
UNIT = TravellerSpec("t", 1, 1, "a", "d")   # node 1 tick, edge 4 ticks, tpp 1


def test_no_constraints_is_root_plan():
    plan = constrained_shortest_path(UNIT, DETOUR)
    assert plan.locations == ("a", "a-b", "b", "b-d", "d")
    assert plan_cost(plan, UNIT, DETOUR) == 11
    assert plan == unconstrained_plan(UNIT, DETOUR)


def test_short_block_is_waited_out():
    # head reaches b at tick 3; blocking b until 6 costs a 3-tick wait (14 < 16)
    plan = constrained_shortest_path(UNIT, DETOUR, [Constraint("b", 0, 6)])
    assert plan.locations[2] == "b" and plan.steps[2][1].entry == 6
    assert plan_cost(plan, UNIT, DETOUR) == 14


def test_tie_prefers_smaller_route_ids():
    # waiting until 8 costs 16, the same as the bottom route
    plan = constrained_shortest_path(UNIT, DETOUR, [Constraint("b", 0, 8)])
    assert plan.locations[1] == "a-b"
    assert plan_cost(plan, UNIT, DETOUR) == 16


def test_long_block_takes_detour():
    plan = constrained_shortest_path(UNIT, DETOUR, [Constraint("b", 0, 50)])
    assert plan.locations == ("a", "a-c", "c", "c-e", "e", "d-e", "d")
    assert plan_cost(plan, UNIT, DETOUR) == 16


def test_single_edge_blocked_then_waits():
    net = line(2)
    spec = TravellerSpec("t", 1, 1, "a", "b")
    plan = constrained_shortest_path(spec, net, [Constraint("a-b", 0, 100)])
    assert plan.steps[1][1].entry == 100
    assert plan_cost(plan, spec, net) == 6 + 100


def test_horizon_makes_failure_decidable():
    net = line(2)
    spec = TravellerSpec("t", 1, 1, "a", "b")
    assert constrained_shortest_path(spec, net, [Constraint("a-b", 0, 100)], horizon=50) is None


def test_depart_respected():
    spec = TravellerSpec("t", 1, 1, "a", "d", 7)
    assert constrained_shortest_path(spec, DETOUR).start == 7


def test_disconnected_is_none():
    net = RoadNetwork.from_links("abc", [("a", "b")], TINY_CFG)
    assert constrained_shortest_path(TravellerSpec("t", 1, 1, "a", "c"), net) is None


def oracle(spec: TravellerSpec, net: RoadNetwork, constraints, horizon: int):
    """Cheapest (cost, path, waits) over simple paths and every integer wait up to ``horizon``."""
    lag = tpp(spec)
    dur = {k: traversal_duration(spec, v) for k, v in net.locations.items()}

    def clear(loc, a, b):
        return all(not (c.location == loc and a < c.end and c.start < b) for c in constraints)

    heap = []
    d0 = spec.depart_not_before
    for e in range(d0, horizon + 1):
        if clear(spec.source, e, e + dur[spec.source]):
            heapq.heappush(heap, (e - d0, (spec.source,), (e - d0,), e))
    while heap:
        g, path, waits, e = heapq.heappop(heap)
        here = path[-1]
        if here == spec.destination:
            return g + dur[here], path, waits
        early = e + dur[here] - lag
        for nxt in net.adjacency[here]:
            if nxt in path:
                continue
            for t in range(early, horizon + 1):
                if not clear(here, e, t + lag):
                    break
                if clear(nxt, t, t + dur[nxt]):
                    heapq.heappush(heap, (g + dur[here] + t - early, path + (nxt,), waits + (t - early,), t))
    return None


nets = tiny_networks()


@st.composite
def instances(draw):
    name = draw(st.sampled_from(sorted(nets)))
    net = nets[name]
    s, d = draw(st.lists(st.sampled_from(net.nodes), min_size=2, max_size=2, unique=True))
    spec = TravellerSpec("t", draw(st.integers(1, 3)), draw(st.integers(1, 3)), s, d,
                         draw(st.integers(0, 3)))
    locs = sorted(net.locations)
    cons = draw(st.lists(st.builds(lambda loc, a, w: Constraint(loc, a, a + w),
                                   st.sampled_from(locs), st.integers(0, 20), st.integers(1, 10)),
                         max_size=4))
    return net, spec, cons


@settings(max_examples=120, deadline=None)
@given(instances())
def test_matches_exhaustive_oracle(inst):
    net, spec, cons = inst
    base = plan_cost(unconstrained_plan(spec, net), spec, net)
    horizon = max([spec.depart_not_before] + [c.end for c in cons]) + base
    found = constrained_shortest_path(spec, net, cons)
    best = oracle(spec, net, cons, horizon)
    if best is None:
        assert found is None
        return
    assert found is not None
    validate_plan(found, spec, net)
    assert not violates(found, cons)
    assert max(s.entry for s in found.slots) <= horizon
    assert plan_cost(found, spec, net) == best[0]
    # among equally cheap plans the lexicographically smallest route wins
    assert found.locations <= best[1]
