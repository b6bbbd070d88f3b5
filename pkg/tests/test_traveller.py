import pytest

from demapf.netmodel import RoadNetwork, TravellerSpec
from demapf.plan import ProtocolViolation, TimeSlot, build_schedule, plan_cost
from demapf.search import Constraint, violates
from demapf.traveller import Accepted, CTNode, Expanded, InvariantBreach, OpenSet, Status, Traveller

from instances import TINY_CFG, line, tiny_networks

DIAMOND = tiny_networks()["diamond"]
UNIT = TravellerSpec("t", 1, 1, "a", "d")    # node 1 tick, edge 4 ticks, tpp 1


def echo(t: Traveller, **delays) -> dict:
    """Proposals equal to the requests, except for the named locations."""
    out = {}
    for loc, r in t.next_request():
        d = delays.get(loc.replace("-", "_"), 0)
        out[loc] = TimeSlot(r.slot.entry + d, r.slot.exit + d)
    return out


class TestInit:
    def test_root_plan(self):
        t = Traveller(TravellerSpec("t", 1, 1, "a", "b"), line(2), TINY_CFG)
        assert t.root.plan.locations == ("a", "a-b", "b")
        assert t.root.plan.start == 0
        assert len(t.open) == 1 and t.status is Status.NEGOTIATING

    def test_depart(self):
        t = Traveller(TravellerSpec("t", 1, 1, "a", "b", 7), line(2), TINY_CFG)
        assert t.root.plan.start == 7

    def test_unreachable_fails_immediately(self):
        net = RoadNetwork.from_links("abc", [("a", "b")], TINY_CFG)
        t = Traveller(TravellerSpec("t", 1, 1, "a", "c"), net, TINY_CFG)
        assert t.status is Status.FAILED
        assert t.next_request() == []


class TestNegotiation:
    def test_requests_mirror_root(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        reqs = t.next_request()
        assert [(loc, r.slot) for loc, r in reqs] == list(t.root.plan.steps)
        assert all(r.speed == 1 and r.length == 1 and not r.committed for _, r in reqs)

    def test_accept_when_unchanged(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        result = t.process_proposals(echo(t))
        assert isinstance(result, Accepted)
        assert t.status is Status.PLAN_FOUND and t.final_plan == t.root.plan
        assert all(r.committed for _, r in t.next_request())

    def test_wait_and_detour_children(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        # root: a(0,1) a-b(0,4) b(3,4) b-d(3,7) d(6,7); delay b by 3
        result = t.process_proposals(echo(t, b=3))
        assert isinstance(result, Expanded)
        assert result.deviation == (2, 3)
        wait, detour = result.children
        assert wait.kind == "wait" and wait.cost == t.root.cost + 3 == 14
        assert wait.plan.steps[2] == ("b", TimeSlot(6, 7))
        assert wait.constraints == frozenset()
        assert detour.kind == "detour"
        assert detour.constraints == {Constraint("b", 3, 6)}
        assert not violates(detour.plan, detour.constraints)
        assert detour.plan.locations == ("a", "a-c", "c", "c-d", "d")
        assert detour.cost == 11

    def test_bridge_gives_only_wait_child(self):
        net = line(3)
        spec = TravellerSpec("t", 1, 1, "a", "c")
        t = Traveller(spec, net, TINY_CFG)
        result = t.process_proposals(echo(t, b=2))
        # the detour search finds the same route with the same wait, a duplicate
        assert [c.kind for c in result.children] == ["wait"]
        assert t.discarded["duplicate"] == 1

    def test_cheapest_node_next(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        t.process_proposals(echo(t, b=3))
        # detour (cost 11) beats wait (cost 14)
        assert [loc for loc, _ in t.next_request()][1] == "a-c"

    def test_protocol_violation_on_foreign_location(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        props = echo(t)
        props["zz"] = TimeSlot(0, 1)
        with pytest.raises(ProtocolViolation):
            t.process_proposals(props)

    def test_proposals_while_idle(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        with pytest.raises(ProtocolViolation):
            t.process_proposals({})

    def test_empty_open_set_fails(self):
        net = line(2)
        t = Traveller(TravellerSpec("t", 1, 1, "a", "b"), net, TINY_CFG)
        t.open = OpenSet()
        assert t.next_request() == [] and t.status is Status.FAILED

    def test_acceptance_above_open_minimum_is_caught(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        props = echo(t)
        cheap = build_schedule(UNIT, ["a", "a-c", "c", "c-d", "d"], 0, None, DIAMOND)
        t.open.push(CTNode(cheap, frozenset(), plan_cost(cheap, UNIT, DIAMOND) - 1, seq=99))
        with pytest.raises(InvariantBreach):
            t.process_proposals(props)

    def test_tree_dump(self):
        t = Traveller(UNIT, DIAMOND, TINY_CFG)
        t.process_proposals(echo(t, b=3))
        tree = t.tree_json()
        assert tree["root"]["cost"] == 11
        assert [c["kind"] for c in tree["root"]["children"]] == ["wait", "detour"]
        assert tree["root"]["children"][1]["constraints"] == [{"loc": "b", "start": 3, "end": 6}]


class TestOpenSet:
    def _node(self, cost, seq, path=("a", "a-b", "b")):
        plan = build_schedule(TravellerSpec("t", 1, 1, "a", "b"), path, 0, [0, seq, 0], line(2))
        return CTNode(plan, frozenset(), cost, seq=seq)

    def test_least_cost_first(self):
        o = OpenSet()
        o.push(self._node(13, 0))
        o.push(self._node(9, 1))
        assert o.pop().cost == 9

    def test_ties_by_insertion(self):
        o = OpenSet()
        o.push(self._node(9, 0))
        o.push(self._node(9, 1))
        assert [o.pop().seq, o.pop().seq] == [0, 1]

    def test_no_duplicate_members(self):
        o = OpenSet()
        o.push(self._node(9, 0))
        with pytest.raises(ValueError):
            o.push(self._node(9, 0))
