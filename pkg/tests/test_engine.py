import json
import random

import pytest

from demapf.baselines import _WaitProgram
from demapf.engine import (
    Engine,
    EngineConfig,
    FailureReport,
    LocalHost,
    default_max_rounds,
    load_config,
    solve,
)
from demapf.netmodel import RoadNetwork, TravellerSpec, WorldConfig
from demapf.plan import ProtocolViolation, SolutionSet, plan_cost, validate_solution
from demapf.protocol import MessageKind, Postmarks
from demapf.search import unconstrained_plan
from demapf.traveller import Traveller

from instances import TINY_CFG, line, open_grid, random_grid_scenario

FAST = TravellerSpec("F", 1, 2, "a", "b")    # node 1, edge 2, tpp 1
SLOW = TravellerSpec("S", 1, 1, "a", "b")    # node 1, edge 4, tpp 1


def test_single_traveller_one_round():
    net = line(3)
    spec = TravellerSpec("t", 2, 1, "a", "c")
    e = Engine(net, [spec], TINY_CFG)
    sol = e.run_to_convergence()
    assert e.round == 1
    assert sol.plans["t"] == unconstrained_plan(spec, net)


def test_bridge_hand_trace():
    net = line(2)
    e = Engine(net, [SLOW, FAST], TINY_CFG)
    e.trace = True
    sol = e.run_to_convergence()
    # round 1: Router a pushes S to (2, 3) -> wait 2 before departing
    # round 2: Router a-b pushes S from (2, 6) to (3, 7) -> wait 1 more before the edge
    # round 3: every proposal matches
    assert [r.acceptances for r in e.reports] == [["F"], [], ["S"]]
    assert sol.plans["S"].waits == (2, 1, 0)
    assert [tuple(s) for s in sol.plans["S"].slots] == [(2, 4), (3, 7), (6, 7)]
    fast_cost, slow_cost = 4, 6
    assert sol.cost == fast_cost + slow_cost + 3
    assert validate_solution(sol, {s.id: s for s in (FAST, SLOW)}, net, TINY_CFG) is None


def test_unreachable_goal_partial_report():
    net = RoadNetwork.from_links("abcd", [("a", "b"), ("c", "d")], TINY_CFG)
    ok = TravellerSpec("ok", 1, 1, "a", "b")
    stuck = TravellerSpec("stuck", 1, 1, "a", "d")
    e = Engine(net, [ok, stuck], TINY_CFG)
    assert e.statuses["stuck"].value == "failed"      # known before the first round
    report = e.run_to_convergence()
    assert isinstance(report, FailureReport)
    assert report.failed == ["stuck"]
    assert report.reason == "traveller failed"
    assert list(report.partial.plans) == ["ok"]
    assert json.loads(json.dumps(report.to_json()))["statuses"] == {"ok": "plan_found", "stuck": "failed"}


def test_max_rounds_must_be_positive():
    with pytest.raises(ValueError):
        Engine(line(2), [SLOW], TINY_CFG).run_to_convergence(0)


def test_max_rounds_exhausted():
    report = Engine(line(2), [SLOW, FAST], TINY_CFG).run_to_convergence(1)
    assert isinstance(report, FailureReport)
    assert report.reason == "max_rounds exhausted" and report.failed == ["S"]


def test_plus_crossing_against_oracle():
    cfg = TINY_CFG
    net = RoadNetwork.from_links("onsew", [("o", x) for x in "nsew"], cfg)
    specs = [TravellerSpec("n", 1, 1, "n", "s"), TravellerSpec("s", 2, 1, "s", "n"),
             TravellerSpec("e", 1, 2, "e", "w"), TravellerSpec("w", 2, 2, "w", "e")]
    sol = solve(net, specs, cfg)
    assert isinstance(sol, SolutionSet)
    assert validate_solution(sol, {s.id: s for s in specs}, net, cfg) is None
    # routes are forced on a star, so the exact wait program gives the optimum
    solo = [unconstrained_plan(s, net) for s in specs]
    waits = _WaitProgram(specs, [p.locations for p in solo], net, cfg.t_min, 64).solve()
    assert waits is not None
    best = sum(plan_cost(p, s, net) for p, s in zip(solo, specs)) + sum(map(sum, waits))
    assert best <= sol.cost


def test_order_and_host_split_do_not_matter():
    net = open_grid(8)
    cfg = WorldConfig()
    specs = random_grid_scenario(11)
    ref = solve(net, specs, cfg).dumps()
    ids = [s.id for s in specs]
    random.Random(0).shuffle(ids)
    assert solve(net, specs, cfg, order=ids).dumps() == ref
    by_id = {s.id: s for s in specs}
    hosts = [LocalHost([Traveller(by_id[i], net, cfg) for i in ids[k::3]]) for k in range(3)]
    assert Engine(net, specs, cfg, hosts=hosts).run_to_convergence().dumps() == ref


def test_round_invariants():
    net = open_grid(8)
    cfg = WorldConfig()
    specs = random_grid_scenario(4)
    e = Engine(net, specs, cfg)
    e.trace = True
    accepted = {}
    while not e.converged:
        report = e.run_round()
        # conservation: one proposal per request
        assert report.proposals == report.requests
        mine = [t for t in e.router_trace if t[0] == e.round]
        pairs = {(loc, tid) for _, loc, tid, _, _ in mine}
        assert len(pairs) == len(mine)
        for tid, plan in e.plans.items():
            assert accepted.setdefault(tid, plan) == plan     # finality
        for _, loc, tid, req, prop in mine:
            assert prop[0] >= req[0] and prop[1] - prop[0] == req[1] - req[0]
    with pytest.raises(RuntimeError):
        e.run_round()


class RogueHost(LocalHost):
    def emit(self, rnd):
        return [Postmarks().stamp(MessageKind.RESERVE_REQUEST, rnd, "t", "nowhere", {})]


def test_protocol_violation_carries_message():
    net = line(2)
    host = RogueHost([Traveller(SLOW, net, TINY_CFG)])
    e = Engine(net, [SLOW], TINY_CFG, hosts=[host])
    with pytest.raises(ProtocolViolation) as info:
        e.run_round()
    assert info.value.offending.recipient == "nowhere"


def test_hosts_must_cover_travellers():
    net = line(2)
    with pytest.raises(ValueError):
        Engine(net, [SLOW, FAST], TINY_CFG, hosts=[LocalHost([Traveller(SLOW, net, TINY_CFG)])])


def test_default_max_rounds():
    assert default_max_rounds([3, 5]) == 2 ** 3 + 2 ** 5
    assert default_max_rounds([40]) == 2 ** 12
    assert default_max_rounds([12] * 100) == 100_000


def test_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"t_min": 2, "edge_length": 5, "max_rounds": 9, "seedless": True,
                                "transport": {"mode": "tcp", "listen": "127.0.0.1:9"}}))
    cfg = load_config(path)
    assert cfg == EngineConfig(WorldConfig(edge_length=5, t_min=2), 9, "tcp", "127.0.0.1:9", None)
    with pytest.raises(ValueError):
        EngineConfig.from_json({"tmin": 1})
