"""DeMAPF next to a one-at-a-time priority planner and the exact optimum.

The network is a kite: a diamond with a tail.  Two travellers cross it in
opposite directions and a third leaves from the tail.
"""

from demapf import RoadNetwork, TravellerSpec, WorldConfig, brute_force_optimal, priority_plan, solve

cfg = WorldConfig(edge_length=3, t_min=1)
kite = RoadNetwork.from_links("abcde", [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", "e")], cfg)
specs = [
    TravellerSpec("t0", 2, 1, "a", "e"),
    TravellerSpec("t1", 1, 2, "e", "a"),
    TravellerSpec("t2", 3, 1, "b", "c", 1),
]

results = {
    "oracle": brute_force_optimal(specs, kite, cfg),
    "demapf": solve(kite, specs, cfg),
    "priority": priority_plan(specs, kite, cfg),
    "priority (reroute)": priority_plan(specs, kite, cfg, reroute=True),
}
best = results["oracle"].cost
for name, sol in results.items():
    print(f"{name:>20}: cost {sol.cost:3d} (x{sol.cost / best:.2f}), makespan {sol.makespan}")
    for tid, plan in sorted(sol.plans.items()):
        print(f"{'':>22}{tid} {' '.join(plan.locations)}  waits {plan.waits}")
