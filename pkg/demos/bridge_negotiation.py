"""Two travellers want the same one-lane bridge at the same time.

The faster one gets it untouched.  The slower one is pushed back by the
Routers, first at the start node and then on the bridge itself, and we
watch it fold those delays into its plan round by round.
"""

from demapf import Engine, RoadNetwork, TravellerSpec, WorldConfig

cfg = WorldConfig(edge_length=3, t_min=1)
net = RoadNetwork.from_links(["a", "b"], [("a", "b")], cfg)
fast = TravellerSpec("F", length=1, speed=2, source="a", destination="b")
slow = TravellerSpec("S", length=1, speed=1, source="a", destination="b")

engine = Engine(net, [slow, fast], cfg)
engine.trace = True
while not engine.converged:
    report = engine.run_round()
    print(f"round {report.round}: {report.requests} requests, accepted {report.acceptances or '-'}")
    for rnd, loc, tid, asked, got in engine.router_trace:
        if rnd == report.round and asked != got:
            print(f"    Router {loc} moved {tid} from {asked} to {got}")

solution = engine.run_to_convergence()
for tid, plan in sorted(solution.plans.items()):
    steps = ", ".join(f"{loc}{tuple(slot)}" for loc, slot in plan.steps)
    print(f"{tid}: waits {plan.waits} -> {steps}")
print("total cost", solution.cost)
