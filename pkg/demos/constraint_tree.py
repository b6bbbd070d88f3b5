"""One traveller's search tree, grown by hand.

We play the Routers ourselves: node ``b`` answers three ticks late.  The
traveller then holds two alternatives, waiting at ``b`` or avoiding ``b``
while it is busy, and picks the cheaper one next.
"""

import json

from demapf import RoadNetwork, TimeSlot, Traveller, TravellerSpec, WorldConfig

cfg = WorldConfig(edge_length=3, t_min=1)
diamond = RoadNetwork.from_links("abcd", [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")], cfg)
t = Traveller(TravellerSpec("t", 1, 1, "a", "d"), diamond, cfg)

requests = t.next_request()
print("root plan:", [(loc, tuple(r.slot)) for loc, r in requests])

proposals = {loc: r.slot for loc, r in requests}
late = proposals["b"]
proposals["b"] = TimeSlot(late.entry + 3, late.exit + 3)
result = t.process_proposals(proposals)
print("first deviation:", result.deviation)
for child in result.children:
    print(f"  {child.kind} child, cost {child.cost}, route {child.plan.locations}")

print("next request goes via", [loc for loc, _ in t.next_request()])
print(json.dumps(t.tree_json()["root"]["children"][1]["constraints"]))
