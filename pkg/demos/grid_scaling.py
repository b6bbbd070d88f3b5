"""How negotiation time grows with the number of travellers on an open 48x48 grid."""

import random
import time

from demapf import Engine, TravellerSpec
from demapf.netmodel import grid_network, node_id

cells = [(r, c) for r in range(48) for c in range(48)]
net = grid_network(48, 48, cells)

for n in (8, 16, 32):
    rng = random.Random(n)
    ends = rng.sample(cells, 2 * n)
    specs = [TravellerSpec(f"v{i:02d}", rng.randint(1, 4), rng.randint(1, 3),
                           node_id(*ends[i]), node_id(*ends[n + i])) for i in range(n)]
    t0 = time.perf_counter()
    engine = Engine(net, specs)
    sol = engine.run_to_convergence()
    dt = time.perf_counter() - t0
    print(f"{n:3d} travellers: {engine.round:3d} rounds, {engine.ct_nodes_expanded:4d} CT nodes, "
          f"cost {sol.cost}, {dt:.2f}s")
