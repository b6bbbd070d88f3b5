"""Half of the travellers run in a second OS process over TCP.

The worker is started on a local port; its travellers exchange the same
round messages as the local ones, so the final plans are byte-identical.
"""

import random

from demapf import EngineConfig, TravellerSpec
from demapf.cli import run_demapf
from demapf.netmodel import grid_network, node_id

rng = random.Random(1)
net = grid_network(16, 16, [(r, c) for r in range(16) for c in range(16)])
cells = rng.sample([(r, c) for r in range(16) for c in range(16)], 20)
specs = [TravellerSpec(f"v{i}", rng.randint(1, 4), rng.randint(1, 3), node_id(*cells[i]), node_id(*cells[i + 10]))
         for i in range(10)]

local, _ = run_demapf(net, specs, EngineConfig())
remote, engine = run_demapf(net, specs, EngineConfig(), transport="tcp")
print("hosts:", [type(h).__name__ for h in engine.hosts])
print("rounds:", engine.round, "messages:", engine.messages)
print("cost local/tcp:", local.cost, remote.cost)
print("identical JSON:", local.dumps() == remote.dumps())
