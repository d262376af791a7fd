"""Compare the three overlay wirings: multicast hub, star, and binary tree.

The star minimizes hops but funnels every relayed message through the center;
the tree spreads relay work across interior nodes; multicast floods every
frame to all nodes, which only pays off for broadcast-heavy traffic.
"""

import random

from bee.model import NetworkSolution
from bee.netvirt.topology import build_topology, cost_of_trace, route

N = 16
MESSAGES = 2000

print(f"routes in a {N}-node overlay")
for kind in NetworkSolution:
    topo = build_topology(kind, N)
    path = route(topo, 5, 14)
    print(f"  {kind.value:<10} 5 -> 14: {' -> '.join(map(str, path))} "
          f"({len(path) - 1} hops)")

print()
print(f"uniform one-to-one traffic, {MESSAGES} messages, seed 7")
rng = random.Random(7)
trace = []
while len(trace) < MESSAGES:
    s, d = rng.randrange(N), rng.randrange(N)
    if s != d:
        trace.append((s, d, 65536))

print(f"  {'wiring':<10} {'wire msgs':>10} {'total hops':>11} {'max relay':>10}")
for kind in NetworkSolution:
    topo = build_topology(kind, N)
    cost = cost_of_trace(topo, trace)
    hot = max(cost.per_node_relay_load.values())
    print(f"  {kind.value:<10} {cost.messages_on_wire:>10} "
          f"{cost.total_hops:>11} {hot:>10}")

print()
print("relay load per node (who becomes the hot spot?)")
for kind in (NetworkSolution.P2P_STAR, NetworkSolution.P2P_TREE):
    topo = build_topology(kind, N)
    cost = cost_of_trace(topo, trace)
    loads = [cost.per_node_relay_load[i] for i in range(N)]
    bar = " ".join(f"{v:>4}" for v in loads)
    print(f"  {kind.value:<10} {bar}")
print("the star concentrates all relaying at node 0; the tree spreads it over")
print("interior nodes, which is why it wins for one-to-one heavy patterns")
