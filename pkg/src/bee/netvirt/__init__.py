"""Overlay network plane: topology/cost models and the socket relay agents."""

from bee.netvirt.topology import (
    HUB,
    CommCost,
    RoutingTable,
    Topology,
    build_routing_table,
    build_topology,
    cost_of_trace,
    per_node_tx_bytes,
    predict_link_frames,
    route,
)

__all__ = [
    "HUB",
    "CommCost",
    "RoutingTable",
    "Topology",
    "build_routing_table",
    "build_topology",
    "cost_of_trace",
    "per_node_tx_bytes",
    "predict_link_frames",
    "route",
]
