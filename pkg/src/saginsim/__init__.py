"""saginsim: deterministic simulator for a layered space-air-ground network,
comparing propagation-distance shortest-path routing against CNN-selected
path combinations."""

from .metrics import MetricsReport
from .netsim import (PacketSimulation, active_kernel_name, buffer_snapshot,
                     run_packet_sim)
from .fluid import run_fluid_eval
from .topology import (NodeKind, Side, Topology, TopologyConfig,
                       build_reference_topology, cross_section_capacity,
                       dump_topology, shortest_path)
from .traffic import (BurstParams, Flow, LoadTrace, TrafficPattern,
                      instantaneous_rate, observe_pattern, select_active_sources)

__version__ = "0.1.0"

__all__ = [
    "MetricsReport", "PacketSimulation", "active_kernel_name", "buffer_snapshot",
    "run_packet_sim", "run_fluid_eval", "NodeKind", "Side", "Topology",
    "TopologyConfig", "build_reference_topology", "cross_section_capacity",
    "dump_topology", "shortest_path", "BurstParams", "Flow", "LoadTrace",
    "TrafficPattern", "instantaneous_rate", "observe_pattern",
    "select_active_sources", "__version__",
]
