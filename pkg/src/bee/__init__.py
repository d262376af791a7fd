"""Run containerized HPC applications across a prioritized pool of systems.

The engine deploys a virtualized cluster (VM layer plus container layer) on
whichever system currently holds the allocation, wires the nodes with an
overlay network, shares data through a modeled storage plan, and migrates the
application between systems via integrity-checked checkpoints.
"""

__version__ = "0.1.0"

from bee.model import (
    AppSpec,
    CommKind,
    CommPattern,
    ComputeSystem,
    ContainerSource,
    DataVolume,
    DiskBandwidth,
    HardwareConfig,
    Host,
    IoProfile,
    NetworkSolution,
    ResourcePool,
    RunState,
    StorageSolution,
    SystemKind,
    validate,
)
from bee.orchestrator import Outcome, RunResult, SlotRecord, run_workflow
from bee.backends import SimConfig, make_backend

__all__ = [
    "AppSpec",
    "CommKind",
    "CommPattern",
    "ComputeSystem",
    "ContainerSource",
    "DataVolume",
    "DiskBandwidth",
    "HardwareConfig",
    "Host",
    "IoProfile",
    "NetworkSolution",
    "Outcome",
    "ResourcePool",
    "RunResult",
    "RunState",
    "SimConfig",
    "SlotRecord",
    "StorageSolution",
    "SystemKind",
    "__version__",
    "make_backend",
    "run_workflow",
    "validate",
]
