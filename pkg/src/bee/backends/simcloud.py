"""Simulated cloud backends: managed-VM instances and bare-metal nodes.

Both ride the provider's flat subnet (no overlay to build) and a shared
network filesystem, so clusters here carry no overlay topology.  The
bare-metal variant runs containers straight on the host: no VM layer,
no virtualization compute penalty.
"""

from __future__ import annotations

from bee.backends.base import BackendCapability
from bee.backends.simhpc import SimHpcBackend


class SimCloudAwsBackend(SimHpcBackend):
    """Instance-based cluster: VM layer present, shared storage native."""

    name = "sim-cloud-aws"

    def capability(self) -> BackendCapability:
        return BackendCapability(
            has_vm_layer=True,
            native_shared_fs=True,
            topology_choices=frozenset(),
            cpu_overhead_fraction=self._overhead(),
        )


class SimCloudBaremetalBackend(SimHpcBackend):
    """Bare-metal cluster: containers run directly on hosts, no VM layer."""

    name = "sim-cloud-baremetal"

    def capability(self) -> BackendCapability:
        return BackendCapability(
            has_vm_layer=False,
            native_shared_fs=True,
            topology_choices=frozenset(),
            cpu_overhead_fraction=self._overhead(),
        )

    def _overhead(self) -> float:
        if self.cfg.cpu_overhead_fraction is not None:
            return self.cfg.cpu_overhead_fraction
        return 0.0
