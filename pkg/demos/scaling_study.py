"""Replay a communication-heavy workload at increasing process counts.

The VM-overlay ranking comes from the relay bottleneck: the tree overlay beats
the star, both beat the multicast flood for one-to-one traffic, and a
provider-managed flat network (cloud) tops them all.
"""

from bee.model import (
    AppSpec,
    CommKind,
    CommPattern,
    ComputeSystem,
    ContainerSource,
    DiskBandwidth,
    Host,
    IoProfile,
    NetworkSolution,
    SystemKind,
)
from bee.backends import SimConfig, make_backend
from bee.backends.scaling import replay_scaling

COUNTS = [1, 2, 4, 8, 16, 32, 64]

app = AppSpec(
    name="particle-push",
    container_source=ContainerSource(image_ref="registry/particles:1"),
    entry_command=("mpirun", "particles"),
    process_count=64,
    comm_pattern=CommPattern(CommKind.ONE_TO_ONE_HEAVY),
    work_total=2000.0,
    io_profile=IoProfile(0, 0),
    checkpointable=True)


def system(name, kind):
    return ComputeSystem(
        id=name, kind=kind, hosts=tuple(Host(f"h{i}") for i in range(64)),
        time_slot=86400.0, kvm_available=True, host_file_sharing=True,
        net_bandwidth_native=100.0,
        disk_bandwidth_native=DiskBandwidth(500.0, 500.0),
        cpu_rate_native=1.0)


hpc = make_backend(system("hpc", SystemKind.HPC), SimConfig(backend="sim-hpc", seed=42))
cloud = make_backend(system("cloud", SystemKind.CLOUD_AWS_LIKE),
                     SimConfig(backend="sim-cloud-aws", seed=42))
metal = make_backend(system("metal", SystemKind.CLOUD_BAREMETAL_LIKE),
                     SimConfig(backend="sim-cloud-baremetal", seed=42))

curves = {}
for kind in (NetworkSolution.MULTICAST, NetworkSolution.P2P_STAR,
             NetworkSolution.P2P_TREE):
    curves[f"vm/{kind.value}"] = replay_scaling(app, hpc, kind, COUNTS)
curves["cloud/flat"] = replay_scaling(app, cloud, None, COUNTS)
curves["baremetal/flat"] = replay_scaling(app, metal, None, COUNTS)

header = f"{'procs':>6}" + "".join(f"{name:>18}" for name in curves)
print("speedup over one process (higher is better)")
print(header)
for i, procs in enumerate(COUNTS):
    row = f"{procs:>6}"
    for rows in curves.values():
        row += f"{rows[i].speedup:>18.2f}"
    print(row)

print()
print("at 64 processes the overlay cost separates the wirings:")
for name, rows in curves.items():
    last = rows[-1]
    print(f"  {name:<16} runtime {last.runtime_s:8.2f}s "
          f"(compute {last.compute_s:6.2f}s + comm {last.comm_s:6.2f}s)")
