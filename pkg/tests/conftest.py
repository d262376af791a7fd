import pytest

from bee.model import (
    AppSpec,
    CommKind,
    CommPattern,
    ComputeSystem,
    ContainerSource,
    DiskBandwidth,
    HardwareConfig,
    Host,
    IoProfile,
    NetworkSolution,
    ResourcePool,
    StorageSolution,
    SystemKind,
)


def make_system(sid="alpha", n_hosts=2, time_slot=100.0, cpu_rate=1.0,
                net_bw=100.0, disk_read=500.0, disk_write=500.0,
                kind=SystemKind.HPC, host_file_sharing=False):
    return ComputeSystem(
        id=sid, kind=kind,
        hosts=tuple(Host(f"{sid}-h{i}") for i in range(n_hosts)),
        time_slot=time_slot, kvm_available=True,
        host_file_sharing=host_file_sharing,
        net_bandwidth_native=net_bw,
        disk_bandwidth_native=DiskBandwidth(disk_read, disk_write),
        cpu_rate_native=cpu_rate)


def make_app(name="demo", work_total=50.0, process_count=2, checkpointable=True,
             comm=CommKind.ONE_TO_ONE_HEAVY, ratio=None, image_ref="demo:1",
             buildfile=None, io_read=0, io_write=0):
    source = ContainerSource(image_ref=image_ref, buildfile=buildfile)
    if buildfile is not None:
        source = ContainerSource(image_ref=None, buildfile=buildfile)
    return AppSpec(
        name=name, container_source=source, entry_command=("mpirun", name),
        process_count=process_count, comm_pattern=CommPattern(comm, ratio),
        work_total=work_total,
        io_profile=IoProfile(io_read, io_write), checkpointable=checkpointable)


def make_hardware(network=NetworkSolution.P2P_TREE,
                  storage=StorageSolution.VIRTIO_PASSTHROUGH,
                  vcpus=1, ssh_base_port=10022):
    return HardwareConfig(vcpus=vcpus, ram_mb=1024, network_solution=network,
                          storage_solution=storage, ssh_base_port=ssh_base_port)


def make_pool(*systems):
    return ResourcePool(systems=tuple(systems))


@pytest.fixture
def small_pool():
    return make_pool(make_system("alpha"), make_system("beta"))
