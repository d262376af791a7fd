"""Domain types, validation, and the JSON file formats shared by the whole engine.

All types here are immutable values; runtime state lives in the orchestrator
and cluster layers.  Bandwidths are MB/s with MB = 2**20 bytes throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

MB = 1 << 20

# Progress/work arithmetic is quantized to this step so that slot-by-slot
# progress deltas sum back to the total without floating-point residue.
WORK_QUANTUM = 2.0 ** -20


class SystemKind(str, Enum):
    HPC = "hpc"
    CLOUD_AWS_LIKE = "cloud-aws-like"
    CLOUD_BAREMETAL_LIKE = "cloud-baremetal-like"


class NetworkSolution(str, Enum):
    MULTICAST = "multicast"
    P2P_STAR = "p2p_star"
    P2P_TREE = "p2p_tree"


class StorageSolution(str, Enum):
    DATA_IMAGE_NFS = "data_image_nfs"
    VIRTIO_PASSTHROUGH = "virtio_passthrough"


class CommKind(str, Enum):
    ALL_TO_ALL = "all_to_all"
    ONE_TO_ONE_HEAVY = "one_to_one_heavy"
    MIXED = "mixed"


class Phase(str, Enum):
    INIT = "init"
    DEPLOYING = "deploying"
    RUNNING = "running"
    CHECKPOINTING = "checkpointing"
    MIGRATING = "migrating"
    STALLED = "stalled"
    COMPLETE = "complete"
    FAILED = "failed"


DETACHED = "detached"


class ParseError(ValueError):
    """Raised when a JSON document does not match the expected schema."""


@dataclass(frozen=True)
class Host:
    id: str


@dataclass(frozen=True)
class DiskBandwidth:
    read: float
    write: float


@dataclass(frozen=True)
class ComputeSystem:
    """One schedulable system in the pool: a set of hosts plus a time-slot budget."""

    id: str
    kind: SystemKind
    hosts: tuple[Host, ...]
    time_slot: float
    kvm_available: bool
    host_file_sharing: bool
    net_bandwidth_native: float
    disk_bandwidth_native: DiskBandwidth
    cpu_rate_native: float


@dataclass(frozen=True)
class ResourcePool:
    """Priority-ordered systems; the head is tried first."""

    systems: tuple[ComputeSystem, ...]


@dataclass(frozen=True)
class ContainerSource:
    """Exactly one of image_ref / buildfile should be set."""

    image_ref: str | None = None
    buildfile: str | None = None


@dataclass(frozen=True)
class CommPattern:
    kind: CommKind
    ratio: float | None = None  # fraction of one-to-one traffic, mixed only


@dataclass(frozen=True)
class IoProfile:
    read_bytes_per_slot: int
    write_bytes_per_slot: int


@dataclass(frozen=True)
class AppSpec:
    """Descriptor of the containerized application to run."""

    name: str
    container_source: ContainerSource
    entry_command: tuple[str, ...]
    process_count: int
    comm_pattern: CommPattern
    work_total: float
    io_profile: IoProfile
    checkpointable: bool


@dataclass(frozen=True)
class HardwareConfig:
    """Per-node virtual hardware plus the network/storage wiring choices."""

    vcpus: int
    ram_mb: int
    network_solution: NetworkSolution
    storage_solution: StorageSolution
    ssh_base_port: int


@dataclass(frozen=True)
class DataVolume:
    """Content-addressed blob of application data; bytes live in the volume store."""

    id: str
    byte_size: int
    content_digest: str
    location: str = DETACHED


@dataclass(frozen=True)
class RunState:
    phase: Phase = Phase.INIT
    current_system: str | None = None
    last_host_system: str | None = None
    need_migration: bool = False
    progress: float = 0.0
    slots_consumed: int = 0


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str


def quantize_work(value: float) -> float:
    """Snap work-units to the nearest lattice point (exact in binary floats).

    Keeping all progress values on one dyadic lattice makes slot deltas and
    their sums exact, and nearest-rounding absorbs clock round-off so a job
    finishing at an integer second is not pushed into the next poll.
    """
    if value <= 0:
        return 0.0
    return round(value / WORK_QUANTUM) * WORK_QUANTUM


# ---------------------------------------------------------------------------
# validation


def _check_system(sys_: ComputeSystem, where: str, out: list[Violation]) -> None:
    if not sys_.hosts:
        out.append(Violation(f"{where}.hosts", "non-empty", "system has no hosts"))
    if sys_.time_slot <= 0:
        out.append(Violation(f"{where}.time_slot", "> 0", f"got {sys_.time_slot}"))
    if sys_.net_bandwidth_native <= 0:
        out.append(Violation(f"{where}.net_bandwidth_native", "> 0", f"got {sys_.net_bandwidth_native}"))
    if sys_.disk_bandwidth_native.read <= 0 or sys_.disk_bandwidth_native.write <= 0:
        out.append(Violation(f"{where}.disk_bandwidth_native", "> 0", "read/write bandwidth must be positive"))
    if sys_.cpu_rate_native <= 0:
        out.append(Violation(f"{where}.cpu_rate_native", "> 0", f"got {sys_.cpu_rate_native}"))
    host_ids = [h.id for h in sys_.hosts]
    if len(set(host_ids)) != len(host_ids):
        out.append(Violation(f"{where}.hosts", "unique ids", "duplicate host ids"))


def validate(pool: ResourcePool, app: AppSpec, hardware: HardwareConfig) -> list[Violation]:
    """Check every type invariant plus placement satisfiability.

    Returns a list of violations (empty means valid); never raises on bad input.
    Placement rule: one application node per host, so the app fits a system iff
    that system has at least process_count hosts.
    """
    out: list[Violation] = []

    if not pool.systems:
        out.append(Violation("pool.systems", "non-empty", "pool has no systems"))
    ids = [s.id for s in pool.systems]
    if len(set(ids)) != len(ids):
        out.append(Violation("pool.systems", "unique ids", "duplicate system ids"))
    for i, sys_ in enumerate(pool.systems):
        _check_system(sys_, f"pool.systems[{i}]", out)

    src = app.container_source
    if (src.image_ref is None) == (src.buildfile is None):
        out.append(Violation("app.container_source", "exactly one variant",
                             "set exactly one of image_ref / buildfile"))
    if app.process_count < 1:
        out.append(Violation("app.process_count", ">= 1", f"got {app.process_count}"))
    if app.work_total <= 0:
        out.append(Violation("app.work_total", "> 0", f"got {app.work_total}"))
    if app.comm_pattern.kind is CommKind.MIXED:
        if app.comm_pattern.ratio is None or not (0.0 <= app.comm_pattern.ratio <= 1.0):
            out.append(Violation("app.comm_pattern.ratio", "in [0, 1]",
                                 f"mixed pattern needs a ratio, got {app.comm_pattern.ratio}"))
    elif app.comm_pattern.ratio is not None:
        out.append(Violation("app.comm_pattern.ratio", "mixed only",
                             "ratio is only meaningful for the mixed pattern"))
    if app.io_profile.read_bytes_per_slot < 0 or app.io_profile.write_bytes_per_slot < 0:
        out.append(Violation("app.io_profile", ">= 0", "byte counts must be non-negative"))
    if not app.entry_command:
        out.append(Violation("app.entry_command", "non-empty", "missing entry command"))

    if hardware.vcpus < 1:
        out.append(Violation("uconf.vcpus", ">= 1", f"got {hardware.vcpus}"))
    if hardware.ram_mb < 1:
        out.append(Violation("uconf.ram_mb", ">= 1", f"got {hardware.ram_mb}"))
    if not (1024 <= hardware.ssh_base_port < 65535):
        out.append(Violation("uconf.ssh_base_port", "in [1024, 65535)", f"got {hardware.ssh_base_port}"))

    if pool.systems and app.process_count >= 1:
        if not any(len(s.hosts) >= app.process_count for s in pool.systems):
            out.append(Violation("pool.systems", "insufficient hosts",
                                 f"no system has {app.process_count} hosts for one process per node"))
    return out


# ---------------------------------------------------------------------------
# JSON serialization (field names match the domain types, lower_snake_case)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON rendering used for every persisted artifact."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _expect(data: Any, keys: set[str], where: str) -> dict:
    if not isinstance(data, dict):
        raise ParseError(f"{where}: expected object, got {type(data).__name__}")
    missing = keys - data.keys()
    if missing:
        raise ParseError(f"{where}: missing fields {sorted(missing)}")
    return data


def _enum(cls: type, value: Any, where: str) -> Any:
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ParseError(f"{where}: {value!r} not one of: {allowed}") from None


def system_to_dict(sys_: ComputeSystem) -> dict:
    return {
        "id": sys_.id,
        "kind": sys_.kind.value,
        "hosts": [{"id": h.id} for h in sys_.hosts],
        "time_slot": sys_.time_slot,
        "kvm_available": sys_.kvm_available,
        "host_file_sharing": sys_.host_file_sharing,
        "net_bandwidth_native": sys_.net_bandwidth_native,
        "disk_bandwidth_native": {
            "read": sys_.disk_bandwidth_native.read,
            "write": sys_.disk_bandwidth_native.write,
        },
        "cpu_rate_native": sys_.cpu_rate_native,
    }


def system_from_dict(data: Any) -> ComputeSystem:
    d = _expect(data, {"id", "kind", "hosts", "time_slot", "kvm_available",
                       "host_file_sharing", "net_bandwidth_native",
                       "disk_bandwidth_native", "cpu_rate_native"}, "system")
    hosts = []
    for h in d["hosts"]:
        if isinstance(h, str):
            hosts.append(Host(h))
        else:
            hosts.append(Host(_expect(h, {"id"}, "host")["id"]))
    disk = _expect(d["disk_bandwidth_native"], {"read", "write"}, "disk_bandwidth_native")
    return ComputeSystem(
        id=str(d["id"]),
        kind=_enum(SystemKind, d["kind"], "system.kind"),
        hosts=tuple(hosts),
        time_slot=float(d["time_slot"]),
        kvm_available=bool(d["kvm_available"]),
        host_file_sharing=bool(d["host_file_sharing"]),
        net_bandwidth_native=float(d["net_bandwidth_native"]),
        disk_bandwidth_native=DiskBandwidth(float(disk["read"]), float(disk["write"])),
        cpu_rate_native=float(d["cpu_rate_native"]),
    )


def pool_to_dict(pool: ResourcePool) -> dict:
    return {"systems": [system_to_dict(s) for s in pool.systems]}


def pool_from_dict(data: Any) -> ResourcePool:
    d = _expect(data, {"systems"}, "pool")
    if not isinstance(d["systems"], list):
        raise ParseError("pool.systems: expected list")
    return ResourcePool(systems=tuple(system_from_dict(s) for s in d["systems"]))


def app_to_dict(app: AppSpec) -> dict:
    source: dict[str, str] = {}
    if app.container_source.image_ref is not None:
        source["image_ref"] = app.container_source.image_ref
    if app.container_source.buildfile is not None:
        source["buildfile"] = app.container_source.buildfile
    pattern: dict[str, Any] = {"kind": app.comm_pattern.kind.value}
    if app.comm_pattern.ratio is not None:
        pattern["ratio"] = app.comm_pattern.ratio
    return {
        "name": app.name,
        "container_source": source,
        "entry_command": list(app.entry_command),
        "process_count": app.process_count,
        "comm_pattern": pattern,
        "work_total": app.work_total,
        "io_profile": {
            "read_bytes_per_slot": app.io_profile.read_bytes_per_slot,
            "write_bytes_per_slot": app.io_profile.write_bytes_per_slot,
        },
        "checkpointable": app.checkpointable,
    }


def app_from_dict(data: Any) -> AppSpec:
    d = _expect(data, {"name", "container_source", "entry_command", "process_count",
                       "comm_pattern", "work_total", "io_profile", "checkpointable"}, "app")
    src = d["container_source"]
    if not isinstance(src, dict):
        raise ParseError("app.container_source: expected object")
    source = ContainerSource(image_ref=src.get("image_ref"), buildfile=src.get("buildfile"))
    pat = d["comm_pattern"]
    if isinstance(pat, str):
        pattern = CommPattern(kind=_enum(CommKind, pat, "app.comm_pattern"))
    else:
        p = _expect(pat, {"kind"}, "app.comm_pattern")
        ratio = p.get("ratio")
        pattern = CommPattern(kind=_enum(CommKind, p["kind"], "app.comm_pattern.kind"),
                              ratio=None if ratio is None else float(ratio))
    io = _expect(d["io_profile"], {"read_bytes_per_slot", "write_bytes_per_slot"}, "app.io_profile")
    return AppSpec(
        name=str(d["name"]),
        container_source=source,
        entry_command=tuple(str(c) for c in d["entry_command"]),
        process_count=int(d["process_count"]),
        comm_pattern=pattern,
        work_total=float(d["work_total"]),
        io_profile=IoProfile(int(io["read_bytes_per_slot"]), int(io["write_bytes_per_slot"])),
        checkpointable=bool(d["checkpointable"]),
    )


def hardware_to_dict(hw: HardwareConfig) -> dict:
    return {
        "vcpus": hw.vcpus,
        "ram_mb": hw.ram_mb,
        "network_solution": hw.network_solution.value,
        "storage_solution": hw.storage_solution.value,
        "ssh_base_port": hw.ssh_base_port,
    }


def hardware_from_dict(data: Any) -> HardwareConfig:
    d = _expect(data, {"vcpus", "ram_mb", "network_solution", "storage_solution",
                       "ssh_base_port"}, "uconf")
    return HardwareConfig(
        vcpus=int(d["vcpus"]),
        ram_mb=int(d["ram_mb"]),
        network_solution=_enum(NetworkSolution, d["network_solution"], "uconf.network_solution"),
        storage_solution=_enum(StorageSolution, d["storage_solution"], "uconf.storage_solution"),
        ssh_base_port=int(d["ssh_base_port"]),
    )


def volume_to_dict(vol: DataVolume) -> dict:
    return {
        "id": vol.id,
        "byte_size": vol.byte_size,
        "content_digest": vol.content_digest,
        "location": vol.location,
    }


def volume_from_dict(data: Any) -> DataVolume:
    d = _expect(data, {"id", "byte_size", "content_digest", "location"}, "volume")
    return DataVolume(
        id=str(d["id"]),
        byte_size=int(d["byte_size"]),
        content_digest=str(d["content_digest"]),
        location=str(d["location"]),
    )


def run_state_to_dict(state: RunState) -> dict:
    return {
        "phase": state.phase.value,
        "current_system": state.current_system,
        "last_host_system": state.last_host_system,
        "need_migration": state.need_migration,
        "progress": state.progress,
        "slots_consumed": state.slots_consumed,
    }


def run_state_from_dict(data: Any) -> RunState:
    d = _expect(data, {"phase", "current_system", "last_host_system", "need_migration",
                       "progress", "slots_consumed"}, "run_state")
    return RunState(
        phase=_enum(Phase, d["phase"], "run_state.phase"),
        current_system=d["current_system"],
        last_host_system=d["last_host_system"],
        need_migration=bool(d["need_migration"]),
        progress=float(d["progress"]),
        slots_consumed=int(d["slots_consumed"]),
    )


def load_json_file(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None
