"""Shared-storage performance model and the content-addressed volume store.

Two sharing designs are modeled: a dedicated data image mounted on the master
and re-exported to workers over the virtual network (flat, capped aggregate),
and hypervisor directory passthrough (near-native, 10% write penalty).
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, replace
from pathlib import Path

from bee.model import (
    MB,
    DETACHED,
    DataVolume,
    StorageSolution,
    canonical_json,
    volume_from_dict,
    volume_to_dict,
)

DEFAULT_NFS_CAP = 125.0  # MB/s, middle of the measured flat band


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class StoragePlan:
    solution: StorageSolution
    master_node: int
    mount_path: str
    native_read: float
    native_write: float
    nfs_cap: float = DEFAULT_NFS_CAP


class StorageError(RuntimeError):
    pass


def effective_bandwidth(plan: StoragePlan, node: int, op: str,
                        active_workers: int = 1) -> float:
    """Effective MB/s for one node doing `op` ("read"/"write").

    Workers behind the re-exported data image split the export cap equally;
    the master and both passthrough directions see native disk speed, except
    passthrough writes which run at 90% of native.
    """
    if op not in ("read", "write"):
        raise ValueError(f"op must be read or write, got {op!r}")
    if node < 0:
        raise StorageError(f"unknown node {node}")
    native = plan.native_read if op == "read" else plan.native_write
    if plan.solution is StorageSolution.VIRTIO_PASSTHROUGH:
        return native if op == "read" else 0.9 * native
    if node == plan.master_node:
        return native
    share = plan.nfs_cap / max(1, active_workers)
    return min(native, share)


def model_io(plan: StoragePlan, node: int, op: str, nbytes: float,
             active_workers: int = 1) -> float:
    """Seconds for `nbytes` of I/O on `node` given concurrently active workers."""
    if nbytes < 0:
        raise ValueError("byte count must be non-negative")
    if nbytes == 0:
        return 0.0
    return nbytes / (effective_bandwidth(plan, node, op, active_workers) * MB)


def ior_workload(n_nodes: int, bytes_per_process: int = 1 << 30) -> list[tuple[int, str, int]]:
    """One process per node: write a file, then read the next node's file.

    Reading a neighbour's output defeats local caching, so the read phase
    exercises the shared path on every node.
    """
    ops: list[tuple[int, str, int]] = []
    for node in range(n_nodes):
        ops.append((node, "write", bytes_per_process))
    for node in range(n_nodes):
        ops.append((node, "read", bytes_per_process))
    return ops


def iobench_table(solution: StorageSolution, max_nodes: int = 32,
                  native_read: float = 500.0, native_write: float = 500.0,
                  nfs_cap: float = DEFAULT_NFS_CAP,
                  bytes_per_process: int = 1 << 30) -> list[dict]:
    """Modeled throughput per node count for the write-then-cross-read workload.

    Worker aggregate excludes the master, which mounts the data image directly.
    """
    rows = []
    for n in range(1, max_nodes + 1):
        plan = StoragePlan(solution=solution, master_node=0, mount_path="/mnt/shared",
                           native_read=native_read, native_write=native_write,
                           nfs_cap=nfs_cap)
        workers = n - 1
        row: dict = {"n_nodes": n, "solution": solution.value}
        for op in ("read", "write"):
            master_bw = effective_bandwidth(plan, 0, op, active_workers=workers)
            if workers > 0:
                each = effective_bandwidth(plan, 1, op, active_workers=workers)
            else:
                each = 0.0
            row[f"{op}_master_mbps"] = master_bw
            row[f"{op}_worker_each_mbps"] = each
            row[f"{op}_worker_aggregate_mbps"] = each * workers
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# volume store


class VolumeStore:
    """Persistent volumes at <root>/volumes/<id>/{meta.json,data.bin}.

    The digest is always the SHA-256 hex of data.bin; attach/detach only touch
    metadata, so they can never change content.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def _dir(self, volume_id: str) -> Path:
        return self.root / "volumes" / volume_id

    def exists(self, volume_id: str) -> bool:
        return (self._dir(volume_id) / "meta.json").exists()

    def create(self, volume_id: str, content: bytes,
               location: str = DETACHED) -> DataVolume:
        vol = DataVolume(id=volume_id, byte_size=len(content),
                         content_digest=sha256_hex(content), location=location)
        d = self._dir(volume_id)
        d.mkdir(parents=True, exist_ok=True)
        (d / "data.bin").write_bytes(content)
        self._write_meta(vol)
        return vol

    def _write_meta(self, vol: DataVolume) -> None:
        (self._dir(vol.id) / "meta.json").write_text(
            canonical_json(volume_to_dict(vol)), encoding="utf-8")

    def volume(self, volume_id: str) -> DataVolume:
        meta = self._dir(volume_id) / "meta.json"
        if not meta.exists():
            raise StorageError(f"no such volume: {volume_id}")
        return volume_from_dict(json.loads(meta.read_text(encoding="utf-8")))

    def content(self, volume_id: str) -> bytes:
        path = self._dir(volume_id) / "data.bin"
        if not path.exists():
            raise StorageError(f"no such volume: {volume_id}")
        return path.read_bytes()

    def write(self, volume_id: str, content: bytes) -> DataVolume:
        vol = self.volume(volume_id)
        (self._dir(volume_id) / "data.bin").write_bytes(content)
        vol = replace(vol, byte_size=len(content), content_digest=sha256_hex(content))
        self._write_meta(vol)
        return vol

    def attach(self, volume_id: str, system_id: str) -> DataVolume:
        vol = self.volume(volume_id)
        if vol.location != DETACHED:
            raise StorageError(
                f"volume {volume_id} already attached on {vol.location}; "
                "the data image allows a single writer")
        vol = replace(vol, location=system_id)
        self._write_meta(vol)
        return vol

    def detach(self, volume_id: str) -> DataVolume:
        vol = self.volume(volume_id)
        if vol.location == DETACHED:
            raise StorageError(f"volume {volume_id} is not attached")
        vol = replace(vol, location=DETACHED)
        self._write_meta(vol)
        return vol

    def snapshot(self, volume_id: str) -> tuple[bytes, str]:
        """Point-in-time copy of an attached volume; later writes leave it alone."""
        vol = self.volume(volume_id)
        if vol.location == DETACHED:
            raise StorageError(f"cannot snapshot detached volume {volume_id}")
        content = self.content(volume_id)
        return content, sha256_hex(content)

    def delete(self, volume_id: str) -> None:
        d = self._dir(volume_id)
        if d.exists():
            shutil.rmtree(d)


def attach_volume(store: VolumeStore, volume: DataVolume, system_id: str) -> DataVolume:
    return store.attach(volume.id, system_id)


def detach_volume(store: VolumeStore, volume: DataVolume) -> DataVolume:
    return store.detach(volume.id)


def snapshot_volume(store: VolumeStore, volume: DataVolume) -> tuple[bytes, str]:
    return store.snapshot(volume.id)
