"""Local-process backend: one OS process per node instead of a VM.

Each node runs a relay agent over real sockets plus a toy work loop that
reports progress over its control socket.  The container layer is a tag on
the agent; time here is wall-clock, so drive it with small slot budgets.
"""

from __future__ import annotations

import base64
import tempfile
import time
from pathlib import Path

from bee.model import AppSpec, ComputeSystem, HardwareConfig
from bee.storage import StoragePlan
from bee.workload import compute_rate
from bee.netvirt.agent import AgentClient
from bee.netvirt.fleet import AgentFleet
from bee.backends.base import (
    ALL_TOPOLOGIES,
    DEFAULT_CPU_OVERHEAD,
    Backend,
    BackendCapability,
    BackendOpError,
    NodeFailure,
    NodeRef,
    SimConfig,
    VmSpec,
)


class LocalProcessBackend(Backend):
    name = "local"

    def __init__(self, system: ComputeSystem, cfg: SimConfig,
                 workdir: str | Path | None = None):
        super().__init__(system, cfg)
        self._t0 = time.monotonic()
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="bee-local-"))
        self.fleet: AgentFleet | None = None
        self._refs: dict[int, NodeRef] = {}
        self._app: AppSpec | None = None
        self._hardware: HardwareConfig | None = None
        self._wired = False

    # -- clock ----------------------------------------------------------------

    def now(self) -> float:
        return time.monotonic() - self._t0

    def wait(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def charge(self, seconds: float, action: str, host: str) -> None:
        # modeled cost only; wall time is already real here
        self.log.append(self.now(), action, host, stage=self.stage, seconds=seconds)

    def capability(self) -> BackendCapability:
        return BackendCapability(
            has_vm_layer=True,
            native_shared_fs=self.system.host_file_sharing,
            topology_choices=ALL_TOPOLOGIES,
            cpu_overhead_fraction=self.cfg.cpu_overhead_fraction
            if self.cfg.cpu_overhead_fraction is not None else DEFAULT_CPU_OVERHEAD,
        )

    # -- cluster lifecycle -------------------------------------------------------

    def begin_cluster(self, cname: str, app: AppSpec, hardware: HardwareConfig,
                      plan: StoragePlan) -> None:
        self._app = app
        self._hardware = hardware
        self._refs.clear()
        self._wired = False
        self.fleet = AgentFleet(hardware.network_solution, app.process_count,
                                self.workdir / cname)

    def _client(self, ref: NodeRef) -> AgentClient:
        assert self.fleet is not None
        return self.fleet.client(ref.node_index)

    def provision(self, host: str, spec: VmSpec) -> NodeRef:
        assert self.fleet is not None
        fault = self.take_fault("create_vm", host)
        if fault is not None:
            self.log.append(self.now(), "create_vm", host, stage=self.stage,
                            ok=False, cause=fault.error)
            raise BackendOpError(host, "create_vm", fault.error)
        self.fleet.spawn_node(spec.node_index)
        for action in ("create_vm", "create_img", "configure", "setup_shared_vol",
                       "setup_network", "register_vm"):
            self.log.append(self.now(), action, host, stage=self.stage,
                            index=spec.node_index)
        ref = NodeRef(host_id=host, node_index=spec.node_index, cluster_name=spec.cluster_name)
        self._refs[spec.node_index] = ref
        return ref

    def start_all(self, refs: list[NodeRef]) -> None:
        assert self.fleet is not None
        if self.fleet.kind.value == "multicast":
            self.fleet.spawn_hub()
        self.fleet.wire()
        self._wired = True
        for ref in refs:
            self.log.append(self.now(), "start_vm", ref.host_id, stage=self.stage,
                            index=ref.node_index)

    def exec(self, ref: NodeRef, argv: list[str]) -> dict:
        verb = argv[0] if argv else ""
        fault = self.take_fault(verb, ref.host_id)
        if fault is not None:
            self.log.append(self.now(), verb, ref.host_id, stage=self.stage,
                            ok=False, cause=fault.error)
            raise BackendOpError(ref.host_id, verb, fault.error)
        if verb == "app_start":
            self._start_app(ref, argv[1:])
        else:
            self._client(ref).call(cmd="exec", argv=argv)
        self.log.append(self.now(), verb or "exec", ref.host_id, stage=self.stage)
        return {"ok": True, "host": ref.host_id, "argv": argv, "t": self.now()}

    def _start_app(self, ref: NodeRef, entry: list[str]) -> None:
        assert self._app is not None and self._hardware is not None
        client = self._client(ref)
        staged = getattr(self, "_staged_volume", b"")
        client.call(cmd="put_volume", data_b64=base64.b64encode(staged).decode())
        rate = compute_rate(self._app, self._hardware, self.system,
                            self.capability().cpu_overhead_fraction)
        client.call(cmd="app_start", name=self._app.name, rate=rate,
                    work_total=self._app.work_total, base=self.progress_base)

    def progress(self, ref: NodeRef) -> float:
        assert self.fleet is not None
        rule = self._pending_timed_fault("run", ref.host_id)
        if rule is not None and rule.at_time is not None and self.now() >= rule.at_time:
            rule.remaining = 0
            self.fleet.kill(ref.node_index)
        if not self.fleet.alive(ref.node_index):
            self.log.append(self.now(), "node_failure", ref.host_id, stage=self.stage,
                            ok=False)
            raise NodeFailure(ref.host_id, "run", "agent process died")
        return float(self._client(ref).call(cmd="status")["progress"])

    def pause(self, ref: NodeRef) -> None:
        self._client(ref).call(cmd="pause")
        self.log.append(self.now(), "pause", ref.host_id, stage=self.stage)

    def resume(self, ref: NodeRef) -> None:
        self._client(ref).call(cmd="resume")
        self.log.append(self.now(), "resume", ref.host_id, stage=self.stage)

    def stop(self, ref: NodeRef) -> None:
        assert self.fleet is not None
        try:
            if self.fleet.alive(ref.node_index):
                self.fleet.client(ref.node_index).call(cmd="stop")
        except (OSError, ConnectionError, KeyError):
            pass
        proc = self.fleet.procs.get(ref.node_index)
        if proc is not None and proc.poll() is None:
            try:
                proc.wait(timeout=2)
            except Exception:
                proc.kill()
        self._refs.pop(ref.node_index, None)
        self.log.append(self.now(), "stop", ref.host_id, stage=self.stage,
                        index=ref.node_index)
        if not self._refs and self.fleet is not None:
            self.fleet.stop()

    def put_volume(self, ref: NodeRef, content: bytes) -> None:
        self._client(ref).call(cmd="put_volume", data_b64=base64.b64encode(content).decode())
        self.log.append(self.now(), "put_volume", ref.host_id, stage=self.stage,
                        nbytes=len(content))

    def fetch_volume(self, ref: NodeRef) -> bytes:
        reply = self._client(ref).call(cmd="fetch_volume")
        self.log.append(self.now(), "fetch_volume", ref.host_id, stage=self.stage)
        return base64.b64decode(reply["data_b64"])

    def io_seconds(self, op: str, nbytes: int) -> float:
        # the toy work loop performs no separate I/O phase
        return 0.0

    def abort_cluster(self) -> None:
        self._refs.clear()
        if self.fleet is not None:
            self.fleet.stop()

    def close(self) -> None:
        if self.fleet is not None:
            self.fleet.stop()
