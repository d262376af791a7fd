"""The orchestrator scenario suite must pass unchanged on the simulator and on
the local-process backend (with wall-clock budgets scaled down)."""

import pytest

from bee.model import NetworkSolution
from bee.storage import VolumeStore, sha256_hex
from bee.workload import volume_content
from bee.orchestrator import CheckpointStore, Outcome, SlotEnd, run_workflow
from bee.backends import SimConfig, make_backend
from conftest import make_app, make_hardware, make_pool, make_system

# Per-slot progress is (slot - guard) * processes * rate: 114 for the
# simulator, 76 for the local backend, so 150 units always needs a migration.
SCENARIOS = {
    # sim seconds are logical; local seconds are real, so budgets shrink
    "sim-hpc": dict(time_slot=60.0, cpu_rate=1.0, work_one_slot=20.0,
                    work_two_slots=150.0, poll=1.0),
    "local": dict(time_slot=1.0, cpu_rate=40.0, work_one_slot=20.0,
                  work_two_slots=150.0, poll=0.02),
}


def _run(backend_kind, work_total, tmp_path, n_systems=3,
         network=NetworkSolution.P2P_STAR, run_id="r"):
    params = SCENARIOS[backend_kind]
    cfg = SimConfig(backend=backend_kind, seed=5, poll_interval=params["poll"],
                    cpu_overhead_fraction=0.0)
    systems = [make_system(f"sys{i}", n_hosts=2, time_slot=params["time_slot"],
                           cpu_rate=params["cpu_rate"]) for i in range(n_systems)]
    app = make_app(name=f"par-{backend_kind}", work_total=work_total,
                   process_count=2)
    store = tmp_path / backend_kind
    vstore = VolumeStore(store)
    volume = vstore.create(f"{app.name}-in", b"scenario-input")
    result = run_workflow(make_pool(*systems), app, volume, make_hardware(network),
                          lambda s: make_backend(s, cfg), store, cfg=cfg,
                          run_id=run_id)
    return app, result


@pytest.mark.parametrize("backend_kind", list(SCENARIOS))
class TestBackendSubstitutability:
    def test_single_slot_completion(self, backend_kind, tmp_path):
        params = SCENARIOS[backend_kind]
        app, result = _run(backend_kind, params["work_one_slot"], tmp_path)
        assert result.outcome is Outcome.COMPLETED
        assert [r.ended_by for r in result.history] == [SlotEnd.COMPLETION]
        expected = volume_content(app.name, b"scenario-input", app.work_total)
        assert result.output_volume.content_digest == sha256_hex(expected)

    def test_migration_preserves_output_digest(self, backend_kind, tmp_path):
        params = SCENARIOS[backend_kind]
        app, result = _run(backend_kind, params["work_two_slots"], tmp_path)
        assert result.outcome is Outcome.COMPLETED
        assert len(result.history) >= 2
        assert result.history[0].ended_by is SlotEnd.TIMESLOT_CHECKPOINT
        assert [r.system_id for r in result.history] == \
            [f"sys{i}" for i in range(len(result.history))]
        expected = volume_content(app.name, b"scenario-input", app.work_total)
        assert result.output_volume.content_digest == sha256_hex(expected)

    def test_stall_leaves_resumable_checkpoint(self, backend_kind, tmp_path):
        app, result = _run(backend_kind, 100_000.0, tmp_path, n_systems=1,
                           run_id="stall")
        assert result.outcome is Outcome.STALLED_WITH_CHECKPOINT
        store = CheckpointStore(tmp_path / backend_kind)
        path = store.latest("stall")
        assert path is not None and store.verify(path)


def test_local_deploy_failure_reaps_spawned_agents(tmp_path):
    from bee.cluster import DeploymentError, deploy_cluster

    cfg = SimConfig(backend="local", seed=5, poll_interval=0.02)
    system = make_system("sys0", n_hosts=2, time_slot=1.0, cpu_rate=40.0)
    backend = make_backend(system, cfg)
    backend.inject_fault("create_vm", host="sys0-h1")
    app = make_app(name="leak", work_total=10.0, process_count=2)
    with pytest.raises(DeploymentError):
        deploy_cluster(system.hosts, app, "c-leak", make_hardware(), backend)
    assert backend.fleet is not None
    assert all(proc.poll() is not None for proc in backend.fleet.procs.values())
