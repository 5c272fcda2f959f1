import uuid

from app.schemas.run import BoundOutcome
from app.services.runs import RunService


def log(service, name, outcomes, operation="verify", exit_code=0):
    return service.log_run(
        name=name,
        operation=operation,
        config_hash="0" * 64,
        seed=0,
        version="test",
        exit_code=exit_code,
        output_dir="/tmp/unused",
        outcomes=outcomes,
    )


def test_log_run_stores_one_entry_per_outcome(db):
    service = RunService(db)
    run = log(service, "stored", [
        BoundOutcome(bound_name="a", passed=True, worst_margin=0.5, detail={"checks": 3}),
        BoundOutcome(bound_name="b", passed=False, worst_margin=-1.0),
    ], exit_code=1)

    assert service.get_run(run.id).name == "stored"
    assert [e.bound_name for e in service.get_audits(run.id)] == ["a", "b"]
    assert [e.bound_name for e in service.get_failures(run.id)] == ["b"]
    assert service.get_audits(run.id)[0].detail == '{"checks": 3}'
    assert service.get_audits(run.id)[1].detail is None


def test_unknown_run_is_none(db):
    assert RunService(db).get_run("missing") is None


def test_summary_tallies_failures_per_bound(db):
    service = RunService(db)
    bound = f"bound-{uuid.uuid4().hex[:8]}"
    log(service, "one", [BoundOutcome(bound_name=bound, passed=True, worst_margin=0.2)])
    log(service, "two", [BoundOutcome(bound_name=bound, passed=False, worst_margin=-0.3)], exit_code=1)
    log(service, "three", [BoundOutcome(bound_name=bound, passed=False, worst_margin=-0.1)], operation="dgcs", exit_code=1)

    summary = {s.bound_name: s for s in service.summarize_audits()}[bound]
    assert (summary.runs, summary.failures) == (3, 2)
    assert summary.worst_margin == -0.3

    verify_only = {s.bound_name: s for s in service.summarize_audits(operation="verify")}[bound]
    assert (verify_only.runs, verify_only.failures) == (2, 1)


def test_recent_runs_filter_by_operation(db):
    service = RunService(db)
    log(service, "sweep-run", [], operation="sweep")
    runs = service.get_recent_runs(limit=10, operation="sweep")
    assert runs and all(r.operation == "sweep" for r in runs)
