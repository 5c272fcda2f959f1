from fastapi import APIRouter, Depends, HTTPException, Query, status
from sqlalchemy.orm import Session

from app.database import get_db
from app.schemas.run import AuditEntryResponse, AuditSummary, RunResponse
from app.services.runs import RunService

router = APIRouter(
    prefix="/runs",
    tags=["Runs"],
)


@router.get("/", response_model=list[RunResponse])
def get_recent_runs(
    limit: int = Query(default=50, ge=1, le=200, description="Number of runs to return"),
    operation: str | None = Query(default=None, description="Only runs of this operation"),
    db: Session = Depends(get_db),
):
    """
    Get the most recent runs.
    """
    return RunService(db).get_recent_runs(limit=limit, operation=operation)


@router.get("/audits/summary", response_model=list[AuditSummary])
def get_audit_summary(
    operation: str | None = Query(default=None),
    db: Session = Depends(get_db),
):
    """
    Pass/fail tally per bound name across all registered runs.
    """
    return RunService(db).summarize_audits(operation=operation)


@router.get("/{run_id}", response_model=RunResponse)
def get_run(run_id: str, db: Session = Depends(get_db)):
    """Get a single run by id."""
    run = RunService(db).get_run(run_id)
    if not run:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Run '{run_id}' not found",
        )
    return run


@router.get("/{run_id}/audits", response_model=list[AuditEntryResponse])
def get_run_audits(
    run_id: str,
    failures_only: bool = Query(default=False),
    db: Session = Depends(get_db),
):
    """
    Get the folded bound audits of a run.

    With failures_only=true only the failing bounds are returned.
    """
    runs = RunService(db)
    if not runs.get_run(run_id):
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Run '{run_id}' not found",
        )
    return runs.get_failures(run_id) if failures_only else runs.get_audits(run_id)
