import json
import logging

from sqlalchemy import case, func
from sqlalchemy.orm import Session

from app.models import AuditEntry, Run
from app.schemas.run import AuditSummary, BoundOutcome

logger = logging.getLogger(__name__)


class RunService:
    """
    Service for recording executed scenarios and querying their audits.
    """

    def __init__(self, db: Session):
        self.db = db

    def log_run(
        self,
        name: str,
        operation: str,
        config_hash: str,
        seed: int,
        version: str,
        exit_code: int,
        output_dir: str,
        outcomes: list[BoundOutcome],
    ) -> Run:
        """Store a run together with one AuditEntry per bound name."""
        run = Run(
            name=name,
            operation=operation,
            config_hash=config_hash,
            seed=seed,
            version=version,
            exit_code=exit_code,
            output_dir=output_dir,
        )
        for outcome in outcomes:
            run.audits.append(
                AuditEntry(
                    bound_name=outcome.bound_name,
                    passed=outcome.passed,
                    worst_margin=outcome.worst_margin,
                    detail=json.dumps(outcome.detail, sort_keys=True) if outcome.detail else None,
                )
            )

        self.db.add(run)
        self.db.commit()
        self.db.refresh(run)

        logger.info("registered run %s (%s:%s) exit=%d", run.id, operation, name, exit_code)
        return run

    def get_run(self, run_id: str) -> Run | None:
        """Get a single run by id."""
        return self.db.query(Run).filter(Run.id == run_id).first()

    def get_recent_runs(self, limit: int = 50, operation: str | None = None) -> list[Run]:
        """Get the most recent runs, optionally for one operation."""
        query = self.db.query(Run)
        if operation is not None:
            query = query.filter(Run.operation == operation)
        return query.order_by(Run.created_at.desc()).limit(limit).all()

    def get_audits(self, run_id: str) -> list[AuditEntry]:
        """Get every audit entry of a run, by bound name."""
        return (
            self.db.query(AuditEntry)
            .filter(AuditEntry.run_id == run_id)
            .order_by(AuditEntry.bound_name)
            .all()
        )

    def get_failures(self, run_id: str) -> list[AuditEntry]:
        """Get the failing audit entries of a run."""
        return [entry for entry in self.get_audits(run_id) if not entry.passed]

    def summarize_audits(self, operation: str | None = None) -> list[AuditSummary]:
        """Tally runs, failures and the worst margin per bound name."""
        query = self.db.query(
            AuditEntry.bound_name,
            func.count(AuditEntry.id),
            func.sum(case((AuditEntry.passed.is_(False), 1), else_=0)),
            func.min(AuditEntry.worst_margin),
        )
        if operation is not None:
            query = query.join(Run).filter(Run.operation == operation)
        rows = query.group_by(AuditEntry.bound_name).order_by(AuditEntry.bound_name).all()
        return [
            AuditSummary(bound_name=name, runs=runs, failures=int(failures or 0), worst_margin=worst)
            for name, runs, failures, worst in rows
        ]
