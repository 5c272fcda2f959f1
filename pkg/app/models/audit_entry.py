import uuid

from sqlalchemy import String, Boolean, Float, Text, ForeignKey
from sqlalchemy.orm import Mapped, mapped_column, relationship

from app.database import Base


class AuditEntry(Base):
    """
    Outcome of one named bound within a run.

    Repeated checks of the same bound (at many times or modes) are folded
    into a single row holding the worst margin.
    """

    __tablename__ = "audit_entries"

    id: Mapped[str] = mapped_column(
        String(36),
        primary_key=True,
        default=lambda: str(uuid.uuid4())
    )

    run_id: Mapped[str] = mapped_column(
        String(36),
        ForeignKey("runs.id"),
        nullable=False
    )
    run: Mapped["Run"] = relationship("Run", back_populates="audits")

    bound_name: Mapped[str] = mapped_column(String(100), nullable=False)
    passed: Mapped[bool] = mapped_column(Boolean, nullable=False)

    # Log-space margin rhs - lhs; None when the bound has no numeric margin
    worst_margin: Mapped[float | None] = mapped_column(Float, nullable=True)

    # Extra context (stored as JSON string)
    # Example: {"checks": 257, "failures": 0, "k": 5}
    detail: Mapped[str | None] = mapped_column(Text, nullable=True)

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"<AuditEntry {self.bound_name} {status}>"
