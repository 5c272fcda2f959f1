import uuid
from datetime import datetime

from sqlalchemy import String, DateTime, Integer
from sqlalchemy.orm import Mapped, mapped_column, relationship

from app.database import Base


class Run(Base):
    """
    One executed scenario.

    Every CLI or HTTP run creates a row; its bound audits live in AuditEntry.
    """

    __tablename__ = "runs"

    id: Mapped[str] = mapped_column(
        String(36),
        primary_key=True,
        default=lambda: str(uuid.uuid4())
    )

    # What was run
    name: Mapped[str] = mapped_column(String(100), nullable=False)
    operation: Mapped[str] = mapped_column(String(20), nullable=False)  # "simulate", "verify", "dgcs", "sweep"

    # Reproducibility stamp
    config_hash: Mapped[str] = mapped_column(String(64), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, default=0, nullable=False)
    version: Mapped[str] = mapped_column(String(20), nullable=False)

    # Outcome
    exit_code: Mapped[int] = mapped_column(Integer, nullable=False)
    output_dir: Mapped[str] = mapped_column(String(500), nullable=False)

    audits: Mapped[list["AuditEntry"]] = relationship(
        "AuditEntry",
        back_populates="run",
        cascade="all, delete-orphan",
    )

    created_at: Mapped[datetime] = mapped_column(
        DateTime,
        default=datetime.utcnow,
        nullable=False
    )

    def __repr__(self):
        return f"<Run {self.operation}:{self.name} exit={self.exit_code}>"
