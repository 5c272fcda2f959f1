from datetime import datetime

from pydantic import BaseModel, Field


class AuditEntryResponse(BaseModel):
    """Schema for one folded bound audit in API responses."""

    id: str
    run_id: str
    bound_name: str
    passed: bool
    worst_margin: float | None
    detail: str | None  # JSON string

    class Config:
        from_attributes = True


class RunResponse(BaseModel):
    """Schema for a registered run in API responses."""

    id: str
    name: str
    operation: str
    config_hash: str
    seed: int
    version: str
    exit_code: int
    output_dir: str
    created_at: datetime

    class Config:
        from_attributes = True


class AuditSummary(BaseModel):
    """Pass/fail tally of every bound name across runs."""

    bound_name: str
    runs: int = Field(..., ge=0)
    failures: int = Field(..., ge=0)
    worst_margin: float | None = None


class BoundOutcome(BaseModel):
    """A bound name folded over all of its checks in one run."""

    bound_name: str
    passed: bool
    worst_margin: float | None = None
    detail: dict = Field(default_factory=dict)
